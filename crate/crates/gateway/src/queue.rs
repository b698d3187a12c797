//! Bounded single-producer/single-consumer hand-off that never blocks the
//! producer: a full queue sheds its oldest item.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

#[derive(Debug)]
struct Inner<T> {
    items: VecDeque<T>,
    closed: bool,
    dropped: u64,
}

#[derive(Debug)]
pub struct DropOldestQueue<T> {
    capacity: usize,
    inner: Mutex<Inner<T>>,
    ready: Condvar,
}

#[derive(Debug, PartialEq, Eq)]
pub enum Pop<T> {
    Item(T),
    TimedOut,
    Closed,
}

impl<T> DropOldestQueue<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self {
            capacity,
            inner: Mutex::new(Inner {
                items: VecDeque::with_capacity(capacity),
                closed: false,
                dropped: 0,
            }),
            ready: Condvar::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Enqueues `item`. Returns false if the queue was closed and the item
    /// discarded. Evicts the oldest item when full.
    pub fn push(&self, item: T) -> bool {
        let mut g = self.inner.lock().expect("queue lock poisoned");
        if g.closed {
            return false;
        }
        if g.items.len() == self.capacity {
            g.items.pop_front();
            g.dropped += 1;
        }
        g.items.push_back(item);
        drop(g);
        self.ready.notify_one();
        true
    }

    /// Waits up to `timeout` for an item. Items queued before `close` are
    /// still delivered.
    pub fn pop_timeout(&self, timeout: Duration) -> Pop<T> {
        let g = self.inner.lock().expect("queue lock poisoned");
        let (mut g, _) = self
            .ready
            .wait_timeout_while(g, timeout, |i| i.items.is_empty() && !i.closed)
            .expect("queue lock poisoned");
        match g.items.pop_front() {
            Some(item) => Pop::Item(item),
            None if g.closed => Pop::Closed,
            None => Pop::TimedOut,
        }
    }

    pub fn close(&self) {
        self.inner.lock().expect("queue lock poisoned").closed = true;
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.lock().expect("queue lock poisoned").closed
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("queue lock poisoned").items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Items evicted so far.
    pub fn dropped(&self) -> u64 {
        self.inner.lock().expect("queue lock poisoned").dropped
    }
}
