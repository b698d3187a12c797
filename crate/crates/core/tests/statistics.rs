//! Mann-Whitney and Cohen's d against brute-force and closed-form oracles.

use engage_core::analysis::{cohens_d, mann_whitney_u, summarize, TestMethod};
use engage_core::Error;
use proptest::prelude::*;

/// U of `a` by pairwise comparison, ties counting half.
fn pairwise_u(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

struct Oracle {
    u_a: f64,
    p_lower: f64,
    p_upper: f64,
    p_two: f64,
}

/// Relabels the pooled sample every possible way via bitmasks.
fn enumerate(a: &[f64], b: &[f64]) -> Oracle {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (n, n1) = (pooled.len(), a.len());
    let mu = (a.len() * b.len()) as f64 / 2.0;
    let u_obs = pairwise_u(a, b);
    let (mut total, mut lower, mut upper, mut two) = (0u64, 0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let (mut ga, mut gb) = (Vec::new(), Vec::new());
        for (i, &v) in pooled.iter().enumerate() {
            if mask & (1 << i) != 0 {
                ga.push(v);
            } else {
                gb.push(v);
            }
        }
        let u = pairwise_u(&ga, &gb);
        total += 1;
        lower += u64::from(u <= u_obs);
        upper += u64::from(u >= u_obs);
        two += u64::from((u - mu).abs() >= (u_obs - mu).abs());
    }
    let t = total as f64;
    Oracle {
        u_a: u_obs,
        p_lower: lower as f64 / t,
        p_upper: upper as f64 / t,
        p_two: two as f64 / t,
    }
}

fn check_against_oracle(a: &[f64], b: &[f64]) -> Result<(), TestCaseError> {
    let r = mann_whitney_u(a, b).unwrap();
    let o = enumerate(a, b);
    let n1n2 = (a.len() * b.len()) as f64;
    prop_assert_eq!(r.method, TestMethod::ExactEnumeration);
    prop_assert_eq!(r.u_a, o.u_a);
    prop_assert_eq!(r.u_statistic, o.u_a.min(n1n2 - o.u_a));
    let expected_one = if o.u_a <= n1n2 - o.u_a {
        o.p_lower
    } else {
        o.p_upper
    };
    prop_assert!(
        (r.p_one_sided - expected_one).abs() < 1e-12,
        "one-sided {} vs {}",
        r.p_one_sided,
        expected_one
    );
    prop_assert!(
        (r.p_two_sided - o.p_two).abs() < 1e-12,
        "two-sided {} vs {}",
        r.p_two_sided,
        o.p_two
    );
    prop_assert!(r.p_one_sided > 0.0 && r.p_one_sided <= 1.0);
    prop_assert!(r.p_two_sided > 0.0 && r.p_two_sided <= 1.0);
    Ok(())
}

fn small_ints(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..8).prop_map(f64::from), n)
}

proptest! {
    #[test]
    fn exact_p_matches_enumeration_up_to_ten((a, b) in (1usize..=9).prop_flat_map(|n1| (small_ints(n1..=n1), small_ints(1..=10 - n1)))) {
        check_against_oracle(&a, &b)?;
    }

    #[test]
    fn six_versus_six_corpus(a in prop::collection::vec((0i32..30).prop_map(f64::from), 6), b in prop::collection::vec((0i32..30).prop_map(f64::from), 6)) {
        check_against_oracle(&a, &b)?;
    }

    #[test]
    fn u_sum_identity(a in small_ints(1..=12), b in small_ints(1..=12)) {
        let r = mann_whitney_u(&a, &b).unwrap();
        let u_b = pairwise_u(&b, &a);
        prop_assert_eq!(r.u_a + u_b, (a.len() * b.len()) as f64);
    }

    #[test]
    fn u_invariant_under_increasing_transform(a in small_ints(1..=8), b in small_ints(1..=8)) {
        let f = |v: &f64| (v * 0.7).exp() + 3.0 * v;
        let (ta, tb): (Vec<f64>, Vec<f64>) = (a.iter().map(f).collect(), b.iter().map(f).collect());
        let (r, t) = (mann_whitney_u(&a, &b).unwrap(), mann_whitney_u(&ta, &tb).unwrap());
        prop_assert_eq!(r.u_statistic, t.u_statistic);
        prop_assert_eq!(r.p_two_sided, t.p_two_sided);
    }

    #[test]
    fn cohens_d_symmetries(a in prop::collection::vec(-50.0f64..50.0, 2..10), b in prop::collection::vec(-50.0f64..50.0, 2..10), shift in -100.0f64..100.0, scale in 0.01f64..100.0) {
        let d = match cohens_d(&a, &b) {
            Ok(d) => d,
            Err(_) => return Ok(()),
        };
        prop_assert!((cohens_d(&b, &a).unwrap() + d).abs() < 1e-9);
        let sh = |v: &Vec<f64>| v.iter().map(|x| x + shift).collect::<Vec<_>>();
        prop_assert!((cohens_d(&sh(&a), &sh(&b)).unwrap() - d).abs() < 1e-6 * d.abs().max(1.0));
        let sc = |v: &Vec<f64>| v.iter().map(|x| x * scale).collect::<Vec<_>>();
        prop_assert!((cohens_d(&sc(&a), &sc(&b)).unwrap() - d).abs() < 1e-9 * d.abs().max(1.0));
    }
}

#[test]
fn seven_in_nine_twenty_four() {
    // a loses only three of its 36 pairings
    let a = [20.0, 21.0, 22.0, 24.0, 25.0, 26.0];
    let b = [10.0, 11.0, 12.0, 13.0, 14.0, 23.0];
    let r = mann_whitney_u(&a, &b).unwrap();
    assert_eq!(r.u_statistic, 3.0);
    assert!((r.p_one_sided - 7.0 / 924.0).abs() < 1e-12);
    assert_eq!(format!("{:.3}", r.p_one_sided), "0.008");
}

/// Six values with exactly the requested sample mean and sd.
fn affine_group(mean: f64, sd: f64) -> Vec<f64> {
    let base = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let s = summarize(&base).unwrap();
    base.iter()
        .map(|x| mean + (x - s.mean) / s.sd * sd)
        .collect()
}

#[test]
fn cohens_d_from_group_summaries() {
    let dda = affine_group(71.0, 8.07);
    let control = affine_group(51.2, 5.84);
    let (sd, sc) = (summarize(&dda).unwrap(), summarize(&control).unwrap());
    assert!((sd.mean - 71.0).abs() < 1e-9 && (sd.sd - 8.07).abs() < 1e-9);
    assert!((sc.mean - 51.2).abs() < 1e-9 && (sc.sd - 5.84).abs() < 1e-9);
    // closed form: 19.8 / sqrt((8.07^2 + 5.84^2) / 2)
    let expected = 19.8 / ((8.07f64.powi(2) + 5.84f64.powi(2)) / 2.0).sqrt();
    let d = cohens_d(&dda, &control).unwrap();
    assert!((d - expected).abs() < 1e-9);
    assert!((d - 2.81).abs() < 0.02, "d = {d}");
    assert!((sd.mean - sc.mean - 19.8).abs() < 1e-9);
}

#[test]
fn degenerate_inputs() {
    assert!(matches!(
        cohens_d(&[0.0, 0.0], &[1.0, 1.0]),
        Err(Error::DegenerateVariance)
    ));
    assert!(matches!(cohens_d(&[], &[1.0, 2.0]), Err(Error::EmptyGroup)));
    assert!(matches!(
        mann_whitney_u(&[1.0], &[]),
        Err(Error::EmptyGroup)
    ));
}
