//! Group statistics for comparing adaptive and fixed-schedule sessions:
//! summaries, Mann-Whitney U (exact for small samples) and Cohen's d.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::session::{EngagementReport, PhaseKind, SessionLog};

/// Largest combined sample size tested by exact enumeration.
pub const EXACT_LIMIT: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub sd: f64,
}

pub fn summarize(values: &[f64]) -> Result<GroupSummary> {
    if values.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(GroupSummary { n, mean, sd })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    ExactEnumeration,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// min(U_a, U_b).
    pub u_statistic: f64,
    /// U of the first group: pairs where it is larger, ties counting half.
    pub u_a: f64,
    /// Tail probability in the observed direction.
    pub p_one_sided: f64,
    pub p_two_sided: f64,
    pub method: TestMethod,
}

/// Doubled midranks of the pooled sample, so ties stay integral.
fn doubled_midranks(pooled: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // positions i..=j share the rank ((i + 1) + (j + 1)) / 2
        let r2 = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = r2;
        }
        i = j + 1;
    }
    ranks
}

/// Number of size-`k` subsets per doubled rank sum.
fn rank_sum_counts(ranks: &[u64], k: usize) -> Vec<u64> {
    let max_sum: u64 = ranks.iter().sum();
    let width = max_sum as usize + 1;
    let mut ways = vec![vec![0u64; width]; k + 1];
    ways[0][0] = 1;
    for &r in ranks {
        let r = r as usize;
        for size in (1..=k).rev() {
            let (lower, upper) = ways.split_at_mut(size);
            let (src, dst) = (&lower[size - 1], &mut upper[0]);
            for s in (r..width).rev() {
                dst[s] += src[s - r];
            }
        }
    }
    ways.swap_remove(k)
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = doubled_midranks(&pooled);
    let offset = (n1 * (n1 + 1)) as u64;
    let n1n2 = (n1 * n2) as u64;
    let r_a2: u64 = ranks[..n1].iter().sum();
    let u_a2 = r_a2 - offset;
    let u_b2 = 2 * n1n2 - u_a2;
    let u_a = u_a2 as f64 / 2.0;
    let u_statistic = u_a2.min(u_b2) as f64 / 2.0;

    if n1 + n2 <= EXACT_LIMIT {
        let counts = rank_sum_counts(&ranks, n1);
        let total: u64 = counts.iter().sum();
        let dev = u_a2.abs_diff(n1n2);
        let (mut lower, mut upper, mut extreme) = (0u64, 0u64, 0u64);
        for (s, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let u2 = s as u64 - offset;
            if u2 <= u_a2 {
                lower += c;
            }
            if u2 >= u_a2 {
                upper += c;
            }
            if u2.abs_diff(n1n2) >= dev {
                extreme += c;
            }
        }
        let tail = if u_a2 <= u_b2 { lower } else { upper };
        return Ok(TestResult {
            u_statistic,
            u_a,
            p_one_sided: tail as f64 / total as f64,
            p_two_sided: extreme as f64 / total as f64,
            method: TestMethod::ExactEnumeration,
        });
    }

    let n = (n1 + n2) as f64;
    let mut tie_term = 0.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    for group in sorted.chunk_by(|x, y| x == y) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let mu = n1n2 as f64 / 2.0;
    let var = n1n2 as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let (p_one_sided, p_two_sided) = if var > 0.0 {
        let z = ((u_a - mu).abs() - 0.5).max(0.0) / var.sqrt();
        let sf = Normal::standard().sf(z);
        (
            sf.max(f64::MIN_POSITIVE),
            (2.0 * sf).clamp(f64::MIN_POSITIVE, 1.0),
        )
    } else {
        (1.0, 1.0)
    };
    Ok(TestResult {
        u_statistic,
        u_a,
        p_one_sided,
        p_two_sided,
        method: TestMethod::NormalApprox,
    })
}

/// Standardized mean difference of `a` over `b` with the pooled sample sd.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    let sa = summarize(a)?;
    let sb = summarize(b)?;
    let df = (sa.n + sb.n) as f64 - 2.0;
    if df <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let pooled = ((sa.n as f64 - 1.0) * sa.sd.powi(2) + (sb.n as f64 - 1.0) * sb.sd.powi(2)) / df;
    if !(pooled >= 1e-24) {
        return Err(Error::DegenerateVariance);
    }
    Ok((sa.mean - sb.mean) / pooled.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub subject: String,
    pub seed: Option<u64>,
    /// Percent of the fixed-schedule block spent engaged.
    pub control: f64,
    /// Percent of the closed-loop block spent engaged.
    pub dda: f64,
    pub difference: f64,
}

/// Engagement values are in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub n_subjects: usize,
    pub mean_dda: f64,
    pub sd_dda: f64,
    pub mean_control: f64,
    pub sd_control: f64,
    pub mean_difference: f64,
    pub sd_difference: f64,
    pub u_statistic: f64,
    pub p_one_sided: f64,
    pub p_two_sided: f64,
    pub method: TestMethod,
    /// Absent when both conditions have zero spread.
    pub cohens_d: Option<f64>,
    pub subjects: Vec<SubjectResult>,
}

/// One `(subject, log)` pair per participant.
pub fn summarize_experiment(logs: &[(String, SessionLog)]) -> Result<ExperimentReport> {
    let mut subjects = Vec::with_capacity(logs.len());
    for (name, log) in logs {
        let report = EngagementReport::from_log(log);
        let missing = |what: &str| {
            Error::MismatchedSubjects(format!("{name} has no {what} engagement value"))
        };
        let control = report
            .percent(PhaseKind::A)
            .ok_or_else(|| missing("control"))?
            * 100.0;
        let dda = report
            .percent(PhaseKind::B3)
            .ok_or_else(|| missing("DDA"))?
            * 100.0;
        subjects.push(SubjectResult {
            subject: name.clone(),
            seed: report.seed,
            control,
            dda,
            difference: dda - control,
        });
    }
    summarize_subjects(subjects)
}

pub fn summarize_subjects(subjects: Vec<SubjectResult>) -> Result<ExperimentReport> {
    if subjects.is_empty() {
        return Err(Error::MismatchedSubjects("no subjects".into()));
    }
    let dda: Vec<f64> = subjects.iter().map(|s| s.dda).collect();
    let control: Vec<f64> = subjects.iter().map(|s| s.control).collect();
    let diff: Vec<f64> = subjects.iter().map(|s| s.difference).collect();
    let (sd, sc, sdiff) = (summarize(&dda)?, summarize(&control)?, summarize(&diff)?);
    let test = mann_whitney_u(&dda, &control)?;
    let d = match cohens_d(&dda, &control) {
        Ok(d) => Some(d),
        Err(Error::DegenerateVariance) => None,
        Err(e) => return Err(e),
    };
    Ok(ExperimentReport {
        n_subjects: subjects.len(),
        mean_dda: sd.mean,
        sd_dda: sd.sd,
        mean_control: sc.mean,
        sd_control: sc.sd,
        mean_difference: sdiff.mean,
        sd_difference: sdiff.sd,
        u_statistic: test.u_statistic,
        p_one_sided: test.p_one_sided,
        p_two_sided: test.p_two_sided,
        method: test.method,
        cohens_d: d,
        subjects,
    })
}

impl ExperimentReport {
    /// Aligned plain-text table.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let w = self
            .subjects
            .iter()
            .map(|s| s.subject.len())
            .max()
            .unwrap_or(0)
            .max(7);
        let _ = writeln!(
            out,
            "{:<w$}  {:>10}  {:>10}  {:>10}",
            "subject", "control %", "dda %", "diff"
        );
        for s in &self.subjects {
            let _ = writeln!(
                out,
                "{:<w$}  {:>10.2}  {:>10.2}  {:>+10.2}",
                s.subject, s.control, s.dda, s.difference
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<22}{:>8.2} (sd {:.2}, n={})",
            "control mean %", self.mean_control, self.sd_control, self.n_subjects
        );
        let _ = writeln!(
            out,
            "{:<22}{:>8.2} (sd {:.2}, n={})",
            "dda mean %", self.mean_dda, self.sd_dda, self.n_subjects
        );
        let _ = writeln!(
            out,
            "{:<22}{:>+8.2} (sd {:.2})",
            "paired difference", self.mean_difference, self.sd_difference
        );
        let method = match self.method {
            TestMethod::ExactEnumeration => "exact",
            TestMethod::NormalApprox => "normal approximation",
        };
        let _ = writeln!(
            out,
            "{:<22}{:>8.1} ({method})",
            "Mann-Whitney U", self.u_statistic
        );
        let _ = writeln!(out, "{:<22}{:>8.5}", "p one-sided", self.p_one_sided);
        let _ = writeln!(out, "{:<22}{:>8.5}", "p two-sided", self.p_two_sided);
        match self.cohens_d {
            Some(d) => {
                let _ = writeln!(out, "{:<22}{:>8.3}", "Cohen's d", d);
            }
            None => {
                let _ = writeln!(out, "{:<22}{:>8}", "Cohen's d", "n/a");
            }
        }
        out
    }
}
