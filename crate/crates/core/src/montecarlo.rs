//! Replicated central-limit experiments for the studentized kernel estimate.
//!
//! Replication `r` of a protocol with base seed `b` runs on its own
//! `ChaCha8` stream seeded by [`replication_seed`]`(b, r)`, the `r`-th output
//! of a SplitMix64 generator started at `b`. Results are collected in
//! replication order, so serial and parallel runs are bit-identical.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{local_bandwidth, modal_value, nw_estimate_in, studentize, KernelSpec, Window};
use crate::numeric::normal_cdf;
use crate::processes::{ProcessSpec, Simulator};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
pub const DEFAULT_MAX_PATH_LENGTH: usize = 1_000_000;
pub const DEFAULT_MODAL_PILOT: f64 = 0.5;
const BATCH: usize = 256;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `seed_r = mix64(base + (r + 1)·γ)` with `γ = 0x9E3779B97F4A7C15`.
pub fn replication_seed(base: u64, r: u64) -> u64 {
    mix64(base.wrapping_add(r.wrapping_add(1).wrapping_mul(GOLDEN)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    /// Extend each path until `local_count` observations fall in `window`,
    /// then estimate at `x_eval`.
    FixedPoint { x_eval: f64, window: Window, local_count: usize },
    /// `n` observations, estimate at the sample's modal value.
    Modal { n: usize },
}

impl Mode {
    pub fn size(&self) -> usize {
        match *self {
            Mode::FixedPoint { local_count, .. } => local_count,
            Mode::Modal { n } => n,
        }
    }

    fn with_size(&self, size: usize) -> Self {
        match self.clone() {
            Mode::FixedPoint { x_eval, window, .. } => Mode::FixedPoint { x_eval, window, local_count: size },
            Mode::Modal { .. } => Mode::Modal { n: size },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Bandwidth {
    Local { c0: f64 },
    Fixed { h: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltProtocol {
    #[serde(default)]
    pub id: String,
    pub mode: Mode,
    pub process: ProcessSpec,
    /// Replications to run, or the attempt cap when `admit_target` is set.
    pub reps: usize,
    /// Stop at the first replication where this many have been admitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admit_target: Option<usize>,
    #[serde(default)]
    pub kernel: KernelSpec,
    pub bandwidth: Bandwidth,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_max_path")]
    pub max_path_length: usize,
    #[serde(default = "default_pilot")]
    pub modal_pilot_h: f64,
}

fn default_max_path() -> usize {
    DEFAULT_MAX_PATH_LENGTH
}

fn default_pilot() -> f64 {
    DEFAULT_MODAL_PILOT
}

impl CltProtocol {
    pub fn validate(&self) -> Result<()> {
        self.process.validate()?;
        self.kernel.validate()?;
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.reps == 0 {
            return bad("reps must be at least 1");
        }
        if self.admit_target == Some(0) {
            return bad("admit_target must be at least 1");
        }
        match &self.mode {
            Mode::FixedPoint { x_eval, window, local_count } => {
                if !window.contains(*x_eval) {
                    return bad("x_eval must lie inside the window");
                }
                if *local_count == 0 {
                    return bad("local_count must be at least 1");
                }
            }
            Mode::Modal { n } if *n == 0 => return bad("n must be at least 1"),
            Mode::Modal { .. } => {}
        }
        match self.bandwidth {
            Bandwidth::Local { c0: v } | Bandwidth::Fixed { h: v } if !(v > 0.0 && v.is_finite()) => {
                bad("bandwidth constant must be positive")
            }
            _ if !(self.modal_pilot_h > 0.0) => bad("modal_pilot_h must be positive"),
            _ => Ok(()),
        }
    }
}

/// A protocol template run at several sizes (`local_count` or `n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub protocol: CltProtocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
}

impl ExperimentConfig {
    pub fn expand(&self) -> Vec<CltProtocol> {
        match &self.sizes {
            None => vec![self.protocol.clone()],
            Some(sizes) => sizes
                .iter()
                .map(|&s| CltProtocol { mode: self.protocol.mode.with_size(s), ..self.protocol.clone() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Admitted,
    Empty,
    Guard,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Admitted => "admitted",
            Status::Empty => "empty",
            Status::Guard => "guard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub seed: u64,
    /// Observations in the window (fixed point) or path length (modal).
    pub n_or_local_count: usize,
    pub path_length: usize,
    pub x_eval: f64,
    pub h: Option<f64>,
    pub sum_k: Option<f64>,
    pub f_hat: Option<f64>,
    pub studentized: Option<f64>,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltExperimentResult {
    pub protocol: CltProtocol,
    pub values: Vec<f64>,
    pub records: Vec<ReplicationRecord>,
    pub attempted: usize,
    pub admitted: usize,
    pub rejected_empty: usize,
    pub rejected_guard: usize,
    pub ks_distance: f64,
    pub mean: f64,
    pub sd: f64,
}

impl CltExperimentResult {
    pub fn size(&self) -> usize {
        self.protocol.mode.size()
    }
}

fn replicate(p: &CltProtocol, rep: usize) -> ReplicationRecord {
    let seed = replication_seed(p.base_seed, rep as u64);
    let mut sim = Simulator::new(&p.process, seed).expect("protocol validated");
    let mut x = Vec::new();
    let mut z = Vec::new();
    let mut record = ReplicationRecord {
        rep,
        seed,
        n_or_local_count: 0,
        path_length: 0,
        x_eval: f64::NAN,
        h: None,
        sum_k: None,
        f_hat: None,
        studentized: None,
        status: Status::Guard,
    };

    let (x_eval, window) = match p.mode {
        Mode::FixedPoint { x_eval, window, local_count } => {
            let mut count = 0;
            record.x_eval = x_eval;
            while count < local_count && x.len() < p.max_path_length {
                let o = sim.next().expect("simulator is infinite");
                count += window.contains(o.x) as usize;
                x.push(o.x);
                z.push(o.z);
            }
            record.n_or_local_count = count;
            record.path_length = x.len();
            if count < local_count {
                return record;
            }
            (x_eval, window)
        }
        Mode::Modal { n } => {
            for o in sim.by_ref().take(n) {
                x.push(o.x);
                z.push(o.z);
            }
            record.n_or_local_count = n;
            record.path_length = n;
            let x_eval = modal_value(&x, p.kernel, p.modal_pilot_h).expect("n >= 1");
            record.x_eval = x_eval;
            (x_eval, Window::around(x_eval))
        }
    };

    record.status = Status::Empty;
    let h = match p.bandwidth {
        Bandwidth::Fixed { h } => h,
        Bandwidth::Local { c0 } => match local_bandwidth(&x, x_eval, window, c0, p.kernel) {
            Ok(h) => h,
            Err(_) => return record,
        },
    };
    record.h = Some(h);
    let Ok(report) = nw_estimate_in(&x, &z, x_eval, h, p.kernel, window) else {
        return record;
    };
    let stat = studentize(&report, p.kernel, p.process.f.eval(x_eval));
    record.sum_k = Some(report.sum_k);
    record.f_hat = Some(report.f_hat);
    record.studentized = Some(stat);
    record.status = Status::Admitted;
    record
}

pub fn run_clt(protocol: &CltProtocol) -> Result<CltExperimentResult> {
    protocol.validate()?;
    let mut records = Vec::new();
    match protocol.admit_target {
        None => {
            records = (0..protocol.reps).into_par_iter().map(|r| replicate(protocol, r)).collect();
        }
        Some(target) => {
            let mut admitted = 0;
            'outer: while records.len() < protocol.reps {
                let start = records.len();
                let end = (start + BATCH).min(protocol.reps);
                let batch: Vec<_> = (start..end).into_par_iter().map(|r| replicate(protocol, r)).collect();
                for rec in batch {
                    admitted += (rec.status == Status::Admitted) as usize;
                    records.push(rec);
                    if admitted == target {
                        break 'outer;
                    }
                }
            }
        }
    }
    summarize(protocol, records)
}

fn summarize(protocol: &CltProtocol, records: Vec<ReplicationRecord>) -> Result<CltExperimentResult> {
    let values: Vec<f64> = records.iter().filter_map(|r| r.studentized).collect();
    let count = |s: Status| records.iter().filter(|r| r.status == s).count();
    if values.is_empty() {
        return Err(Error::AllRejected { reps: records.len() });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(CltExperimentResult {
        protocol: protocol.clone(),
        ks_distance: ks_distance(&values),
        mean,
        sd,
        attempted: records.len(),
        admitted: values.len(),
        rejected_empty: count(Status::Empty),
        rejected_guard: count(Status::Guard),
        values,
        records,
    })
}

/// `sup_x |F_n(x) − Φ(x)|` without a sample-size floor.
pub fn ks_distance(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (i, &v)| {
        let cdf = normal_cdf(v);
        d.max((i + 1) as f64 / n - cdf).max(cdf - i as f64 / n)
    })
}

/// Kolmogorov–Smirnov distance to the standard normal.
pub fn ks_normal(values: &[f64]) -> Result<f64> {
    if values.len() < 10 {
        return Err(Error::TooFewValues { found: values.len(), needed: 10 });
    }
    Ok(ks_distance(values))
}

/// Two-sample statistic `D` and its asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::TooFewValues { found: a.len().min(b.len()), needed: 1 });
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    Ok((d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d)))
}

/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendRow {
    pub size: usize,
    pub ks_distance: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendReport {
    /// Sorted by size.
    pub rows: Vec<TrendRow>,
    /// The largest size does not attain the smallest KS distance.
    pub flagged: bool,
    /// `ks(largest) − ks(smallest)`
    pub trend: f64,
}

/// Compares results whose protocols differ only in size.
pub fn trend_report(results: &[CltExperimentResult]) -> Result<TrendReport> {
    if results.len() < 2 {
        return Err(Error::IncomparableProtocols("need at least two results".into()));
    }
    let template = |r: &CltExperimentResult| CltProtocol { mode: r.protocol.mode.with_size(0), ..r.protocol.clone() };
    let first = template(&results[0]);
    if let Some(other) = results.iter().find(|r| template(r) != first) {
        return Err(Error::IncomparableProtocols(format!(
            "protocol {:?} differs from {:?} beyond size",
            other.protocol.id, results[0].protocol.id
        )));
    }
    let mut rows: Vec<TrendRow> = results
        .iter()
        .map(|r| TrendRow { size: r.size(), ks_distance: r.ks_distance, sd: r.sd })
        .collect();
    rows.sort_by_key(|r| r.size);
    let largest = rows.last().expect("nonempty").ks_distance;
    let min = rows.iter().map(|r| r.ks_distance).fold(f64::INFINITY, f64::min);
    Ok(TrendReport { flagged: largest > min, trend: largest - rows[0].ks_distance, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::{Family, Params, Transfer};
    use statrs::distribution::{ContinuousCDF, Normal};

    fn modal_protocol(n: usize, reps: usize) -> CltProtocol {
        CltProtocol {
            id: "t".into(),
            mode: Mode::Modal { n },
            process: ProcessSpec::new(Family::Indep, Transfer::identity(), Params::default()),
            reps,
            admit_target: None,
            kernel: KernelSpec::Epanechnikov,
            bandwidth: Bandwidth::Local { c0: 1.0 },
            base_seed: 5,
            max_path_length: DEFAULT_MAX_PATH_LENGTH,
            modal_pilot_h: DEFAULT_MODAL_PILOT,
        }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|r| replication_seed(42, r)).collect();
        assert_eq!(seeds.len(), 10_000);
        assert_eq!(replication_seed(42, 3), replication_seed(42, 3));
        assert_ne!(replication_seed(42, 3), replication_seed(43, 3));
    }

    #[test]
    fn ks_reference_cases() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let q: Vec<f64> = (1..=1000).map(|i| normal.inverse_cdf((i as f64 - 0.5) / 1000.0)).collect();
        assert!(ks_normal(&q).unwrap() <= 0.001);
        assert!((ks_normal(&[0.0; 20]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(ks_normal(&[0.0; 9]), Err(Error::TooFewValues { found: 9, needed: 10 }));
    }

    #[test]
    fn two_sample_identical_and_disjoint() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (d, p) = ks_two_sample(&a, &a).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
        let b: Vec<f64> = (200..300).map(|i| i as f64).collect();
        let (d, p) = ks_two_sample(&a, &b).unwrap();
        assert_eq!(d, 1.0);
        assert!(p < 1e-10);
    }

    #[test]
    fn degenerate_noise_gives_zero() {
        let mut p = modal_protocol(200, 1);
        p.process.f = Transfer::Linear { a: 0.0, b: 3.0 };
        p.process.params.sigma_u = Some(0.0);
        let r = run_clt(&p).unwrap();
        assert_eq!(r.values.len(), 1);
        assert!(r.values[0].abs() < 1e-12);
    }

    #[test]
    fn accounting_and_reproducibility() {
        let p = modal_protocol(300, 40);
        let a = run_clt(&p).unwrap();
        assert_eq!(a.admitted + a.rejected_empty + a.rejected_guard, a.attempted);
        assert_eq!(a.attempted, 40);
        let b = run_clt(&p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn admit_target_stops_exactly() {
        let mut p = modal_protocol(100, 500);
        p.admit_target = Some(30);
        let r = run_clt(&p).unwrap();
        assert_eq!(r.admitted, 30);
        assert_eq!(r.records.last().unwrap().status, Status::Admitted);
    }

    #[test]
    fn fixed_point_counts_are_exact() {
        let p = CltProtocol {
            mode: Mode::FixedPoint { x_eval: 2.0, window: Window { lo: 1.0, hi: 3.0 }, local_count: 25 },
            reps: 30,
            ..modal_protocol(1, 1)
        };
        let r = run_clt(&p).unwrap();
        for rec in r.records.iter().filter(|r| r.status == Status::Admitted) {
            assert_eq!(rec.n_or_local_count, 25);
        }
    }

    #[test]
    fn trend_rules() {
        let a = run_clt(&modal_protocol(100, 20)).unwrap();
        let dup = trend_report(&[a.clone(), a.clone()]).unwrap();
        assert!(!dup.flagged);
        assert_eq!(dup.trend, 0.0);
        let mut other = a.clone();
        other.protocol.base_seed = 99;
        assert!(matches!(trend_report(&[a.clone(), other]), Err(Error::IncomparableProtocols(_))));
        assert!(matches!(trend_report(&[a]), Err(Error::IncomparableProtocols(_))));
    }
}
