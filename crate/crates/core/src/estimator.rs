//! Kernel regression `f̂(x) = Σ Z_t K_{x,h}(X_t) / Σ K_{x,h}(X_t)` with
//! `K_{x,h}(y) = K((y − x)/h)/h`, the local bandwidth rule
//! `h = c₀ (T_C(n) p̂_C(x))^{−1/5}` and the studentized statistic
//! `(h Σ K_{x,h}(X_t) / ‖K‖₂²)^{1/2} (f̂(x) − f(x))`.
//!
//! The pilot density behind the local rule uses `h_ref = |C| / 10`, and the
//! default occupation set at `x` is the open interval `(x − 2.5, x + 2.5)`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::numeric::normal_pdf;

pub const DEFAULT_HALF_WINDOW: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KernelSpec {
    #[default]
    Epanechnikov,
    /// Standard normal density restricted to `[−c, c]` and renormalized.
    GaussianTruncated { c: f64 },
}

impl KernelSpec {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            KernelSpec::Epanechnikov => {
                if u.abs() < 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            KernelSpec::GaussianTruncated { c } => {
                if u.abs() <= c {
                    normal_pdf(u) / erf(c / std::f64::consts::SQRT_2)
                } else {
                    0.0
                }
            }
        }
    }

    /// Support radius.
    pub fn radius(&self) -> f64 {
        match *self {
            KernelSpec::Epanechnikov => 1.0,
            KernelSpec::GaussianTruncated { c } => c,
        }
    }

    /// `‖K‖₂² = ∫ K²`.
    pub fn squared_norm(&self) -> f64 {
        match *self {
            KernelSpec::Epanechnikov => 0.6,
            KernelSpec::GaussianTruncated { c } => {
                let z = erf(c / std::f64::consts::SQRT_2);
                erf(c) / (2.0 * std::f64::consts::PI.sqrt() * z * z)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::GaussianTruncated { c } if !(c > 0.0 && c.is_finite()) => {
                Err(Error::InvalidInput(format!("truncation point must be positive, got {c}")))
            }
            _ => Ok(()),
        }
    }

    /// `K_{x,h}(y)`
    pub fn scaled(&self, y: f64, x: f64, h: f64) -> f64 {
        self.eval((y - x) / h) / h
    }
}

/// Open interval `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn around(x: f64) -> Self {
        Self { lo: x - DEFAULT_HALF_WINDOW, hi: x + DEFAULT_HALF_WINDOW }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub x_eval: f64,
    pub h: f64,
    pub f_hat: f64,
    /// `S_n(K_{x,h}) = Σ K_{x,h}(X_t)`
    pub sum_k: f64,
    /// `T_C(n)`
    pub t_c: usize,
    /// `S_n(K_{x,h}) / T_C(n)`, zero when `T_C(n) = 0`.
    pub p_hat_c: f64,
    pub studentized: Option<f64>,
}

fn check_data(x: &[f64], z: &[f64], h: f64) -> Result<()> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch { what: "z", expected: x.len(), found: z.len() });
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
    }
    Ok(())
}

pub fn nw_estimate(x: &[f64], z: &[f64], x_eval: f64, h: f64, kernel: KernelSpec) -> Result<EstimateReport> {
    nw_estimate_in(x, z, x_eval, h, kernel, Window::around(x_eval))
}

/// As [`nw_estimate`], with `T_C(n)` counted over `window`.
pub fn nw_estimate_in(
    x: &[f64],
    z: &[f64],
    x_eval: f64,
    h: f64,
    kernel: KernelSpec,
    window: Window,
) -> Result<EstimateReport> {
    check_data(x, z, h)?;
    let (mut sum_k, mut sum_kz, mut t_c) = (0.0, 0.0, 0usize);
    for (&xt, &zt) in x.iter().zip(z) {
        let k = kernel.scaled(xt, x_eval, h);
        sum_k += k;
        sum_kz += k * zt;
        t_c += window.contains(xt) as usize;
    }
    if sum_k <= 0.0 {
        return Err(Error::EmptyNeighborhood { x_eval, h });
    }
    Ok(EstimateReport {
        x_eval,
        h,
        f_hat: sum_kz / sum_k,
        sum_k,
        t_c,
        p_hat_c: if t_c > 0 { sum_k / t_c as f64 } else { 0.0 },
        studentized: None,
    })
}

/// `h = c₀ (T_C p̂_C)^{−1/5}` with the pilot `p̂_C` at `h_ref = |C| / 10`.
pub fn local_bandwidth(x: &[f64], x_eval: f64, window: Window, c0: f64, kernel: KernelSpec) -> Result<f64> {
    let t_c = x.iter().filter(|&&v| window.contains(v)).count();
    if t_c == 0 {
        return Err(Error::EmptyOccupation);
    }
    let h_ref = window.width() / 10.0;
    let mass: f64 = x.iter().map(|&v| kernel.scaled(v, x_eval, h_ref)).sum();
    if mass <= 0.0 {
        return Err(Error::EmptyNeighborhood { x_eval, h: h_ref });
    }
    Ok(bandwidth_from_local_mass(mass, c0))
}

/// `c₀ · m^{−1/5}` where `m = T_C(n) p̂_C(x)`.
pub fn bandwidth_from_local_mass(mass: f64, c0: f64) -> f64 {
    c0 * mass.powf(-0.2)
}

pub fn studentized(
    x: &[f64],
    z: &[f64],
    x_eval: f64,
    h: f64,
    kernel: KernelSpec,
    f_true: f64,
) -> Result<f64> {
    let r = nw_estimate(x, z, x_eval, h, kernel)?;
    Ok(studentize(&r, kernel, f_true))
}

pub fn studentize(report: &EstimateReport, kernel: KernelSpec, f_true: f64) -> f64 {
    (report.h * report.sum_k / kernel.squared_norm()).sqrt() * (report.f_hat - f_true)
}

/// Observations sorted by `x`, for neighborhood queries.
struct Sorted {
    x: Vec<f64>,
    z: Vec<f64>,
}

impl Sorted {
    fn new(x: &[f64], z: &[f64]) -> Self {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        Self { x: idx.iter().map(|&i| x[i]).collect(), z: idx.iter().map(|&i| z[i]).collect() }
    }

    /// Index range of points with `|x_i − c| ≤ r`.
    fn near(&self, c: f64, r: f64) -> std::ops::Range<usize> {
        self.x.partition_point(|&v| v < c - r)..self.x.partition_point(|&v| v <= c + r)
    }
}

/// `c₀` from `grid` minimizing the mean leave-one-out squared error
/// `(Z_t − f̂_{−t}(X_t))²`, with `h_t` from the local rule at `X_t`.
/// Points whose leave-one-out neighborhood is empty are skipped; ties go to
/// the earliest grid entry.
pub fn cv_constant(x: &[f64], z: &[f64], grid: &[f64], kernel: KernelSpec) -> Result<f64> {
    check_data(x, z, 1.0)?;
    if x.len() < 20 {
        return Err(Error::InvalidInput(format!("cross-validation needs n >= 20, got {}", x.len())));
    }
    if grid.is_empty() || grid.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::InvalidInput("c0 grid must be nonempty and positive".into()));
    }
    let sorted = Sorted::new(x, z);
    // pilot mass T_C p̂_C at each X_t, shared by every c₀
    let masses: Vec<f64> = sorted
        .x
        .iter()
        .map(|&xt| {
            let h_ref = Window::around(xt).width() / 10.0;
            sorted.near(xt, kernel.radius() * h_ref).map(|j| kernel.scaled(sorted.x[j], xt, h_ref)).sum()
        })
        .collect();

    let mut best: Option<(f64, f64)> = None;
    for &c0 in grid {
        let (mut loss, mut used) = (0.0, 0usize);
        for i in 0..sorted.x.len() {
            let h = bandwidth_from_local_mass(masses[i], c0);
            let (mut sk, mut skz) = (0.0, 0.0);
            for j in sorted.near(sorted.x[i], kernel.radius() * h) {
                if j != i {
                    let k = kernel.scaled(sorted.x[j], sorted.x[i], h);
                    sk += k;
                    skz += k * sorted.z[j];
                }
            }
            if sk > 0.0 {
                loss += (sorted.z[i] - skz / sk).powi(2);
                used += 1;
            }
        }
        if used == 0 {
            continue;
        }
        let mean = loss / used as f64;
        if best.is_none_or(|(_, b)| mean < b) {
            best = Some((c0, mean));
        }
    }
    best.map(|(c0, _)| c0).ok_or(Error::AllNeighborhoodsEmpty)
}

/// Observed `X_t` maximizing `Σ_j K((X_j − X_t)/h)`; the smallest such
/// point when several agree to relative 1e-12.
pub fn modal_value(x: &[f64], kernel: KernelSpec, pilot_h: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::InvalidInput("modal value of an empty sample".into()));
    }
    if !(pilot_h > 0.0) {
        return Err(Error::InvalidInput(format!("pilot bandwidth must be positive, got {pilot_h}")));
    }
    let sorted = Sorted::new(x, x);
    let mut best = (sorted.x[0], f64::NEG_INFINITY);
    for &xi in &sorted.x {
        let density: f64 = sorted.near(xi, kernel.radius() * pilot_h).map(|j| kernel.eval((sorted.x[j] - xi) / pilot_h)).sum();
        if density > best.1 * (1.0 + 1e-12) {
            best = (xi, density);
        }
    }
    Ok(best.0)
}
