//! Moments of regeneration blocks `U₀ = Σ_{k=0}^{τ} g(X_k)`.
//!
//! With `H = P − s⊗ν` and `G = Σ Hˡ`, the `m`-th moment expands over
//! compositions `α = (α₁, …, α_r)` of `m`:
//!
//! ```text
//! E_x U₀ᵐ = Σ_r Σ_{α ∈ Δ_r^m} m!/(α₁!⋯α_r!) · ψ_{r,α}(x),
//! ψ_{r,α} = [G I_{g^α₁} H] ⋯ [G I_{g^α_{r−1}} H] G I_{g^α_r} 1,
//! ```
//!
//! which is evaluated right to left in `O(r d²)` per composition.

use nalgebra::{DMatrix, DVector};

use super::kernels::{fundamental_kernel, invariant_measure_from, taboo_kernel, InvariantMeasure};
use super::model::FiniteMarkovModel;
use crate::error::{Error, Result};
use crate::numeric::{left_mul, max_abs, GeometricEnvelope};

pub const MAX_ORDER: usize = 6;
const NEGATIVE_VARIANCE_SLACK: f64 = 1e-10;
const ENVELOPE_SEARCH: usize = 512;

/// Initial law of the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Start {
    State(usize),
    Nu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockMomentRequest {
    pub g: Vec<f64>,
    pub m: usize,
    pub start: Start,
}

/// A truncated series together with its analytic tail bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedValue {
    pub value: f64,
    pub tail_bound: f64,
    pub terms: usize,
}

/// `H`, `G` and `π_s` of one model, computed once.
#[derive(Debug, Clone)]
pub struct AtomKernels<'a> {
    pub model: &'a FiniteMarkovModel,
    pub h: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub pi: InvariantMeasure,
}

impl<'a> AtomKernels<'a> {
    pub fn new(model: &'a FiniteMarkovModel) -> Result<Self> {
        Self::with_tol(model, 1e-10)
    }

    pub fn with_tol(model: &'a FiniteMarkovModel, tol: f64) -> Result<Self> {
        let h = taboo_kernel(model);
        let g = fundamental_kernel(&h, tol)?;
        let pi = invariant_measure_from(model, &g);
        Ok(Self { model, h: h.entries, g: g.entries, pi })
    }

    pub(crate) fn start_measure(&self, start: Start) -> Result<DVector<f64>> {
        start_measure(self.model, start)
    }

    pub(crate) fn envelope(&self) -> Option<GeometricEnvelope> {
        GeometricEnvelope::for_substochastic(&self.h, ENVELOPE_SEARCH)
    }
}

pub(crate) fn start_measure(model: &FiniteMarkovModel, start: Start) -> Result<DVector<f64>> {
    match start {
        Start::Nu => Ok(model.nu().clone()),
        Start::State(x) if x < model.dim() => {
            let mut e = DVector::zeros(model.dim());
            e[x] = 1.0;
            Ok(e)
        }
        Start::State(x) => Err(Error::InvalidInput(format!("start state {x} out of range"))),
    }
}

pub(crate) fn function(model: &FiniteMarkovModel, g: &[f64]) -> Result<DVector<f64>> {
    if g.len() != model.dim() {
        return Err(Error::DimensionMismatch { what: "g", expected: model.dim(), found: g.len() });
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("g has non-finite entries".into()));
    }
    Ok(DVector::from_column_slice(g))
}

/// All `α ∈ ℕ₊^r` with `Σ α_i = m`, in lexicographic order.
pub fn compositions(m: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 1..=(left + 1 - parts) {
            prefix.push(first);
            rec(left - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if r >= 1 && r <= m {
        rec(m, r, &mut Vec::with_capacity(r), &mut out);
    }
    out
}

/// `m! / (α₁! ⋯ α_r!)`
pub fn multinomial(alpha: &[usize]) -> f64 {
    let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
    fact(alpha.iter().sum()) / alpha.iter().map(|&a| fact(a)).product::<f64>()
}

fn pow_elem(g: &DVector<f64>, k: usize) -> DVector<f64> {
    g.map(|v| v.powi(k as i32))
}

/// Block mean and variance `(μ, σ²)`:
///
/// `μ = π_s g`,
/// `σ² = π_s g² − (π_s g)² + 2 π_s I_g P G g − 2 (π_s I_s g)(π_s g)`.
pub fn block_mean_variance(model: &FiniteMarkovModel, g: &[f64]) -> Result<(f64, f64)> {
    let kernels = AtomKernels::new(model)?;
    block_mean_variance_with(&kernels, g)
}

pub fn block_mean_variance_with(kernels: &AtomKernels<'_>, g: &[f64]) -> Result<(f64, f64)> {
    let model = kernels.model;
    let g = function(model, g)?;
    let pi = &kernels.pi.pi;
    let mu = pi.dot(&g);
    let g2 = pow_elem(&g, 2);
    let pgg = model.p() * (&kernels.g * &g);
    let cross = pi.dot(&g.component_mul(&pgg));
    let atom = pi.dot(&model.s().component_mul(&g));
    let sigma2 = pi.dot(&g2) - mu * mu + 2.0 * cross - 2.0 * atom * mu;
    let slack = NEGATIVE_VARIANCE_SLACK * pi.dot(&g2).max(1.0);
    if sigma2 < -slack {
        return Err(Error::NegativeVariance(sigma2));
    }
    Ok((mu, sigma2.max(0.0)))
}

/// Exact `E U₀ᵐ` from the composition expansion with geometric sums closed by `G`.
pub fn block_moment(
    model: &FiniteMarkovModel,
    request: &BlockMomentRequest,
    tol: f64,
) -> Result<f64> {
    if request.m > MAX_ORDER {
        return Err(Error::OrderTooLarge { m: request.m, max: MAX_ORDER });
    }
    if request.m == 0 {
        return Err(Error::InvalidInput("moment order must be at least 1".into()));
    }
    let kernels = AtomKernels::with_tol(model, tol)?;
    block_moment_with(&kernels, &request.g, request.m, request.start)
}

pub fn block_moment_with(kernels: &AtomKernels<'_>, g: &[f64], m: usize, start: Start) -> Result<f64> {
    if m > MAX_ORDER {
        return Err(Error::OrderTooLarge { m, max: MAX_ORDER });
    }
    let g = function(kernels.model, g)?;
    let lambda = kernels.start_measure(start)?;
    let ones = DVector::from_element(g.len(), 1.0);
    let mut total = 0.0;
    for r in 1..=m {
        for alpha in compositions(m, r) {
            // rightmost factor G I_{g^α_r} 1, then v ← G I_{g^α_i} H v
            let mut v = &kernels.g * pow_elem(&g, alpha[r - 1]).component_mul(&ones);
            for &a in alpha[..r - 1].iter().rev() {
                let hv = &kernels.h * &v;
                v = &kernels.g * pow_elem(&g, a).component_mul(&hv);
            }
            total += multinomial(&alpha) * lambda.dot(&v);
        }
    }
    Ok(total)
}

/// `E U₀ᵐ(a, g)` for `U₀(a, g) = Σ_{k=0}^{τ} a_k g(X_k)`, `m ∈ {1, 2}`.
///
/// Sums run over indices `≤ truncation`; `a_sup` must bound `|a_k|` for all
/// `k`, and enters the reported tail bound.
pub fn weighted_block_moment(
    model: &FiniteMarkovModel,
    a: impl Fn(usize) -> f64,
    a_sup: f64,
    g: &[f64],
    m: usize,
    start: Start,
    truncation: usize,
    tol: f64,
) -> Result<TruncatedValue> {
    if !(1..=2).contains(&m) {
        return Err(Error::OrderTooLarge { m, max: 2 });
    }
    let kernels = AtomKernels::new(model)?;
    let g = function(model, g)?;
    let lambda = kernels.start_measure(start)?;
    let envelope = kernels.envelope().ok_or(Error::TruncationInsufficient {
        tail_bound: f64::INFINITY,
        tol,
    })?;
    let big_l = truncation;
    let gmax = max_abs(&g);
    let lambda_mass: f64 = lambda.iter().map(|v| v.abs()).sum();

    // λ Hʲ for j = 0..=L
    let mut rows = Vec::with_capacity(big_l + 1);
    let mut row = lambda.clone();
    for _ in 0..=big_l {
        let next = left_mul(&row, &kernels.h);
        rows.push(std::mem::replace(&mut row, next));
    }

    let (value, tail_bound) = if m == 1 {
        let value: f64 = rows.iter().enumerate().map(|(j, r)| a(j) * r.dot(&g)).sum();
        (value, lambda_mass * a_sup * gmax * envelope.tail(big_l + 1))
    } else {
        let g2 = pow_elem(&g, 2);
        let diag: f64 = rows.iter().enumerate().map(|(j, r)| a(j).powi(2) * r.dot(&g2)).sum();
        // Hˡ g for ℓ = 1..=L
        let mut cols = Vec::with_capacity(big_l);
        let mut col = g.clone();
        for _ in 0..big_l {
            col = &kernels.h * &col;
            cols.push(col.clone());
        }
        let mut off = 0.0;
        for (j, r) in rows.iter().enumerate() {
            let mut inner = DVector::zeros(g.len());
            for l in 1..=(big_l - j) {
                inner.axpy(a(j + l), &cols[l - 1], 1.0);
            }
            off += a(j) * r.dot(&g.component_mul(&inner));
        }
        let pair_tail: f64 = (0..=big_l)
            .map(|j| envelope.bound(j) * envelope.tail(big_l + 1 - j))
            .sum::<f64>()
            + envelope.tail(big_l + 1) * envelope.tail(1);
        let scale = lambda_mass * a_sup * a_sup * gmax * gmax;
        (diag + 2.0 * off, scale * (envelope.tail(big_l + 1) + 2.0 * pair_tail))
    };
    if tail_bound > tol {
        return Err(Error::TruncationInsufficient { tail_bound, tol });
    }
    Ok(TruncatedValue { value, tail_bound, terms: big_l + 1 })
}
