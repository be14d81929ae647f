//! Generalized autocovariance for chains with a possibly infinite invariant
//! measure.
//!
//! With `μ_g = π_s g`, `f₀ = f − s μ_f` and `φ_g = π_s I_g P − μ_g ν`:
//!
//! ```text
//! γ_{g,f}(0) = π_s I_{g₀} f₀ + μ_g μ_f (1 − π_s s²)
//! γ_{g,f}(ℓ) = φ_g P^{ℓ−1} f₀          ℓ ≥ 1
//! γ_{g,f}(ℓ) = γ_{f,g}(−ℓ)             ℓ < 0
//! ```
//!
//! `π_s s²` is `Σ_x π_s(x) s(x)²`. Since `φ_g 1 = 0`, the positive lags decay
//! at the rate of the Dobrushin coefficient of `P`, and the two-sided sum
//! recovers the block variance `σ²(g)`.

use nalgebra::DVector;

use super::kernels::InvariantMeasure;
use super::moments::{function, AtomKernels, TruncatedValue};
use super::model::FiniteMarkovModel;
use crate::error::{Error, Result};
use crate::numeric::{left_mul, max_abs, GeometricEnvelope};

const ENVELOPE_SEARCH: usize = 512;

struct Centered {
    mu: f64,
    /// `f − s μ_f`
    zero: DVector<f64>,
}

fn center(model: &FiniteMarkovModel, pi: &InvariantMeasure, f: &DVector<f64>) -> Centered {
    let mu = pi.integrate(f);
    Centered { mu, zero: f - model.s() * mu }
}

/// `φ_g = π_s I_g P − μ_g ν`
fn phi(model: &FiniteMarkovModel, pi: &InvariantMeasure, g: &DVector<f64>, mu_g: f64) -> DVector<f64> {
    left_mul(&pi.pi.component_mul(g), model.p()) - model.nu() * mu_g
}

pub fn generalized_autocov(model: &FiniteMarkovModel, g: &[f64], f: &[f64], ell: i64) -> Result<f64> {
    let kernels = AtomKernels::new(model)?;
    let g = function(model, g)?;
    let f = function(model, f)?;
    Ok(autocov_with(&kernels, &g, &f, ell))
}

pub(crate) fn autocov_with(kernels: &AtomKernels<'_>, g: &DVector<f64>, f: &DVector<f64>, ell: i64) -> f64 {
    if ell < 0 {
        return autocov_with(kernels, f, g, -ell);
    }
    let model = kernels.model;
    let pi = &kernels.pi;
    let cg = center(model, pi, g);
    let cf = center(model, pi, f);
    if ell == 0 {
        let s2 = pi.pi.dot(&model.s().component_mul(model.s()));
        return pi.pi.dot(&cg.zero.component_mul(&cf.zero)) + cg.mu * cf.mu * (1.0 - s2);
    }
    let mut row = phi(model, pi, g, cg.mu);
    for _ in 1..ell {
        row = left_mul(&row, model.p());
    }
    row.dot(&cf.zero)
}

/// `Σ_{ℓ=−L}^{L} γ_g(ℓ)` with the Dobrushin tail bound
/// `2 ‖φ_g‖₁ ‖g₀‖∞ Σ_{j ≥ L} q^⌊j/k⌋`.
pub fn sigma2_from_series(
    model: &FiniteMarkovModel,
    g: &[f64],
    truncation: usize,
    tol: f64,
) -> Result<TruncatedValue> {
    let kernels = AtomKernels::new(model)?;
    let g = function(model, g)?;
    let pi = &kernels.pi;
    let c = center(model, pi, &g);
    let phi_g = phi(model, pi, &g, c.mu);
    let phi_mass: f64 = phi_g.iter().map(|v| v.abs()).sum();

    let envelope = GeometricEnvelope::for_zero_mass(model.p(), ENVELOPE_SEARCH);
    let scale = 2.0 * phi_mass * max_abs(&c.zero);
    let tail_bound = match envelope {
        _ if scale == 0.0 => 0.0,
        Some(env) => scale * env.tail(truncation),
        None => f64::INFINITY,
    };
    if tail_bound > tol {
        return Err(Error::TruncationInsufficient { tail_bound, tol });
    }

    let gamma0 = autocov_with(&kernels, &g, &g, 0);
    let mut positive = 0.0;
    let mut row = phi_g;
    for _ in 1..=truncation {
        positive += row.dot(&c.zero);
        row = left_mul(&row, model.p());
    }
    Ok(TruncatedValue { value: gamma0 + 2.0 * positive, tail_bound, terms: 2 * truncation + 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::moments::block_mean_variance;
    use approx::assert_abs_diff_eq;

    fn symmetric() -> FiniteMarkovModel {
        FiniteMarkovModel::unlabeled(
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    fn three_state() -> FiniteMarkovModel {
        FiniteMarkovModel::unlabeled(
            vec![vec![0.3, 0.5, 0.2], vec![0.4, 0.4, 0.2], vec![0.25, 0.25, 0.5]],
            vec![0.6, 0.5, 0.6],
            vec![0.4, 0.4, 0.2],
        )
        .unwrap()
    }

    #[test]
    fn symmetric_chain_values() {
        let m = symmetric();
        assert_abs_diff_eq!(generalized_autocov(&m, &[1.0, 0.0], &[1.0, 0.0], 0).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(generalized_autocov(&m, &[1.0, 0.0], &[1.0, 0.0], 1).unwrap(), 0.0, epsilon = 1e-12);
        let s = sigma2_from_series(&m, &[1.0, 0.0], 5, 1e-10).unwrap();
        assert_abs_diff_eq!(s.value, 1.0, epsilon = 1e-12);
        assert_eq!(sigma2_from_series(&m, &[0.0, 0.0], 1, 1e-10).unwrap().value, 0.0);
    }

    #[test]
    fn negative_lags_mirror() {
        let m = three_state();
        let (g, f) = ([1.0, -0.5, 2.0], [0.3, 1.0, -1.0]);
        for ell in 1..6 {
            let a = generalized_autocov(&m, &g, &f, -ell).unwrap();
            let b = generalized_autocov(&m, &f, &g, ell).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn series_matches_block_variance() {
        let m = three_state();
        let g = [1.0, -0.5, 2.0];
        let (_, sigma2) = block_mean_variance(&m, &g).unwrap();
        let s = sigma2_from_series(&m, &g, 200, 1e-12).unwrap();
        assert!((s.value - sigma2).abs() <= 1e-8 + s.tail_bound);
    }

    #[test]
    fn periodic_chain_has_no_envelope() {
        let m = FiniteMarkovModel::unlabeled(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        )
        .unwrap();
        assert!(matches!(
            sigma2_from_series(&m, &[1.0, 0.5], 50, 1e-8),
            Err(Error::TruncationInsufficient { .. })
        ));
    }
}
