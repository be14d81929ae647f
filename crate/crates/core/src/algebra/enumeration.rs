//! Block moments by summing over split-chain paths.
//!
//! A block path `x₀ … x_k` ending at `τ = k` has probability
//! `λ(x₀) H(x₀,x₁) ⋯ H(x_{k−1},x_k) s(x_k)`. The forward recursion keeps
//! `A_t^{(j)}(x) = E[S_t^j; τ ≥ t, X_t = x]` for `j ≤ m`, which sums the same
//! paths without listing them, and stops at a fixed depth.

use nalgebra::DVector;

use super::kernels::taboo_kernel;
use super::moments::{function, start_measure, Start};
use super::model::FiniteMarkovModel;
use crate::error::Result;
use crate::numeric::{left_mul, max_abs, GeometricEnvelope};

#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedMoments {
    /// `E U₀^j` restricted to `τ < depth`, for `j = 1..=m`.
    pub moments: Vec<f64>,
    /// Bound on the omitted `τ ≥ depth` part, per order.
    pub tail_bounds: Vec<f64>,
    pub depth: usize,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn enumerate_block_moments(
    model: &FiniteMarkovModel,
    g: &[f64],
    m: usize,
    start: Start,
    depth: usize,
) -> Result<EnumeratedMoments> {
    let g = function(model, g)?;
    let h = taboo_kernel(model).entries;
    let lambda = start_measure(model, start)?;
    let powers: Vec<DVector<f64>> = (0..=m).map(|k| g.map(|v| v.powi(k as i32))).collect();

    let mut a: Vec<DVector<f64>> = powers.iter().map(|p| lambda.component_mul(p)).collect();
    let mut moments = vec![0.0; m + 1];
    for _ in 0..depth {
        for (k, ak) in a.iter().enumerate() {
            moments[k] += ak.dot(model.s());
        }
        let moved: Vec<DVector<f64>> = a.iter().map(|ak| left_mul(ak, &h)).collect();
        for (k, slot) in a.iter_mut().enumerate() {
            let mut next = DVector::zeros(g.len());
            for (j, bj) in moved.iter().enumerate().take(k + 1) {
                next += bj.component_mul(&powers[k - j]) * binomial(k, j);
            }
            *slot = next;
        }
    }

    let gmax = max_abs(&g);
    let envelope = GeometricEnvelope::for_substochastic(&h, 512);
    let tail_bounds = (1..=m)
        .map(|k| match envelope {
            Some(env) => gmax.powi(k as i32) * moment_tail(&env, depth, k),
            None => f64::INFINITY,
        })
        .collect();
    Ok(EnumeratedMoments { moments: moments[1..].to_vec(), tail_bounds, depth })
}

/// `Σ_{j ≥ depth} (j+1)^k q^⌊j/b⌋`, summed until the remainder is negligible.
fn moment_tail(env: &GeometricEnvelope, depth: usize, k: usize) -> f64 {
    if env.ratio == 0.0 {
        return if depth < env.block { f64::INFINITY } else { 0.0 };
    }
    let mut total = 0.0;
    let mut j = depth;
    loop {
        let term = ((j + 1) as f64).powi(k as i32) * env.bound(j);
        total += term;
        // past the mode of (j+1)^k q^{j/b}, the remainder is below a geometric series
        let past_mode = (j as f64) > k as f64 * env.block as f64 / -env.ratio.ln();
        if (past_mode && term < 1e-18 * total.max(1e-300)) || term == 0.0 || j > depth + 10_000_000 {
            return total * 2.0;
        }
        j += 1;
    }
}
