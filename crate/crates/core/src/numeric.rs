//! Small dense-matrix helpers and geometric tail envelopes.
//!
//! Every truncated series in the crate is bounded by a [`GeometricEnvelope`]:
//! a pair `(k, q)` with `‖Aʲ‖ ≤ q^⌊j/k⌋` for all `j ≥ 0`. Tails of such a
//! bound have closed forms, so callers get an analytic tail bound next to
//! every truncated value.

use nalgebra::{DMatrix, DVector};

/// Largest absolute row sum, the operator norm on bounded functions.
pub fn sup_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Measure times matrix: `(μ M)_j = Σ_i μ_i M_ij`.
pub fn left_mul(measure: &DVector<f64>, m: &DMatrix<f64>) -> DVector<f64> {
    m.tr_mul(measure)
}

/// Dobrushin ergodicity coefficient `½ max_{i,k} Σ_j |P_ij − P_kj|`.
///
/// For a signed measure `μ` with `μ1 = 0`, `‖μP‖₁ ≤ δ(P) ‖μ‖₁`.
pub fn dobrushin(p: &DMatrix<f64>) -> f64 {
    let d = p.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for k in (i + 1)..d {
            let dist: f64 = (0..d).map(|j| (p[(i, j)] - p[(k, j)]).abs()).sum();
            worst = worst.max(0.5 * dist);
        }
    }
    worst
}

/// Bound `‖Aʲ‖ ≤ q^⌊j/k⌋` for a family of matrix powers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricEnvelope {
    pub block: usize,
    pub ratio: f64,
}

impl GeometricEnvelope {
    /// Envelope for powers of a nonnegative substochastic matrix in the sup norm.
    ///
    /// Looks for the first `k ≤ max_power` with `‖Aᵏ‖∞ < 1`. Powers below `k`
    /// have norm at most one, so `‖Aʲ‖ ≤ ‖Aᵏ‖^⌊j/k⌋`.
    pub fn for_substochastic(a: &DMatrix<f64>, max_power: usize) -> Option<Self> {
        Self::search(a, max_power, sup_norm)
    }

    /// Envelope for `‖μ Pʲ‖₁ / ‖μ‖₁` over zero-mass signed measures `μ`.
    pub fn for_zero_mass(p: &DMatrix<f64>, max_power: usize) -> Option<Self> {
        Self::search(p, max_power, dobrushin)
    }

    fn search(
        a: &DMatrix<f64>,
        max_power: usize,
        norm: impl Fn(&DMatrix<f64>) -> f64,
    ) -> Option<Self> {
        let mut power = a.clone();
        for k in 1..=max_power {
            let q = norm(&power);
            if q < 1.0 - 1e-12 {
                return Some(Self { block: k, ratio: q.max(0.0) });
            }
            power = &power * a;
        }
        None
    }

    pub fn bound(&self, j: usize) -> f64 {
        self.ratio.powi((j / self.block) as i32)
    }

    /// `Σ_{j ≥ l} q^⌊j/k⌋`.
    pub fn tail(&self, l: usize) -> f64 {
        let k = self.block as f64;
        let q = self.ratio;
        let b = l / self.block;
        let partial = (self.block * (b + 1) - l) as f64 * q.powi(b as i32);
        partial + k * q.powi(b as i32 + 1) / (1.0 - q)
    }

    /// `Σ_{j ≥ l} j · q^⌊j/k⌋`.
    pub fn weighted_tail(&self, l: usize) -> f64 {
        let k = self.block;
        let kf = k as f64;
        let q = self.ratio;
        let b = l / k;
        let partial: f64 = (l..k * (b + 1)).map(|j| j as f64).sum::<f64>() * q.powi(b as i32);
        let big_b = (b + 1) as i32;
        let qb = q.powi(big_b);
        let geo = qb / (1.0 - q);
        let lin = qb * (big_b as f64 * (1.0 - q) + q) / ((1.0 - q) * (1.0 - q));
        partial + kf * kf * lin + kf * (kf - 1.0) / 2.0 * geo
    }

    /// Smallest `L` with `scale · tail(L + 1) ≤ tol`, capped at `max_terms`.
    pub fn terms_for(&self, scale: f64, tol: f64, max_terms: usize) -> Option<usize> {
        (0..=max_terms).find(|&l| scale * self.tail(l + 1) <= tol)
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_tails_match_direct_sums() {
        for &(block, ratio) in &[(1usize, 0.5f64), (3, 0.8), (2, 0.0), (4, 0.97)] {
            let env = GeometricEnvelope { block, ratio };
            for l in [0usize, 1, 2, 5, 11] {
                let direct: f64 = (l..20_000).map(|j| env.bound(j)).sum();
                let weighted: f64 = (l..20_000).map(|j| j as f64 * env.bound(j)).sum();
                assert!((env.tail(l) - direct).abs() < 1e-9 * direct.max(1.0));
                assert!((env.weighted_tail(l) - weighted).abs() < 1e-8 * weighted.max(1.0));
            }
        }
    }

    #[test]
    fn dobrushin_of_identical_rows_is_zero() {
        let p = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.3, 0.7]);
        assert_eq!(dobrushin(&p), 0.0);
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(dobrushin(&id), 1.0);
    }

    #[test]
    fn substochastic_envelope_needs_leakage() {
        let h = DMatrix::from_row_slice(2, 2, &[0.25, 0.25, 0.25, 0.25]);
        let env = GeometricEnvelope::for_substochastic(&h, 8).unwrap();
        assert_eq!(env.block, 1);
        assert!((env.ratio - 0.5).abs() < 1e-15);
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        assert!(GeometricEnvelope::for_substochastic(&p, 8).is_none());
    }
}
