use nalgebra::{DMatrix, DVector};

use super::model::FiniteMarkovModel;
use crate::error::{Error, Result};
use crate::numeric::{left_mul, max_abs_diff};

const CLAMP: f64 = 1e-15;
/// `‖G‖` beyond this is treated as a singular `I − H`.
const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// `H = P − s⊗ν`
    Taboo,
    /// `G = Σ Hˡ`
    Fundamental,
    /// `Hʲ`
    Power(usize),
    /// `P̃ = P₂ Φ_{ν₁}`
    Embedded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub entries: DMatrix<f64>,
    pub kind: KernelKind,
}

impl KernelMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }
}

/// `H = P − s⊗ν`, with magnitudes below 1e-15 set to zero.
pub fn taboo_kernel(model: &FiniteMarkovModel) -> KernelMatrix {
    let mut h = model.p() - model.s() * model.nu().transpose();
    h.iter_mut().filter(|v| v.abs() < CLAMP).for_each(|v| *v = 0.0);
    KernelMatrix { entries: h, kind: KernelKind::Taboo }
}

/// `Hʲ` by repeated multiplication.
pub fn kernel_power(h: &KernelMatrix, j: usize) -> KernelMatrix {
    let d = h.dim();
    let mut out = DMatrix::identity(d, d);
    for _ in 0..j {
        out = &out * &h.entries;
    }
    KernelMatrix { entries: out, kind: KernelKind::Power(j) }
}

/// Solves `(I − H) G = I`.
///
/// `tol` bounds the residual `max |(I − H)G − I|`, relative to `max(1, ‖G‖)`.
pub fn fundamental_kernel(h: &KernelMatrix, tol: f64) -> Result<KernelMatrix> {
    let d = h.dim();
    let eye = DMatrix::<f64>::identity(d, d);
    let a = &eye - &h.entries;
    let g = a.clone().lu().solve(&eye).ok_or(Error::SeriesDiverges)?;
    let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if g.iter().any(|v| !v.is_finite()) || scale > DIVERGENCE_LIMIT {
        return Err(Error::SeriesDiverges);
    }
    // H ≥ 0 with ρ(H) < 1 forces G ≥ I entrywise; a negative entry means ρ(H) ≥ 1.
    if g.iter().any(|v| *v < -1e-9 * scale) {
        return Err(Error::SeriesDiverges);
    }
    let residual = max_abs_diff(&(&a * &g), &eye);
    if residual > tol * scale {
        return Err(Error::SeriesDiverges);
    }
    Ok(KernelMatrix { entries: g, kind: KernelKind::Fundamental })
}

/// Neumann series `Σ Hˡ`, stopped once the sup-norm of the increment drops
/// below `tol`. Cross-check path for [`fundamental_kernel`].
pub fn fundamental_kernel_series(
    h: &KernelMatrix,
    tol: f64,
    max_terms: usize,
) -> Result<KernelMatrix> {
    let d = h.dim();
    let mut term = DMatrix::<f64>::identity(d, d);
    let mut sum = term.clone();
    for _ in 0..max_terms {
        term = &term * &h.entries;
        sum += &term;
        let inc = term.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if inc < tol {
            return Ok(KernelMatrix { entries: sum, kind: KernelKind::Fundamental });
        }
        if !inc.is_finite() {
            break;
        }
    }
    Err(Error::SeriesDiverges)
}

/// Invariant measure normalized by the atom, `π_s = ν G` with `π_s s = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantMeasure {
    pub pi: DVector<f64>,
}

impl InvariantMeasure {
    /// `π_s g`
    pub fn integrate(&self, g: &DVector<f64>) -> f64 {
        self.pi.dot(g)
    }

    pub fn total_mass(&self) -> f64 {
        self.pi.sum()
    }
}

pub fn invariant_measure(model: &FiniteMarkovModel) -> Result<InvariantMeasure> {
    let g = fundamental_kernel(&taboo_kernel(model), 1e-10)?;
    Ok(invariant_measure_from(model, &g))
}

pub(crate) fn invariant_measure_from(model: &FiniteMarkovModel, g: &KernelMatrix) -> InvariantMeasure {
    InvariantMeasure { pi: left_mul(model.nu(), &g.entries) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn symmetric() -> FiniteMarkovModel {
        FiniteMarkovModel::unlabeled(
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn taboo_kernel_of_symmetric_chain() {
        let h = taboo_kernel(&symmetric());
        assert_eq!(h.kind, KernelKind::Taboo);
        for v in h.entries.iter() {
            assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn taboo_kernel_edge_cases() {
        let p = vec![vec![0.2, 0.8], vec![0.6, 0.4]];
        let m = FiniteMarkovModel::unlabeled(p.clone(), vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(taboo_kernel(&m).entries, *m.p());
        let rows = vec![vec![0.3, 0.7], vec![0.3, 0.7]];
        let full = FiniteMarkovModel::unlabeled(rows, vec![1.0, 1.0], vec![0.3, 0.7]).unwrap();
        assert!(taboo_kernel(&full).entries.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fundamental_kernel_of_symmetric_chain() {
        // (I − H)⁻¹ with I − H = [[.75, −.25], [−.25, .75]]: det = .5, inverse = [[1.5, .5], [.5, 1.5]]
        let g = fundamental_kernel(&taboo_kernel(&symmetric()), 1e-12).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.5, 0.5, 0.5, 1.5]);
        assert!(max_abs_diff(&g.entries, &expected) < 1e-14);
    }

    #[test]
    fn zero_taboo_kernel_gives_identity() {
        let h = KernelMatrix { entries: DMatrix::zeros(3, 3), kind: KernelKind::Taboo };
        let g = fundamental_kernel(&h, 1e-12).unwrap();
        assert_eq!(g.entries, DMatrix::identity(3, 3));
    }

    #[test]
    fn s_zero_diverges() {
        let m = FiniteMarkovModel::unlabeled(
            vec![vec![0.2, 0.8], vec![0.6, 0.4]],
            vec![0.0, 0.0],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert_eq!(fundamental_kernel(&taboo_kernel(&m), 1e-10), Err(Error::SeriesDiverges));
        assert_eq!(
            fundamental_kernel_series(&taboo_kernel(&m), 1e-12, 10_000),
            Err(Error::SeriesDiverges)
        );
        assert_eq!(invariant_measure(&m), Err(Error::SeriesDiverges));
    }

    #[test]
    fn invariant_measure_of_symmetric_chain() {
        let pi = invariant_measure(&symmetric()).unwrap();
        assert_abs_diff_eq!(pi.pi[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pi.pi[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn doubly_stochastic_with_uniform_nu_gives_uniform_pi() {
        let p = vec![vec![0.2, 0.5, 0.3], vec![0.5, 0.2, 0.3], vec![0.3, 0.3, 0.4]];
        let m = FiniteMarkovModel::unlabeled(p, vec![0.4, 0.6, 0.6], vec![1.0 / 3.0; 3]).unwrap();
        let pi = invariant_measure(&m).unwrap();
        assert_abs_diff_eq!(pi.pi[0], pi.pi[1], epsilon = 1e-12);
        assert_abs_diff_eq!(pi.pi[1], pi.pi[2], epsilon = 1e-12);
        assert_abs_diff_eq!(pi.integrate(m.s()), 1.0, epsilon = 1e-12);
    }
}
