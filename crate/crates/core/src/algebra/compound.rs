//! Independent product chains `(X_t, W_t)`.
//!
//! [`embedded_transition`] gives the law of `W` sampled at the regeneration
//! times of `X`. [`compound_block_moment`] evaluates
//! `E_ν Σ_{k=0}^{𝒯} V_k^m`, where `V_k` sums `g_X(X_t) g_W(W_t)` over the
//! `k`-th `X`-block and `𝒯` counts `X`-blocks up to the first simultaneous
//! regeneration.
//!
//! Functions on the product space are stored as `d₁ × d₂` matrices `F[x, w]`,
//! so `(H₁ ⊗ P₂) F = H₁ F P₂ᵀ`.

use nalgebra::{DMatrix, DVector};

use super::kernels::{fundamental_kernel, taboo_kernel, KernelKind, KernelMatrix};
use super::moments::{compositions, function, multinomial, AtomKernels, TruncatedValue};
use super::model::FiniteMarkovModel;
use crate::error::{Error, Result};
use crate::numeric::{left_mul, max_abs};

pub const MAX_COMPOUND_ORDER: usize = 3;
const MAX_TERMS: usize = 1_000_000;
const MAX_LAGS: usize = 100_000;
const DEFICIT_PROBE: usize = 10_000;

/// `P̃ = P₂ Φ` with `Φ = Σ_{ℓ≥0} b_{ℓ+1} P₂ˡ` and `b_ℓ = ν₁ H₁^{ℓ−1} s₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedChain {
    pub p_tilde: KernelMatrix,
    /// `b_1, b_2, …` up to the truncation point.
    pub coefficients: Vec<f64>,
    /// `1 − Σ b_ℓ`, an entrywise bound on the truncation error of `P̃`.
    pub tail_mass: f64,
    /// Minorizing pair `(s₂, ν₂ Φ)`.
    pub s: DVector<f64>,
    pub nu: DVector<f64>,
}

pub fn embedded_transition(
    x: &FiniteMarkovModel,
    w: &FiniteMarkovModel,
    tol: f64,
) -> Result<EmbeddedChain> {
    let h1 = taboo_kernel(x);
    let recurrent = fundamental_kernel(&h1, 1e-10).is_ok();
    let mut row = x.nu().clone();
    let mut coefficients = Vec::new();
    let mut tail = 1.0;
    while tail > tol {
        if coefficients.len() == MAX_TERMS || (!recurrent && coefficients.len() == DEFICIT_PROBE) {
            let mass: f64 = coefficients.iter().sum();
            return Err(if recurrent {
                Error::TruncationInsufficient { tail_bound: tail, tol }
            } else {
                Error::CoefficientMassDeficit { mass }
            });
        }
        coefficients.push(row.dot(x.s()));
        row = left_mul(&row, &h1.entries);
        tail = row.sum();
    }

    let d = w.dim();
    let mut phi = DMatrix::zeros(d, d);
    let mut power = DMatrix::<f64>::identity(d, d);
    for &b in &coefficients {
        phi += &power * b;
        power = &power * w.p();
    }
    let p_tilde = w.p() * &phi;
    let nu = left_mul(w.nu(), &phi);
    Ok(EmbeddedChain {
        p_tilde: KernelMatrix { entries: p_tilde, kind: KernelKind::Embedded },
        coefficients,
        tail_mass: tail,
        s: w.s().clone(),
        nu,
    })
}

struct Product<'a> {
    x: AtomKernels<'a>,
    w: AtomKernels<'a>,
    gx: DVector<f64>,
    gw: DVector<f64>,
}

impl Product<'_> {
    /// `(g_X^a ⊗ g_W^a) ∘ F`
    fn weight(&self, a: usize, f: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(f.nrows(), f.ncols(), |i, j| {
            f[(i, j)] * (self.gx[i] * self.gw[j]).powi(a as i32)
        })
    }

    /// `(π₁ ⊗ π₂) F`
    fn integrate(&self, f: &DMatrix<f64>) -> f64 {
        self.x.pi.pi.dot(&(f * &self.w.pi.pi))
    }

    fn ones(&self) -> DMatrix<f64> {
        DMatrix::from_element(self.gx.len(), self.gw.len(), 1.0)
    }

    /// `(π₁⊗π₂) D_{α₁} M D_{α₂} ⋯ M D_{α_r} 1`
    fn chain(&self, alpha: &[usize], resolvent: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> f64 {
        let r = alpha.len();
        let mut f = self.weight(alpha[r - 1], &self.ones());
        for &a in alpha[..r - 1].iter().rev() {
            f = self.weight(a, &resolvent(&f));
        }
        self.integrate(&f)
    }

    fn sum(&self, m: usize, resolvent: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> f64 {
        (1..=m)
            .flat_map(|r| compositions(m, r))
            .map(|alpha| multinomial(&alpha) * self.chain(&alpha, &resolvent))
            .sum()
    }
}

fn product<'a>(
    x: &'a FiniteMarkovModel,
    w: &'a FiniteMarkovModel,
    gx: &[f64],
    gw: &[f64],
    m: usize,
) -> Result<Product<'a>> {
    if m == 0 || m > MAX_COMPOUND_ORDER {
        return Err(Error::OrderTooLarge { m, max: MAX_COMPOUND_ORDER });
    }
    Ok(Product {
        x: AtomKernels::new(x)?,
        w: AtomKernels::new(w)?,
        gx: function(x, gx)?,
        gw: function(w, gw)?,
    })
}

/// Lemma-style series with each lag `j_i ∈ {1, …, L}`; `L` is the smallest
/// lag count whose envelope tail bound is within `tol`.
pub fn compound_block_moment(
    x: &FiniteMarkovModel,
    w: &FiniteMarkovModel,
    gx: &[f64],
    gw: &[f64],
    m: usize,
    tol: f64,
) -> Result<TruncatedValue> {
    let prod = product(x, w, gx, gw, m)?;
    if m == 1 {
        let value = prod.x.pi.integrate(&prod.gx) * prod.w.pi.integrate(&prod.gw);
        return Ok(TruncatedValue { value, tail_bound: 0.0, terms: 1 });
    }
    let scale = prod.x.pi.pi.iter().map(|v| v.abs()).sum::<f64>()
        * prod.w.pi.pi.iter().map(|v| v.abs()).sum::<f64>()
        * (max_abs(&prod.gx) * max_abs(&prod.gw)).powi(m as i32);
    let envelope = prod.x.envelope();
    let bound = |lags: usize| -> f64 {
        let Some(env) = envelope else { return f64::INFINITY };
        let total = env.tail(1);
        let kept = total - env.tail(lags + 1);
        (2..=m)
            .flat_map(|r| compositions(m, r))
            .map(|alpha| {
                let r = alpha.len() as i32 - 1;
                multinomial(&alpha) * (total.powi(r) - kept.powi(r))
            })
            .sum::<f64>()
            * scale
    };
    let lags = if scale == 0.0 {
        1
    } else {
        (1..=MAX_LAGS).find(|&l| bound(l) <= tol).ok_or(Error::TruncationInsufficient {
            tail_bound: bound(MAX_LAGS),
            tol,
        })?
    };

    let h1 = &prod.x.h;
    let p2t = prod.w.model.p().transpose();
    let truncated = |f: &DMatrix<f64>| {
        let mut term = f.clone();
        let mut acc = DMatrix::zeros(f.nrows(), f.ncols());
        for _ in 0..lags {
            term = h1 * &term * &p2t;
            acc += &term;
        }
        acc
    };
    let value = prod.sum(m, truncated);
    Ok(TruncatedValue { value, tail_bound: if scale == 0.0 { 0.0 } else { bound(lags) }, terms: lags })
}

/// Same quantity with every lag sum closed by `M = K (I − K)⁻¹`,
/// `K = H₁ ⊗ P₂`. Forms the `d₁d₂ × d₁d₂` Kronecker matrix.
pub fn compound_block_moment_exact(
    x: &FiniteMarkovModel,
    w: &FiniteMarkovModel,
    gx: &[f64],
    gw: &[f64],
    m: usize,
) -> Result<f64> {
    let prod = product(x, w, gx, gw, m)?;
    let (d1, d2) = (x.dim(), w.dim());
    let k = prod.x.h.kronecker(w.p());
    let n = d1 * d2;
    let eye = DMatrix::<f64>::identity(n, n);
    let lu = (&eye - &k).lu();
    // vec(F) with index x·d₂ + w matches the Kronecker ordering
    let resolvent = |f: &DMatrix<f64>| {
        let v = DVector::from_iterator(n, (0..n).map(|i| f[(i / d2, i % d2)]));
        let kv = &k * v;
        let out = lu.solve(&kv).expect("I − H₁⊗P₂ is nonsingular when ρ(H₁) < 1");
        DMatrix::from_fn(d1, d2, |i, j| out[i * d2 + j])
    };
    if lu.is_invertible() {
        Ok(prod.sum(m, resolvent))
    } else {
        Err(Error::SeriesDiverges)
    }
}
