//! Split-chain simulation and regeneration bookkeeping.
//!
//! Paths are drawn by retrospective splitting: `X_{t+1}` comes from `P`, then
//! `Y_t ~ Bernoulli(s(X_t) ν(X_{t+1}) / p(X_t, X_{t+1}))`. This has the law of
//! the forward split chain without sampling the residual kernel. A final
//! `X_{n+1}` is drawn to settle `Y_n` and then discarded.
//!
//! For product chains each coordinate is split separately and the compound
//! chain regenerates when `Y¹_t = Y²_t = 1`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algebra::FiniteMarkovModel;
use crate::error::{Error, Result};
use crate::montecarlo::replication_seed;
use crate::numeric::normal_pdf;
use crate::processes::{Family, ProcessSpec, Simulator};

/// Atom `s = s_level·1_C`, `ν = Uniform(C)` on `C = [lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomSpecContinuous {
    pub lo: f64,
    pub hi: f64,
    pub s_level: f64,
}

impl AtomSpecContinuous {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn nu_density(&self) -> f64 {
        1.0 / (self.hi - self.lo)
    }

    /// `P(Y_t = 1 | X_t = x, X_{t+1} = y)` for unit Gaussian increments.
    pub fn split_probability(&self, x: f64, y: f64) -> f64 {
        if !self.contains(x) || !self.contains(y) {
            return 0.0;
        }
        (self.s_level * self.nu_density() / normal_pdf(y - x)).min(1.0)
    }
}

/// Atom for the `N(0, 1)` random walk on `C = [−h, h]`:
/// `s_level = 2h φ(2h)`, so `s(x) ν(y) = φ(2h) ≤ φ(y − x)` on `C × C`.
pub fn gaussian_rw_atom(halfwidth: f64) -> Result<AtomSpecContinuous> {
    if !(halfwidth > 0.0 && halfwidth <= 1.0) {
        return Err(Error::InvalidHalfwidth(halfwidth));
    }
    Ok(AtomSpecContinuous {
        lo: -halfwidth,
        hi: halfwidth,
        s_level: 2.0 * halfwidth * normal_pdf(2.0 * halfwidth),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitProcess {
    /// Starts from `ν`.
    Finite(FiniteMarkovModel),
    /// Independent coordinates, each started from its own `ν`.
    FiniteProduct { x: FiniteMarkovModel, w: FiniteMarkovModel },
    /// `X_{t+1} = X_t + N(0, 1)` from `X_0 = x0`.
    GaussianWalk { atom: AtomSpecContinuous, x0: f64 },
    /// A random-walk system, split on its regressor. Needs `σ_e = 1`.
    System { spec: ProcessSpec, atom: AtomSpecContinuous },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitTrajectory {
    pub x: Vec<f64>,
    pub w: Option<Vec<f64>>,
    /// Regeneration indicator of the (possibly compound) chain.
    pub y: Vec<bool>,
    /// Per-coordinate indicators `(Y¹, Y²)` for product chains.
    pub y_parts: Option<(Vec<bool>, Vec<bool>)>,
    pub tau: Vec<usize>,
    pub seed: u64,
}

impl SplitTrajectory {
    pub fn n(&self) -> usize {
        self.x.len() - 1
    }

    fn from_parts(x: Vec<f64>, w: Option<Vec<f64>>, y: Vec<bool>, y_parts: Option<(Vec<bool>, Vec<bool>)>, seed: u64) -> Self {
        let tau = y.iter().enumerate().filter(|(_, &b)| b).map(|(t, _)| t).collect();
        Self { x, w, y, y_parts, tau, seed }
    }
}

struct RowSampler {
    cumulative: Vec<Vec<f64>>,
}

impl RowSampler {
    fn new(p: &DMatrix<f64>) -> Self {
        let cumulative = p
            .row_iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter().map(|v| {
                    acc += v;
                    acc
                })
                .collect()
            })
            .collect();
        Self { cumulative }
    }

    fn sample_from(cumulative: &[f64], probs: impl Fn(usize) -> f64, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random::<f64>() * cumulative[cumulative.len() - 1];
        let j = cumulative.partition_point(|&c| c <= u);
        if j < cumulative.len() {
            return j;
        }
        (0..cumulative.len()).rev().find(|&k| probs(k) > 0.0).unwrap_or(0)
    }

    fn next(&self, p: &DMatrix<f64>, i: usize, rng: &mut ChaCha8Rng) -> usize {
        Self::sample_from(&self.cumulative[i], |k| p[(i, k)], rng)
    }
}

fn sample_measure(nu: &DVector<f64>, rng: &mut ChaCha8Rng) -> usize {
    let mut acc = 0.0;
    let cumulative: Vec<f64> = nu.iter().map(|v| {
        acc += v;
        acc
    })
    .collect();
    RowSampler::sample_from(&cumulative, |k| nu[k], rng)
}

struct FiniteCoordinate {
    model: FiniteMarkovModel,
    rows: RowSampler,
    state: usize,
}

impl FiniteCoordinate {
    fn new(model: FiniteMarkovModel, rng: &mut ChaCha8Rng) -> Self {
        let state = sample_measure(model.nu(), rng);
        let rows = RowSampler::new(model.p());
        Self { model, rows, state }
    }

    /// Moves one step and returns `(X_t, Y_t)` for the state being left.
    fn step(&mut self, rng: &mut ChaCha8Rng) -> (usize, bool) {
        let i = self.state;
        let j = self.rows.next(self.model.p(), i, rng);
        let ratio = self.model.s()[i] * self.model.nu()[j] / self.model.p()[(i, j)];
        let y = rng.random::<f64>() < ratio;
        self.state = j;
        (i, y)
    }
}

/// Streaming split chain for finite models.
pub struct FiniteStepper {
    x: FiniteCoordinate,
    w: Option<FiniteCoordinate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FiniteStep {
    pub x: usize,
    pub w: Option<usize>,
    pub y_x: bool,
    pub y_w: bool,
}

impl FiniteStepper {
    /// Draws the initial state(s) from `ν`. Panics on non-finite processes.
    pub fn new(process: SplitProcess, rng: &mut ChaCha8Rng) -> Self {
        match process {
            SplitProcess::Finite(m) => Self { x: FiniteCoordinate::new(m, rng), w: None },
            SplitProcess::FiniteProduct { x, w } => {
                let x = FiniteCoordinate::new(x, rng);
                let w = FiniteCoordinate::new(w, rng);
                Self { x, w: Some(w) }
            }
            _ => panic!("FiniteStepper needs a finite process"),
        }
    }

    pub fn step(&mut self, rng: &mut ChaCha8Rng) -> FiniteStep {
        let (x, y_x) = self.x.step(rng);
        match &mut self.w {
            Some(wc) => {
                let (w, y_w) = wc.step(rng);
                FiniteStep { x, w: Some(w), y_x, y_w }
            }
            None => FiniteStep { x, w: None, y_x, y_w: true },
        }
    }

    /// `(X_t, W_t)` as reals, for the process generators.
    pub fn advance(&mut self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let s = self.step(rng);
        (s.x as f64, s.w.map_or(0.0, |w| w as f64))
    }
}

/// Path `t = 0..=n` with split indicators; deterministic in `seed`.
pub fn simulate_split(process: &SplitProcess, n: usize, seed: u64) -> Result<SplitTrajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match process {
        SplitProcess::Finite(_) | SplitProcess::FiniteProduct { .. } => {
            let product = matches!(process, SplitProcess::FiniteProduct { .. });
            let mut stepper = FiniteStepper::new(process.clone(), &mut rng);
            let mut x = Vec::with_capacity(n + 1);
            let mut w = Vec::with_capacity(if product { n + 1 } else { 0 });
            let (mut y1, mut y2) = (Vec::with_capacity(n + 1), Vec::with_capacity(n + 1));
            for _ in 0..=n {
                let s = stepper.step(&mut rng);
                x.push(s.x as f64);
                if let Some(ws) = s.w {
                    w.push(ws as f64);
                }
                y1.push(s.y_x);
                y2.push(s.y_w);
            }
            if product {
                let y = y1.iter().zip(&y2).map(|(a, b)| *a && *b).collect();
                Ok(SplitTrajectory::from_parts(x, Some(w), y, Some((y1, y2)), seed))
            } else {
                Ok(SplitTrajectory::from_parts(x, None, y1, None, seed))
            }
        }
        SplitProcess::GaussianWalk { atom, x0 } => {
            let mut x = Vec::with_capacity(n + 2);
            x.push(*x0);
            let mut y = Vec::with_capacity(n + 1);
            for t in 0..=n {
                let step: f64 = rng.sample(StandardNormal);
                x.push(x[t] + step);
                y.push(rng.random::<f64>() < atom.split_probability(x[t], x[t + 1]));
            }
            x.pop();
            Ok(SplitTrajectory::from_parts(x, None, y, None, seed))
        }
        SplitProcess::System { spec, atom } => {
            if spec.family == Family::FiniteProduct {
                let (x, w) = spec.finite_models()?;
                return simulate_split(&SplitProcess::FiniteProduct { x, w }, n, seed);
            }
            if spec.sigma_e() != 1.0 {
                return Err(Error::InvalidSpec("split systems need sigma_e = 1".into()));
            }
            let path: Vec<_> = Simulator::new(spec, seed)?.take(n + 2).collect();
            let mut coin = ChaCha8Rng::seed_from_u64(replication_seed(seed, u64::MAX));
            let y = path
                .windows(2)
                .map(|p| coin.random::<f64>() < atom.split_probability(p[0].x, p[1].x))
                .collect();
            let x = path[..=n].iter().map(|o| o.x).collect();
            let w = path[..=n].iter().map(|o| o.w).collect();
            Ok(SplitTrajectory::from_parts(x, Some(w), y, None, seed))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegenerationStats {
    /// `T(n) = max{k : τ_k ≤ n} ∨ 0`.
    pub count: usize,
    pub tau: Vec<usize>,
    /// `τ_k − τ_{k−1}` with `τ_{−1} = −1`.
    pub lengths: Vec<usize>,
}

pub fn regeneration_stats(traj: &SplitTrajectory) -> RegenerationStats {
    let tau = traj.tau.clone();
    let lengths = tau
        .iter()
        .scan(-1i64, |prev, &t| {
            let len = t as i64 - *prev;
            *prev = t as i64;
            Some(len as usize)
        })
        .collect();
    RegenerationStats { count: tau.len().saturating_sub(1), tau, lengths }
}

/// Set of states or an open interval of the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Region {
    Interval { lo: f64, hi: f64 },
    States { states: Vec<usize> },
    Everything,
    Empty,
}

impl Region {
    pub fn contains(&self, x: f64) -> bool {
        match self {
            Region::Interval { lo, hi } => *lo < x && x < *hi,
            Region::States { states } => states.iter().any(|&s| s as f64 == x),
            Region::Everything => true,
            Region::Empty => false,
        }
    }
}

/// `T_C(n) = Σ_{t ≤ n} 1_C(X_t)`.
pub fn occupation_count(traj: &SplitTrajectory, region: &Region) -> usize {
    traj.x.iter().filter(|&&x| region.contains(x)).count()
}

/// `S_n(g) = U₀ + Σ_{k=1}^{T(n)} U_k + U_(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDecomposition {
    pub u0: f64,
    pub blocks: Vec<f64>,
    pub tail: f64,
    /// `τ_k − τ_{k−1}` for `k = 1..=T(n)`.
    pub lengths: Vec<usize>,
}

impl BlockDecomposition {
    pub fn total(&self) -> f64 {
        self.u0 + self.blocks.iter().sum::<f64>() + self.tail
    }
}

/// Splits `values[0..=n]` at the regeneration indices. Without any
/// regeneration the whole sum is `u0`.
pub fn decompose(values: &[f64], tau: &[usize]) -> BlockDecomposition {
    let Some((&first, rest)) = tau.split_first() else {
        return BlockDecomposition { u0: values.iter().sum(), blocks: Vec::new(), tail: 0.0, lengths: Vec::new() };
    };
    let u0 = values[..=first].iter().sum();
    let mut blocks = Vec::with_capacity(rest.len());
    let mut lengths = Vec::with_capacity(rest.len());
    let mut prev = first;
    for &t in rest {
        blocks.push(values[prev + 1..=t].iter().sum());
        lengths.push(t - prev);
        prev = t;
    }
    let tail = values[prev + 1..].iter().sum();
    BlockDecomposition { u0, blocks, tail, lengths }
}

/// Block sums of `g(X_t)` or, with a `w` path, `g(X_t, W_t)`.
pub fn block_sums(traj: &SplitTrajectory, g: impl Fn(f64, Option<f64>) -> f64) -> BlockDecomposition {
    let values: Vec<f64> = match &traj.w {
        Some(w) => traj.x.iter().zip(w).map(|(&x, &w)| g(x, Some(w))).collect(),
        None => traj.x.iter().map(|&x| g(x, None)).collect(),
    };
    decompose(&values, &traj.tau)
}

/// For each complete compound block of a product trajectory, the sums
/// `Σ_k V_k^m` for `m = 1..=max_order`, where `V_k` runs over the `X`-blocks
/// inside it and `g = g_X ⊗ g_W`.
pub fn compound_block_powers(
    traj: &SplitTrajectory,
    gx: &[f64],
    gw: &[f64],
    max_order: usize,
) -> Result<Vec<Vec<f64>>> {
    let (Some(w), Some((y1, y2))) = (&traj.w, &traj.y_parts) else {
        return Err(Error::InvalidInput("compound blocks need a product trajectory".into()));
    };
    let mut out = Vec::new();
    let mut sums = vec![0.0; max_order];
    let mut v = 0.0;
    for t in 0..traj.x.len() {
        v += gx[traj.x[t] as usize] * gw[w[t] as usize];
        if y1[t] {
            let mut p = 1.0;
            for s in sums.iter_mut() {
                p *= v;
                *s += p;
            }
            v = 0.0;
            if y2[t] {
                out.push(std::mem::replace(&mut sums, vec![0.0; max_order]));
            }
        }
    }
    Ok(out)
}

/// Counts of `W_{τ¹_k} → W_{τ¹_{k+1}}` over consecutive `X`-regenerations.
pub fn embedded_transition_counts(traj: &SplitTrajectory, w_dim: usize) -> Result<DMatrix<f64>> {
    let (Some(w), Some((y1, _))) = (&traj.w, &traj.y_parts) else {
        return Err(Error::InvalidInput("embedded counts need a product trajectory".into()));
    };
    let mut counts = DMatrix::zeros(w_dim, w_dim);
    let mut prev: Option<usize> = None;
    for t in 0..traj.x.len() {
        if y1[t] {
            let cur = w[t] as usize;
            if let Some(p) = prev {
                counts[(p, cur)] += 1.0;
            }
            prev = Some(cur);
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn symmetric() -> FiniteMarkovModel {
        FiniteMarkovModel::unlabeled(
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn atom_for_halfwidth_half() {
        let a = gaussian_rw_atom(0.5).unwrap();
        assert!((a.s_level - 0.241_970_724_519_143_37).abs() < 1e-15);
        assert_eq!(gaussian_rw_atom(0.0), Err(Error::InvalidHalfwidth(0.0)));
        assert_eq!(gaussian_rw_atom(1.5), Err(Error::InvalidHalfwidth(1.5)));
    }

    #[test]
    fn full_regeneration_every_step() {
        let m = FiniteMarkovModel::unlabeled(
            vec![vec![0.3, 0.7], vec![0.3, 0.7]],
            vec![1.0, 1.0],
            vec![0.3, 0.7],
        )
        .unwrap();
        let t = simulate_split(&SplitProcess::Finite(m), 200, 9).unwrap();
        assert!(t.y.iter().all(|&y| y));
        assert_eq!(t.tau, (0..=200).collect::<Vec<_>>());
    }

    #[test]
    fn stats_conventions() {
        let t = SplitTrajectory::from_parts(vec![0.0; 3], None, vec![true; 3], None, 0);
        let s = regeneration_stats(&t);
        assert_eq!((s.count, s.tau, s.lengths), (2, vec![0, 1, 2], vec![1, 1, 1]));
        let none = SplitTrajectory::from_parts(vec![0.0; 4], None, vec![false; 4], None, 0);
        assert_eq!(regeneration_stats(&none).count, 0);
        assert!(regeneration_stats(&none).tau.is_empty());
    }

    #[test]
    fn occupation_extremes() {
        let t = simulate_split(&SplitProcess::Finite(symmetric()), 100, 1).unwrap();
        assert_eq!(occupation_count(&t, &Region::Everything), 101);
        assert_eq!(occupation_count(&t, &Region::Empty), 0);
        let zeros = occupation_count(&t, &Region::States { states: vec![0] });
        let ones = occupation_count(&t, &Region::States { states: vec![1] });
        assert_eq!(zeros + ones, 101);
    }

    #[test]
    fn determinism() {
        let p = SplitProcess::GaussianWalk { atom: gaussian_rw_atom(0.5).unwrap(), x0: 0.0 };
        let a = simulate_split(&p, 5000, 77).unwrap();
        assert_eq!(a, simulate_split(&p, 5000, 77).unwrap());
        assert_ne!(a.y, simulate_split(&p, 5000, 78).unwrap().y);
    }

    #[test]
    fn unit_and_zero_functions() {
        let t = simulate_split(&SplitProcess::Finite(symmetric()), 1000, 4).unwrap();
        let ones = block_sums(&t, |_, _| 1.0);
        assert_eq!(ones.blocks, ones.lengths.iter().map(|&l| l as f64).collect::<Vec<_>>());
        let zero = block_sums(&t, |_, _| 0.0);
        assert_eq!(zero.total(), 0.0);
    }

    #[test]
    fn compound_blocks_need_product_paths() {
        let t = simulate_split(&SplitProcess::Finite(symmetric()), 10, 4).unwrap();
        assert!(compound_block_powers(&t, &[1.0, 1.0], &[1.0, 1.0], 2).is_err());
    }

    #[test]
    fn compound_first_powers_recombine() {
        let p = SplitProcess::FiniteProduct { x: symmetric(), w: symmetric() };
        let t = simulate_split(&p, 2000, 8).unwrap();
        let powers = compound_block_powers(&t, &[1.0, 2.0], &[1.0, -1.0], 1).unwrap();
        let w = t.w.as_ref().unwrap();
        let values: Vec<f64> = (0..t.x.len())
            .map(|i| [1.0, 2.0][t.x[i] as usize] * [1.0, -1.0][w[i] as usize])
            .collect();
        let d = decompose(&values, &t.tau);
        let through_blocks: f64 = powers.iter().map(|p| p[0]).sum();
        assert!((d.u0 + d.blocks.iter().sum::<f64>() - through_blocks).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn recombination_identity(values in prop::collection::vec(-1e3f64..1e3, 1..200), mask in prop::collection::vec(any::<bool>(), 200)) {
            let tau: Vec<usize> = (0..values.len()).filter(|&t| mask[t]).collect();
            let d = decompose(&values, &tau);
            let direct: f64 = values.iter().sum();
            prop_assert!((d.total() - direct).abs() <= 1e-9 * direct.abs().max(1.0));
            prop_assert_eq!(d.blocks.len(), tau.len().saturating_sub(1));
        }
    }
}
