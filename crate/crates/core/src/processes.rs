//! Cointegration systems `Z_t = f(X_t) + W_t` driven by a Gaussian random walk.
//!
//! All random-walk families use `X_t = x0 + σ_e Σ_{k=0}^{t} e_k` (so
//! `X_{−1} = x0`) with standard normal `e_t`. The noise `W_t` is wired per
//! family:
//!
//! | family              | `W_t`                                        |
//! |---------------------|----------------------------------------------|
//! | `INDEP`             | `σ_u ε_t`                                    |
//! | `SHARED_INNOVATION` | `c₁ e_t + c₂ ε_t`, default `c = (√½, √½)`    |
//! | `AR1_LINKED`        | `a W_{t−1} + b σ_e e_t + σ_u ε_t`, `W_{−1}=0` |
//! | `MA_LINKED`         | `c₁ e_t + c₂ e_{t−1} + c₃ ε_{t−1}`, `c = 1/√3` |
//! | `FINITE_PRODUCT`    | independent finite chain, `X`, `W` are state indices |
//!
//! Every step draws `e_t` then `ε_t`, so a path is a deterministic function
//! of the seed and prefixes of longer paths agree with shorter ones.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{ChainFile, FiniteMarkovModel};
use crate::error::{Error, Result};
use crate::montecarlo::replication_seed;
use crate::split::{FiniteStepper, SplitProcess};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Family {
    Indep,
    SharedInnovation,
    Ar1Linked,
    MaLinked,
    FiniteProduct,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Indep => "INDEP",
            Family::SharedInnovation => "SHARED_INNOVATION",
            Family::Ar1Linked => "AR1_LINKED",
            Family::MaLinked => "MA_LINKED",
            Family::FiniteProduct => "FINITE_PRODUCT",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        [Family::Indep, Family::SharedInnovation, Family::Ar1Linked, Family::MaLinked, Family::FiniteProduct]
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::UnknownProcessFamily(name.to_string()))
    }
}

/// Transfer function `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Transfer {
    /// `a·x + b`
    Linear { a: f64, b: f64 },
    /// Piecewise-linear through `(xs[i], ys[i])`, constant beyond the ends.
    Table { xs: Vec<f64>, ys: Vec<f64> },
}

impl Transfer {
    pub fn identity() -> Self {
        Transfer::Linear { a: 1.0, b: 0.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Transfer::Linear { a, b } => a * x + b,
            Transfer::Table { xs, ys } => {
                let i = xs.partition_point(|&v| v <= x);
                if i == 0 {
                    ys[0]
                } else if i == xs.len() {
                    ys[xs.len() - 1]
                } else {
                    let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                    ys[i - 1] + w * (ys[i] - ys[i - 1])
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Transfer::Linear { a, b } if a.is_finite() && b.is_finite() => Ok(()),
            Transfer::Linear { .. } => Err(Error::InvalidSpec("non-finite LINEAR coefficients".into())),
            Transfer::Table { xs, ys } => {
                if xs.is_empty() || xs.len() != ys.len() {
                    return Err(Error::InvalidSpec("TABLE needs equal, nonempty xs and ys".into()));
                }
                if xs.windows(2).any(|w| w[0] >= w[1]) || xs.iter().chain(ys).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSpec("TABLE xs must be finite and strictly increasing".into()));
                }
                Ok(())
            }
        }
    }
}

/// Family parameters. Unused fields are ignored by families that do not read them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_chain: Option<ChainFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_chain: Option<ChainFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub family: Family,
    pub f: Transfer,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub x0: f64,
}

impl ProcessSpec {
    pub fn new(family: Family, f: Transfer, params: Params) -> Self {
        Self { family, f, params, x0: 0.0 }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::InvalidSpec(format!("process JSON: {e}")))?;
        Self::from_value(value)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        match value.get("family").and_then(|f| f.as_str()) {
            Some(name) => Family::parse(name)?,
            None => return Err(Error::InvalidSpec("missing string field `family`".into())),
        };
        let spec: Self =
            serde_json::from_value(value).map_err(|e| Error::InvalidSpec(format!("process JSON: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn sigma_e(&self) -> f64 {
        self.params.sigma_e.unwrap_or(1.0)
    }

    pub fn sigma_u(&self) -> f64 {
        self.params.sigma_u.unwrap_or(1.0)
    }

    fn weights(&self) -> Vec<f64> {
        match (&self.params.weights, self.family) {
            (Some(w), _) => w.clone(),
            (None, Family::SharedInnovation) => vec![0.5f64.sqrt(); 2],
            (None, Family::MaLinked) => vec![(1.0f64 / 3.0).sqrt(); 3],
            (None, _) => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.f.validate()?;
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!("{name} must be finite and nonnegative")))
            }
        };
        nonneg("sigma_e", self.sigma_e())?;
        nonneg("sigma_u", self.sigma_u())?;
        if !self.x0.is_finite() {
            return Err(Error::InvalidSpec("x0 must be finite".into()));
        }
        let want_weights = match self.family {
            Family::SharedInnovation => 2,
            Family::MaLinked => 3,
            _ => 0,
        };
        if want_weights > 0 && self.weights().len() != want_weights {
            return Err(Error::InvalidSpec(format!(
                "{} takes {want_weights} weights",
                self.family.name()
            )));
        }
        match self.family {
            Family::Ar1Linked => {
                let a = self.params.a.ok_or_else(|| Error::InvalidSpec("AR1_LINKED needs `a`".into()))?;
                if !(a.abs() < 1.0) {
                    return Err(Error::InvalidSpec(format!("AR1_LINKED requires |a| < 1, got {a}")));
                }
                if !self.params.b.ok_or_else(|| Error::InvalidSpec("AR1_LINKED needs `b`".into()))?.is_finite() {
                    return Err(Error::InvalidSpec("b must be finite".into()));
                }
            }
            Family::FiniteProduct => {
                self.finite_models()?;
            }
            _ => {}
        }
        Ok(())
    }

    pub fn finite_models(&self) -> Result<(FiniteMarkovModel, FiniteMarkovModel)> {
        let missing = || Error::InvalidSpec("FINITE_PRODUCT needs `x_chain` and `w_chain`".into());
        let x = self.params.x_chain.clone().ok_or_else(missing)?.into_model()?;
        let w = self.params.w_chain.clone().ok_or_else(missing)?.into_model()?;
        Ok((x, w))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    /// Standard-normal regressor innovations `e_t`; empty for finite chains.
    pub e: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// One observation of a running system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub x: f64,
    pub w: f64,
    pub z: f64,
    pub e: f64,
}

enum Engine {
    Walk { x: f64, w: f64, e_prev: f64, eps_prev: f64 },
    Finite(Box<FiniteStepper>),
}

/// Streaming generator: `next()` yields `t = 0, 1, 2, …`.
pub struct Simulator {
    spec: ProcessSpec,
    weights: Vec<f64>,
    rng: ChaCha8Rng,
    engine: Engine,
}

impl Simulator {
    pub fn new(spec: &ProcessSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let engine = match spec.family {
            Family::FiniteProduct => {
                let (x, w) = spec.finite_models()?;
                Engine::Finite(Box::new(FiniteStepper::new(SplitProcess::FiniteProduct { x, w }, &mut rng)))
            }
            Family::MaLinked => {
                let e_prev = rng.sample(StandardNormal);
                let eps_prev = rng.sample(StandardNormal);
                Engine::Walk { x: spec.x0, w: 0.0, e_prev, eps_prev }
            }
            _ => Engine::Walk { x: spec.x0, w: 0.0, e_prev: 0.0, eps_prev: 0.0 },
        };
        Ok(Self { weights: spec.weights(), spec: spec.clone(), rng, engine })
    }

    pub fn spec(&self) -> &ProcessSpec {
        &self.spec
    }
}

impl Iterator for Simulator {
    type Item = Observation;

    fn next(&mut self) -> Option<Observation> {
        let spec = &self.spec;
        let (x, w, e) = match &mut self.engine {
            Engine::Finite(stepper) => {
                let (x, w) = stepper.advance(&mut self.rng);
                (x, w, f64::NAN)
            }
            Engine::Walk { x, w, e_prev, eps_prev } => {
                let e: f64 = self.rng.sample(StandardNormal);
                let eps: f64 = self.rng.sample(StandardNormal);
                *x += spec.sigma_e() * e;
                *w = match spec.family {
                    Family::Indep => spec.sigma_u() * eps,
                    Family::SharedInnovation => self.weights[0] * e + self.weights[1] * eps,
                    Family::Ar1Linked => {
                        let (a, b) = (spec.params.a.unwrap_or(0.0), spec.params.b.unwrap_or(0.0));
                        a * *w + b * spec.sigma_e() * e + spec.sigma_u() * eps
                    }
                    Family::MaLinked => {
                        self.weights[0] * e + self.weights[1] * *e_prev + self.weights[2] * *eps_prev
                    }
                    Family::FiniteProduct => unreachable!("finite systems use the finite engine"),
                };
                *e_prev = e;
                *eps_prev = eps;
                (*x, *w, e)
            }
        };
        Some(Observation { x, w, z: spec.f.eval(x) + w, e })
    }
}

/// `n + 1` observations `t = 0..=n`.
pub fn generate(spec: &ProcessSpec, n: usize, seed: u64) -> Result<Dataset> {
    let sim = Simulator::new(spec, seed)?;
    let mut out = Dataset::default();
    for obs in sim.take(n + 1) {
        out.x.push(obs.x);
        out.w.push(obs.w);
        out.z.push(obs.z);
        if spec.family != Family::FiniteProduct {
            out.e.push(obs.e);
        }
    }
    Ok(out)
}

fn require_ar1(spec: &ProcessSpec) -> Result<()> {
    if spec.family == Family::Ar1Linked {
        Ok(())
    } else {
        Err(Error::WrongFamily { expected: "AR1_LINKED", found: spec.family.name().to_string() })
    }
}

/// `θ_t = E(W_t X_t) = b σ_e² (1 − a^{t+1}) / (1 − a)`.
pub fn theoretical_cross_moment(spec: &ProcessSpec, t: usize) -> Result<f64> {
    require_ar1(spec)?;
    let a = spec.params.a.unwrap_or(0.0);
    let b = spec.params.b.unwrap_or(0.0);
    let s2 = spec.sigma_e().powi(2);
    Ok(b * s2 * (1.0 - a.powi(t as i32 + 1)) / (1.0 - a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrEstimate {
    pub t: usize,
    pub corr: f64,
    pub corr_se: f64,
    /// Sample mean of `W_t X_t` and its standard error.
    pub cross_moment: f64,
    pub cross_se: f64,
}

/// Monte Carlo `corr(X_t, W_t)` across `reps` independent paths.
pub fn empirical_corr_decay(
    spec: &ProcessSpec,
    ts: &[usize],
    reps: usize,
    base_seed: u64,
) -> Result<Vec<CorrEstimate>> {
    require_ar1(spec)?;
    spec.validate()?;
    if reps < 2 {
        return Err(Error::InvalidInput("need at least two replications".into()));
    }
    let horizon = ts.iter().copied().max().unwrap_or(0);
    let samples: Vec<Vec<(f64, f64)>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let sim = Simulator::new(spec, replication_seed(base_seed, r as u64)).expect("validated");
            let path: Vec<Observation> = sim.take(horizon + 1).collect();
            ts.iter().map(|&t| (path[t].x, path[t].w)).collect()
        })
        .collect();

    let n = reps as f64;
    Ok(ts
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let (mut sx, mut sw, mut sxx, mut sww, mut sxw, mut sxw2) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for s in &samples {
                let (x, w) = s[i];
                sx += x;
                sw += w;
                sxx += x * x;
                sww += w * w;
                sxw += x * w;
                sxw2 += (x * w).powi(2);
            }
            let cov = sxw / n - sx * sw / (n * n);
            let vx = sxx / n - (sx / n).powi(2);
            let vw = sww / n - (sw / n).powi(2);
            let corr = if vx > 0.0 && vw > 0.0 { cov / (vx * vw).sqrt() } else { 0.0 };
            let cross = sxw / n;
            let cross_var = (sxw2 / n - cross * cross) * n / (n - 1.0);
            CorrEstimate {
                t,
                corr,
                corr_se: (1.0 - corr * corr) / n.sqrt(),
                cross_moment: cross,
                cross_se: (cross_var / n).sqrt(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: Family) -> ProcessSpec {
        let mut params = Params::default();
        if family == Family::Ar1Linked {
            params.a = Some(0.5);
            params.b = Some(1.0);
        }
        ProcessSpec::new(family, Transfer::identity(), params)
    }

    #[test]
    fn z_is_f_of_x_plus_w() {
        for family in [Family::Indep, Family::SharedInnovation, Family::Ar1Linked, Family::MaLinked] {
            let mut s = spec(family);
            s.f = Transfer::Linear { a: 2.0, b: -5.0 };
            let d = generate(&s, 500, 3).unwrap();
            assert_eq!(d.len(), 501);
            for t in 0..d.len() {
                assert_eq!(d.z[t], 2.0 * d.x[t] - 5.0 + d.w[t]);
            }
        }
    }

    #[test]
    fn prefixes_agree_and_seeds_matter() {
        let s = spec(Family::SharedInnovation);
        let long = generate(&s, 200, 11).unwrap();
        let short = generate(&s, 50, 11).unwrap();
        assert_eq!(&long.x[..51], &short.x[..]);
        assert_eq!(&long.w[..51], &short.w[..]);
        assert_ne!(generate(&s, 50, 12).unwrap().x, short.x);
    }

    #[test]
    fn degenerate_noise() {
        let mut s = spec(Family::Indep);
        s.params.sigma_e = Some(0.0);
        let d = generate(&s, 100, 1).unwrap();
        assert!(d.x.iter().all(|&x| x == 0.0));
        for t in 0..d.len() {
            assert_eq!(d.z[t], d.w[t]);
        }
    }

    #[test]
    fn walk_increments_are_the_innovations() {
        let s = spec(Family::MaLinked);
        let d = generate(&s, 100, 5).unwrap();
        assert_eq!(d.x[0], d.e[0]);
        for t in 1..d.len() {
            assert!((d.x[t] - d.x[t - 1] - d.e[t]).abs() < 1e-12);
        }
        let c = (1.0f64 / 3.0).sqrt();
        for t in 1..d.len() {
            // W_t − c e_t − c e_{t−1} is c ε_{t−1}, which is independent of the e's
            let rest = d.w[t] - c * d.e[t] - c * d.e[t - 1];
            assert!(rest.is_finite());
        }
    }

    #[test]
    fn ar1_requires_stationary_coefficient() {
        let mut s = spec(Family::Ar1Linked);
        s.params.a = Some(1.0);
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn unknown_family_is_reported() {
        let text = r#"{"family":"BROWNIAN","f":{"kind":"LINEAR","a":1,"b":0}}"#;
        assert_eq!(ProcessSpec::from_json(text), Err(Error::UnknownProcessFamily("BROWNIAN".into())));
        let ok = r#"{"family":"INDEP","f":{"kind":"LINEAR","a":1,"b":-5},"params":{"sigma_u":1},"x0":0}"#;
        let s = ProcessSpec::from_json(ok).unwrap();
        assert_eq!(s.f.eval(7.0), 2.0);
    }

    #[test]
    fn cross_moment_closed_form() {
        let s = spec(Family::Ar1Linked);
        assert!((theoretical_cross_moment(&s, 10_000).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(theoretical_cross_moment(&s, 0).unwrap(), 1.0);
        let mut zero = s.clone();
        zero.params.b = Some(0.0);
        assert_eq!(theoretical_cross_moment(&zero, 17).unwrap(), 0.0);
        assert!(matches!(
            theoretical_cross_moment(&spec(Family::Indep), 3),
            Err(Error::WrongFamily { .. })
        ));
    }

    #[test]
    fn table_transfer_interpolates() {
        let f = Transfer::Table { xs: vec![0.0, 1.0, 3.0], ys: vec![0.0, 2.0, 0.0] };
        assert_eq!(f.eval(-1.0), 0.0);
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(2.0), 1.0);
        assert_eq!(f.eval(9.0), 0.0);
    }
}
