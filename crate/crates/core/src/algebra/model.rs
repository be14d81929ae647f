use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Finite-state transition matrix `P` with an atom `(s, ν)`, `P ≥ s⊗ν`.
///
/// Construction validates every invariant, so a value of this type is always
/// row-stochastic, minorized and irreducible.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMarkovModel {
    states: Vec<String>,
    p: DMatrix<f64>,
    s: DVector<f64>,
    nu: DVector<f64>,
}

impl FiniteMarkovModel {
    pub fn new(
        states: Vec<String>,
        p_rows: Vec<Vec<f64>>,
        s: Vec<f64>,
        nu: Vec<f64>,
    ) -> Result<Self> {
        let d = p_rows.len();
        if d == 0 {
            return Err(Error::InvalidInput("empty state space".into()));
        }
        for (what, len) in [("states", states.len()), ("s", s.len()), ("nu", nu.len())] {
            if len != d {
                return Err(Error::DimensionMismatch { what, expected: d, found: len });
            }
        }
        if let Some(row) = p_rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { what: "P row", expected: d, found: row.len() });
        }
        let flat: Vec<f64> = p_rows.into_iter().flatten().collect();
        let model = Self {
            states,
            p: DMatrix::from_row_slice(d, d, &flat),
            s: DVector::from_vec(s),
            nu: DVector::from_vec(nu),
        };
        validate_atom(&model)?;
        Ok(model)
    }

    /// Model with labels `"0".."d-1"`.
    pub fn unlabeled(p_rows: Vec<Vec<f64>>, s: Vec<f64>, nu: Vec<f64>) -> Result<Self> {
        let states = (0..p_rows.len()).map(|i| i.to_string()).collect();
        Self::new(states, p_rows, s, nu)
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn s(&self) -> &DVector<f64> {
        &self.s
    }

    pub fn nu(&self) -> &DVector<f64> {
        &self.nu
    }

    pub fn to_file(&self) -> ChainFile {
        ChainFile {
            states: self.states.clone(),
            p: self.p.row_iter().map(|r| r.iter().copied().collect()).collect(),
            s: self.s.iter().copied().collect(),
            nu: self.nu.iter().copied().collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ChainFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("chain JSON: {e}")))?;
        file.into_model()
    }
}

/// Checks stochasticity, the atom's ranges, minorization and irreducibility.
pub fn validate_atom(model: &FiniteMarkovModel) -> Result<()> {
    let d = model.dim();
    for i in 0..d {
        let row = model.p.row(i);
        let sum: f64 = row.iter().sum();
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NotStochastic { row: i });
        }
    }
    let nu_sum: f64 = model.nu.iter().sum();
    if model.nu.iter().any(|v| !v.is_finite() || *v < 0.0) || (nu_sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidMeasure);
    }
    if let Some((index, &value)) = model
        .s
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
    {
        return Err(Error::InvalidSmallFunction { index, value });
    }
    for i in 0..d {
        for j in 0..d {
            let deficit = model.s[i] * model.nu[j] - model.p[(i, j)];
            if deficit > STOCHASTIC_TOL {
                return Err(Error::MinorizationViolated { i, j, deficit });
            }
        }
    }
    let components = strongly_connected_components(&model.p);
    if components.len() > 1 {
        return Err(Error::NotIrreducible { components });
    }
    Ok(())
}

/// Mutual-reachability classes of the transition graph, each sorted, ordered
/// by smallest member.
pub fn strongly_connected_components(p: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let d = p.nrows();
    // reach[i][j]: j reachable from i in zero or more steps
    let mut reach = vec![vec![false; d]; d];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
        for j in 0..d {
            if p[(i, j)] > 0.0 {
                row[j] = true;
            }
        }
    }
    for k in 0..d {
        for i in 0..d {
            if reach[i][k] {
                for j in 0..d {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut assigned = vec![false; d];
    let mut components = Vec::new();
    for i in 0..d {
        if assigned[i] {
            continue;
        }
        let comp: Vec<usize> = (0..d).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &comp {
            assigned[j] = true;
        }
        components.push(comp);
    }
    components
}

/// On-disk chain description. Reals may be JSON numbers or decimal strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainFile {
    pub states: Vec<String>,
    #[serde(rename = "P", deserialize_with = "de_matrix")]
    pub p: Vec<Vec<f64>>,
    #[serde(deserialize_with = "de_vector")]
    pub s: Vec<f64>,
    #[serde(deserialize_with = "de_vector")]
    pub nu: Vec<f64>,
}

impl ChainFile {
    pub fn into_model(self) -> Result<FiniteMarkovModel> {
        FiniteMarkovModel::new(self.states, self.p, self.s, self.nu)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Real {
    Number(f64),
    Text(String),
}

impl Real {
    fn value<E: serde::de::Error>(self) -> std::result::Result<f64, E> {
        match self {
            Real::Number(v) => Ok(v),
            Real::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| E::custom(format!("not a decimal number: {s:?}"))),
        }
    }
}

fn de_vector<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    Vec::<Real>::deserialize(d)?.into_iter().map(Real::value).collect()
}

fn de_matrix<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<f64>>, D::Error> {
    Vec::<Vec<Real>>::deserialize(d)?
        .into_iter()
        .map(|row| row.into_iter().map(Real::value).collect())
        .collect()
}
