//! JSON problem files.
//!
//! A problem file is a single object:
//!
//! ```json
//! {
//!   "n": 1, "m": 1, "sigma2": 1.0,
//!   "A": [[1.1]], "Abar": [[0.2]], "B": [[0.4]], "Bbar": [[0.1]],
//!   "C": [[0.9]], "Cbar": [[0.5]], "D": [[0.8]], "Dbar": [[0.2]],
//!   "Q": [[2]], "Qbar": [[1]], "R": [[1]], "Rbar": [[1]],
//!   "horizon": "infinite",
//!   "initial_state": {"gaussian": {"mean": [1], "cov": [[2]]}}
//! }
//! ```
//!
//! Matrices are row-major nested arrays. `P_terminal` and `Pbar_terminal`
//! default to zero. `horizon` is a step count `N` (stages `0..=N`) or the
//! string `"infinite"`. Unknown keys are rejected.

use std::fmt;
use std::path::Path;

use mflqr_core::{CostSpec, InitialState, Matrix, MeanFieldSystem, StageWeights, Vector};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonSpec {
    Steps(usize),
    Infinite,
}

impl Serialize for HorizonSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Steps(n) => s.serialize_u64(*n as u64),
            Self::Infinite => s.serialize_str("infinite"),
        }
    }
}

impl<'de> Deserialize<'de> for HorizonSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = HorizonSpec;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a nonnegative integer or the string \"infinite\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<HorizonSpec, E> {
                usize::try_from(v)
                    .map(HorizonSpec::Steps)
                    .map_err(|_| E::custom("horizon too large"))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<HorizonSpec, E> {
                if v == "infinite" {
                    Ok(HorizonSpec::Infinite)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSpec {
    Deterministic(Vec<f64>),
    Gaussian(GaussianSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub cov: Rows,
}

/// On-disk form of a problem, field for field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n: usize,
    pub m: usize,
    pub sigma2: f64,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "Abar")]
    pub a_bar: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "Bbar")]
    pub b_bar: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "Cbar")]
    pub c_bar: Rows,
    #[serde(rename = "D")]
    pub d: Rows,
    #[serde(rename = "Dbar")]
    pub d_bar: Rows,
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "Qbar")]
    pub q_bar: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
    #[serde(rename = "Rbar")]
    pub r_bar: Rows,
    #[serde(
        rename = "P_terminal",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub p_terminal: Option<Rows>,
    #[serde(
        rename = "Pbar_terminal",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub p_bar_terminal: Option<Rows>,
    pub horizon: HorizonSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialSpec>,
}

/// A parsed and validated problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub system: MeanFieldSystem,
    pub cost: CostSpec,
    pub initial_state: Option<InitialState>,
    /// Hex SHA-256 of the source bytes.
    pub sha256: String,
}

impl Problem {
    pub fn horizon(&self) -> Option<usize> {
        self.cost.finite_horizon().ok()
    }

    /// The same system and stage weights posed over an infinite horizon.
    pub fn infinite_cost(&self) -> CostSpec {
        CostSpec::infinite(self.cost.weights.clone())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn to_matrix(name: &str, rows: &Rows, nrows: usize, ncols: usize) -> Result<Matrix> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        let found_cols = rows.first().map_or(0, Vec::len);
        return Err(CliError::Invalid(format!(
            "`{name}` must be {nrows}x{ncols}, found {}x{found_cols}{}",
            rows.len(),
            if rows.iter().any(|r| r.len() != found_cols) {
                " (ragged)"
            } else {
                ""
            }
        )));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn from_matrix(m: &Matrix) -> Rows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl ProblemFile {
    pub fn into_problem(self, sha256: String) -> Result<Problem> {
        let (n, m) = (self.n, self.m);
        let system = MeanFieldSystem::new(
            to_matrix("A", &self.a, n, n)?,
            to_matrix("Abar", &self.a_bar, n, n)?,
            to_matrix("B", &self.b, n, m)?,
            to_matrix("Bbar", &self.b_bar, n, m)?,
            to_matrix("C", &self.c, n, n)?,
            to_matrix("Cbar", &self.c_bar, n, n)?,
            to_matrix("D", &self.d, n, m)?,
            to_matrix("Dbar", &self.d_bar, n, m)?,
            self.sigma2,
        )?;
        let weights = StageWeights::new(
            to_matrix("Q", &self.q, n, n)?,
            to_matrix("Qbar", &self.q_bar, n, n)?,
            to_matrix("R", &self.r, m, m)?,
            to_matrix("Rbar", &self.r_bar, m, m)?,
        )?;
        let terminal = |name, rows: &Option<Rows>| match rows {
            Some(r) => to_matrix(name, r, n, n),
            None => Ok(Matrix::zeros(n, n)),
        };
        let p_t = terminal("P_terminal", &self.p_terminal)?;
        let p_bar_t = terminal("Pbar_terminal", &self.p_bar_terminal)?;
        let cost = match self.horizon {
            HorizonSpec::Steps(steps) => CostSpec::finite(weights, p_t, p_bar_t, steps)?,
            HorizonSpec::Infinite => {
                if self.p_terminal.is_some() || self.p_bar_terminal.is_some() {
                    return Err(CliError::Invalid(
                        "terminal weights are not allowed with an infinite horizon".into(),
                    ));
                }
                CostSpec::infinite(weights)
            }
        };
        cost.check_dims(n, m)?;
        let initial_state = match self.initial_state {
            None => None,
            Some(InitialSpec::Deterministic(x)) => {
                if x.len() != n {
                    return Err(CliError::Invalid(format!(
                        "`initial_state.deterministic` must have {n} entries"
                    )));
                }
                Some(InitialState::Deterministic(Vector::from_vec(x)))
            }
            Some(InitialSpec::Gaussian(g)) => {
                if g.mean.len() != n {
                    return Err(CliError::Invalid(format!(
                        "`initial_state.gaussian.mean` must have {n} entries"
                    )));
                }
                let cov = to_matrix("initial_state.gaussian.cov", &g.cov, n, n)?;
                Some(InitialState::gaussian(Vector::from_vec(g.mean), cov)?)
            }
        };
        Ok(Problem {
            system,
            cost,
            initial_state,
            sha256,
        })
    }
}

/// Parses problem JSON. `origin` names the source in diagnostics.
pub fn parse_problem(text: &str, origin: &str) -> Result<Problem> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| CliError::Parse {
        origin: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: strip_position(&e),
    })?;
    file.into_problem(sha256_hex(text.as_bytes()))
}

pub fn load_problem(path: &Path) -> Result<Problem> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_problem(&text, &path.display().to_string())
}

/// serde_json appends " at line L column C"; the caller prints its own.
pub(crate) fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}
