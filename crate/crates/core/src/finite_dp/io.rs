//! JSON import/export of [`FiniteProblem`].
//!
//! ```json
//! {
//!   "D_x": 2, "D_u": 2, "S": 0, "T": 1,
//!   "f":   [[[1, 2], [1, 2]]],
//!   "ell": [[[0, 5], [3, "inf"]]],
//!   "ell_T": [7, 9],
//!   "x_S": 1
//! }
//! ```
//!
//! `f` and `ell` are indexed `[step][state][control]`. State and control
//! indices are 1-based in the file. Infinite costs are written as `"inf"`.

use serde::{Deserialize, Serialize};

use super::{DpError, FiniteProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum JsonCost {
    Number(f64),
    Text(InfTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum InfTag {
    #[serde(rename = "inf", alias = "Infinity", alias = "+inf")]
    Inf,
}

impl From<f64> for JsonCost {
    fn from(c: f64) -> Self {
        if c == f64::INFINITY {
            JsonCost::Text(InfTag::Inf)
        } else {
            JsonCost::Number(c)
        }
    }
}

impl From<JsonCost> for f64 {
    fn from(c: JsonCost) -> Self {
        match c {
            JsonCost::Number(x) => x,
            JsonCost::Text(InfTag::Inf) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FiniteProblemFile {
    #[serde(rename = "D_x")]
    n_states: usize,
    #[serde(rename = "D_u")]
    n_controls: usize,
    #[serde(rename = "S")]
    start: usize,
    #[serde(rename = "T")]
    end: usize,
    f: Vec<Vec<Vec<usize>>>,
    ell: Vec<Vec<Vec<JsonCost>>>,
    #[serde(rename = "ell_T")]
    terminal: Vec<JsonCost>,
    #[serde(rename = "x_S")]
    initial_state: usize,
}

fn one_based(i: usize, what: &str) -> Result<usize, DpError> {
    i.checked_sub(1)
        .ok_or_else(|| DpError::InvalidProblem(format!("{what} index 0 (indices are 1-based)")))
}

pub fn to_json(p: &FiniteProblem) -> String {
    let file = FiniteProblemFile {
        n_states: p.n_states(),
        n_controls: p.n_controls(),
        start: p.start(),
        end: p.end(),
        f: p.next_tables()
            .iter()
            .map(|t| t.iter().map(|row| row.iter().map(|&y| y + 1).collect()).collect())
            .collect(),
        ell: p
            .cost_tables()
            .iter()
            .map(|t| t.iter().map(|row| row.iter().map(|&c| c.into()).collect()).collect())
            .collect(),
        terminal: p.terminal_cost().iter().map(|&c| c.into()).collect(),
        initial_state: p.initial_state() + 1,
    };
    serde_json::to_string_pretty(&file).expect("finite problem serializes")
}

pub fn from_json(text: &str) -> Result<FiniteProblem, DpError> {
    let file: FiniteProblemFile = serde_json::from_str(text).map_err(|e| DpError::InvalidProblem(e.to_string()))?;
    let next = file
        .f
        .into_iter()
        .map(|t| {
            t.into_iter()
                .map(|row| row.into_iter().map(|y| one_based(y, "state")).collect())
                .collect()
        })
        .collect::<Result<Vec<Vec<Vec<usize>>>, DpError>>()?;
    let cost = file
        .ell
        .into_iter()
        .map(|t| {
            t.into_iter()
                .map(|row| row.into_iter().map(f64::from).collect())
                .collect()
        })
        .collect();
    FiniteProblem::new(
        file.n_states,
        file.n_controls,
        file.start,
        file.end,
        next,
        cost,
        file.terminal.into_iter().map(f64::from).collect(),
        one_based(file.initial_state, "initial state")?,
    )
}
