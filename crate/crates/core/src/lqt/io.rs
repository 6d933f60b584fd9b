//! JSON import/export of [`LqtProblem`] and CSV trajectory output.
//!
//! Matrices are written as `{"rows": r, "cols": c, "data": [...]}` in
//! row-major order, vectors as plain arrays:
//!
//! ```json
//! {
//!   "S": 0, "T": 1, "x_S": [1.0],
//!   "F": [{"rows": 1, "cols": 1, "data": [1.0]}],
//!   "c": [[0.0]],
//!   "L": [{"rows": 1, "cols": 1, "data": [1.0]}],
//!   "H": [{"rows": 1, "cols": 1, "data": [1.0]}, {"rows": 1, "cols": 1, "data": [1.0]}],
//!   "X": [{"rows": 1, "cols": 1, "data": [1.0]}, {"rows": 1, "cols": 1, "data": [1.0]}],
//!   "r": [[0.0], [0.0]],
//!   "U": [{"rows": 1, "cols": 1, "data": [1.0]}]
//! }
//! ```
//!
//! `H`, `X` and `r` have one more entry than the per-transition arrays; the
//! last is the terminal cost. `M` and `s` are optional.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{LqtError, LqtProblem};

#[derive(Debug, Serialize, Deserialize)]
struct MatrixFile {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixFile {
    fn from(m: &DMatrix<f64>) -> Self {
        MatrixFile {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().iter().copied().collect(),
        }
    }
}

impl TryFrom<MatrixFile> for DMatrix<f64> {
    type Error = LqtError;

    fn try_from(m: MatrixFile) -> Result<Self, LqtError> {
        if m.data.len() != m.rows * m.cols {
            return Err(LqtError::InvalidProblem(format!(
                "matrix declared {}x{} has {} entries",
                m.rows,
                m.cols,
                m.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(m.rows, m.cols, &m.data))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LqtProblemFile {
    #[serde(rename = "S")]
    start: usize,
    #[serde(rename = "T")]
    end: usize,
    #[serde(rename = "x_S")]
    initial_state: Vec<f64>,
    #[serde(rename = "F")]
    dynamics: Vec<MatrixFile>,
    c: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    input: Vec<MatrixFile>,
    #[serde(rename = "H")]
    output: Vec<MatrixFile>,
    #[serde(rename = "X")]
    state_weight: Vec<MatrixFile>,
    r: Vec<Vec<f64>>,
    #[serde(rename = "U")]
    control_weight: Vec<MatrixFile>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    cross_weight: Option<Vec<MatrixFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<Vec<Vec<f64>>>,
}

fn matrices(ms: &[DMatrix<f64>]) -> Vec<MatrixFile> {
    ms.iter().map(MatrixFile::from).collect()
}

fn vectors(vs: &[DVector<f64>]) -> Vec<Vec<f64>> {
    vs.iter().map(|v| v.iter().copied().collect()).collect()
}

fn read_matrices(ms: Vec<MatrixFile>) -> Result<Vec<DMatrix<f64>>, LqtError> {
    ms.into_iter().map(DMatrix::try_from).collect()
}

fn read_vectors(vs: Vec<Vec<f64>>) -> Vec<DVector<f64>> {
    vs.into_iter().map(DVector::from_vec).collect()
}

pub fn to_json(p: &LqtProblem) -> String {
    let file = LqtProblemFile {
        start: p.start,
        end: p.end(),
        initial_state: p.initial_state.iter().copied().collect(),
        dynamics: matrices(&p.dynamics),
        c: vectors(&p.offset),
        input: matrices(&p.input),
        output: matrices(&p.output),
        state_weight: matrices(&p.state_weight),
        r: vectors(&p.reference),
        control_weight: matrices(&p.control_weight),
        cross_weight: p.cross_weight.as_deref().map(matrices),
        s: p.control_reference.as_deref().map(vectors),
    };
    serde_json::to_string_pretty(&file).expect("problem serializes")
}

pub fn from_json(text: &str) -> Result<LqtProblem, LqtError> {
    let file: LqtProblemFile = serde_json::from_str(text).map_err(|e| LqtError::InvalidProblem(e.to_string()))?;
    if file.end < file.start || file.end - file.start != file.dynamics.len() {
        return Err(LqtError::InvalidProblem(format!(
            "horizon {}..{} does not match {} dynamics matrices",
            file.start,
            file.end,
            file.dynamics.len()
        )));
    }
    let p = LqtProblem {
        start: file.start,
        initial_state: DVector::from_vec(file.initial_state),
        dynamics: read_matrices(file.dynamics)?,
        offset: read_vectors(file.c),
        input: read_matrices(file.input)?,
        output: read_matrices(file.output)?,
        state_weight: read_matrices(file.state_weight)?,
        reference: read_vectors(file.r),
        control_weight: read_matrices(file.control_weight)?,
        cross_weight: file.cross_weight.map(read_matrices).transpose()?,
        control_reference: file.s.map(read_vectors),
    };
    p.validate()?;
    Ok(p)
}

/// Writes one row per step with columns `k, x_1..x_nx, u_1..u_nu`. The
/// terminal row has empty control cells.
pub fn write_trajectory_csv<W: Write>(
    out: W,
    start: usize,
    states: &[DVector<f64>],
    controls: &[DVector<f64>],
) -> csv::Result<()> {
    let nx = states.first().map_or(0, |x| x.len());
    let nu = controls.iter().map(|u| u.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["k".to_string()];
    header.extend((1..=nx).map(|i| format!("x_{i}")));
    header.extend((1..=nu).map(|i| format!("u_{i}")));
    w.write_record(&header)?;
    for (i, x) in states.iter().enumerate() {
        let mut row = vec![(start + i).to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        match controls.get(i) {
            Some(u) => row.extend((0..nu).map(|j| u.get(j).map_or(String::new(), |v| v.to_string()))),
            None => row.extend(std::iter::repeat_n(String::new(), nu)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
      "S": 0, "T": 1, "x_S": [1.0],
      "F": [{"rows": 1, "cols": 1, "data": [1.0]}],
      "c": [[0.0]],
      "L": [{"rows": 1, "cols": 1, "data": [1.0]}],
      "H": [{"rows": 1, "cols": 1, "data": [1.0]}, {"rows": 1, "cols": 1, "data": [1.0]}],
      "X": [{"rows": 1, "cols": 1, "data": [1.0]}, {"rows": 1, "cols": 1, "data": [1.0]}],
      "r": [[0.0], [0.0]],
      "U": [{"rows": 1, "cols": 1, "data": [1.0]}]
    }"#;

    #[test]
    fn round_trip() {
        let p = from_json(DOC).unwrap();
        assert_eq!(p.steps(), 1);
        assert!(!p.has_general_cost());
        assert_eq!(from_json(&to_json(&p)).unwrap(), p);
    }

    #[test]
    fn matrices_are_row_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let f = MatrixFile::from(&m);
        assert_eq!(f.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(DMatrix::try_from(f).unwrap(), m);
    }

    #[test]
    fn rejects_bad_shapes() {
        let bad = DOC.replace("\"T\": 1", "\"T\": 2");
        assert!(from_json(&bad).is_err());
        let bad = DOC.replace(r#""c": [[0.0]]"#, r#""c": [[0.0, 1.0]]"#);
        assert!(from_json(&bad).is_err());
    }

    #[test]
    fn csv_layout() {
        let states = vec![DVector::from_vec(vec![1.0, 2.0]), DVector::from_vec(vec![3.0, 4.0])];
        let controls = vec![DVector::from_vec(vec![0.5])];
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, 0, &states, &controls).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "k,x_1,x_2,u_1\n0,1,2,0.5\n1,3,4,\n");
    }
}
