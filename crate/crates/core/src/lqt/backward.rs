use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::scan::{try_par_scan, ScanDirection, ScanStats};

use super::element::{combine_lqt, make_lqt_elements, LqtElement};
use super::linalg::{cholesky, symmetrize, symmetrized};
use super::{LqtError, LqtProblem};

/// Value function `V_k(x) = ½xᵀSx − vᵀx` up to an additive constant.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadValue {
    pub s: DMatrix<f64>,
    pub v: DVector<f64>,
}

impl QuadValue {
    /// `V(x)` without the constant.
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.s * x)) - self.v.dot(x)
    }
}

/// Feedback, value and offset gains of one step's control law.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    pub k: DMatrix<f64>,
    pub kv: DMatrix<f64>,
    pub kc: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct BackwardPass {
    /// `values[i]` belongs to step `S + i`; the last one is the terminal value.
    pub values: Vec<QuadValue>,
    pub gains: Vec<Gains>,
    pub stats: ScanStats,
}

/// Gains of transition `i` given the value `next` of the following step.
pub fn gains_at(p: &LqtProblem, i: usize, next: &QuadValue) -> Result<Gains, LqtError> {
    let l = &p.input[i];
    let lts = l.transpose() * &next.s;
    let mut normal = &lts * l + &p.control_weight[i];
    symmetrize(&mut normal);
    let chol = cholesky(&normal).ok_or(LqtError::Singular {
        step: p.start + i,
        what: "LᵀS'L + U",
    })?;
    let n = p.state_dim();
    let nu = l.ncols();
    let mut rhs = DMatrix::zeros(nu, 3 * n);
    rhs.columns_mut(0, n).copy_from(&(&lts * &p.dynamics[i]));
    rhs.columns_mut(n, n).copy_from(&l.transpose());
    rhs.columns_mut(2 * n, n).copy_from(&lts);
    let sol = chol.solve(&rhs);
    Ok(Gains {
        k: sol.columns(0, n).into_owned(),
        kv: sol.columns(n, n).into_owned(),
        kc: sol.columns(2 * n, n).into_owned(),
    })
}

/// Optimal control `u = −K x + K^v v_{k+1} − K^c c_k`.
pub fn control(x: &DVector<f64>, gains: &Gains, v_next: &DVector<f64>, offset: &DVector<f64>) -> DVector<f64> {
    &gains.kv * v_next - &gains.k * x - &gains.kc * offset
}

fn terminal_value(p: &LqtProblem) -> QuadValue {
    let t = p.steps();
    let htx = p.output[t].transpose() * &p.state_weight[t];
    QuadValue {
        s: symmetrized(&htx * &p.output[t]),
        v: &htx * &p.reference[t],
    }
}

/// Sequential Riccati recursion.
pub fn riccati_backward(p: &LqtProblem) -> Result<BackwardPass, LqtError> {
    p.validate()?;
    if p.has_general_cost() {
        return Err(LqtError::GeneralCost);
    }
    let steps = p.steps();
    let mut values = vec![terminal_value(p)];
    let mut gains = Vec::with_capacity(steps);
    for i in (0..steps).rev() {
        let next = values.last().expect("terminal value pushed");
        let g = gains_at(p, i, next)?;
        let f = &p.dynamics[i];
        let closed = f - &p.input[i] * &g.k;
        let htx = p.output[i].transpose() * &p.state_weight[i];
        let mut s = f.transpose() * &next.s * &closed + &htx * &p.output[i];
        symmetrize(&mut s);
        let v = closed.transpose() * (&next.v - &next.s * &p.offset[i]) + &htx * &p.reference[i];
        values.push(QuadValue { s, v });
        gains.push(g);
    }
    values.reverse();
    gains.reverse();
    let stats = ScanStats {
        combine_count: steps,
        combine_depth: steps,
    };
    Ok(BackwardPass { values, gains, stats })
}

/// Backward pass as a reverse parallel scan over [`LqtElement`]s.
pub fn parallel_backward(p: &LqtProblem) -> Result<BackwardPass, LqtError> {
    let elements = make_lqt_elements(p)?;
    let identity = LqtElement::identity(p.state_dim());
    let (suffixes, stats) = try_par_scan(&elements, combine_lqt, &identity, ScanDirection::Reverse)?;
    let values: Vec<QuadValue> = suffixes.into_iter().map(|e| QuadValue { s: e.j, v: e.eta }).collect();
    let gains = (0..p.steps())
        .into_par_iter()
        .map(|i| gains_at(p, i, &values[i + 1]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BackwardPass { values, gains, stats })
}
