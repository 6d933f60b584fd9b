use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::linalg::{cholesky, symmetrized};
use super::{LqtError, LqtProblem};

/// Smallest eigenvalue accepted for the Schur-complemented state weight.
const CONVEXITY_TOLERANCE: f64 = -1e-10;

/// Maps controls of the transformed problem back to the original ones:
/// `u = ũ − feedback·x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlRecovery {
    pub feedback: Vec<DMatrix<f64>>,
    pub offset: Vec<DVector<f64>>,
}

impl ControlRecovery {
    pub fn apply(&self, i: usize, x: &DVector<f64>, u_tilde: &DVector<f64>) -> DVector<f64> {
        u_tilde - &self.feedback[i] * x + &self.offset[i]
    }

    pub fn apply_all(&self, states: &[DVector<f64>], controls: &[DVector<f64>]) -> Vec<DVector<f64>> {
        controls
            .iter()
            .enumerate()
            .map(|(i, u)| self.apply(i, &states[i], u))
            .collect()
    }
}

/// Removes cross terms and control references by the change of variables
/// `ũ = U⁻¹Mᵀ(Hx − r) + u − s`. The returned problem has the same optimal
/// states and the same cost for corresponding controls.
pub fn transform_general_cost(p: &LqtProblem) -> Result<(LqtProblem, ControlRecovery), LqtError> {
    p.validate()?;
    let steps = p.steps();
    let n = p.state_dim();
    let mut out = p.clone();
    out.cross_weight = None;
    out.control_reference = None;
    let mut recovery = ControlRecovery {
        feedback: Vec::with_capacity(steps),
        offset: Vec::with_capacity(steps),
    };
    for i in 0..steps {
        let nu = p.control_dim(i);
        let l = &p.input[i];
        let mut offset = p
            .control_reference
            .as_ref()
            .map_or_else(|| DVector::zeros(nu), |s| s[i].clone());
        let mut feedback = DMatrix::zeros(nu, n);
        if let Some(m) = &p.cross_weight {
            let m = &m[i];
            let chol = cholesky(&p.control_weight[i]).ok_or(LqtError::Singular {
                step: p.start + i,
                what: "control weight",
            })?;
            let gain = chol.solve(&m.transpose());
            feedback = &gain * &p.output[i];
            offset += &gain * &p.reference[i];
            let x_tilde = symmetrized(&p.state_weight[i] - m * &gain);
            if x_tilde.nrows() > 0 {
                let smallest = SymmetricEigen::new(x_tilde.clone()).eigenvalues.min();
                if smallest < CONVEXITY_TOLERANCE {
                    return Err(LqtError::NotConvex {
                        step: p.start + i,
                        eigenvalue: smallest,
                    });
                }
            }
            out.state_weight[i] = x_tilde;
        }
        out.dynamics[i] = &p.dynamics[i] - l * &feedback;
        out.offset[i] = &p.offset[i] + l * &offset;
        recovery.feedback.push(feedback);
        recovery.offset.push(offset);
    }
    Ok((out, recovery))
}
