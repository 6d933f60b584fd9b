//! Linear quadratic tracking.
//!
//! A problem steers the output `H_k x_k` along a reference `r_k` under
//! affine dynamics `x_{k+1} = F_k x_k + c_k + L_k u_k`, minimizing
//!
//! ```text
//! ½(H_T x_T − r_T)ᵀ X_T (H_T x_T − r_T)
//!   + Σ_k ½(H_k x_k − r_k)ᵀ X_k (H_k x_k − r_k) + (H_k x_k − r_k)ᵀ M_k (u_k − s_k)
//!        + ½(u_k − s_k)ᵀ U_k (u_k − s_k)
//! ```
//!
//! The backward pass is available as a sequential Riccati recursion and as a
//! reverse scan over [`LqtElement`]s. Trajectories are recovered either by a
//! sequential rollout, by composing closed-loop [`AffineMap`]s, or by a
//! forward scan over elements.

mod backward;
mod condense;
mod element;
mod general;
pub mod io;
mod kkt;
pub mod linalg;
pub mod random;
mod trajectory;


use nalgebra::{DMatrix, DVector};

use crate::scan::{ScanError, ScanStats};

pub use backward::{control, gains_at, parallel_backward, riccati_backward, BackwardPass, Gains, QuadValue};
pub use condense::{condense, CondenseMap};
pub use element::{combine_lqt, make_lqt_elements, LqtElement};
pub use general::{transform_general_cost, ControlRecovery};
pub use kkt::{kkt_oracle, KktSolution, KKT_MAX_VARIABLES};
pub use trajectory::{rollout, traj_method1, traj_method2, AffineMap, Trajectory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LqtError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("{what} numerically singular at step {step}")]
    Singular { step: usize, what: &'static str },
    #[error("ill-conditioned combine (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },
    #[error("cost not jointly convex after Schur complement at step {step} (eigenvalue {eigenvalue:.3e})")]
    NotConvex { step: usize, eigenvalue: f64 },
    #[error("problem has cross terms or control references; transform it first")]
    GeneralCost,
    #[error("horizon {steps} is not divisible by block size {block}")]
    NotDivisible { steps: usize, block: usize },
    #[error("KKT system has {variables} variables, above the limit of {limit}")]
    TooLarge { variables: usize, limit: usize },
    #[error("KKT matrix is singular")]
    KktSingular,
}

impl From<ScanError<LqtError>> for LqtError {
    fn from(e: ScanError<LqtError>) -> Self {
        match e {
            ScanError::Empty => LqtError::InvalidProblem("empty horizon".into()),
            ScanError::Combine(e) => e,
        }
    }
}

/// A tracking problem over steps `start..=end`.
///
/// Per-step vectors are indexed by `k - start`. `dynamics`, `offset`,
/// `input`, `control_weight` (and the optional cross terms) have one entry
/// per transition; `output`, `state_weight` and `reference` have one more,
/// the last being the terminal cost.
#[derive(Debug, Clone, PartialEq)]
pub struct LqtProblem {
    pub start: usize,
    pub initial_state: DVector<f64>,
    pub dynamics: Vec<DMatrix<f64>>,
    pub offset: Vec<DVector<f64>>,
    pub input: Vec<DMatrix<f64>>,
    pub output: Vec<DMatrix<f64>>,
    pub state_weight: Vec<DMatrix<f64>>,
    pub reference: Vec<DVector<f64>>,
    pub control_weight: Vec<DMatrix<f64>>,
    pub cross_weight: Option<Vec<DMatrix<f64>>>,
    pub control_reference: Option<Vec<DVector<f64>>>,
}

impl LqtProblem {
    /// Number of transitions `T - S`.
    pub fn steps(&self) -> usize {
        self.dynamics.len()
    }

    pub fn end(&self) -> usize {
        self.start + self.steps()
    }

    pub fn state_dim(&self) -> usize {
        self.initial_state.len()
    }

    pub fn control_dim(&self, i: usize) -> usize {
        self.input[i].ncols()
    }

    pub fn has_general_cost(&self) -> bool {
        self.cross_weight.is_some() || self.control_reference.is_some()
    }

    /// Checks dimensions and symmetry of the weights.
    pub fn validate(&self) -> Result<(), LqtError> {
        let n = self.state_dim();
        let steps = self.steps();
        let bad = |msg: String| Err(LqtError::InvalidProblem(msg));
        if n == 0 {
            return bad("state dimension is zero".into());
        }
        for (name, len, want) in [
            ("offset", self.offset.len(), steps),
            ("input", self.input.len(), steps),
            ("control_weight", self.control_weight.len(), steps),
            ("output", self.output.len(), steps + 1),
            ("state_weight", self.state_weight.len(), steps + 1),
            ("reference", self.reference.len(), steps + 1),
        ] {
            if len != want {
                return bad(format!("{name} has {len} entries, expected {want}"));
            }
        }
        if let Some(m) = &self.cross_weight {
            if m.len() != steps {
                return bad(format!("cross_weight has {} entries, expected {steps}", m.len()));
            }
        }
        if let Some(s) = &self.control_reference {
            if s.len() != steps {
                return bad(format!("control_reference has {} entries, expected {steps}", s.len()));
            }
        }
        for i in 0..=steps {
            let k = self.start + i;
            let h = &self.output[i];
            let nr = h.nrows();
            if h.ncols() != n {
                return bad(format!(
                    "output map at step {k} has {} columns, expected {n}",
                    h.ncols()
                ));
            }
            if self.state_weight[i].shape() != (nr, nr) || self.reference[i].len() != nr {
                return bad(format!(
                    "state weight or reference at step {k} does not match output size {nr}"
                ));
            }
            if !is_symmetric(&self.state_weight[i]) {
                return bad(format!("state weight at step {k} is not symmetric"));
            }
            if i == steps {
                break;
            }
            if self.dynamics[i].shape() != (n, n) || self.offset[i].len() != n {
                return bad(format!("dynamics or offset at step {k} is not {n}-dimensional"));
            }
            let nu = self.input[i].ncols();
            if self.input[i].nrows() != n || nu == 0 {
                return bad(format!(
                    "input matrix at step {k} has shape {:?}",
                    self.input[i].shape()
                ));
            }
            if self.control_weight[i].shape() != (nu, nu) || !is_symmetric(&self.control_weight[i]) {
                return bad(format!(
                    "control weight at step {k} is not a symmetric {nu}x{nu} matrix"
                ));
            }
            if let Some(m) = &self.cross_weight {
                if m[i].shape() != (nr, nu) {
                    return bad(format!("cross weight at step {k} has shape {:?}", m[i].shape()));
                }
            }
            if let Some(s) = &self.control_reference {
                if s[i].len() != nu {
                    return bad(format!("control reference at step {k} has length {}", s[i].len()));
                }
            }
        }
        Ok(())
    }

    /// Same problem with every cost weight multiplied by `factor`.
    pub fn scale_costs(&self, factor: f64) -> LqtProblem {
        let mut p = self.clone();
        p.state_weight.iter_mut().for_each(|x| *x *= factor);
        p.control_weight.iter_mut().for_each(|u| *u *= factor);
        if let Some(m) = &mut p.cross_weight {
            m.iter_mut().for_each(|m| *m *= factor);
        }
        p
    }

    pub fn with_initial_state(&self, x: DVector<f64>) -> LqtProblem {
        LqtProblem {
            initial_state: x,
            ..self.clone()
        }
    }

    /// Objective value of a state/control sequence (states include `x_S`
    /// and `x_T`). Dynamics are not checked.
    pub fn cost(&self, states: &[DVector<f64>], controls: &[DVector<f64>]) -> f64 {
        assert_eq!(states.len(), self.steps() + 1);
        assert_eq!(controls.len(), self.steps());
        let mut total = 0.0;
        for (i, x) in states.iter().enumerate() {
            let e = &self.output[i] * x - &self.reference[i];
            total += 0.5 * e.dot(&(&self.state_weight[i] * &e));
            if i == self.steps() {
                break;
            }
            let mut w = controls[i].clone();
            if let Some(s) = &self.control_reference {
                w -= &s[i];
            }
            total += 0.5 * w.dot(&(&self.control_weight[i] * &w));
            if let Some(m) = &self.cross_weight {
                total += e.dot(&(&m[i] * &w));
            }
        }
        total
    }

    /// States reached by applying `controls` from `x_S`.
    pub fn simulate(&self, controls: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let mut states = Vec::with_capacity(self.steps() + 1);
        states.push(self.initial_state.clone());
        for (i, u) in controls.iter().enumerate() {
            let x = &self.dynamics[i] * &states[i] + &self.offset[i] + &self.input[i] * u;
            states.push(x);
        }
        states
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= 1e-12 * scale
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    Sequential,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrajMethod {
    /// Forward scan of closed-loop affine maps.
    #[default]
    Compose,
    /// Forward scan of elements combined with the backward values.
    ForwardValue,
}

#[derive(Debug, Clone)]
pub struct LqtSolution {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub values: Vec<QuadValue>,
    /// Combined statistics of the backward and forward passes.
    pub stats: ScanStats,
}

/// Solves `p` end to end. Problems with cross terms or control references
/// are transformed first and their controls mapped back. The trajectory
/// method is ignored by the sequential backend, which always rolls out.
pub fn solve(p: &LqtProblem, backend: Backend, method: TrajMethod) -> Result<LqtSolution, LqtError> {
    if p.has_general_cost() {
        let (std, recovery) = transform_general_cost(p)?;
        let mut sol = solve(&std, backend, method)?;
        sol.controls = recovery.apply_all(&sol.states, &sol.controls);
        return Ok(sol);
    }
    let pass = match backend {
        Backend::Sequential => riccati_backward(p)?,
        Backend::Parallel => parallel_backward(p)?,
    };
    let traj = match (backend, method) {
        (Backend::Sequential, _) => rollout(p, &pass.gains, &pass.values),
        (Backend::Parallel, TrajMethod::Compose) => traj_method1(p, &pass.gains, &pass.values),
        (Backend::Parallel, TrajMethod::ForwardValue) => traj_method2(p, &pass.gains, &pass.values)?,
    };
    Ok(LqtSolution {
        states: traj.states,
        controls: traj.controls,
        values: pass.values,
        stats: pass.stats.then(traj.stats),
    })
}

/// Solves `p` after condensing it into blocks of `block` steps and expands
/// the result back to every step.
pub fn solve_condensed(
    p: &LqtProblem,
    block: usize,
    backend: Backend,
    method: TrajMethod,
) -> Result<LqtSolution, LqtError> {
    let (condensed, map) = condense(p, block)?;
    let sol = solve(&condensed, backend, method)?;
    let (states, controls) = map.expand(&sol.states, &sol.controls);
    Ok(LqtSolution {
        states,
        controls,
        values: sol.values,
        stats: sol.stats,
    })
}
