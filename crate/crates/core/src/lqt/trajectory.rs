use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::scan::{par_scan, try_par_scan, ScanDirection, ScanStats};

use super::backward::{control, Gains, QuadValue};
use super::element::{combine_lqt, make_lqt_elements, LqtElement};
use super::linalg::{Factored, MAX_CONDITION};
use super::{LqtError, LqtProblem};

/// Closed-loop transition `x ↦ ft·x + ct`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub ft: DMatrix<f64>,
    pub ct: DVector<f64>,
}

impl AffineMap {
    pub fn identity(n: usize) -> AffineMap {
        AffineMap {
            ft: DMatrix::identity(n, n),
            ct: DVector::zeros(n),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.ft * x + &self.ct
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &AffineMap) -> AffineMap {
        AffineMap {
            ft: &next.ft * &self.ft,
            ct: &next.ft * &self.ct + &next.ct,
        }
    }
}

/// Optimal states `x_S..=x_T` and controls `u_S..u_{T−1}`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub stats: ScanStats,
}

fn closed_loop(p: &LqtProblem, i: usize, g: &Gains, next: &QuadValue) -> AffineMap {
    let l = &p.input[i];
    let c = &p.offset[i];
    AffineMap {
        ft: &p.dynamics[i] - l * &g.k,
        ct: c + l * (&g.kv * &next.v - &g.kc * c),
    }
}

fn controls_along(p: &LqtProblem, gains: &[Gains], values: &[QuadValue], states: &[DVector<f64>]) -> Vec<DVector<f64>> {
    (0..p.steps())
        .into_par_iter()
        .map(|i| control(&states[i], &gains[i], &values[i + 1].v, &p.offset[i]))
        .collect()
}

/// Sequential forward simulation under the optimal control law.
pub fn rollout(p: &LqtProblem, gains: &[Gains], values: &[QuadValue]) -> Trajectory {
    let steps = p.steps();
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps);
    states.push(p.initial_state.clone());
    for i in 0..steps {
        let u = control(&states[i], &gains[i], &values[i + 1].v, &p.offset[i]);
        let x = &p.dynamics[i] * &states[i] + &p.offset[i] + &p.input[i] * &u;
        states.push(x);
        controls.push(u);
    }
    let stats = ScanStats {
        combine_count: steps.saturating_sub(1),
        combine_depth: steps.saturating_sub(1),
    };
    Trajectory {
        states,
        controls,
        stats,
    }
}

/// Trajectory by a forward scan of closed-loop maps. The first map is
/// replaced by the constant map onto `x_{S+1}`, so prefix `i` carries
/// `x_{S+i+1}` in its offset.
pub fn traj_method1(p: &LqtProblem, gains: &[Gains], values: &[QuadValue]) -> Trajectory {
    let steps = p.steps();
    let n = p.state_dim();
    if steps == 0 {
        return Trajectory {
            states: vec![p.initial_state.clone()],
            controls: Vec::new(),
            stats: ScanStats::default(),
        };
    }
    let mut maps: Vec<AffineMap> = (0..steps)
        .into_par_iter()
        .map(|i| closed_loop(p, i, &gains[i], &values[i + 1]))
        .collect();
    maps[0] = AffineMap {
        ft: DMatrix::zeros(n, n),
        ct: maps[0].apply(&p.initial_state),
    };
    let (prefixes, stats) =
        par_scan(&maps, |a, b| a.then(b), &AffineMap::identity(n), ScanDirection::Forward).expect("non-empty horizon");
    let mut states = Vec::with_capacity(steps + 1);
    states.push(p.initial_state.clone());
    states.extend(prefixes.into_iter().map(|m| m.ct));
    let controls = controls_along(p, gains, values, &states);
    Trajectory {
        states,
        controls,
        stats,
    }
}

/// Trajectory by a forward scan of elements started from the pinned
/// initial state, each prefix combined with the backward value of its end
/// step.
pub fn traj_method2(p: &LqtProblem, gains: &[Gains], values: &[QuadValue]) -> Result<Trajectory, LqtError> {
    let steps = p.steps();
    let n = p.state_dim();
    let mut elements = make_lqt_elements(p)?;
    elements.pop();
    elements.insert(0, LqtElement::pinned(&p.initial_state));
    let (prefixes, stats) = try_par_scan(&elements, combine_lqt, &LqtElement::identity(n), ScanDirection::Forward)?;
    let x0 = &p.initial_state;
    let states = prefixes
        .par_iter()
        .zip(values.par_iter())
        .enumerate()
        .map(|(i, (e, value))| {
            let m = DMatrix::identity(n, n) + &e.c * &value.s;
            let f = Factored::new(&m, MAX_CONDITION).map_err(|_| LqtError::Singular {
                step: p.start + i,
                what: "I + C S",
            })?;
            Ok(f.solve_vec(&(&e.a * x0 + &e.b + &e.c * &value.v)))
        })
        .collect::<Result<Vec<_>, LqtError>>()?;
    debug_assert_eq!(states.len(), steps + 1);
    let controls = controls_along(p, gains, values, &states);
    Ok(Trajectory {
        states,
        controls,
        stats,
    })
}
