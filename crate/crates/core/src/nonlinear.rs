//! Nonlinear tracking by iterated linearization.
//!
//! Each iteration linearizes the dynamics and output maps around a nominal
//! trajectory, solves the resulting tracking problem exactly, and uses its
//! optimum as the next nominal. No line search is applied; the true
//! nonlinear cost of every iterate is reported instead.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::lqt::{self, Backend, LqtError, LqtProblem, TrajMethod};

/// Default relative step of [`finite_diff_jacobian`].
pub const FD_STEP: f64 = 1e-6;

/// Central-difference Jacobian of `f` at `x`, with step `step·(1 + |x_j|)`
/// along coordinate `j`.
pub fn finite_diff_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, step: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut columns = Vec::with_capacity(n);
    let mut probe = x.clone();
    for j in 0..n {
        let h = step * (1.0 + x[j].abs());
        probe[j] = x[j] + h;
        let up = f(&probe);
        probe[j] = x[j] - h;
        let down = f(&probe);
        probe[j] = x[j];
        columns.push((up - down) / (2.0 * h));
    }
    if columns.is_empty() {
        return DMatrix::zeros(f(x).len(), 0);
    }
    DMatrix::from_columns(&columns)
}

/// Time-varying dynamics `x_{i+1} = f_i(x_i, u_i)`, state output `h_i(x)`
/// and control output `g_i(u)`. Step indices are relative to the start of
/// the horizon. Jacobians default to central finite differences; the
/// control output defaults to the identity.
pub trait Model: Sync {
    fn state_dim(&self) -> usize;

    fn control_dim(&self) -> usize;

    fn dynamics(&self, i: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    fn output(&self, i: usize, x: &DVector<f64>) -> DVector<f64>;

    /// `(∂f/∂x, ∂f/∂u)` at `(x, u)`.
    fn dynamics_jacobians(&self, i: usize, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (
            finite_diff_jacobian(|x| self.dynamics(i, x, u), x, FD_STEP),
            finite_diff_jacobian(|u| self.dynamics(i, x, u), u, FD_STEP),
        )
    }

    fn output_jacobian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        finite_diff_jacobian(|x| self.output(i, x), x, FD_STEP)
    }

    fn control_output_is_identity(&self) -> bool {
        true
    }

    fn control_output(&self, _i: usize, u: &DVector<f64>) -> DVector<f64> {
        u.clone()
    }

    fn control_output_jacobian(&self, i: usize, u: &DVector<f64>) -> DMatrix<f64> {
        if self.control_output_is_identity() {
            return DMatrix::identity(u.len(), u.len());
        }
        finite_diff_jacobian(|u| self.control_output(i, u), u, FD_STEP)
    }
}

/// Affine time-varying model taken from a tracking problem.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub dynamics: Vec<DMatrix<f64>>,
    pub offset: Vec<DVector<f64>>,
    pub input: Vec<DMatrix<f64>>,
    pub output: Vec<DMatrix<f64>>,
}

impl Model for LinearModel {
    fn state_dim(&self) -> usize {
        self.dynamics[0].nrows()
    }

    fn control_dim(&self) -> usize {
        self.input[0].ncols()
    }

    fn dynamics(&self, i: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.dynamics[i] * x + &self.offset[i] + &self.input[i] * u
    }

    fn output(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.output[i] * x
    }

    fn dynamics_jacobians(&self, i: usize, _x: &DVector<f64>, _u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.dynamics[i].clone(), self.input[i].clone())
    }

    fn output_jacobian(&self, i: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        self.output[i].clone()
    }
}

#[derive(Debug, Clone)]
pub struct NonlinearProblem<M> {
    pub model: M,
    pub start: usize,
    pub initial_state: DVector<f64>,
    /// One entry per step including the terminal one.
    pub state_weight: Vec<DMatrix<f64>>,
    pub reference: Vec<DVector<f64>>,
    /// One entry per transition.
    pub control_weight: Vec<DMatrix<f64>>,
    pub control_reference: Option<Vec<DVector<f64>>>,
}

impl NonlinearProblem<LinearModel> {
    /// Wraps a tracking problem without cross terms.
    pub fn from_lqt(p: &LqtProblem) -> Result<Self, NonlinearError> {
        p.validate()
            .map_err(|source| NonlinearError::Lqt { iteration: 0, source })?;
        if p.cross_weight.is_some() {
            return Err(NonlinearError::InvalidProblem(
                "cross terms have no nonlinear counterpart".into(),
            ));
        }
        Ok(NonlinearProblem {
            model: LinearModel {
                dynamics: p.dynamics.clone(),
                offset: p.offset.clone(),
                input: p.input.clone(),
                output: p.output.clone(),
            },
            start: p.start,
            initial_state: p.initial_state.clone(),
            state_weight: p.state_weight.clone(),
            reference: p.reference.clone(),
            control_weight: p.control_weight.clone(),
            control_reference: p.control_reference.clone(),
        })
    }
}

impl<M: Model> NonlinearProblem<M> {
    pub fn steps(&self) -> usize {
        self.control_weight.len()
    }

    pub fn validate(&self) -> Result<(), NonlinearError> {
        let steps = self.steps();
        let bad = |msg: String| Err(NonlinearError::InvalidProblem(msg));
        if self.state_weight.len() != steps + 1 || self.reference.len() != steps + 1 {
            return bad(format!("state weights and references need {} entries", steps + 1));
        }
        if self.initial_state.len() != self.model.state_dim() {
            return bad("initial state has the wrong dimension".into());
        }
        if let Some(s) = &self.control_reference {
            if s.len() != steps {
                return bad(format!("control references need {steps} entries"));
            }
        }
        Ok(())
    }

    /// States reached by applying `controls` from the initial state.
    pub fn rollout(&self, controls: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(self.initial_state.clone());
        for (i, u) in controls.iter().enumerate() {
            let next = self.model.dynamics(i, &states[i], u);
            states.push(next);
        }
        states
    }

    /// Nonlinear objective of a state/control sequence.
    pub fn cost(&self, states: &[DVector<f64>], controls: &[DVector<f64>]) -> f64 {
        let steps = self.steps();
        let mut total = 0.0;
        for (i, x) in states.iter().enumerate() {
            let e = self.model.output(i, x) - &self.reference[i];
            total += 0.5 * e.dot(&(&self.state_weight[i] * &e));
            if i == steps {
                break;
            }
            let mut w = self.model.control_output(i, &controls[i]);
            if let Some(s) = &self.control_reference {
                w -= &s[i];
            }
            total += 0.5 * w.dot(&(&self.control_weight[i] * &w));
        }
        total
    }

    /// Cost of the states obtained by rolling out `controls`.
    pub fn rollout_cost(&self, controls: &[DVector<f64>]) -> f64 {
        self.cost(&self.rollout(controls), controls)
    }
}

/// Linearization point: states `x̄_S..=x̄_T` and controls `ū_S..ū_{T−1}`.
/// Need not be dynamically feasible.
#[derive(Debug, Clone, PartialEq)]
pub struct Nominal {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

impl Nominal {
    /// Every state equal to `x`, every control zero.
    pub fn constant(x: &DVector<f64>, n_u: usize, steps: usize) -> Nominal {
        Nominal {
            states: vec![x.clone(); steps + 1],
            controls: vec![DVector::zeros(n_u); steps],
        }
    }

    /// Largest componentwise difference over states and controls.
    pub fn max_diff(&self, other: &Nominal) -> f64 {
        let d =
            |a: &[DVector<f64>], b: &[DVector<f64>]| a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max);
        d(&self.states, &other.states).max(d(&self.controls, &other.controls))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NonlinearError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("control-output Jacobian not invertible at step {step}")]
    ControlJacobian { step: usize },
    #[error("iteration {iteration}: {source}")]
    Lqt { iteration: usize, source: LqtError },
}

/// First-order expansion of `np` around `nom` as a tracking problem. The
/// control cost is expressed through `g`'s Jacobian, which must be square
/// and invertible unless `g` is the identity.
pub fn linearize<M: Model>(np: &NonlinearProblem<M>, nom: &Nominal) -> Result<LqtProblem, NonlinearError> {
    np.validate()?;
    let steps = np.steps();
    if nom.states.len() != steps + 1 || nom.controls.len() != steps {
        return Err(NonlinearError::InvalidProblem(format!(
            "nominal has {} states and {} controls for {steps} steps",
            nom.states.len(),
            nom.controls.len()
        )));
    }
    let identity_g = np.model.control_output_is_identity();

    struct Stage {
        f: DMatrix<f64>,
        l: DMatrix<f64>,
        c: DVector<f64>,
        u: DMatrix<f64>,
        s: Option<DVector<f64>>,
    }
    let outputs: Vec<(DMatrix<f64>, DVector<f64>)> = (0..=steps)
        .into_par_iter()
        .map(|i| {
            let xb = &nom.states[i];
            let h = np.model.output_jacobian(i, xb);
            let r = &np.reference[i] - np.model.output(i, xb) + &h * xb;
            (h, r)
        })
        .collect();
    let stages = (0..steps)
        .into_par_iter()
        .map(|i| {
            let (xb, ub) = (&nom.states[i], &nom.controls[i]);
            let (f, l) = np.model.dynamics_jacobians(i, xb, ub);
            let c = np.model.dynamics(i, xb, ub) - &f * xb - &l * ub;
            let s = np.control_reference.as_ref().map(|s| &s[i]);
            if identity_g {
                return Ok(Stage {
                    f,
                    l,
                    c,
                    u: np.control_weight[i].clone(),
                    s: s.cloned(),
                });
            }
            // g(u) ≈ g(ū) + G(u − ū), so g(u) − s = G(u − s_eff) with
            // s_eff = G⁻¹(s − g(ū) + Gū).
            let g = np.model.control_output_jacobian(i, ub);
            let step = np.start + i;
            if !g.is_square() {
                return Err(NonlinearError::ControlJacobian { step });
            }
            let lu = g.clone().lu();
            let mut target = &g * ub - np.model.control_output(i, ub);
            if let Some(s) = s {
                target += s;
            }
            let s_eff = lu.solve(&target).ok_or(NonlinearError::ControlJacobian { step })?;
            let mut u = g.transpose() * &np.control_weight[i] * &g;
            lqt::linalg::symmetrize(&mut u);
            Ok(Stage {
                f,
                l,
                c,
                u,
                s: Some(s_eff),
            })
        })
        .collect::<Result<Vec<Stage>, NonlinearError>>()?;

    let has_s = np.control_reference.is_some() || !identity_g;
    let mut p = LqtProblem {
        start: np.start,
        initial_state: np.initial_state.clone(),
        dynamics: Vec::with_capacity(steps),
        offset: Vec::with_capacity(steps),
        input: Vec::with_capacity(steps),
        output: Vec::with_capacity(steps + 1),
        state_weight: np.state_weight.clone(),
        reference: Vec::with_capacity(steps + 1),
        control_weight: Vec::with_capacity(steps),
        cross_weight: None,
        control_reference: has_s.then(|| Vec::with_capacity(steps)),
    };
    for (h, r) in outputs {
        p.output.push(h);
        p.reference.push(r);
    }
    for (i, st) in stages.into_iter().enumerate() {
        p.dynamics.push(st.f);
        p.input.push(st.l);
        p.offset.push(st.c);
        p.control_weight.push(st.u);
        if let Some(refs) = &mut p.control_reference {
            refs.push(st.s.unwrap_or_else(|| DVector::zeros(p.input[i].ncols())));
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy)]
pub struct IlqtOptions {
    pub iters: usize,
    pub backend: Backend,
    pub method: TrajMethod,
    /// Stop once an iterate moves less than `1e-9` from its nominal.
    pub early_stop: bool,
    /// Keep every iterate in [`IlqtResult::iterates`].
    pub keep_iterates: bool,
}

impl Default for IlqtOptions {
    fn default() -> Self {
        IlqtOptions {
            iters: 10,
            backend: Backend::Parallel,
            method: TrajMethod::Compose,
            early_stop: false,
            keep_iterates: false,
        }
    }
}

const EARLY_STOP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct IlqtResult {
    /// Final linearized-optimal states and controls.
    pub nominal: Nominal,
    /// Nonlinear cost of rolling out each iterate's controls from the
    /// initial state; entry 0 is the initial nominal.
    pub cost_trace: Vec<f64>,
    pub iterates: Vec<Nominal>,
    /// Combined scan statistics of all iterations.
    pub stats: crate::scan::ScanStats,
}

/// Iterated linearization starting from `init`.
pub fn ilqt<M: Model>(
    np: &NonlinearProblem<M>,
    init: Nominal,
    opts: IlqtOptions,
) -> Result<IlqtResult, NonlinearError> {
    if opts.iters == 0 {
        return Err(NonlinearError::InvalidProblem(
            "at least one iteration is required".into(),
        ));
    }
    let mut nominal = init;
    let mut cost_trace = vec![np.rollout_cost(&nominal.controls)];
    let mut iterates = Vec::new();
    let mut stats = crate::scan::ScanStats::default();
    for iteration in 1..=opts.iters {
        let p = linearize(np, &nominal)?;
        let sol =
            lqt::solve(&p, opts.backend, opts.method).map_err(|source| NonlinearError::Lqt { iteration, source })?;
        stats = stats.then(sol.stats);
        let next = Nominal {
            states: sol.states,
            controls: sol.controls,
        };
        cost_trace.push(np.rollout_cost(&next.controls));
        let change = next.max_diff(&nominal);
        if opts.keep_iterates {
            iterates.push(next.clone());
        }
        nominal = next;
        if opts.early_stop && change < EARLY_STOP_TOLERANCE {
            break;
        }
    }
    Ok(IlqtResult {
        nominal,
        cost_trace,
        iterates,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqt::random::{random_problem, RandomSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Damped pendulum with torque input; the output is (angle, rate).
    struct Pendulum {
        dt: f64,
    }

    impl Model for Pendulum {
        fn state_dim(&self) -> usize {
            2
        }

        fn control_dim(&self) -> usize {
            1
        }

        fn dynamics(&self, _i: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
            let (th, w) = (x[0], x[1]);
            DVector::from_vec(vec![
                th + w * self.dt,
                w + (-9.81 * th.sin() - 0.1 * w + u[0]) * self.dt,
            ])
        }

        fn output(&self, _i: usize, x: &DVector<f64>) -> DVector<f64> {
            x.clone()
        }
    }

    /// Control output g(u) = u + u³/3, Jacobian 1 + u².
    struct CubicInput;

    impl Model for CubicInput {
        fn state_dim(&self) -> usize {
            1
        }

        fn control_dim(&self) -> usize {
            1
        }

        fn dynamics(&self, _i: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
            x + u
        }

        fn output(&self, _i: usize, x: &DVector<f64>) -> DVector<f64> {
            x.clone()
        }

        fn control_output_is_identity(&self) -> bool {
            false
        }

        fn control_output(&self, _i: usize, u: &DVector<f64>) -> DVector<f64> {
            u.map(|v| v + v * v * v / 3.0)
        }
    }

    fn pendulum_problem(steps: usize) -> NonlinearProblem<Pendulum> {
        let mut state_weight = vec![DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 0.1])); steps + 1];
        state_weight[steps] *= 10.0;
        NonlinearProblem {
            model: Pendulum { dt: 0.05 },
            start: 0,
            initial_state: DVector::from_vec(vec![1.0, 0.0]),
            state_weight,
            reference: vec![DVector::zeros(2); steps + 1],
            control_weight: vec![DMatrix::from_element(1, 1, 0.1); steps],
            control_reference: None,
        }
    }

    #[test]
    fn finite_differences() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -4.0, 5.0, 0.5]);
        let x = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let j = finite_diff_jacobian(|x| &a * x, &x, FD_STEP);
        assert!((j - &a).amax() <= 1e-9);
        let j = finite_diff_jacobian(|x| x.map(|v| v * v), &DVector::from_element(1, 1.0), FD_STEP);
        assert!((j[(0, 0)] - 2.0).abs() <= 1e-6);
    }

    #[test]
    fn linear_model_linearizes_exactly() {
        let p = random_problem(&mut ChaCha8Rng::seed_from_u64(5), RandomSpec::new(3, 2, 6));
        let np = NonlinearProblem::from_lqt(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut draw = |n| DVector::from_fn(n, |_, _| rand::Rng::random_range(&mut rng, -3.0..3.0));
        let nom = Nominal {
            states: (0..=6).map(|_| draw(3)).collect(),
            controls: (0..6).map(|_| draw(2)).collect(),
        };
        let lin = linearize(&np, &nom).unwrap();
        assert_eq!(lin.dynamics, p.dynamics);
        assert_eq!(lin.input, p.input);
        for i in 0..6 {
            assert!((&lin.offset[i] - &p.offset[i]).amax() < 1e-13);
        }
        for i in 0..=6 {
            assert!((&lin.reference[i] - &p.reference[i]).amax() < 1e-13);
        }
    }

    #[test]
    fn one_iteration_solves_a_linear_problem() {
        let p = random_problem(&mut ChaCha8Rng::seed_from_u64(7), RandomSpec::new(3, 2, 20));
        let np = NonlinearProblem::from_lqt(&p).unwrap();
        let kkt = lqt::kkt_oracle(&p).unwrap();
        let init = Nominal::constant(&p.initial_state, 2, 20);
        let opts = IlqtOptions {
            iters: 3,
            keep_iterates: true,
            ..IlqtOptions::default()
        };
        let res = ilqt(&np, init, opts).unwrap();
        let first = &res.iterates[0];
        let d = first
            .controls
            .iter()
            .zip(&kkt.controls)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        assert!(d <= 1e-9, "{d:e}");
        assert!(res.iterates[1].max_diff(first) <= 1e-10);
        assert!(res.iterates[2].max_diff(first) <= 1e-10);
        assert!((res.cost_trace[1] - kkt.cost).abs() <= 1e-9 * kkt.cost.max(1.0));
    }

    #[test]
    fn pendulum_cost_decreases_and_backends_agree() {
        let np = pendulum_problem(60);
        let init = Nominal::constant(&np.initial_state, 1, 60);
        let seq = ilqt(
            &np,
            init.clone(),
            IlqtOptions {
                backend: Backend::Sequential,
                keep_iterates: true,
                ..IlqtOptions::default()
            },
        )
        .unwrap();
        let par = ilqt(
            &np,
            init,
            IlqtOptions {
                method: TrajMethod::ForwardValue,
                keep_iterates: true,
                ..IlqtOptions::default()
            },
        )
        .unwrap();
        for (a, b) in seq.iterates.iter().zip(&par.iterates) {
            assert!(a.max_diff(b) <= 1e-6);
        }
        assert!(seq.cost_trace.last().unwrap() < &seq.cost_trace[0]);
        // Converged: the last iterate is a fixed point of the linearization.
        let last = &seq.nominal;
        let again = lqt::solve(&linearize(&np, last).unwrap(), Backend::Sequential, TrajMethod::Compose).unwrap();
        let next = Nominal {
            states: again.states,
            controls: again.controls,
        };
        assert!(next.max_diff(last) <= 1e-8);
    }

    #[test]
    fn early_stop_shortens_the_trace() {
        let p = random_problem(&mut ChaCha8Rng::seed_from_u64(8), RandomSpec::new(2, 1, 10));
        let np = NonlinearProblem::from_lqt(&p).unwrap();
        let opts = IlqtOptions {
            early_stop: true,
            ..IlqtOptions::default()
        };
        let res = ilqt(&np, Nominal::constant(&p.initial_state, 1, 10), opts).unwrap();
        assert_eq!(res.cost_trace.len(), 3);
    }

    #[test]
    fn nonidentity_control_output_uses_its_jacobian() {
        let np = NonlinearProblem {
            model: CubicInput,
            start: 0,
            initial_state: DVector::from_element(1, 2.0),
            state_weight: vec![DMatrix::from_element(1, 1, 1.0); 4],
            reference: vec![DVector::zeros(1); 4],
            control_weight: vec![DMatrix::from_element(1, 1, 1.0); 3],
            control_reference: Some(vec![DVector::from_element(1, 0.5); 3]),
        };
        let nom = Nominal {
            states: vec![DVector::from_element(1, 2.0); 4],
            controls: vec![DVector::from_element(1, 1.0); 3],
        };
        let lin = linearize(&np, &nom).unwrap();
        // G = 2 at ū = 1, so U_eff = 4 and s_eff = (0.5 − 4/3 + 2)/2.
        assert!((lin.control_weight[0][(0, 0)] - 4.0).abs() < 1e-8);
        let s = lin.control_reference.as_ref().unwrap();
        assert!((s[0][0] - (0.5 - 4.0 / 3.0 + 2.0) / 2.0).abs() < 1e-8);
        let res = ilqt(&np, nom, IlqtOptions::default()).unwrap();
        assert!(res.cost_trace.last().unwrap() < &res.cost_trace[0]);
    }

    #[test]
    fn singular_control_jacobian_is_reported() {
        struct Flat;
        impl Model for Flat {
            fn state_dim(&self) -> usize {
                1
            }
            fn control_dim(&self) -> usize {
                1
            }
            fn dynamics(&self, _i: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
                x + u
            }
            fn output(&self, _i: usize, x: &DVector<f64>) -> DVector<f64> {
                x.clone()
            }
            fn control_output_is_identity(&self) -> bool {
                false
            }
            fn control_output(&self, _i: usize, u: &DVector<f64>) -> DVector<f64> {
                u.map(|_| 1.0)
            }
        }
        let np = NonlinearProblem {
            model: Flat,
            start: 0,
            initial_state: DVector::from_element(1, 1.0),
            state_weight: vec![DMatrix::from_element(1, 1, 1.0); 2],
            reference: vec![DVector::zeros(1); 2],
            control_weight: vec![DMatrix::from_element(1, 1, 1.0); 1],
            control_reference: None,
        };
        let err = linearize(&np, &Nominal::constant(&np.initial_state, 1, 1)).unwrap_err();
        assert_eq!(err.to_string(), "control-output Jacobian not invertible at step 0");
    }
}
