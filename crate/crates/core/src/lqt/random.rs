//! Seeded generators of well-conditioned random tracking problems.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::LqtProblem;

#[derive(Debug, Clone, Copy)]
pub struct RandomSpec {
    pub n_x: usize,
    pub n_u: usize,
    /// Output dimension; 0 means `n_x` with `H = I`.
    pub n_r: usize,
    pub steps: usize,
    pub cross_terms: bool,
    pub control_reference: bool,
}

impl RandomSpec {
    pub fn new(n_x: usize, n_u: usize, steps: usize) -> RandomSpec {
        RandomSpec {
            n_x,
            n_u,
            n_r: 0,
            steps,
            cross_terms: false,
            control_reference: false,
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..=scale))
}

fn uniform_vec<R: Rng>(rng: &mut R, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-scale..=scale))
}

/// `ZZᵀ/k + floor·I`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, floor: f64) -> DMatrix<f64> {
    let z = uniform(rng, n, n, 1.0);
    let mut m = &z * z.transpose() / n as f64 + DMatrix::identity(n, n) * floor;
    super::linalg::symmetrize(&mut m);
    m
}

/// Dynamics with spectral radius around 0.9, positive definite weights and
/// references in `[-1, 1]`. With `cross_terms`, the joint weight
/// `[[X, M], [Mᵀ, U]]` is drawn positive definite so the Schur complement
/// stays positive semidefinite.
pub fn random_problem<R: Rng>(rng: &mut R, spec: RandomSpec) -> LqtProblem {
    let RandomSpec {
        n_x: n, n_u: nu, steps, ..
    } = spec;
    let identity_output = spec.n_r == 0;
    let nr = if identity_output { n } else { spec.n_r };
    let f_scale = 0.9 * 3f64.sqrt() / (n as f64).sqrt();
    let mut p = LqtProblem {
        start: 0,
        initial_state: uniform_vec(rng, n, 1.0),
        dynamics: Vec::with_capacity(steps),
        offset: Vec::with_capacity(steps),
        input: Vec::with_capacity(steps),
        output: Vec::with_capacity(steps + 1),
        state_weight: Vec::with_capacity(steps + 1),
        reference: Vec::with_capacity(steps + 1),
        control_weight: Vec::with_capacity(steps),
        cross_weight: spec.cross_terms.then(Vec::new),
        control_reference: spec.control_reference.then(Vec::new),
    };
    for i in 0..=steps {
        p.output.push(if identity_output {
            DMatrix::identity(n, n)
        } else {
            uniform(rng, nr, n, 1.0)
        });
        p.reference.push(uniform_vec(rng, nr, 1.0));
        if i == steps {
            p.state_weight.push(random_spd(rng, nr, 0.1));
            break;
        }
        p.dynamics.push(uniform(rng, n, n, f_scale));
        p.offset.push(uniform_vec(rng, n, 0.1));
        p.input.push(uniform(rng, n, nu, 1.0));
        if spec.cross_terms {
            let joint = random_spd(rng, nr + nu, 0.1);
            p.state_weight.push(joint.view((0, 0), (nr, nr)).into_owned());
            p.control_weight
                .push(joint.view((nr, nr), (nu, nu)).into_owned() + DMatrix::identity(nu, nu) * 0.2);
            p.cross_weight
                .as_mut()
                .expect("enabled")
                .push(joint.view((0, nr), (nr, nu)).into_owned());
        } else {
            p.state_weight.push(random_spd(rng, nr, 0.1));
            p.control_weight.push(random_spd(rng, nu, 0.5));
        }
        if let Some(s) = &mut p.control_reference {
            s.push(uniform_vec(rng, nu, 1.0));
        }
    }
    p
}
