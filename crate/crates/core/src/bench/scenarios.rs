//! Builders for the benchmark scenarios.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::finite_dp::FiniteProblem;
use crate::lqt::LqtProblem;
use crate::nonlinear::{Model, NonlinearProblem};

/// Seed used by the CLI when none is given.
pub const DEFAULT_SEED: u64 = 2021;

/// Steps between two reference points in the tracking scenarios.
pub const REFERENCE_SPACING: usize = 10;

/// Sampling interval of the tracking scenarios.
pub const TRACKING_DT: f64 = 0.1;

/// Zero-order-hold discretization: `F = exp(A·dt)` and
/// `L = ∫₀^dt exp(Aτ) dτ · B`, read off the exponential of the augmented
/// matrix `[[A, B], [0, 0]]·dt`.
pub fn zoh_discretize(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (a.nrows(), b.ncols());
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * dt));
    let e = aug.exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(values))
}

/// Smooth random walk of `count` points starting at `start`: the heading
/// turns by a bounded random amount between consecutive points.
fn waypoint_path(count: usize, start: (f64, f64), seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut heading: f64 = rng.random_range(0.0..2.0 * PI);
    let mut p = start;
    let mut out = Vec::with_capacity(count);
    out.push(p);
    for _ in 1..count {
        heading += rng.random_range(-0.6..0.6);
        let stride = rng.random_range(0.5..1.5);
        p = (p.0 + stride * heading.cos(), p.1 + stride * heading.sin());
        out.push(p);
    }
    out
}

/// 2-D point mass driven by accelerations, tracking waypoints placed every
/// [`REFERENCE_SPACING`] steps. A horizon that is not a multiple of the
/// spacing ends on the next waypoint.
pub fn build_tracking2d(steps: usize, seed: u64) -> LqtProblem {
    assert!(steps > 0, "horizon must be positive");
    let dt = TRACKING_DT;
    let f = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, 0.0, dt, 0.0, 0.0, 1.0, 0.0, dt, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
        ],
    );
    let l = DMatrix::from_row_slice(4, 2, &[dt * dt / 2.0, 0.0, 0.0, dt * dt / 2.0, dt, 0.0, 0.0, dt]);
    let h = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let waypoints = waypoint_path(steps.div_ceil(REFERENCE_SPACING) + 1, (5.0, 5.0), seed);

    let mut output = Vec::with_capacity(steps + 1);
    let mut state_weight = Vec::with_capacity(steps + 1);
    let mut reference = Vec::with_capacity(steps + 1);
    for k in 0..steps {
        let w = waypoints[k / REFERENCE_SPACING];
        let weight = if k % REFERENCE_SPACING == 0 { 100.0 } else { 1e-6 };
        output.push(h.clone());
        state_weight.push(diag(&[weight, weight]));
        reference.push(DVector::from_row_slice(&[w.0, w.1]));
    }
    let last = waypoints[steps.div_ceil(REFERENCE_SPACING)];
    output.push(DMatrix::identity(4, 4));
    state_weight.push(DMatrix::identity(4, 4));
    reference.push(DVector::from_row_slice(&[last.0, last.1, 0.0, 0.0]));

    LqtProblem {
        start: 0,
        initial_state: DVector::from_row_slice(&[5.0, 5.0, 0.0, 0.0]),
        dynamics: vec![f; steps],
        offset: vec![DVector::zeros(4); steps],
        input: vec![l; steps],
        output,
        state_weight,
        reference,
        control_weight: vec![DMatrix::identity(2, 2) * 0.1; steps],
        cross_weight: None,
        control_reference: None,
    }
}

/// Continuous-time mass-spring-damper chain `(A, B)` with the state ordered
/// `[y₁, ẏ₁, …, y_N, ẏ_N]`; the first input pushes the first mass and the
/// second pulls the last.
pub fn mass_spring_continuous(masses: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (m, c, d) = (1.0, 1.0, 0.2);
    let n = 2 * masses;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..masses {
        let (pos, vel) = (2 * i, 2 * i + 1);
        a[(pos, vel)] = 1.0;
        a[(vel, pos)] = -2.0 * c / m;
        a[(vel, vel)] = -2.0 * d / m;
        for j in [i.wrapping_sub(1), i + 1] {
            if j < masses {
                a[(vel, 2 * j)] += c / m;
                a[(vel, 2 * j + 1)] += d / m;
            }
        }
    }
    let mut b = DMatrix::zeros(n, 2);
    b[(1, 0)] = 1.0 / m;
    b[(n - 1, 1)] = -1.0 / m;
    (a, b)
}

/// Chain of `masses` masses regulated to the origin over 10 s, discretized
/// into `steps` zero-order-hold intervals.
pub fn build_mass_spring(masses: usize, steps: usize) -> LqtProblem {
    assert!(masses >= 2 && steps >= 2, "need at least two masses and two steps");
    let n = 2 * masses;
    let (a, b) = mass_spring_continuous(masses);
    let (f, l) = zoh_discretize(&a, &b, 10.0 / steps as f64);
    let mut x0 = DVector::zeros(n);
    x0[0] = 1.0;
    x0[2 * (masses / 2)] = 1.0;
    LqtProblem {
        start: 0,
        initial_state: x0,
        dynamics: vec![f; steps],
        offset: vec![DVector::zeros(n); steps],
        input: vec![l; steps],
        output: vec![DMatrix::identity(n, n); steps + 1],
        state_weight: vec![DMatrix::identity(n, n); steps + 1],
        reference: vec![DVector::zeros(n); steps + 1],
        control_weight: vec![DMatrix::identity(2, 2) * 0.1; steps],
        cross_weight: None,
        control_reference: None,
    }
}

/// Controls of the routing grid.
pub const ROUTING_UP: usize = 0;
pub const ROUTING_STRAIGHT: usize = 1;
pub const ROUTING_DOWN: usize = 2;

/// Grid of `rows` altitudes crossed left to right in `steps` moves. Each
/// cell costs 0, 1 or 2; moving up or down costs one more. Leaving the grid
/// is infeasible. The route starts in the middle row.
pub fn build_routing(rows: usize, steps: usize, seed: u64) -> FiniteProblem {
    assert!(rows % 2 == 1, "the number of rows must be odd");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Column k + 1 holds the cells entered by the move at step k.
    let grid: Vec<Vec<f64>> = (0..steps)
        .map(|_| (0..rows).map(|_| rng.random_range(0..3) as f64).collect())
        .collect();
    let mut next = Vec::with_capacity(steps);
    let mut cost = Vec::with_capacity(steps);
    for column in &grid {
        let mut nk = Vec::with_capacity(rows);
        let mut ck = Vec::with_capacity(rows);
        for x in 0..rows {
            let mut nx = Vec::with_capacity(3);
            let mut cx = Vec::with_capacity(3);
            for (u, shift) in [(ROUTING_UP, 1isize), (ROUTING_STRAIGHT, 0), (ROUTING_DOWN, -1)] {
                let target = x as isize + shift;
                if target < 0 || target >= rows as isize {
                    nx.push(x);
                    cx.push(f64::INFINITY);
                    continue;
                }
                let y = target as usize;
                nx.push(y);
                cx.push(column[y] + if u == ROUTING_STRAIGHT { 0.0 } else { 1.0 });
            }
            nk.push(nx);
            ck.push(cx);
        }
        next.push(nk);
        cost.push(ck);
    }
    FiniteProblem::new(rows, 3, 0, steps, next, cost, vec![0.0; rows], rows / 2).expect("routing grid is valid")
}

/// Kinematic unicycle with state `(p_x, p_y, θ, s)` and control
/// `(acceleration, turn rate)`, observed through `(p_x, p_y, θ)`.
#[derive(Debug, Clone, Copy)]
pub struct Unicycle {
    pub dt: f64,
}

impl Model for Unicycle {
    fn state_dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn dynamics(&self, _i: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let (th, s) = (x[2], x[3]);
        DVector::from_row_slice(&[
            x[0] + s * th.cos() * self.dt,
            x[1] + s * th.sin() * self.dt,
            th + u[1] * self.dt,
            s + u[0] * self.dt,
        ])
    }

    fn output(&self, _i: usize, x: &DVector<f64>) -> DVector<f64> {
        x.rows(0, 3).into_owned()
    }

    fn dynamics_jacobians(&self, _i: usize, x: &DVector<f64>, _u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (th, s, dt) = (x[2], x[3], self.dt);
        let fx = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0,
                0.0,
                -s * th.sin() * dt,
                th.cos() * dt,
                0.0,
                1.0,
                s * th.cos() * dt,
                th.sin() * dt,
                0.0,
                0.0,
                1.0,
                0.0,
                0.0,
                0.0,
                0.0,
                1.0,
            ],
        );
        let fu = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 0.0, 0.0, dt, dt, 0.0]);
        (fx, fu)
    }

    fn output_jacobian(&self, _i: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(3, 4)
    }
}

/// `count` points `(x, y, heading)` on a closed race track, sampled at
/// `points_per_lap` equally spaced angles per lap. The heading is unwrapped
/// so it grows continuously across laps.
fn race_track(points_per_lap: usize, count: usize, seed: u64) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = 10.0;
    let harmonics: Vec<(f64, f64)> = (2..=4)
        .map(|_| (rng.random_range(-0.12..0.12), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let shape = |phi: f64| -> (f64, f64) {
        let r = radius
            * (1.0
                + 0.3 * (2.0 * phi).cos()
                + harmonics
                    .iter()
                    .enumerate()
                    .map(|(j, (amp, phase))| amp * ((j + 2) as f64 * phi + phase).cos())
                    .sum::<f64>());
        (r * phi.cos(), r * phi.sin())
    };
    let mut out: Vec<(f64, f64, f64)> = Vec::with_capacity(count);
    let step = 2.0 * PI / points_per_lap as f64;
    let mut prev_heading: Option<f64> = None;
    for k in 0..count {
        let phi = k as f64 * step;
        let (x, y) = shape(phi);
        let (xa, ya) = shape(phi - 1e-4);
        let (xb, yb) = shape(phi + 1e-4);
        let mut heading = (yb - ya).atan2(xb - xa);
        if let Some(prev) = prev_heading {
            heading += 2.0 * PI * ((prev - heading) / (2.0 * PI)).round();
        }
        prev_heading = Some(heading);
        out.push((x, y, heading));
    }
    out
}

/// Waypoints per lap of the unicycle race track.
pub const TRACK_POINTS_PER_LAP: usize = 40;

/// Unicycle following a race track lap after lap, with position and heading
/// references every [`REFERENCE_SPACING`] steps. The vehicle starts at rest
/// on the first waypoint, facing along the track.
pub fn build_unicycle(steps: usize, seed: u64) -> NonlinearProblem<Unicycle> {
    assert!(
        steps >= REFERENCE_SPACING,
        "horizon must cover at least one reference interval"
    );
    let track = race_track(TRACK_POINTS_PER_LAP, steps / REFERENCE_SPACING + 1, seed);
    let reference_weight = diag(&[100.0, 100.0, 1000.0]);
    let idle_weight = diag(&[1e-6, 1e-6, 1e-6]);
    let mut state_weight = Vec::with_capacity(steps + 1);
    let mut reference = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let (x, y, th) = track[k / REFERENCE_SPACING];
        let at_reference = k % REFERENCE_SPACING == 0 && k < steps;
        state_weight.push(if at_reference {
            reference_weight.clone()
        } else {
            idle_weight.clone()
        });
        reference.push(DVector::from_row_slice(&[x, y, th]));
    }
    let (x0, y0, th0) = track[0];
    NonlinearProblem {
        model: Unicycle { dt: TRACKING_DT },
        start: 0,
        initial_state: DVector::from_row_slice(&[x0, y0, th0, 0.0]),
        state_weight,
        reference,
        control_weight: vec![diag(&[1.0, 100.0]); steps],
        control_reference: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinear::{finite_diff_jacobian, FD_STEP};

    #[test]
    fn zoh_of_zero_dynamics() {
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let (f, l) = zoh_discretize(&DMatrix::zeros(2, 2), &b, 0.5);
        assert_eq!(f, DMatrix::identity(2, 2));
        assert!((l - b * 0.5).amax() < 1e-15);
    }

    #[test]
    fn zoh_scalar_closed_form() {
        let (a, dt) = (-0.7, 0.3);
        let (f, l) = zoh_discretize(&DMatrix::from_element(1, 1, a), &DMatrix::from_element(1, 1, 2.0), dt);
        assert!((f[(0, 0)] - (a * dt).exp()).abs() <= 1e-12 * f[(0, 0)]);
        let want = ((a * dt).exp() - 1.0) / a * 2.0;
        assert!((l[(0, 0)] - want).abs() <= 1e-12 * want.abs());
    }

    #[test]
    fn zoh_double_integrator_matches_tracking_matrices() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let (f, l) = zoh_discretize(&a, &b, 0.1);
        assert!((f - DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0])).amax() < 1e-15);
        assert!((l - DMatrix::from_row_slice(2, 1, &[0.005, 0.1])).amax() < 1e-15);
    }

    #[test]
    fn tracking_parameters() {
        let p = build_tracking2d(100, DEFAULT_SEED);
        p.validate().unwrap();
        assert_eq!(p.dynamics[0][(0, 2)], 0.1);
        assert!((p.input[0][(0, 0)] - 0.005).abs() < 1e-15);
        assert_eq!(p.state_weight[10], diag(&[100.0, 100.0]));
        assert_eq!(p.state_weight[11], diag(&[1e-6, 1e-6]));
        assert_eq!(p.reference[11], p.reference[10]);
        assert_eq!(p.reference[0], DVector::from_row_slice(&[5.0, 5.0]));
        assert_eq!(p.reference[100].rows(2, 2), DVector::zeros(2));
        assert_eq!(p.output[100], DMatrix::identity(4, 4));
        assert_eq!(build_tracking2d(100, DEFAULT_SEED), p);
    }

    #[test]
    fn mass_spring_parameters() {
        let (a, b) = mass_spring_continuous(2);
        assert_eq!(a[(1, 0)], -2.0);
        assert_eq!(a[(1, 2)], 1.0);
        assert_eq!(a[(1, 1)], -0.4);
        assert_eq!(a[(1, 3)], 0.2);
        assert_eq!(a[(3, 3)], -0.4);
        assert_eq!((b[(1, 0)], b[(3, 1)]), (1.0, -1.0));

        let (a, _) = mass_spring_continuous(4);
        // Middle masses couple to both neighbours with equal weights.
        assert_eq!((a[(3, 1)], a[(3, 5)], a[(3, 3)]), (0.2, 0.2, -0.4));

        let p = build_mass_spring(5, 100);
        let x0: Vec<f64> = p.initial_state.iter().copied().collect();
        assert_eq!(x0, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn routing_costs() {
        let p = build_routing(5, 8, DEFAULT_SEED);
        for k in 0..8 {
            for x in 0..5 {
                let straight = p.stage_cost(k, x, ROUTING_STRAIGHT);
                assert!([0.0, 1.0, 2.0].contains(&straight));
                if x + 1 < 5 {
                    // Up enters the same column one row higher.
                    assert_eq!(
                        p.stage_cost(k, x, ROUTING_UP),
                        p.stage_cost(k, x + 1, ROUTING_STRAIGHT) + 1.0
                    );
                }
            }
            assert_eq!(p.stage_cost(k, 4, ROUTING_UP), f64::INFINITY);
            assert_eq!(p.stage_cost(k, 0, ROUTING_DOWN), f64::INFINITY);
        }
        assert_eq!(p.initial_state(), 2);
    }

    #[test]
    fn unicycle_jacobians() {
        let model = Unicycle { dt: 0.1 };
        let x = DVector::from_row_slice(&[0.0, 0.0, 0.0, 1.0]);
        let u = DVector::zeros(2);
        let (fx, fu) = model.dynamics_jacobians(0, &x, &u);
        assert_eq!(fx[(0, 2)], 0.0);
        assert!((fx[(0, 3)] - 0.1).abs() < 1e-15);
        assert_eq!((fu[(2, 1)], fu[(3, 0)]), (0.1, 0.1));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x = DVector::from_fn(4, |_, _| rng.random_range(-3.0..3.0));
            let u = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            let (fx, fu) = model.dynamics_jacobians(0, &x, &u);
            let nx = finite_diff_jacobian(|x| model.dynamics(0, x, &u), &x, FD_STEP);
            let nu = finite_diff_jacobian(|u| model.dynamics(0, &x, u), &u, FD_STEP);
            assert!((fx - nx).amax() <= 1e-5);
            assert!((fu - nu).amax() <= 1e-5);
        }
    }

    #[test]
    fn unicycle_parameters() {
        let np = build_unicycle(100, DEFAULT_SEED);
        assert_eq!(np.control_weight[0], diag(&[1.0, 100.0]));
        assert_eq!(np.state_weight[20], diag(&[100.0, 100.0, 1000.0]));
        assert_eq!(np.state_weight[21], diag(&[1e-6, 1e-6, 1e-6]));
        assert_eq!(np.state_weight[100], diag(&[1e-6, 1e-6, 1e-6]));
        // Headings are continuous along the track.
        for w in np.reference.windows(2) {
            assert!((w[1][2] - w[0][2]).abs() < 1.0);
        }
    }
}
