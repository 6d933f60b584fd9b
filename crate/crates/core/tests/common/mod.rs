//! Shared helpers for the integration tests.

#![allow(dead_code)]

use std::io::Write;
use std::sync::{Mutex, MutexGuard};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempo_dp::finite_dp::FiniteProblem;
use tempo_dp::lqt::linalg::max_abs_diff;
use tempo_dp::lqt::random::random_spd;
use tempo_dp::lqt::{LqtElement, QuadValue};

static SERIAL: Mutex<()> = Mutex::new(());

/// Criteria run one at a time so timings are not disturbed by each other.
pub fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Writes the verdict line past the test harness's output capture.
pub fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(
        err,
        "[acceptance] criterion {criterion:>2} {verdict}: {name} ({detail})"
    );
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random finite problem with integer costs in `0..10` and roughly one in ten
/// transitions forbidden.
pub fn random_finite(rng: &mut ChaCha8Rng, dx: usize, du: usize, steps: usize) -> FiniteProblem {
    let next = (0..steps)
        .map(|_| {
            (0..dx)
                .map(|_| (0..du).map(|_| rng.random_range(0..dx)).collect())
                .collect()
        })
        .collect();
    let cost = (0..steps)
        .map(|_| {
            (0..dx)
                .map(|_| {
                    (0..du)
                        .map(|_| {
                            if rng.random_bool(0.1) {
                                f64::INFINITY
                            } else {
                                rng.random_range(0..10) as f64
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let terminal = (0..dx).map(|_| rng.random_range(0..10) as f64).collect();
    let start = rng.random_range(0..dx);
    FiniteProblem::new(dx, du, 0, steps, next, cost, terminal, start).unwrap()
}

pub fn random_element(rng: &mut ChaCha8Rng, n: usize) -> LqtElement {
    let mut vec = |len| DVector::from_fn(len, |_, _| rng.random_range(-1.0..=1.0));
    let b = vec(n);
    let eta = vec(n);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..=1.0));
    LqtElement {
        a,
        b,
        c: random_spd(rng, n, 0.0),
        eta,
        j: random_spd(rng, n, 0.0),
    }
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    max_abs_diff(a, b) / b.amax().max(1e-300)
}

fn relv(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

pub fn element_rel_diff(x: &LqtElement, y: &LqtElement) -> f64 {
    [
        rel(&x.a, &y.a),
        relv(&x.b, &y.b),
        rel(&x.c, &y.c),
        relv(&x.eta, &y.eta),
        rel(&x.j, &y.j),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Largest per-step relative deviation of `(S_k, v_k)` from the reference.
pub fn value_rel_diff(a: &[QuadValue], reference: &[QuadValue]) -> f64 {
    assert_eq!(a.len(), reference.len());
    a.iter()
        .zip(reference)
        .map(|(x, y)| rel(&x.s, &y.s).max(relv(&x.v, &y.v)))
        .fold(0.0, f64::max)
}

pub fn vec_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}
