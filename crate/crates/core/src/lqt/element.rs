use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::linalg::{cholesky, symmetrized, Factored, MAX_CONDITION};
use super::{LqtError, LqtProblem};

/// Parameters of the conditional value function of one interval `k → i`
/// in dual form:
///
/// ```text
/// V(x_k, x_i) = max_λ  g(λ) with
/// g = ½x_kᵀ J x_k − x_kᵀ η − ½λᵀ C λ − λᵀ(x_i − A x_k − b)   (up to a constant)
/// ```
///
/// Combining an interval `k → j` with `j → i` yields `k → i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqtElement {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DMatrix<f64>,
    pub eta: DVector<f64>,
    pub j: DMatrix<f64>,
}

impl LqtElement {
    /// Two-sided identity of [`combine_lqt`].
    pub fn identity(n: usize) -> LqtElement {
        LqtElement {
            a: DMatrix::identity(n, n),
            b: DVector::zeros(n),
            c: DMatrix::zeros(n, n),
            eta: DVector::zeros(n),
            j: DMatrix::zeros(n, n),
        }
    }

    /// Element that pins the state to `x` with no cost.
    pub fn pinned(x: &DVector<f64>) -> LqtElement {
        let n = x.len();
        LqtElement {
            a: DMatrix::zeros(n, n),
            b: x.clone(),
            c: DMatrix::zeros(n, n),
            eta: DVector::zeros(n),
            j: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }
}

/// Associative combination of an earlier interval `e1` with a later `e2`.
pub fn combine_lqt(e1: &LqtElement, e2: &LqtElement) -> Result<LqtElement, LqtError> {
    let n = e1.dim();
    if e2.dim() != n {
        return Err(LqtError::InvalidProblem(format!(
            "combining elements of dimension {n} and {}",
            e2.dim()
        )));
    }
    let m = DMatrix::identity(n, n) + &e1.c * &e2.j;
    let f = Factored::new(&m, MAX_CONDITION).map_err(|condition| LqtError::IllConditioned { condition })?;

    // M⁻¹ [A₁ | b₁ + C₁η₂ | C₁]
    let mut rhs = DMatrix::zeros(n, 2 * n + 1);
    rhs.columns_mut(0, n).copy_from(&e1.a);
    rhs.column_mut(n).copy_from(&(&e1.b + &e1.c * &e2.eta));
    rhs.columns_mut(n + 1, n).copy_from(&e1.c);
    let sol = f.solve(&rhs);

    // M⁻ᵀ [η₂ − J₂b₁ | J₂A₁]
    let mut rhs_t = DMatrix::zeros(n, n + 1);
    rhs_t.column_mut(0).copy_from(&(&e2.eta - &e2.j * &e1.b));
    rhs_t.columns_mut(1, n).copy_from(&(&e2.j * &e1.a));
    let sol_t = f.solve_transpose(&rhs_t);

    let a1t = e1.a.transpose();
    Ok(LqtElement {
        a: &e2.a * sol.columns(0, n),
        b: &e2.a * sol.column(n) + &e2.b,
        c: symmetrized(&e2.a * sol.columns(n + 1, n) * e2.a.transpose() + &e2.c),
        eta: &a1t * sol_t.column(0) + &e1.eta,
        j: symmetrized(&a1t * sol_t.columns(1, n) + &e1.j),
    })
}

/// One element per transition followed by the terminal element.
pub fn make_lqt_elements(p: &LqtProblem) -> Result<Vec<LqtElement>, LqtError> {
    p.validate()?;
    if p.has_general_cost() {
        return Err(LqtError::GeneralCost);
    }
    let steps = p.steps();
    let n = p.state_dim();
    (0..=steps)
        .into_par_iter()
        .map(|i| {
            let ht = p.output[i].transpose();
            let htx = &ht * &p.state_weight[i];
            let eta = &htx * &p.reference[i];
            let j = symmetrized(&htx * &p.output[i]);
            if i == steps {
                return Ok(LqtElement {
                    a: DMatrix::zeros(n, n),
                    b: DVector::zeros(n),
                    c: DMatrix::zeros(n, n),
                    eta,
                    j,
                });
            }
            let chol = cholesky(&p.control_weight[i]).ok_or(LqtError::Singular {
                step: p.start + i,
                what: "control weight",
            })?;
            let l = &p.input[i];
            let c = symmetrized(l * chol.solve(&l.transpose()));
            Ok(LqtElement {
                a: p.dynamics[i].clone(),
                b: p.offset[i].clone(),
                c,
                eta,
                j,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(a: f64, b: f64, c: f64, eta: f64, j: f64) -> LqtElement {
        LqtElement {
            a: DMatrix::from_element(1, 1, a),
            b: DVector::from_element(1, b),
            c: DMatrix::from_element(1, 1, c),
            eta: DVector::from_element(1, eta),
            j: DMatrix::from_element(1, 1, j),
        }
    }

    // Fits the combined element by minimizing the primal conditional value
    // function over the middle state on a grid of (x, y) points.
    fn primal_combined(e1: &LqtElement, e2: &LqtElement) -> [f64; 5] {
        // For scalar elements with C > 0 the primal form is
        // V(x, y) = ½Jx² − ηx + (y − Ax − b)²/(2C).
        let (a1, b1, c1, n1, j1) = (e1.a[0], e1.b[0], e1.c[(0, 0)], e1.eta[0], e1.j[(0, 0)]);
        let (a2, b2, c2, n2, j2) = (e2.a[0], e2.b[0], e2.c[(0, 0)], e2.eta[0], e2.j[(0, 0)]);
        let v = |x: f64, y: f64| {
            // Minimize over z in closed form: quadratic in z.
            let qa = 1.0 / c1 + j2 + a2 * a2 / c2;
            let qb = -(a1 * x + b1) / c1 - n2 - a2 * (y - b2) / c2;
            let z = -qb / qa;
            0.5 * j1 * x * x - n1 * x + (z - a1 * x - b1).powi(2) / (2.0 * c1) + 0.5 * j2 * z * z - n2 * z
                + (y - a2 * z - b2).powi(2) / (2.0 * c2)
        };
        // V(x, y) = k + ½Jx² − ηx + (y − Ax − b)²/(2C): read coefficients off
        // finite differences of an exact quadratic.
        let vyy = v(0.0, 1.0) + v(0.0, -1.0) - 2.0 * v(0.0, 0.0);
        let c = 1.0 / vyy;
        let vy0 = (v(0.0, 1.0) - v(0.0, -1.0)) / 2.0;
        let b = -vy0 * c;
        let vxy = (v(1.0, 1.0) - v(1.0, -1.0) - v(-1.0, 1.0) + v(-1.0, -1.0)) / 4.0;
        let a = -vxy * c;
        let vxx = v(1.0, 0.0) + v(-1.0, 0.0) - 2.0 * v(0.0, 0.0);
        let j = vxx - a * a / c;
        let vx0 = (v(1.0, 0.0) - v(-1.0, 0.0)) / 2.0;
        let eta = -(vx0 - a * b / c);
        [a, b, c, eta, j]
    }

    #[test]
    fn scalar_example() {
        let e1 = scalar(2.0, 1.0, 1.0, 0.0, 1.0);
        let e2 = scalar(1.0, 0.0, 1.0, 1.0, 2.0);
        let e = combine_lqt(&e1, &e2).unwrap();
        let want = [2.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0, -2.0 / 3.0, 11.0 / 3.0];
        let got = [e.a[0], e.b[0], e.c[(0, 0)], e.eta[0], e.j[(0, 0)]];
        for (g, w) in got.iter().zip(want) {
            assert_relative_eq!(*g, w, max_relative = 1e-14);
        }
        let fitted = primal_combined(&e1, &e2);
        for (g, w) in got.iter().zip(fitted) {
            assert_relative_eq!(*g, w, max_relative = 1e-9);
        }
    }

    #[test]
    fn identity_is_exact_on_both_sides() {
        let e = LqtElement {
            a: DMatrix::from_row_slice(2, 2, &[0.3, -1.7, 2.2, 0.9]),
            b: DVector::from_row_slice(&[0.1, -3.3]),
            c: DMatrix::from_row_slice(2, 2, &[2.0, 0.7, 0.7, 1.1]),
            eta: DVector::from_row_slice(&[-0.4, 5.5]),
            j: DMatrix::from_row_slice(2, 2, &[1.3, -0.2, -0.2, 0.8]),
        };
        let id = LqtElement::identity(2);
        assert_eq!(combine_lqt(&e, &id).unwrap(), e);
        assert_eq!(combine_lqt(&id, &e).unwrap(), e);
    }

    #[test]
    fn ill_conditioned_combine_is_reported() {
        let e1 = scalar(1.0, 0.0, 1.0, 0.0, 0.0);
        let e2 = scalar(1.0, 0.0, 0.0, 0.0, -1.0);
        let err = combine_lqt(&e1, &e2).unwrap_err();
        assert!(err.to_string().contains("ill-conditioned combine"));
    }
}
