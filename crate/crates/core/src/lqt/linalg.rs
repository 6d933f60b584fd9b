use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

/// Condition-number estimate above which a factorization is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Replaces `m` by `(m + mᵀ)/2`. The result is exactly symmetric.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)]) / 2.0;
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

/// LU factorization of a square matrix and of its transpose, with a 1-norm
/// condition estimate.
pub struct Factored {
    lu: LU<f64, Dyn, Dyn>,
    lu_t: LU<f64, Dyn, Dyn>,
    pub condition: f64,
}

impl Factored {
    /// Factors `m` with partial pivoting. Fails with the condition estimate
    /// (`∞` for an exactly singular matrix) when it exceeds `max_condition`.
    pub fn new(m: &DMatrix<f64>, max_condition: f64) -> Result<Factored, f64> {
        let lu = m.clone().lu();
        let lu_t = m.transpose().lu();
        if !lu.is_invertible() || !lu_t.is_invertible() {
            return Err(f64::INFINITY);
        }
        let mut f = Factored {
            lu,
            lu_t,
            condition: 0.0,
        };
        f.condition = one_norm(m) * f.inverse_one_norm_estimate();
        if !f.condition.is_finite() || f.condition > max_condition {
            return Err(f.condition);
        }
        Ok(f)
    }

    /// `m⁻¹ b`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu.solve(b).expect("factor checked invertible")
    }

    /// `m⁻ᵀ b`.
    pub fn solve_transpose(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu_t.solve(b).expect("factor checked invertible")
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(b).expect("factor checked invertible")
    }

    // Hager's estimator of ‖m⁻¹‖₁.
    fn inverse_one_norm_estimate(&self) -> f64 {
        let n = self.lu.l().nrows();
        let mut x = DVector::from_element(n, 1.0 / n as f64);
        let mut estimate = 0.0;
        for _ in 0..5 {
            let y = self.lu.solve(&x).expect("invertible");
            estimate = y.lp_norm(1);
            let sign = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let z = self.lu_t.solve(&sign).expect("invertible");
            let j = z.iamax();
            if z.amax() <= z.dot(&x) {
                break;
            }
            x.fill(0.0);
            x[j] = 1.0;
        }
        estimate
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
}

/// Largest absolute entry of `a - b`, both flattened column-major.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Max-abs difference relative to the max-abs entry of `reference`
/// (floored at 1e-300).
pub fn relative_diff(value: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    max_abs_diff(value, reference) / reference.amax().max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetrize_is_exact() {
        let mut m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.1, 5.0, 0.3, 2.9, 0.1, 4.0]);
        symmetrize(&mut m);
        assert_eq!(m, m.transpose());
        assert_eq!(m[(0, 1)], 2.05);
    }

    #[test]
    fn condition_estimate_is_reasonable() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-6]);
        let f = Factored::new(&m, MAX_CONDITION).unwrap();
        assert!((f.condition - 1e6).abs() / 1e6 < 1e-9);
        let id = DMatrix::<f64>::identity(4, 4);
        assert_eq!(Factored::new(&id, MAX_CONDITION).unwrap().condition, 1.0);
    }

    #[test]
    fn singular_and_ill_conditioned_are_rejected() {
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(Factored::new(&singular, MAX_CONDITION).is_err());
        let nearly = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-14]);
        let cond = Factored::new(&nearly, MAX_CONDITION).err().unwrap();
        assert!(cond > 1e13);
    }

    #[test]
    fn transpose_solve() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let f = Factored::new(&m, MAX_CONDITION).unwrap();
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let x = f.solve_transpose(&b);
        assert!((m.transpose() * x - b).amax() < 1e-15);
    }
}
