use nalgebra::{DMatrix, DVector};

use super::{LqtError, LqtProblem};

/// Largest number of primal variables (states plus controls) the dense
/// solver accepts.
pub const KKT_MAX_VARIABLES: usize = 5000;

#[derive(Debug, Clone)]
pub struct KktSolution {
    pub cost: f64,
    pub controls: Vec<DVector<f64>>,
    pub states: Vec<DVector<f64>>,
}

/// Solves the problem as one equality-constrained quadratic program by a
/// dense LU factorization of the KKT matrix. Cross terms and control
/// references are supported.
pub fn kkt_oracle(p: &LqtProblem) -> Result<KktSolution, LqtError> {
    p.validate()?;
    let steps = p.steps();
    let n = p.state_dim();
    let x0 = &p.initial_state;

    // Variable layout: u_0, x_1, u_1, x_2, …, u_{N−1}, x_N.
    let mut u_at = Vec::with_capacity(steps);
    let mut x_at = vec![usize::MAX; steps + 1];
    let mut nvar = 0;
    for i in 0..steps {
        u_at.push(nvar);
        nvar += p.control_dim(i);
        x_at[i + 1] = nvar;
        nvar += n;
    }
    if nvar > KKT_MAX_VARIABLES {
        return Err(LqtError::TooLarge {
            variables: nvar,
            limit: KKT_MAX_VARIABLES,
        });
    }
    if steps == 0 {
        let cost = p.cost(std::slice::from_ref(x0), &[]);
        return Ok(KktSolution {
            cost,
            controls: Vec::new(),
            states: vec![x0.clone()],
        });
    }

    let ncon = steps * n;
    let dim = nvar + ncon;
    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);

    for i in 0..=steps {
        let h = &p.output[i];
        let x = &p.state_weight[i];
        let r = &p.reference[i];
        let htx = h.transpose() * x;
        if i > 0 {
            let xi = x_at[i];
            let mut q = kkt.view_mut((xi, xi), (n, n));
            q += &htx * h;
            let mut g = rhs.rows_mut(xi, n);
            g += &htx * r;
        }
        if i == steps {
            break;
        }
        let ui = u_at[i];
        let nu = p.control_dim(i);
        let u = &p.control_weight[i];
        let s = p.control_reference.as_ref().map(|s| &s[i]);
        {
            let mut q = kkt.view_mut((ui, ui), (nu, nu));
            q += u;
        }
        if let Some(s) = s {
            let mut g = rhs.rows_mut(ui, nu);
            g += u * s;
        }
        if let Some(m) = &p.cross_weight {
            let m = &m[i];
            let htm = h.transpose() * m;
            // (Hx − r)ᵀM(u − s) = xᵀHᵀMu − xᵀHᵀMs − rᵀMu + const
            {
                let mut g = rhs.rows_mut(ui, nu);
                g += m.transpose() * r;
            }
            if i > 0 {
                let xi = x_at[i];
                let mut q = kkt.view_mut((xi, ui), (n, nu));
                q += &htm;
                let mut q = kkt.view_mut((ui, xi), (nu, n));
                q += htm.transpose();
                if let Some(s) = s {
                    let mut g = rhs.rows_mut(xi, n);
                    g += &htm * s;
                }
            } else {
                let mut g = rhs.rows_mut(ui, nu);
                g -= htm.transpose() * x0;
            }
        }
        // x_{i+1} − F x_i − L u_i = c_i (+ F x_S for i = 0)
        let row = nvar + i * n;
        let mut e = kkt.view_mut((row, x_at[i + 1]), (n, n));
        e += DMatrix::<f64>::identity(n, n);
        kkt.view_mut((row, ui), (n, nu)).copy_from(&(-&p.input[i]));
        let mut b = p.offset[i].clone();
        if i == 0 {
            b += &p.dynamics[0] * x0;
        } else {
            kkt.view_mut((row, x_at[i]), (n, n)).copy_from(&(-&p.dynamics[i]));
        }
        rhs.rows_mut(row, n).copy_from(&b);
    }
    // Mirror the constraint block into the upper right.
    for row in nvar..dim {
        for col in 0..nvar {
            kkt[(col, row)] = kkt[(row, col)];
        }
    }

    let z = kkt.lu().solve(&rhs).ok_or(LqtError::KktSingular)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(LqtError::KktSingular);
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps);
    states.push(x0.clone());
    for i in 0..steps {
        controls.push(z.rows(u_at[i], p.control_dim(i)).into_owned());
        states.push(z.rows(x_at[i + 1], n).into_owned());
    }
    let cost = p.cost(&states, &controls);
    Ok(KktSolution { cost, controls, states })
}
