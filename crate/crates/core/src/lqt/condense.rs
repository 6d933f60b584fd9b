use nalgebra::{DMatrix, DVector};

use super::linalg::symmetrized;
use super::{LqtError, LqtProblem};

/// Reconstructs every step of the original problem from a condensed
/// solution.
#[derive(Debug, Clone)]
pub struct CondenseMap {
    blocks: Vec<BlockUnroll>,
    control_dims: Vec<usize>,
}

/// Within one block, `x_m = phi[m]·x_head + gamma[m]·ū + drift[m]` for
/// `m = 0..B`.
#[derive(Debug, Clone)]
struct BlockUnroll {
    phi: Vec<DMatrix<f64>>,
    gamma: Vec<DMatrix<f64>>,
    drift: Vec<DVector<f64>>,
}

impl CondenseMap {
    /// Expands block-head states and stacked block controls into the full
    /// state and control sequences.
    pub fn expand(
        &self,
        block_states: &[DVector<f64>],
        block_controls: &[DVector<f64>],
    ) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        assert_eq!(block_controls.len(), self.blocks.len());
        let mut states = Vec::with_capacity(self.control_dims.len() + 1);
        let mut controls = Vec::with_capacity(self.control_dims.len());
        let mut step = 0;
        for (b, unroll) in self.blocks.iter().enumerate() {
            let head = &block_states[b];
            let stacked = &block_controls[b];
            let mut col = 0;
            for m in 0..unroll.phi.len() {
                states.push(&unroll.phi[m] * head + &unroll.gamma[m] * stacked + &unroll.drift[m]);
                let nu = self.control_dims[step];
                controls.push(stacked.rows(col, nu).into_owned());
                col += nu;
                step += 1;
            }
        }
        states.push(block_states[self.blocks.len()].clone());
        (states, controls)
    }
}

/// Eliminates the states inside blocks of `block` consecutive steps. The
/// condensed problem keeps the state dimension, stacks the block's controls
/// and carries the block costs as cross terms.
pub fn condense(p: &LqtProblem, block: usize) -> Result<(LqtProblem, CondenseMap), LqtError> {
    p.validate()?;
    let steps = p.steps();
    if block == 0 || !steps.is_multiple_of(block) {
        return Err(LqtError::NotDivisible { steps, block });
    }
    let n = p.state_dim();
    let n_blocks = steps / block;
    let mut out = LqtProblem {
        start: p.start,
        initial_state: p.initial_state.clone(),
        dynamics: Vec::with_capacity(n_blocks),
        offset: Vec::with_capacity(n_blocks),
        input: Vec::with_capacity(n_blocks),
        output: Vec::with_capacity(n_blocks + 1),
        state_weight: Vec::with_capacity(n_blocks + 1),
        reference: Vec::with_capacity(n_blocks + 1),
        control_weight: Vec::with_capacity(n_blocks),
        cross_weight: Some(Vec::with_capacity(n_blocks)),
        control_reference: p.control_reference.as_ref().map(|_| Vec::with_capacity(n_blocks)),
    };
    let mut map = CondenseMap {
        blocks: Vec::with_capacity(n_blocks),
        control_dims: (0..steps).map(|i| p.control_dim(i)).collect(),
    };

    for b in 0..n_blocks {
        let range = b * block..(b + 1) * block;
        let nu_total: usize = range.clone().map(|i| p.control_dim(i)).sum();
        let nr_total: usize = range.clone().map(|i| p.output[i].nrows()).sum();

        let mut phi = DMatrix::identity(n, n);
        let mut gamma = DMatrix::zeros(n, nu_total);
        let mut drift = DVector::zeros(n);
        let mut unroll = BlockUnroll {
            phi: Vec::new(),
            gamma: Vec::new(),
            drift: Vec::new(),
        };

        let mut hb = DMatrix::zeros(nr_total, n);
        let mut gb = DMatrix::zeros(nr_total, nu_total);
        let mut rb = DVector::zeros(nr_total);
        let mut xb = DMatrix::zeros(nr_total, nr_total);
        let mut mb = DMatrix::zeros(nr_total, nu_total);
        let mut ub = DMatrix::zeros(nu_total, nu_total);
        let mut sb = DVector::zeros(nu_total);

        let (mut row, mut col) = (0, 0);
        for i in range {
            let h = &p.output[i];
            let (nr, nu) = (h.nrows(), p.control_dim(i));
            hb.rows_mut(row, nr).copy_from(&(h * &phi));
            gb.rows_mut(row, nr).copy_from(&(h * &gamma));
            rb.rows_mut(row, nr).copy_from(&(&p.reference[i] - h * &drift));
            xb.view_mut((row, row), (nr, nr)).copy_from(&p.state_weight[i]);
            if let Some(m) = &p.cross_weight {
                mb.view_mut((row, col), (nr, nu)).copy_from(&m[i]);
            }
            ub.view_mut((col, col), (nu, nu)).copy_from(&p.control_weight[i]);
            if let Some(s) = &p.control_reference {
                sb.rows_mut(col, nu).copy_from(&s[i]);
            }

            unroll.phi.push(phi.clone());
            unroll.gamma.push(gamma.clone());
            unroll.drift.push(drift.clone());

            let f = &p.dynamics[i];
            phi = f * &phi;
            gamma = f * &gamma;
            let mut block_cols = gamma.columns_mut(col, nu);
            block_cols += &p.input[i];
            drift = f * &drift + &p.offset[i];
            row += nr;
            col += nu;
        }

        let gt = gb.transpose();
        let gtm = &gt * &mb;
        out.dynamics.push(phi);
        out.input.push(gamma);
        out.offset.push(drift);
        out.output.push(hb);
        out.reference.push(rb - &gb * &sb);
        out.control_weight
            .push(symmetrized(&gt * &xb * &gb + &gtm + gtm.transpose() + ub));
        out.cross_weight.as_mut().expect("set above").push(&xb * &gb + mb);
        out.state_weight.push(xb);
        if let Some(s) = &mut out.control_reference {
            s.push(sb);
        }
        map.blocks.push(unroll);
    }
    out.output.push(p.output[steps].clone());
    out.state_weight.push(p.state_weight[steps].clone());
    out.reference.push(p.reference[steps].clone());
    // Single-step blocks have no eliminated states, so the cross terms are
    // exactly the original ones.
    if block == 1 && p.cross_weight.is_none() {
        out.cross_weight = None;
    }
    Ok((out, map))
}
