use super::loss::{Gradient, RowGrads};
use crate::error::{Error, Result};
use crate::model::{Matrix, ModelParams};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for one tensor, stored at parameter
/// precision so that a saved state resumes bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl Moments {
    fn zeros(len: usize) -> Self {
        Moments {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub entity: Moments,
    pub relation: Moments,
    pub interaction: Option<Moments>,
    pub bias: Moments,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            step: 0,
            entity: Moments::zeros(params.entity.len()),
            relation: Moments::zeros(params.relation.len()),
            interaction: params.interaction.as_ref().map(|c| Moments::zeros(c.len())),
            bias: Moments::zeros(params.bias.len()),
        }
    }

    pub fn matches(&self, params: &ModelParams) -> bool {
        self.entity.m.len() == params.entity.len()
            && self.relation.m.len() == params.relation.len()
            && self.interaction.as_ref().map(|m| m.m.len())
                == params.interaction.as_ref().map(Matrix::len)
            && self.bias.m.len() == params.bias.len()
    }

    /// One bias-corrected Adam update. Coordinates without a gradient entry
    /// are treated as having gradient zero, so their moments still decay.
    pub fn step(&mut self, params: &mut ModelParams, grad: &Gradient, lr: f64) -> Result<()> {
        grad.check_finite()?;
        if !self.matches(params) {
            return Err(Error::Shape(
                "optimizer state does not match parameters".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - BETA1.powi(t);
        let correction2 = 1.0 - BETA2.powi(t);
        let dim = params.dim();

        update_matrix(
            &mut params.entity,
            &mut self.entity,
            &grad.entity,
            dim,
            lr,
            correction1,
            correction2,
        );
        update_matrix(
            &mut params.relation,
            &mut self.relation,
            &grad.relation,
            dim,
            lr,
            correction1,
            correction2,
        );
        if let (Some(c), Some(state)) = (params.interaction.as_mut(), self.interaction.as_mut()) {
            update_matrix(
                c,
                state,
                &grad.interaction,
                dim,
                lr,
                correction1,
                correction2,
            );
        }
        for (k, x) in params.bias.iter_mut().enumerate() {
            update(
                x,
                &mut self.bias,
                k,
                grad.bias[k],
                lr,
                correction1,
                correction2,
            );
        }
        Ok(())
    }
}

#[inline]
fn update(x: &mut f32, state: &mut Moments, i: usize, g: f64, lr: f64, c1: f64, c2: f64) {
    let m = BETA1 * state.m[i] as f64 + (1.0 - BETA1) * g;
    let v = BETA2 * state.v[i] as f64 + (1.0 - BETA2) * g * g;
    state.m[i] = m as f32;
    state.v[i] = v as f32;
    let m_hat = m / c1;
    let v_hat = v / c2;
    *x = (*x as f64 - lr * m_hat / (v_hat.sqrt() + EPSILON)) as f32;
}

fn update_matrix(
    m: &mut Matrix,
    state: &mut Moments,
    grads: &RowGrads,
    dim: usize,
    lr: f64,
    c1: f64,
    c2: f64,
) {
    for row in 0..m.rows() {
        let g = grads.get(row);
        let values = m.row_mut(row);
        for k in 0..dim {
            let gk = g.map_or(0.0, |g| g[k]);
            update(&mut values[k], state, row * dim + k, gk, lr, c1, c2);
        }
    }
}
