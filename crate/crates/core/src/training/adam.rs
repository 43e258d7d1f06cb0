use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::Tensor;
use crate::training::TrainConfig;

/// Adam moment estimates, one pair per parameter tensor in manifest order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Tensor> = params
            .leaves()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        OptimizerState {
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// Euclidean norm over every gradient entry.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` in place so their global norm is at most `max_norm`.
pub fn clip_gradients(grads: &mut [Tensor], max_norm: f64) {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
}

/// One bias-corrected Adam update. `grads` pairs with `params.leaves()`.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Tensor],
    state: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<()> {
    let n = state.first.len();
    if grads.len() != n {
        return Err(Error::Contract(format!(
            "{} gradients for {n} parameter tensors",
            grads.len()
        )));
    }
    let mut shapes_ok = Ok(());
    let mut i = 0;
    params.visit(&mut |name, t| {
        if shapes_ok.is_ok() && grads[i].shape() != t.shape() {
            shapes_ok = Err(Error::Contract(format!(
                "gradient for {name} has shape {:?}, parameter has {:?}",
                grads[i].shape(),
                t.shape()
            )));
        }
        i += 1;
    });
    shapes_ok?;

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let mut i = 0;
    params.visit_mut(&mut |_, p| {
        let g = grads[i].data();
        let m = state.first[i].data_mut();
        for (m, &g) in m.iter_mut().zip(g) {
            *m = b1 * *m + (1.0 - b1) * g;
        }
        let v = state.second[i].data_mut();
        for (v, &g) in v.iter_mut().zip(g) {
            *v = b2 * *v + (1.0 - b2) * g * g;
        }
        let (m, v) = (state.first[i].data(), state.second[i].data());
        for ((x, &m), &v) in p.data_mut().iter_mut().zip(m).zip(v) {
            *x -= cfg.learning_rate * (m / c1) / ((v / c2).sqrt() + cfg.epsilon);
        }
        i += 1;
    });
    Ok(())
}
