use super::{Scalar, TensorError};

/// Adam hyperparameters. Weight decay is added to the gradient before the
/// moment updates (classic L2 coupling).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// First and second moment buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes
            .into_iter()
            .map(|n| (vec![T::zero(); n], vec![T::zero(); n]))
            .unzip();
        AdamState { step: 0, m, v }
    }
}

/// One bias-corrected Adam update over a list of parameter tensors.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<(), TensorError> {
    let bad = |detail: String| TensorError::ShapeMismatch { op: "adam_step", detail };
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(bad(format!(
            "{} params, {} grads, {} moment buffers",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() || p.len() != state.v[i].len() {
            return Err(bad(format!("tensor {i}: param {} vs grad {}", p.len(), g.len())));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let step_size = T::from_f64_lossy(cfg.lr / (1.0 - cfg.beta1.powf(t)));
    let bc2_sqrt = T::from_f64_lossy((1.0 - cfg.beta2.powf(t)).sqrt());
    let (b1, b2) = (T::from_f64_lossy(cfg.beta1), T::from_f64_lossy(cfg.beta2));
    let (eps, wd) = (T::from_f64_lossy(cfg.eps), T::from_f64_lossy(cfg.weight_decay));
    let one = T::one();
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.len() {
            let gj = g[j] + wd * p[j];
            m[j] = b1 * m[j] + (one - b1) * gj;
            v[j] = b2 * v[j] + (one - b2) * gj * gj;
            p[j] = p[j] - step_size * m[j] / (v[j].sqrt() / bc2_sqrt + eps);
        }
    }
    Ok(())
}
