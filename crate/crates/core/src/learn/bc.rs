use ndarray::Array2;

use super::util::rows_matrix;
use super::LearnError;
use crate::nn::{AdamState, GaussianPolicy};

/// One Adam step on `mean ||policy_mean(obs) - action||^2`.
///
/// `opt` must be sized for the mean network's parameters. Returns the loss
/// measured before the step.
pub fn bc_update(
    policy: &mut GaussianPolicy,
    opt: &mut AdamState,
    obs: &[Vec<f64>],
    actions: &[Vec<f64>],
) -> Result<f64, LearnError> {
    if obs.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    if obs.len() != actions.len() {
        return Err(LearnError::LengthMismatch(format!("{} observations, {} actions", obs.len(), actions.len())));
    }
    let act_dim = policy.act_dim();
    if let Some(a) = actions.iter().find(|a| a.len() != act_dim) {
        return Err(LearnError::LengthMismatch(format!("action has {} dims, policy {act_dim}", a.len())));
    }
    let net = &mut policy.mean_net;
    let x = rows_matrix(obs.iter().map(|o| o.as_slice()), net.input_dim())?;
    let (out, cache) = net.forward_batch(x.view())?;
    let m = obs.len() as f64;
    let mut up = Array2::<f64>::zeros((obs.len(), act_dim));
    let mut loss = 0.0;
    for (r, a) in actions.iter().enumerate() {
        for d in 0..act_dim {
            let e = out[[r, d]] - a[d];
            loss += e * e / m;
            up[[r, d]] = 2.0 * e / m;
        }
    }
    let (grads, _) = net.backward_batch(&cache, up.view())?;
    opt.step(net.params_mut(), &grads)?;
    Ok(loss)
}
