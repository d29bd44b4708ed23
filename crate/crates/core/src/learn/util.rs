use ndarray::Array2;

use super::{LearnError, Transition};

/// Scales `grads` in place so their L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

pub(crate) fn rows_matrix<'a, I>(rows: I, cols: usize) -> Result<Array2<f64>, LearnError>
where
    I: ExactSizeIterator<Item = &'a [f64]>,
{
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * cols);
    for (i, r) in rows.enumerate() {
        if r.len() != cols {
            return Err(LearnError::LengthMismatch(format!("row {i} has {} entries, expected {cols}", r.len())));
        }
        flat.extend_from_slice(r);
    }
    Ok(Array2::from_shape_vec((n, cols), flat).expect("checked lengths"))
}

/// `[obs | action]` rows for Q networks.
pub(crate) fn obs_action_matrix(obs: &[&[f64]], actions: &[&[f64]]) -> Array2<f64> {
    let cols = obs[0].len() + actions[0].len();
    let mut flat = Vec::with_capacity(obs.len() * cols);
    for (o, a) in obs.iter().zip(actions) {
        flat.extend_from_slice(o);
        flat.extend_from_slice(a);
    }
    Array2::from_shape_vec((obs.len(), cols), flat).expect("row lengths")
}

pub(crate) fn check_transitions(batch: &[Transition], obs_dim: usize, act_dim: usize) -> Result<(), LearnError> {
    if batch.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    for (i, t) in batch.iter().enumerate() {
        if t.obs.len() != obs_dim || t.next_obs.len() != obs_dim || t.action.len() != act_dim {
            return Err(LearnError::LengthMismatch(format!(
                "transition {i}: obs {}/{}, action {} (expected {obs_dim}, {act_dim})",
                t.obs.len(),
                t.next_obs.len(),
                t.action.len()
            )));
        }
        if !t.reward.is_finite() {
            return Err(LearnError::NonFinite("reward"));
        }
    }
    Ok(())
}
