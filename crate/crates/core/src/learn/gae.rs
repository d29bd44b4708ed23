use super::LearnError;

/// Generalized advantage estimates and value targets.
///
/// `values` holds one more entry than `rewards`: the bootstrap value of the
/// state after the last step. A set `dones[t]` cuts the recursion at `t`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>), LearnError> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(LearnError::LengthMismatch(format!(
            "rewards {n}, values {} (need {}), dones {}",
            values.len(),
            n + 1,
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * values[t + 1] - values[t];
        next = delta + gamma * lam * live * next;
        adv[t] = next;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shifts and scales to mean 0, std 1 (population std, eps 1e-8).
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}
