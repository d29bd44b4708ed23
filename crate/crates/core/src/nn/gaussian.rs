use rand::Rng;
use rand_distr::StandardNormal;

use super::{Mlp, NnError};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Diagonal Gaussian policy, optionally tanh-squashed.
///
/// With `log_std: Some(..)` the standard deviation is a state-independent
/// parameter vector and `mean_net` outputs the mean. With `None` the network
/// outputs `[mean, log_std]` stacked (twice the action dimension).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    pub mean_net: Mlp,
    pub log_std: Option<Vec<f64>>,
    pub squash: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HeadMode {
    Sample,
    LogProb(Vec<f64>),
    Entropy,
    Mean,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HeadOutput {
    Sample { action: Vec<f64>, log_prob: f64 },
    LogProb(f64),
    Entropy(f64),
    Mean(Vec<f64>),
}

pub fn clamp_log_std(v: f64) -> f64 {
    v.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

/// `log N(x; mean, exp(log_std))` summed over dimensions.
pub fn diag_gaussian_log_prob(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((x, m), s)| {
            let z = (x - m) / s.exp();
            -0.5 * z * z - s - HALF_LN_2PI
        })
        .sum()
}

pub fn diag_gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| 0.5 + HALF_LN_2PI + s).sum()
}

/// `log(1 - tanh(u)^2)`, stable for large |u|.
pub fn tanh_log_derivative(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

impl GaussianPolicy {
    pub fn with_fixed_std(mean_net: Mlp, init_log_std: f64) -> Self {
        let n = mean_net.output_dim();
        Self {
            mean_net,
            log_std: Some(vec![init_log_std; n]),
            squash: false,
        }
    }

    pub fn with_std_head(net: Mlp, squash: bool) -> Self {
        assert!(net.output_dim() % 2 == 0, "std head needs [mean, log_std] outputs");
        Self {
            mean_net: net,
            log_std: None,
            squash,
        }
    }

    pub fn act_dim(&self) -> usize {
        match self.log_std {
            Some(ref s) => s.len(),
            None => self.mean_net.output_dim() / 2,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    /// Pre-squash mean and clamped log standard deviation.
    pub fn distribution(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        let out = self.mean_net.forward(obs)?;
        Ok(self.split_output(&out))
    }

    pub(crate) fn split_output(&self, out: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match self.log_std {
            Some(ref s) => (out.to_vec(), s.iter().map(|v| clamp_log_std(*v)).collect()),
            None => {
                let k = out.len() / 2;
                (out[..k].to_vec(), out[k..].iter().map(|v| clamp_log_std(*v)).collect())
            }
        }
    }

    /// Deterministic action: the mean, squashed when the policy squashes.
    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>, NnError> {
        let (mean, _) = self.distribution(obs)?;
        Ok(if self.squash { mean.iter().map(|m| m.tanh()).collect() } else { mean })
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64), NnError> {
        let (mean, log_std) = self.distribution(obs)?;
        let u: Vec<f64> = mean
            .iter()
            .zip(&log_std)
            .map(|(m, s)| m + s.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut lp = diag_gaussian_log_prob(&u, &mean, &log_std);
        if self.squash {
            lp -= u.iter().map(|&x| tanh_log_derivative(x)).sum::<f64>();
            return Ok((u.iter().map(|x| x.tanh()).collect(), lp));
        }
        Ok((u, lp))
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64, NnError> {
        let (mean, log_std) = self.distribution(obs)?;
        if action.len() != mean.len() {
            return Err(NnError::DimensionMismatch {
                what: "action",
                expected: mean.len(),
                actual: action.len(),
            });
        }
        if !self.squash {
            return Ok(diag_gaussian_log_prob(action, &mean, &log_std));
        }
        if action.iter().any(|a| a.abs() >= 1.0) {
            return Err(NnError::ActionOutsideInterval);
        }
        let u: Vec<f64> = action.iter().map(|a| a.atanh()).collect();
        Ok(diag_gaussian_log_prob(&u, &mean, &log_std)
            - u.iter().map(|&x| tanh_log_derivative(x)).sum::<f64>())
    }

    /// Entropy of the pre-squash Gaussian.
    pub fn entropy(&self, obs: &[f64]) -> Result<f64, NnError> {
        let (_, log_std) = self.distribution(obs)?;
        Ok(diag_gaussian_entropy(&log_std))
    }
}

/// Evaluates the policy head in the requested mode. Sampling draws from `rng`.
pub fn gaussian_head<R: Rng + ?Sized>(
    policy: &GaussianPolicy,
    state: &[f64],
    mode: HeadMode,
    rng: &mut R,
) -> Result<HeadOutput, NnError> {
    Ok(match mode {
        HeadMode::Sample => {
            let (action, log_prob) = policy.sample(state, rng)?;
            HeadOutput::Sample { action, log_prob }
        }
        HeadMode::LogProb(a) => HeadOutput::LogProb(policy.log_prob(state, &a)?),
        HeadMode::Entropy => HeadOutput::Entropy(policy.entropy(state)?),
        HeadMode::Mean => HeadOutput::Mean(policy.mean_action(state)?),
    })
}
