use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, GaussianPolicy, Mlp, NnError};

pub const POLICY_FILE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Mean network plus a state-independent log_std vector.
    GaussianFixedStd,
    /// Network emits `[mean, log_std]`; actions are tanh-squashed.
    GaussianSquashed,
}

/// Serialized policy. Numbers are written with full round-trip precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub version: u32,
    pub kind: PolicyKind,
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    #[serde(default)]
    pub log_std: Option<Vec<f64>>,
    pub obs_layout: Vec<String>,
    pub action_scale: f64,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl PolicyFile {
    pub fn from_policy(policy: &GaussianPolicy, obs_layout: Vec<String>, meta: serde_json::Value) -> Self {
        let net = &policy.mean_net;
        let kind = if policy.log_std.is_some() {
            PolicyKind::GaussianFixedStd
        } else {
            PolicyKind::GaussianSquashed
        };
        Self {
            version: POLICY_FILE_VERSION,
            kind,
            layer_dims: net.layer_dims().to_vec(),
            activation: net.activation(),
            weights: (0..net.num_layers()).map(|l| net.layer_weights(l).to_vec()).collect(),
            biases: (0..net.num_layers()).map(|l| net.layer_biases(l).to_vec()).collect(),
            log_std: policy.log_std.clone(),
            obs_layout,
            action_scale: 1.0,
            meta,
        }
    }

    pub fn to_policy(&self) -> Result<GaussianPolicy, NnError> {
        if self.version != POLICY_FILE_VERSION {
            return Err(NnError::PolicyFile(format!(
                "unsupported version {} (expected {POLICY_FILE_VERSION})",
                self.version
            )));
        }
        if self.layer_dims.len() < 2 {
            return Err(NnError::PolicyFile("layer_dims needs at least two entries".into()));
        }
        let net = Mlp::from_layers(&self.layer_dims, &self.weights, &self.biases)?;
        if self.obs_layout.len() != net.input_dim() {
            return Err(NnError::DimensionMismatch {
                what: "obs_layout",
                expected: net.input_dim(),
                actual: self.obs_layout.len(),
            });
        }
        match (self.kind, &self.log_std) {
            (PolicyKind::GaussianFixedStd, Some(s)) => {
                if s.len() != net.output_dim() {
                    return Err(NnError::DimensionMismatch {
                        what: "log_std",
                        expected: net.output_dim(),
                        actual: s.len(),
                    });
                }
                Ok(GaussianPolicy {
                    mean_net: net,
                    log_std: Some(s.clone()),
                    squash: false,
                })
            }
            (PolicyKind::GaussianSquashed, None) if net.output_dim() % 2 == 0 => {
                Ok(GaussianPolicy::with_std_head(net, true))
            }
            _ => Err(NnError::PolicyFile(format!("kind {:?} inconsistent with log_std/output dims", self.kind))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let text = serde_json::to_string(self).map_err(|e| NnError::PolicyFile(e.to_string()))?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text)
            .and_then(|_| std::fs::rename(&tmp, path))
            .map_err(|e| NnError::PolicyFile(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NnError::PolicyFile(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| NnError::PolicyFile(format!("{}: {e}", path.display())))
    }
}
