//! Serializable dumps of networks and policies. Parameters are widened
//! to `f64`, which preserves `f32` values exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RlError};
use crate::heads::Heads;
use crate::net::{NetSpec, Network};
use crate::ppo::ActorCritic;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDump {
    pub spec: NetSpec,
    pub params: Vec<f64>,
}

impl NetworkDump {
    pub fn from_network<F: Scalar>(net: &Network<F>) -> Self {
        Self {
            spec: net.spec().clone(),
            params: net.params().iter().map(|p| p.f64()).collect(),
        }
    }

    pub fn to_network<F: Scalar>(&self) -> Result<Network<F>> {
        let mut net = Network::zeros(self.spec.clone())?;
        let params: Vec<F> = self.params.iter().map(|p| F::of(*p)).collect();
        net.set_params(&params)?;
        Ok(net)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDump {
    pub net: NetworkDump,
    pub heads: Heads,
    pub log_std: Vec<f64>,
}

impl PolicyDump {
    pub fn from_policy<F: Scalar>(ac: &ActorCritic<F>) -> Self {
        Self {
            net: NetworkDump::from_network(&ac.net),
            heads: ac.heads.clone(),
            log_std: ac.log_std.iter().map(|v| v.f64()).collect(),
        }
    }

    pub fn to_policy<F: Scalar>(&self) -> Result<ActorCritic<F>> {
        let mut ac = ActorCritic::with_net(self.net.to_network()?, self.heads.clone(), 0.0)?;
        if self.log_std.len() != ac.log_std.len() {
            return Err(RlError::DimensionMismatch {
                expected: ac.log_std.len(),
                found: self.log_std.len(),
            });
        }
        ac.log_std = self.log_std.iter().map(|v| F::of(*v)).collect();
        Ok(ac)
    }
}

/// One row of the per-update diagnostics log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub update_idx: u64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total_loss: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}
