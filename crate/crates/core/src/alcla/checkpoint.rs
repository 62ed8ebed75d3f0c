//! JSON checkpoint of a trained model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AlClaConfig, AlClaParams, DecoderBasis, EpochRecord, TrainOutcome};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: AlClaConfig,
    /// Row-major per layer, K^(2) first.
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    pub theta_amplify: f64,
    /// Human-readable decoder terms in coefficient order.
    pub basis: Vec<String>,
    pub history: Vec<EpochRecord>,
    #[serde(default)]
    pub selected_epoch: Option<usize>,
}

impl Checkpoint {
    pub fn new(config: &AlClaConfig, outcome: &TrainOutcome) -> Self {
        Self {
            config: config.clone(),
            k: outcome.params.k.clone(),
            theta: outcome.params.theta.clone(),
            theta_amplify: outcome.params.theta_amplify,
            basis: outcome.basis.terms.iter().map(|t| t.describe()).collect(),
            history: outcome.history.clone(),
            selected_epoch: outcome.selected_epoch,
        }
    }

    pub fn params(&self) -> AlClaParams {
        AlClaParams {
            d_x: self.config.d_x,
            k: self.k.clone(),
            theta: self.theta.clone(),
            theta_amplify: self.theta_amplify,
        }
    }

    /// Rebuilds the basis and checks it against the stored descriptors.
    pub fn basis(&self) -> Result<DecoderBasis> {
        let basis = DecoderBasis::new(self.config.d_x, self.config.l);
        let names: Vec<String> = basis.terms.iter().map(|t| t.describe()).collect();
        if names != self.basis || self.theta.len() != basis.len() {
            return Err(Error::dim("checkpoint basis does not match its config"));
        }
        if self.k.len() + 1 != self.config.l || self.k.iter().any(|k| k.len() != self.config.d_x * self.config.d_x) {
            return Err(Error::dim("checkpoint encoder shape does not match its config"));
        }
        Ok(basis)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.config.validate()?;
        c.basis()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
