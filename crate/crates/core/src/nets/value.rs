//! State-value and state-action-value regressors over policy features.

use super::mlp::Mlp;
use crate::error::{invalid_arg, Result};
use crate::rng::{self, tag};
use crate::sim::DOF;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueParams {
    pub v_net: Mlp,
    pub q_net: Mlp,
}

impl ValueParams {
    /// `v_net: feature_dim -> widths -> 1`, `q_net: feature_dim + DOF -> widths -> 1`.
    pub fn new(feature_dim: usize, widths: &[usize], seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, &[tag::INIT, 1]);
        let mut vd = vec![feature_dim];
        vd.extend_from_slice(widths);
        vd.push(1);
        let mut qd = vd.clone();
        qd[0] += DOF;
        Ok(ValueParams {
            v_net: Mlp::new(&vd, false, &mut rng)?,
            q_net: Mlp::new(&qd, false, &mut rng)?,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.v_net.input_dim()
    }

    pub fn v(&self, features: &[f64], rows: usize) -> Result<Vec<f64>> {
        Ok(self.v_net.forward(features, rows)?.output().to_vec())
    }

    pub fn q(&self, features: &[f64], actions: &[f64], rows: usize) -> Result<Vec<f64>> {
        let x = q_input(features, actions, rows, self.feature_dim())?;
        Ok(self.q_net.forward(&x, rows)?.output().to_vec())
    }

    pub fn is_finite(&self) -> bool {
        self.v_net.params.iter().chain(&self.q_net.params).all(|v| v.is_finite())
    }
}

/// Row-wise concatenation of state features and actions.
pub fn q_input(features: &[f64], actions: &[f64], rows: usize, feature_dim: usize) -> Result<Vec<f64>> {
    if features.len() != rows * feature_dim || actions.len() != rows * DOF {
        return Err(invalid_arg("feature or action matrix has the wrong shape"));
    }
    let mut x = Vec::with_capacity(rows * (feature_dim + DOF));
    for r in 0..rows {
        x.extend_from_slice(&features[r * feature_dim..(r + 1) * feature_dim]);
        x.extend_from_slice(&actions[r * DOF..(r + 1) * DOF]);
    }
    Ok(x)
}
