//! Internal contrastive learning on tabular rows.
//!
//! Window `k` covers features `[k, k + window)` and is paired with the
//! complementary features. `K = D - window + 1` windows (stride 1).

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::backbones::contrastive::{contrastive_dual_loss, icl_probabilities};
use crate::backbones::mlp::Mlp;
use crate::backbones::DualLoss;
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IclConfig {
    /// Window width; `None` selects `D / 2`.
    pub window: Option<usize>,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub tau: f64,
}

impl Default for IclConfig {
    fn default() -> Self {
        Self {
            window: None,
            hidden: vec![16],
            embedding_dim: 8,
            tau: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IclBackbone {
    config: IclConfig,
    input_dim: usize,
    window: usize,
    window_encoder: Mlp,
    complement_encoder: Mlp,
    params: ParamSet,
}

impl IclBackbone {
    pub fn new(config: IclConfig, input_dim: usize, seed: u64) -> Result<Self> {
        let window = config.window.unwrap_or(input_dim / 2);
        if window == 0 || input_dim < 2 * window {
            return Err(Error::Config(format!(
                "ICL needs 1 <= window and 2 * window <= D (window {window}, D {input_dim})"
            )));
        }
        if config.embedding_dim == 0 || config.hidden.contains(&0) {
            return Err(Error::Config("ICL layer widths must be positive".into()));
        }
        if !(config.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", config.tau)));
        }
        let mut rng = rng::seeded(seed);
        let mut params = ParamSet::new();
        let sizes = |input: usize| {
            let mut s = vec![input];
            s.extend(&config.hidden);
            s.push(config.embedding_dim);
            s
        };
        let window_encoder = Mlp::init(&mut params, "f", &sizes(window), &mut rng);
        let complement_encoder = Mlp::init(&mut params, "g", &sizes(input_dim - window), &mut rng);
        Ok(Self {
            config,
            input_dim,
            window,
            window_encoder,
            complement_encoder,
            params,
        })
    }

    pub fn num_windows(&self) -> usize {
        self.input_dim - self.window + 1
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// `(a_k(x), b_k(x))`: the window and its complement.
    pub fn split(&self, x: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
        let range = k..k + self.window;
        let a = x[range.clone()].to_vec();
        let b = x
            .iter()
            .enumerate()
            .filter(|(i, _)| !range.contains(i))
            .map(|(_, v)| *v)
            .collect();
        (a, b)
    }
}

impl DualLoss for IclBackbone {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn dual_loss_nodes(&self, g: &mut Graph, nodes: &[NodeId], x: &[f64]) -> (NodeId, NodeId) {
        let mut window_embs = Vec::with_capacity(self.num_windows());
        let mut complement_embs = Vec::with_capacity(self.num_windows());
        for k in 0..self.num_windows() {
            let (a, b) = self.split(x, k);
            let a = g.constant(a);
            let b = g.constant(b);
            window_embs.push(self.window_encoder.forward(g, nodes, a));
            complement_embs.push(self.complement_encoder.forward(g, nodes, b));
        }
        let probs = icl_probabilities(g, &window_embs, &complement_embs, self.config.tau);
        contrastive_dual_loss(g, &probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbones::dual_loss;

    #[test]
    fn windows_tile_the_features() {
        let m = IclBackbone::new(
            IclConfig {
                window: Some(2),
                ..IclConfig::default()
            },
            5,
            0,
        )
        .unwrap();
        assert_eq!(m.num_windows(), 4);
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        for k in 0..m.num_windows() {
            let (a, b) = m.split(&x, k);
            assert_eq!(a.len() + b.len(), 5);
            assert!(a.iter().all(|v| !b.contains(v)));
            let mut all: Vec<f64> = a.iter().chain(&b).copied().collect();
            all.sort_by(f64::total_cmp);
            assert_eq!(all, x);
        }
        assert_eq!(m.split(&x, 1), (vec![1.0, 2.0], vec![0.0, 3.0, 4.0]));
    }

    #[test]
    fn window_too_wide_is_rejected() {
        let cfg = IclConfig {
            window: Some(3),
            ..IclConfig::default()
        };
        assert!(IclBackbone::new(cfg, 5, 0).is_err());
        assert!(IclBackbone::new(IclConfig::default(), 1, 0).is_err());
    }

    #[test]
    fn losses_are_finite() {
        let m = IclBackbone::new(IclConfig::default(), 6, 1).unwrap();
        let (ln, la) = dual_loss(&m, &[0.1, -0.4, 2.0, 0.0, 1.0, 0.3]).unwrap();
        assert!(ln.is_finite() && ln > 0.0);
        assert!(la.is_finite() && la > 0.0);
    }
}
