//! Neural transformation learning: `K` learned transformations and a shared
//! encoder, trained so that each transformed view stays close to the
//! original sample while remaining distinguishable from the other views.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::backbones::contrastive::{contrastive_dual_loss, ntl_probabilities};
use crate::backbones::mlp::Mlp;
use crate::backbones::DualLoss;
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NtlConfig {
    pub num_transforms: usize,
    /// Hidden width of each two-layer transformation network.
    pub transform_hidden: usize,
    /// Hidden widths of the encoder; empty means a single linear layer.
    pub encoder_hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub tau: f64,
    /// Parameterize views as `x + T_k(x)` instead of `T_k(x)`.
    pub residual: bool,
}

impl Default for NtlConfig {
    fn default() -> Self {
        Self {
            num_transforms: 6,
            transform_hidden: 24,
            encoder_hidden: vec![24],
            embedding_dim: 16,
            tau: 0.1,
            residual: false,
        }
    }
}

impl NtlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_transforms < 2 {
            return Err(Error::Config("NTL needs at least 2 transformations".into()));
        }
        if self.transform_hidden == 0 || self.embedding_dim == 0 || self.encoder_hidden.contains(&0) {
            return Err(Error::Config("NTL layer widths must be positive".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NtlBackbone {
    config: NtlConfig,
    input_dim: usize,
    transforms: Vec<Mlp>,
    encoder: Mlp,
    params: ParamSet,
}

impl NtlBackbone {
    pub fn new(config: NtlConfig, input_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        let mut rng = rng::seeded(seed);
        let mut params = ParamSet::new();
        let transforms = (0..config.num_transforms)
            .map(|k| {
                Mlp::init(
                    &mut params,
                    &format!("transform{k}"),
                    &[input_dim, config.transform_hidden, input_dim],
                    &mut rng,
                )
            })
            .collect();
        let mut sizes = vec![input_dim];
        sizes.extend(&config.encoder_hidden);
        sizes.push(config.embedding_dim);
        let encoder = Mlp::init(&mut params, "encoder", &sizes, &mut rng);
        Ok(Self {
            config,
            input_dim,
            transforms,
            encoder,
            params,
        })
    }

    pub fn config(&self) -> &NtlConfig {
        &self.config
    }
}

impl DualLoss for NtlBackbone {
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
        let x = g.constant(x.to_vec());
        let original = self.encoder.forward(g, nodes, x);
        let views: Vec<NodeId> = self
            .transforms
            .iter()
            .map(|t| {
                let mut v = t.forward(g, nodes, x);
                if self.config.residual {
                    v = g.add(v, x);
                }
                self.encoder.forward(g, nodes, v)
            })
            .collect();
        let probs = ntl_probabilities(g, &views, original, self.config.tau);
        contrastive_dual_loss(g, &probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbones::dual_loss;

    #[test]
    fn rejects_fewer_than_two_transforms() {
        let cfg = NtlConfig {
            num_transforms: 1,
            ..NtlConfig::default()
        };
        assert!(matches!(NtlBackbone::new(cfg, 4, 0), Err(Error::Config(_))));
    }

    #[test]
    fn losses_are_finite_and_positive() {
        let m = NtlBackbone::new(NtlConfig::default(), 5, 3).unwrap();
        for x in [[0.0; 5], [1.0, -2.0, 3.0, 0.5, 0.1], [100.0, 0.0, -50.0, 2.0, 1.0]] {
            let (ln, la) = dual_loss(&m, &x).unwrap();
            assert!(ln.is_finite() && ln > 0.0);
            assert!(la.is_finite() && la > 0.0);
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = NtlBackbone::new(NtlConfig::default(), 5, 9).unwrap();
        let b = NtlBackbone::new(NtlConfig::default(), 5, 9).unwrap();
        assert_eq!(a.params(), b.params());
    }
}
