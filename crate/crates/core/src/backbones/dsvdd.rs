//! Deep SVDD on a one-layer Gaussian RBF network with a scalar output.
//!
//! The representation is
//! `f(x) = sum_j w_j exp(-|x - mu_j|^2 / (2 s_j^2)) + b`, with fixed
//! centers `mu_j`, learnable scales `s_j = exp(log_scale_j)`, output weights
//! and bias. The hypersphere center `c` is a learnable scalar. The normal
//! loss pulls `f(x)` towards `c`; the anomaly loss is its reciprocal.

use rand::Rng as _;

use crate::autodiff::{Graph, NodeId};
use crate::backbones::DualLoss;
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::rng::{self, Rng};

/// Means of the three toy mixture components.
pub const TOY_CENTERS: [[f64; 2]; 3] = [[1.0, 1.0], [-0.25, 2.5], [-1.0, 0.5]];

pub const DEFAULT_RECIP_EPS: f64 = 1e-6;

const LOG_SCALE: usize = 0;
const WEIGHT: usize = 1;
const BIAS: usize = 2;
const CENTER: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct DsvddRbf {
    centers: Vec<Vec<f64>>,
    recip_eps: f64,
    params: ParamSet,
}

impl DsvddRbf {
    pub fn new(centers: Vec<Vec<f64>>, recip_eps: f64, seed: u64) -> Result<Self> {
        let dim = centers.first().map(Vec::len).unwrap_or(0);
        if dim == 0 || centers.iter().any(|c| c.len() != dim) {
            return Err(Error::Config("RBF centers must be non-empty and of equal length".into()));
        }
        if !(recip_eps > 0.0) {
            return Err(Error::Config(format!("recip_eps must be positive, got {recip_eps}")));
        }
        let m = centers.len();
        let mut rng: Rng = rng::seeded(seed);
        let mut params = ParamSet::new();
        params.push(
            "rbf.log_scale",
            vec![m],
            (0..m).map(|_| rng.random_range(-0.5..0.5)).collect(),
        );
        params.push(
            "out.weight",
            vec![m],
            (0..m).map(|_| rng.random_range(-1.0..1.0)).collect(),
        );
        params.push("out.bias", vec![1], vec![rng.random_range(-1.0..1.0)]);
        params.push("center", vec![1], vec![rng::standard_normal(&mut rng)]);
        Ok(Self {
            centers,
            recip_eps,
            params,
        })
    }

    pub fn toy(seed: u64) -> Self {
        let centers = TOY_CENTERS.iter().map(|c| c.to_vec()).collect();
        Self::new(centers, DEFAULT_RECIP_EPS, seed).expect("toy centers are valid")
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn recip_eps(&self) -> f64 {
        self.recip_eps
    }

    pub fn center(&self) -> f64 {
        self.params.values(CENTER)[0]
    }

    /// Scalar representation `f(x)` evaluated directly (no graph).
    pub fn representation(&self, x: &[f64]) -> f64 {
        let log_scale = self.params.values(LOG_SCALE);
        let weight = self.params.values(WEIGHT);
        let hidden = self.centers.iter().zip(log_scale).map(|(mu, ls)| {
            let d2: f64 = mu.iter().zip(x).map(|(m, v)| (v - m) * (v - m)).sum();
            (-d2 * 0.5 * (-2.0 * ls).exp()).exp()
        });
        hidden.zip(weight).map(|(h, w)| h * w).sum::<f64>() + self.params.values(BIAS)[0]
    }
}

impl DualLoss for DsvddRbf {
    fn input_dim(&self) -> usize {
        self.centers[0].len()
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn dual_loss_nodes(&self, g: &mut Graph, nodes: &[NodeId], x: &[f64]) -> (NodeId, NodeId) {
        // Squared distances to the fixed centers do not depend on parameters.
        let d2: Vec<f64> = self
            .centers
            .iter()
            .map(|mu| mu.iter().zip(x).map(|(m, v)| (v - m) * (v - m)).sum())
            .collect();
        let d2 = g.constant(d2);
        // 1 / (2 s^2) = 0.5 * exp(-2 log s)
        let inv = g.scale(nodes[LOG_SCALE], -2.0);
        let inv = g.exp(inv);
        let inv = g.scale(inv, 0.5);
        let arg = g.mul(d2, inv);
        let arg = g.scale(arg, -1.0);
        let hidden = g.exp(arg);
        let out = g.dot(hidden, nodes[WEIGHT]);
        let out = g.add(out, nodes[BIAS]);
        let diff = g.sub(out, nodes[CENTER]);
        let sq = g.square(diff);
        let normal = g.sum(sq);
        let anomaly = g.recip(normal, self.recip_eps);
        (normal, anomaly)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbones::dual_loss;

    /// Zero output weights make `f(x) = bias` regardless of `x`.
    fn constant_model(bias: f64, center: f64) -> DsvddRbf {
        let mut m = DsvddRbf::toy(0);
        m.params_mut().set("out.weight", &[0.0, 0.0, 0.0]).unwrap();
        m.params_mut().set("out.bias", &[bias]).unwrap();
        m.params_mut().set("center", &[center]).unwrap();
        m
    }

    #[test]
    fn unit_distance() {
        let m = constant_model(1.5, 0.5);
        let (ln, la) = dual_loss(&m, &[0.3, 0.2]).unwrap();
        assert_eq!(ln, 1.0);
        assert!((la - 1.0).abs() < 1e-5);
    }

    #[test]
    fn at_the_center_the_anomaly_loss_hits_the_floor() {
        let m = constant_model(0.7, 0.7);
        let (ln, la) = dual_loss(&m, &[0.0, 0.0]).unwrap();
        assert_eq!(ln, 0.0);
        assert_eq!(la, 1.0 / m.recip_eps());
        assert!(la.is_finite());
    }

    #[test]
    fn distance_two() {
        let m = constant_model(2.0, 0.0);
        let (ln, la) = dual_loss(&m, &[1.0, -1.0]).unwrap();
        assert_eq!(ln, 4.0);
        assert!((la - 0.25).abs() < 1e-6);
    }

    #[test]
    fn graph_matches_direct_representation() {
        let m = DsvddRbf::toy(11);
        for x in [[0.0, 0.0], [1.0, 1.0], [-0.3, 2.2], [3.0, -1.0]] {
            let (ln, _) = dual_loss(&m, &x).unwrap();
            let direct = (m.representation(&x) - m.center()).powi(2);
            assert!((ln - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let m = DsvddRbf::toy(0);
        assert!(matches!(dual_loss(&m, &[f64::NAN, 0.0]), Err(Error::Input(_))));
        assert!(matches!(dual_loss(&m, &[0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn invalid_construction() {
        assert!(DsvddRbf::new(vec![], 1e-6, 0).is_err());
        assert!(DsvddRbf::new(vec![vec![0.0, 1.0], vec![1.0]], 1e-6, 0).is_err());
        assert!(DsvddRbf::new(vec![vec![0.0]], 0.0, 0).is_err());
    }
}
