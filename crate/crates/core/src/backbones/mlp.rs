use rand::Rng as _;

use crate::autodiff::{Graph, NodeId};
use crate::params::ParamSet;
use crate::rng::Rng;

/// Fully connected network with ReLU between layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// `(weight index, bias index, fan_in, fan_out)` into the owning `ParamSet`.
    layers: Vec<(usize, usize, usize, usize)>,
}

impl Mlp {
    /// Registers parameters for a network with the given layer widths
    /// (`sizes[0]` is the input width). Weights and biases are drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(params: &mut ParamSet, prefix: &str, sizes: &[usize], rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least one layer");
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weight: Vec<f64> = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                let bias: Vec<f64> = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
                let wi = params.push(format!("{prefix}.{l}.weight"), vec![fan_out, fan_in], weight);
                let bi = params.push(format!("{prefix}.{l}.bias"), vec![fan_out], bias);
                (wi, bi, fan_in, fan_out)
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].2
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].3
    }

    /// `nodes` are the leaf nodes of the owning `ParamSet`, in order.
    pub fn forward(&self, g: &mut Graph, nodes: &[NodeId], x: NodeId) -> NodeId {
        let mut h = x;
        for (l, &(wi, bi, fan_in, fan_out)) in self.layers.iter().enumerate() {
            let z = g.matvec(nodes[wi], h, fan_out, fan_in);
            h = g.add(z, nodes[bi]);
            if l + 1 < self.layers.len() {
                h = g.relu(h);
            }
        }
        h
    }
}
