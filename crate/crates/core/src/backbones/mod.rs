//! Dual-loss anomaly detectors.
//!
//! Every backbone exposes a normal loss `L_n` and an anomaly loss `L_a`
//! computed from the same parameters. Losses are built as graph nodes so the
//! trainer can combine them and back-propagate.

pub mod contrastive;
pub mod dsvdd;
pub mod icl;
pub mod mlp;
pub mod ntl;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::params::ParamSet;

pub use dsvdd::DsvddRbf;
pub use icl::{IclBackbone, IclConfig};
pub use ntl::{NtlBackbone, NtlConfig};

pub trait DualLoss {
    fn input_dim(&self) -> usize;
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;

    /// Appends the loss subgraph for one sample. `nodes` are the leaves
    /// created by `self.params().attach(g)`. Returns `(L_n, L_a)` scalar nodes.
    fn dual_loss_nodes(&self, g: &mut Graph, nodes: &[NodeId], x: &[f64]) -> (NodeId, NodeId);
}

fn check_sample(model: &(impl DualLoss + ?Sized), x: &[f64]) -> Result<()> {
    if x.len() != model.input_dim() {
        return Err(Error::Shape(format!(
            "sample has {} features, model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("sample contains a non-finite feature".into()));
    }
    Ok(())
}

/// Loss graph for a batch: parameter leaves plus per-sample loss nodes.
pub struct BatchGraph {
    pub graph: Graph,
    pub param_nodes: Vec<NodeId>,
    pub normal: Vec<NodeId>,
    pub anomaly: Vec<NodeId>,
}

impl BatchGraph {
    /// Builds and evaluates the graph. Samples are validated first; a failure
    /// carries the position of the offending sample within `rows`.
    pub fn build<M: DualLoss + ?Sized, R: AsRef<[f64]>>(model: &M, rows: &[R]) -> Result<Self> {
        for (index, x) in rows.iter().enumerate() {
            check_sample(model, x.as_ref()).map_err(|e| Error::Sample {
                index,
                source: Box::new(e),
            })?;
        }
        let mut graph = Graph::new();
        let param_nodes = model.params().attach(&mut graph);
        let (normal, anomaly) = rows
            .iter()
            .map(|x| model.dual_loss_nodes(&mut graph, &param_nodes, x.as_ref()))
            .unzip();
        graph.forward();
        Ok(Self {
            graph,
            param_nodes,
            normal,
            anomaly,
        })
    }

    pub fn losses(&self) -> (Vec<f64>, Vec<f64>) {
        let read = |ids: &[NodeId]| {
            ids.iter()
                .map(|&id| self.graph.scalar(id).expect("batch graph is evaluated"))
                .collect()
        };
        (read(&self.normal), read(&self.anomaly))
    }
}

/// `(L_n(x), L_a(x))` for a single sample.
pub fn dual_loss<M: DualLoss + ?Sized>(model: &M, x: &[f64]) -> Result<(f64, f64)> {
    check_sample(model, x)?;
    let bg = BatchGraph::build(model, &[x])?;
    let (n, a) = bg.losses();
    Ok((n[0], a[0]))
}

/// Elementwise dual losses over a batch, in input order.
pub fn batch_dual_losses<M: DualLoss + ?Sized, R: AsRef<[f64]>>(
    model: &M,
    rows: &[R],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rows.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    Ok(BatchGraph::build(model, rows)?.losses())
}

/// Backbone selection and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackboneSpec {
    DsvddRbf {
        #[serde(default = "default_recip_eps")]
        recip_eps: f64,
        /// RBF centers; defaults to the three toy mixture means.
        #[serde(default)]
        centers: Option<Vec<Vec<f64>>>,
    },
    Ntl(NtlConfig),
    Icl(IclConfig),
}

fn default_recip_eps() -> f64 {
    dsvdd::DEFAULT_RECIP_EPS
}

impl BackboneSpec {
    pub fn dsvdd_toy() -> Self {
        BackboneSpec::DsvddRbf {
            recip_eps: dsvdd::DEFAULT_RECIP_EPS,
            centers: None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BackboneSpec::DsvddRbf { .. } => "dsvdd_rbf",
            BackboneSpec::Ntl(_) => "ntl",
            BackboneSpec::Icl(_) => "icl",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backbone {
    Dsvdd(DsvddRbf),
    Ntl(NtlBackbone),
    Icl(IclBackbone),
}

impl Backbone {
    pub fn init(spec: &BackboneSpec, input_dim: usize, seed: u64) -> Result<Self> {
        match spec {
            BackboneSpec::DsvddRbf { recip_eps, centers } => {
                let centers = centers
                    .clone()
                    .unwrap_or_else(|| dsvdd::TOY_CENTERS.iter().map(|c| c.to_vec()).collect());
                let model = DsvddRbf::new(centers, *recip_eps, seed)?;
                if model.input_dim() != input_dim {
                    return Err(Error::Shape(format!(
                        "RBF centers are {}-dimensional but the data has {input_dim} features",
                        model.input_dim()
                    )));
                }
                Ok(Backbone::Dsvdd(model))
            }
            BackboneSpec::Ntl(config) => {
                Ok(Backbone::Ntl(NtlBackbone::new(config.clone(), input_dim, seed)?))
            }
            BackboneSpec::Icl(config) => {
                Ok(Backbone::Icl(IclBackbone::new(config.clone(), input_dim, seed)?))
            }
        }
    }

    fn inner(&self) -> &dyn DualLoss {
        match self {
            Backbone::Dsvdd(m) => m,
            Backbone::Ntl(m) => m,
            Backbone::Icl(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn DualLoss {
        match self {
            Backbone::Dsvdd(m) => m,
            Backbone::Ntl(m) => m,
            Backbone::Icl(m) => m,
        }
    }
}

impl DualLoss for Backbone {
    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }
    fn params(&self) -> &ParamSet {
        self.inner().params()
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        self.inner_mut().params_mut()
    }
    fn dual_loss_nodes(&self, g: &mut Graph, nodes: &[NodeId], x: &[f64]) -> (NodeId, NodeId) {
        self.inner().dual_loss_nodes(g, nodes, x)
    }
}

pub const CHECKPOINT_FORMAT: &str = "loe-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk model: the backbone spec, the input width and every named
/// parameter vector. Serialized as JSON; floats round-trip exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub input_dim: usize,
    pub backbone: BackboneSpec,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn capture(spec: &BackboneSpec, model: &Backbone) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            input_dim: model.input_dim(),
            backbone: spec.clone(),
            params: model.params().clone(),
        }
    }

    /// Rebuilds the model; parameter names and shapes must match the spec.
    pub fn restore(&self) -> Result<Backbone> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let mut model = Backbone::init(&self.backbone, self.input_dim, 0)?;
        model.params_mut().load_from(&self.params)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path.as_ref(), text + "\n").map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::file(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_toy;

    #[test]
    fn singleton_batch_matches_single_call() {
        let m = Backbone::init(&BackboneSpec::dsvdd_toy(), 2, 4).unwrap();
        let x = [0.4, 1.7];
        let single = dual_loss(&m, &x).unwrap();
        let (n, a) = batch_dual_losses(&m, &[x]).unwrap();
        assert_eq!((n[0], a[0]), single);
    }

    #[test]
    fn permuted_batch_gives_permuted_outputs() {
        let m = Backbone::init(&BackboneSpec::dsvdd_toy(), 2, 4).unwrap();
        let rows = vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]];
        let perm = [2, 0, 1];
        let permuted: Vec<_> = perm.iter().map(|&i| rows[i].clone()).collect();
        let (n, a) = batch_dual_losses(&m, &rows).unwrap();
        let (pn, pa) = batch_dual_losses(&m, &permuted).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert_eq!(pn[j], n[i]);
            assert_eq!(pa[j], a[i]);
        }
    }

    #[test]
    fn toy_batch_losses_are_finite() {
        let data = gen_toy(5);
        let m = Backbone::init(&BackboneSpec::dsvdd_toy(), 2, 5).unwrap();
        let (n, a) = batch_dual_losses(&m, &data.features).unwrap();
        assert_eq!(n.len(), 100);
        assert!(n.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!(a.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn bad_sample_reports_its_index() {
        let m = Backbone::init(&BackboneSpec::dsvdd_toy(), 2, 0).unwrap();
        let rows = vec![vec![0.0, 1.0], vec![0.0, f64::INFINITY]];
        match batch_dual_losses(&m, &rows) {
            Err(Error::Sample { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(batch_dual_losses::<_, Vec<f64>>(&m, &[]).is_err());
    }

    #[test]
    fn dsvdd_requires_two_dimensional_data() {
        assert!(Backbone::init(&BackboneSpec::dsvdd_toy(), 3, 0).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let spec = BackboneSpec::Ntl(NtlConfig::default());
        let m = Backbone::init(&spec, 4, 17).unwrap();
        let ck = Checkpoint::capture(&spec, &m);
        let text = serde_json::to_string(&ck).unwrap();
        let back: Checkpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.restore().unwrap(), m);
    }

    #[test]
    fn checkpoint_shape_mismatch_is_descriptive() {
        let spec = BackboneSpec::Icl(IclConfig::default());
        let m = Backbone::init(&spec, 6, 1).unwrap();
        let mut ck = Checkpoint::capture(&spec, &m);
        ck.input_dim = 8;
        let err = ck.restore().unwrap_err();
        assert!(err.to_string().contains("does not match"), "{err}");
    }

    #[test]
    fn spec_rejects_unknown_keys() {
        let ok: BackboneSpec = serde_json::from_str(r#"{"kind":"ntl","num_transforms":3}"#).unwrap();
        assert!(matches!(ok, BackboneSpec::Ntl(ref config) if config.num_transforms == 3));
        assert!(serde_json::from_str::<BackboneSpec>(r#"{"kind":"ntl","bogus":1}"#).is_err());
        assert!(serde_json::from_str::<BackboneSpec>(r#"{"kind":"dsvdd_rbf","bogus":1}"#).is_err());
    }
}
