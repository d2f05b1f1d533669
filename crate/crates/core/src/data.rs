//! Datasets with hidden anomaly labels: synthetic generators, the
//! contamination protocol, CSV ingestion and stratified splitting.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Toy,
    SyntheticTabular,
    Csv,
}

/// Feature matrix with optional ground-truth labels (1 = anomaly).
#[derive(Debug, Clone, PartialEq)]
pub struct ContaminatedDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Option<Vec<u8>>,
    /// Declared ground-truth contamination ratio.
    pub alpha0: Option<f64>,
    pub provenance: Provenance,
    pub feature_names: Vec<String>,
    pub label_name: String,
}

impl ContaminatedDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Option<Vec<u8>>, provenance: Provenance) -> Self {
        let dim = features.first().map(Vec::len).unwrap_or(0);
        let alpha0 = labels.as_ref().filter(|l| !l.is_empty()).map(|l| {
            l.iter().map(|&v| v as f64).sum::<f64>() / l.len() as f64
        });
        Self {
            features,
            labels,
            alpha0,
            provenance,
            feature_names: (0..dim).map(|j| format!("x{j}")).collect(),
            label_name: "label".into(),
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn anomaly_count(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().filter(|&&v| v == 1).count())
    }

    pub fn require_labels(&self) -> Result<&[u8]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::UndefinedMetric("dataset has no label column".into()))
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let features = indices.iter().map(|&i| self.features[i].clone()).collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        let mut out = Self::new(features, labels, self.provenance);
        out.feature_names = self.feature_names.clone();
        out.label_name = self.label_name.clone();
        out
    }

    /// Rows split by label: `(normals, anomalies)`.
    pub fn partition(&self) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::Config("labels are required to separate anomalies".into()))?;
        let mut normals = Vec::new();
        let mut anomalies = Vec::new();
        for (x, &l) in self.features.iter().zip(labels) {
            if l == 1 {
                anomalies.push(x.clone());
            } else {
                normals.push(x.clone());
            }
        }
        Ok((normals, anomalies))
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        for (i, row) in self.features.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Shape(format!("row {i} has {} features, expected {dim}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("row {i} has a non-finite feature")));
            }
        }
        if let Some(l) = &self.labels {
            if l.len() != self.len() {
                return Err(Error::Shape("label count differs from row count".into()));
            }
            if l.iter().any(|&v| v > 1) {
                return Err(Error::Input("labels must be 0 or 1".into()));
            }
        }
        Ok(())
    }

    pub fn manifest(&self, seed: Option<u64>) -> DatasetManifest {
        DatasetManifest {
            provenance: self.provenance,
            n: self.len(),
            d: self.dim(),
            alpha0: self.alpha0,
            seed,
        }
    }
}

/// Sidecar written next to generated datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub provenance: Provenance,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub alpha0: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Normal,
    Anomaly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub mean: Vec<f64>,
    /// Isotropic variance.
    pub variance: f64,
    pub weight: f64,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianMixtureSpec {
    pub components: Vec<MixtureComponent>,
}

impl GaussianMixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let dim = self.components.first().map(|c| c.mean.len()).unwrap_or(0);
        if dim == 0 {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        for c in &self.components {
            if c.mean.len() != dim || !(c.variance > 0.0) || !(c.weight > 0.0) {
                return Err(Error::Config(
                    "mixture components need equal dimensions, positive variance and weight".into(),
                ));
            }
        }
        Ok(())
    }

    /// Components with the given role, as a mixture of their own.
    pub fn restricted(&self, role: Role) -> Self {
        Self {
            components: self.components.iter().filter(|c| c.role == role).cloned().collect(),
        }
    }

    /// Draws `n` samples; each picks a component with probability
    /// proportional to its weight.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        (0..n)
            .map(|_| {
                let mut u = rng.random::<f64>() * total;
                let mut chosen = &self.components[self.components.len() - 1];
                for c in &self.components {
                    if u < c.weight {
                        chosen = c;
                        break;
                    }
                    u -= c.weight;
                }
                rng::isotropic_normal(rng, &chosen.mean, chosen.variance)
            })
            .collect()
    }
}

/// The toy density: one normal component at `[1, 1]` and two equally
/// weighted anomaly components.
pub fn toy_mixture() -> GaussianMixtureSpec {
    let comp = |mean: [f64; 2], variance, weight, role| MixtureComponent {
        mean: mean.to_vec(),
        variance,
        weight,
        role,
    };
    GaussianMixtureSpec {
        components: vec![
            comp([1.0, 1.0], 0.07, 1.0, Role::Normal),
            comp([-0.25, 2.5], 0.03, 0.5, Role::Anomaly),
            comp([-1.0, 0.5], 0.03, 0.5, Role::Anomaly),
        ],
    }
}

/// Draws normals and anomalies from the two roles of `spec`, mixes them
/// with a seeded shuffle and records labels.
pub fn sample_contaminated(
    spec: &GaussianMixtureSpec,
    n_normal: usize,
    n_anomaly: usize,
    seed: u64,
    provenance: Provenance,
) -> Result<ContaminatedDataset> {
    spec.validate()?;
    let mut rng = rng::seeded(seed);
    let normal = spec.restricted(Role::Normal);
    let anomaly = spec.restricted(Role::Anomaly);
    if (n_normal > 0 && normal.components.is_empty()) || (n_anomaly > 0 && anomaly.components.is_empty()) {
        return Err(Error::Config("mixture lacks a component for a requested role".into()));
    }
    let mut rows: Vec<(Vec<f64>, u8)> = normal.sample(n_normal, &mut rng).into_iter().map(|x| (x, 0)).collect();
    rows.extend(anomaly.sample(n_anomaly, &mut rng).into_iter().map(|x| (x, 1)));
    rows.shuffle(&mut rng);
    let (features, labels) = rows.into_iter().unzip();
    Ok(ContaminatedDataset::new(features, Some(labels), provenance))
}

pub const TOY_NORMALS: usize = 90;
pub const TOY_ANOMALIES: usize = 10;

/// 90 normals and 10 anomalies from [`toy_mixture`].
pub fn gen_toy(seed: u64) -> ContaminatedDataset {
    gen_toy_with(seed, TOY_NORMALS, TOY_ANOMALIES)
}

pub fn gen_toy_with(seed: u64, n_normal: usize, n_anomaly: usize) -> ContaminatedDataset {
    sample_contaminated(&toy_mixture(), n_normal, n_anomaly, seed, Provenance::Toy)
        .expect("toy mixture is valid")
}

/// Number of anomalies `k` with `k / (k + n_normal) = alpha0`, rounded.
pub fn contamination_count(n_normal: usize, alpha0: f64) -> usize {
    (alpha0 * n_normal as f64 / (1.0 - alpha0)).round() as usize
}

/// Per-feature population variance.
pub fn feature_variance(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let dim = rows.first().map(Vec::len).unwrap_or(0);
    (0..dim)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n
        })
        .collect()
}

/// Draws `k` anomalies from `pool` and adds zero-mean Gaussian noise whose
/// per-feature variance equals the pool's empirical variance. Sources are
/// drawn without replacement when the pool is large enough, otherwise with
/// replacement. Returns `(source index, perturbed row)` pairs.
pub fn inject_anomalies(pool: &[Vec<f64>], k: usize, rng: &mut Rng) -> Vec<(usize, Vec<f64>)> {
    if k == 0 {
        return Vec::new();
    }
    let sd: Vec<f64> = feature_variance(pool).into_iter().map(f64::sqrt).collect();
    let sources: Vec<usize> = if pool.len() >= k {
        index::sample(rng, pool.len(), k).into_vec()
    } else {
        (0..k).map(|_| rng.random_range(0..pool.len())).collect()
    };
    sources
        .into_iter()
        .map(|i| {
            let row = pool[i]
                .iter()
                .zip(&sd)
                .map(|(v, s)| v + s * rng::standard_normal(rng))
                .collect();
            (i, row)
        })
        .collect()
}

/// Contaminates clean training normals with noisy copies of test anomalies
/// so that the anomaly fraction is `alpha0` (after rounding). Inputs are not
/// modified.
pub fn contaminate(
    normals: &[Vec<f64>],
    anomaly_pool: &[Vec<f64>],
    alpha0: f64,
    seed: u64,
) -> Result<ContaminatedDataset> {
    if !(0.0..1.0).contains(&alpha0) {
        return Err(Error::Config(format!("alpha0 must be in [0, 1), got {alpha0}")));
    }
    let k = contamination_count(normals.len(), alpha0);
    if k > 0 && anomaly_pool.is_empty() {
        return Err(Error::Config("anomaly pool is empty".into()));
    }
    let mut rng = rng::seeded(seed);
    let mut rows: Vec<(Vec<f64>, u8)> = normals.iter().map(|x| (x.clone(), 0)).collect();
    rows.extend(inject_anomalies(anomaly_pool, k, &mut rng).into_iter().map(|(_, x)| (x, 1)));
    rows.shuffle(&mut rng);
    let (features, labels) = rows.into_iter().unzip();
    Ok(ContaminatedDataset::new(features, Some(labels), Provenance::Csv))
}

/// Index sets of a (stratified, when labeled) seeded split: `(train, test)`.
pub fn split_indices(dataset: &ContaminatedDataset, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction must be in (0, 1), got {test_fraction}")));
    }
    let strata: Vec<Vec<usize>> = match &dataset.labels {
        Some(l) => [0u8, 1]
            .iter()
            .map(|c| (0..l.len()).filter(|&i| l[i] == *c).collect::<Vec<_>>())
            .filter(|s| !s.is_empty())
            .collect(),
        None => vec![(0..dataset.len()).collect()],
    };
    let mut rng = rng::seeded(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut stratum in strata {
        let n_test = (stratum.len() as f64 * test_fraction).round() as usize;
        if n_test == 0 || n_test == stratum.len() {
            return Err(Error::Config(format!(
                "a stratum of {} samples cannot be split with test fraction {test_fraction}",
                stratum.len()
            )));
        }
        stratum.shuffle(&mut rng);
        test.extend_from_slice(&stratum[..n_test]);
        train.extend_from_slice(&stratum[n_test..]);
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok((train, test))
}

pub fn split(dataset: &ContaminatedDataset, test_fraction: f64, seed: u64) -> Result<(ContaminatedDataset, ContaminatedDataset)> {
    let (train, test) = split_indices(dataset, test_fraction, seed)?;
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// Held-out protocol for labeled data: normals are split into train and
/// test, every anomaly goes to the test set, and the training set is then
/// contaminated with noisy copies of the test anomalies.
pub fn contaminated_split(
    dataset: &ContaminatedDataset,
    test_fraction: f64,
    alpha0: f64,
    seed: u64,
) -> Result<(ContaminatedDataset, ContaminatedDataset)> {
    let (normals, anomalies) = dataset.partition()?;
    if anomalies.is_empty() {
        return Err(Error::Config("the dataset has no anomalies to build a test set from".into()));
    }
    let normal_set = ContaminatedDataset::new(normals.clone(), None, dataset.provenance);
    let (train_idx, test_idx) = split_indices(&normal_set, test_fraction, seed)?;
    let train_normals: Vec<Vec<f64>> = train_idx.iter().map(|&i| normals[i].clone()).collect();

    let mut train = contaminate(&train_normals, &anomalies, alpha0, rng::derive_seed(seed, 1))?;
    train.provenance = dataset.provenance;
    train.feature_names = dataset.feature_names.clone();

    let mut rows: Vec<(Vec<f64>, u8)> = test_idx.iter().map(|&i| (normals[i].clone(), 0)).collect();
    rows.extend(anomalies.into_iter().map(|x| (x, 1)));
    rows.shuffle(&mut rng::seeded(rng::derive_seed(seed, 2)));
    let (features, labels) = rows.into_iter().unzip();
    let mut test = ContaminatedDataset::new(features, Some(labels), dataset.provenance);
    test.feature_names = dataset.feature_names.clone();
    Ok((train, test))
}

/// Reads a comma-separated file with a header row. When `label_column` is
/// given, that column becomes the labels (values 0 or 1).
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<ContaminatedDataset> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let parse_err = |row: usize, column: &str, message: String| Error::Parse {
        path: shown.clone(),
        row,
        column: column.to_string(),
        message,
    };

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(0, "-", e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(parse_err(0, "-", "missing header row".into()));
    }
    if let Some(h) = headers.iter().find(|h| h.parse::<f64>().is_ok()) {
        return Err(parse_err(0, h, "header looks numeric; a header row is required".into()));
    }
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| parse_err(0, name, "label column not found in header".into()))?,
        ),
        None => None,
    };

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| parse_err(row, "-", e.to_string()))?;
        if record.len() != headers.len() {
            return Err(parse_err(
                row,
                "-",
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let mut x = Vec::with_capacity(headers.len());
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(row, &headers[c], format!("`{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(row, &headers[c], format!("`{cell}` is not finite")));
            }
            if Some(c) == label_idx {
                if v != 0.0 && v != 1.0 {
                    return Err(parse_err(row, &headers[c], format!("label `{cell}` is not 0 or 1")));
                }
                labels.push(v as u8);
            } else {
                x.push(v);
            }
        }
        features.push(x);
    }

    let mut ds = ContaminatedDataset::new(features, label_idx.map(|_| labels), Provenance::Csv);
    ds.feature_names = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if let Some(name) = label_column {
        ds.label_name = name.to_string();
    }
    Ok(ds)
}

/// Writes features (and labels, if present, as the last column). Floats use
/// the shortest representation that parses back to the same value.
pub fn save_csv(dataset: &ContaminatedDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    let mut header = dataset.feature_names.clone();
    if dataset.labels.is_some() {
        header.push(dataset.label_name.clone());
    }
    let io = |e: csv::Error| Error::Io(e.into());
    writer.write_record(&header).map_err(io)?;
    for (i, x) in dataset.features.iter().enumerate() {
        let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        if let Some(l) = &dataset.labels {
            rec.push(l[i].to_string());
        }
        writer.write_record(&rec).map_err(io)?;
    }
    writer.flush()?;
    Ok(())
}

/// Synthetic tabular benchmark. Normals lie near a random low-dimensional
/// linear subspace, `x = A z + noise` with `z ~ N(0, I)`; anomalies come
/// from compact isotropic clusters whose means are drawn at the typical
/// normal radius, so norms alone do not separate the classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TabularSpec {
    pub dim: usize,
    pub latent_dim: usize,
    /// Standard deviation of the isotropic noise added to normals.
    pub noise: f64,
    pub n_normal: usize,
    pub n_test_normal: usize,
    pub n_test_anomaly: usize,
    pub alpha0: f64,
    pub anomaly_clusters: usize,
    /// Norm of each cluster mean relative to `sqrt(dim)`.
    pub cluster_radius: f64,
    pub cluster_variance: f64,
    /// Seed for the subspace and cluster placement; fixed across experiment
    /// seeds so every run sees the same population.
    pub structure_seed: u64,
}

impl Default for TabularSpec {
    fn default() -> Self {
        Self {
            dim: 20,
            latent_dim: 4,
            noise: 0.1,
            n_normal: 2000,
            n_test_normal: 500,
            n_test_anomaly: 100,
            alpha0: 0.1,
            anomaly_clusters: 2,
            cluster_radius: 1.0,
            cluster_variance: 0.25,
            structure_seed: 0,
        }
    }
}

/// Fixed population parameters derived from a [`TabularSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPopulation {
    /// `dim x latent_dim` loading matrix, row-major.
    pub loadings: Vec<f64>,
    pub anomalies: GaussianMixtureSpec,
}

impl TabularSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dim > 0
            && self.latent_dim > 0
            && self.latent_dim <= self.dim
            && self.noise >= 0.0
            && self.anomaly_clusters > 0
            && self.n_test_anomaly > 0
            && self.n_test_normal > 0
            && self.n_normal > 0
            && self.cluster_radius >= 0.0
            && self.cluster_variance > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid tabular spec {self:?}")))
        }
    }

    pub fn population(&self) -> TabularPopulation {
        let mut rng = rng::seeded(self.structure_seed);
        let scale = 1.0 / (self.latent_dim as f64).sqrt();
        let loadings = (0..self.dim * self.latent_dim)
            .map(|_| rng::standard_normal(&mut rng) * scale)
            .collect();
        let radius = self.cluster_radius * (self.dim as f64).sqrt();
        let components = (0..self.anomaly_clusters)
            .map(|_| {
                let dir: Vec<f64> = (0..self.dim).map(|_| rng::standard_normal(&mut rng)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                MixtureComponent {
                    mean: dir.iter().map(|v| v / norm * radius).collect(),
                    variance: self.cluster_variance,
                    weight: 1.0,
                    role: Role::Anomaly,
                }
            })
            .collect();
        TabularPopulation {
            loadings,
            anomalies: GaussianMixtureSpec { components },
        }
    }

    fn sample_normals(&self, pop: &TabularPopulation, n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let z: Vec<f64> = (0..self.latent_dim).map(|_| rng::standard_normal(rng)).collect();
                (0..self.dim)
                    .map(|j| {
                        let row = &pop.loadings[j * self.latent_dim..(j + 1) * self.latent_dim];
                        row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>()
                            + self.noise * rng::standard_normal(rng)
                    })
                    .collect()
            })
            .collect()
    }

    /// `(contaminated train, labeled test)`. Training anomalies are noisy
    /// copies of the test anomalies.
    pub fn generate(&self, seed: u64) -> Result<(ContaminatedDataset, ContaminatedDataset)> {
        self.validate()?;
        let pop = self.population();
        let mut rng = rng::seeded(seed);
        let train_normals = self.sample_normals(&pop, self.n_normal, &mut rng);
        let mut test_rows: Vec<(Vec<f64>, u8)> = self
            .sample_normals(&pop, self.n_test_normal, &mut rng)
            .into_iter()
            .map(|x| (x, 0))
            .collect();
        let pool = pop.anomalies.sample(self.n_test_anomaly, &mut rng);
        test_rows.extend(pool.iter().cloned().map(|x| (x, 1)));
        test_rows.shuffle(&mut rng);
        let (features, labels) = test_rows.into_iter().unzip();
        let test = ContaminatedDataset::new(features, Some(labels), Provenance::SyntheticTabular);
        let mut train = contaminate(&train_normals, &pool, self.alpha0, rng::derive_seed(seed, 2))?;
        train.provenance = Provenance::SyntheticTabular;
        Ok((train, test))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_counts() {
        let d = gen_toy(1);
        assert_eq!(d.len(), 100);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.anomaly_count(), Some(10));
        assert!((d.alpha0.unwrap() - 0.1).abs() < 1e-15);
        d.validate().unwrap();
    }

    #[test]
    fn toy_normal_mean_within_clt_bound() {
        let d = gen_toy(42);
        let labels = d.labels.as_ref().unwrap();
        let normals: Vec<&Vec<f64>> = d.features.iter().zip(labels).filter(|(_, &l)| l == 0).map(|(x, _)| x).collect();
        assert_eq!(normals.len(), 90);
        let bound = 3.0 * (0.07_f64 / 90.0).sqrt();
        for j in 0..2 {
            let mean = normals.iter().map(|x| x[j]).sum::<f64>() / 90.0;
            assert!((mean - 1.0).abs() < bound, "coordinate {j}: mean {mean}");
        }
    }

    #[test]
    fn toy_is_seeded() {
        assert_eq!(gen_toy(7), gen_toy(7));
        assert_ne!(gen_toy(7).features, gen_toy(8).features);
    }

    #[test]
    fn toy_component_variances_converge() {
        let mut rng = rng::seeded(3);
        for comp in toy_mixture().components {
            let spec = GaussianMixtureSpec {
                components: vec![comp.clone()],
            };
            let rows = spec.sample(100_000, &mut rng);
            for v in feature_variance(&rows) {
                assert!((v / comp.variance - 1.0).abs() < 0.02, "{v} vs {}", comp.variance);
            }
        }
    }

    #[test]
    fn contamination_count_solves_ratio() {
        assert_eq!(contamination_count(90, 0.1), 10);
        assert_eq!(contamination_count(90, 0.0), 0);
        assert_eq!(contamination_count(2000, 0.1), 222);
    }

    #[test]
    fn contaminate_with_zero_ratio_is_identity() {
        let normals = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let d = contaminate(&normals, &[], 0.0, 0).unwrap();
        assert_eq!(d.anomaly_count(), Some(0));
        let mut rows = d.features.clone();
        rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(rows, normals);
    }

    #[test]
    fn contaminate_bookkeeping() {
        let normals: Vec<Vec<f64>> = (0..90).map(|i| vec![i as f64, 0.0]).collect();
        let pool: Vec<Vec<f64>> = (0..4).map(|i| vec![100.0 + i as f64, 5.0]).collect();
        let before = (normals.clone(), pool.clone());
        let d = contaminate(&normals, &pool, 0.1, 3).unwrap();
        assert_eq!((normals, pool), before);
        assert_eq!(d.len(), 100);
        assert_eq!(d.anomaly_count(), Some(10));
    }

    #[test]
    fn contaminate_rejects_bad_inputs() {
        let normals = vec![vec![0.0]];
        assert!(matches!(contaminate(&normals, &[vec![1.0]], 1.0, 0), Err(Error::Config(_))));
        assert!(matches!(contaminate(&normals, &[], 0.5, 0), Err(Error::Config(_))));
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let d = gen_toy(9);
        let (train, test) = split_indices(&d, 0.2, 1).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let (tr, te) = split(&d, 0.2, 1).unwrap();
        let ratio = |s: &ContaminatedDataset| s.anomaly_count().unwrap() as f64 / s.len() as f64;
        assert!((ratio(&tr) - 0.1).abs() <= 1.0 / 80.0);
        assert!((ratio(&te) - 0.1).abs() <= 1.0 / 20.0);
    }

    #[test]
    fn split_rejects_empty_stratum() {
        let d = gen_toy_with(0, 90, 1);
        assert!(matches!(split(&d, 0.2, 0), Err(Error::Config(_))));
        assert!(split(&d, 0.0, 0).is_err());
        assert!(split(&d, 1.0, 0).is_err());
    }

    #[test]
    fn contaminated_split_sends_anomalies_to_test() {
        let d = gen_toy_with(4, 200, 20);
        let (train, test) = contaminated_split(&d, 0.25, 0.1, 5).unwrap();
        assert_eq!(test.len(), 50 + 20);
        assert_eq!(test.anomaly_count(), Some(20));
        assert_eq!(train.len(), 150 + contamination_count(150, 0.1));
    }

    #[test]
    fn tabular_generation_shapes() {
        let spec = TabularSpec {
            n_normal: 90,
            n_test_normal: 30,
            n_test_anomaly: 10,
            ..TabularSpec::default()
        };
        let (train, test) = spec.generate(1).unwrap();
        assert_eq!(train.len(), 100);
        assert_eq!(train.dim(), 20);
        assert_eq!(train.anomaly_count(), Some(10));
        assert_eq!(test.len(), 40);
        assert_eq!(spec.generate(1).unwrap(), (train, test));
    }
}
