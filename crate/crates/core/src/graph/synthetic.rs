use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{make_splits, Dataset, DirectedGraph};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Directed stochastic block model over a ring of classes.
///
/// Class `c` links to class `c + 1` with `p_forward` and back with `p_backward`;
/// the ring closes (`C-1 → 0`) only when there are at least three classes.
/// Every other ordered class pair, including same-class pairs, uses `p_cross`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmParams {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub p_forward: f64,
    pub p_backward: f64,
    pub p_cross: f64,
    pub feature_dim: usize,
    /// Standard deviation of the Gaussian feature noise.
    pub feature_noise: f64,
    /// Length of the per-class mean vector; 0 gives pure-noise features.
    #[serde(default = "default_class_signal")]
    pub class_signal: f64,
    pub seed: u64,
}

fn default_class_signal() -> f64 {
    1.0
}

impl SbmParams {
    fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_forward", self.p_forward),
            ("p_backward", self.p_backward),
            ("p_cross", self.p_cross),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} = {p} is not a probability")));
            }
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        if self.num_nodes < self.num_classes {
            return Err(Error::InvalidArgument("fewer nodes than classes".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidArgument("feature_dim must be positive".into()));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(Error::InvalidArgument("feature_noise must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn class_of(&self, node: usize) -> usize {
        node * self.num_classes / self.num_nodes
    }

    /// Edge probability for an ordered pair of classes.
    pub fn pair_probability(&self, from: usize, to: usize) -> f64 {
        let c = self.num_classes;
        let ring = c > 2;
        if to == from + 1 || (ring && from == c - 1 && to == 0) {
            self.p_forward
        } else if from == to + 1 || (ring && to == c - 1 && from == 0) {
            self.p_backward
        } else {
            self.p_cross
        }
    }
}

/// Samples a graph with per-class features, and a split with `per_class_train`
/// training nodes per class and `val_size` validation nodes (split seed = `params.seed`).
pub fn generate_directed_sbm(
    params: &SbmParams,
    per_class_train: usize,
    val_size: usize,
) -> Result<Dataset> {
    params.validate()?;
    let n = params.num_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let labels: Vec<usize> = (0..n).map(|i| params.class_of(i)).collect();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let p = params.pair_probability(labels[i], labels[j]);
            if p > 0.0 && rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let graph = DirectedGraph::new(n, edges)?;

    let noise = Normal::new(0.0, params.feature_noise)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut features = Matrix::zeros(n, params.feature_dim);
    for i in 0..n {
        let hot = labels[i] % params.feature_dim;
        for (j, x) in features.row_mut(i).iter_mut().enumerate() {
            let mean = if j == hot { params.class_signal } else { 0.0 };
            *x = mean + noise.sample(&mut rng);
        }
    }
    let split = make_splits(&labels, per_class_train, val_size, params.seed)?;
    Dataset::new(graph, features, labels, params.num_classes, split)
}
