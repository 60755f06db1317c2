//! The network: singular-value encoding, self-attention refinement, spectral
//! propagation and readout.

mod attention;
mod checkpoint;
mod config;
mod encoding;
mod spectral;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{softmax_rows, ParamSet, ParamVars, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency_with, AdjacencyStorage, DirectedGraph};
use crate::numerics::{full_svd, truncated_svd, Matrix, SpectralBasis, TruncatedSvdParams};

pub use attention::{mhsa_block, AttentionOutput};
pub use checkpoint::Checkpoint;
pub use config::{Activation, BasisRank, EncodingVariant, ModelConfig, ModelShape, SpectralConfig};
pub use encoding::{encode_singular_values, sinusoidal_encoding};
pub use spectral::{spectral_forward, PropagationBasis};

/// Hyperparameters, data dimensions and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub shape: ModelShape,
    pub params: ParamSet,
}

/// Everything recorded by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub logits: Var,
    pub encoding: Var,
    pub refined: Var,
    pub attention: Vec<Var>,
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-s..=s))
}

impl Model {
    /// Fresh weights: uniform Glorot for weight matrices, zero biases, unit layer-norm gains.
    pub fn new(config: ModelConfig, shape: ModelShape, seed: u64) -> Result<Self> {
        config.validate()?;
        shape.validate()?;
        let d = config.hidden;
        let dh = config.head_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let ones = || Matrix::filled(1, d, 1.0);
        let zeros = || Matrix::zeros(1, d);

        p.insert("enc.w", glorot(d + 1, d, &mut rng));
        p.insert("enc.b", zeros());
        p.insert("enc.ln.gain", ones());
        p.insert("enc.ln.bias", zeros());
        for h in 0..config.heads {
            for kind in ["q", "k", "v"] {
                p.insert(format!("attn.h{h}.{kind}"), glorot(d, dh, &mut rng));
            }
        }
        p.insert("attn.out", glorot(d, d, &mut rng));
        p.insert("attn.ln1.gain", ones());
        p.insert("attn.ln1.bias", zeros());
        p.insert("attn.ffn1.w", glorot(d, d, &mut rng));
        p.insert("attn.ffn1.b", zeros());
        p.insert("attn.ffn2.w", glorot(d, d, &mut rng));
        p.insert("attn.ffn2.b", zeros());
        p.insert("attn.ln2.gain", ones());
        p.insert("attn.ln2.bias", zeros());
        p.insert("spec.in.w", glorot(shape.input_dim, d, &mut rng));
        p.insert("spec.in.b", zeros());
        for l in 0..config.layers {
            p.insert(format!("spec.l{l}.w"), glorot(d, d, &mut rng));
            p.insert(format!("spec.l{l}.b"), zeros());
        }
        p.insert("readout.w", glorot(d, shape.num_classes, &mut rng));
        if config.readout_bias {
            p.insert("readout.b", Matrix::zeros(1, shape.num_classes));
        }
        Ok(Model {
            config,
            shape,
            params: p,
        })
    }

    /// Replaces the weights after checking names and shapes against a fresh model.
    pub fn with_params(&self, params: ParamSet) -> Result<Model> {
        check_layout(&self.params, &params)?;
        Ok(Model {
            config: self.config.clone(),
            shape: self.shape,
            params,
        })
    }

    /// Builds the full forward graph on `tape` from registered parameters.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        features: Var,
        basis: &PropagationBasis,
        training: bool,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        forward(tape, vars, &self.config, features, basis, training, rng)
    }

    /// Eval-mode logits (dropout off).
    pub fn logits(&self, features: &Arc<Matrix>, basis: &PropagationBasis) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape)?;
        let x = tape.constant_shared(Arc::clone(features))?;
        // The generator is never drawn from outside training mode.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut tape, &vars, x, basis, false, &mut rng)?;
        Ok(tape.value(out.logits).clone())
    }
}

fn check_layout(expected: &ParamSet, got: &ParamSet) -> Result<()> {
    if expected.len() != got.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} parameter tensors, found {}",
            expected.len(),
            got.len()
        )));
    }
    for (name, value) in expected.iter() {
        let g = got.require(name)?;
        if g.shape() != value.shape() || g.len() != value.len() {
            return Err(Error::InvalidArgument(format!(
                "parameter {name} has shape {:?}, expected {:?}",
                g.shape(),
                value.shape()
            )));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("parameter {name}")));
        }
    }
    Ok(())
}

/// `encode_singular_values → mhsa_block → spectral_forward`.
pub fn forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    vars: &ParamVars,
    cfg: &ModelConfig,
    features: Var,
    basis: &PropagationBasis,
    training: bool,
    rng: &mut R,
) -> Result<ForwardOutput> {
    let encoding = encode_singular_values(tape, vars, cfg, &basis.sigma)?;
    let att = mhsa_block(tape, vars, cfg, encoding, training, rng)?;
    let logits = spectral_forward(tape, vars, cfg, features, basis, att.refined, training, rng)?;
    Ok(ForwardOutput {
        logits,
        encoding,
        refined: att.refined,
        attention: att.weights,
    })
}

/// Class probabilities and argmax labels (ties go to the lowest class index).
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probabilities: Matrix,
    pub labels: Vec<usize>,
}

pub fn predict(logits: &Matrix) -> Prediction {
    let probabilities = softmax_rows(logits);
    let labels = (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    Prediction {
        probabilities,
        labels,
    }
}

/// Normalizes the adjacency of `graph` and factors it per `cfg`.
pub fn compute_basis(graph: &DirectedGraph, cfg: &SpectralConfig) -> Result<SpectralBasis> {
    cfg.validate()?;
    let n = graph.num_nodes();
    let norm = normalize_adjacency_with(graph, cfg.dense_max_nodes);
    if cfg.uses_full(n) {
        return full_svd(&norm.to_dense());
    }
    let params = TruncatedSvdParams {
        k: cfg.d_svd.min(n),
        oversample: cfg.oversample,
        power_iters: cfg.power_iters,
        seed: cfg.seed,
    };
    match &norm.matrix {
        AdjacencyStorage::Dense(m) => truncated_svd(m, params),
        AdjacencyStorage::Sparse(s) => truncated_svd(s, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_tie_and_overflow() {
        let logits = Matrix::from_rows(&[vec![0.0, 0.0], vec![1000.0, 0.0]]).unwrap();
        let p = predict(&logits);
        assert_eq!(p.labels, vec![0, 0]);
        assert_eq!(p.probabilities.row(0), &[0.5, 0.5]);
        assert_eq!(p.probabilities[(1, 0)], 1.0);
        assert!(p.probabilities[(1, 1)] >= 0.0 && p.probabilities[(1, 1)] < 1e-300);
    }

    #[test]
    fn parameter_layout() {
        let cfg = ModelConfig { hidden: 8, heads: 2, layers: 1, filters: 2, ..ModelConfig::default() };
        let m = Model::new(cfg, ModelShape { input_dim: 3, num_classes: 4 }, 0).unwrap();
        assert_eq!(m.params.get("enc.w").unwrap().shape(), (9, 8));
        assert_eq!(m.params.get("attn.h1.q").unwrap().shape(), (8, 4));
        assert_eq!(m.params.get("spec.in.w").unwrap().shape(), (3, 8));
        assert_eq!(m.params.get("readout.w").unwrap().shape(), (8, 4));
        assert!(m.params.get("spec.l1.w").is_none());
        let bound = (6.0f64 / 17.0).sqrt();
        assert!(m.params.get("enc.w").unwrap().max_abs() <= bound);
    }

    #[test]
    fn with_params_checks_shapes() {
        let cfg = ModelConfig { hidden: 4, heads: 2, layers: 1, filters: 1, ..ModelConfig::default() };
        let m = Model::new(cfg, ModelShape { input_dim: 2, num_classes: 2 }, 0).unwrap();
        let mut bad = m.params.clone();
        bad.insert("readout.w", Matrix::zeros(3, 3));
        assert!(m.with_params(bad).is_err());
        assert!(m.with_params(m.params.clone()).is_ok());
    }

    #[test]
    fn single_class_rejected() {
        let shape = ModelShape { input_dim: 2, num_classes: 1 };
        assert!(Model::new(ModelConfig::default(), shape, 0).is_err());
    }
}
