//! Fixtures and oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svdformer::autodiff::{finite_difference_check, GradCheckReport, ParamSet, ParamVars, Tape, Var};
use svdformer::graph::{generate_directed_sbm, normalize_adjacency, Dataset, DatasetSplit, DirectedGraph, SbmParams};
use svdformer::model::{spectral_forward, Activation, Model, ModelConfig, ModelShape, PropagationBasis};
use svdformer::numerics::full_svd;
use svdformer::Matrix;

pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Erdős–Rényi directed graph without self-loops.
pub fn random_graph(n: usize, p: f64, rng: &mut impl Rng) -> DirectedGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    DirectedGraph::new(n, edges).unwrap()
}

/// A graph with at least one edge whose reverse is absent.
pub fn asymmetric_graph(n: usize, p: f64, seed: u64) -> DirectedGraph {
    let mut r = rng(seed);
    loop {
        let g = random_graph(n, p, &mut r);
        if !g.is_symmetric() {
            return g;
        }
    }
}

/// `Â` as a dense matrix computed entry by entry from the edge list.
pub fn normalized_oracle(g: &DirectedGraph) -> Matrix {
    let n = g.num_nodes();
    let mut a = Matrix::identity(n);
    for &(s, d) in g.edges() {
        a[(s, d)] = 1.0;
    }
    let row: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).sum()).collect();
    let col: Vec<f64> = (0..n).map(|j| (0..n).map(|i| a[(i, j)]).sum()).collect();
    Matrix::from_fn(n, n, |i, j| a[(i, j)] / (row[i] * col[j]).sqrt())
}

pub fn full_basis(g: &DirectedGraph) -> PropagationBasis {
    PropagationBasis::new(&full_svd(&normalize_adjacency(g).to_dense()).unwrap())
}

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        hidden: 8,
        heads: 2,
        layers: 1,
        filters: 2,
        ..ModelConfig::default()
    }
}

/// N = 12, two classes, a rank-6 basis and a model whose every weight is perturbed.
pub struct TinyProblem {
    pub dataset: Dataset,
    pub basis: PropagationBasis,
    pub model: Model,
}

pub fn tiny_problem(seed: u64) -> TinyProblem {
    let n = 12;
    let graph = asymmetric_graph(n, 0.25, seed);
    let mut r = rng(seed ^ 0x5eed);
    let features = uniform(n, 4, &mut r);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let split = DatasetSplit {
        train: (0..6).collect(),
        val: (6..9).collect(),
        test: (9..12).collect(),
    };
    let dataset = Dataset::new(graph, features, labels, 2, split).unwrap();
    let svd = full_svd(&normalize_adjacency(&dataset.graph).to_dense()).unwrap();
    let basis = PropagationBasis::new(&svd.truncate(6).unwrap());
    let shape = ModelShape { input_dim: 4, num_classes: 2 };
    let mut model = Model::new(tiny_config(), shape, seed).unwrap();
    for (_, p) in model.params.iter_mut() {
        for v in p.as_mut_slice() {
            *v += r.random_range(-0.1..0.1);
        }
    }
    TinyProblem { dataset, basis, model }
}

/// Finite differences over every weight of the tiny model, training-mode
/// forward with dropout masks frozen by reseeding.
pub fn end_to_end_gradcheck(seed: u64) -> GradCheckReport {
    let TinyProblem { dataset, basis, model } = tiny_problem(seed);
    let features = Arc::new(dataset.features.clone());
    let cfg = model.config.clone();
    finite_difference_check(&model.params, GRAD_EPS, |tape, vars| {
        let mut r = rng(99);
        let x = tape.constant_shared(Arc::clone(&features))?;
        let out = svdformer::model::forward(tape, vars, &cfg, x, &basis, true, &mut r)?;
        tape.masked_cross_entropy(out.logits, &dataset.labels, &dataset.split.train)
    })
    .unwrap()
}

/// Every differentiable tape op checked in isolation. Each op's output is
/// contracted with a fixed random matrix so all output entries matter.
pub fn op_gradchecks(seed: u64) -> Vec<(&'static str, GradCheckReport)> {
    let mut r = rng(seed);
    let mut params = ParamSet::new();
    params.insert("a", uniform(4, 5, &mut r));
    params.insert("b", uniform(4, 5, &mut r));
    params.insert("c", uniform(5, 3, &mut r));
    params.insert("row", uniform(1, 5, &mut r));
    params.insert("col", uniform(4, 1, &mut r));
    params.insert("gain", uniform(1, 5, &mut r));
    let weights = Arc::new(uniform(4, 5, &mut r));
    let labels = vec![0, 4, 2, 1];

    type Build = fn(&mut Tape, &ParamVars, &[usize]) -> svdformer::Result<Var>;
    let ops: Vec<(&'static str, Build)> = vec![
        ("matmul", |t, v, _| {
            let ac = t.matmul(v.get("a")?, v.get("c")?)?;
            pad(t, ac, 5)
        }),
        ("transpose", |t, v, _| {
            let x = t.transpose(v.get("a")?)?;
            t.transpose(x)
        }),
        ("add", |t, v, _| t.add(v.get("a")?, v.get("b")?)),
        ("add_row", |t, v, _| t.add_row(v.get("a")?, v.get("row")?)),
        ("mul", |t, v, _| t.mul(v.get("a")?, v.get("b")?)),
        ("scale_rows", |t, v, _| t.scale_rows(v.get("a")?, v.get("col")?)),
        ("scale", |t, v, _| t.scale(v.get("a")?, -1.7)),
        ("concat_cols", |t, v, _| {
            let ab = t.concat_cols(&[v.get("a")?, v.get("b")?])?;
            t.slice_cols(ab, 3, 8)
        }),
        ("slice_cols", |t, v, _| t.slice_cols(v.get("a")?, 1, 4).and_then(|s| pad(t, s, 5))),
        ("softmax_rows", |t, v, _| t.softmax_rows(v.get("a")?)),
        ("layer_norm", |t, v, _| t.layer_norm(v.get("a")?, v.get("gain")?, v.get("row")?, 1e-5)),
        ("relu", |t, v, _| t.relu(v.get("a")?)),
        ("gelu", |t, v, _| t.gelu(v.get("a")?)),
        ("dropout", |t, v, _| t.dropout(v.get("a")?, 0.3, true, &mut rng(5))),
    ];

    let mut out = Vec::new();
    for (name, build) in ops {
        let w = Arc::clone(&weights);
        let report = finite_difference_check(&params, GRAD_EPS, |t, v| {
            let y = build(t, v, &labels)?;
            let wv = t.constant_shared(Arc::clone(&w))?;
            let prod = t.mul(y, wv)?;
            t.sum(prod)
        })
        .unwrap();
        out.push((name, report));
    }
    let ce = finite_difference_check(&params, GRAD_EPS, |t, v| {
        let z = t.matmul(v.get("a")?, v.get("c")?)?;
        let logits = t.concat_cols(&[z, v.get("col")?])?;
        let mut lab = labels.clone();
        lab[1] = 3;
        t.masked_cross_entropy(logits, &lab, &[0, 1, 3])
    })
    .unwrap();
    out.push(("masked_cross_entropy", ce));
    let sum = finite_difference_check(&params, GRAD_EPS, |t, v| {
        let sq = t.mul(v.get("b")?, v.get("b")?)?;
        t.sum(sq)
    })
    .unwrap();
    out.push(("sum", sum));
    out
}

/// Widens a `4 x c` value to `4 x width` with zero columns so it can be weighted.
fn pad(t: &mut Tape, x: Var, width: usize) -> svdformer::Result<Var> {
    let (rows, cols) = t.value(x).shape();
    let zeros = t.constant(Matrix::zeros(rows, width - cols))?;
    t.concat_cols(&[x, zeros])
}

/// Frobenius distance between one identity-activation spectral layer and the
/// direct product `(Â H0) W + b`. With `sigma_scaled` the filters are all ones;
/// otherwise every filter column equals `σ`, the unmodulated spectrum.
pub fn filter_identity_error(seed: u64, sigma_scaled: bool) -> f64 {
    let n = 20;
    let d = 8;
    let graph = asymmetric_graph(n, 0.15, seed);
    let basis = full_basis(&graph);
    let cfg = ModelConfig {
        hidden: d,
        heads: 2,
        layers: 1,
        filters: 1,
        activation: Activation::Identity,
        readout_bias: false,
        sigma_scaled_filters: sigma_scaled,
        ..ModelConfig::default()
    };
    let shape = ModelShape { input_dim: 5, num_classes: d };
    let mut model = Model::new(cfg.clone(), shape, seed).unwrap();
    let mut r = rng(seed);
    model.params.insert("spec.in.b", uniform(1, d, &mut r));
    model.params.insert("spec.l0.b", uniform(1, d, &mut r));
    model.params.insert("readout.w", Matrix::identity(d));
    let x = uniform(n, 5, &mut r);

    let mut tape = Tape::new();
    let vars = model.params.register(&mut tape).unwrap();
    let xv = tape.constant(x.clone()).unwrap();
    let filters = if sigma_scaled {
        Matrix::filled(basis.rank(), d, 1.0)
    } else {
        Matrix::from_fn(basis.rank(), d, |i, _| basis.sigma[i])
    };
    let e = tape.constant(filters).unwrap();
    let out = spectral_forward(&mut tape, &vars, &cfg, xv, &basis, e, false, &mut r).unwrap();

    let p = &model.params;
    let h0 = x.matmul(p.get("spec.in.w").unwrap()).unwrap();
    let h0 = add_row(&h0, p.get("spec.in.b").unwrap());
    let a = normalized_oracle(&graph);
    let expected = add_row(
        &a.matmul(&h0).unwrap().matmul(p.get("spec.l0.w").unwrap()).unwrap(),
        p.get("spec.l0.b").unwrap(),
    );
    tape.value(out).sub(&expected).unwrap().frobenius_norm()
}

pub fn add_row(m: &Matrix, row: &Matrix) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] + row[(0, j)])
}

/// Two well-separated Gaussian classes on a sparse random graph.
pub fn separable_dataset(seed: u64) -> Dataset {
    let params = SbmParams {
        num_nodes: 40,
        num_classes: 2,
        p_forward: 0.1,
        p_backward: 0.05,
        p_cross: 0.05,
        feature_dim: 4,
        feature_noise: 0.3,
        class_signal: 2.0,
        seed,
    };
    generate_directed_sbm(&params, 5, 10).unwrap()
}

/// Directional three-class ring with pure-noise features.
pub fn ring_params(seed: u64) -> SbmParams {
    SbmParams {
        num_nodes: 300,
        num_classes: 3,
        p_forward: 0.3,
        p_backward: 0.0,
        p_cross: 0.02,
        feature_dim: 16,
        feature_noise: 1.0,
        class_signal: 0.0,
        seed,
    }
}

/// Largest absolute change of eval-mode logits when every edge is reversed.
pub fn reversal_logit_change(seed: u64) -> f64 {
    let graph = asymmetric_graph(30, 0.1, seed);
    let mut r = rng(seed);
    let x = Arc::new(uniform(30, 6, &mut r));
    let shape = ModelShape { input_dim: 6, num_classes: 3 };
    let model = Model::new(tiny_config(), shape, seed).unwrap();
    let a = model.logits(&x, &full_basis(&graph)).unwrap();
    let b = model.logits(&x, &full_basis(&graph.reversed())).unwrap();
    a.sub(&b).unwrap().max_abs()
}

/// SVD fixture `i`: dense, rank-deficient, repeated-σ or degenerate shapes, sizes 1-64.
pub fn svd_fixture(i: usize, seed: u64) -> Matrix {
    use svdformer::numerics::orthonormalize;
    let mut r = rng(seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
    let m = r.random_range(1..=64);
    let n = r.random_range(1..=64);
    match i % 5 {
        0 => uniform(m, n, &mut r),
        1 => {
            let k = m.min(n);
            let rank = r.random_range(0..k.max(1));
            uniform(m, rank, &mut r).matmul(&uniform(rank, n, &mut r)).unwrap()
        }
        2 => {
            let k = m.min(n);
            let q1 = orthonormalize(&uniform(m, k, &mut r));
            let q2 = orthonormalize(&uniform(n, k, &mut r));
            let levels = [3.0, 3.0, 3.0, 1.5, 1.5, 0.25];
            let sigma: Vec<f64> = (0..k).map(|j| levels[j * levels.len() / k.max(1)]).collect();
            let scaled = Matrix::from_fn(m, k, |a, b| q1[(a, b)] * sigma[b]);
            scaled.matmul_nt(&q2).unwrap()
        }
        3 => {
            // Graded columns spanning twelve orders of magnitude.
            let base = uniform(m, n, &mut r);
            Matrix::from_fn(m, n, |a, b| base[(a, b)] * 10f64.powf(-12.0 * b as f64 / n as f64))
        }
        _ => match r.random_range(0..3) {
            0 => Matrix::zeros(m, n),
            1 => uniform(1, n, &mut r),
            _ => uniform(m, 1, &mut r),
        },
    }
}

/// `(residual, max orthonormality defect, sorted descending and nonnegative)`.
pub fn svd_quality(a: &Matrix) -> (f64, f64, bool) {
    let s = full_svd(a).unwrap();
    let (du, dv) = s.orthonormality_defect();
    let sorted = s.sigma.windows(2).all(|w| w[0] >= w[1]) && s.sigma.iter().all(|&x| x >= 0.0);
    (s.relative_residual(a), du.max(dv), sorted)
}

/// `n x n` matrix with Haar-like random singular vectors and singular values
/// `1/(i+1)^2` (`quadratic`) or `exp(-i/10)`.
pub fn decaying_spectrum(n: usize, seed: u64, quadratic: bool) -> Matrix {
    use svdformer::numerics::orthonormalize;
    let mut r = rng(seed);
    let q1 = orthonormalize(&uniform(n, n, &mut r));
    let q2 = orthonormalize(&uniform(n, n, &mut r));
    let sigma = |i: usize| {
        if quadratic {
            1.0 / ((i + 1) * (i + 1)) as f64
        } else {
            (-(i as f64) / 10.0).exp()
        }
    };
    Matrix::from_fn(n, n, |a, b| q1[(a, b)] * sigma(b)).matmul_nt(&q2).unwrap()
}

/// Worst relative error of the top `k` truncated singular values against the full SVD.
pub fn top_sigma_error(a: &Matrix, params: svdformer::numerics::TruncatedSvdParams) -> f64 {
    let f = full_svd(a).unwrap();
    let t = svdformer::numerics::truncated_svd(a, params).unwrap();
    (0..params.k)
        .map(|i| (t.sigma[i] - f.sigma[i]).abs() / f.sigma[i].max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Small model and schedule used by the training tests and desk-scale experiments.
pub fn small_train_config(seed: u64) -> svdformer::training::TrainConfig {
    svdformer::training::TrainConfig {
        model: ModelConfig {
            hidden: 16,
            heads: 2,
            layers: 2,
            filters: 4,
            ..ModelConfig::default()
        },
        max_epochs: 200,
        seed,
        ..Default::default()
    }
}
