use std::collections::BTreeMap;
use std::env;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use svdformer::autodiff::finite_difference_check;
use svdformer::graph::{io, normalize_adjacency, Dataset, DatasetSplit, DirectedGraph, SbmParams};
use svdformer::model::{self, compute_basis, Checkpoint, Model, ModelConfig, ModelShape, PropagationBasis};
use svdformer::numerics::{full_svd, truncated_svd, TruncatedSvdParams};
use svdformer::training::{self, evaluate, format_mean_std, sample_std, AggregateReport, SeedResult};
use svdformer::{Error, Matrix};

use crate::config::{LoadedConfig, RunConfig};
use crate::output::{matrix_csv, non_empty, write_atomic, SeedReport};

pub const OUTPUT_DIR_ENV: &str = "SVDFORMER_OUTPUT_DIR";

#[derive(Debug, thiserror::Error)]
#[error("gradient check failed: max relative error {max_rel_error:e} exceeds {threshold:e}")]
pub struct GradCheckFailed {
    pub max_rel_error: f64,
    pub threshold: f64,
}

pub fn train(config_path: &Path, jobs: usize, out: Option<PathBuf>) -> Result<()> {
    let LoadedConfig { config, base } = RunConfig::load(config_path)?;
    let dataset = config.dataset.load(&base)?;
    let out_dir = out
        .or_else(|| env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| config.output.directory.clone());
    let hash = config.hash();
    info!(
        "config {hash}: {} nodes, {} edges, {} classes, seeds {:?}",
        dataset.num_nodes(),
        dataset.graph.num_edges(),
        dataset.num_classes,
        config.train.seeds
    );

    let basis = compute_basis(&dataset.graph, &config.spectral)?;
    let basis = Arc::new(PropagationBasis::new(&basis));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("building the worker pool")?;
    let outcomes: Vec<(SeedResult, Option<Error>)> = pool.install(|| {
        config
            .train
            .seeds
            .par_iter()
            .map(|&seed| match run_seed(&config, &hash, &dataset, &basis, seed, &out_dir) {
                Ok(report) => (seed_result(&report), None),
                Err(e) => {
                    warn!("seed {seed} failed: {e}");
                    let failed = SeedResult {
                        seed,
                        test_accuracy: None,
                        val_accuracy: None,
                        best_epoch: None,
                        final_epoch: None,
                        error: Some(e.to_string()),
                    };
                    (failed, Some(e))
                }
            })
            .collect()
    });

    let mut first_error = None;
    let mut per_seed = Vec::with_capacity(outcomes.len());
    for (result, err) in outcomes {
        per_seed.push(result);
        if first_error.is_none() {
            first_error = err;
        }
    }
    if per_seed.iter().any(|r| r.test_accuracy.is_some()) {
        let train_cfg = config.train_config(config.train.seeds[0]);
        let aggregate = AggregateReport::from_results(train_cfg, per_seed)?;
        let path = out_dir.join(format!("{hash}-aggregate.json"));
        write_atomic(&path, aggregate.to_json().as_bytes())?;
        info!("test accuracy {} -> {}", aggregate.summary, path.display());
    }
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn run_seed(
    config: &RunConfig,
    hash: &str,
    dataset: &Dataset,
    basis: &Arc<PropagationBasis>,
    seed: u64,
    out_dir: &Path,
) -> Result<SeedReport, Error> {
    let train_cfg = config.train_config(seed);
    let outcome = training::train_with_basis(dataset, Arc::clone(basis), &train_cfg)?;
    let metrics = |split| evaluate(&outcome.model, dataset, basis, split).map(non_empty);
    let report = SeedReport {
        config: config.clone(),
        config_hash: hash.to_string(),
        seed,
        best_epoch: outcome.history.best_val_epoch,
        final_epoch: outcome.history.final_epoch,
        stopped_early: outcome.history.stopped_early,
        train: metrics("train")?,
        val: metrics("val")?,
        test: metrics("test")?,
    };
    let dir = out_dir.join(format!("{hash}-seed{seed}"));
    if config.output.checkpoint {
        let ckpt = Checkpoint::new(&outcome.model, &config.spectral);
        write_atomic(&dir.join("checkpoint.json"), ckpt.to_json().as_bytes())?;
    }
    if config.output.history {
        write_atomic(&dir.join("history.csv"), outcome.history.to_csv().as_bytes())?;
    }
    let json = serde_json::to_string_pretty(&report).expect("reports serialize");
    write_atomic(&dir.join("report.json"), json.as_bytes())?;
    info!(
        "seed {seed}: best epoch {}, test accuracy {}",
        report.best_epoch,
        report.test.as_ref().map_or("n/a".into(), |m| format!("{:.4}", m.accuracy))
    );
    Ok(report)
}

fn seed_result(r: &SeedReport) -> SeedResult {
    SeedResult {
        seed: r.seed,
        test_accuracy: r.test.as_ref().map(|m| m.accuracy),
        val_accuracy: r.val.as_ref().map(|m| m.accuracy),
        best_epoch: Some(r.best_epoch),
        final_epoch: Some(r.final_epoch),
        error: None,
    }
}

pub fn eval(checkpoint: &Path, config_path: &Path, split: &str, out: Option<&Path>) -> Result<()> {
    let LoadedConfig { config, base } = RunConfig::load(config_path)?;
    let dataset = config.dataset.load(&base)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let spectral = ckpt.spectral.clone();
    let model = ckpt.into_model().map_err(|e| Error::Data {
        path: checkpoint.to_path_buf(),
        message: e.to_string(),
    })?;
    if model.shape.input_dim != dataset.feature_dim() || model.shape.num_classes != dataset.num_classes {
        return Err(Error::Data {
            path: checkpoint.to_path_buf(),
            message: format!(
                "checkpoint expects {} features and {} classes, dataset has {} and {}",
                model.shape.input_dim,
                model.shape.num_classes,
                dataset.feature_dim(),
                dataset.num_classes
            ),
        }
        .into());
    }
    let basis = PropagationBasis::new(&compute_basis(&dataset.graph, &spectral)?);
    let splits: Vec<&str> = match split {
        "all" => vec!["train", "val", "test"],
        "train" | "val" | "test" => vec![split],
        other => {
            return Err(Error::Config(format!("unknown split {other:?}; use train, val, test or all")).into())
        }
    };
    let mut metrics = BTreeMap::new();
    for s in splits {
        metrics.insert(s, non_empty(evaluate(&model, &dataset, &basis, s)?));
    }
    let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    match out {
        Some(path) => write_atomic(path, json.as_bytes())?,
        None => println!("{json}"),
    }
    Ok(())
}

pub struct SvdArgs {
    pub edges: Option<PathBuf>,
    pub num_nodes: Option<usize>,
    pub matrix: Option<PathBuf>,
    pub rank: Option<usize>,
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
    pub out: PathBuf,
}

fn count_rows(path: &Path) -> Result<(String, usize), Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let n = text.lines().filter(|l| !l.trim().is_empty()).count();
    Ok((text, n))
}

pub fn svd(args: SvdArgs) -> Result<()> {
    let m = match (&args.edges, &args.matrix) {
        (Some(edges), _) => {
            let n = args
                .num_nodes
                .ok_or_else(|| Error::Config("--num-nodes is required with --edges".into()))?;
            let graph = io::load_edge_list(edges, n)?;
            normalize_adjacency(&graph).to_dense()
        }
        (None, Some(path)) => {
            let (text, n) = count_rows(path)?;
            io::parse_features(&text, n, path)?
        }
        (None, None) => return Err(Error::Config("pass --edges or --matrix".into()).into()),
    };
    let basis = match args.rank {
        Some(k) => truncated_svd(
            &m,
            TruncatedSvdParams {
                k,
                oversample: args.oversample,
                power_iters: args.power_iters,
                seed: args.seed,
            },
        )?,
        None => full_svd(&m)?,
    };
    let sigma: String = basis.sigma.iter().map(|s| format!("{s:?}\n")).collect();
    write_atomic(&args.out.join("U.csv"), matrix_csv(&basis.u).as_bytes())?;
    write_atomic(&args.out.join("sigma.csv"), sigma.as_bytes())?;
    write_atomic(&args.out.join("V.csv"), matrix_csv(&basis.v).as_bytes())?;
    let (du, dv) = basis.orthonormality_defect();
    println!("shape: {}x{}", m.rows(), m.cols());
    println!("rank: {}", basis.rank());
    println!("relative residual: {:e}", basis.relative_residual(&m));
    println!("orthonormality defect U: {du:e}");
    println!("orthonormality defect V: {dv:e}");
    Ok(())
}

pub fn gen_data(params_path: &Path, seed: Option<u64>, per_class_train: usize, val_size: usize, out: &Path) -> Result<()> {
    let text = fs::read_to_string(params_path).map_err(|e| Error::Io {
        path: params_path.to_path_buf(),
        source: e,
    })?;
    let mut params: SbmParams = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", params_path.display())))?;
    if let Some(s) = seed {
        params.seed = s;
    }
    let ds = svdformer::graph::generate_directed_sbm(&params, per_class_train, val_size)
        .map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&out.join("edges.tsv"), io::format_edge_list(&ds.graph).as_bytes())?;
    write_atomic(&out.join("features.csv"), io::format_features(&ds.features).as_bytes())?;
    write_atomic(&out.join("labels.txt"), io::format_labels(&ds.labels).as_bytes())?;
    write_atomic(&out.join("splits.json"), io::format_splits(&ds.split).as_bytes())?;
    info!(
        "{} nodes, {} edges, split {}/{}/{} -> {}",
        ds.num_nodes(),
        ds.graph.num_edges(),
        ds.split.train.len(),
        ds.split.val.len(),
        ds.split.test.len(),
        out.display()
    );
    Ok(())
}

/// Twelve-node problem: random asymmetric graph, 4 features, 2 classes, rank-6 basis.
fn tiny_problem(seed: u64) -> Result<(Dataset, PropagationBasis, Model), Error> {
    let n = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j)
        .collect();
    let edges: Vec<_> = edges.into_iter().filter(|_| rng.random::<f64>() < 0.25).collect();
    let graph = DirectedGraph::new(n, edges)?;
    let features = Matrix::from_fn(n, 4, |_, _| rng.random_range(-1.0..1.0));
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let split = DatasetSplit {
        train: (0..6).collect(),
        val: (6..9).collect(),
        test: (9..12).collect(),
    };
    let dataset = Dataset::new(graph, features, labels, 2, split)?;
    let svd = full_svd(&normalize_adjacency(&dataset.graph).to_dense())?;
    let basis = PropagationBasis::new(&svd.truncate(6)?);
    let cfg = ModelConfig {
        hidden: 8,
        heads: 2,
        layers: 1,
        filters: 2,
        ..ModelConfig::default()
    };
    let mut model = Model::new(cfg, ModelShape { input_dim: 4, num_classes: 2 }, seed)?;
    // Move biases and layer-norm parameters off their initial constants.
    for (_, p) in model.params.iter_mut() {
        for v in p.as_mut_slice() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    Ok((dataset, basis, model))
}

pub fn gradcheck(seed: u64, eps: f64, threshold: f64) -> Result<()> {
    let (dataset, basis, model) = tiny_problem(seed)?;
    let features = Arc::new(dataset.features.clone());
    let cfg = model.config.clone();
    let report = finite_difference_check(&model.params, eps, |tape, vars| {
        // Same generator every evaluation: dropout masks are frozen.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd20f);
        let x = tape.constant_shared(Arc::clone(&features))?;
        let out = model::forward(tape, vars, &cfg, x, &basis, true, &mut rng)?;
        tape.masked_cross_entropy(out.logits, &dataset.labels, &dataset.split.train)
    })?;
    println!("parameters checked: {}", report.checked);
    println!("excluded at relu kinks: {}", report.excluded);
    if let Some((name, idx)) = &report.worst {
        println!("worst entry: {name}[{idx}]");
    }
    println!("max relative error: {:e}", report.max_rel_error);
    if report.max_rel_error > threshold {
        return Err(GradCheckFailed {
            max_rel_error: report.max_rel_error,
            threshold,
        }
        .into());
    }
    Ok(())
}

pub fn report(paths: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut groups: Vec<(String, Vec<SeedReport>)> = Vec::new();
    for path in paths {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let r: SeedReport = serde_json::from_str(&text).map_err(|e| Error::Data {
            path: path.clone(),
            message: e.to_string(),
        })?;
        match groups.iter_mut().find(|(h, _)| *h == r.config_hash) {
            Some((_, g)) => g.push(r),
            None => groups.push((r.config_hash.clone(), vec![r])),
        }
    }

    let mut text = String::new();
    let mut csv = String::from("config_hash,seeds,test_mean,test_std,summary\n");
    for (hash, reports) in &mut groups {
        reports.sort_by_key(|r| r.seed);
        writeln!(text, "config {hash} ({} seeds)", reports.len())?;
        writeln!(text, "{:>6}  {:>8}  {:>8}  {:>10}", "seed", "test", "val", "best_epoch")?;
        let acc = |m: &Option<svdformer::training::Metrics>| m.as_ref().map(|m| m.accuracy);
        let fmt = |a: Option<f64>| a.map_or("n/a".to_string(), |a| format!("{a:.4}"));
        for r in reports.iter() {
            writeln!(
                text,
                "{:>6}  {:>8}  {:>8}  {:>10}",
                r.seed,
                fmt(acc(&r.test)),
                fmt(acc(&r.val)),
                r.best_epoch
            )?;
        }
        let tests: Vec<f64> = reports.iter().filter_map(|r| acc(&r.test)).collect();
        if tests.is_empty() {
            writeln!(text, "test accuracy: n/a\n")?;
            writeln!(csv, "{hash},{},,,", reports.len())?;
            continue;
        }
        let mean = tests.iter().sum::<f64>() / tests.len() as f64;
        let std = sample_std(&tests);
        let summary = format_mean_std(mean, std);
        writeln!(text, "test accuracy: {summary}\n")?;
        writeln!(csv, "{hash},{},{mean:?},{std:?},{summary}", tests.len())?;
    }
    print!("{text}");
    if let Some(dir) = out {
        write_atomic(&dir.join("summary.txt"), text.as_bytes())?;
        write_atomic(&dir.join("summary.csv"), csv.as_bytes())?;
    }
    Ok(())
}
