//! The subcommands, callable without going through argument parsing.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use fadogate_core::audio_io::{decode_wav, resample};
use fadogate_core::cache::{read_cache, to_dataset, write_cache, CacheRow};
use fadogate_core::eval::{
    cross_validate, holdout_predictions, train_test_split, EvalMode, EvalParams, EvalReport,
};
use fadogate_core::excerpt::select_excerpt;
use fadogate_core::features::FeatureConfig;
use fadogate_core::svm::{default_c_grid, default_gamma_grid, grid_search};
use fadogate_core::{
    ExcerptStrategy, FeatureExtractor, FeatureVector, Label, LabeledDataset, SvmModel, SvmParams,
};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::read_manifest;

/// How songs are turned into feature vectors.
#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub strategy: ExcerptStrategy,
    pub duration_s: f64,
    pub features: FeatureConfig,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            strategy: ExcerptStrategy::MaxRms,
            duration_s: fadogate_core::excerpt::DEFAULT_DURATION_S,
            features: FeatureConfig::default(),
        }
    }
}

/// Decode, resample, cut the excerpt and extract features for one file.
pub fn analyze_file(
    path: &Path,
    extractor: &FeatureExtractor,
    opts: &AnalysisOptions,
) -> Result<FeatureVector> {
    let audio = decode_wav(path)?;
    let audio = resample(&audio, opts.features.sample_rate)?;
    let excerpt = select_excerpt(&audio, opts.strategy, opts.duration_s)?;
    if excerpt.padded {
        warn!(
            "{}: shorter than {} s, zero-padded",
            path.display(),
            opts.duration_s
        );
    }
    Ok(extractor.extract(&excerpt)?)
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSummary {
    pub processed: usize,
    pub failed: Vec<(String, String)>,
}

/// Extracts one cache row per decodable manifest entry, in manifest order.
/// Fails only when no entry could be processed.
pub fn cmd_extract(
    manifest: &Path,
    out: &Path,
    opts: &AnalysisOptions,
    jobs: Option<usize>,
) -> Result<ExtractSummary> {
    let rows = read_manifest(manifest)?;
    let extractor = FeatureExtractor::new(opts.features.clone())?;
    let results: Vec<Result<FeatureVector>> = with_pool(jobs, || {
        rows.par_iter()
            .map(|r| analyze_file(&r.path, &extractor, opts))
            .collect()
    })?;

    let mut cache = Vec::new();
    let mut failed = Vec::new();
    for (row, res) in rows.iter().zip(results) {
        match res {
            Ok(features) => cache.push(CacheRow {
                path: row.id.clone(),
                label: row.label,
                features,
            }),
            Err(e) => {
                warn!("{}: {e:#}", row.path.display());
                failed.push((row.id.clone(), format!("{e:#}")));
            }
        }
    }
    if cache.is_empty() {
        bail!("no song could be processed ({} failed)", failed.len());
    }
    write_cache(out, &cache)?;
    Ok(ExtractSummary {
        processed: cache.len(),
        failed,
    })
}

pub fn load_dataset(cache: &Path) -> Result<LabeledDataset> {
    let rows = read_cache(cache)?;
    Ok(to_dataset(&rows)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct GridEntry {
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: f64,
    pub cv_accuracy: Option<f64>,
    pub folds: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_support_vectors: usize,
    pub converged: bool,
    pub grid: Vec<GridEntry>,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    /// Forces a grid search even when both parameters are given.
    pub grid: bool,
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            c: None,
            gamma: None,
            grid: false,
            c_grid: default_c_grid(),
            gamma_grid: default_gamma_grid(),
            folds: 10,
            seed: 0,
        }
    }
}

/// (C, gamma, CV accuracy, grid points) for `data` under `opts`.
fn choose_params(
    data: &LabeledDataset,
    opts: &TrainOptions,
) -> Result<(f64, f64, Option<f64>, Vec<GridEntry>)> {
    match (opts.c, opts.gamma, opts.grid) {
        (Some(c), Some(gamma), false) => {
            let params = SvmParams::new(c, gamma);
            let cv = match cross_validate(data, &params, opts.folds, opts.seed) {
                Ok(r) => Some(r.accuracy),
                Err(e) => {
                    warn!("skipping cross-validation: {e}");
                    None
                }
            };
            Ok((c, gamma, cv, Vec::new()))
        }
        (c, gamma, _) => {
            let cs = c.map_or_else(
                || opts.c_grid.clone(),
                |c| {
                    if opts.grid {
                        opts.c_grid.clone()
                    } else {
                        vec![c]
                    }
                },
            );
            let gs = gamma.map_or_else(
                || opts.gamma_grid.clone(),
                |g| {
                    if opts.grid {
                        opts.gamma_grid.clone()
                    } else {
                        vec![g]
                    }
                },
            );
            info!(
                "grid search over {} x {} points, {}-fold",
                cs.len(),
                gs.len(),
                opts.folds
            );
            let r = grid_search(data, &cs, &gs, opts.folds, opts.seed, &SvmParams::default())?;
            let grid = r
                .points
                .iter()
                .map(|p| GridEntry {
                    c: p.c,
                    gamma: p.gamma,
                    accuracy: p.accuracy(),
                })
                .collect();
            Ok((r.best_c, r.best_gamma, Some(r.cv_accuracy), grid))
        }
    }
}

/// Trains on every cache row and writes the model plus a JSON training
/// report.
pub fn cmd_train(
    cache: &Path,
    model_out: &Path,
    report_out: &Path,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    let data = load_dataset(cache)?;
    if !data.has_both_classes() {
        return Err(fadogate_core::Error::SingleClassDataset)
            .with_context(|| cache.display().to_string());
    }
    let (c, gamma, cv_accuracy, grid) = choose_params(&data, opts)?;
    let model = SvmModel::train(&data, &SvmParams::new(c, gamma))?;
    if !model.converged() {
        warn!("solver hit its iteration cap; model may be suboptimal");
    }
    model.save(model_out)?;
    let report = TrainReport {
        c,
        gamma,
        cv_accuracy,
        folds: opts.folds,
        seed: opts.seed,
        n_train: data.len(),
        n_support_vectors: model.support_vectors().len(),
        converged: model.converged(),
        grid,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(report_out, text).with_context(|| format!("writing {}", report_out.display()))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub label: Label,
    pub decision_value: f64,
}

pub enum PredictInput<'a> {
    Cache(&'a Path),
    Audio(&'a [PathBuf]),
}

pub fn cmd_predict(
    model: &Path,
    input: PredictInput<'_>,
    opts: &AnalysisOptions,
) -> Result<Vec<Prediction>> {
    let model = SvmModel::load(model)?;
    let items: Vec<(String, Vec<f64>)> = match input {
        PredictInput::Cache(cache) => read_cache(cache)?
            .into_iter()
            .map(|r| (r.path, r.features.as_slice().to_vec()))
            .collect(),
        PredictInput::Audio(paths) => {
            let extractor = FeatureExtractor::new(opts.features.clone())?;
            paths
                .iter()
                .map(|p| {
                    let f = analyze_file(p, &extractor, opts)
                        .with_context(|| format!("{}", p.display()))?;
                    Ok((p.display().to_string(), f.as_slice().to_vec()))
                })
                .collect::<Result<_>>()?
        }
    };
    items
        .into_iter()
        .map(|(id, x)| {
            let decision_value = model.decision_value(&x).with_context(|| id.clone())?;
            Ok(Prediction {
                id,
                label: Label::from_decision(decision_value),
                decision_value,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    pub mode: EvalMode,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub folds: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub strategy: Option<ExcerptStrategy>,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self {
            mode: EvalMode::Cv,
            c: None,
            gamma: None,
            folds: 10,
            train_fraction: 2.0 / 3.0,
            seed: 0,
            strategy: None,
        }
    }
}

/// Runs cross-validation or a train/test split and writes the JSON report.
/// Missing C or gamma are picked by grid search on the training data.
pub fn cmd_evaluate(cache: &Path, report_out: &Path, opts: &EvaluateOptions) -> Result<EvalReport> {
    let data = load_dataset(cache)?;
    let train_opts = TrainOptions {
        c: opts.c,
        gamma: opts.gamma,
        folds: opts.folds,
        seed: opts.seed,
        ..Default::default()
    };
    let mut report = match opts.mode {
        EvalMode::Cv => {
            let (c, gamma, _, _) = choose_params(&data, &train_opts)?;
            cross_validate(&data, &SvmParams::new(c, gamma), opts.folds, opts.seed)?
        }
        EvalMode::Split => {
            let (train, test) = train_test_split(&data, opts.train_fraction, opts.seed)?;
            let (c, gamma, _, _) = choose_params(&train, &train_opts)?;
            let params = SvmParams::new(c, gamma);
            let items = holdout_predictions(&train, &test, &params)?;
            EvalReport::new(
                items,
                EvalParams {
                    mode: EvalMode::Split,
                    c,
                    gamma,
                    k: None,
                    train_fraction: Some(opts.train_fraction),
                    n_train: Some(train.len()),
                    n_test: Some(test.len()),
                    seed: opts.seed,
                    strategy: None,
                },
            )
        }
    };
    report.params.strategy = opts.strategy.map(|s| s.as_str().to_string());
    report.save(report_out).map_err(|e| anyhow!(e))?;
    Ok(report)
}
