//! Loading data, training, and evaluating from a [`RunConfig`].

use std::fs;
use std::time::Instant;

use psp_core::data::{split_indices, Generator, VideoSample};
use psp_core::tensor::Real;
use psp_core::train::{evaluate, train};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::manifest::load_dataset;
use crate::report::MetricsReport;
use crate::runconfig::{DatasetSource, Precision, RunConfig};

/// Train, validation, and test videos.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<VideoSample>,
    pub val: Vec<VideoSample>,
    pub test: Vec<VideoSample>,
}

impl Splits {
    /// 70/10/20 split by video, seeded by `seed`.
    pub fn new(videos: Vec<VideoSample>, seed: u64) -> Self {
        let (tr, va, te) = split_indices(videos.len(), seed);
        let pick = |idx: &[usize]| idx.iter().map(|&i| videos[i].clone()).collect();
        Self {
            train: pick(&tr),
            val: pick(&va),
            test: pick(&te),
        }
    }
}

/// All videos of the configured dataset, before splitting.
pub fn load_videos(cfg: &RunConfig) -> Result<Vec<VideoSample>> {
    match &cfg.dataset {
        DatasetSource::Synthetic => Ok(Generator::new(cfg.generator())?.dataset(cfg.videos)),
        DatasetSource::Manifest(path) => load_dataset(path),
    }
}

pub fn load_splits(cfg: &RunConfig) -> Result<Splits> {
    Ok(Splits::new(load_videos(cfg)?, cfg.dataset_seed))
}

/// Output of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub checkpoint: Checkpoint,
    /// Test-split metrics and the training loss curve.
    pub report: MetricsReport,
}

fn train_typed<F: Real>(cfg: &RunConfig, splits: &Splits) -> Result<TrainResult> {
    let start = Instant::now();
    let outcome = train::<F>(&cfg.train, &splits.train)?;
    let metrics = evaluate(&outcome.params, cfg.model(), &splits.test)?;
    let checkpoint = Checkpoint::new(cfg.model_text(), &outcome.params)?;
    let seconds = start.elapsed().as_secs_f64();
    let report = MetricsReport::new(&metrics, outcome.loss_curve, cfg.clone(), seconds);
    Ok(TrainResult { checkpoint, report })
}

/// Trains on `splits.train` and scores on `splits.test`.
pub fn train_on(cfg: &RunConfig, splits: &Splits) -> Result<TrainResult> {
    cfg.validate()?;
    match cfg.precision {
        Precision::F32 => train_typed::<f32>(cfg, splits),
        Precision::F64 => train_typed::<f64>(cfg, splits),
    }
}

/// Loads data, trains, and writes `checkpoint.bin`, `report.txt` and
/// `summary.csv` into the output directory.
pub fn run_train(cfg: &RunConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let splits = load_splits(cfg)?;
    let result = train_on(cfg, &splits)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    result.checkpoint.save(&dir.join("checkpoint.bin"))?;
    result.report.write(dir)?;
    Ok(result)
}

fn evaluate_typed<F: Real>(
    checkpoint: &Checkpoint,
    cfg: &RunConfig,
    data: &[VideoSample],
) -> Result<MetricsReport> {
    let start = Instant::now();
    let params = checkpoint.params_as::<F>();
    let metrics = evaluate(&params, &checkpoint.model, data)?;
    let mut echo = cfg.clone();
    echo.train.model = checkpoint.model;
    echo.precision = checkpoint.precision;
    Ok(MetricsReport::new(
        &metrics,
        Vec::new(),
        echo,
        start.elapsed().as_secs_f64(),
    ))
}

/// Scores a checkpoint in its own precision, with dropout disabled. The
/// model configuration comes from the checkpoint; `cfg` is only echoed.
pub fn evaluate_checkpoint(
    checkpoint: &Checkpoint,
    cfg: &RunConfig,
    data: &[VideoSample],
) -> Result<MetricsReport> {
    match checkpoint.precision {
        Precision::F32 => evaluate_typed::<f32>(checkpoint, cfg, data),
        Precision::F64 => evaluate_typed::<f64>(checkpoint, cfg, data),
    }
}
