//! Run configuration: a `key = value` text file plus overrides.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use psp_core::config::{Dims, ModelConfig, TrainConfig};
use psp_core::data::GeneratorConfig;

use crate::error::{Error, Result};

/// Numeric mode of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn bits(self) -> u32 {
        match self {
            Precision::F32 => 32,
            Precision::F64 => 64,
        }
    }
}

/// Where videos come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic,
    Manifest(PathBuf),
}

/// Everything a `train`, `eval`, `export` or `ablate` invocation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Synthetic data parameters. Its dimensions and background index are
    /// overwritten from the model dims by [`RunConfig::generator`].
    pub generator: GeneratorConfig,
    /// Synthetic videos generated before the 70/10/20 split.
    pub videos: usize,
    pub dataset: DatasetSource,
    /// Seeds the synthetic prototypes and the split.
    pub dataset_seed: u64,
    pub precision: Precision,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            generator: GeneratorConfig::default(),
            videos: 715,
            dataset: DatasetSource::Synthetic,
            dataset_seed: 0,
            precision: Precision::F32,
            output_dir: PathBuf::from("run"),
        }
    }
}

/// Keys that shape the model; a checkpoint stores exactly these.
pub const MODEL_KEYS: &[&str] = &[
    "t",
    "c",
    "n",
    "d-v",
    "d-a",
    "d-l",
    "d-h",
    "d-att",
    "background",
    "supervision",
    "psp-mode",
    "tau",
    "asp-keep-relu",
    "lambda",
    "use-weighting-branch",
    "dropout",
];

/// All keys in the order they are written.
pub const KEYS: &[&str] = &[
    "t",
    "c",
    "n",
    "d-v",
    "d-a",
    "d-l",
    "d-h",
    "d-att",
    "background",
    "supervision",
    "psp-mode",
    "tau",
    "asp-keep-relu",
    "lambda",
    "use-weighting-branch",
    "dropout",
    "optimizer",
    "learning-rate",
    "batch-size",
    "epochs",
    "seed",
    "precision",
    "dataset",
    "videos",
    "dataset-seed",
    "noise-std",
    "span-min",
    "span-max",
    "desync-prob",
    "output-dir",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key} = {value}: expected true or false"))),
    }
}

impl RunConfig {
    /// Sets one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let m = &mut self.train.model;
        let d = &mut m.dims;
        let g = &mut self.generator;
        match key {
            "t" => d.t = parse(key, value)?,
            "c" => d.c = parse(key, value)?,
            "n" => d.n = parse(key, value)?,
            "d-v" => d.d_v = parse(key, value)?,
            "d-a" => d.d_a = parse(key, value)?,
            "d-l" => d.d_l = parse(key, value)?,
            "d-h" => d.d_h = parse(key, value)?,
            "d-att" => d.d_att = parse(key, value)?,
            "background" => m.background = parse(key, value)?,
            "supervision" => m.supervision = parse(key, value)?,
            "psp-mode" => m.psp.mode = parse(key, value)?,
            "tau" => m.psp.tau = parse(key, value)?,
            "asp-keep-relu" => m.psp.asp_keep_relu = parse_bool(key, value)?,
            "lambda" => m.lambda = parse(key, value)?,
            "use-weighting-branch" => m.use_weighting = parse_bool(key, value)?,
            "dropout" => m.dropout = parse(key, value)?,
            "optimizer" => self.train.optimizer = parse(key, value)?,
            "learning-rate" => self.train.learning_rate = parse(key, value)?,
            "batch-size" => self.train.batch_size = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "seed" => self.train.seed = parse(key, value)?,
            "precision" => {
                self.precision = match value {
                    "32" => Precision::F32,
                    "64" => Precision::F64,
                    _ => return Err(Error::Config(format!("precision = {value}: expected 32 or 64"))),
                }
            }
            "dataset" => {
                self.dataset = match value {
                    "synthetic" => DatasetSource::Synthetic,
                    path => DatasetSource::Manifest(PathBuf::from(path)),
                }
            }
            "videos" => self.videos = parse(key, value)?,
            "dataset-seed" => self.dataset_seed = parse(key, value)?,
            "noise-std" => g.noise_std = parse(key, value)?,
            "span-min" => g.span_min = parse(key, value)?,
            "span-max" => g.span_max = parse(key, value)?,
            "desync-prob" => g.desync_prob = parse(key, value)?,
            "output-dir" => self.output_dir = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Current value of a key, formatted so that [`RunConfig::set`] reads it
    /// back unchanged.
    pub fn get(&self, key: &str) -> Option<String> {
        let m = &self.train.model;
        let d = &m.dims;
        let g = &self.generator;
        Some(match key {
            "t" => d.t.to_string(),
            "c" => d.c.to_string(),
            "n" => d.n.to_string(),
            "d-v" => d.d_v.to_string(),
            "d-a" => d.d_a.to_string(),
            "d-l" => d.d_l.to_string(),
            "d-h" => d.d_h.to_string(),
            "d-att" => d.d_att.to_string(),
            "background" => m.background.to_string(),
            "supervision" => m.supervision.to_string(),
            "psp-mode" => m.psp.mode.to_string(),
            "tau" => m.psp.tau.to_string(),
            "asp-keep-relu" => m.psp.asp_keep_relu.to_string(),
            "lambda" => m.lambda.to_string(),
            "use-weighting-branch" => m.use_weighting.to_string(),
            "dropout" => m.dropout.to_string(),
            "optimizer" => self.train.optimizer.name().to_string(),
            "learning-rate" => self.train.learning_rate.to_string(),
            "batch-size" => self.train.batch_size.to_string(),
            "epochs" => self.train.epochs.to_string(),
            "seed" => self.train.seed.to_string(),
            "precision" => self.precision.bits().to_string(),
            "dataset" => match &self.dataset {
                DatasetSource::Synthetic => "synthetic".to_string(),
                DatasetSource::Manifest(p) => p.display().to_string(),
            },
            "videos" => self.videos.to_string(),
            "dataset-seed" => self.dataset_seed.to_string(),
            "noise-std" => g.noise_std.to_string(),
            "span-min" => g.span_min.to_string(),
            "span-max" => g.span_max.to_string(),
            "desync-prob" => g.desync_prob.to_string(),
            "output-dir" => self.output_dir.display().to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key = value", i + 1)));
            };
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// Defaults overlaid with a config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    fn render(&self, keys: &[&str]) -> String {
        keys.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed keys exist")))
            .collect()
    }

    /// Every key, one `key = value` line each.
    pub fn to_text(&self) -> String {
        self.render(KEYS)
    }

    /// The model-shaping keys only.
    pub fn model_text(&self) -> String {
        self.render(MODEL_KEYS)
    }

    /// Synthetic generator settings with dimensions taken from the model.
    pub fn generator(&self) -> GeneratorConfig {
        let d: &Dims = &self.train.model.dims;
        GeneratorConfig {
            t: d.t,
            c: d.c,
            n: d.n,
            d_v: d.d_v,
            d_a: d.d_a,
            background: self.train.model.background,
            seed: self.dataset_seed,
            ..self.generator
        }
    }

    pub fn model(&self) -> &ModelConfig {
        &self.train.model
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.dataset == DatasetSource::Synthetic {
            self.generator().validate()?;
            if self.videos == 0 {
                return Err(Error::Config("videos must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Parses the model-shaping keys written by [`RunConfig::model_text`].
pub fn model_from_text(text: &str) -> Result<ModelConfig> {
    let mut cfg = RunConfig::default();
    cfg.apply_text(text)?;
    cfg.train.model.validate()?;
    Ok(cfg.train.model)
}
