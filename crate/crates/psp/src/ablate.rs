//! Ablations: train and score every variant over several seeds.

use std::fmt::Write as _;

use psp_core::config::PspMode;
use psp_core::seed::{derive, variant_seed};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::run::{load_videos, train_on, Splits};
use crate::runconfig::RunConfig;

/// Threshold values swept by the `tau` axis.
pub const TAU_GRID: [f64; 5] = [0.0, 0.025, 0.075, 0.095, 0.115];

/// Replicates per variant unless told otherwise.
pub const DEFAULT_REPLICATES: usize = 5;

const REPLICATE_STREAM: u64 = 0x5245_504c;

/// One dimension of an ablation and the values it takes.
#[derive(Debug, Clone, PartialEq)]
pub enum Axis {
    PspMode(Vec<PspMode>),
    Tau(Vec<f64>),
    Lambda(Vec<f64>),
    Weighting(Vec<bool>),
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::PspMode(_) => "psp-mode",
            Axis::Tau(_) => "tau",
            Axis::Lambda(_) => "lambda",
            Axis::Weighting(_) => "use-weighting-branch",
        }
    }

    /// Parses `name` or `name=v1,v2,...`. A bare name takes the default
    /// values: all four propagation modes, the threshold grid, `lambda` 0 and
    /// the base value, weighting off and on.
    pub fn parse(spec: &str, base: &RunConfig) -> Result<Self> {
        let (name, values) = match spec.split_once('=') {
            Some((n, v)) => (n.trim(), Some(v)),
            None => (spec.trim(), None),
        };
        let list = |v: &str| -> Vec<String> { v.split(',').map(|s| s.trim().to_string()).collect() };
        let bad = |v: &str| Error::Config(format!("axis {name}: bad value '{v}'"));
        Ok(match name {
            "psp-mode" => Axis::PspMode(match values {
                None => PspMode::ALL.to_vec(),
                Some(v) => list(v).iter().map(|s| s.parse()).collect::<Result<_, _>>()?,
            }),
            "tau" => Axis::Tau(match values {
                None => TAU_GRID.to_vec(),
                Some(v) => list(v)
                    .iter()
                    .map(|s| s.parse().map_err(|_| bad(s)))
                    .collect::<Result<_>>()?,
            }),
            "lambda" => Axis::Lambda(match values {
                None => vec![0.0, base.train.model.lambda],
                Some(v) => list(v)
                    .iter()
                    .map(|s| s.parse().map_err(|_| bad(s)))
                    .collect::<Result<_>>()?,
            }),
            "use-weighting-branch" | "weighting" => Axis::Weighting(match values {
                None => vec![false, true],
                Some(v) => list(v)
                    .iter()
                    .map(|s| match s.as_str() {
                        "true" | "on" => Ok(true),
                        "false" | "off" => Ok(false),
                        _ => Err(bad(s)),
                    })
                    .collect::<Result<_>>()?,
            }),
            other => return Err(Error::Config(format!("unknown ablation axis '{other}'"))),
        })
    }

    fn len(&self) -> usize {
        match self {
            Axis::PspMode(v) => v.len(),
            Axis::Tau(v) | Axis::Lambda(v) => v.len(),
            Axis::Weighting(v) => v.len(),
        }
    }

    /// Sets value `i` on `cfg` and returns its label.
    fn apply(&self, i: usize, cfg: &mut RunConfig) -> String {
        let m = &mut cfg.train.model;
        let value = match self {
            Axis::PspMode(v) => {
                m.psp.mode = v[i];
                v[i].to_string()
            }
            Axis::Tau(v) => {
                m.psp.tau = v[i];
                v[i].to_string()
            }
            Axis::Lambda(v) => {
                m.lambda = v[i];
                v[i].to_string()
            }
            Axis::Weighting(v) => {
                m.use_weighting = v[i];
                v[i].to_string()
            }
        };
        format!("{}={value}", self.name())
    }
}

/// A named configuration to train.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub config: RunConfig,
}

/// The cartesian product of `axes`, first axis varying slowest. No axes
/// gives the base configuration alone, named `base`.
pub fn variants(base: &RunConfig, axes: &[Axis]) -> Vec<Variant> {
    let mut out = vec![Variant {
        name: String::new(),
        config: base.clone(),
    }];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..axis.len()).map(move |i| {
                    let mut config = v.config.clone();
                    let label = axis.apply(i, &mut config);
                    let name = if v.name.is_empty() {
                        label
                    } else {
                        format!("{},{label}", v.name)
                    };
                    Variant { name, config }
                })
            })
            .collect();
    }
    if axes.is_empty() {
        out[0].name = "base".to_string();
    }
    out
}

/// Dataset seed of replicate `rep`. Every variant sees the same data within a
/// replicate.
pub fn replicate_dataset_seed(base: u64, rep: usize) -> u64 {
    derive(base, &[REPLICATE_STREAM, rep as u64])
}

/// Configuration actually trained for `variant` in replicate `rep`.
pub fn replicate_config(variant: &Variant, rep: usize) -> RunConfig {
    let mut cfg = variant.config.clone();
    cfg.train.seed = variant_seed(variant.config.train.seed, &variant.name, rep as u64);
    cfg.dataset_seed = replicate_dataset_seed(variant.config.dataset_seed, rep);
    cfg
}

/// Results of one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub variant: String,
    /// Test segment accuracy per replicate.
    pub accuracies: Vec<f64>,
}

impl Cell {
    pub fn mean(&self) -> f64 {
        self.accuracies.iter().sum::<f64>() / self.accuracies.len() as f64
    }

    /// Sample standard deviation; zero for a single replicate.
    pub fn std(&self) -> f64 {
        let n = self.accuracies.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        let ss: f64 = self.accuracies.iter().map(|a| (a - m) * (a - m)).sum();
        (ss / (n - 1) as f64).sqrt()
    }
}

/// Root mean of the two variances.
pub fn pooled_std(a: &Cell, b: &Cell) -> f64 {
    ((a.std().powi(2) + b.std().powi(2)) / 2.0).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub replicates: usize,
    pub rows: Vec<Cell>,
}

impl AblationTable {
    pub fn get(&self, variant: &str) -> Option<&Cell> {
        self.rows.iter().find(|c| c.variant == variant)
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|c| c.variant.len()).max().unwrap_or(0).max(7);
        let mut s = format!("{:<width$}  mean +- std (n = {})\n", "variant", self.replicates);
        for c in &self.rows {
            let _ = writeln!(s, "{:<width$}  {:.4} +- {:.4}", c.variant, c.mean(), c.std());
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,mean,std,accuracies\n");
        for c in &self.rows {
            let accs: Vec<String> = c.accuracies.iter().map(f64::to_string).collect();
            let _ = writeln!(s, "\"{}\",{},{},{}", c.variant, c.mean(), c.std(), accs.join(";"));
        }
        s
    }
}

/// Trains every variant `replicates` times and tabulates test accuracy.
/// Runs in parallel; the result does not depend on scheduling.
pub fn ablate(base: &RunConfig, axes: &[Axis], replicates: usize) -> Result<AblationTable> {
    if replicates == 0 {
        return Err(Error::Config("replicates must be positive".into()));
    }
    base.validate()?;
    let variants = variants(base, axes);
    for v in &variants {
        v.config.validate()?;
    }
    let splits: Vec<Splits> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let mut cfg = base.clone();
            cfg.dataset_seed = replicate_dataset_seed(base.dataset_seed, rep);
            load_videos(&cfg).map(|v| Splits::new(v, cfg.dataset_seed))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|v| (0..replicates).map(move |r| (v, r)))
        .collect();
    let accuracies: Vec<f64> = jobs
        .par_iter()
        .map(|&(v, rep)| {
            let cfg = replicate_config(&variants[v], rep);
            train_on(&cfg, &splits[rep]).map(|r| r.report.segment_accuracy)
        })
        .collect::<Result<_>>()?;
    let rows = variants
        .iter()
        .zip(accuracies.chunks(replicates))
        .map(|(v, a)| Cell {
            variant: v.name.clone(),
            accuracies: a.to_vec(),
        })
        .collect();
    Ok(AblationTable { replicates, rows })
}
