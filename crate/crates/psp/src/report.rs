//! Metrics reports: `key: value` text and a comma-separated summary row.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use psp_core::train::Metrics;

use crate::error::{Error, Result};
use crate::runconfig::RunConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub segment_accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// `None` for classes absent from the evaluated videos.
    pub per_class: Vec<Option<f64>>,
    /// Mean training loss per epoch; empty for evaluation-only runs.
    pub loss_curve: Vec<f64>,
    /// Echo of the full configuration.
    pub config: RunConfig,
    /// Not part of [`MetricsReport::to_text`] or the summary row, which are
    /// reproducible byte for byte.
    pub wall_clock_seconds: f64,
}

pub const SUMMARY_HEADER: &str = "supervision,psp_mode,tau,lambda,use_weighting_branch,seed,precision,epochs,segment_accuracy,correct,total,final_loss";

impl MetricsReport {
    pub fn new(metrics: &Metrics, loss_curve: Vec<f64>, config: RunConfig, seconds: f64) -> Self {
        Self {
            segment_accuracy: metrics.segment_accuracy,
            correct: metrics.correct,
            total: metrics.total,
            per_class: metrics.per_class.clone(),
            loss_curve,
            config,
            wall_clock_seconds: seconds,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "segment-accuracy: {}", self.segment_accuracy);
        let _ = writeln!(s, "correct-segments: {}", self.correct);
        let _ = writeln!(s, "total-segments: {}", self.total);
        let per_class: Vec<String> = self
            .per_class
            .iter()
            .map(|a| a.map_or_else(|| "n/a".to_string(), |v| v.to_string()))
            .collect();
        let _ = writeln!(s, "per-class-accuracy: {}", per_class.join(","));
        let curve: Vec<String> = self.loss_curve.iter().map(f64::to_string).collect();
        let _ = writeln!(s, "loss-curve: {}", curve.join(","));
        for line in self.config.to_text().lines() {
            let (k, v) = line.split_once(" = ").expect("config lines are key = value");
            let _ = writeln!(s, "config.{k}: {v}");
        }
        s
    }

    pub fn summary_row(&self) -> String {
        let m = &self.config.train.model;
        let final_loss = self
            .loss_curve
            .last()
            .map_or_else(String::new, f64::to_string);
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            m.supervision,
            m.psp.mode,
            m.psp.tau,
            m.lambda,
            m.use_weighting,
            self.config.train.seed,
            self.config.precision.bits(),
            self.config.train.epochs,
            self.segment_accuracy,
            self.correct,
            self.total,
            final_loss
        )
    }

    /// Writes `report.txt` and `summary.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let report = dir.join("report.txt");
        fs::write(&report, self.to_text()).map_err(|e| Error::io(&report, e))?;
        let summary = dir.join("summary.csv");
        let csv = format!("{SUMMARY_HEADER}\n{}\n", self.summary_row());
        fs::write(&summary, csv).map_err(|e| Error::io(&summary, e))
    }
}
