//! Model and training configuration.

use alloc::format;
use core::fmt;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};

/// Sizes of every axis in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// Segments per video.
    pub t: usize,
    /// Classes, background included.
    pub c: usize,
    /// Spatial cells per visual feature map.
    pub n: usize,
    pub d_v: usize,
    pub d_a: usize,
    /// Recurrent output width (both directions).
    pub d_l: usize,
    /// Hidden width of projections and heads.
    pub d_h: usize,
    /// Attention width of the audio-guided visual attention.
    pub d_att: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            t: 10,
            c: 5,
            n: 16,
            d_v: 64,
            d_a: 32,
            d_l: 64,
            d_h: 32,
            d_att: 32,
        }
    }
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("T", self.t),
            ("C", self.c),
            ("N", self.n),
            ("d_v", self.d_v),
            ("d_a", self.d_a),
            ("d_l", self.d_l),
            ("d_h", self.d_h),
            ("d_att", self.d_att),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if self.d_l % 2 != 0 || self.d_l < 2 {
            return Err(invalid(format!("d_l must be even and >= 2, got {}", self.d_l)));
        }
        if self.c < 2 {
            return Err(invalid("C must count at least one event class and background"));
        }
        Ok(())
    }
}

/// How cross-modal connections are filtered before propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PspMode {
    /// Relu, normalize, threshold at tau, renormalize.
    Full,
    /// Keep every connection; rows scaled by their absolute sum.
    Asp,
    /// Drop negative connections only.
    Wpsp,
    /// No propagation at all.
    Off,
}

impl PspMode {
    pub const ALL: [PspMode; 4] = [PspMode::Off, PspMode::Asp, PspMode::Wpsp, PspMode::Full];

    pub fn name(self) -> &'static str {
        match self {
            PspMode::Full => "full-psp",
            PspMode::Asp => "asp",
            PspMode::Wpsp => "wpsp",
            PspMode::Off => "off",
        }
    }
}

impl fmt::Display for PspMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PspMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full-psp" | "full" | "psp" => Ok(PspMode::Full),
            "asp" => Ok(PspMode::Asp),
            "wpsp" => Ok(PspMode::Wpsp),
            "off" | "none" => Ok(PspMode::Off),
            other => Err(invalid(format!("unknown psp mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PspConfig {
    pub mode: PspMode,
    pub tau: f64,
    /// In `asp` mode, keep the relu so only the threshold is skipped.
    pub asp_keep_relu: bool,
}

impl Default for PspConfig {
    fn default() -> Self {
        Self {
            mode: PspMode::Full,
            tau: 0.095,
            asp_keep_relu: false,
        }
    }
}

impl PspConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.tau.is_finite() {
            return Err(invalid("tau must be finite"));
        }
        if self.mode == PspMode::Full && self.tau < 0.0 {
            return Err(invalid(format!("tau must be >= 0 in full-psp mode, got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Supervision {
    /// Per-segment labels.
    Fully,
    /// Video-level labels only.
    Weakly,
}

impl Supervision {
    pub fn name(self) -> &'static str {
        match self {
            Supervision::Fully => "fully",
            Supervision::Weakly => "weakly",
        }
    }
}

impl fmt::Display for Supervision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Supervision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fully" | "full" => Ok(Supervision::Fully),
            "weakly" | "weak" => Ok(Supervision::Weakly),
            other => Err(invalid(format!("unknown supervision '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(invalid(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Everything that shapes a forward pass, apart from the weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub dims: Dims,
    pub supervision: Supervision,
    pub psp: PspConfig,
    /// Weight of the pair-similarity term in the fully supervised objective.
    /// Not used under weak supervision, where segment relevance is unknown.
    pub lambda: f64,
    pub use_weighting: bool,
    pub dropout: f64,
    pub background: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let dims = Dims::default();
        Self {
            dims,
            supervision: Supervision::Fully,
            psp: PspConfig::default(),
            lambda: 100.0,
            use_weighting: true,
            dropout: 0.1,
            background: dims.c - 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.psp.validate()?;
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.background >= self.dims.c {
            return Err(invalid(format!(
                "background index {} out of range for C = {}",
                self.background, self.dims.c
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_negative_tau_only_in_full_mode() {
        let mut p = PspConfig {
            tau: -0.1,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        p.mode = PspMode::Asp;
        assert!(p.validate().is_ok());
    }

    #[test]
    fn rejects_odd_recurrent_width() {
        let d = Dims {
            d_l: 7,
            ..Default::default()
        };
        assert!(d.validate().is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in PspMode::ALL {
            assert_eq!(m.name().parse::<PspMode>().unwrap(), m);
        }
    }
}
