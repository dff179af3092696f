//! The full set of learnable weights and their initialization.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Dims;
use crate::encoder::{AvgaParams, BiLstmParams, EncoderParams, LstmCell};
use crate::error::{invalid, Result};
use crate::graph::{Graph, Var};
use crate::heads::{FullyHeadParams, FuseParams, WeakHeadParams};
use crate::psp::PspWeights;
use crate::tensor::{Real, Tensor};

/// Parameter groups, in the order [`ModelParams::named`] visits them.
pub const GROUPS: [&str; 7] = [
    "avga",
    "lstm_visual",
    "lstm_audio",
    "psp",
    "fuse",
    "fully_head",
    "weak_head",
];

/// All learnable weights. `P` is `Tensor<F>` for stored weights, `Var` once
/// bound to a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<P> {
    pub encoder: EncoderParams<P>,
    pub psp: PspWeights<P>,
    pub fuse: FuseParams<P>,
    pub fully: FullyHeadParams<P>,
    pub weak: WeakHeadParams<P>,
}

impl<P> ModelParams<P> {
    pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> ModelParams<Q> {
        ModelParams {
            encoder: self.encoder.map(&mut f),
            psp: self.psp.map(&mut f),
            fuse: self.fuse.map(&mut f),
            fully: self.fully.map(&mut f),
            weak: self.weak.map(&mut f),
        }
    }

    /// Every parameter with its dotted name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &P)> {
        let enc = &self.encoder;
        let mut out = Vec::new();
        extend(&mut out, "avga", enc.avga.named());
        extend(&mut out, "lstm_visual.forward", enc.lstm_visual.forward.named());
        extend(&mut out, "lstm_visual.backward", enc.lstm_visual.backward.named());
        extend(&mut out, "lstm_audio.forward", enc.lstm_audio.forward.named());
        extend(&mut out, "lstm_audio.backward", enc.lstm_audio.backward.named());
        extend(&mut out, "psp", self.psp.named());
        extend(&mut out, "fuse", self.fuse.named());
        extend(&mut out, "fully_head", self.fully.named());
        extend(&mut out, "weak_head", self.weak.named());
        out
    }

    /// Mutable counterpart of [`ModelParams::named`], same order.
    pub fn named_mut(&mut self) -> Vec<(String, &mut P)> {
        let enc = &mut self.encoder;
        let mut out = Vec::new();
        extend(&mut out, "avga", enc.avga.named_mut());
        extend(&mut out, "lstm_visual.forward", enc.lstm_visual.forward.named_mut());
        extend(&mut out, "lstm_visual.backward", enc.lstm_visual.backward.named_mut());
        extend(&mut out, "lstm_audio.forward", enc.lstm_audio.forward.named_mut());
        extend(&mut out, "lstm_audio.backward", enc.lstm_audio.backward.named_mut());
        extend(&mut out, "psp", self.psp.named_mut());
        extend(&mut out, "fuse", self.fuse.named_mut());
        extend(&mut out, "fully_head", self.fully.named_mut());
        extend(&mut out, "weak_head", self.weak.named_mut());
        out
    }
}

fn extend<T>(out: &mut Vec<(String, T)>, prefix: &str, items: impl IntoIterator<Item = (&'static str, T)>) {
    for (name, p) in items {
        out.push((format!("{prefix}.{name}"), p));
    }
}

/// Group a dotted parameter name belongs to.
pub fn group_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

impl<F: Real> ModelParams<Tensor<F>> {
    /// Registers every weight as a tracked leaf of `g`.
    pub fn bind(&self, g: &mut Graph<F>) -> ModelParams<Var> {
        self.map(|t| g.param(t.clone()))
    }

    /// Registers every weight as an untracked constant.
    pub fn bind_constant(&self, g: &mut Graph<F>) -> ModelParams<Var> {
        self.map(|t| g.constant(t.clone()))
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|t| Tensor::zeros(t.rows(), t.cols()))
    }

    pub fn count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<G: Real>(&self) -> ModelParams<Tensor<G>> {
        self.map(Tensor::cast)
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.is_finite())
    }

    /// Random initialization: Glorot-uniform projections, LSTM weights uniform
    /// in `[-k, k]` with `k = 1 / sqrt(d_l / 2)` and forget bias 1, unit
    /// layer-norm gains, zero biases. The propagation projections `W2` start
    /// at zero, so an untrained model propagates nothing.
    pub fn init(dims: &Dims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = dims.d_l / 2;
        let k = 1.0 / libm::sqrt(h as f64);
        let rng = &mut rng;
        let lstm = |d_in: usize, rng: &mut ChaCha8Rng| -> LstmCell<Tensor<F>> {
            let mut bias = uniform(rng, 1, 4 * h, k);
            for j in h..2 * h {
                bias.data_mut()[j] = F::one();
            }
            LstmCell {
                w_input: uniform(rng, d_in, 4 * h, k),
                w_hidden: uniform(rng, h, 4 * h, k),
                bias,
            }
        };
        let encoder = EncoderParams {
            avga: AvgaParams {
                u_audio: glorot(rng, dims.d_a, dims.d_att),
                u_visual: glorot(rng, dims.d_v, dims.d_att),
                score: glorot(rng, dims.d_att, 1),
            },
            lstm_visual: BiLstmParams {
                forward: lstm(dims.d_v, rng),
                backward: lstm(dims.d_v, rng),
            },
            lstm_audio: BiLstmParams {
                forward: lstm(dims.d_a, rng),
                backward: lstm(dims.d_a, rng),
            },
        };
        let psp = PspWeights {
            w1_visual: glorot(rng, dims.d_l, dims.d_h),
            w1_audio: glorot(rng, dims.d_l, dims.d_h),
            // Drawn then zeroed so the weights after them keep their values.
            w2_visual: glorot(rng, dims.d_l, dims.d_l).map(|_| F::zero()),
            w2_audio: glorot(rng, dims.d_l, dims.d_l).map(|_| F::zero()),
        };
        let fuse = FuseParams {
            w3_visual: glorot(rng, dims.d_l, dims.d_l),
            w3_audio: glorot(rng, dims.d_l, dims.d_l),
            ln_visual_gain: Tensor::full(1, dims.d_l, F::one()),
            ln_visual_bias: Tensor::zeros(1, dims.d_l),
            ln_audio_gain: Tensor::full(1, dims.d_l, F::one()),
            ln_audio_bias: Tensor::zeros(1, dims.d_l),
        };
        let fully = FullyHeadParams {
            w1: glorot(rng, dims.d_l, dims.d_h),
            b1: Tensor::zeros(1, dims.d_h),
            w2: glorot(rng, dims.d_h, dims.c),
            b2: Tensor::zeros(1, dims.c),
        };
        let weak = WeakHeadParams {
            w4: glorot(rng, dims.d_l, dims.d_h),
            w5: glorot(rng, dims.d_h, dims.c),
            w6: glorot(rng, dims.c, 1),
        };
        Ok(Self {
            encoder,
            psp,
            fuse,
            fully,
            weak,
        })
    }

    /// Checks that every weight has the shape `dims` implies.
    pub fn check_dims(&self, dims: &Dims) -> Result<()> {
        let reference = Self::init(dims, 0)?;
        for ((name, a), (_, b)) in self.named().iter().zip(reference.named()) {
            if a.shape() != b.shape() {
                return Err(invalid(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }
}

fn uniform<F: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, limit: f64) -> Tensor<F> {
    let data = (0..rows * cols)
        .map(|_| F::of(rng.random_range(-limit..=limit)))
        .collect();
    Tensor::new(rows, cols, data).expect("positive dims")
}

fn glorot<F: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<F> {
    uniform(rng, rows, cols, libm::sqrt(6.0 / (rows + cols) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_grouped() {
        let p = ModelParams::<Tensor<f64>>::init(&Dims::default(), 1).unwrap();
        let names: Vec<String> = p.named().into_iter().map(|(n, _)| n).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        for n in &names {
            assert!(GROUPS.contains(&group_of(n)), "{n}");
        }
        let mut q = p.clone();
        let mut_names: Vec<String> = q.named_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, mut_names);
    }

    #[test]
    fn init_is_seeded_and_sets_forget_bias() {
        let d = Dims::default();
        let a = ModelParams::<Tensor<f32>>::init(&d, 3).unwrap();
        assert_eq!(a, ModelParams::<Tensor<f32>>::init(&d, 3).unwrap());
        assert_ne!(a, ModelParams::<Tensor<f32>>::init(&d, 4).unwrap());
        let b = &a.encoder.lstm_audio.forward.bias;
        let h = d.d_l / 2;
        assert!(b.data()[h..2 * h].iter().all(|&v| v == 1.0));
        a.check_dims(&d).unwrap();
        let other = Dims { d_h: 7, ..d };
        assert!(a.check_dims(&other).is_err());
    }
}
