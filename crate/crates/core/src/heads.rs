//! Fusion of the propagated features and the two classification heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::{Real, Tensor};

/// Layer-norm epsilon used throughout.
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct FuseParams<P> {
    /// `d_l x d_l`
    pub w3_visual: P,
    /// `d_l x d_l`
    pub w3_audio: P,
    pub ln_visual_gain: P,
    pub ln_visual_bias: P,
    pub ln_audio_gain: P,
    pub ln_audio_bias: P,
}

/// Two affine layers for per-segment classification.
#[derive(Debug, Clone, PartialEq)]
pub struct FullyHeadParams<P> {
    /// `d_l x d_h`
    pub w1: P,
    pub b1: P,
    /// `d_h x C`
    pub w2: P,
    pub b2: P,
}

/// Video-level head with the temporal weighting branch.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakHeadParams<P> {
    /// `d_l x d_h`
    pub w4: P,
    /// `d_h x C`
    pub w5: P,
    /// `C x 1`
    pub w6: P,
}

impl<P> FuseParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> FuseParams<Q> {
        FuseParams {
            w3_visual: f(&self.w3_visual),
            w3_audio: f(&self.w3_audio),
            ln_visual_gain: f(&self.ln_visual_gain),
            ln_visual_bias: f(&self.ln_visual_bias),
            ln_audio_gain: f(&self.ln_audio_gain),
            ln_audio_bias: f(&self.ln_audio_bias),
        }
    }

    pub fn named(&self) -> [(&'static str, &P); 6] {
        [
            ("w3_visual", &self.w3_visual),
            ("w3_audio", &self.w3_audio),
            ("ln_visual_gain", &self.ln_visual_gain),
            ("ln_visual_bias", &self.ln_visual_bias),
            ("ln_audio_gain", &self.ln_audio_gain),
            ("ln_audio_bias", &self.ln_audio_bias),
        ]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut P); 6] {
        [
            ("w3_visual", &mut self.w3_visual),
            ("w3_audio", &mut self.w3_audio),
            ("ln_visual_gain", &mut self.ln_visual_gain),
            ("ln_visual_bias", &mut self.ln_visual_bias),
            ("ln_audio_gain", &mut self.ln_audio_gain),
            ("ln_audio_bias", &mut self.ln_audio_bias),
        ]
    }
}

impl<P> FullyHeadParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> FullyHeadParams<Q> {
        FullyHeadParams {
            w1: f(&self.w1),
            b1: f(&self.b1),
            w2: f(&self.w2),
            b2: f(&self.b2),
        }
    }

    pub fn named(&self) -> [(&'static str, &P); 4] {
        [("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2)]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut P); 4] {
        [
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
        ]
    }
}

impl<P> WeakHeadParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> WeakHeadParams<Q> {
        WeakHeadParams {
            w4: f(&self.w4),
            w5: f(&self.w5),
            w6: f(&self.w6),
        }
    }

    pub fn named(&self) -> [(&'static str, &P); 3] {
        [("w4", &self.w4), ("w5", &self.w5), ("w6", &self.w6)]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut P); 3] {
        [("w4", &mut self.w4), ("w5", &mut self.w5), ("w6", &mut self.w6)]
    }
}

/// Dropout state for one forward pass. Disabled outside training.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn disabled() -> Self {
        Self { rate: 0.0, rng: None }
    }

    pub fn training(rate: f64, seed: u64) -> Self {
        Self {
            rate,
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn apply<F: Real>(&mut self, g: &mut Graph<F>, x: Var) -> Var {
        match &mut self.rng {
            Some(rng) if self.rate > 0.0 => g.dropout(x, F::of(self.rate), rng),
            _ => x,
        }
    }
}

/// `f = (LN(v W3_v) + LN(a W3_a)) / 2`.
pub fn fuse<F: Real>(g: &mut Graph<F>, v_psp: Var, a_psp: Var, p: &FuseParams<Var>) -> Result<Var> {
    let eps = F::of(LN_EPS);
    let v = g.matmul(v_psp, p.w3_visual)?;
    let v = g.layer_norm(v, p.ln_visual_gain, p.ln_visual_bias, eps)?;
    let a = g.matmul(a_psp, p.w3_audio)?;
    let a = g.layer_norm(a, p.ln_audio_gain, p.ln_audio_bias, eps)?;
    let s = g.add(v, a)?;
    Ok(g.scale(s, F::of(0.5)))
}

/// Per-segment class probabilities, `T x C`, each row a distribution.
pub fn fully_head<F: Real>(
    g: &mut Graph<F>,
    f_va: Var,
    p: &FullyHeadParams<Var>,
    dropout: &mut Dropout,
) -> Result<Var> {
    let h = g.matmul(f_va, p.w1)?;
    let h = g.add_row(h, p.b1)?;
    let h = g.relu(h);
    let h = dropout.apply(g, h);
    let logits = g.matmul(h, p.w2)?;
    let logits = g.add_row(logits, p.b2)?;
    g.softmax_rows(logits)
}

/// Outputs of [`weak_head`].
#[derive(Debug, Clone, Copy)]
pub struct WeakOutput {
    /// `1 x C` video-level distribution.
    pub o_weak: Var,
    /// `T x 1` segment weights; constant 0.5 without the weighting branch.
    pub phi: Var,
    /// `T x C` per-segment class scores.
    pub f_h: Var,
}

/// Video-level prediction. With the weighting branch,
/// `o = softmax(mean_t(f_h * phi))` where `phi = sigmoid(f_h W6)`; without it,
/// `o = softmax(mean_t(f_h))`.
pub fn weak_head<F: Real>(
    g: &mut Graph<F>,
    f_va: Var,
    p: &WeakHeadParams<Var>,
    use_weighting: bool,
    dropout: &mut Dropout,
) -> Result<WeakOutput> {
    let h = g.matmul(f_va, p.w4)?;
    let h = dropout.apply(g, h);
    let f_h = g.matmul(h, p.w5)?;
    let t = g.shape(f_h)[0];
    let (pooled_input, phi) = if use_weighting {
        let logit = g.matmul(f_h, p.w6)?;
        let phi = g.sigmoid(logit);
        (g.mul_col(f_h, phi)?, phi)
    } else {
        let phi = g.constant(Tensor::full(t, 1, F::of(0.5)));
        (f_h, phi)
    };
    let pooled = g.mean_rows(pooled_input);
    let o_weak = g.softmax_rows(pooled)?;
    Ok(WeakOutput { o_weak, phi, f_h })
}
