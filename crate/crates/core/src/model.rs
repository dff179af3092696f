//! End-to-end forward pass for one video: encoder, propagation, fusion, and
//! the head for the configured supervision.

use alloc::format;
use alloc::vec::Vec;

use crate::config::{ModelConfig, Supervision};
use crate::data::{event_relevance_labels, VideoSample};
use crate::encoder::{encode, Encoded};
use crate::error::{invalid, Result};
use crate::graph::{Graph, Var};
use crate::heads::{fully_head, fuse, weak_head, Dropout, WeakOutput};
use crate::losses::{avps_loss, avps_similarity, ce_loss, fully_loss, weak_bce_loss};
use crate::params::ModelParams;
use crate::psp::{psp_forward, PspOutput};
use crate::tensor::{Real, Tensor};

/// Nodes produced by [`forward`].
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub encoded: Encoded,
    pub psp: PspOutput,
    pub f_va: Var,
    /// Present under full supervision.
    pub o_fully: Option<Var>,
    /// Present under weak supervision.
    pub weak: Option<WeakOutput>,
}

/// Checks that a sample has the sizes the model expects.
pub fn check_sample(sample: &VideoSample, cfg: &ModelConfig) -> Result<()> {
    let d = &cfg.dims;
    let want = [d.t, d.n, d.d_v, d.d_a, d.c];
    if sample.dims() != want {
        return Err(invalid(format!(
            "video {} has dims [T, N, d_v, d_a, C] = {:?}, model expects {:?}",
            sample.video_id,
            sample.dims(),
            want
        )));
    }
    Ok(())
}

pub fn forward<F: Real>(
    g: &mut Graph<F>,
    p: &ModelParams<Var>,
    sample: &VideoSample,
    cfg: &ModelConfig,
    dropout: &mut Dropout,
) -> Result<Forward> {
    check_sample(sample, cfg)?;
    let visual = g.constant(sample.visual_tensor());
    let audio = g.constant(sample.audio_tensor());
    let encoded = encode(g, visual, audio, &p.encoder, cfg.dims.n)?;
    let psp = psp_forward(g, encoded.v_lstm, encoded.a_lstm, &p.psp, &cfg.psp)?;
    let f_va = fuse(g, psp.v_psp, psp.a_psp, &p.fuse)?;
    let (o_fully, weak) = match cfg.supervision {
        Supervision::Fully => (Some(fully_head(g, f_va, &p.fully, dropout)?), None),
        Supervision::Weakly => (
            None,
            Some(weak_head(g, f_va, &p.weak, cfg.use_weighting, dropout)?),
        ),
    };
    Ok(Forward {
        encoded,
        psp,
        f_va,
        o_fully,
        weak,
    })
}

/// Objective for the configured supervision: cross entropy plus
/// `lambda` times the pair-similarity loss when fully supervised, binary
/// cross entropy on the video-level prediction when weakly supervised.
pub fn loss<F: Real>(
    g: &mut Graph<F>,
    fwd: &Forward,
    sample: &VideoSample,
    cfg: &ModelConfig,
) -> Result<Var> {
    match (fwd.o_fully, fwd.weak) {
        (Some(o), _) => {
            let labels = g.constant(sample.labels_tensor());
            let ce = ce_loss(g, o, labels)?;
            if cfg.lambda == 0.0 {
                return Ok(ce);
            }
            let relevance =
                event_relevance_labels(&sample.labels_full, sample.t, sample.c, cfg.background)?;
            let s = avps_similarity(g, fwd.psp.v_psp, fwd.psp.a_psp)?;
            let avps = avps_loss(g, s, &relevance)?;
            fully_loss(g, ce, avps, cfg.lambda)
        }
        (None, Some(w)) => {
            let y: Vec<F> = sample.labels_weak.iter().map(|&v| F::of(v as f64)).collect();
            let y = g.constant(Tensor::new(1, sample.c, y)?);
            weak_bce_loss(g, w.o_weak, y)
        }
        (None, None) => unreachable!("forward always builds one head"),
    }
}

fn argmax<F: Real>(row: &[F]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Predicted class per segment. Under weak supervision, the class is the
/// argmax of the segment's scores unless its weight falls below 0.5, in which
/// case it is background.
pub fn predict_segments<F: Real>(g: &Graph<F>, fwd: &Forward, cfg: &ModelConfig) -> Vec<usize> {
    if let Some(o) = fwd.o_fully {
        let o = g.value(o);
        return (0..o.rows()).map(|t| argmax(o.row(t))).collect();
    }
    let w = fwd.weak.expect("one head is always present");
    let (f_h, phi) = (g.value(w.f_h), g.value(w.phi));
    (0..f_h.rows())
        .map(|t| {
            if phi.get(t, 0) < F::of(0.5) {
                cfg.background
            } else {
                argmax(f_h.row(t))
            }
        })
        .collect()
}

/// Inference-only pass with dropout disabled.
pub fn infer<F: Real>(
    params: &ModelParams<Tensor<F>>,
    sample: &VideoSample,
    cfg: &ModelConfig,
) -> Result<(Graph<F>, Forward)> {
    let mut g = Graph::new();
    let p = params.bind_constant(&mut g);
    let fwd = forward(&mut g, &p, sample, cfg, &mut Dropout::disabled())?;
    Ok((g, fwd))
}
