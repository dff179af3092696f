//! Positive sample propagation: all-pair cross-modal similarity, pruning of
//! negative and weak connections, and aggregation over what survives.

use crate::config::{PspConfig, PspMode};
use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::{Real, Tensor};

/// Projection weights of the propagation block.
#[derive(Debug, Clone, PartialEq)]
pub struct PspWeights<P> {
    /// `d_l x d_h`, visual side of the similarity.
    pub w1_visual: P,
    /// `d_l x d_h`, audio side of the similarity.
    pub w1_audio: P,
    /// `d_l x d_l`, applied to visual features before aggregation.
    pub w2_visual: P,
    /// `d_l x d_l`, applied to audio features before aggregation.
    pub w2_audio: P,
}

impl<P> PspWeights<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> PspWeights<Q> {
        PspWeights {
            w1_visual: f(&self.w1_visual),
            w1_audio: f(&self.w1_audio),
            w2_visual: f(&self.w2_visual),
            w2_audio: f(&self.w2_audio),
        }
    }

    pub fn named(&self) -> [(&'static str, &P); 4] {
        [
            ("w1_visual", &self.w1_visual),
            ("w1_audio", &self.w1_audio),
            ("w2_visual", &self.w2_visual),
            ("w2_audio", &self.w2_audio),
        ]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut P); 4] {
        [
            ("w1_visual", &mut self.w1_visual),
            ("w1_audio", &mut self.w1_audio),
            ("w2_visual", &mut self.w2_visual),
            ("w2_audio", &mut self.w2_audio),
        ]
    }
}

/// Raw cross-modal similarities.
///
/// `beta_va = (v W1_v)(a W1_a)^T / sqrt(d_l)` where `d_l` is the width of the
/// encoder features (not the projected width), and `beta_av = beta_va^T`.
pub fn similarity<F: Real>(
    g: &mut Graph<F>,
    v_lstm: Var,
    a_lstm: Var,
    w: &PspWeights<Var>,
) -> Result<(Var, Var)> {
    let (sv, sa) = (g.shape(v_lstm), g.shape(a_lstm));
    if sv != sa {
        return Err(Error::Dimension {
            op: "similarity",
            left: sv,
            right: sa,
        });
    }
    let d_l = sv[1];
    let pv = g.matmul(v_lstm, w.w1_visual)?;
    let pa = g.matmul(a_lstm, w.w1_audio)?;
    let pa_t = g.transpose(pa);
    let raw = g.matmul(pv, pa_t)?;
    let beta_va = g.scale(raw, F::one() / F::of(d_l as f64).sqrt());
    let beta_av = g.transpose(beta_va);
    Ok((beta_va, beta_av))
}

/// Turns raw similarities into propagation weights. Returns `None` in `off`
/// mode, meaning nothing is propagated.
///
/// `full`: relu, row l1 normalization, zero entries below `tau` (ties are
/// kept), row l1 normalization. `wpsp` skips the threshold. `asp` skips relu
/// and threshold and divides rows by their absolute sums, keeping signs,
/// unless `asp_keep_relu` is set. Rows that become all-zero stay all-zero.
pub fn prune_normalize<F: Real>(
    g: &mut Graph<F>,
    beta: Var,
    cfg: &PspConfig,
) -> Result<Option<Var>> {
    let zero = F::zero();
    let gamma = match cfg.mode {
        PspMode::Off => return Ok(None),
        PspMode::Full => {
            if !(cfg.tau >= 0.0) {
                return Err(invalid(alloc::format!(
                    "tau must be >= 0 in full-psp mode, got {}",
                    cfg.tau
                )));
            }
            let x = g.relu(beta);
            let x = g.row_l1_normalize(x, zero);
            let x = g.threshold(x, F::of(cfg.tau));
            g.row_l1_normalize(x, zero)
        }
        PspMode::Wpsp => {
            let x = g.relu(beta);
            let x = g.row_l1_normalize(x, zero);
            g.row_l1_normalize(x, zero)
        }
        PspMode::Asp => {
            let x = if cfg.asp_keep_relu { g.relu(beta) } else { beta };
            g.row_l1_normalize(x, zero)
        }
    };
    Ok(Some(gamma))
}

/// Outputs of [`propagate`].
#[derive(Debug, Clone, Copy)]
pub struct Propagated {
    pub a_psp: Var,
    pub v_psp: Var,
    /// Visual features aggregated for each audio segment.
    pub v_pos: Var,
    /// Audio features aggregated for each visual segment.
    pub a_pos: Var,
}

/// `a_psp = gamma_av (v W2_v) + a`, `v_psp = gamma_va (a W2_a) + v`.
pub fn propagate<F: Real>(
    g: &mut Graph<F>,
    gamma_av: Var,
    gamma_va: Var,
    v_lstm: Var,
    a_lstm: Var,
    w: &PspWeights<Var>,
) -> Result<Propagated> {
    let pv = g.matmul(v_lstm, w.w2_visual)?;
    let v_pos = g.matmul(gamma_av, pv)?;
    let pa = g.matmul(a_lstm, w.w2_audio)?;
    let a_pos = g.matmul(gamma_va, pa)?;
    let a_psp = g.add(v_pos, a_lstm)?;
    let v_psp = g.add(a_pos, v_lstm)?;
    Ok(Propagated {
        a_psp,
        v_psp,
        v_pos,
        a_pos,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct PspOutput {
    pub v_psp: Var,
    pub a_psp: Var,
    pub beta_va: Var,
    /// Absent in `off` mode.
    pub gamma_va: Option<Var>,
    pub gamma_av: Option<Var>,
}

/// Similarity, pruning and propagation in sequence. In `off` mode the encoder
/// features pass through untouched.
pub fn psp_forward<F: Real>(
    g: &mut Graph<F>,
    v_lstm: Var,
    a_lstm: Var,
    w: &PspWeights<Var>,
    cfg: &PspConfig,
) -> Result<PspOutput> {
    let (beta_va, beta_av) = similarity(g, v_lstm, a_lstm, w)?;
    let gamma_va = prune_normalize(g, beta_va, cfg)?;
    let gamma_av = prune_normalize(g, beta_av, cfg)?;
    let (v_psp, a_psp) = match (gamma_va, gamma_av) {
        (Some(gva), Some(gav)) => {
            let p = propagate(g, gav, gva, v_lstm, a_lstm, w)?;
            (p.v_psp, p.a_psp)
        }
        _ => (v_lstm, a_lstm),
    };
    Ok(PspOutput {
        v_psp,
        a_psp,
        beta_va,
        gamma_va,
        gamma_av,
    })
}

/// [`prune_normalize`] on a plain matrix, outside any training graph.
pub fn prune_normalize_values<F: Real>(beta: &Tensor<F>, cfg: &PspConfig) -> Result<Option<Tensor<F>>> {
    let mut g = Graph::new();
    let b = g.constant(beta.clone());
    Ok(prune_normalize(&mut g, b, cfg)?.map(|v| g.value(v).clone()))
}
