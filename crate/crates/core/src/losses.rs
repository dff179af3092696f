//! Training objectives.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::{Real, Tensor};

/// Lower clamp applied before every logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

fn same_shape<F: Real>(g: &Graph<F>, op: &'static str, a: Var, b: Var) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(Error::Dimension {
            op,
            left: g.shape(a),
            right: g.shape(b),
        });
    }
    Ok(())
}

/// Cross entropy averaged over all `T * C` entries:
/// `-(1 / (T C)) sum Y log O`.
pub fn ce_loss<F: Real>(g: &mut Graph<F>, o_fully: Var, labels: Var) -> Result<Var> {
    same_shape(g, "ce_loss", o_fully, labels)?;
    let [t, c] = g.shape(o_fully);
    let log_o = g.log_clamped(o_fully, F::of(PROB_FLOOR));
    let weighted = g.mul(labels, log_o)?;
    let total = g.sum(weighted);
    Ok(g.scale(total, -F::one() / F::of((t * c) as f64)))
}

/// Per-segment inner products of the two modalities, l1-normalized across
/// time (signs kept). Returns `1 x T`. If the l1 norm is below `1e-12` the
/// raw vector is returned.
pub fn avps_similarity<F: Real>(g: &mut Graph<F>, v_psp: Var, a_psp: Var) -> Result<Var> {
    same_shape(g, "avps_similarity", v_psp, a_psp)?;
    let prod = g.mul(v_psp, a_psp)?;
    let s = g.sum_cols(prod);
    let s = g.transpose(s);
    Ok(g.row_l1_normalize(s, F::of(PROB_FLOOR)))
}

/// l1-normalized relevance vector; all-zero input stays zero.
pub fn normalize_relevance(relevance: &[f32]) -> Vec<f64> {
    let total: f64 = relevance.iter().map(|&v| (v as f64).abs()).sum();
    relevance
        .iter()
        .map(|&v| if total > 0.0 { v as f64 / total } else { 0.0 })
        .collect()
}

/// Mean squared error between `S` (`1 x T`) and the normalized relevance
/// vector built from the binary `relevance`.
pub fn avps_loss<F: Real>(g: &mut Graph<F>, s: Var, relevance: &[f32]) -> Result<Var> {
    let [r, t] = g.shape(s);
    if r != 1 || relevance.len() != t {
        return Err(Error::Dimension {
            op: "avps_loss",
            left: [r, t],
            right: [1, relevance.len()],
        });
    }
    let target = Tensor::new(1, t, normalize_relevance(relevance).into_iter().map(F::of).collect())?;
    let target = g.constant(target);
    let diff = g.sub(s, target)?;
    let sq = g.mul(diff, diff)?;
    let total = g.sum(sq);
    Ok(g.scale(total, F::one() / F::of(t as f64)))
}

/// `ce + lambda * avps`.
pub fn fully_loss<F: Real>(g: &mut Graph<F>, ce: Var, avps: Var, lambda: f64) -> Result<Var> {
    if lambda == 0.0 {
        return Ok(ce);
    }
    let weighted = g.scale(avps, F::of(lambda));
    g.add(ce, weighted)
}

/// Binary cross entropy averaged over classes, with `o` clamped to
/// `[1e-12, 1 - 1e-12]`.
pub fn weak_bce_loss<F: Real>(g: &mut Graph<F>, o_weak: Var, labels_weak: Var) -> Result<Var> {
    same_shape(g, "weak_bce_loss", o_weak, labels_weak)?;
    let c = g.shape(o_weak)[1];
    let floor = F::of(PROB_FLOOR);
    let log_o = g.log_clamped(o_weak, floor);
    let neg_o = g.scale(o_weak, -F::one());
    let one_minus_o = g.add_scalar(neg_o, F::one());
    let log_1mo = g.log_clamped(one_minus_o, floor);
    let neg_y = g.scale(labels_weak, -F::one());
    let one_minus_y = g.add_scalar(neg_y, F::one());
    let pos = g.mul(labels_weak, log_o)?;
    let neg = g.mul(one_minus_y, log_1mo)?;
    let both = g.add(pos, neg)?;
    let total = g.sum(both);
    Ok(g.scale(total, -F::one() / F::of(c as f64)))
}
