//! Audio-guided visual attention followed by one bidirectional LSTM per
//! modality.
//!
//! The attention score of cell `n` in segment `t` is
//! `w . tanh(U_a a_t + U_v v_{t,n})`, softmaxed over the cells. The LSTM uses
//! gate order input, forget, cell, output and zero initial states.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Real;

/// Weights of the audio-guided visual attention.
#[derive(Debug, Clone, PartialEq)]
pub struct AvgaParams<P> {
    /// `d_a x d_att`
    pub u_audio: P,
    /// `d_v x d_att`
    pub u_visual: P,
    /// `d_att x 1`
    pub score: P,
}

/// One LSTM direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell<P> {
    /// `d_in x 4h`
    pub w_input: P,
    /// `h x 4h`
    pub w_hidden: P,
    /// `1 x 4h`
    pub bias: P,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams<P> {
    pub forward: LstmCell<P>,
    pub backward: LstmCell<P>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<P> {
    pub avga: AvgaParams<P>,
    pub lstm_visual: BiLstmParams<P>,
    pub lstm_audio: BiLstmParams<P>,
}

impl<P> AvgaParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> AvgaParams<Q> {
        AvgaParams {
            u_audio: f(&self.u_audio),
            u_visual: f(&self.u_visual),
            score: f(&self.score),
        }
    }

    pub fn named(&self) -> [(&'static str, &P); 3] {
        [
            ("u_audio", &self.u_audio),
            ("u_visual", &self.u_visual),
            ("score", &self.score),
        ]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut P); 3] {
        [
            ("u_audio", &mut self.u_audio),
            ("u_visual", &mut self.u_visual),
            ("score", &mut self.score),
        ]
    }
}

impl<P> LstmCell<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> LstmCell<Q> {
        LstmCell {
            w_input: f(&self.w_input),
            w_hidden: f(&self.w_hidden),
            bias: f(&self.bias),
        }
    }

    pub fn named(&self) -> [(&'static str, &P); 3] {
        [
            ("w_input", &self.w_input),
            ("w_hidden", &self.w_hidden),
            ("bias", &self.bias),
        ]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut P); 3] {
        [
            ("w_input", &mut self.w_input),
            ("w_hidden", &mut self.w_hidden),
            ("bias", &mut self.bias),
        ]
    }
}

impl<P> BiLstmParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> BiLstmParams<Q> {
        BiLstmParams {
            forward: self.forward.map(f),
            backward: self.backward.map(f),
        }
    }
}

impl<P: Clone> BiLstmParams<P> {
    /// The same weights with the two directions exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            forward: self.backward.clone(),
            backward: self.forward.clone(),
        }
    }
}

impl<P> EncoderParams<P> {
    pub fn map<Q>(&self, f: &mut impl FnMut(&P) -> Q) -> EncoderParams<Q> {
        EncoderParams {
            avga: self.avga.map(f),
            lstm_visual: self.lstm_visual.map(f),
            lstm_audio: self.lstm_audio.map(f),
        }
    }
}

/// Attends over the `N` cells of each segment.
///
/// `visual` is `(T*N) x d_v`, `audio` is `T x d_a`. Returns the attended
/// visual features (`T x d_v`) and the attention weights (`T x N`).
pub fn avga<F: Real>(
    g: &mut Graph<F>,
    visual: Var,
    audio: Var,
    p: &AvgaParams<Var>,
    n: usize,
) -> Result<(Var, Var)> {
    let [t, _] = g.shape(audio);
    let [tn, _] = g.shape(visual);
    if n == 0 || tn != t * n {
        return Err(Error::Dimension {
            op: "avga",
            left: g.shape(visual),
            right: g.shape(audio),
        });
    }
    let proj_audio = g.matmul(audio, p.u_audio)?;
    let proj_audio = g.repeat_rows(proj_audio, n)?;
    let proj_visual = g.matmul(visual, p.u_visual)?;
    let hidden = g.add(proj_audio, proj_visual)?;
    let hidden = g.tanh(hidden);
    let scores = g.matmul(hidden, p.score)?;
    let scores = g.reshape(scores, t, n)?;
    let weights = g.softmax_rows(scores)?;
    let weight_col = g.reshape(weights, t * n, 1)?;
    let weighted = g.mul_col(visual, weight_col)?;
    let attended = g.sum_row_groups(weighted, n)?;
    Ok((attended, weights))
}

fn lstm_direction<F: Real>(
    g: &mut Graph<F>,
    x: Var,
    cell: &LstmCell<Var>,
    reverse: bool,
) -> Result<Var> {
    let [t_len, _] = g.shape(x);
    let [h4_rows, h4] = g.shape(cell.w_hidden);
    let h = h4_rows;
    if h4 != 4 * h || g.shape(cell.bias) != [1, 4 * h] || g.shape(cell.w_input)[1] != 4 * h {
        return Err(Error::Dimension {
            op: "lstm",
            left: g.shape(cell.w_input),
            right: g.shape(cell.w_hidden),
        });
    }
    let projected = g.matmul(x, cell.w_input)?;
    let projected = g.add_row(projected, cell.bias)?;
    let mut outputs: Vec<Var> = Vec::with_capacity(t_len);
    let mut state: Option<(Var, Var)> = None;
    let steps: Vec<usize> = if reverse {
        (0..t_len).rev().collect()
    } else {
        (0..t_len).collect()
    };
    for t in steps {
        let mut gates = g.slice_rows(projected, t, 1)?;
        if let Some((h_prev, _)) = state {
            let rec = g.matmul(h_prev, cell.w_hidden)?;
            gates = g.add(gates, rec)?;
        }
        let i = g.slice_cols(gates, 0, h)?;
        let i = g.sigmoid(i);
        let f = g.slice_cols(gates, h, h)?;
        let f = g.sigmoid(f);
        let cand = g.slice_cols(gates, 2 * h, h)?;
        let cand = g.tanh(cand);
        let o = g.slice_cols(gates, 3 * h, h)?;
        let o = g.sigmoid(o);
        let mut c = g.mul(i, cand)?;
        if let Some((_, c_prev)) = state {
            let kept = g.mul(f, c_prev)?;
            c = g.add(kept, c)?;
        }
        let c_act = g.tanh(c);
        let h_new = g.mul(o, c_act)?;
        outputs.push(h_new);
        state = Some((h_new, c));
    }
    if reverse {
        outputs.reverse();
    }
    g.concat_rows(&outputs)
}

/// Bidirectional LSTM over the rows of `x` (`T x d_in`). Row `t` of the
/// result is `[forward_t, backward_t]`.
pub fn bilstm<F: Real>(g: &mut Graph<F>, x: Var, p: &BiLstmParams<Var>) -> Result<Var> {
    let [_, d_in] = g.shape(x);
    for cell in [&p.forward, &p.backward] {
        if g.shape(cell.w_input)[0] != d_in {
            return Err(Error::Dimension {
                op: "bilstm",
                left: g.shape(x),
                right: g.shape(cell.w_input),
            });
        }
    }
    let fwd = lstm_direction(g, x, &p.forward, false)?;
    let bwd = lstm_direction(g, x, &p.backward, true)?;
    g.concat_cols(&[fwd, bwd])
}

/// Encoder outputs for one video.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub v_lstm: Var,
    pub a_lstm: Var,
    pub attention: Var,
}

/// Attention then the two recurrent encoders.
pub fn encode<F: Real>(
    g: &mut Graph<F>,
    visual: Var,
    audio: Var,
    p: &EncoderParams<Var>,
    n: usize,
) -> Result<Encoded> {
    let (attended, attention) = avga(g, visual, audio, &p.avga, n)?;
    let v_lstm = bilstm(g, attended, &p.lstm_visual)?;
    let a_lstm = bilstm(g, audio, &p.lstm_audio)?;
    Ok(Encoded {
        v_lstm,
        a_lstm,
        attention,
    })
}
