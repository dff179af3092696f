//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] records every operation in creation order, so the node list is
//! already a topological order. Calling [`Graph::backward`] walks it in reverse
//! once, accumulating gradients additively into every tracked input. A graph
//! supports exactly one backward pass; build a fresh graph per forward pass.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{gemm_acc, gemm_at_acc, gemm_bt_acc, Real, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bcast {
    None,
    /// Left operand is `1x1`.
    Left,
    /// Right operand is `1x1`.
    Right,
}

#[derive(Debug, Clone)]
enum Op<F> {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize, Bcast),
    Sub(usize, usize, Bcast),
    Mul(usize, usize, Bcast),
    Scale(usize, F),
    AddScalar(usize),
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Log(usize, F),
    AddRow(usize, usize),
    MulCol(usize, usize),
    SoftmaxRows(usize),
    LayerNorm { x: usize, gain: usize, bias: usize },
    RowL1Normalize(usize),
    Mask(usize, Vec<F>),
    Sum(usize),
    MeanRows(usize),
    SumCols(usize),
    SumRowGroups(usize, usize),
    RepeatRows(usize, usize),
    Reshape(usize),
    SliceRows(usize, usize),
    SliceCols(usize, usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    tracked: bool,
    /// Per-op cache: normalized input and inverse std for layer norm, row
    /// norms for l1 normalization.
    aux: Vec<F>,
}

/// Elementwise operation kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementwise<F> {
    Relu,
    Sigmoid,
    Tanh,
    Multiply,
    Add,
    Scale(F),
}

/// A computation graph for one forward pass.
#[derive(Debug, Clone, Default)]
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
    grads: Vec<Option<Tensor<F>>>,
    backward_done: bool,
    kink_margin: f64,
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
            kink_margin: f64::INFINITY,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Smallest distance seen so far between an input and a non-differentiable
    /// point (relu kinks, threshold gates, sign changes under l1 norms).
    pub fn kink_margin(&self) -> f64 {
        self.kink_margin
    }

    fn note_kink(&mut self, d: f64) {
        if d < self.kink_margin {
            self.kink_margin = d;
        }
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, tracked: bool, aux: Vec<F>) -> Var {
        self.nodes.push(Node {
            value,
            op,
            tracked,
            aux,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, x: Var, value: Tensor<F>, op: Op<F>) -> Var {
        let tracked = self.nodes[x.0].tracked;
        self.push(value, op, tracked, Vec::new())
    }

    /// Tracked leaf: gradients are collected for it.
    pub fn param(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, true, Vec::new())
    }

    /// Untracked leaf.
    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, false, Vec::new())
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Gradient of the loss with respect to `v`, available after
    /// [`Graph::backward`]. Tracked nodes the loss does not depend on get zeros.
    pub fn grad(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[1] != sb[0] {
            return Err(Error::Dimension {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let mut out = vec![F::zero(); sa[0] * sb[1]];
        gemm_acc(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            sa[0],
            sa[1],
            sb[1],
        );
        let tracked = self.is_tracked(a) || self.is_tracked(b);
        let value = Tensor::new(sa[0], sb[1], out)?;
        Ok(self.push(value, Op::MatMul(a.0, b.0), tracked, Vec::new()))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.value(x).transpose();
        self.unary(x, value, Op::Transpose(x.0))
    }

    fn binary_shape(&self, op: &'static str, a: Var, b: Var) -> Result<([usize; 2], Bcast)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            Ok((sa, Bcast::None))
        } else if sb == [1, 1] {
            Ok((sa, Bcast::Right))
        } else if sa == [1, 1] {
            Ok((sb, Bcast::Left))
        } else {
            Err(Error::Dimension {
                op,
                left: sa,
                right: sb,
            })
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(F, F) -> F,
        op: impl FnOnce(usize, usize, Bcast) -> Op<F>,
    ) -> Result<Var> {
        let (shape, bc) = self.binary_shape(name, a, b)?;
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let data: Vec<F> = match bc {
            Bcast::None => va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect(),
            Bcast::Right => va.iter().map(|&x| f(x, vb[0])).collect(),
            Bcast::Left => vb.iter().map(|&y| f(va[0], y)).collect(),
        };
        let tracked = self.is_tracked(a) || self.is_tracked(b);
        let value = Tensor::new(shape[0], shape[1], data)?;
        Ok(self.push(value, op(a.0, b.0, bc), tracked, Vec::new()))
    }

    /// Elementwise sum; shapes must match or one side must be `1x1`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    /// Elementwise (Hadamard) product; shapes must match or one side must be `1x1`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("multiply", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn scale(&mut self, x: Var, s: F) -> Var {
        let value = self.value(x).map(|v| v * s);
        self.unary(x, value, Op::Scale(x.0, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: F) -> Var {
        let value = self.value(x).map(|v| v + s);
        self.unary(x, value, Op::AddScalar(x.0))
    }

    /// `max(x, 0)`; the derivative at exactly zero is zero.
    pub fn relu(&mut self, x: Var) -> Var {
        let margin = self
            .value(x)
            .data()
            .iter()
            .map(|v| v.abs().as_f64())
            .fold(f64::INFINITY, f64::min);
        self.note_kink(margin);
        let value = self.value(x).map(|v| if v > F::zero() { v } else { F::zero() });
        self.unary(x, value, Op::Relu(x.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        self.unary(x, value, Op::Sigmoid(x.0))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(F::tanh);
        self.unary(x, value, Op::Tanh(x.0))
    }

    /// `ln(max(x, floor))`. Clamped entries receive no gradient.
    pub fn log_clamped(&mut self, x: Var, floor: F) -> Var {
        let value = self.value(x).map(|v| v.max(floor).ln());
        self.unary(x, value, Op::Log(x.0, floor))
    }

    /// Dispatches one of the named elementwise kinds.
    pub fn elementwise(&mut self, kind: Elementwise<F>, inputs: &[Var]) -> Result<Var> {
        let arity = match kind {
            Elementwise::Multiply | Elementwise::Add => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(Error::Contract(format!(
                "{kind:?} takes {arity} inputs, got {}",
                inputs.len()
            )));
        }
        Ok(match kind {
            Elementwise::Relu => self.relu(inputs[0]),
            Elementwise::Sigmoid => self.sigmoid(inputs[0]),
            Elementwise::Tanh => self.tanh(inputs[0]),
            Elementwise::Scale(s) => self.scale(inputs[0], s),
            Elementwise::Multiply => self.mul(inputs[0], inputs[1])?,
            Elementwise::Add => self.add(inputs[0], inputs[1])?,
        })
    }

    /// Adds a `1 x cols` bias to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sb != [1, sx[1]] {
            return Err(Error::Dimension {
                op: "add_row",
                left: sx,
                right: sb,
            });
        }
        let b = self.value(bias).data();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(sx[1]) {
            for (v, &bv) in row.iter_mut().zip(b) {
                *v = *v + bv;
            }
        }
        let tracked = self.is_tracked(x) || self.is_tracked(bias);
        let value = Tensor::new(sx[0], sx[1], data)?;
        Ok(self.push(value, Op::AddRow(x.0, bias.0), tracked, Vec::new()))
    }

    /// Multiplies every row `r` of `x` by the scalar `col[r]`.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var> {
        let (sx, sc) = (self.shape(x), self.shape(col));
        if sc != [sx[0], 1] {
            return Err(Error::Dimension {
                op: "mul_col",
                left: sx,
                right: sc,
            });
        }
        let c = self.value(col).data();
        let mut data = self.value(x).data().to_vec();
        for (row, &w) in data.chunks_mut(sx[1]).zip(c) {
            for v in row.iter_mut() {
                *v = *v * w;
            }
        }
        let tracked = self.is_tracked(x) || self.is_tracked(col);
        let value = Tensor::new(sx[0], sx[1], data)?;
        Ok(self.push(value, Op::MulCol(x.0, col.0), tracked, Vec::new()))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if !xv.is_finite() {
            return Err(Error::Numeric("softmax_rows input".to_string()));
        }
        let cols = xv.cols();
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(cols) {
            softmax_in_place(row);
        }
        let value = Tensor::new(xv.rows(), cols, data)?;
        Ok(self.unary(x, value, Op::SoftmaxRows(x.0)))
    }

    /// Per-row layer normalization with `1 x d` gain and bias; the variance is
    /// the biased estimate plus `eps`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: F) -> Result<Var> {
        let sx = self.shape(x);
        let d = sx[1];
        if d < 2 {
            return Err(Error::Dimension {
                op: "layer_norm",
                left: sx,
                right: [1, d],
            });
        }
        for p in [gain, bias] {
            if self.shape(p) != [1, d] {
                return Err(Error::Dimension {
                    op: "layer_norm",
                    left: sx,
                    right: self.shape(p),
                });
            }
        }
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let xv = self.value(x).data();
        let dn = F::of(d as f64);
        let mut out = Vec::with_capacity(xv.len());
        let mut aux = Vec::with_capacity(xv.len() + sx[0]);
        let mut rstds = Vec::with_capacity(sx[0]);
        for row in xv.chunks(d) {
            let mean = row.iter().copied().sum::<F>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / dn;
            let rstd = F::one() / (var + eps).sqrt();
            for (k, &v) in row.iter().enumerate() {
                let xh = (v - mean) * rstd;
                aux.push(xh);
                out.push(xh * g[k] + b[k]);
            }
            rstds.push(rstd);
        }
        aux.extend(rstds);
        let tracked = self.is_tracked(x) || self.is_tracked(gain) || self.is_tracked(bias);
        let value = Tensor::new(sx[0], d, out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
            },
            tracked,
            aux,
        ))
    }

    /// Divides each row by the sum of its absolute values, keeping signs.
    /// Rows whose l1 norm is `<= floor` pass through unchanged, so an
    /// all-zero row stays all-zero.
    pub fn row_l1_normalize(&mut self, x: Var, floor: F) -> Var {
        let xv = self.value(x);
        let cols = xv.cols();
        let mut data = xv.data().to_vec();
        let mut norms = Vec::with_capacity(xv.rows());
        let mut margin = f64::INFINITY;
        for row in data.chunks_mut(cols) {
            let s: F = row.iter().map(|v| v.abs()).sum();
            if s > floor {
                for v in row.iter_mut() {
                    if *v != F::zero() {
                        margin = margin.min(v.abs().as_f64());
                    }
                    *v = *v / s;
                }
                norms.push(s);
            } else {
                norms.push(F::zero());
            }
        }
        let rows = xv.rows();
        self.note_kink(margin);
        let value = Tensor::new(rows, cols, data).expect("same shape");
        let tracked = self.is_tracked(x);
        self.push(value, Op::RowL1Normalize(x.0), tracked, norms)
    }

    /// Multiplies by a fixed mask; no gradient flows into the mask.
    pub fn mask(&mut self, x: Var, mask: Vec<F>) -> Result<Var> {
        let sx = self.shape(x);
        if mask.len() != sx[0] * sx[1] {
            return Err(Error::Dimension {
                op: "mask",
                left: sx,
                right: [mask.len(), 1],
            });
        }
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let value = Tensor::new(sx[0], sx[1], data)?;
        Ok(self.unary(x, value, Op::Mask(x.0, mask)))
    }

    /// Keeps entries `>= tau` and zeroes the rest. The gate is treated as a
    /// constant in the backward pass.
    pub fn threshold(&mut self, x: Var, tau: F) -> Var {
        let xv = self.value(x).data();
        let margin = xv
            .iter()
            .map(|&v| (v - tau).abs().as_f64())
            .fold(f64::INFINITY, f64::min);
        let mask = xv
            .iter()
            .map(|&v| if v >= tau { F::one() } else { F::zero() })
            .collect();
        self.note_kink(margin);
        self.mask(x, mask).expect("mask built from x")
    }

    /// Inverted dropout: zeroes each entry with probability `rate` and scales
    /// survivors by `1 / (1 - rate)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: F, rng: &mut R) -> Var {
        if rate <= F::zero() {
            return x;
        }
        let keep = F::one() / (F::one() - rate);
        let p = rate.as_f64();
        let mask = (0..self.value(x).len())
            .map(|_| {
                if rng.random::<f64>() < p {
                    F::zero()
                } else {
                    keep
                }
            })
            .collect();
        self.mask(x, mask).expect("mask built from x")
    }

    /// Sum of all entries as a `1x1` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.unary(x, Tensor::scalar(s), Op::Sum(x.0))
    }

    /// Column means, `1 x cols`.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (r, c) = (xv.rows(), xv.cols());
        let mut out = vec![F::zero(); c];
        for row in xv.data().chunks(c) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o = *o + v;
            }
        }
        let rn = F::of(r as f64);
        for o in &mut out {
            *o = *o / rn;
        }
        let value = Tensor::new(1, c, out).expect("positive cols");
        self.unary(x, value, Op::MeanRows(x.0))
    }

    /// Row sums, `rows x 1`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let out = xv
            .data()
            .chunks(xv.cols())
            .map(|row| row.iter().copied().sum())
            .collect();
        let value = Tensor::new(xv.rows(), 1, out).expect("positive rows");
        self.unary(x, value, Op::SumCols(x.0))
    }

    /// Sums consecutive blocks of `group` rows: `(g*k) x c -> k x c`.
    pub fn sum_row_groups(&mut self, x: Var, group: usize) -> Result<Var> {
        let sx = self.shape(x);
        if group == 0 || sx[0] % group != 0 {
            return Err(Error::Dimension {
                op: "sum_row_groups",
                left: sx,
                right: [group, 1],
            });
        }
        let c = sx[1];
        let k = sx[0] / group;
        let mut out = vec![F::zero(); k * c];
        for (r, row) in self.value(x).data().chunks(c).enumerate() {
            let dst = &mut out[(r / group) * c..(r / group + 1) * c];
            for (o, &v) in dst.iter_mut().zip(row) {
                *o = *o + v;
            }
        }
        let value = Tensor::new(k, c, out)?;
        Ok(self.unary(x, value, Op::SumRowGroups(x.0, group)))
    }

    /// Repeats each row `times` times consecutively.
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Result<Var> {
        let sx = self.shape(x);
        if times == 0 {
            return Err(Error::Contract("repeat_rows needs times >= 1".to_string()));
        }
        let mut out = Vec::with_capacity(sx[0] * times * sx[1]);
        for row in self.value(x).data().chunks(sx[1]) {
            for _ in 0..times {
                out.extend_from_slice(row);
            }
        }
        let value = Tensor::new(sx[0] * times, sx[1], out)?;
        Ok(self.unary(x, value, Op::RepeatRows(x.0, times)))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let sx = self.shape(x);
        if rows * cols != sx[0] * sx[1] {
            return Err(Error::Dimension {
                op: "reshape",
                left: sx,
                right: [rows, cols],
            });
        }
        let value = Tensor::new(rows, cols, self.value(x).data().to_vec())?;
        Ok(self.unary(x, value, Op::Reshape(x.0)))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let sx = self.shape(x);
        if len == 0 || start + len > sx[0] {
            return Err(Error::Dimension {
                op: "slice_rows",
                left: sx,
                right: [start, len],
            });
        }
        let data = self.value(x).data()[start * sx[1]..(start + len) * sx[1]].to_vec();
        let value = Tensor::new(len, sx[1], data)?;
        Ok(self.unary(x, value, Op::SliceRows(x.0, start)))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let sx = self.shape(x);
        if len == 0 || start + len > sx[1] {
            return Err(Error::Dimension {
                op: "slice_cols",
                left: sx,
                right: [start, len],
            });
        }
        let data = self
            .value(x)
            .data()
            .chunks(sx[1])
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let value = Tensor::new(sx[0], len, data)?;
        Ok(self.unary(x, value, Op::SliceCols(x.0, start)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat_rows of nothing".to_string()))?;
        let cols = self.shape(first)[1];
        let mut rows = 0;
        let mut data = Vec::new();
        let mut tracked = false;
        for &p in parts {
            let sp = self.shape(p);
            if sp[1] != cols {
                return Err(Error::Dimension {
                    op: "concat_rows",
                    left: self.shape(first),
                    right: sp,
                });
            }
            rows += sp[0];
            data.extend_from_slice(self.value(p).data());
            tracked |= self.is_tracked(p);
        }
        let value = Tensor::new(rows, cols, data)?;
        let ids = parts.iter().map(|p| p.0).collect();
        Ok(self.push(value, Op::ConcatRows(ids), tracked, Vec::new()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat_cols of nothing".to_string()))?;
        let rows = self.shape(first)[0];
        let mut cols = 0;
        let mut tracked = false;
        for &p in parts {
            let sp = self.shape(p);
            if sp[0] != rows {
                return Err(Error::Dimension {
                    op: "concat_cols",
                    left: self.shape(first),
                    right: sp,
                });
            }
            cols += sp[1];
            tracked |= self.is_tracked(p);
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = Tensor::new(rows, cols, data)?;
        let ids = parts.iter().map(|p| p.0).collect();
        Ok(self.push(value, Op::ConcatCols(ids), tracked, Vec::new()))
    }

    /// Propagates gradients from the scalar `loss` to every tracked node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::State(
                "backward already ran on this graph; rebuild it with a new forward pass"
                    .to_string(),
            ));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::Contract("loss is not a node of this graph".to_string()));
        }
        if self.shape(loss) != [1, 1] {
            return Err(Error::Contract(format!(
                "loss must be scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_done = true;
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<F>>> = vec![None; n];
        grads[loss.0] = Some(vec![F::one()]);
        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            if self.nodes[i].tracked {
                self.backprop_node(i, &gy, &mut grads);
            }
            grads[i] = Some(gy);
        }
        self.grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| {
                node.tracked.then(|| {
                    let [r, c] = node.value.shape();
                    let data = g.unwrap_or_else(|| vec![F::zero(); r * c]);
                    Tensor::new(r, c, data).expect("grad matches value shape")
                })
            })
            .collect();
        Ok(())
    }

    fn backprop_node(&self, i: usize, gy: &[F], grads: &mut [Option<Vec<F>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        let [rows, cols] = node.value.shape();
        let nodes = &self.nodes;
        let mut acc = |idx: usize, f: &mut dyn FnMut(&mut [F])| {
            if !nodes[idx].tracked {
                return;
            }
            let len = nodes[idx].value.len();
            let buf = grads[idx].get_or_insert_with(|| vec![F::zero(); len]);
            f(buf);
        };
        let val = |idx: usize| nodes[idx].value.data();
        let shp = |idx: usize| nodes[idx].value.shape();

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let ([m, k], [_, n]) = (shp(*a), shp(*b));
                acc(*a, &mut |ga| gemm_bt_acc(gy, val(*b), ga, m, n, k));
                acc(*b, &mut |gb| gemm_at_acc(val(*a), gy, gb, m, k, n));
            }
            Op::Transpose(x) => {
                acc(*x, &mut |gx| {
                    // y is cols x rows of x; gx[r][c] += gy[c][r]
                    for r in 0..cols {
                        for c in 0..rows {
                            gx[r * rows + c] = gx[r * rows + c] + gy[c * cols + r];
                        }
                    }
                });
            }
            Op::Add(a, b, bc) | Op::Sub(a, b, bc) => {
                let sign = if matches!(node.op, Op::Sub(..)) {
                    -F::one()
                } else {
                    F::one()
                };
                acc(*a, &mut |ga| reduce_into(ga, gy, *bc == Bcast::Left, |g, _| g));
                acc(*b, &mut |gb| {
                    reduce_into(gb, gy, *bc == Bcast::Right, |g, _| g * sign)
                });
            }
            Op::Mul(a, b, bc) => {
                let (va, vb) = (val(*a), val(*b));
                let pick = |v: &[F], j: usize| if v.len() == 1 { v[0] } else { v[j] };
                acc(*a, &mut |ga| {
                    reduce_into(ga, gy, *bc == Bcast::Left, |g, j| g * pick(vb, j))
                });
                acc(*b, &mut |gb| {
                    reduce_into(gb, gy, *bc == Bcast::Right, |g, j| g * pick(va, j))
                });
            }
            Op::Scale(x, s) => acc(*x, &mut |gx| axpy(gx, gy, |g, _| g * *s)),
            Op::AddScalar(x) | Op::Reshape(x) => acc(*x, &mut |gx| axpy(gx, gy, |g, _| g)),
            Op::Relu(x) => {
                let xv = val(*x);
                acc(*x, &mut |gx| {
                    axpy(gx, gy, |g, j| if xv[j] > F::zero() { g } else { F::zero() })
                });
            }
            Op::Sigmoid(x) => {
                acc(*x, &mut |gx| axpy(gx, gy, |g, j| g * y[j] * (F::one() - y[j])));
            }
            Op::Tanh(x) => {
                acc(*x, &mut |gx| axpy(gx, gy, |g, j| g * (F::one() - y[j] * y[j])));
            }
            Op::Log(x, floor) => {
                let xv = val(*x);
                acc(*x, &mut |gx| {
                    axpy(gx, gy, |g, j| if xv[j] > *floor { g / xv[j] } else { F::zero() })
                });
            }
            Op::AddRow(x, bias) => {
                acc(*x, &mut |gx| axpy(gx, gy, |g, _| g));
                acc(*bias, &mut |gb| {
                    for row in gy.chunks(cols) {
                        for (o, &g) in gb.iter_mut().zip(row) {
                            *o = *o + g;
                        }
                    }
                });
            }
            Op::MulCol(x, col) => {
                let (xv, cv) = (val(*x), val(*col));
                acc(*x, &mut |gx| axpy(gx, gy, |g, j| g * cv[j / cols]));
                acc(*col, &mut |gc| {
                    for (r, (grow, xrow)) in gy.chunks(cols).zip(xv.chunks(cols)).enumerate() {
                        let s: F = grow.iter().zip(xrow).map(|(&g, &v)| g * v).sum();
                        gc[r] = gc[r] + s;
                    }
                });
            }
            Op::SoftmaxRows(x) => {
                acc(*x, &mut |gx| {
                    for r in 0..rows {
                        let (yr, gr) = (&y[r * cols..(r + 1) * cols], &gy[r * cols..(r + 1) * cols]);
                        let dot: F = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        for c in 0..cols {
                            let j = r * cols + c;
                            gx[j] = gx[j] + yr[c] * (gr[c] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias } => {
                let xhat = &node.aux[..rows * cols];
                let rstd = &node.aux[rows * cols..];
                let g = val(*gain);
                let dn = F::of(cols as f64);
                acc(*x, &mut |gx| {
                    for r in 0..rows {
                        let span = r * cols..(r + 1) * cols;
                        let (xh, gr) = (&xhat[span.clone()], &gy[span]);
                        let mut s1 = F::zero();
                        let mut s2 = F::zero();
                        for c in 0..cols {
                            let dxh = gr[c] * g[c];
                            s1 = s1 + dxh;
                            s2 = s2 + dxh * xh[c];
                        }
                        for c in 0..cols {
                            let dxh = gr[c] * g[c];
                            let j = r * cols + c;
                            gx[j] = gx[j] + rstd[r] / dn * (dn * dxh - s1 - xh[c] * s2);
                        }
                    }
                });
                acc(*gain, &mut |gg| {
                    for (j, &g) in gy.iter().enumerate() {
                        gg[j % cols] = gg[j % cols] + g * xhat[j];
                    }
                });
                acc(*bias, &mut |gb| {
                    for (j, &g) in gy.iter().enumerate() {
                        gb[j % cols] = gb[j % cols] + g;
                    }
                });
            }
            Op::RowL1Normalize(x) => {
                let xv = val(*x);
                let norms = &node.aux;
                acc(*x, &mut |gx| {
                    for r in 0..rows {
                        let span = r * cols..(r + 1) * cols;
                        let (xr, gr) = (&xv[span.clone()], &gy[span]);
                        let s = norms[r];
                        if s == F::zero() {
                            for c in 0..cols {
                                gx[r * cols + c] = gx[r * cols + c] + gr[c];
                            }
                            continue;
                        }
                        let dot: F = gr.iter().zip(xr).map(|(&g, &v)| g * v).sum();
                        for c in 0..cols {
                            let sign = if xr[c] > F::zero() {
                                F::one()
                            } else if xr[c] < F::zero() {
                                -F::one()
                            } else {
                                F::zero()
                            };
                            let j = r * cols + c;
                            gx[j] = gx[j] + gr[c] / s - sign * dot / (s * s);
                        }
                    }
                });
            }
            Op::Mask(x, m) => acc(*x, &mut |gx| axpy(gx, gy, |g, j| g * m[j])),
            Op::Sum(x) => acc(*x, &mut |gx| {
                for v in gx.iter_mut() {
                    *v = *v + gy[0];
                }
            }),
            Op::MeanRows(x) => {
                let r = F::of(shp(*x)[0] as f64);
                acc(*x, &mut |gx| {
                    for (j, v) in gx.iter_mut().enumerate() {
                        *v = *v + gy[j % cols] / r;
                    }
                });
            }
            Op::SumCols(x) => {
                let c = shp(*x)[1];
                acc(*x, &mut |gx| {
                    for (j, v) in gx.iter_mut().enumerate() {
                        *v = *v + gy[j / c];
                    }
                });
            }
            Op::SumRowGroups(x, group) => acc(*x, &mut |gx| {
                for (j, v) in gx.iter_mut().enumerate() {
                    let (r, c) = (j / cols, j % cols);
                    *v = *v + gy[(r / group) * cols + c];
                }
            }),
            Op::RepeatRows(x, times) => acc(*x, &mut |gx| {
                for (r, row) in gy.chunks(cols).enumerate() {
                    let dst = &mut gx[(r / times) * cols..(r / times + 1) * cols];
                    for (o, &g) in dst.iter_mut().zip(row) {
                        *o = *o + g;
                    }
                }
            }),
            Op::SliceRows(x, start) => acc(*x, &mut |gx| {
                let off = start * cols;
                for (j, &g) in gy.iter().enumerate() {
                    gx[off + j] = gx[off + j] + g;
                }
            }),
            Op::SliceCols(x, start) => {
                let xc = shp(*x)[1];
                acc(*x, &mut |gx| {
                    for r in 0..rows {
                        for c in 0..cols {
                            let j = r * xc + start + c;
                            gx[j] = gx[j] + gy[r * cols + c];
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = nodes[p].value.len();
                    acc(p, &mut |gp| axpy(gp, &gy[off..off + len], |g, _| g));
                    off += len;
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let pc = shp(p)[1];
                    acc(p, &mut |gp| {
                        for r in 0..rows {
                            for c in 0..pc {
                                gp[r * pc + c] = gp[r * pc + c] + gy[r * cols + off + c];
                            }
                        }
                    });
                    off += pc;
                }
            }
        }
    }
}

#[inline]
fn axpy<F: Real>(dst: &mut [F], src: &[F], f: impl Fn(F, usize) -> F) {
    for (j, (d, &s)) in dst.iter_mut().zip(src).enumerate() {
        *d = *d + f(s, j);
    }
}

/// Accumulates `f(gy[j], j)` into `dst`, summing everything into `dst[0]` when
/// `dst` was a broadcast scalar.
#[inline]
fn reduce_into<F: Real>(dst: &mut [F], gy: &[F], broadcast: bool, f: impl Fn(F, usize) -> F) {
    if broadcast {
        let s: F = gy.iter().enumerate().map(|(j, &g)| f(g, j)).sum();
        dst[0] = dst[0] + s;
    } else {
        axpy(dst, gy, f);
    }
}

#[inline]
pub(crate) fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

pub(crate) fn softmax_in_place<F: Real>(row: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut s = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        s = s + *v;
    }
    for v in row.iter_mut() {
        *v = *v / s;
    }
}
