//! Central finite-difference verification of analytic gradients.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::{Real, Tensor};

/// Outcome of a multi-input gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Worst relative error per input, in input order.
    pub per_input: Vec<f64>,
    /// Smallest distance to a kink observed during the analytic pass.
    pub kink_margin: f64,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.per_input.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares the analytic gradient of the scalar function `f` at `x` with
/// central differences of width `2 * step`. Returns the largest
/// `|analytic - numeric| / max(1, |analytic|)` over all coordinates.
pub fn grad_check<F, Fun>(f: Fun, x: &Tensor<F>, step: F) -> Result<f64>
where
    F: Real,
    Fun: Fn(&mut Graph<F>, Var) -> Result<Var>,
{
    let report = grad_check_many(
        |g, xs| f(g, xs[0]),
        core::slice::from_ref(x),
        step,
    )?;
    Ok(report.max_error())
}

/// Multi-input variant of [`grad_check`]: every tensor in `inputs` becomes a
/// tracked leaf and is perturbed coordinate by coordinate.
pub fn grad_check_many<F, Fun>(f: Fun, inputs: &[Tensor<F>], step: F) -> Result<GradCheckReport>
where
    F: Real,
    Fun: Fn(&mut Graph<F>, &[Var]) -> Result<Var>,
{
    if !(step > F::zero()) {
        return Err(Error::Contract("finite-difference step must be positive".into()));
    }
    let eval = |xs: &[Tensor<F>]| -> Result<F> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        g.value(out).item()
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Tensor<F>> = vars
        .iter()
        .map(|&v| g.grad(v).cloned().expect("leaf is tracked"))
        .collect();

    let mut work: Vec<Tensor<F>> = inputs.to_vec();
    let mut per_input = Vec::with_capacity(inputs.len());
    let two = F::of(2.0);
    for (i, grad) in analytic.iter().enumerate() {
        let mut worst = 0.0f64;
        for j in 0..work[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + step;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - step;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = ((plus - minus) / (two * step)).as_f64();
            let a = grad.data()[j].as_f64();
            let err = (a - numeric).abs() / a.abs().max(1.0);
            worst = worst.max(err);
        }
        per_input.push(worst);
    }
    Ok(GradCheckReport {
        per_input,
        kink_margin: g.kink_margin(),
    })
}
