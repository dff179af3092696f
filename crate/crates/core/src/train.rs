//! Mini-batch training and segment-level evaluation.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ModelConfig, TrainConfig};
use crate::data::VideoSample;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::heads::Dropout;
use crate::model::{forward, infer, loss, predict_segments};
use crate::optim::Optimizer;
use crate::params::ModelParams;
use crate::seed::derive;
use crate::tensor::{Real, Tensor};

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const DROPOUT_STREAM: u64 = 3;

/// Seed used to initialize weights for a training seed.
pub fn init_seed(seed: u64) -> u64 {
    derive(seed, &[INIT_STREAM])
}

/// Loss and parameter gradients for one video.
pub fn sample_gradients<F: Real>(
    params: &ModelParams<Tensor<F>>,
    sample: &VideoSample,
    cfg: &ModelConfig,
    dropout: &mut Dropout,
) -> Result<(F, ModelParams<Tensor<F>>)> {
    let mut g = Graph::new();
    let vars = params.bind(&mut g);
    let fwd = forward(&mut g, &vars, sample, cfg, dropout)?;
    let l = loss(&mut g, &fwd, sample, cfg)?;
    let value = g.value(l).item()?;
    g.backward(l)?;
    Ok((value, vars.map(|v| g.grad(*v).expect("params are tracked").clone())))
}

/// Scalar objective for one video without dropout.
pub fn sample_loss<F: Real>(
    params: &ModelParams<Tensor<F>>,
    sample: &VideoSample,
    cfg: &ModelConfig,
) -> Result<F> {
    let mut g = Graph::new();
    let vars = params.bind_constant(&mut g);
    let fwd = forward(&mut g, &vars, sample, cfg, &mut Dropout::disabled())?;
    let l = loss(&mut g, &fwd, sample, cfg)?;
    g.value(l).item()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<F> {
    pub params: ModelParams<Tensor<F>>,
    /// Mean training loss of each epoch.
    pub loss_curve: Vec<f64>,
}

/// Runs `cfg.epochs` passes of mini-batch optimization from `init`.
/// Deterministic in `(cfg, init, data)`.
pub fn train_from<F: Real>(
    cfg: &TrainConfig,
    init: ModelParams<Tensor<F>>,
    data: &[VideoSample],
) -> Result<TrainOutcome<F>> {
    cfg.validate()?;
    init.check_dims(&cfg.model.dims)?;
    if data.is_empty() && cfg.epochs > 0 {
        return Err(Error::Validation("training set is empty".into()));
    }
    let mut params = init;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, &[SHUFFLE_STREAM, epoch as u64]));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc = params.zeros_like();
            let mut batch_loss = 0.0;
            for &i in chunk {
                let mut dropout = Dropout::training(
                    cfg.model.dropout,
                    derive(cfg.seed, &[DROPOUT_STREAM, epoch as u64, i as u64]),
                );
                let (l, grads) = sample_gradients(&params, &data[i], &cfg.model, &mut dropout)?;
                if !l.is_finite() {
                    return Err(Error::Divergence { epoch, batch });
                }
                batch_loss += l.as_f64();
                for ((_, a), (_, g)) in acc.named_mut().into_iter().zip(grads.named()) {
                    for (x, &y) in a.data_mut().iter_mut().zip(g.data()) {
                        *x = *x + y;
                    }
                }
            }
            let scale = F::one() / F::of(chunk.len() as f64);
            for (_, a) in acc.named_mut() {
                for x in a.data_mut() {
                    *x = *x * scale;
                }
            }
            opt.step(&mut params, &acc);
            if !params.is_finite() {
                return Err(Error::Divergence { epoch, batch });
            }
            epoch_loss += batch_loss;
        }
        loss_curve.push(epoch_loss / data.len() as f64);
    }
    Ok(TrainOutcome { params, loss_curve })
}

/// Initializes from `cfg.seed` and trains.
pub fn train<F: Real>(cfg: &TrainConfig, data: &[VideoSample]) -> Result<TrainOutcome<F>> {
    cfg.validate()?;
    let init = ModelParams::init(&cfg.model.dims, init_seed(cfg.seed))?;
    train_from(cfg, init, data)
}

/// Segment classification accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub correct: usize,
    pub total: usize,
    pub segment_accuracy: f64,
    /// Accuracy over segments whose true class is `c`; `None` when the class
    /// never occurs.
    pub per_class: Vec<Option<f64>>,
}

/// Predicted class of every segment of every video.
pub fn predict<F: Real>(
    params: &ModelParams<Tensor<F>>,
    cfg: &ModelConfig,
    data: &[VideoSample],
) -> Result<Vec<Vec<usize>>> {
    data.iter()
        .map(|s| {
            let (g, fwd) = infer(params, s, cfg)?;
            Ok(predict_segments(&g, &fwd, cfg))
        })
        .collect()
}

/// Compares predictions with reference classes.
pub fn score(predictions: &[Vec<usize>], truth: &[Vec<usize>], classes: usize) -> Metrics {
    let mut hits = vec![0usize; classes];
    let mut counts = vec![0usize; classes];
    for (p, t) in predictions.iter().zip(truth) {
        for (&pc, &tc) in p.iter().zip(t) {
            counts[tc] += 1;
            hits[tc] += (pc == tc) as usize;
        }
    }
    let correct: usize = hits.iter().sum();
    let total: usize = counts.iter().sum();
    Metrics {
        correct,
        total,
        segment_accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        per_class: hits
            .iter()
            .zip(&counts)
            .map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64))
            .collect(),
    }
}

/// Segment accuracy against each video's full labels. Never changes `params`.
pub fn evaluate<F: Real>(
    params: &ModelParams<Tensor<F>>,
    cfg: &ModelConfig,
    data: &[VideoSample],
) -> Result<Metrics> {
    cfg.validate()?;
    params.check_dims(&cfg.dims)?;
    let preds = predict(params, cfg, data)?;
    let truth: Vec<Vec<usize>> = data.iter().map(VideoSample::segment_classes).collect();
    Ok(score(&preds, &truth, cfg.dims.c))
}
