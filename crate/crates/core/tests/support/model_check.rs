//! Finite-difference check of the full training objective.

#![allow(dead_code)]

use psp_core::config::{Dims, ModelConfig, PspConfig, PspMode, Supervision};
use psp_core::data::{Generator, GeneratorConfig};
use psp_core::gradcheck::grad_check_many;
use psp_core::heads::Dropout;
use psp_core::model::{forward, loss};
use psp_core::params::{group_of, ModelParams};
use psp_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const KINK_MARGIN: f64 = 1e-3;

pub struct FullCheck {
    /// Worst relative error per parameter group, groups in model order.
    pub groups: Vec<(String, f64)>,
    pub kink_margin: f64,
    pub seed: u64,
}

pub fn small_config(supervision: Supervision) -> ModelConfig {
    ModelConfig {
        dims: Dims {
            t: 4,
            c: 3,
            n: 2,
            d_v: 5,
            d_a: 4,
            d_l: 8,
            d_h: 6,
            d_att: 4,
        },
        supervision,
        psp: PspConfig {
            mode: PspMode::Full,
            tau: 0.095,
            asp_keep_relu: false,
        },
        lambda: 100.0,
        use_weighting: true,
        dropout: 0.0,
        background: 2,
    }
}

/// Random weights and a random video at `seed`.
fn instance(cfg: &ModelConfig, seed: u64) -> (ModelParams<Tensor<f64>>, psp_core::data::VideoSample) {
    let d = cfg.dims;
    let gen = Generator::new(GeneratorConfig {
        t: d.t,
        c: d.c,
        n: d.n,
        d_v: d.d_v,
        d_a: d.d_a,
        noise_std: 0.5,
        span_min: 1,
        span_max: 3,
        desync_prob: 0.5,
        background: cfg.background,
        seed,
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::<Tensor<f64>>::init(&d, seed)
        .unwrap()
        .map(|t| {
            let d = (0..t.len()).map(|_| rng.random_range(-0.6..0.6)).collect();
            Tensor::new(t.rows(), t.cols(), d).unwrap()
        });
    (params, gen.generate(seed))
}

/// Checks the loss gradient with respect to every weight at the first seed
/// from `first_seed` whose forward pass stays `KINK_MARGIN` away from every
/// relu kink and threshold.
pub fn check_full_loss(supervision: Supervision, first_seed: u64) -> FullCheck {
    let cfg = small_config(supervision);
    for seed in first_seed..first_seed + 200 {
        let (params, sample) = instance(&cfg, seed);
        let named = params.named();
        let inputs: Vec<Tensor<f64>> = named.iter().map(|(_, t)| (*t).clone()).collect();
        let mut order = 0;
        params.map(|t| {
            assert_eq!(t, &inputs[order], "map and named disagree on order");
            order += 1;
        });
        let report = grad_check_many(
            |g, xs| {
                let mut i = 0;
                let p = params.map(|_| {
                    i += 1;
                    xs[i - 1]
                });
                let fwd = forward(g, &p, &sample, &cfg, &mut Dropout::disabled())?;
                loss(g, &fwd, &sample, &cfg)
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        if report.kink_margin < KINK_MARGIN {
            continue;
        }
        let mut groups: Vec<(String, f64)> = Vec::new();
        for ((name, _), err) in named.iter().zip(&report.per_input) {
            let group = group_of(name);
            match groups.iter_mut().find(|(g, _)| g == group) {
                Some((_, worst)) => *worst = worst.max(*err),
                None => groups.push((group.to_string(), *err)),
            }
        }
        let unused = match supervision {
            Supervision::Fully => "weak_head",
            Supervision::Weakly => "fully_head",
        };
        groups.retain(|(g, _)| g != unused);
        return FullCheck {
            groups,
            kink_margin: report.kink_margin,
            seed,
        };
    }
    panic!("no instance away from kinks");
}
