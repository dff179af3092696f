#[path = "support/model_check.rs"]
mod model_check;

use psp_core::config::{ModelConfig, PspMode, Supervision, TrainConfig};
use psp_core::data::{split_indices, Generator, GeneratorConfig, VideoSample};
use psp_core::error::Error;
use psp_core::model::{check_sample, infer, predict_segments};
use psp_core::params::ModelParams;
use psp_core::tensor::Tensor;
use psp_core::train::{evaluate, init_seed, sample_loss, score, train, train_from};

fn dataset(cfg: GeneratorConfig, count: usize) -> Vec<VideoSample> {
    Generator::new(cfg).unwrap().dataset(count)
}

fn mean_loss(params: &ModelParams<Tensor<f32>>, cfg: &ModelConfig, data: &[VideoSample]) -> f64 {
    data.iter()
        .map(|s| sample_loss(params, s, cfg).unwrap() as f64)
        .sum::<f64>()
        / data.len() as f64
}

#[test]
fn full_objective_gradients_match_finite_differences() {
    for sup in [Supervision::Fully, Supervision::Weakly] {
        let check = model_check::check_full_loss(sup, 0);
        assert!(check.kink_margin >= model_check::KINK_MARGIN);
        assert!(check.groups.len() >= 6, "{:?}", check.groups);
        for (group, err) in &check.groups {
            assert!(*err < 1e-4, "{sup:?} {group}: {err}");
        }
    }
}

#[test]
fn zero_epochs_returns_the_initialization() {
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let data = dataset(GeneratorConfig::default(), 4);
    let out = train::<f32>(&cfg, &data).unwrap();
    assert!(out.loss_curve.is_empty());
    let init = ModelParams::<Tensor<f32>>::init(&cfg.model.dims, init_seed(cfg.seed)).unwrap();
    assert_eq!(out.params, init);
}

#[test]
fn training_lowers_the_loss_and_is_deterministic() {
    let cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let data = dataset(GeneratorConfig::default(), 160);
    let init = ModelParams::<Tensor<f32>>::init(&cfg.model.dims, init_seed(cfg.seed)).unwrap();
    let out = train_from(&cfg, init.clone(), &data).unwrap();
    assert_eq!(out.loss_curve.len(), 3);
    assert!(mean_loss(&out.params, &cfg.model, &data) < mean_loss(&init, &cfg.model, &data));
    let again = train_from(&cfg, init, &data).unwrap();
    assert_eq!(out, again);
}

#[test]
fn empty_training_set_is_rejected() {
    let cfg = TrainConfig::default();
    assert!(matches!(train::<f32>(&cfg, &[]), Err(Error::Validation(_))));
}

#[test]
fn untrained_model_is_near_chance_on_balanced_data() {
    // Spans of 8 out of 10 segments spread evenly over four event classes
    // make every class, background included, a fifth of all segments.
    let gen = GeneratorConfig {
        span_min: 8,
        span_max: 8,
        ..GeneratorConfig::default()
    };
    let data = dataset(gen, 500);
    for sup in [Supervision::Fully, Supervision::Weakly] {
        let mut cfg = ModelConfig::default();
        cfg.supervision = sup;
        let params = ModelParams::<Tensor<f32>>::init(&cfg.dims, 11).unwrap();
        let m = evaluate(&params, &cfg, &data).unwrap();
        assert_eq!(m.total, 5000);
        assert!((m.segment_accuracy - 0.2).abs() <= 0.1, "{sup:?}: {}", m.segment_accuracy);
    }
}

#[test]
fn true_labels_score_perfectly() {
    let data = dataset(GeneratorConfig::default(), 20);
    let truth: Vec<Vec<usize>> = data.iter().map(VideoSample::segment_classes).collect();
    let m = score(&truth, &truth, 5);
    assert_eq!(m.segment_accuracy, 1.0);
    assert_eq!(m.correct, 200);
}

#[test]
fn clean_dataset_is_learned() {
    let gen = GeneratorConfig {
        noise_std: 0.0,
        desync_prob: 0.0,
        ..GeneratorConfig::default()
    };
    let all = dataset(gen, 300);
    let (train_idx, _, test_idx) = split_indices(all.len(), 0);
    let train_set: Vec<_> = train_idx.iter().map(|&i| all[i].clone()).collect();
    let test_set: Vec<_> = test_idx.iter().map(|&i| all[i].clone()).collect();
    let cfg = TrainConfig {
        epochs: 8,
        ..TrainConfig::default()
    };
    let out = train::<f32>(&cfg, &train_set).unwrap();
    let m = evaluate(&out.params, &cfg.model, &test_set).unwrap();
    assert!(m.segment_accuracy > 0.95, "{}", m.segment_accuracy);
}

#[test]
fn weak_predictions_follow_the_segment_weights() {
    let mut cfg = ModelConfig::default();
    cfg.supervision = Supervision::Weakly;
    let sample = dataset(GeneratorConfig::default(), 1).remove(0);
    let mut params = ModelParams::<Tensor<f32>>::init(&cfg.dims, 5).unwrap();

    // A large negative W6 drives every weight towards zero: all background.
    params.weak.w6 = Tensor::full(cfg.dims.c, 1, -1e3);
    params.weak.w5 = params.weak.w5.map(|v| v.abs());
    params.weak.w4 = params.weak.w4.map(|v| v.abs());
    let (g, fwd) = infer(&params, &sample, &cfg).unwrap();
    let phi = g.value(fwd.weak.unwrap().phi);
    let preds = predict_segments(&g, &fwd, &cfg);
    for t in 0..cfg.dims.t {
        if phi.get(t, 0) < 0.5 {
            assert_eq!(preds[t], cfg.background);
        }
    }

    // Without the branch every weight is 0.5, so nothing is forced to
    // background and each segment takes its top-scoring class.
    cfg.use_weighting = false;
    let (g, fwd) = infer(&params, &sample, &cfg).unwrap();
    let f_h = g.value(fwd.weak.unwrap().f_h).clone();
    let preds = predict_segments(&g, &fwd, &cfg);
    for (t, &p) in preds.iter().enumerate() {
        let row = f_h.row(t);
        assert!(row.iter().all(|&v| v <= row[p]));
    }
}

#[test]
fn mismatched_samples_are_rejected() {
    let cfg = ModelConfig::default();
    let sample = dataset(
        GeneratorConfig {
            t: 6,
            span_min: 1,
            span_max: 3,
            ..GeneratorConfig::default()
        },
        1,
    )
    .remove(0);
    assert!(check_sample(&sample, &cfg).is_err());
}

#[test]
fn every_mode_runs_end_to_end() {
    let data = dataset(GeneratorConfig::default(), 8);
    for mode in PspMode::ALL {
        for sup in [Supervision::Fully, Supervision::Weakly] {
            let mut cfg = TrainConfig {
                epochs: 1,
                batch_size: 4,
                ..TrainConfig::default()
            };
            cfg.model.psp.mode = mode;
            cfg.model.supervision = sup;
            let out = train::<f64>(&cfg, &data).unwrap();
            assert!(out.loss_curve[0].is_finite());
            let m = evaluate(&out.params, &cfg.model, &data).unwrap();
            assert_eq!(m.total, 80);
        }
    }
}
