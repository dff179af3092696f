//! Synthetic audio-visual event videos and label utilities.
//!
//! Each video has one event class and one contiguous event span. Inside the
//! span both modalities carry noisy copies of the class prototypes; outside
//! it, a distractor may put the prototype in only one modality while the
//! label stays background.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::seed::derive;
use crate::tensor::{Real, Tensor};

/// One video's features and labels. Features are stored in single precision
/// exactly as they appear in feature files.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSample {
    pub video_id: String,
    pub t: usize,
    pub n: usize,
    pub d_v: usize,
    pub d_a: usize,
    pub c: usize,
    /// `T x N x d_v`, row-major over (segment, cell, feature).
    pub visual: Vec<f32>,
    /// `T x d_a`.
    pub audio: Vec<f32>,
    /// `T x C`, one-hot rows.
    pub labels_full: Vec<f32>,
    /// `1 x C`, column means of `labels_full`.
    pub labels_weak: Vec<f32>,
}

impl VideoSample {
    /// Assembles a sample and derives the weak label, checking all sizes.
    pub fn new(
        video_id: String,
        [t, n, d_v, d_a, c]: [usize; 5],
        visual: Vec<f32>,
        audio: Vec<f32>,
        labels_full: Vec<f32>,
    ) -> Result<Self> {
        if [t, n, d_v, d_a, c].contains(&0) {
            return Err(invalid("sample dimensions must be positive"));
        }
        if visual.len() != t * n * d_v || audio.len() != t * d_a || labels_full.len() != t * c {
            return Err(invalid("sample payload sizes do not match its dimensions"));
        }
        if !visual.iter().chain(&audio).all(|v| v.is_finite()) {
            return Err(invalid("sample features must be finite"));
        }
        let labels_weak = weak_label_from_full(&labels_full, t, c)?;
        Ok(Self {
            video_id,
            t,
            n,
            d_v,
            d_a,
            c,
            visual,
            audio,
            labels_full,
            labels_weak,
        })
    }

    /// Visual features as a `(T*N) x d_v` matrix.
    pub fn visual_tensor<F: Real>(&self) -> Tensor<F> {
        to_tensor(self.t * self.n, self.d_v, &self.visual)
    }

    pub fn audio_tensor<F: Real>(&self) -> Tensor<F> {
        to_tensor(self.t, self.d_a, &self.audio)
    }

    pub fn labels_tensor<F: Real>(&self) -> Tensor<F> {
        to_tensor(self.t, self.c, &self.labels_full)
    }

    /// Class index of every segment.
    pub fn segment_classes(&self) -> Vec<usize> {
        self.labels_full
            .chunks(self.c)
            .map(|row| row.iter().position(|&v| v == 1.0).unwrap_or(0))
            .collect()
    }

    pub fn dims(&self) -> [usize; 5] {
        [self.t, self.n, self.d_v, self.d_a, self.c]
    }
}

fn to_tensor<F: Real>(rows: usize, cols: usize, v: &[f32]) -> Tensor<F> {
    Tensor::new(rows, cols, v.iter().map(|&x| F::of(x as f64)).collect())
        .expect("sample sizes validated at construction")
}

/// Column-wise mean of one-hot `T x C` labels.
pub fn weak_label_from_full(labels_full: &[f32], t: usize, c: usize) -> Result<Vec<f32>> {
    check_one_hot(labels_full, t, c)?;
    let mut counts = vec![0usize; c];
    for row in labels_full.chunks(c) {
        counts[row.iter().position(|&v| v == 1.0).expect("checked")] += 1;
    }
    Ok(counts.iter().map(|&k| k as f32 / t as f32).collect())
}

/// Binary relevance vector: 1 where the segment's class is not background.
pub fn event_relevance_labels(
    labels_full: &[f32],
    t: usize,
    c: usize,
    background: usize,
) -> Result<Vec<f32>> {
    if background >= c {
        return Err(invalid(format!("background index {background} out of range for C = {c}")));
    }
    check_one_hot(labels_full, t, c)?;
    Ok(labels_full
        .chunks(c)
        .map(|row| if row[background] == 1.0 { 0.0 } else { 1.0 })
        .collect())
}

fn check_one_hot(labels: &[f32], t: usize, c: usize) -> Result<()> {
    if t == 0 || c == 0 || labels.len() != t * c {
        return Err(invalid(format!("labels must be {t}x{c}")));
    }
    for (i, row) in labels.chunks(c).enumerate() {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || zeros != c - 1 {
            return Err(invalid(format!("label row {i} is not one-hot")));
        }
    }
    Ok(())
}

/// Parameters of the synthetic video distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorConfig {
    pub t: usize,
    pub c: usize,
    pub n: usize,
    pub d_v: usize,
    pub d_a: usize,
    pub noise_std: f64,
    pub span_min: usize,
    pub span_max: usize,
    pub desync_prob: f64,
    pub background: usize,
    /// Dataset seed; fixes the class prototypes.
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            t: 10,
            c: 5,
            n: 16,
            d_v: 64,
            d_a: 32,
            noise_std: 5.0,
            span_min: 5,
            span_max: 10,
            desync_prob: 0.5,
            background: 4,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.t, self.c, self.n, self.d_v, self.d_a].contains(&0) {
            return Err(invalid("generator dimensions must be positive"));
        }
        if self.c < 2 {
            return Err(invalid("need at least one event class besides background"));
        }
        if self.background >= self.c {
            return Err(invalid(format!(
                "background index {} out of range for C = {}",
                self.background, self.c
            )));
        }
        if self.span_min > self.span_max || self.span_max > self.t {
            return Err(invalid(format!(
                "event span bounds must satisfy min <= max <= T, got {}..={} with T = {}",
                self.span_min, self.span_max, self.t
            )));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(invalid("noise std must be a nonnegative number"));
        }
        if !(0.0..=1.0).contains(&self.desync_prob) {
            return Err(invalid("desync probability must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Number of spatial cells that show the event object.
    pub fn object_cells(&self) -> usize {
        self.n.div_ceil(4)
    }
}

const PROTOTYPE_STREAM: u64 = 0x5052_4f54;

/// Generator with the dataset's class prototypes drawn once.
#[derive(Debug, Clone)]
pub struct Generator {
    cfg: GeneratorConfig,
    /// One per class; the background entry is unused.
    audio_protos: Vec<Vec<f32>>,
    visual_protos: Vec<Vec<f32>>,
}

impl Generator {
    pub fn new(cfg: GeneratorConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, &[PROTOTYPE_STREAM]));
        let mut draw = |len: usize| -> Vec<f32> {
            (0..len)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect::<Vec<f64>>()
                .into_iter()
                .map(|x| x as f32)
                .collect()
        };
        let audio_protos = (0..cfg.c).map(|_| draw(cfg.d_a)).collect();
        let visual_protos = (0..cfg.c).map(|_| draw(cfg.d_v)).collect();
        Ok(Self {
            cfg,
            audio_protos,
            visual_protos,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn audio_prototype(&self, class: usize) -> &[f32] {
        &self.audio_protos[class]
    }

    pub fn visual_prototype(&self, class: usize) -> &[f32] {
        &self.visual_protos[class]
    }

    /// Event classes, in index order, excluding background.
    pub fn event_classes(&self) -> Vec<usize> {
        (0..self.cfg.c).filter(|&k| k != self.cfg.background).collect()
    }

    /// Draws one video. Deterministic in `(config, video_seed)`.
    pub fn generate(&self, video_seed: u64) -> VideoSample {
        let cfg = &self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, &[video_seed]));
        let classes = self.event_classes();
        let class = classes[rng.random_range(0..classes.len())];
        let span = rng.random_range(cfg.span_min..=cfg.span_max);
        let start = rng.random_range(0..=cfg.t - span);
        let cells = index::sample(&mut rng, cfg.n, cfg.object_cells()).into_vec();

        let noise = cfg.noise_std;
        let gauss = |rng: &mut ChaCha8Rng| -> f32 {
            if noise == 0.0 {
                0.0
            } else {
                let z: f64 = StandardNormal.sample(rng);
                (noise * z) as f32
            }
        };

        let mut visual = vec![0f32; cfg.t * cfg.n * cfg.d_v];
        let mut audio = vec![0f32; cfg.t * cfg.d_a];
        let mut labels = vec![0f32; cfg.t * cfg.c];
        for t in 0..cfg.t {
            let in_span = t >= start && t < start + span;
            let (show_audio, show_visual) = if in_span {
                (true, true)
            } else if rng.random::<f64>() < cfg.desync_prob {
                let audio_side = rng.random::<bool>();
                (audio_side, !audio_side)
            } else {
                (false, false)
            };
            labels[t * cfg.c + if in_span { class } else { cfg.background }] = 1.0;

            let a = &mut audio[t * cfg.d_a..(t + 1) * cfg.d_a];
            for (k, v) in a.iter_mut().enumerate() {
                let base = if show_audio { self.audio_protos[class][k] } else { 0.0 };
                *v = base + gauss(&mut rng);
            }
            for cell in 0..cfg.n {
                let object = show_visual && cells.contains(&cell);
                let off = (t * cfg.n + cell) * cfg.d_v;
                for (k, v) in visual[off..off + cfg.d_v].iter_mut().enumerate() {
                    let base = if object { self.visual_protos[class][k] } else { 0.0 };
                    *v = base + gauss(&mut rng);
                }
            }
        }
        VideoSample::new(
            format!("video-{video_seed:06}"),
            [cfg.t, cfg.n, cfg.d_v, cfg.d_a, cfg.c],
            visual,
            audio,
            labels,
        )
        .expect("generator output is well formed")
    }

    /// Videos for seeds `0..count`.
    pub fn dataset(&self, count: usize) -> Vec<VideoSample> {
        (0..count as u64).map(|s| self.generate(s)).collect()
    }
}

/// Convenience wrapper around [`Generator::generate`].
pub fn generate_video(cfg: &GeneratorConfig, video_seed: u64) -> Result<VideoSample> {
    Ok(Generator::new(*cfg)?.generate(video_seed))
}

/// Seed-stable 70/10/20 split of `count` videos into train, validation, test
/// index sets.
pub fn split_indices(count: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[0x5350_4c49_54]));
    idx.shuffle(&mut rng);
    let n_train = count * 7 / 10;
    let n_val = count / 10;
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    (idx, val, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(classes: &[usize], c: usize) -> Vec<f32> {
        let mut v = vec![0.0; classes.len() * c];
        for (t, &k) in classes.iter().enumerate() {
            v[t * c + k] = 1.0;
        }
        v
    }

    #[test]
    fn weak_label_examples() {
        assert_eq!(weak_label_from_full(&one_hot(&[0, 1], 2), 2, 2).unwrap(), [0.5, 0.5]);
        assert_eq!(
            weak_label_from_full(&one_hot(&[1, 1, 1], 4), 3, 4).unwrap(),
            [0.0, 1.0, 0.0, 0.0]
        );
        let mut classes = vec![1; 10];
        classes[..3].fill(0);
        assert_eq!(weak_label_from_full(&one_hot(&classes, 2), 10, 2).unwrap(), [0.3, 0.7]);
    }

    #[test]
    fn weak_label_rejects_non_one_hot() {
        assert!(weak_label_from_full(&[1.0, 1.0, 0.0, 1.0], 2, 2).is_err());
        assert!(weak_label_from_full(&[0.5, 0.5], 1, 2).is_err());
    }

    #[test]
    fn relevance_examples() {
        let bg = 3;
        assert_eq!(event_relevance_labels(&one_hot(&[3, 3, 3], 4), 3, 4, bg).unwrap(), [0.0; 3]);
        assert_eq!(event_relevance_labels(&one_hot(&[0, 1, 2], 4), 3, 4, bg).unwrap(), [1.0; 3]);
        // event visible and audible only in the last two of four segments
        assert_eq!(
            event_relevance_labels(&one_hot(&[3, 3, 0, 0], 4), 4, 4, bg).unwrap(),
            [0.0, 0.0, 1.0, 1.0]
        );
        assert!(event_relevance_labels(&one_hot(&[0], 4), 1, 4, 4).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GeneratorConfig::default();
        let g = Generator::new(cfg).unwrap();
        assert_eq!(g.generate(42), g.generate(42));
        assert_eq!(generate_video(&cfg, 42).unwrap(), g.generate(42));
        assert_ne!(g.generate(42).audio, g.generate(43).audio);
    }

    #[test]
    fn noise_free_segments_are_exact_prototypes() {
        let cfg = GeneratorConfig {
            noise_std: 0.0,
            desync_prob: 0.0,
            ..Default::default()
        };
        let g = Generator::new(cfg).unwrap();
        for seed in 0..50 {
            let s = g.generate(seed);
            for (t, &k) in s.segment_classes().iter().enumerate() {
                let a = &s.audio[t * cfg.d_a..(t + 1) * cfg.d_a];
                let cells: Vec<&[f32]> = s.visual[t * cfg.n * cfg.d_v..(t + 1) * cfg.n * cfg.d_v]
                    .chunks(cfg.d_v)
                    .collect();
                if k == cfg.background {
                    assert!(a.iter().all(|&v| v == 0.0));
                    assert!(cells.iter().all(|c| c.iter().all(|&v| v == 0.0)));
                } else {
                    assert_eq!(a, g.audio_prototype(k));
                    let shown = cells.iter().filter(|c| *c == &g.visual_prototype(k)).count();
                    let blank = cells.iter().filter(|c| c.iter().all(|&v| v == 0.0)).count();
                    assert_eq!(shown, cfg.object_cells());
                    assert_eq!(shown + blank, cfg.n);
                }
            }
        }
    }

    #[test]
    fn span_lengths_respect_bounds() {
        let cfg = GeneratorConfig {
            span_min: 3,
            span_max: 6,
            ..Default::default()
        };
        let g = Generator::new(cfg).unwrap();
        let mut seen = [false; 11];
        for seed in 0..1000 {
            let s = g.generate(seed);
            let classes = s.segment_classes();
            let events: Vec<usize> = (0..cfg.t).filter(|&t| classes[t] != cfg.background).collect();
            let len = events.len();
            assert!((3..=6).contains(&len), "span {len}");
            // contiguous, single class
            assert_eq!(events.last().unwrap() - events[0] + 1, len);
            assert!(events.iter().all(|&t| classes[t] == classes[events[0]]));
            assert_eq!(s.labels_weak, weak_label_from_full(&s.labels_full, cfg.t, cfg.c).unwrap());
            seen[len] = true;
        }
        assert!(seen[3] && seen[6]);
    }

    #[test]
    fn noise_free_data_is_solvable_by_nearest_prototype() {
        let cfg = GeneratorConfig {
            noise_std: 0.0,
            desync_prob: 0.0,
            ..Default::default()
        };
        let g = Generator::new(cfg).unwrap();
        let dist = |a: &[f32], b: &[f32]| -> f32 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
        let (mut correct, mut total) = (0, 0);
        for seed in 0..200 {
            let s = g.generate(seed);
            for (t, &truth) in s.segment_classes().iter().enumerate() {
                let a = &s.audio[t * cfg.d_a..(t + 1) * cfg.d_a];
                // candidates: every event prototype, and the zero vector for background
                let mut best = (dist(a, &vec![0.0; cfg.d_a]), cfg.background);
                for k in g.event_classes() {
                    let d = dist(a, g.audio_prototype(k));
                    if d < best.0 {
                        best = (d, k);
                    }
                }
                correct += (best.1 == truth) as usize;
                total += 1;
            }
        }
        assert_eq!(correct, total);
    }

    #[test]
    fn config_validation() {
        let bad = [
            GeneratorConfig { span_min: 5, span_max: 4, ..Default::default() },
            GeneratorConfig { span_max: 11, ..Default::default() },
            GeneratorConfig { background: 5, ..Default::default() },
            GeneratorConfig { desync_prob: 1.5, ..Default::default() },
            GeneratorConfig { t: 0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(Generator::new(cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn split_is_70_10_20_and_disjoint() {
        let (tr, va, te) = split_indices(715, 9);
        assert_eq!((tr.len(), va.len(), te.len()), (500, 71, 144));
        let mut all: Vec<usize> = tr.iter().chain(&va).chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..715).collect::<Vec<_>>());
        assert_eq!(split_indices(715, 9), (tr, va, te));
    }
}
