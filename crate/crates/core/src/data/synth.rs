//! Synthetic phase streams.
//!
//! Each phase owns a Gaussian observation cluster. Phases advance
//! monotonically with jittered dwell times. A fraction of frames is replaced
//! by draws from one shared interference cluster (the smoke/blood analogue)
//! while keeping the underlying phase label.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DacatError, Result};
use crate::types::PhaseTimeline;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_phases: usize,
    pub d_raw: usize,
    /// Mean dwell per phase in frames. Dwells are shrunk to fit the video
    /// when they overrun it; the last phase absorbs any remainder.
    pub mean_dwell: f64,
    /// Relative dwell jitter: dwell = mean * (1 + jitter * U(-1, 1)).
    pub dwell_jitter: f64,
    pub interference_rate: f64,
    pub noise_scale: f64,
    /// Pairwise distance between cluster means.
    pub cluster_separation: f64,
    /// Probability of skipping each phase after the first.
    pub skip_rate: f64,
    pub n_videos: usize,
    pub video_len: usize,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(num_phases: usize, d_raw: usize, video_len: usize) -> Self {
        Self {
            num_phases,
            d_raw,
            mean_dwell: video_len as f64 / num_phases.max(1) as f64,
            dwell_jitter: 0.3,
            interference_rate: 0.0,
            noise_scale: 1.0,
            cluster_separation: 4.0,
            skip_rate: 0.0,
            n_videos: 1,
            video_len,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DacatError::InvalidConfig(m.to_string()));
        if self.num_phases == 0 || self.d_raw == 0 {
            return bad("num_phases and d_raw must be >= 1");
        }
        if self.video_len == 0 {
            return bad("video_len must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.interference_rate) {
            return bad("interference_rate must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.skip_rate) {
            return bad("skip_rate must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.dwell_jitter) {
            return bad("dwell_jitter must lie in [0, 1)");
        }
        if !(self.mean_dwell >= 1.0) {
            return bad("mean_dwell must be >= 1");
        }
        if !(self.noise_scale >= 0.0) || !(self.cluster_separation >= 0.0) {
            return bad("noise_scale and cluster_separation must be non-negative");
        }
        Ok(())
    }

    fn video_seed(&self, index: usize) -> u64 {
        // splitmix64 over (seed, index)
        let mut z = self
            .seed
            .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index as u64 + 1));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

/// Observations (row-major, `d_raw` per frame) and labels of one video.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub observations: Vec<f64>,
    pub d_raw: usize,
    pub labels: PhaseTimeline,
    /// Which frames were replaced by interference (all false for ingested data).
    pub interference: Vec<bool>,
}

impl Video {
    pub fn new(observations: Vec<f64>, d_raw: usize, labels: PhaseTimeline) -> Result<Self> {
        if d_raw == 0 || observations.len() != d_raw * labels.len() {
            return Err(DacatError::LengthMismatch {
                left: observations.len() / d_raw.max(1),
                right: labels.len(),
            });
        }
        let n = labels.len();
        Ok(Self {
            observations,
            d_raw,
            labels,
            interference: vec![false; n],
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.observations[i * self.d_raw..(i + 1) * self.d_raw]
    }

    pub fn frames(&self) -> std::slice::ChunksExact<'_, f64> {
        self.observations.chunks_exact(self.d_raw)
    }

    /// First `n` frames.
    pub fn truncated(&self, n: usize) -> Video {
        let n = n.min(self.len());
        Video {
            observations: self.observations[..n * self.d_raw].to_vec(),
            d_raw: self.d_raw,
            labels: PhaseTimeline::new(self.labels.labels()[..n].to_vec(), self.labels.num_phases())
                .expect("prefix of a valid timeline")
                .with_fps(self.labels.fps),
            interference: self.interference[..n].to_vec(),
        }
    }
}

/// Cluster centres: one per phase followed by the interference centre.
///
/// When `d_raw > num_phases` the centres form a regular simplex around the
/// origin with pairwise distance exactly `cluster_separation`; otherwise they
/// are random directions, recentred the same way.
pub fn cluster_means(config: &SyntheticConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.num_phases + 1;
    let d = config.d_raw;
    let radius = config.cluster_separation / std::f64::consts::SQRT_2;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if basis.len() < d {
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    // Centre the set so that different clusters have negative inner products.
    let mut centroid = vec![0.0; d];
    for v in &basis {
        centroid.iter_mut().zip(v).for_each(|(c, x)| *c += x / n as f64);
    }
    basis
        .into_iter()
        .map(|v| v.iter().zip(&centroid).map(|(x, c)| (x - c) * radius).collect())
        .collect()
}

fn sample_labels(config: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let last = config.num_phases - 1;
    let mut phases = Vec::new();
    let mut dwells = Vec::new();
    for phase in 0..config.num_phases {
        if phase > 0 && phase < last && rng.gen_bool(config.skip_rate) {
            continue;
        }
        let jitter = config.dwell_jitter * rng.gen_range(-1.0..=1.0);
        phases.push(phase);
        dwells.push((config.mean_dwell * (1.0 + jitter)).max(1.0));
    }
    // Shrink proportionally when the sampled dwells overrun the video, so every
    // phase keeps at least one frame whenever the video is long enough.
    let total: f64 = dwells.iter().sum();
    let len = config.video_len;
    let mut sizes: Vec<usize> = if total > len as f64 {
        let floor = if len >= phases.len() { 1 } else { 0 };
        let spare = (len - floor * phases.len().min(len)) as f64;
        let extra = dwells.iter().map(|d| (d - 1.0).max(0.0)).sum::<f64>().max(1e-12);
        dwells
            .iter()
            .map(|d| floor + (spare * (d - 1.0).max(0.0) / extra).floor() as usize)
            .collect()
    } else {
        dwells.iter().map(|d| d.round() as usize).collect()
    };
    if let Some(tail) = sizes.last_mut() {
        *tail = 0;
    }
    let mut labels = Vec::with_capacity(len);
    for (&phase, &size) in phases.iter().zip(&sizes) {
        labels.extend(std::iter::repeat(phase).take(size));
    }
    labels.truncate(len);
    labels.resize(len, last);
    labels
}

/// Generates video number `index` of the dataset described by `config`.
pub fn gen_stream(config: &SyntheticConfig, index: usize) -> Result<Video> {
    config.validate()?;
    let means = cluster_means(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.video_seed(index));
    let labels = sample_labels(config, &mut rng);
    let d = config.d_raw;
    let mut observations = Vec::with_capacity(labels.len() * d);
    let mut interference = Vec::with_capacity(labels.len());
    for &label in &labels {
        let corrupted = config.interference_rate > 0.0 && rng.gen_bool(config.interference_rate);
        let centre = if corrupted {
            &means[config.num_phases]
        } else {
            &means[label]
        };
        for &m in centre {
            let z: f64 = rng.sample(StandardNormal);
            observations.push(m + config.noise_scale * z);
        }
        interference.push(corrupted);
    }
    Ok(Video {
        observations,
        d_raw: d,
        labels: PhaseTimeline::new(labels, config.num_phases)?,
        interference,
    })
}

/// All `n_videos` videos of the dataset.
pub fn gen_dataset(config: &SyntheticConfig) -> Result<Vec<Video>> {
    (0..config.n_videos).map(|i| gen_stream(config, i)).collect()
}
