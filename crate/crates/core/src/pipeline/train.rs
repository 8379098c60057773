//! Two-stage training with truncated backpropagation through time.
//!
//! Both stages run with batch size 1: each video is cut into consecutive
//! segments, every segment gets one forward pass, one backward pass and one
//! optimizer step, and the LSTM state is carried (detached) into the next
//! segment of the same video. State is reset between videos.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Video;
use crate::error::{DacatError, Result};
use crate::neural::{argmax, cross_entropy, AdamW, AdamWConfig, LstmState, Parameters};
use crate::pipeline::engine::{backward_step, forward_step, Carry, StreamState};
use crate::pipeline::model::{CacheModel, DacatModel, DacatParams};
use crate::types::ModelConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub segment_len: usize,
    pub optimizer: AdamWConfig,
    /// Seed for the per-epoch video order.
    pub seed: u64,
    pub shuffle: bool,
    /// Decay the learning rate linearly towards zero over the run.
    #[serde(default)]
    pub linear_decay: bool,
}

impl TrainOptions {
    /// Cache-encoder schedule: 200 epochs, segments of 256, lr 1e-4, decay 0.01.
    pub fn stage1() -> Self {
        Self {
            epochs: 200,
            segment_len: 256,
            optimizer: AdamWConfig::new(1e-4, 0.01),
            seed: 0,
            shuffle: true,
            linear_decay: false,
        }
    }

    /// Dual-stream schedule: 30 epochs, segments of 64, lr 1e-5, decay 0.01.
    pub fn stage2() -> Self {
        Self {
            epochs: 30,
            segment_len: 64,
            optimizer: AdamWConfig::new(1e-5, 0.01),
            seed: 0,
            shuffle: true,
            linear_decay: false,
        }
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        self.optimizer.lr = lr;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_linear_decay(mut self, on: bool) -> Self {
        self.linear_decay = on;
        self
    }

    fn total_steps(&self, videos: &[Video]) -> usize {
        let per_epoch: usize = videos.iter().map(|v| v.len().div_ceil(self.segment_len)).sum();
        per_epoch * self.epochs
    }

    /// Learning rate for optimizer step `step` of `total`.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        if self.linear_decay && total > 0 {
            self.optimizer.lr * (1.0 - step as f64 / total as f64)
        } else {
            self.optimizer.lr
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// Mean segment loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    /// Epoch whose parameters were returned when hold-out selection was used.
    pub selected_epoch: Option<usize>,
}

impl TrainReport {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.accuracy)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }
}

fn check_dataset(videos: &[Video], config: &ModelConfig) -> Result<()> {
    if videos.is_empty() {
        return Err(DacatError::EmptyInput("training dataset"));
    }
    for v in videos {
        if v.d_raw != config.d_raw {
            return Err(DacatError::DimensionMismatch {
                expected: config.d_raw,
                found: v.d_raw,
            });
        }
        if v.is_empty() {
            return Err(DacatError::EmptyInput("training video"));
        }
        if let Some(&label) = v.labels.labels().iter().find(|&&l| l >= config.num_phases) {
            return Err(DacatError::LabelOutOfRange {
                label,
                num_phases: config.num_phases,
            });
        }
    }
    Ok(())
}

fn epoch_order(n: usize, opts: &TrainOptions, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if opts.shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
    }
    order
}

/// Stage 1: trains the cache encoder together with an LSTM predictor.
pub fn train_cache_encoder(
    videos: &[Video],
    config: &ModelConfig,
    opts: &TrainOptions,
) -> Result<(CacheModel, TrainReport)> {
    config.validate()?;
    check_dataset(videos, config)?;
    if opts.segment_len == 0 {
        return Err(DacatError::InvalidConfig("segment_len must be >= 1".into()));
    }
    let mut model = CacheModel::<f64>::init(config);
    let mut grads = model.clone();
    grads.zero_();
    let mut optimizer = AdamW::new(opts.optimizer);
    let mut report = TrainReport::default();
    let total_steps = opts.total_steps(videos);

    for epoch in 0..opts.epochs {
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut frames = 0usize;
        for vi in epoch_order(videos.len(), opts, epoch) {
            let video = &videos[vi];
            let labels = video.labels.labels();
            let mut state = LstmState::zeros(config.hidden);
            for start in (0..video.len()).step_by(opts.segment_len) {
                let end = (start + opts.segment_len).min(video.len());
                let scale = 1.0 / (end - start) as f64;
                let mut steps = Vec::with_capacity(end - start);
                let mut seg_loss = 0.0;
                for i in start..end {
                    let obs = video.frame(i);
                    let feature = model.encoder.forward(obs)?;
                    let (next, trace) = model.lstm.step(&feature, &state)?;
                    let logits = model.head.forward(&next.h)?;
                    let (loss, mut dlogits) = cross_entropy(&logits, labels[i])?;
                    seg_loss += loss;
                    correct += usize::from(argmax(&logits) == labels[i]);
                    dlogits.iter_mut().for_each(|g| *g *= scale);
                    steps.push((i, feature, trace, next.h.clone(), dlogits));
                    state = next;
                }
                let mut dh_next = vec![0.0; config.hidden];
                let mut dc_next = vec![0.0; config.hidden];
                for (i, feature, trace, h, dlogits) in steps.iter().rev() {
                    let mut dh = model.head.backward(h, dlogits, &mut grads.head);
                    dh.iter_mut().zip(&dh_next).for_each(|(a, b)| *a += b);
                    let (dx, dh_prev, dc_prev) =
                        model.lstm.backward(trace, &dh, &dc_next, &mut grads.lstm);
                    model
                        .encoder
                        .backward(video.frame(*i), feature, &dx, &mut grads.encoder);
                    dh_next = dh_prev;
                    dc_next = dc_prev;
                }
                optimizer.config.lr = opts.lr_at(report.step_losses.len(), total_steps);
                optimizer.step(&mut model, &grads)?;
                grads.zero_();
                report.step_losses.push(seg_loss * scale);
                loss_sum += seg_loss;
                frames += end - start;
            }
        }
        let log = EpochLog {
            epoch,
            mean_loss: loss_sum / frames as f64,
            accuracy: correct as f64 / frames as f64,
        };
        log::info!(
            "stage1 epoch {} loss {:.5} acc {:.4}",
            epoch,
            log.mean_loss,
            log.accuracy
        );
        report.epochs.push(log);
    }
    Ok((model, report))
}

fn cache_features(model: &CacheModel, video: &Video) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(video.len() * model.encoder.proj.output_dim());
    for obs in video.frames() {
        out.extend(model.encoder.forward(obs)?);
    }
    Ok(out)
}

/// Frame accuracy of `model` over `videos`, streaming each video from a fresh state.
pub fn evaluate_accuracy(model: &DacatModel, videos: &[Video]) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for video in videos {
        let log = run_inference(model, &video.observations)?;
        correct += log
            .timeline
            .labels()
            .iter()
            .zip(video.labels.labels())
            .filter(|(a, b)| a == b)
            .count();
        total += video.len();
    }
    Ok(correct as f64 / total.max(1) as f64)
}

/// Stage 2: trains the dual-stream model on top of a frozen cache encoder.
pub fn train_dacat(
    videos: &[Video],
    stage1: &CacheModel,
    config: &ModelConfig,
    opts: &TrainOptions,
) -> Result<(DacatModel, TrainReport)> {
    train_dacat_inner(videos, None, stage1, config, opts)
}

/// Like [`train_dacat`], but returns the parameters of the epoch with the
/// best frame accuracy on `holdout`.
pub fn train_dacat_with_holdout(
    videos: &[Video],
    holdout: &[Video],
    stage1: &CacheModel,
    config: &ModelConfig,
    opts: &TrainOptions,
) -> Result<(DacatModel, TrainReport)> {
    train_dacat_inner(videos, Some(holdout), stage1, config, opts)
}

fn train_dacat_inner(
    videos: &[Video],
    holdout: Option<&[Video]>,
    stage1: &CacheModel,
    config: &ModelConfig,
    opts: &TrainOptions,
) -> Result<(DacatModel, TrainReport)> {
    config.validate()?;
    check_dataset(videos, config)?;
    if opts.segment_len == 0 {
        return Err(DacatError::InvalidConfig("segment_len must be >= 1".into()));
    }
    let mut params = DacatParams::init(config, stage1);
    let mut grads = params.zeros_like();
    let mut optimizer = AdamW::new(opts.optimizer);
    let mut report = TrainReport::default();
    let total_steps = opts.total_steps(videos);
    let features: Vec<Vec<f64>> = videos
        .iter()
        .map(|v| cache_features(stage1, v))
        .collect::<Result<_>>()?;
    let d = config.d;
    let mut best: Option<(f64, DacatParams)> = None;

    for epoch in 0..opts.epochs {
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut frames = 0usize;
        for vi in epoch_order(videos.len(), opts, epoch) {
            let video = &videos[vi];
            let feats = &features[vi];
            let labels = video.labels.labels();
            let mut state = StreamState::new(config)?;
            for start in (0..video.len()).step_by(opts.segment_len) {
                let end = (start + opts.segment_len).min(video.len());
                let scale = 1.0 / (end - start) as f64;
                let mut steps = Vec::with_capacity(end - start);
                let mut seg_loss = 0.0;
                for i in start..end {
                    let (prediction, trace) = forward_step(
                        config,
                        &params,
                        video.frame(i),
                        &feats[i * d..(i + 1) * d],
                        &mut state,
                    )?;
                    let (loss, mut dlogits) = cross_entropy(&prediction.fused_logits, labels[i])?;
                    seg_loss += loss;
                    correct += usize::from(prediction.predicted == labels[i]);
                    dlogits.iter_mut().for_each(|g| *g *= scale);
                    steps.push((trace, dlogits));
                }
                let mut carry = Carry::zeros(config.hidden);
                for (trace, dlogits) in steps.iter().rev() {
                    backward_step(config, &params, trace, dlogits, feats, &mut carry, &mut grads);
                }
                optimizer.config.lr = opts.lr_at(report.step_losses.len(), total_steps);
                optimizer.step(&mut params, &grads)?;
                grads.zero_();
                report.step_losses.push(seg_loss * scale);
                loss_sum += seg_loss;
                frames += end - start;
            }
        }
        let log = EpochLog {
            epoch,
            mean_loss: loss_sum / frames as f64,
            accuracy: correct as f64 / frames as f64,
        };
        log::info!(
            "stage2 epoch {} loss {:.5} acc {:.4}",
            epoch,
            log.mean_loss,
            log.accuracy
        );
        report.epochs.push(log);

        if let Some(holdout) = holdout {
            let model = DacatModel::new(config.clone(), stage1.encoder.clone(), params.clone())?;
            let acc = evaluate_accuracy(&model, holdout)?;
            if best.as_ref().map_or(true, |(b, _)| acc > *b) {
                best = Some((acc, params.clone()));
                report.selected_epoch = Some(epoch);
            }
        }
    }
    if let Some((_, p)) = best {
        params = p;
    }
    DacatModel::new(config.clone(), stage1.encoder.clone(), params).map(|m| (m, report))
}

/// Per-frame predictions and timings of one online run.
#[derive(Clone, Debug)]
pub struct InferenceLog<T = f64> {
    pub timeline: crate::types::PhaseTimeline,
    pub predictions: Vec<crate::pipeline::engine::PhasePrediction<T>>,
    /// Wall-clock cost of every step, in seconds.
    pub frame_seconds: Vec<f64>,
}

/// Streams `observations` (row-major, `d_raw` per frame) through a fresh
/// state, one frame at a time.
pub fn run_inference<T: crate::types::Real>(
    model: &DacatModel<T>,
    observations: &[T],
) -> Result<InferenceLog<T>> {
    let d_raw = model.config.d_raw;
    if observations.is_empty() {
        return Err(DacatError::EmptyInput("video"));
    }
    if observations.len() % d_raw != 0 {
        return Err(DacatError::DimensionMismatch {
            expected: d_raw,
            found: observations.len() % d_raw,
        });
    }
    let mut state = model.new_state()?;
    let n = observations.len() / d_raw;
    let mut predictions = Vec::with_capacity(n);
    let mut frame_seconds = Vec::with_capacity(n);
    for obs in observations.chunks_exact(d_raw) {
        let t0 = std::time::Instant::now();
        let p = model.step_online(obs, &mut state)?;
        frame_seconds.push(t0.elapsed().as_secs_f64());
        predictions.push(p);
    }
    let labels = predictions.iter().map(|p| p.predicted).collect();
    Ok(InferenceLog {
        timeline: crate::types::PhaseTimeline::new(labels, model.config.num_phases)?,
        predictions,
        frame_seconds,
    })
}
