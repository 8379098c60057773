//! Per-frame online step of the dual-stream model and its backward pass.
//!
//! One step at frame `t`:
//! 1. the frozen cache encoder's feature `f_t` is appended to the cache;
//! 2. the frame-wise encoder produces `F_t`;
//! 3. the clip-aware branch reads a clip from the cache (adaptive read-out
//!    queries it with `F_t`) and mixes it into `F_t` to get the clip-aware
//!    feature;
//! 4. the branches are fused either after their own LSTM + head (logits are
//!    added) or before a single shared LSTM + head (features are added).

use std::ops::Range;

use crate::cache::{Clip, FeatureCache};
use crate::error::{DacatError, Result};
use crate::maxr;
use crate::neural::{
    argmax, mean_pool_temporal, AttentionTrace, LstmState, LstmTrace,
};
use crate::pipeline::model::{DacatModel, DacatParams};
use crate::types::{Branches, FusionMode, Interaction, ModelConfig, Readout, Real};

/// Mutable per-video state. Owned by exactly one stream.
#[derive(Clone, Debug)]
pub struct StreamState<T = f64> {
    pub cache: FeatureCache<T>,
    pub fwb: LstmState<T>,
    pub acb: LstmState<T>,
    /// Frames processed so far (1-based index of the latest frame).
    pub t: usize,
}

impl<T: Real> StreamState<T> {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        let cache = match config.capacity {
            Some(cap) => FeatureCache::with_capacity(config.d, cap)?,
            None => FeatureCache::new(config.d),
        };
        Ok(Self {
            cache,
            fwb: LstmState::zeros(config.hidden),
            acb: LstmState::zeros(config.hidden),
            t: 0,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhasePrediction<T = f64> {
    pub fused_logits: Vec<T>,
    pub fwb_logits: Vec<T>,
    pub acb_logits: Vec<T>,
    /// `argmax(fused_logits)`, smallest index on ties.
    pub predicted: usize,
    /// 1-based frame index.
    pub t: usize,
    /// Length of the clip read from the cache (0 when the clip-aware branch is off).
    pub clip_len: usize,
}

#[derive(Clone, Debug)]
enum InteractionTrace<T> {
    Attention(AttentionTrace<T>),
    Add,
    Concat { input: Vec<T> },
}

#[derive(Clone, Debug)]
pub(crate) struct StepTrace<T> {
    obs: Vec<T>,
    query: Vec<T>,
    /// Absolute 0-based frame range of the clip.
    clip: Range<usize>,
    interaction: Option<InteractionTrace<T>>,
    /// Frame-wise LSTM, or the shared LSTM when fusing before.
    fwb_lstm: Option<(LstmTrace<T>, Vec<T>)>,
    acb_lstm: Option<(LstmTrace<T>, Vec<T>)>,
}

fn branch_flags(config: &ModelConfig) -> (bool, bool) {
    (
        config.branches != Branches::AcbOnly,
        config.branches != Branches::FwbOnly,
    )
}

fn read_clip<'a, T: Real>(
    readout: Readout,
    query: &[T],
    cache: &'a FeatureCache<T>,
) -> Result<Clip<'a, T>> {
    match readout {
        Readout::Adaptive => {
            let start = maxr::adaptive_start(query, cache.view())?;
            cache.slice(start)
        }
        Readout::Fixed(k) => maxr::read_fixed(cache, k),
        Readout::All => maxr::read_all(cache),
    }
}

fn add_into<T: Real>(acc: &mut [T], x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// Forward step shared by online inference and training. `cache_feature` is
/// the frozen cache encoder's output for `obs`.
pub(crate) fn forward_step<T: Real>(
    config: &ModelConfig,
    params: &DacatParams<T>,
    obs: &[T],
    cache_feature: &[T],
    state: &mut StreamState<T>,
) -> Result<(PhasePrediction<T>, StepTrace<T>)> {
    if obs.len() != config.d_raw {
        return Err(DacatError::DimensionMismatch {
            expected: config.d_raw,
            found: obs.len(),
        });
    }
    state.cache.append(cache_feature)?;
    state.t += 1;

    let (fwb_on, acb_on) = branch_flags(config);
    let query = params.fwb_encoder.forward(obs)?;

    let mut clip_range = 0..0;
    let mut interaction = None;
    let mut acb_feature = None;
    if acb_on && config.readout == Readout::Adaptive && config.interaction == Interaction::Ca {
        let (out, trace, start) = params.attention.forward_adaptive(&query, &query, state.cache.view())?;
        let end = state.cache.frames_seen();
        clip_range = end - (state.cache.len() + 1 - start)..end;
        interaction = Some(InteractionTrace::Attention(trace));
        acb_feature = Some(out);
    } else if acb_on {
        let clip = read_clip(config.readout, &query, &state.cache)?;
        let end = state.cache.frames_seen();
        clip_range = end - clip.len()..end;
        let (feature, trace) = match config.interaction {
            Interaction::Ca => {
                let (out, trace) = params.attention.forward(&query, clip)?;
                (out, InteractionTrace::Attention(trace))
            }
            Interaction::Add => {
                let mut out = mean_pool_temporal(clip)?;
                add_into(&mut out, &query);
                (out, InteractionTrace::Add)
            }
            Interaction::Concat => {
                let mut input = query.clone();
                input.extend(mean_pool_temporal(clip)?);
                let out = params.concat.forward(&input)?;
                (out, InteractionTrace::Concat { input })
            }
        };
        interaction = Some(trace);
        acb_feature = Some(feature);
    }

    let k = config.num_phases;
    let mut fwb_logits = vec![T::zero(); k];
    let mut acb_logits = vec![T::zero(); k];
    let mut fwb_lstm = None;
    let mut acb_lstm = None;
    let fused_logits = match config.fusion {
        FusionMode::After => {
            if fwb_on {
                let (next, trace) = params.fwb_lstm.step(&query, &state.fwb)?;
                fwb_logits = params.fwb_head.forward(&next.h)?;
                fwb_lstm = Some((trace, next.h.clone()));
                state.fwb = next;
            }
            if let Some(feature) = &acb_feature {
                let (next, trace) = params.acb_lstm.step(feature, &state.acb)?;
                acb_logits = params.acb_head.forward(&next.h)?;
                acb_lstm = Some((trace, next.h.clone()));
                state.acb = next;
            }
            fwb_logits
                .iter()
                .zip(&acb_logits)
                .map(|(&a, &b)| a + b)
                .collect::<Vec<T>>()
        }
        FusionMode::Before => {
            let mut input = if fwb_on {
                query.clone()
            } else {
                vec![T::zero(); config.d]
            };
            if let Some(feature) = &acb_feature {
                add_into(&mut input, feature);
            }
            let (next, trace) = params.fwb_lstm.step(&input, &state.fwb)?;
            let logits = params.fwb_head.forward(&next.h)?;
            fwb_lstm = Some((trace, next.h.clone()));
            state.fwb = next;
            fwb_logits = logits.clone();
            acb_logits = logits.clone();
            logits
        }
    };

    let prediction = PhasePrediction {
        predicted: argmax(&fused_logits),
        fused_logits,
        fwb_logits,
        acb_logits,
        t: state.t,
        clip_len: clip_range.len(),
    };
    let trace = StepTrace {
        obs: obs.to_vec(),
        query,
        clip: clip_range,
        interaction,
        fwb_lstm,
        acb_lstm,
    };
    Ok((prediction, trace))
}

/// Gradients flowing backwards in time through both LSTM states.
#[derive(Clone, Debug)]
pub(crate) struct Carry<T> {
    pub dh_fwb: Vec<T>,
    pub dc_fwb: Vec<T>,
    pub dh_acb: Vec<T>,
    pub dc_acb: Vec<T>,
}

impl<T: Real> Carry<T> {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            dh_fwb: vec![T::zero(); hidden],
            dc_fwb: vec![T::zero(); hidden],
            dh_acb: vec![T::zero(); hidden],
            dc_acb: vec![T::zero(); hidden],
        }
    }
}

/// Backward pass of one [`forward_step`]. `cache_features` holds the frozen
/// cache features of the whole video, row-major; clip gradients are dropped.
pub(crate) fn backward_step<T: Real>(
    config: &ModelConfig,
    params: &DacatParams<T>,
    trace: &StepTrace<T>,
    dlogits: &[T],
    cache_features: &[T],
    carry: &mut Carry<T>,
    grads: &mut DacatParams<T>,
) {
    let d = config.d;
    let mut dquery = vec![T::zero(); d];
    let mut dfeature: Option<Vec<T>> = None;

    match config.fusion {
        FusionMode::After => {
            if let Some((lstm_trace, h)) = &trace.fwb_lstm {
                let mut dh = params.fwb_head.backward(h, dlogits, &mut grads.fwb_head);
                add_into(&mut dh, &carry.dh_fwb);
                let (dx, dh_prev, dc_prev) =
                    params
                        .fwb_lstm
                        .backward(lstm_trace, &dh, &carry.dc_fwb, &mut grads.fwb_lstm);
                add_into(&mut dquery, &dx);
                carry.dh_fwb = dh_prev;
                carry.dc_fwb = dc_prev;
            }
            if let Some((lstm_trace, h)) = &trace.acb_lstm {
                let mut dh = params.acb_head.backward(h, dlogits, &mut grads.acb_head);
                add_into(&mut dh, &carry.dh_acb);
                let (dx, dh_prev, dc_prev) =
                    params
                        .acb_lstm
                        .backward(lstm_trace, &dh, &carry.dc_acb, &mut grads.acb_lstm);
                dfeature = Some(dx);
                carry.dh_acb = dh_prev;
                carry.dc_acb = dc_prev;
            }
        }
        FusionMode::Before => {
            let (lstm_trace, h) = trace
                .fwb_lstm
                .as_ref()
                .expect("shared LSTM always runs when fusing before");
            let mut dh = params.fwb_head.backward(h, dlogits, &mut grads.fwb_head);
            add_into(&mut dh, &carry.dh_fwb);
            let (dx, dh_prev, dc_prev) =
                params
                    .fwb_lstm
                    .backward(lstm_trace, &dh, &carry.dc_fwb, &mut grads.fwb_lstm);
            carry.dh_fwb = dh_prev;
            carry.dc_fwb = dc_prev;
            if config.branches != Branches::AcbOnly {
                add_into(&mut dquery, &dx);
            }
            if trace.interaction.is_some() {
                dfeature = Some(dx);
            }
        }
    }

    if let (Some(dfeat), Some(interaction)) = (dfeature, &trace.interaction) {
        let clip = Clip::from_flat(
            &cache_features[trace.clip.start * d..trace.clip.end * d],
            d,
        )
        .expect("clip range lies inside the video");
        match interaction {
            InteractionTrace::Attention(at) => {
                let dq = params.attention.backward(
                    at,
                    &trace.query,
                    clip,
                    &dfeat,
                    &mut grads.attention,
                    None,
                );
                add_into(&mut dquery, &dq);
            }
            InteractionTrace::Add => add_into(&mut dquery, &dfeat),
            InteractionTrace::Concat { input } => {
                let dinput = params.concat.backward(input, &dfeat, &mut grads.concat);
                add_into(&mut dquery, &dinput[..d]);
            }
        }
    }

    params
        .fwb_encoder
        .backward(&trace.obs, &trace.query, &dquery, &mut grads.fwb_encoder);
}

impl<T: Real> DacatModel<T> {
    pub fn new_state(&self) -> Result<StreamState<T>> {
        StreamState::new(&self.config)
    }

    /// Processes one raw observation and returns the prediction for it.
    pub fn step_online(&self, obs: &[T], state: &mut StreamState<T>) -> Result<PhasePrediction<T>> {
        if obs.len() != self.config.d_raw {
            return Err(DacatError::DimensionMismatch {
                expected: self.config.d_raw,
                found: obs.len(),
            });
        }
        let cache_feature = self.cache_encoder.forward(obs)?;
        let (prediction, _) = forward_step(&self.config, &self.params, obs, &cache_feature, state)?;
        Ok(prediction)
    }

    /// Runs [`step_online`](Self::step_online) over a chunk of frames
    /// (row-major, `d_raw` each), continuing from `state`.
    pub fn process(&self, observations: &[T], state: &mut StreamState<T>) -> Result<Vec<PhasePrediction<T>>> {
        let d_raw = self.config.d_raw;
        if observations.len() % d_raw != 0 {
            return Err(DacatError::DimensionMismatch {
                expected: d_raw,
                found: observations.len() % d_raw,
            });
        }
        observations
            .chunks_exact(d_raw)
            .map(|obs| self.step_online(obs, state))
            .collect()
    }
}
