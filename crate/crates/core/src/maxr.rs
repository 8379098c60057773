//! Max clip-response read-out.
//!
//! Given the current frame feature and the cache `f_1..f_t`, the response of
//! every cached frame is its raw dot product with the query. Suffix sums of
//! those responses score every clip `f_j..f_t`, and the clip with the largest
//! score is read out. Everything here is parameter-free and pure.
//!
//! Indices in [`ClipSelection`] are 1-based.

use crate::cache::{Clip, FeatureCache};
use crate::error::{DacatError, Result};
use crate::types::{dot, Real};

/// Responses, clip responses and the selected start index of one read-out.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipSelection<T = f64> {
    /// `S[i] = <query, f_i>`.
    pub response: Vec<T>,
    /// `P[j] = S[j] + ... + S[t]`.
    pub clip_response: Vec<T>,
    /// Smallest 1-based `j` maximizing `P[j]`.
    pub start_index: usize,
}

impl<T: Real> ClipSelection<T> {
    /// Length of the selected clip, `t - start_index + 1`.
    pub fn clip_len(&self) -> usize {
        self.response.len() + 1 - self.start_index
    }
}

pub fn frame_response<T: Real>(query: &[T], cache: &FeatureCache<T>) -> Result<Vec<T>> {
    if cache.is_empty() {
        return Err(DacatError::EmptyCache);
    }
    response_over(query, cache.view())
}

/// Responses of `query` against every entry of `clip`.
pub fn response_over<T: Real>(query: &[T], clip: Clip<'_, T>) -> Result<Vec<T>> {
    if clip.is_empty() {
        return Err(DacatError::EmptyCache);
    }
    if query.len() != clip.dim() {
        return Err(DacatError::DimensionMismatch {
            expected: clip.dim(),
            found: query.len(),
        });
    }
    Ok(clip.iter().map(|f| dot(query, f)).collect())
}

/// Suffix sums in one reverse pass.
pub fn suffix_sum<T: Real>(response: &[T]) -> Result<Vec<T>> {
    if response.is_empty() {
        return Err(DacatError::EmptyInput("response vector"));
    }
    let mut out = vec![T::zero(); response.len()];
    let mut acc = T::zero();
    for (o, &s) in out.iter_mut().zip(response).rev() {
        acc += s;
        *o = acc;
    }
    Ok(out)
}

/// 1-based index of the first maximum of `clip_response`.
pub fn select_start<T: Real>(clip_response: &[T]) -> Result<usize> {
    if clip_response.is_empty() {
        return Err(DacatError::EmptyInput("clip response vector"));
    }
    let mut best = 0;
    let mut best_val = clip_response[0];
    for (j, &p) in clip_response.iter().enumerate() {
        if p.is_nan() {
            return Err(DacatError::NonFinite("clip response"));
        }
        if p > best_val {
            best = j;
            best_val = p;
        }
    }
    Ok(best + 1)
}

/// Adaptive clip for `query`: the cache suffix starting at the selected index.
pub fn read_adaptive<'a, T: Real>(
    query: &[T],
    cache: &'a FeatureCache<T>,
) -> Result<(Clip<'a, T>, ClipSelection<T>)> {
    let response = frame_response(query, cache)?;
    let clip_response = suffix_sum(&response)?;
    let start_index = select_start(&clip_response)?;
    let clip = cache.slice(start_index)?;
    Ok((
        clip,
        ClipSelection {
            response,
            clip_response,
            start_index,
        },
    ))
}

/// Allocation-light variant of [`read_adaptive`] over an arbitrary view:
/// returns only the 1-based start index.
pub fn adaptive_start<T: Real>(query: &[T], clip: Clip<'_, T>) -> Result<usize> {
    if clip.is_empty() {
        return Err(DacatError::EmptyCache);
    }
    if query.len() != clip.dim() {
        return Err(DacatError::DimensionMismatch {
            expected: clip.dim(),
            found: query.len(),
        });
    }
    // Same reverse accumulation order as `suffix_sum`, so the selected index
    // agrees bit-for-bit with the materialized path.
    let n = clip.len();
    let mut acc = T::zero();
    let mut best = n;
    let mut best_val = T::neg_infinity();
    for j in (0..n).rev() {
        acc += dot(query, clip.get(j));
        if acc.is_nan() {
            return Err(DacatError::NonFinite("clip response"));
        }
        if acc >= best_val {
            best_val = acc;
            best = j;
        }
    }
    Ok(best + 1)
}

/// Last `min(k, t)` entries.
pub fn read_fixed<T: Real>(cache: &FeatureCache<T>, k: usize) -> Result<Clip<'_, T>> {
    if k == 0 {
        return Err(DacatError::InvalidConfig("fixed readout needs k >= 1".into()));
    }
    if cache.is_empty() {
        return Err(DacatError::EmptyCache);
    }
    Ok(cache.view().tail(k))
}

pub fn read_all<T: Real>(cache: &FeatureCache<T>) -> Result<Clip<'_, T>> {
    if cache.is_empty() {
        return Err(DacatError::EmptyCache);
    }
    Ok(cache.view())
}
