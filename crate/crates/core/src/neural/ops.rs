use crate::cache::Clip;
use crate::error::{DacatError, Result};
use crate::neural::attention::softmax;
use crate::types::Real;

/// `-log softmax(logits)[target]` and its gradient w.r.t. the logits.
pub fn cross_entropy<T: Real>(logits: &[T], target: usize) -> Result<(T, Vec<T>)> {
    if target >= logits.len() {
        return Err(DacatError::LabelOutOfRange {
            label: target,
            num_phases: logits.len(),
        });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(DacatError::NonFinite("logits"));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let log_sum = logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln() + max;
    let loss = log_sum - logits[target];
    let mut grad = softmax(logits);
    grad[target] -= T::one();
    Ok((loss, grad))
}

/// Elementwise mean over the clip entries.
pub fn mean_pool_temporal<T: Real>(clip: Clip<'_, T>) -> Result<Vec<T>> {
    if clip.is_empty() {
        return Err(DacatError::EmptyInput("clip"));
    }
    let mut out = vec![T::zero(); clip.dim()];
    for f in clip.iter() {
        for (o, &x) in out.iter_mut().zip(f) {
            *o += x;
        }
    }
    let n = T::cast(clip.len() as f64);
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

/// Gradient of [`mean_pool_temporal`] w.r.t. each of `n` entries (identical rows).
pub fn mean_pool_backward<T: Real>(dout: &[T], n: usize) -> Vec<T> {
    let scale = T::one() / T::cast(n as f64);
    let row: Vec<T> = dout.iter().map(|&g| g * scale).collect();
    row.repeat(n)
}

/// Index of the largest value; the smallest index wins ties.
pub fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
