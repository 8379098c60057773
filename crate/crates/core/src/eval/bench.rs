//! Per-frame latency of the online step as a function of cache length.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DacatError, Result};
use crate::pipeline::DacatModel;
use crate::types::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub length: usize,
    pub d: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub fps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    /// Timed steps per length. The last timed step sees a cache of exactly `length`.
    pub frames: usize,
    /// Untimed steps run first on a copy of the state.
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            frames: 20,
            warmup: 3,
            seed: 0,
        }
    }
}

/// Times `model.step_online` with the cache prefilled to just below each
/// requested length. Prefilled features are uniform in [-1, 1], the range
/// of the tanh cache encoder.
pub fn bench_throughput<T: Real>(
    model: &DacatModel<T>,
    lengths: &[usize],
    opts: &BenchOptions,
) -> Result<Vec<BenchRow>> {
    if opts.frames == 0 {
        return Err(DacatError::InvalidConfig("bench needs at least one timed frame".into()));
    }
    let d = model.config.d;
    let d_raw = model.config.d_raw;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rows = Vec::with_capacity(lengths.len());
    for &length in lengths {
        if length == 0 {
            return Err(DacatError::InvalidConfig("bench length must be >= 1".into()));
        }
        let mut state = model.new_state()?;
        let prefill = length.saturating_sub(opts.frames);
        let mut feature = vec![T::zero(); d];
        for _ in 0..prefill {
            feature
                .iter_mut()
                .for_each(|v| *v = T::cast(rng.gen_range(-1.0..1.0)));
            state.cache.append(&feature)?;
        }
        state.t = prefill;
        let timed = length - prefill;
        let obs: Vec<Vec<T>> = (0..timed.max(opts.warmup))
            .map(|_| (0..d_raw).map(|_| T::cast(rng.gen_range(-1.0..1.0))).collect())
            .collect();

        let mut warm = state.clone();
        for o in obs.iter().take(opts.warmup) {
            std::hint::black_box(model.step_online(o, &mut warm)?);
        }
        drop(warm);

        let mut ms = Vec::with_capacity(timed);
        for o in obs.iter().take(timed) {
            let t0 = Instant::now();
            std::hint::black_box(model.step_online(o, &mut state)?);
            ms.push(t0.elapsed().as_secs_f64() * 1e3);
        }
        let mean_ms = ms.iter().sum::<f64>() / ms.len() as f64;
        rows.push(BenchRow {
            length,
            d,
            mean_ms,
            p95_ms: percentile(&ms, 0.95),
            fps: 1e3 / mean_ms,
        });
    }
    Ok(rows)
}

/// Nearest-rank percentile.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Least-squares slope of `ln(mean_ms)` against `ln(length)`.
pub fn fitted_exponent(rows: &[BenchRow]) -> Option<f64> {
    if rows.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.length as f64).ln(), r.mean_ms.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub const BENCH_HEADER: &str = "length,d,mean_ms,p95_ms,fps";

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.3}\n",
            r.length, r.d, r.mean_ms, r.p95_ms, r.fps
        ));
    }
    out
}
