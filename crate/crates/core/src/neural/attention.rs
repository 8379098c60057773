//! Single-head scaled dot-product cross-attention from one query vector to a
//! clip of feature vectors.
//!
//! `Q = Wq x`, `K_i = Wk f_i`, `V_i = Wv f_i`,
//! `a = softmax(Q.K_i / sqrt(d_k))`, `out = Wo sum_i a_i V_i`.
//!
//! The key projection is folded onto the query (`Q.K_i = (Wk^T Q).f_i`) and
//! the value projection is applied after pooling (`sum a_i Wv f_i = Wv sum a_i f_i`),
//! so a read-out over `n` entries costs `O(n d + d^2)` rather than `O(n d^2)`.

use rand::Rng;

use crate::cache::Clip;
use crate::error::{DacatError, Result};
use crate::neural::params::{join, uniform_init, Parameters};
use crate::neural::tensor::Tensor;
use crate::types::{dot, dot2, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct CrossAttention<T = f64> {
    /// `(d_k, d)`
    pub wq: Tensor<T>,
    /// `(d_k, d)`
    pub wk: Tensor<T>,
    /// `(d_v, d)`
    pub wv: Tensor<T>,
    /// `(d, d_v)`
    pub wo: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct AttentionTrace<T = f64> {
    q: Vec<T>,
    /// `Wk^T Q / sqrt(d_k)`
    key_probe: Vec<T>,
    pub weights: Vec<T>,
    pooled: Vec<T>,
    v: Vec<T>,
}

pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = out.iter().copied().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

impl<T: Real> CrossAttention<T> {
    pub fn init<R: Rng>(d: usize, rng: &mut R) -> Self {
        Self {
            wq: uniform_init(&[d, d], d, rng),
            wk: uniform_init(&[d, d], d, rng),
            wv: uniform_init(&[d, d], d, rng),
            wo: uniform_init(&[d, d], d, rng),
        }
    }

    /// All projections set to the identity.
    pub fn identity(d: usize) -> Self {
        let mut eye = Tensor::zeros(&[d, d]);
        for i in 0..d {
            eye.data_mut()[i * d + i] = T::one();
        }
        Self {
            wq: eye.clone(),
            wk: eye.clone(),
            wv: eye.clone(),
            wo: eye,
        }
    }

    pub fn dim(&self) -> usize {
        self.wq.cols()
    }

    pub fn forward(&self, query: &[T], clip: Clip<'_, T>) -> Result<(Vec<T>, AttentionTrace<T>)> {
        if clip.is_empty() {
            return Err(DacatError::EmptyInput("attention clip"));
        }
        let d = self.dim();
        if query.len() != d || clip.dim() != d {
            return Err(DacatError::DimensionMismatch {
                expected: d,
                found: if query.len() != d { query.len() } else { clip.dim() },
            });
        }
        let scale = T::one() / T::cast(self.wq.rows() as f64).sqrt();
        let q = self.wq.matvec(query);
        let mut key_probe = self.wk.matvec_t(&q);
        key_probe.iter_mut().for_each(|v| *v *= scale);

        let scores: Vec<T> = clip.iter().map(|f| dot(&key_probe, f)).collect();
        let weights = softmax(&scores);

        let mut pooled = vec![T::zero(); d];
        for (&w, f) in weights.iter().zip(clip.iter()) {
            for (p, &x) in pooled.iter_mut().zip(f) {
                *p += w * x;
            }
        }
        let v = self.wv.matvec(&pooled);
        let out = self.wo.matvec(&v);
        Ok((
            out,
            AttentionTrace {
                q,
                key_probe,
                weights,
                pooled,
                v,
            },
        ))
    }

    /// Max-R selection fused with attention over the selected suffix of
    /// `view`, in one reverse pass. `response_query` drives the Max-R
    /// responses; the selected start (1-based, same tie rule as
    /// [`adaptive_start`](crate::maxr::adaptive_start)) is returned with the
    /// output. The pooled feature is accumulated with a running softmax and
    /// snapshotted at every new suffix-sum maximum, so the cache is read once.
    pub fn forward_adaptive(
        &self,
        query: &[T],
        response_query: &[T],
        view: Clip<'_, T>,
    ) -> Result<(Vec<T>, AttentionTrace<T>, usize)> {
        if view.is_empty() {
            return Err(DacatError::EmptyCache);
        }
        let d = self.dim();
        if query.len() != d || response_query.len() != d || view.dim() != d {
            return Err(DacatError::DimensionMismatch {
                expected: d,
                found: if view.dim() != d { view.dim() } else { query.len().min(response_query.len()) },
            });
        }
        let scale = T::one() / T::cast(self.wq.rows() as f64).sqrt();
        let q = self.wq.matvec(query);
        let mut key_probe = self.wk.matvec_t(&q);
        key_probe.iter_mut().for_each(|v| *v *= scale);

        let n = view.len();
        let mut scores = vec![T::zero(); n];
        let mut acc = T::zero();
        let (mut best, mut best_val) = (n, T::neg_infinity());
        let (mut m, mut z) = (T::neg_infinity(), T::zero());
        let mut run = vec![T::zero(); d];
        let (mut best_run, mut best_m, mut best_z) = (vec![T::zero(); d], m, z);
        for j in (0..n).rev() {
            let f = view.get(j);
            let (r, s) = dot2(response_query, &key_probe, f);
            acc += r;
            if acc.is_nan() {
                return Err(DacatError::NonFinite("clip response"));
            }
            scores[j] = s;
            // Terms below the smallest normal are dropped; subnormal
            // arithmetic would dominate the pass.
            if s > m {
                let c = (m - s).exp();
                if c < T::min_positive_value() {
                    run.iter_mut().for_each(|r| *r = T::zero());
                    z = T::zero();
                } else {
                    run.iter_mut().for_each(|r| *r *= c);
                    z *= c;
                }
                m = s;
            }
            let e = (s - m).exp();
            if e >= T::min_positive_value() {
                for (r, &x) in run.iter_mut().zip(f) {
                    *r += e * x;
                }
                z += e;
            }
            if acc >= best_val {
                best_val = acc;
                best = j;
                best_run.copy_from_slice(&run);
                best_m = m;
                best_z = z;
            }
        }

        let pooled: Vec<T> = best_run.iter().map(|&r| r / best_z).collect();
        let weights: Vec<T> = scores[best..]
            .iter()
            .map(|&s| {
                let e = (s - best_m).exp();
                if e >= T::min_positive_value() {
                    e / best_z
                } else {
                    T::zero()
                }
            })
            .collect();
        let v = self.wv.matvec(&pooled);
        let out = self.wo.matvec(&v);
        Ok((
            out,
            AttentionTrace {
                q,
                key_probe,
                weights,
                pooled,
                v,
            },
            best + 1,
        ))
    }

    /// Accumulates parameter gradients and returns `dL/dquery`. When
    /// `clip_grad` is given it receives `dL/dclip` (row-major, same layout as
    /// the clip); pass `None` when the clip is frozen.
    pub fn backward(
        &self,
        trace: &AttentionTrace<T>,
        query: &[T],
        clip: Clip<'_, T>,
        dout: &[T],
        grads: &mut CrossAttention<T>,
        clip_grad: Option<&mut [T]>,
    ) -> Vec<T> {
        let d = self.dim();
        let scale = T::one() / T::cast(self.wq.rows() as f64).sqrt();

        grads.wo.add_outer(dout, &trace.v);
        let dv = self.wo.matvec_t(dout);
        grads.wv.add_outer(&dv, &trace.pooled);
        let dpooled = self.wv.matvec_t(&dv);

        let dweights: Vec<T> = clip.iter().map(|f| dot(&dpooled, f)).collect();
        let mean: T = trace
            .weights
            .iter()
            .zip(&dweights)
            .map(|(&w, &g)| w * g)
            .sum();
        let dscores: Vec<T> = trace
            .weights
            .iter()
            .zip(&dweights)
            .map(|(&w, &g)| w * (g - mean))
            .collect();

        // d(key_probe) before scaling, summed over the clip.
        let mut g = vec![T::zero(); d];
        for (&ds, f) in dscores.iter().zip(clip.iter()) {
            for (gi, &x) in g.iter_mut().zip(f) {
                *gi += ds * x;
            }
        }
        g.iter_mut().for_each(|v| *v *= scale);
        grads.wk.add_outer(&trace.q, &g);
        let dq = self.wk.matvec(&g);
        grads.wq.add_outer(&dq, query);

        if let Some(dclip) = clip_grad {
            for (i, row) in dclip.chunks_exact_mut(d).enumerate() {
                let w = trace.weights[i];
                let ds = dscores[i];
                for ((r, &dp), &kp) in row.iter_mut().zip(&dpooled).zip(&trace.key_probe) {
                    *r += w * dp + ds * kp;
                }
            }
        }
        self.wq.matvec_t(&dq)
    }

    pub fn cast<U: Real>(&self) -> CrossAttention<U> {
        CrossAttention {
            wq: self.wq.cast(),
            wk: self.wk.cast(),
            wv: self.wv.cast(),
            wo: self.wo.cast(),
        }
    }
}

impl<T: Real> Parameters<T> for CrossAttention<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(join(prefix, "wq"), &self.wq);
        f(join(prefix, "wk"), &self.wk);
        f(join(prefix, "wv"), &self.wv);
        f(join(prefix, "wo"), &self.wo);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(join(prefix, "wq"), &mut self.wq);
        f(join(prefix, "wk"), &mut self.wk);
        f(join(prefix, "wv"), &mut self.wv);
        f(join(prefix, "wo"), &mut self.wo);
    }
}
