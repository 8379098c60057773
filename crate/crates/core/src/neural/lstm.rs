//! Single LSTM cell with explicit forward trace and backward pass.
//!
//! Gate layout in the stacked weight matrices is `[input, forget, cell, output]`.

use rand::Rng;

use crate::error::{DacatError, Result};
use crate::neural::params::{join, uniform_init, Parameters};
use crate::neural::tensor::Tensor;
use crate::types::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<T = f64> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Real> LstmState<T> {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![T::zero(); hidden],
            c: vec![T::zero(); hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.h.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lstm<T = f64> {
    /// `(4h, input)`
    pub w_ih: Tensor<T>,
    /// `(4h, h)`
    pub w_hh: Tensor<T>,
    /// `(4h)`
    pub b: Tensor<T>,
}

/// Values saved by [`Lstm::step`] for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmTrace<T = f64> {
    x: Vec<T>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    /// Activated gates `[i, f, g, o]`.
    gates: Vec<T>,
    tanh_c: Vec<T>,
}

#[inline]
fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

impl<T: Real> Lstm<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Tensor::zeros(&[4 * hidden, input]),
            w_hh: Tensor::zeros(&[4 * hidden, hidden]),
            b: Tensor::zeros(&[4 * hidden]),
        }
    }

    /// Uniform(+-1/sqrt(fan_in)) weights; forget-gate bias set to 1.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut b = Tensor::zeros(&[4 * hidden]);
        b.data_mut()[hidden..2 * hidden].fill(T::one());
        Self {
            w_ih: uniform_init(&[4 * hidden, input], input, rng),
            w_hh: uniform_init(&[4 * hidden, hidden], hidden, rng),
            b,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.cols()
    }

    pub fn step(&self, x: &[T], state: &LstmState<T>) -> Result<(LstmState<T>, LstmTrace<T>)> {
        let hd = self.hidden();
        if x.len() != self.input_dim() {
            return Err(DacatError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        if state.h.len() != hd || state.c.len() != hd {
            return Err(DacatError::DimensionMismatch {
                expected: hd,
                found: state.h.len(),
            });
        }
        let mut z = self.w_ih.matvec(x);
        let zh = self.w_hh.matvec(&state.h);
        for ((zi, &a), &b) in z.iter_mut().zip(&zh).zip(self.b.data()) {
            *zi += a + b;
        }
        for (k, zi) in z.iter_mut().enumerate() {
            *zi = if (2 * hd..3 * hd).contains(&k) {
                zi.tanh()
            } else {
                sigmoid(*zi)
            };
        }
        let (i, rest) = z.split_at(hd);
        let (f, rest) = rest.split_at(hd);
        let (g, o) = rest.split_at(hd);
        let mut c = vec![T::zero(); hd];
        let mut h = vec![T::zero(); hd];
        let mut tanh_c = vec![T::zero(); hd];
        for k in 0..hd {
            c[k] = f[k] * state.c[k] + i[k] * g[k];
            tanh_c[k] = c[k].tanh();
            h[k] = o[k] * tanh_c[k];
        }
        let trace = LstmTrace {
            x: x.to_vec(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            gates: z,
            tanh_c,
        };
        Ok((LstmState { h, c }, trace))
    }

    /// Given `dL/dh'` and `dL/dc'` for the step output, accumulates parameter
    /// gradients and returns `(dL/dx, dL/dh, dL/dc)` for the step inputs.
    pub fn backward(
        &self,
        trace: &LstmTrace<T>,
        dh: &[T],
        dc_next: &[T],
        grads: &mut Lstm<T>,
    ) -> (Vec<T>, Vec<T>, Vec<T>) {
        let hd = self.hidden();
        let (i, rest) = trace.gates.split_at(hd);
        let (f, rest) = rest.split_at(hd);
        let (g, o) = rest.split_at(hd);
        let mut dz = vec![T::zero(); 4 * hd];
        let mut dc_prev = vec![T::zero(); hd];
        for k in 0..hd {
            let tc = trace.tanh_c[k];
            let dc = dc_next[k] + dh[k] * o[k] * (T::one() - tc * tc);
            let d_o = dh[k] * tc;
            let d_i = dc * g[k];
            let d_g = dc * i[k];
            let d_f = dc * trace.c_prev[k];
            dc_prev[k] = dc * f[k];
            dz[k] = d_i * i[k] * (T::one() - i[k]);
            dz[hd + k] = d_f * f[k] * (T::one() - f[k]);
            dz[2 * hd + k] = d_g * (T::one() - g[k] * g[k]);
            dz[3 * hd + k] = d_o * o[k] * (T::one() - o[k]);
        }
        grads.w_ih.add_outer(&dz, &trace.x);
        grads.w_hh.add_outer(&dz, &trace.h_prev);
        grads.b.add_assign(&dz);
        let dx = self.w_ih.matvec_t(&dz);
        let dh_prev = self.w_hh.matvec_t(&dz);
        (dx, dh_prev, dc_prev)
    }

    pub fn cast<U: Real>(&self) -> Lstm<U> {
        Lstm {
            w_ih: self.w_ih.cast(),
            w_hh: self.w_hh.cast(),
            b: self.b.cast(),
        }
    }
}

impl<T: Real> Parameters<T> for Lstm<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(join(prefix, "w_ih"), &self.w_ih);
        f(join(prefix, "w_hh"), &self.w_hh);
        f(join(prefix, "b"), &self.b);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(join(prefix, "w_ih"), &mut self.w_ih);
        f(join(prefix, "w_hh"), &mut self.w_hh);
        f(join(prefix, "b"), &mut self.b);
    }
}
