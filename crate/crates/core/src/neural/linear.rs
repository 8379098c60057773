use rand::Rng;

use crate::error::{DacatError, Result};
use crate::neural::params::{join, uniform_init, Parameters};
use crate::neural::tensor::Tensor;
use crate::types::Real;

/// Affine map `W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T = f64> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Tensor::zeros(&[output, input]),
            b: Tensor::zeros(&[output]),
        }
    }

    pub fn init<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            w: uniform_init(&[output, input], input, rng),
            b: Tensor::zeros(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim() {
            return Err(DacatError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let mut y = self.w.matvec(x);
        for (o, &b) in y.iter_mut().zip(self.b.data()) {
            *o += b;
        }
        Ok(y)
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(&self, x: &[T], dy: &[T], grads: &mut Linear<T>) -> Vec<T> {
        grads.w.add_outer(dy, x);
        grads.b.add_assign(dy);
        self.w.matvec_t(dy)
    }

    pub fn cast<U: Real>(&self) -> Linear<U> {
        Linear {
            w: self.w.cast(),
            b: self.b.cast(),
        }
    }
}

impl<T: Real> Parameters<T> for Linear<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(join(prefix, "w"), &self.w);
        f(join(prefix, "b"), &self.b);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(join(prefix, "w"), &mut self.w);
        f(join(prefix, "b"), &mut self.b);
    }
}

/// Toy observation encoder, `tanh(W x + b)`, standing in for a frame encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<T = f64> {
    pub proj: Linear<T>,
}

impl<T: Real> Encoder<T> {
    pub fn init<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            proj: Linear::init(input, output, rng),
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let mut y = self.proj.forward(x)?;
        y.iter_mut().for_each(|v| *v = v.tanh());
        Ok(y)
    }

    /// `y` is the forward output.
    pub fn backward(&self, x: &[T], y: &[T], dy: &[T], grads: &mut Encoder<T>) -> Vec<T> {
        let dz: Vec<T> = dy
            .iter()
            .zip(y)
            .map(|(&g, &v)| g * (T::one() - v * v))
            .collect();
        self.proj.backward(x, &dz, &mut grads.proj)
    }

    pub fn cast<U: Real>(&self) -> Encoder<U> {
        Encoder {
            proj: self.proj.cast(),
        }
    }
}

impl<T: Real> Parameters<T> for Encoder<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.proj.visit(prefix, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.proj.visit_mut(prefix, f);
    }
}
