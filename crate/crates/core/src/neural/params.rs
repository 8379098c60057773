use rand::Rng;

use crate::error::{DacatError, Result};
use crate::neural::tensor::Tensor;
use crate::types::Real;

/// Anything holding named trainable tensors.
///
/// Both visitors must walk tensors in the same order; optimizers and
/// gradient buffers rely on that order to pair tensors up.
pub trait Parameters<T: Real> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }

    fn zero_(&mut self) {
        self.visit_mut("", &mut |_, t| t.fill(T::zero()));
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit("", &mut |_, t| ok &= t.is_finite());
        ok
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights.
pub(crate) fn uniform_init<T: Real, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::cast(rng.gen_range(-bound..=bound)))
        .collect();
    Tensor::from_vec(shape, data).expect("shape product matches")
}

/// Ordered collection of named tensors, the unit of checkpointing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor<f64>)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_params<P: Parameters<f64>>(params: &P, prefix: &str) -> Self {
        let mut set = Self::new();
        set.extend_from(params, prefix);
        set
    }

    pub fn extend_from<P: Parameters<f64>>(&mut self, params: &P, prefix: &str) {
        params.visit(prefix, &mut |name, t| self.entries.push((name, t.clone())));
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<f64>) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = tensor,
            None => self.entries.push((name, tensor)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f64>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f64>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// Copies every tensor of `params` (under `prefix`) from this set,
    /// checking names and shapes.
    pub fn load_into<T: Real, P: Parameters<T>>(&self, params: &mut P, prefix: &str) -> Result<()> {
        let mut err = None;
        params.visit_mut(prefix, &mut |name, t| {
            if err.is_some() {
                return;
            }
            match self.get(&name) {
                None => err = Some(DacatError::MissingTensor(name)),
                Some(src) if src.shape() != t.shape() => {
                    err = Some(DacatError::ShapeMismatch {
                        name,
                        expected: t.shape().to_vec(),
                        found: src.shape().to_vec(),
                    })
                }
                Some(src) => *t = src.cast(),
            }
        });
        err.map_or(Ok(()), Err)
    }
}
