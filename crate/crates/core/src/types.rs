//! Shared domain types: scalar trait, feature vectors, phase timelines and
//! the model configuration axes.

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use std::str::FromStr;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{DacatError, Result};

/// Floating-point scalar used throughout the numeric code.
///
/// Training always runs in `f64`; inference may run in `f32`.
pub trait Real:
    Float
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    fn cast(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn cast(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn cast(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

const LANES: usize = 8;

/// Dot product with eight independent accumulators so the compiler can
/// vectorize. Summation order is fixed, so results are reproducible.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *x * *y;
    }
    reduce(acc) + tail
}

/// `(dot(a, x), dot(b, x))` in one sweep over `x`, bit-identical to two
/// separate [`dot`] calls.
#[inline]
pub fn dot2<T: Real>(a: &[T], b: &[T], x: &[T]) -> (T, T) {
    debug_assert_eq!(a.len(), x.len());
    debug_assert_eq!(b.len(), x.len());
    let (mut acc_a, mut acc_b) = ([T::zero(); LANES], [T::zero(); LANES]);
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    let mut cx = x.chunks_exact(LANES);
    for ((p, q), y) in (&mut ca).zip(&mut cb).zip(&mut cx) {
        for l in 0..LANES {
            acc_a[l] += p[l] * y[l];
            acc_b[l] += q[l] * y[l];
        }
    }
    let (mut tail_a, mut tail_b) = (T::zero(), T::zero());
    for ((p, q), y) in ca.remainder().iter().zip(cb.remainder()).zip(cx.remainder()) {
        tail_a += *p * *y;
        tail_b += *q * *y;
    }
    (reduce(acc_a) + tail_a, reduce(acc_b) + tail_b)
}

#[inline]
fn reduce<T: Real>(acc: [T; LANES]) -> T {
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// Embedding of a single frame. All entries are finite.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector<T = f64>(Vec<T>);

impl<T: Real> FeatureVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(DacatError::EmptyInput("feature vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DacatError::NonFinite("feature vector"));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![T::zero(); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> AsRef<[T]> for FeatureVector<T> {
    fn as_ref(&self) -> &[T] {
        &self.0
    }
}

/// Per-frame phase labels for one video.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseTimeline {
    labels: Vec<usize>,
    num_phases: usize,
    /// Frames per second of the label stream.
    pub fps: f64,
}

impl PhaseTimeline {
    pub fn new(labels: Vec<usize>, num_phases: usize) -> Result<Self> {
        if num_phases == 0 {
            return Err(DacatError::InvalidConfig("num_phases must be >= 1".into()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_phases) {
            return Err(DacatError::LabelOutOfRange { label, num_phases });
        }
        Ok(Self {
            labels,
            num_phases,
            fps: 1.0,
        })
    }

    pub fn with_fps(mut self, fps: f64) -> Self {
        self.fps = fps;
        self
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_phases(&self) -> usize {
        self.num_phases
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// Fuse branch features before a single shared LSTM.
    Before,
    /// Each branch has its own LSTM and head; logits are added.
    After,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interaction {
    Add,
    Concat,
    Ca,
}

/// Which branches contribute to the fused prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branches {
    Both,
    FwbOnly,
    AcbOnly,
}

/// How the clip is read out of the feature cache.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Readout {
    Adaptive,
    Fixed(usize),
    All,
}

macro_rules! impl_str_enum {
    ($ty:ident, $( $variant:ident => $name:literal ),+ $(,)?) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = match *self { $( $ty::$variant => $name, )+ };
                f.write_str(s)
            }
        }

        impl FromStr for $ty {
            type Err = DacatError;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $( $name => Ok($ty::$variant), )+
                    other => Err(DacatError::InvalidConfig(format!(
                        "unknown {} {:?}", stringify!($ty), other
                    ))),
                }
            }
        }
    };
}

impl_str_enum!(FusionMode, Before => "before", After => "after");
impl_str_enum!(Interaction, Add => "add", Concat => "concat", Ca => "ca");
impl_str_enum!(Branches, Both => "both", FwbOnly => "fwb-only", AcbOnly => "acb-only");

impl fmt::Display for Readout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Readout::Adaptive => f.write_str("adaptive"),
            Readout::All => f.write_str("all"),
            Readout::Fixed(k) => write!(f, "fixed:{k}"),
        }
    }
}

impl FromStr for Readout {
    type Err = DacatError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Readout::Adaptive),
            "all" => Ok(Readout::All),
            _ => {
                let k = s
                    .strip_prefix("fixed:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .ok_or_else(|| DacatError::InvalidConfig(format!("unknown readout {s:?}")))?;
                if k == 0 {
                    return Err(DacatError::InvalidConfig("fixed readout needs k >= 1".into()));
                }
                Ok(Readout::Fixed(k))
            }
        }
    }
}

impl From<Readout> for String {
    fn from(r: Readout) -> Self {
        r.to_string()
    }
}

impl TryFrom<String> for Readout {
    type Error = DacatError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Model shape and the ablation axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding dimension.
    pub d: usize,
    /// Raw observation dimension.
    pub d_raw: usize,
    pub num_phases: usize,
    pub hidden: usize,
    pub fusion: FusionMode,
    pub interaction: Interaction,
    pub readout: Readout,
    pub branches: Branches,
    /// Optional ring-buffer bound on the feature cache (frames).
    pub capacity: Option<usize>,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(d: usize, d_raw: usize, num_phases: usize, hidden: usize) -> Self {
        Self {
            d,
            d_raw,
            num_phases,
            hidden,
            fusion: FusionMode::After,
            interaction: Interaction::Ca,
            readout: Readout::Adaptive,
            branches: Branches::Both,
            capacity: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |v: usize, name: &str| {
            if v == 0 {
                Err(DacatError::InvalidConfig(format!("{name} must be >= 1")))
            } else {
                Ok(())
            }
        };
        check(self.d, "d")?;
        check(self.d_raw, "d_raw")?;
        check(self.num_phases, "num_phases")?;
        check(self.hidden, "hidden")?;
        if let Readout::Fixed(0) = self.readout {
            return Err(DacatError::InvalidConfig("fixed readout needs k >= 1".into()));
        }
        if self.capacity == Some(0) {
            return Err(DacatError::InvalidConfig("capacity must be >= 1".into()));
        }
        Ok(())
    }
}
