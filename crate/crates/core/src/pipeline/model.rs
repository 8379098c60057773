use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DacatError, Result};
use crate::neural::params::join;
use crate::neural::{CrossAttention, Encoder, Linear, Lstm, ParamSet, Parameters, Tensor};
use crate::types::{ModelConfig, Real};

/// Stage-1 network: cache encoder plus an LSTM predictor used to train it.
#[derive(Clone, Debug, PartialEq)]
pub struct CacheModel<T = f64> {
    pub encoder: Encoder<T>,
    pub lstm: Lstm<T>,
    pub head: Linear<T>,
}

impl<T: Real> CacheModel<T> {
    pub fn init(config: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self {
            encoder: Encoder::init(config.d_raw, config.d, &mut rng),
            lstm: Lstm::init(config.d, config.hidden, &mut rng),
            head: Linear::init(config.hidden, config.num_phases, &mut rng),
        }
    }

    pub fn cast<U: Real>(&self) -> CacheModel<U> {
        CacheModel {
            encoder: self.encoder.cast(),
            lstm: self.lstm.cast(),
            head: self.head.cast(),
        }
    }
}

impl<T: Real> Parameters<T> for CacheModel<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.encoder.visit(&join(prefix, "cache_enc"), f);
        self.lstm.visit(&join(prefix, "cache_lstm"), f);
        self.head.visit(&join(prefix, "cache_head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.encoder.visit_mut(&join(prefix, "cache_enc"), f);
        self.lstm.visit_mut(&join(prefix, "cache_lstm"), f);
        self.head.visit_mut(&join(prefix, "cache_head"), f);
    }
}

/// Trainable stage-2 parameters. The cache encoder is deliberately not part
/// of this struct, so no gradient buffer for it can exist.
///
/// All interaction variants are always allocated; the config decides which
/// ones take part in the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct DacatParams<T = f64> {
    pub fwb_encoder: Encoder<T>,
    pub attention: CrossAttention<T>,
    /// `[F_t ; mean(clip)] -> d` projection for the concat interaction.
    pub concat: Linear<T>,
    /// Frame-wise LSTM; also the shared LSTM when fusing before.
    pub fwb_lstm: Lstm<T>,
    pub fwb_head: Linear<T>,
    pub acb_lstm: Lstm<T>,
    pub acb_head: Linear<T>,
}

impl<T: Real> DacatParams<T> {
    /// Fresh parameters. The frame-wise encoder starts as a copy of the
    /// stage-1 cache encoder; every other layer is freshly initialized.
    pub fn init(config: &ModelConfig, stage1: &CacheModel<T>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_acb0);
        let d = config.d;
        let attention = CrossAttention::init(d, &mut rng);
        let concat = Linear::init(2 * d, d, &mut rng);
        let acb_lstm = Lstm::init(d, config.hidden, &mut rng);
        let acb_head = Linear::init(config.hidden, config.num_phases, &mut rng);
        Self {
            fwb_encoder: stage1.encoder.clone(),
            attention,
            concat,
            fwb_lstm: Lstm::init(d, config.hidden, &mut rng),
            fwb_head: Linear::init(config.hidden, config.num_phases, &mut rng),
            acb_lstm,
            acb_head,
        }
    }

    /// All-zero buffer with the same shapes, used for gradients.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero_();
        z
    }

    pub fn cast<U: Real>(&self) -> DacatParams<U> {
        DacatParams {
            fwb_encoder: self.fwb_encoder.cast(),
            attention: self.attention.cast(),
            concat: self.concat.cast(),
            fwb_lstm: self.fwb_lstm.cast(),
            fwb_head: self.fwb_head.cast(),
            acb_lstm: self.acb_lstm.cast(),
            acb_head: self.acb_head.cast(),
        }
    }
}

impl<T: Real> Parameters<T> for DacatParams<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.fwb_encoder.visit(&join(prefix, "fwb_enc"), f);
        self.attention.visit(&join(prefix, "ca"), f);
        self.concat.visit(&join(prefix, "concat"), f);
        self.fwb_lstm.visit(&join(prefix, "fwb_lstm"), f);
        self.fwb_head.visit(&join(prefix, "fwb_head"), f);
        self.acb_lstm.visit(&join(prefix, "acb_lstm"), f);
        self.acb_head.visit(&join(prefix, "acb_head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.fwb_encoder.visit_mut(&join(prefix, "fwb_enc"), f);
        self.attention.visit_mut(&join(prefix, "ca"), f);
        self.concat.visit_mut(&join(prefix, "concat"), f);
        self.fwb_lstm.visit_mut(&join(prefix, "fwb_lstm"), f);
        self.fwb_head.visit_mut(&join(prefix, "fwb_head"), f);
        self.acb_lstm.visit_mut(&join(prefix, "acb_lstm"), f);
        self.acb_head.visit_mut(&join(prefix, "acb_head"), f);
    }
}

/// Everything needed to run the online engine: config, frozen cache encoder
/// and the stage-2 parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DacatModel<T = f64> {
    pub config: ModelConfig,
    pub cache_encoder: Encoder<T>,
    pub params: DacatParams<T>,
}

impl<T: Real> DacatModel<T> {
    pub fn new(config: ModelConfig, cache_encoder: Encoder<T>, params: DacatParams<T>) -> Result<Self> {
        config.validate()?;
        let model = Self {
            config,
            cache_encoder,
            params,
        };
        model.check_shapes()?;
        Ok(model)
    }

    /// Untrained model with seeded initialization.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let stage1 = CacheModel::init(&config);
        let params = DacatParams::init(&config, &stage1);
        Self::new(config, stage1.encoder, params)
    }

    fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        let expect = |found: usize, expected: usize| {
            if found == expected {
                Ok(())
            } else {
                Err(DacatError::DimensionMismatch { expected, found })
            }
        };
        expect(self.cache_encoder.proj.input_dim(), c.d_raw)?;
        expect(self.cache_encoder.proj.output_dim(), c.d)?;
        expect(self.params.fwb_encoder.proj.input_dim(), c.d_raw)?;
        expect(self.params.fwb_encoder.proj.output_dim(), c.d)?;
        expect(self.params.attention.dim(), c.d)?;
        expect(self.params.fwb_lstm.hidden(), c.hidden)?;
        expect(self.params.acb_lstm.hidden(), c.hidden)?;
        expect(self.params.fwb_head.output_dim(), c.num_phases)?;
        expect(self.params.acb_head.output_dim(), c.num_phases)?;
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> DacatModel<U> {
        DacatModel {
            config: self.config.clone(),
            cache_encoder: self.cache_encoder.cast(),
            params: self.params.cast(),
        }
    }

    /// Named tensors of the stage-2 parameters (cache encoder excluded).
    pub fn to_param_set(&self) -> ParamSet {
        let p64: DacatParams<f64> = self.params.cast();
        ParamSet::from_params(&p64, "")
    }

    /// Rebuilds a model from a cache-encoder set (as written by stage 1) and a
    /// stage-2 set.
    pub fn from_param_sets(config: ModelConfig, cache: &ParamSet, dacat: &ParamSet) -> Result<Self> {
        config.validate()?;
        let mut stage1 = CacheModel::<T>::init(&config);
        cache.load_into(&mut stage1.encoder, "cache_enc")?;
        let mut params = DacatParams::init(&config, &stage1);
        dacat.load_into(&mut params, "")?;
        Self::new(config, stage1.encoder, params)
    }
}
