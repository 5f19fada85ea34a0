//! Multi-scale conditional patch discriminators.
//!
//! Each domain's discriminator judges a (condition, candidate) pair: the
//! two patches are concatenated along channels and scored by a stack of
//! patch discriminators, each operating on a 2x further downsampled copy
//! of the input. Outputs are raw logit grids; the loss module applies the
//! log-sigmoid terms.

use candle_core::{DType, Device, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::model::ImagePatch;
use crate::nn::{leaky_relu, Conv2d, InstanceNorm, LayerInventory, LayerKind, PadMode};
use crate::{Error, Result};

fn default_num_scales() -> usize {
    3
}
fn default_layers_per_scale() -> usize {
    4
}
fn default_disc_width() -> usize {
    64
}
fn default_disc_in_channels() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    #[serde(default = "default_num_scales")]
    pub num_scales: usize,
    #[serde(default = "default_layers_per_scale")]
    pub layers_per_scale: usize,
    #[serde(default = "default_disc_width")]
    pub base_width: usize,
    /// Instance normalization between convolutions; off by default.
    #[serde(default)]
    pub use_normalization: bool,
    #[serde(default = "default_disc_in_channels")]
    pub in_channels: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            num_scales: default_num_scales(),
            layers_per_scale: default_layers_per_scale(),
            base_width: default_disc_width(),
            use_normalization: false,
            in_channels: default_disc_in_channels(),
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_scales == 0 {
            return Err(Error::Config("num_scales must be at least 1".into()));
        }
        if self.layers_per_scale == 0 || self.base_width == 0 || self.in_channels == 0 {
            return Err(Error::Config(
                "layers_per_scale, base_width and in_channels must be nonzero".into(),
            ));
        }
        Ok(())
    }
}

/// Per-scale grids of patch logits, coarsest last.
#[derive(Debug, Clone)]
pub struct ScoreMaps {
    pub maps: Vec<Tensor>,
}

impl ScoreMaps {
    pub fn num_scales(&self) -> usize {
        self.maps.len()
    }
}

struct ScaleDiscriminator {
    convs: Vec<(Conv2d, Option<InstanceNorm>)>,
    proj: Conv2d,
}

impl ScaleDiscriminator {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (conv, norm) in &self.convs {
            h = conv.forward(&h)?;
            if let Some(n) = norm {
                h = n.forward(&h)?;
            }
            h = leaky_relu(&h, 0.2)?;
        }
        self.proj.forward(&h)
    }
}

pub struct MultiScaleDiscriminator {
    scales: Vec<ScaleDiscriminator>,
    pub config: DiscriminatorConfig,
    name: String,
}

pub fn build_discriminator(config: &DiscriminatorConfig, seed: u64) -> Result<MultiScaleDiscriminator> {
    MultiScaleDiscriminator::new(config, seed, "discriminator", DType::F32, &Device::Cpu)
}

impl MultiScaleDiscriminator {
    pub fn new(
        config: &DiscriminatorConfig,
        seed: u64,
        name: &str,
        dtype: DType,
        dev: &Device,
    ) -> Result<Self> {
        config.validate()?;
        let mut scales = Vec::with_capacity(config.num_scales);
        for s in 0..config.num_scales {
            let mut convs = Vec::with_capacity(config.layers_per_scale);
            let mut in_ch = 2 * config.in_channels;
            for l in 0..config.layers_per_scale {
                let out_ch = config.base_width * (1usize << l).min(8);
                let lname = format!("{name}.scale{s}.conv{l}");
                let conv =
                    Conv2d::new(seed, &lname, in_ch, out_ch, 4, 2, PadMode::Zero(1), dtype, dev)?;
                // First layer sees raw pixels; normalization, when on,
                // starts from the second layer.
                let norm = if config.use_normalization && l > 0 {
                    Some(InstanceNorm::new(seed, &format!("{lname}.norm"), out_ch, dtype, dev)?)
                } else {
                    None
                };
                convs.push((conv, norm));
                in_ch = out_ch;
            }
            let proj = Conv2d::new(
                seed,
                &format!("{name}.scale{s}.proj"),
                in_ch,
                1,
                3,
                1,
                PadMode::Zero(1),
                dtype,
                dev,
            )?;
            scales.push(ScaleDiscriminator { convs, proj });
        }
        Ok(Self { scales, config: config.clone(), name: name.to_string() })
    }

    /// Score a batched (condition, candidate) pair of `(n, c, h, w)`
    /// tensors. The pair is channel-concatenated before scoring.
    pub fn score_batch(&self, condition: &Tensor, candidate: &Tensor) -> Result<ScoreMaps> {
        if condition.dims() != candidate.dims() {
            return Err(Error::Dimension(format!(
                "condition shape {:?} does not match candidate shape {:?}",
                condition.dims(),
                candidate.dims()
            )));
        }
        let mut input = Tensor::cat(&[condition, candidate], 1)?;
        let mut maps = Vec::with_capacity(self.scales.len());
        for (s, scale) in self.scales.iter().enumerate() {
            if s > 0 {
                input = input.avg_pool2d(2)?;
            }
            maps.push(scale.forward(&input)?);
        }
        Ok(ScoreMaps { maps })
    }

    pub fn score_pair(&self, condition: &ImagePatch, candidate: &ImagePatch) -> Result<ScoreMaps> {
        let c = condition.tensor().unsqueeze(0)?;
        let x = candidate.tensor().unsqueeze(0)?;
        self.score_batch(&c, &x)
    }

    pub fn named_params(&self) -> Vec<(String, Var)> {
        let mut out = Vec::new();
        for (s, scale) in self.scales.iter().enumerate() {
            for (l, (conv, norm)) in scale.convs.iter().enumerate() {
                let lname = format!("{}.scale{s}.conv{l}", self.name);
                conv.register(&lname, &mut out);
                if let Some(n) = norm {
                    n.register(&format!("{lname}.norm"), &mut out);
                }
            }
            conv_register(&scale.proj, &format!("{}.scale{s}.proj", self.name), &mut out);
        }
        out
    }

    pub fn layer_inventory(&self) -> LayerInventory {
        let mut inv = LayerInventory::default();
        for (s, scale) in self.scales.iter().enumerate() {
            if s > 0 {
                inv.record(LayerKind::AvgPool, 1);
            }
            for (_, norm) in &scale.convs {
                inv.record(LayerKind::Conv, 1);
                inv.record(LayerKind::InstanceNorm, norm.is_some() as usize);
            }
            inv.record(LayerKind::Conv, 1);
        }
        inv
    }
}

fn conv_register(conv: &Conv2d, prefix: &str, out: &mut Vec<(String, Var)>) {
    conv.register(prefix, out);
}
