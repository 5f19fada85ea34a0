//! The two-domain generator pair.
//!
//! Each domain owns a private encoder stem (strided convolutions) and a
//! private decoder tail (nearest-neighbor upsampling + stride-1
//! convolutions). The residual blocks nearest the latent code — the high
//! level layers of both encoder and decoder — are shared between the two
//! domains when `share_weights` is on: both paths hold clones of the same
//! `Var`s, so one optimizer step moves both.

use candle_core::{DType, Device, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::nn::{
    leaky_relu, upsample_nearest, Conv2d, InstanceNorm, LayerInventory, LayerKind, PadMode,
    ResidualBlock,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    A,
    B,
}

impl Domain {
    pub fn other(self) -> Domain {
        match self {
            Domain::A => Domain::B,
            Domain::B => Domain::A,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Domain::A => "a",
            Domain::B => "b",
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// One image patch: a `(channels, height, width)` tensor with every value
/// in `[-1, 1]`. All model entry points take and return this type.
#[derive(Debug, Clone)]
pub struct ImagePatch(Tensor);

impl ImagePatch {
    pub fn new(t: Tensor) -> Result<Self> {
        if t.dims().len() != 3 {
            return Err(Error::Dimension(format!(
                "image patch must be (channels, height, width), got {:?}",
                t.dims()
            )));
        }
        let min = t.min_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        let max = t.max_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        if !min.is_finite() || !max.is_finite() || min < -1.0 - 1e-5 || max > 1.0 + 1e-5 {
            return Err(Error::Numeric(format!(
                "image patch values must lie in [-1, 1], got range [{min}, {max}]"
            )));
        }
        Ok(Self(t))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    /// (channels, height, width)
    pub fn dims(&self) -> (usize, usize, usize) {
        let d = self.0.dims();
        (d[0], d[1], d[2])
    }
}

/// Latent feature map produced by an encoder.
#[derive(Debug, Clone)]
pub struct LatentCode {
    pub features: Tensor,
    pub source_domain: Domain,
}

impl LatentCode {
    /// Spatial edge length of the latent map.
    pub fn extent(&self) -> usize {
        let d = self.features.dims();
        d[d.len() - 1]
    }
}

fn default_in_channels() -> usize {
    3
}
fn default_base_width() -> usize {
    64
}
fn default_num_downsamples() -> usize {
    4
}
fn default_num_shared_blocks() -> usize {
    2
}
fn default_patch_size() -> usize {
    256
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    #[serde(default = "default_in_channels")]
    pub in_channels: usize,
    /// Channels after the first strided convolution; doubles per
    /// downsample, capped at 8x.
    #[serde(default = "default_base_width")]
    pub base_width: usize,
    #[serde(default = "default_num_downsamples")]
    pub num_downsamples: usize,
    #[serde(default = "default_num_shared_blocks")]
    pub num_shared_blocks: usize,
    #[serde(default = "default_patch_size")]
    pub patch_size: usize,
    #[serde(default = "default_true")]
    pub share_weights: bool,
    /// Instance normalization inside generator blocks.
    #[serde(default = "default_true")]
    pub use_norm: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            in_channels: default_in_channels(),
            base_width: default_base_width(),
            num_downsamples: default_num_downsamples(),
            num_shared_blocks: default_num_shared_blocks(),
            patch_size: default_patch_size(),
            share_weights: true,
            use_norm: true,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.base_width == 0 {
            return Err(Error::Config("channel widths must be nonzero".into()));
        }
        if self.num_downsamples == 0 {
            return Err(Error::Config("num_downsamples must be at least 1".into()));
        }
        let factor = 1usize << self.num_downsamples;
        if self.patch_size == 0 || self.patch_size % factor != 0 {
            return Err(Error::Config(format!(
                "patch_size {} must be divisible by 2^num_downsamples = {}",
                self.patch_size, factor
            )));
        }
        if self.share_weights && self.num_shared_blocks == 0 {
            return Err(Error::Config(
                "num_shared_blocks must be at least 1 when share_weights is on".into(),
            ));
        }
        Ok(())
    }

    /// Channel count after each downsample stage.
    pub fn channel_schedule(&self) -> Vec<usize> {
        (0..self.num_downsamples)
            .map(|i| self.base_width * (1usize << i).min(8))
            .collect()
    }

    pub fn latent_channels(&self) -> usize {
        *self.channel_schedule().last().expect("at least one downsample")
    }

    pub fn latent_extent(&self) -> usize {
        self.patch_size >> self.num_downsamples
    }
}

struct DownStage {
    conv: Conv2d,
    norm: Option<InstanceNorm>,
}

pub struct Encoder {
    stem: Vec<DownStage>,
    shared: Vec<ResidualBlock>,
}

impl Encoder {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for stage in &self.stem {
            h = stage.conv.forward(&h)?;
            if let Some(n) = &stage.norm {
                h = n.forward(&h)?;
            }
            h = leaky_relu(&h, 0.2)?;
        }
        for block in &self.shared {
            h = block.forward(&h)?;
        }
        Ok(h)
    }
}

struct UpStage {
    conv: Conv2d,
    norm: Option<InstanceNorm>,
    /// Final stage: tanh instead of norm + relu.
    output: bool,
}

pub struct Decoder {
    shared: Vec<ResidualBlock>,
    up: Vec<UpStage>,
}

impl Decoder {
    fn forward(&self, z: &Tensor) -> Result<Tensor> {
        let mut h = z.clone();
        for block in &self.shared {
            h = block.forward(&h)?;
        }
        for stage in &self.up {
            h = upsample_nearest(&h)?;
            h = stage.conv.forward(&h)?;
            if stage.output {
                h = h.tanh()?;
            } else {
                if let Some(n) = &stage.norm {
                    h = n.forward(&h)?;
                }
                h = h.relu()?;
            }
        }
        Ok(h)
    }
}

pub struct GeneratorPair {
    encoder_a: Encoder,
    encoder_b: Encoder,
    decoder_a: Decoder,
    decoder_b: Decoder,
    pub config: GeneratorConfig,
    pub seed: u64,
    dtype: DType,
}

fn build_encoder(
    config: &GeneratorConfig,
    seed: u64,
    domain: Domain,
    shared: &[ResidualBlock],
    dtype: DType,
    dev: &Device,
) -> Result<Encoder> {
    let sched = config.channel_schedule();
    let mut stem = Vec::with_capacity(config.num_downsamples);
    let mut in_ch = config.in_channels;
    for (i, &out_ch) in sched.iter().enumerate() {
        let name = format!("encoder_{}.down{}", domain.tag(), i);
        let conv = Conv2d::new(
            seed,
            &format!("{name}.conv"),
            in_ch,
            out_ch,
            3,
            2,
            PadMode::Reflect(1),
            dtype,
            dev,
        )?;
        let norm = if config.use_norm {
            Some(InstanceNorm::new(seed, &format!("{name}.norm"), out_ch, dtype, dev)?)
        } else {
            None
        };
        stem.push(DownStage { conv, norm });
        in_ch = out_ch;
    }
    Ok(Encoder { stem, shared: shared.to_vec() })
}

fn build_decoder(
    config: &GeneratorConfig,
    seed: u64,
    domain: Domain,
    shared: &[ResidualBlock],
    dtype: DType,
    dev: &Device,
) -> Result<Decoder> {
    let sched = config.channel_schedule();
    let mut up = Vec::with_capacity(config.num_downsamples);
    let mut in_ch = config.latent_channels();
    for i in 0..config.num_downsamples {
        let output = i + 1 == config.num_downsamples;
        let out_ch = if output {
            config.in_channels
        } else {
            sched[config.num_downsamples - 2 - i]
        };
        let name = format!("decoder_{}.up{}", domain.tag(), i);
        let conv = Conv2d::new(
            seed,
            &format!("{name}.conv"),
            in_ch,
            out_ch,
            3,
            1,
            PadMode::Reflect(1),
            dtype,
            dev,
        )?;
        let norm = if config.use_norm && !output {
            Some(InstanceNorm::new(seed, &format!("{name}.norm"), out_ch, dtype, dev)?)
        } else {
            None
        };
        up.push(UpStage { conv, norm, output });
        in_ch = out_ch;
    }
    Ok(Decoder { shared: shared.to_vec(), up })
}

fn build_shared_blocks(
    config: &GeneratorConfig,
    seed: u64,
    name: &str,
    dtype: DType,
    dev: &Device,
) -> Result<Vec<ResidualBlock>> {
    let ch = config.latent_channels();
    (0..config.num_shared_blocks)
        .map(|i| ResidualBlock::new(seed, &format!("{name}.block{i}"), ch, config.use_norm, dtype, dev))
        .collect()
}

pub fn build_generator_pair(config: &GeneratorConfig, seed: u64) -> Result<GeneratorPair> {
    GeneratorPair::new(config, seed, DType::F32, &Device::Cpu)
}

impl GeneratorPair {
    pub fn new(config: &GeneratorConfig, seed: u64, dtype: DType, dev: &Device) -> Result<Self> {
        config.validate()?;
        // The untied variant still initializes from the tied names so both
        // builds start from identical values and differ only in aliasing.
        let enc_shared = build_shared_blocks(config, seed, "shared_encoder", dtype, dev)?;
        let dec_shared = build_shared_blocks(config, seed, "shared_decoder", dtype, dev)?;
        let (enc_shared_b, dec_shared_b) = if config.share_weights {
            (enc_shared.clone(), dec_shared.clone())
        } else {
            (
                build_shared_blocks(config, seed, "shared_encoder", dtype, dev)?,
                build_shared_blocks(config, seed, "shared_decoder", dtype, dev)?,
            )
        };
        Ok(Self {
            encoder_a: build_encoder(config, seed, Domain::A, &enc_shared, dtype, dev)?,
            encoder_b: build_encoder(config, seed, Domain::B, &enc_shared_b, dtype, dev)?,
            decoder_a: build_decoder(config, seed, Domain::A, &dec_shared, dtype, dev)?,
            decoder_b: build_decoder(config, seed, Domain::B, &dec_shared_b, dtype, dev)?,
            config: config.clone(),
            seed,
            dtype,
        })
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    fn encoder(&self, domain: Domain) -> &Encoder {
        match domain {
            Domain::A => &self.encoder_a,
            Domain::B => &self.encoder_b,
        }
    }

    fn decoder(&self, domain: Domain) -> &Decoder {
        match domain {
            Domain::A => &self.decoder_a,
            Domain::B => &self.decoder_b,
        }
    }

    fn check_patch(&self, image: &ImagePatch) -> Result<()> {
        let (c, h, w) = image.dims();
        let want = (self.config.in_channels, self.config.patch_size, self.config.patch_size);
        if (c, h, w) != want {
            return Err(Error::Dimension(format!(
                "patch shape ({c}, {h}, {w}) does not match model ({}, {}, {})",
                want.0, want.1, want.2
            )));
        }
        Ok(())
    }

    /// Batched encoder pass on a `(batch, channels, h, w)` tensor.
    pub fn encode_batch(&self, domain: Domain, x: &Tensor) -> Result<Tensor> {
        self.encoder(domain).forward(x)
    }

    /// Batched decoder pass producing `(batch, channels, h, w)` in [-1, 1].
    pub fn decode_batch(&self, domain: Domain, z: &Tensor) -> Result<Tensor> {
        let extent = z.dims()[z.dims().len() - 1];
        let (want_c, want_e) = (self.config.latent_channels(), self.config.latent_extent());
        if z.dims()[1] != want_c || extent != want_e {
            return Err(Error::Dimension(format!(
                "latent shape {:?} does not match model ({want_c} channels, {want_e} extent)",
                z.dims()
            )));
        }
        self.decoder(domain).forward(z)
    }

    pub fn encode(&self, domain: Domain, image: &ImagePatch) -> Result<LatentCode> {
        self.check_patch(image)?;
        let z = self.encode_batch(domain, &image.tensor().unsqueeze(0)?)?;
        Ok(LatentCode { features: z.squeeze(0)?, source_domain: domain })
    }

    pub fn decode(&self, domain: Domain, latent: &LatentCode) -> Result<ImagePatch> {
        let x = self.decode_batch(domain, &latent.features.unsqueeze(0)?)?;
        ImagePatch::new(x.squeeze(0)?)
    }

    /// Map a patch from `src_domain` into the other domain:
    /// encode with the source encoder, decode with the target decoder.
    pub fn translate(&self, src_domain: Domain, image: &ImagePatch) -> Result<ImagePatch> {
        let z = self.encode(src_domain, image)?;
        self.decode(src_domain.other(), &z)
    }

    /// Translate into the other domain and recover the source through the
    /// opposite encoder/decoder pair. Returns `(translated, recovered)`.
    pub fn cross_cycle(
        &self,
        src_domain: Domain,
        image: &ImagePatch,
    ) -> Result<(ImagePatch, ImagePatch)> {
        let translated = self.translate(src_domain, image)?;
        let z_back = self.encode(src_domain.other(), &translated)?;
        let recovered = self.decode(src_domain, &z_back)?;
        Ok((translated, recovered))
    }

    /// In-domain round trip through encoder and decoder.
    pub fn reconstruct(&self, domain: Domain, image: &ImagePatch) -> Result<ImagePatch> {
        let z = self.encode(domain, image)?;
        self.decode(domain, &z)
    }

    /// All parameters keyed by hierarchical name. Shared blocks appear
    /// once, under their canonical `shared_*` names, when tying is on.
    pub fn named_params(&self) -> Vec<(String, Var)> {
        let mut out = Vec::new();
        for (domain, enc) in [(Domain::A, &self.encoder_a), (Domain::B, &self.encoder_b)] {
            for (i, stage) in enc.stem.iter().enumerate() {
                let name = format!("generator.encoder_{}.down{}", domain.tag(), i);
                stage.conv.register(&format!("{name}.conv"), &mut out);
                if let Some(n) = &stage.norm {
                    n.register(&format!("{name}.norm"), &mut out);
                }
            }
        }
        if self.config.share_weights {
            for (i, block) in self.encoder_a.shared.iter().enumerate() {
                block.register(&format!("generator.shared_encoder.block{i}"), &mut out);
            }
            for (i, block) in self.decoder_a.shared.iter().enumerate() {
                block.register(&format!("generator.shared_decoder.block{i}"), &mut out);
            }
        } else {
            for (domain, enc) in [(Domain::A, &self.encoder_a), (Domain::B, &self.encoder_b)] {
                for (i, block) in enc.shared.iter().enumerate() {
                    block.register(
                        &format!("generator.encoder_{}.shared.block{i}", domain.tag()),
                        &mut out,
                    );
                }
            }
            for (domain, dec) in [(Domain::A, &self.decoder_a), (Domain::B, &self.decoder_b)] {
                for (i, block) in dec.shared.iter().enumerate() {
                    block.register(
                        &format!("generator.decoder_{}.shared.block{i}", domain.tag()),
                        &mut out,
                    );
                }
            }
        }
        for (domain, dec) in [(Domain::A, &self.decoder_a), (Domain::B, &self.decoder_b)] {
            for (i, stage) in dec.up.iter().enumerate() {
                let name = format!("generator.decoder_{}.up{}", domain.tag(), i);
                stage.conv.register(&format!("{name}.conv"), &mut out);
                if let Some(n) = &stage.norm {
                    n.register(&format!("{name}.norm"), &mut out);
                }
            }
        }
        out
    }

    /// Shared residual-block parameters as reached through one domain's
    /// encoder path. With tying on, the two domains alias the same `Var`s.
    pub fn shared_encoder_params(&self, domain: Domain) -> Vec<Var> {
        let mut named = Vec::new();
        for (i, block) in self.encoder(domain).shared.iter().enumerate() {
            block.register(&format!("block{i}"), &mut named);
        }
        named.into_iter().map(|(_, v)| v).collect()
    }

    /// Shared residual-block parameters via one domain's decoder path.
    pub fn shared_decoder_params(&self, domain: Domain) -> Vec<Var> {
        let mut named = Vec::new();
        for (i, block) in self.decoder(domain).shared.iter().enumerate() {
            block.register(&format!("block{i}"), &mut named);
        }
        named.into_iter().map(|(_, v)| v).collect()
    }

    /// Parameters private to one domain path (stem and upsampling convs,
    /// plus untied shared blocks), excluding anything aliased by the
    /// other domain.
    pub fn private_params(&self, domain: Domain) -> Vec<(String, Var)> {
        let tag = format!("_{}", domain.tag());
        self.named_params()
            .into_iter()
            .filter(|(name, _)| name.contains(&tag))
            .collect()
    }

    pub fn layer_inventory(&self) -> LayerInventory {
        let mut inv = LayerInventory::default();
        for enc in [&self.encoder_a, &self.encoder_b] {
            for stage in &enc.stem {
                inv.record(LayerKind::Conv, 1);
                inv.record(LayerKind::InstanceNorm, stage.norm.is_some() as usize);
            }
            for block in &enc.shared {
                block.inventory(&mut inv);
            }
        }
        for dec in [&self.decoder_a, &self.decoder_b] {
            for block in &dec.shared {
                block.inventory(&mut inv);
            }
            for stage in &dec.up {
                inv.record(LayerKind::NearestUpsample, 1);
                inv.record(LayerKind::Conv, 1);
                inv.record(LayerKind::InstanceNorm, stage.norm.is_some() as usize);
            }
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config() -> GeneratorConfig {
        GeneratorConfig {
            base_width: 8,
            num_downsamples: 3,
            patch_size: 64,
            ..GeneratorConfig::default()
        }
    }

    fn random_patch(seed: u64, channels: usize, size: usize) -> ImagePatch {
        let v = crate::nn::normal_var(
            seed,
            "test_patch",
            0.0,
            0.3,
            &[channels, size, size],
            DType::F32,
            &Device::Cpu,
        )
        .unwrap();
        ImagePatch::new(v.as_tensor().clamp(-1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn default_config_latent_extent_is_16() {
        let cfg = GeneratorConfig::default();
        assert_eq!(cfg.latent_extent(), 16);
        assert_eq!(cfg.channel_schedule(), vec![64, 128, 256, 512]);
    }

    #[test]
    fn config_validation_rejects_bad_patch_size() {
        let cfg = GeneratorConfig { patch_size: 100, ..GeneratorConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = GeneratorConfig { base_width: 0, ..GeneratorConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = GeneratorConfig {
            num_shared_blocks: 0,
            share_weights: true,
            ..GeneratorConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn encode_shapes_follow_downsampling() {
        let pair = build_generator_pair(&toy_config(), 3).unwrap();
        let z = pair.encode(Domain::A, &random_patch(0, 3, 64)).unwrap();
        assert_eq!(z.extent(), 8);
        assert_eq!(z.features.dims(), [8 * 4, 8, 8]);
        assert_eq!(z.source_domain, Domain::A);
    }

    #[test]
    fn encode_rejects_wrong_shape() {
        let pair = build_generator_pair(&toy_config(), 3).unwrap();
        let patch = random_patch(0, 3, 32);
        assert!(matches!(pair.encode(Domain::A, &patch), Err(Error::Dimension(_))));
    }

    #[test]
    fn construction_is_deterministic() {
        let cfg = toy_config();
        let p1 = build_generator_pair(&cfg, 11).unwrap();
        let p2 = build_generator_pair(&cfg, 11).unwrap();
        for ((n1, v1), (n2, v2)) in p1.named_params().iter().zip(p2.named_params().iter()) {
            assert_eq!(n1, n2);
            let a = v1.as_tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap();
            let b = v2.as_tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap();
            assert_eq!(a, b, "parameter {n1} differs between same-seed builds");
        }
        let p3 = build_generator_pair(&cfg, 12).unwrap();
        let a = p1.named_params()[0].1.as_tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        let b = p3.named_params()[0].1.as_tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn tied_shared_blocks_alias_the_same_storage() {
        let pair = build_generator_pair(&toy_config(), 5).unwrap();
        let via_a = pair.shared_encoder_params(Domain::A);
        let via_b = pair.shared_encoder_params(Domain::B);
        assert!(!via_a.is_empty());
        for (va, vb) in via_a.iter().zip(via_b.iter()) {
            assert_eq!(va.as_tensor().id(), vb.as_tensor().id());
        }
        // Writing through one path is visible through the other.
        let zero = Tensor::zeros(via_a[0].as_tensor().dims(), DType::F32, &Device::Cpu).unwrap();
        via_a[0].set(&zero).unwrap();
        let seen = via_b[0].as_tensor().abs().unwrap().sum_all().unwrap().to_scalar::<f32>().unwrap();
        assert_eq!(seen, 0.0);
    }

    #[test]
    fn untied_shared_blocks_are_distinct_but_equal_at_init() {
        let cfg = GeneratorConfig { share_weights: false, ..toy_config() };
        let pair = build_generator_pair(&cfg, 5).unwrap();
        let via_a = pair.shared_encoder_params(Domain::A);
        let via_b = pair.shared_encoder_params(Domain::B);
        for (va, vb) in via_a.iter().zip(via_b.iter()) {
            assert_ne!(va.as_tensor().id(), vb.as_tensor().id());
            let a = va.as_tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap();
            let b = vb.as_tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap();
            assert_eq!(a, b, "untied blocks start from the same values");
        }
    }

    #[test]
    fn decode_round_trip_preserves_shape_and_range() {
        let pair = build_generator_pair(&toy_config(), 7).unwrap();
        let x = random_patch(1, 3, 64);
        let z = pair.encode(Domain::A, &x).unwrap();
        let y = pair.decode(Domain::A, &z).unwrap();
        assert_eq!(y.dims(), x.dims());
        let min = y.tensor().min_all().unwrap().to_scalar::<f32>().unwrap();
        let max = y.tensor().max_all().unwrap().to_scalar::<f32>().unwrap();
        assert!(min >= -1.0 && max <= 1.0);
    }

    #[test]
    fn decode_rejects_wrong_latent_extent() {
        let pair = build_generator_pair(&toy_config(), 7).unwrap();
        let bad = LatentCode {
            features: Tensor::zeros((32, 4, 4), DType::F32, &Device::Cpu).unwrap(),
            source_domain: Domain::A,
        };
        assert!(matches!(pair.decode(Domain::A, &bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn translate_equals_encode_then_other_decode() {
        let pair = build_generator_pair(&toy_config(), 9).unwrap();
        let x = random_patch(2, 3, 64);
        let t = pair.translate(Domain::A, &x).unwrap();
        let z = pair.encode(Domain::A, &x).unwrap();
        let manual = pair.decode(Domain::B, &z).unwrap();
        let a = t.tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        let b = manual.tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_paths_are_deterministic() {
        let pair = build_generator_pair(&toy_config(), 13).unwrap();
        let x = random_patch(3, 3, 64);
        let (t1, r1) = pair.cross_cycle(Domain::A, &x).unwrap();
        let (t2, r2) = pair.cross_cycle(Domain::A, &x).unwrap();
        for (p, q) in [(&t1, &t2), (&r1, &r2)] {
            let a = p.tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap();
            let b = q.tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(t1.dims(), x.dims());
        assert_eq!(r1.dims(), x.dims());
    }

    #[test]
    fn inventory_has_no_transposed_convs() {
        let pair = build_generator_pair(&GeneratorConfig::default(), 1).unwrap();
        let inv = pair.layer_inventory();
        assert_eq!(inv.transposed_conv, 0);
        assert!(inv.nearest_upsample > 0);
        assert!(inv.conv > 0);
    }

    #[test]
    fn shape_contract_holds_for_all_depths() {
        for nd in [3usize, 4, 5] {
            let cfg = GeneratorConfig {
                base_width: 4,
                num_downsamples: nd,
                patch_size: 64,
                ..GeneratorConfig::default()
            };
            let pair = build_generator_pair(&cfg, 2).unwrap();
            let x = random_patch(4, 3, 64);
            let z = pair.encode(Domain::B, &x).unwrap();
            assert_eq!(z.extent(), 64 >> nd);
            let y = pair.translate(Domain::B, &x).unwrap();
            assert_eq!(y.dims(), x.dims());
        }
    }
}
