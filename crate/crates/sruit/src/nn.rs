//! Minimal convolutional building blocks on top of candle tensors.
//!
//! Parameters are plain [`Var`]s initialized from a ChaCha stream keyed by
//! `(seed, parameter name)`, so construction is deterministic and
//! independent of build order. Sharing a block between two network paths
//! is done by cloning it: `Var` clones alias the same storage, so both
//! paths read and update the very same parameter object.

use candle_core::{DType, Device, Tensor, Var, D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::Result;

/// Kinds of layers a network can instantiate, used for structural
/// assertions on the assembled graph (e.g. "no strided transposed
/// convolutions anywhere").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    TransposedConv,
    InstanceNorm,
    NearestUpsample,
    AvgPool,
}

/// Counts of instantiated layers per kind.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct LayerInventory {
    pub conv: usize,
    pub transposed_conv: usize,
    pub instance_norm: usize,
    pub nearest_upsample: usize,
    pub avg_pool: usize,
}

impl LayerInventory {
    pub fn record(&mut self, kind: LayerKind, n: usize) {
        match kind {
            LayerKind::Conv => self.conv += n,
            LayerKind::TransposedConv => self.transposed_conv += n,
            LayerKind::InstanceNorm => self.instance_norm += n,
            LayerKind::NearestUpsample => self.nearest_upsample += n,
            LayerKind::AvgPool => self.avg_pool += n,
        }
    }
}

/// Deterministic RNG stream keyed by `(seed, name)`. All randomness in
/// the crate flows from one top-level seed through these named streams.
pub fn derive_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Box-Muller samples; used instead of a distribution crate so the byte
/// stream behind every parameter stays pinned to this one routine.
fn normal_samples(rng: &mut ChaCha8Rng, n: usize, mean: f64, std: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        out.push(mean + std * r * theta.cos());
        if out.len() < n {
            out.push(mean + std * r * theta.sin());
        }
    }
    out
}

pub fn normal_var(
    seed: u64,
    name: &str,
    mean: f64,
    std: f64,
    shape: &[usize],
    dtype: DType,
    dev: &Device,
) -> Result<Var> {
    let n: usize = shape.iter().product();
    let mut rng = derive_rng(seed, name);
    let samples = normal_samples(&mut rng, n, mean, std);
    let t = Tensor::from_vec(samples, shape, dev)?.to_dtype(dtype)?;
    Ok(Var::from_tensor(&t)?)
}

pub fn zeros_var(shape: &[usize], dtype: DType, dev: &Device) -> Result<Var> {
    Ok(Var::from_tensor(&Tensor::zeros(shape, dtype, dev)?)?)
}

/// `max(x, 0) + slope * min(x, 0)`.
pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    let pos = x.relu()?;
    let neg = x.neg()?.relu()?;
    Ok((pos - (neg * slope)?)?)
}

/// Numerically stable `log(1 + exp(x))`.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let pos = x.relu()?;
    let small = x.abs()?.neg()?.exp()?;
    Ok((pos + (small + 1.0)?.log()?)?)
}

/// Reflection-pad the two trailing (spatial) dimensions by `pad` on each
/// side, excluding the edge sample from the mirror.
pub fn reflect_pad2d(x: &Tensor, pad: usize) -> Result<Tensor> {
    if pad == 0 {
        return Ok(x.clone());
    }
    let dims = x.dims();
    let (h, w) = (dims[dims.len() - 2], dims[dims.len() - 1]);
    let idx_h = Tensor::from_vec(reflect_indices(h, pad)?, h + 2 * pad, x.device())?;
    let idx_w = Tensor::from_vec(reflect_indices(w, pad)?, w + 2 * pad, x.device())?;
    let x = x.index_select(&idx_h, D::Minus2)?;
    Ok(x.index_select(&idx_w, D::Minus1)?)
}

fn reflect_indices(len: usize, pad: usize) -> Result<Vec<u32>> {
    if len <= pad {
        return Err(crate::Error::Dimension(format!(
            "cannot reflection-pad extent {len} by {pad}"
        )));
    }
    let mut idx = Vec::with_capacity(len + 2 * pad);
    for i in (1..=pad).rev() {
        idx.push(i as u32);
    }
    for i in 0..len {
        idx.push(i as u32);
    }
    for i in 0..pad {
        idx.push((len - 2 - i) as u32);
    }
    Ok(idx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Zero(usize),
    Reflect(usize),
}

/// Ordinary 2-D convolution. There is deliberately no transposed variant
/// in this crate; upsampling paths use [`upsample_nearest`] + stride-1
/// convolution instead.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Var,
    pub bias: Var,
    pub stride: usize,
    pub pad: PadMode,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        seed: u64,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: PadMode,
        dtype: DType,
        dev: &Device,
    ) -> Result<Self> {
        let weight = normal_var(
            seed,
            &format!("{name}.weight"),
            0.0,
            0.02,
            &[out_ch, in_ch, kernel, kernel],
            dtype,
            dev,
        )?;
        let bias = zeros_var(&[out_ch], dtype, dev)?;
        Ok(Self { weight, bias, stride, pad })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (x, zero_pad) = match self.pad {
            PadMode::Zero(p) => (x.clone(), p),
            PadMode::Reflect(p) => (reflect_pad2d(x, p)?, 0),
        };
        let y = x.conv2d(self.weight.as_tensor(), zero_pad, self.stride, 1, 1)?;
        let out_ch = self.bias.as_tensor().dim(0)?;
        Ok(y.broadcast_add(&self.bias.as_tensor().reshape((1, out_ch, 1, 1))?)?)
    }

    pub fn register(&self, prefix: &str, out: &mut Vec<(String, Var)>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }
}

/// Per-sample, per-channel normalization with learnable affine.
#[derive(Debug, Clone)]
pub struct InstanceNorm {
    pub gamma: Var,
    pub beta: Var,
    pub eps: f64,
}

impl InstanceNorm {
    pub fn new(seed: u64, name: &str, channels: usize, dtype: DType, dev: &Device) -> Result<Self> {
        let gamma = normal_var(seed, &format!("{name}.gamma"), 1.0, 0.02, &[channels], dtype, dev)?;
        let beta = zeros_var(&[channels], dtype, dev)?;
        Ok(Self { gamma, beta, eps: 1e-5 })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let c = x.dim(1)?;
        let mean = x.mean_keepdim((2, 3))?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim((2, 3))?;
        let norm = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        let gamma = self.gamma.as_tensor().reshape((1, c, 1, 1))?;
        let beta = self.beta.as_tensor().reshape((1, c, 1, 1))?;
        Ok(norm.broadcast_mul(&gamma)?.broadcast_add(&beta)?)
    }

    pub fn register(&self, prefix: &str, out: &mut Vec<(String, Var)>) {
        out.push((format!("{prefix}.gamma"), self.gamma.clone()));
        out.push((format!("{prefix}.beta"), self.beta.clone()));
    }
}

/// Two 3x3 reflect-padded convolutions with a skip connection; the shape
/// and channel count pass through unchanged.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub norm1: Option<InstanceNorm>,
    pub conv2: Conv2d,
    pub norm2: Option<InstanceNorm>,
}

impl ResidualBlock {
    pub fn new(
        seed: u64,
        name: &str,
        channels: usize,
        use_norm: bool,
        dtype: DType,
        dev: &Device,
    ) -> Result<Self> {
        let mk_norm = |suffix: &str| -> Result<Option<InstanceNorm>> {
            if use_norm {
                Ok(Some(InstanceNorm::new(seed, &format!("{name}.{suffix}"), channels, dtype, dev)?))
            } else {
                Ok(None)
            }
        };
        Ok(Self {
            conv1: Conv2d::new(
                seed,
                &format!("{name}.conv1"),
                channels,
                channels,
                3,
                1,
                PadMode::Reflect(1),
                dtype,
                dev,
            )?,
            norm1: mk_norm("norm1")?,
            conv2: Conv2d::new(
                seed,
                &format!("{name}.conv2"),
                channels,
                channels,
                3,
                1,
                PadMode::Reflect(1),
                dtype,
                dev,
            )?,
            norm2: mk_norm("norm2")?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.conv1.forward(x)?;
        if let Some(n) = &self.norm1 {
            h = n.forward(&h)?;
        }
        h = h.relu()?;
        h = self.conv2.forward(&h)?;
        if let Some(n) = &self.norm2 {
            h = n.forward(&h)?;
        }
        Ok((h + x)?)
    }

    pub fn register(&self, prefix: &str, out: &mut Vec<(String, Var)>) {
        self.conv1.register(&format!("{prefix}.conv1"), out);
        if let Some(n) = &self.norm1 {
            n.register(&format!("{prefix}.norm1"), out);
        }
        self.conv2.register(&format!("{prefix}.conv2"), out);
        if let Some(n) = &self.norm2 {
            n.register(&format!("{prefix}.norm2"), out);
        }
    }

    pub fn inventory(&self, inv: &mut LayerInventory) {
        inv.record(LayerKind::Conv, 2);
        let norms = self.norm1.is_some() as usize + self.norm2.is_some() as usize;
        inv.record(LayerKind::InstanceNorm, norms);
    }
}

/// Nearest-neighbor 2x upsampling.
pub fn upsample_nearest(x: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    Ok(x.upsample_nearest2d(h * 2, w * 2)?)
}
