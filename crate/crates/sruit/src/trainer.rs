//! Alternating adversarial training of the generator pair and the two
//! conditional discriminators.
//!
//! Every step runs one discriminator update on real pairs versus detached
//! fakes, then one generator update on the full weighted objective with
//! the freshly updated discriminators. All shuffling derives from the run
//! seed and the epoch index, so training is reproducible and a checkpoint
//! resume continues bit-identically.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use candle_core::backprop::GradStore;
use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{read_archive, write_archive, ArchiveMeta, TensorData, FORMAT_VERSION};
use crate::data::{normalize, DatasetManifest, PairedPatchSample};
use crate::discriminator::{DiscriminatorConfig, MultiScaleDiscriminator};
use crate::losses::{
    adversarial_loss_discriminator_t, adversarial_loss_generator_t, l1_mean_t, LossReport,
    LossWeights,
};
use crate::model::{Domain, GeneratorConfig, GeneratorPair};
use crate::nn::derive_rng;
use crate::{Error, Result};

fn default_lr() -> f64 {
    2e-4
}
fn default_beta1() -> f64 {
    0.5
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epochs() -> usize {
    200
}
fn default_batch_size() -> usize {
    1
}
fn default_checkpoint_interval() -> usize {
    25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub loss_weights: LossWeights,
    /// Save a checkpoint every this many epochs (plus a final one).
    #[serde(default = "default_checkpoint_interval")]
    pub checkpoint_interval: usize,
    /// Linearly decay the learning rate to zero over the second half of
    /// the run. Off by default.
    #[serde(default)]
    pub linear_lr_decay: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            seed: 0,
            loss_weights: LossWeights::default(),
            checkpoint_interval: default_checkpoint_interval(),
            linear_lr_decay: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::Config("checkpoint_interval must be at least 1".into()));
        }
        self.loss_weights.validate()
    }

    /// Per-epoch learning rate under the optional linear decay.
    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        if !self.linear_lr_decay || self.epochs == 0 {
            return self.learning_rate;
        }
        let decay_start = self.epochs / 2;
        if epoch < decay_start {
            return self.learning_rate;
        }
        let span = (self.epochs - decay_start) as f64;
        let remaining = (self.epochs - epoch) as f64;
        self.learning_rate * (remaining / span).clamp(0.0, 1.0)
    }
}

/// Adam with bias correction over a fixed list of named parameters.
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Completed steps (1-based inside the update math).
    pub t: usize,
    slots: Vec<AdamSlot>,
}

struct AdamSlot {
    name: String,
    m: Tensor,
    v: Tensor,
}

impl Adam {
    pub fn new(params: &[(String, Var)], beta1: f64, beta2: f64) -> Result<Self> {
        let slots = params
            .iter()
            .map(|(name, var)| {
                Ok(AdamSlot {
                    name: name.clone(),
                    m: Tensor::zeros(var.shape(), var.dtype(), var.device())?,
                    v: Tensor::zeros(var.shape(), var.dtype(), var.device())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { beta1, beta2, eps: 1e-8, t: 0, slots })
    }

    /// One update over the owned parameter list. Parameters missing from
    /// the gradient store are left untouched.
    pub fn step(&mut self, lr: f64, params: &[(String, Var)], grads: &GradStore) -> Result<()> {
        debug_assert_eq!(params.len(), self.slots.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((_, var), slot) in params.iter().zip(self.slots.iter_mut()) {
            let Some(grad) = grads.get(var.as_tensor()) else {
                continue;
            };
            slot.m = (slot.m.affine(self.beta1, 0.0)? + grad.affine(1.0 - self.beta1, 0.0)?)?;
            slot.v = (slot.v.affine(self.beta2, 0.0)? + grad.sqr()?.affine(1.0 - self.beta2, 0.0)?)?;
            let m_hat = slot.m.affine(1.0 / bc1, 0.0)?;
            let v_hat = slot.v.affine(1.0 / bc2, 0.0)?;
            let delta = (m_hat.affine(lr, 0.0)? / (v_hat.sqrt()? + self.eps)?)?;
            var.set(&(var.as_tensor() - delta)?)?;
        }
        Ok(())
    }

    fn export(&self, prefix: &str, out: &mut TensorData) -> Result<()> {
        for slot in &self.slots {
            for (suffix, t) in [("m", &slot.m), ("v", &slot.v)] {
                out.push((
                    format!("{prefix}.{}.{suffix}", slot.name),
                    t.dims().to_vec(),
                    t.flatten_all()?.to_vec1::<f32>()?,
                ));
            }
        }
        Ok(())
    }

    fn import(
        &mut self,
        prefix: &str,
        t: usize,
        tensors: &std::collections::HashMap<String, (Vec<usize>, Vec<f32>)>,
        dev: &Device,
    ) -> Result<()> {
        self.t = t;
        for slot in &mut self.slots {
            for (suffix, target) in [("m", &mut slot.m), ("v", &mut slot.v)] {
                let key = format!("{prefix}.{}.{suffix}", slot.name);
                let (shape, values) = tensors
                    .get(&key)
                    .ok_or_else(|| Error::Integrity(format!("checkpoint missing tensor {key}")))?;
                if shape.as_slice() != target.dims() {
                    return Err(Error::Integrity(format!(
                        "tensor {key}: shape {shape:?} does not match expected {:?}",
                        target.dims()
                    )));
                }
                *target = Tensor::from_vec(values.clone(), shape.as_slice(), dev)?;
            }
        }
        Ok(())
    }
}

/// Everything needed to continue training from an exact point.
pub struct TrainState {
    /// Completed optimizer steps.
    pub step: usize,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed batches inside the current epoch.
    pub step_in_epoch: usize,
    pub pair: GeneratorPair,
    pub disc_a: MultiScaleDiscriminator,
    pub disc_b: MultiScaleDiscriminator,
    pub opt_gen: Adam,
    pub opt_disc: Adam,
    pub train_config: TrainConfig,
    gen_params: Vec<(String, Var)>,
    disc_params: Vec<(String, Var)>,
}

impl TrainState {
    pub fn gen_params(&self) -> &[(String, Var)] {
        &self.gen_params
    }

    pub fn disc_params(&self) -> &[(String, Var)] {
        &self.disc_params
    }
}

pub fn init_train_state(
    gen_config: &GeneratorConfig,
    disc_config: &DiscriminatorConfig,
    train_config: &TrainConfig,
) -> Result<TrainState> {
    train_config.validate()?;
    let seed = train_config.seed;
    let dev = Device::Cpu;
    let pair = GeneratorPair::new(gen_config, seed, DType::F32, &dev)?;
    let disc_a = MultiScaleDiscriminator::new(disc_config, seed, "discriminator_a", DType::F32, &dev)?;
    let disc_b = MultiScaleDiscriminator::new(disc_config, seed, "discriminator_b", DType::F32, &dev)?;
    let gen_params = pair.named_params();
    let mut disc_params = disc_a.named_params();
    disc_params.extend(disc_b.named_params());
    let opt_gen = Adam::new(&gen_params, train_config.beta1, train_config.beta2)?;
    let opt_disc = Adam::new(&disc_params, train_config.beta1, train_config.beta2)?;
    Ok(TrainState {
        step: 0,
        epoch: 0,
        step_in_epoch: 0,
        pair,
        disc_a,
        disc_b,
        opt_gen,
        opt_disc,
        train_config: train_config.clone(),
        gen_params,
        disc_params,
    })
}

fn scalar_f64(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

fn ensure_finite(terms: &[(&'static str, f64)]) -> Result<()> {
    for (name, v) in terms {
        if !v.is_finite() {
            return Err(Error::Numeric(format!("loss term {name} is non-finite ({v})")));
        }
    }
    Ok(())
}

/// Stack normalized patches into a pair of `(n, c, h, w)` tensors.
fn batch_tensors(batch: &[PairedPatchSample]) -> Result<(Tensor, Tensor)> {
    let mut a = Vec::with_capacity(batch.len());
    let mut b = Vec::with_capacity(batch.len());
    for sample in batch {
        a.push(normalize(&sample.patch_a)?.tensor().clone());
        b.push(normalize(&sample.patch_b)?.tensor().clone());
    }
    let a_refs: Vec<&Tensor> = a.iter().collect();
    let b_refs: Vec<&Tensor> = b.iter().collect();
    Ok((Tensor::stack(&a_refs, 0)?, Tensor::stack(&b_refs, 0)?))
}

/// One full optimization step on an already-normalized batch:
/// discriminators first (fakes detached), then the generators.
pub fn train_step_tensors(state: &mut TrainState, a: &Tensor, b: &Tensor) -> Result<LossReport> {
    let lr = state.train_config.lr_for_epoch(state.epoch);
    let weights = state.train_config.loss_weights;
    let pair = &state.pair;

    // Forward paths shared by both updates.
    let z_a = pair.encode_batch(Domain::A, a)?;
    let z_b = pair.encode_batch(Domain::B, b)?;
    let a_rec = pair.decode_batch(Domain::A, &z_a)?;
    let b_rec = pair.decode_batch(Domain::B, &z_b)?;
    let b_hat = pair.decode_batch(Domain::B, &z_a)?;
    let a_hat = pair.decode_batch(Domain::A, &z_b)?;
    let z_a_back = pair.encode_batch(Domain::B, &b_hat)?;
    let z_b_back = pair.encode_batch(Domain::A, &a_hat)?;
    let a_cc = pair.decode_batch(Domain::A, &z_a_back)?;
    let b_cc = pair.decode_batch(Domain::B, &z_b_back)?;

    // Discriminator update: real (condition, target) pairs against
    // detached fakes, so no gradient reaches the generators.
    let real_a = state.disc_a.score_batch(a, b)?;
    let fake_a = state.disc_a.score_batch(a, &b_hat.detach())?;
    let real_b = state.disc_b.score_batch(b, a)?;
    let fake_b = state.disc_b.score_batch(b, &a_hat.detach())?;
    let disc_a_t = adversarial_loss_discriminator_t(&real_a, &fake_a)?;
    let disc_b_t = adversarial_loss_discriminator_t(&real_b, &fake_b)?;
    let adv_disc_a = scalar_f64(&disc_a_t)?;
    let adv_disc_b = scalar_f64(&disc_b_t)?;
    ensure_finite(&[("adv_disc_a", adv_disc_a), ("adv_disc_b", adv_disc_b)])?;
    let disc_total_t = (disc_a_t + disc_b_t)?;
    let disc_grads = disc_total_t.backward()?;
    state.opt_disc.step(lr, &state.disc_params, &disc_grads)?;

    // Generator update against the just-updated discriminators.
    let fake_a_for_gen = state.disc_a.score_batch(a, &b_hat)?;
    let fake_b_for_gen = state.disc_b.score_batch(b, &a_hat)?;
    let adv_gen_a_t = adversarial_loss_generator_t(&fake_a_for_gen)?;
    let adv_gen_b_t = adversarial_loss_generator_t(&fake_b_for_gen)?;
    let rec_a_t = l1_mean_t(&a_rec, a)?;
    let rec_b_t = l1_mean_t(&b_rec, b)?;
    let cc_a_t = l1_mean_t(&a_cc, a)?;
    let cc_b_t = l1_mean_t(&b_cc, b)?;

    let mut report = LossReport {
        rec_a: scalar_f64(&rec_a_t)?,
        rec_b: scalar_f64(&rec_b_t)?,
        cc_a: scalar_f64(&cc_a_t)?,
        cc_b: scalar_f64(&cc_b_t)?,
        adv_gen_a: scalar_f64(&adv_gen_a_t)?,
        adv_gen_b: scalar_f64(&adv_gen_b_t)?,
        adv_disc_a,
        adv_disc_b,
        total_generator: 0.0,
        total_discriminator: adv_disc_a + adv_disc_b,
    };
    report.total_generator = crate::losses::total_generator_objective(&report, &weights)?;
    if let Some(term) = report.non_finite_term() {
        return Err(Error::Numeric(format!("loss term {term} is non-finite")));
    }

    let gen_total_t = ((adv_gen_a_t + adv_gen_b_t)?
        + ((cc_a_t + cc_b_t)? * weights.lambda_cc)?)?;
    let gen_total_t = (gen_total_t + ((rec_a_t + rec_b_t)? * weights.lambda_rec)?)?;
    let gen_grads = gen_total_t.backward()?;
    state.opt_gen.step(lr, &state.gen_params, &gen_grads)?;

    state.step += 1;
    Ok(report)
}

/// One training step on raw patch samples.
pub fn train_step(state: &mut TrainState, batch: &[PairedPatchSample]) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::Config("training batch is empty".into()));
    }
    let (a, b) = batch_tensors(batch)?;
    train_step_tensors(state, &a, &b)
}

/// One metrics-log line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub epoch: usize,
    #[serde(flatten)]
    pub losses: LossReport,
}

pub fn parse_metrics_line(line: &str) -> Result<MetricsRecord> {
    serde_json::from_str(line).map_err(|e| Error::Integrity(format!("bad metrics line: {e}")))
}

/// Deterministic sample order for one epoch.
fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = derive_rng(seed, &format!("order.epoch{epoch}"));
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
}

fn load_samples(manifest: &DatasetManifest, indices: &[usize]) -> Result<Vec<PairedPatchSample>> {
    indices
        .iter()
        .map(|&i| {
            let record = &manifest.records[i];
            let patch_a = crate::data::load_rgb(&manifest.root.join(&record.a_path))?;
            let patch_b = crate::data::load_rgb(&manifest.root.join(&record.b_path))?;
            Ok(PairedPatchSample {
                scene_id: record.scene_id.clone(),
                anchor: (record.row, record.col),
                patch_a,
                patch_b,
                mask: None,
            })
        })
        .collect()
}

pub struct TrainSinks<'a> {
    pub out_dir: Option<&'a Path>,
}

/// Run the configured number of epochs over the manifest. With an output
/// directory, appends one metrics line per step and writes periodic
/// checkpoints plus `latest.ckpt`.
pub fn train(
    state: &mut TrainState,
    manifest: &DatasetManifest,
    sinks: &TrainSinks,
) -> Result<()> {
    if manifest.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    let cfg = state.train_config.clone();
    let mut metrics_file = match sinks.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(fs::OpenOptions::new().create(true).append(true).open(dir.join("metrics.jsonl"))?)
        }
        None => None,
    };
    let n = manifest.len();
    let start_epoch = state.epoch;
    for epoch in start_epoch..cfg.epochs {
        let order = epoch_order(cfg.seed, epoch, n);
        let chunks: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        let resume_at = if epoch == start_epoch { state.step_in_epoch } else { 0 };
        for (batch_idx, chunk) in chunks.iter().enumerate().skip(resume_at) {
            let samples = load_samples(manifest, chunk)?;
            let report = train_step(state, &samples)?;
            state.step_in_epoch = batch_idx + 1;
            if let Some(file) = metrics_file.as_mut() {
                let record = MetricsRecord { step: state.step, epoch, losses: report };
                let line = serde_json::to_string(&record)
                    .map_err(|e| Error::Integrity(format!("cannot encode metrics: {e}")))?;
                writeln!(file, "{line}")?;
            }
        }
        state.epoch = epoch + 1;
        state.step_in_epoch = 0;
        if let Some(dir) = sinks.out_dir {
            if (epoch + 1) % cfg.checkpoint_interval == 0 || epoch + 1 == cfg.epochs {
                let ckpt_dir = dir.join("checkpoints");
                fs::create_dir_all(&ckpt_dir)?;
                save_checkpoint(state, &ckpt_dir.join(format!("epoch_{:04}.ckpt", epoch + 1)))?;
                save_checkpoint(state, &dir.join("latest.ckpt"))?;
            }
        }
    }
    Ok(())
}

/// Serialize the complete training state: parameters, optimizer moments,
/// counters, configs, and the construction seed.
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let mut tensors: TensorData = Vec::new();
    for (name, var) in state.gen_params.iter().chain(state.disc_params.iter()) {
        tensors.push((
            name.clone(),
            var.as_tensor().dims().to_vec(),
            var.as_tensor().flatten_all()?.to_vec1::<f32>()?,
        ));
    }
    state.opt_gen.export("opt", &mut tensors)?;
    state.opt_disc.export("opt", &mut tensors)?;
    let meta = ArchiveMeta {
        version: FORMAT_VERSION,
        seed: state.train_config.seed,
        step: state.step,
        epoch: state.epoch,
        step_in_epoch: state.step_in_epoch,
        generator: state.pair.config.clone(),
        discriminator: state.disc_a.config.clone(),
        train: state.train_config.clone(),
        opt_gen_step: state.opt_gen.t,
        opt_disc_step: state.opt_disc.t,
        tensors: Vec::new(),
    };
    write_archive(path, &meta, &tensors)
}

/// Rebuild a [`TrainState`] from a checkpoint archive. The model is
/// reconstructed from the stored configs and seed (restoring the weight
/// tying structure), then every tensor is overwritten from the archive.
pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let (meta, tensors) = read_archive(path)?;
    let mut state = init_train_state(&meta.generator, &meta.discriminator, &meta.train)?;
    let dev = Device::Cpu;
    let mut expected = 0usize;
    for (name, var) in state.gen_params.iter().chain(state.disc_params.iter()) {
        let (shape, values) = tensors
            .get(name)
            .ok_or_else(|| Error::Integrity(format!("checkpoint missing tensor {name}")))?;
        if shape.as_slice() != var.as_tensor().dims() {
            return Err(Error::Integrity(format!(
                "tensor {name}: shape {shape:?} does not match model {:?}",
                var.as_tensor().dims()
            )));
        }
        var.set(&Tensor::from_vec(values.clone(), shape.as_slice(), &dev)?)?;
        expected += 1;
    }
    state.opt_gen.import("opt", meta.opt_gen_step, &tensors, &dev)?;
    state.opt_disc.import("opt", meta.opt_disc_step, &tensors, &dev)?;
    expected += 2 * (state.gen_params.len() + state.disc_params.len());
    if tensors.len() != expected {
        return Err(Error::Integrity(format!(
            "checkpoint has {} tensors, expected {expected}",
            tensors.len()
        )));
    }
    state.step = meta.step;
    state.epoch = meta.epoch;
    state.step_in_epoch = meta.step_in_epoch;
    Ok(state)
}
