//! Dual-encoder contrastive core: the RIR encoder (feed-forward blocks over
//! the log-magnitude spectrum), the speech encoder (per-frame projection,
//! mean-pool, feed-forward blocks), the temperature-scaled softmax
//! similarity, the class-aware multi-positive contrastive objective, and the
//! pre-training loop.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::corpus::{pair_rir, per_class_canonical, Dataset};
use crate::dsp::{log_mag_spectrum, next_pow2, spectrogram, Signal};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{Checkpoint, Entry};
use crate::nn::{multi_positive_nce, AdamW, AdamWConfig, FeedForwardBlock, Linear, LrSchedule, Tensor};
use crate::rng::{stream_rng, Rng};
use crate::scalar::Scalar;
use crate::sim::Rir;
use crate::Real;

/// Log-temperature wrapper: tau = exp(log_tau), clamped into (0, 1] after
/// every optimizer step (with a small positive floor to keep the similarity
/// division bounded).
pub struct Temperature<T: Scalar> {
    pub log_tau: Tensor<T>,
}

pub const TAU_FLOOR: f64 = 1e-4;

impl<T: Scalar> Temperature<T> {
    pub fn new(tau_init: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau_init) || tau_init == 0.0 {
            return Err(Error::Validation(format!("tau {tau_init} outside (0, 1]")));
        }
        Ok(Temperature {
            log_tau: Tensor::new(vec![T::from_f64(tau_init.ln())], &[1], true),
        })
    }

    /// Differentiable tau tensor.
    pub fn tau_tensor(&self) -> Tensor<T> {
        self.log_tau.exp()
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.value_at(0).to_f64().exp()
    }

    pub fn clamp(&self) {
        let v = self.log_tau.value_at(0).to_f64();
        let clamped = v.clamp(TAU_FLOOR.ln(), 0.0);
        if clamped != v {
            self.log_tau.set_value_at(0, T::from_f64(clamped));
        }
    }
}

/// Feed-forward RIR encoder over log-magnitude spectra.
pub struct RirEncoder<T: Scalar> {
    pub blocks: Vec<FeedForwardBlock<T>>,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl<T: Scalar> RirEncoder<T> {
    pub fn new(input_dim: usize, dims: &[usize], rng: &mut Rng) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Validation("encoder needs at least one block".into()));
        }
        let mut blocks = Vec::new();
        let mut prev = input_dim;
        for &d in dims {
            blocks.push(FeedForwardBlock::new(prev, d, rng));
            prev = d;
        }
        Ok(RirEncoder { blocks, input_dim, output_dim: prev })
    }

    /// `[B x input_dim] -> [B x d]`, not yet normalized.
    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let mut h = x.clone();
        for b in self.blocks.iter_mut() {
            h = b.forward(&h, train);
        }
        h
    }

    pub fn params(&self) -> Vec<Tensor<T>> {
        self.blocks.iter().flat_map(|b| b.params()).collect()
    }
}

/// Desk-scale speech encoder: a per-frame linear projection of spectrogram
/// columns with ReLU, mean-pooled over frames, then feed-forward blocks down
/// to the embedding dimension. A heavier encoder can replace this behind the
/// same interface.
pub struct SpeechEncoder<T: Scalar> {
    pub frame_proj: Linear<T>,
    pub blocks: Vec<FeedForwardBlock<T>>,
    pub input_bins: usize,
    pub output_dim: usize,
}

impl<T: Scalar> SpeechEncoder<T> {
    pub fn new(input_bins: usize, proj_dim: usize, dims: &[usize], rng: &mut Rng) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Validation("encoder needs at least one block".into()));
        }
        let frame_proj = Linear::new(input_bins, proj_dim, rng);
        let mut blocks = Vec::new();
        let mut prev = proj_dim;
        for &d in dims {
            blocks.push(FeedForwardBlock::new(prev, d, rng));
            prev = d;
        }
        Ok(SpeechEncoder { frame_proj, blocks, input_bins, output_dim: prev })
    }

    /// `x` is `[B*frames x bins]`; returns `[B x d]`, not yet normalized.
    pub fn forward(&mut self, x: &Tensor<T>, frames: usize, train: bool) -> Tensor<T> {
        let mut h = self.frame_proj.forward(x).relu().mean_pool_rows(frames);
        for b in self.blocks.iter_mut() {
            h = b.forward(&h, train);
        }
        h
    }

    pub fn params(&self) -> Vec<Tensor<T>> {
        let mut p = self.frame_proj.params();
        p.extend(self.blocks.iter().flat_map(|b| b.params()));
        p
    }
}

/// Stacked unit-norm embeddings with per-row class labels.
pub struct EmbeddingBatch<T: Scalar> {
    pub e1: Tensor<T>,
    pub e2: Tensor<T>,
    pub labels: Vec<u32>,
}

impl<T: Scalar> EmbeddingBatch<T> {
    pub fn new(e1: Tensor<T>, e2: Tensor<T>, labels: Vec<u32>) -> Result<Self> {
        let s1 = e1.shape();
        let s2 = e2.shape();
        if s1 != s2 || s1.len() != 2 {
            return Err(Error::Validation(format!("embedding shapes differ: {s1:?} vs {s2:?}")));
        }
        if labels.len() != s1[0] {
            return Err(Error::Validation("labels length differs from batch".into()));
        }
        if s1[0] == 0 {
            return Err(Error::Validation("empty batch".into()));
        }
        for m in [&e1, &e2] {
            let v = m.values();
            let (b, d) = (s1[0], s1[1]);
            for i in 0..b {
                let norm = (0..d)
                    .map(|j| v[i * d + j] * v[i * d + j])
                    .sum::<T>()
                    .sqrt()
                    .to_f64();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(Error::Validation(format!("row {i} norm {norm} not unit")));
                }
            }
        }
        Ok(EmbeddingBatch { e1, e2, labels })
    }
}

/// Temperature-scaled softmax over embedding dot products, row-stochastic.
/// Plain (non-differentiable) evaluation used by metrics and tests.
pub fn smdp(e1: &[f64], e2: &[f64], b: usize, d: usize, tau: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&tau) || tau == 0.0 {
        return Err(Error::Validation(format!("tau {tau} outside (0, 1]")));
    }
    if e1.len() != b * d || e2.len() != b * d {
        return Err(Error::Validation("embedding buffer sizes do not match b x d".into()));
    }
    let mut out = vec![0.0f64; b * b];
    for i in 0..b {
        let row = &mut out[i * b..(i + 1) * b];
        for (j, r) in row.iter_mut().enumerate() {
            let mut dot = 0.0;
            for k in 0..d {
                dot += e1[i * d + k] * e2[j * d + k];
            }
            *r = dot / tau;
        }
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for r in row.iter_mut() {
            *r = (*r - m).exp();
            sum += *r;
        }
        for r in row.iter_mut() {
            *r /= sum;
        }
    }
    Ok(out)
}

/// Symmetric class-aware contrastive loss: the mean of the two directional
/// multi-positive terms, sharing one temperature. Inputs are taken as given
/// (callers normalize rows); this keeps the loss a plain differentiable
/// function of (E1, E2, tau).
pub fn contrastive_loss<T: Scalar>(
    e1: &Tensor<T>,
    e2: &Tensor<T>,
    labels: &[u32],
    tau: &Tensor<T>,
) -> Result<Tensor<T>> {
    let s1 = e1.shape();
    let s2 = e2.shape();
    if s1 != s2 || s1.len() != 2 {
        return Err(Error::Validation(format!("embedding shapes differ: {s1:?} vs {s2:?}")));
    }
    if s1[0] == 0 {
        return Err(Error::Validation("empty batch".into()));
    }
    if labels.len() != s1[0] {
        return Err(Error::Validation("labels length differs from batch".into()));
    }
    let z1 = e1.matmul(&e2.transpose()).div_by_scalar(tau);
    let z2 = e2.matmul(&e1.transpose()).div_by_scalar(tau);
    let la = multi_positive_nce(&z1, labels)?;
    let lb = multi_positive_nce(&z2, labels)?;
    Ok(la.add(&lb).mul_const(0.5))
}

pub fn loss_of_batch<T: Scalar>(batch: &EmbeddingBatch<T>, tau: &Tensor<T>) -> Result<Tensor<T>> {
    contrastive_loss(&batch.e1, &batch.e2, &batch.labels, tau)
}

/// Both encoders plus the trainable temperature.
pub struct DualEncoder<T: Scalar> {
    pub speech: SpeechEncoder<T>,
    pub rir: RirEncoder<T>,
    pub temperature: Temperature<T>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderDims {
    /// RIR spectrum bins (padded rir length / 2 + 1).
    pub rir_input_bins: usize,
    /// Feed-forward block widths; the last is the embedding dimension d.
    pub rir_hidden: Vec<usize>,
    /// Spectrogram bins per frame.
    pub speech_bins: usize,
    pub speech_proj: usize,
    /// Block widths after pooling; the last must equal d.
    pub speech_hidden: Vec<usize>,
}

impl EncoderDims {
    pub fn embedding_dim(&self) -> usize {
        *self.rir_hidden.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rir_hidden.is_empty() || self.speech_hidden.is_empty() {
            return Err(Error::Validation("encoder dims must be non-empty".into()));
        }
        if self.rir_hidden.last() != self.speech_hidden.last() {
            return Err(Error::Validation(format!(
                "embedding dimensions differ: {:?} vs {:?}",
                self.rir_hidden.last(),
                self.speech_hidden.last()
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> DualEncoder<T> {
    pub fn new(dims: &EncoderDims, tau_init: f64, rng: &mut Rng) -> Result<Self> {
        dims.validate()?;
        Ok(DualEncoder {
            speech: SpeechEncoder::new(dims.speech_bins, dims.speech_proj, &dims.speech_hidden, rng)?,
            rir: RirEncoder::new(dims.rir_input_bins, &dims.rir_hidden, rng)?,
            temperature: Temperature::new(tau_init)?,
        })
    }

    pub fn params(&self) -> Vec<Tensor<T>> {
        let mut p = self.speech.params();
        p.extend(self.rir.params());
        p.push(self.temperature.log_tau.clone());
        p
    }

    pub fn embedding_dim(&self) -> usize {
        self.rir.output_dim
    }

    /// Normalized speech embeddings for a flattened `[B*frames x bins]` input.
    pub fn embed_speech(&mut self, x: &Tensor<T>, frames: usize, train: bool) -> Tensor<T> {
        self.speech.forward(x, frames, train).l2_normalize_rows()
    }

    /// Normalized RIR embeddings for `[B x bins]` log-magnitude spectra.
    pub fn embed_rir(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        self.rir.forward(x, train).l2_normalize_rows()
    }

    // ---- checkpointing ----

    pub fn export_entries(&self) -> Vec<Entry<T>> {
        let mut named: Vec<(String, Tensor<T>)> = Vec::new();
        self.speech.frame_proj.named("speech.proj", &mut named);
        for (i, b) in self.speech.blocks.iter().enumerate() {
            b.named(&format!("speech.block{i}"), &mut named);
        }
        for (i, b) in self.rir.blocks.iter().enumerate() {
            b.named(&format!("rir.block{i}"), &mut named);
        }
        named.push(("temperature.log_tau".into(), self.temperature.log_tau.clone()));

        let mut entries: Vec<Entry<T>> = named
            .into_iter()
            .map(|(name, t)| Entry::new(name, t.shape(), t.to_vec()))
            .collect();
        for (i, b) in self.speech.blocks.iter().enumerate() {
            for (suffix, values) in b.norm.buffers() {
                entries.push(Entry::new(
                    format!("speech.block{i}.norm.{suffix}"),
                    vec![values.len()],
                    values,
                ));
            }
        }
        for (i, b) in self.rir.blocks.iter().enumerate() {
            for (suffix, values) in b.norm.buffers() {
                entries.push(Entry::new(
                    format!("rir.block{i}.norm.{suffix}"),
                    vec![values.len()],
                    values,
                ));
            }
        }
        entries
    }

    pub fn to_checkpoint(&self, config_hash: u64) -> Checkpoint<T> {
        Checkpoint { config_hash, params: self.export_entries(), optimizer: vec![] }
    }

    pub fn load_entries(&mut self, entries: &[Entry<T>]) -> Result<()> {
        let by_name: BTreeMap<&str, &Entry<T>> =
            entries.iter().map(|e| (e.name.as_str(), e)).collect();
        let assign = |name: String, t: &Tensor<T>| -> Result<()> {
            let e = by_name
                .get(name.as_str())
                .ok_or_else(|| Error::Format(format!("checkpoint missing entry '{name}'")))?;
            if e.values.len() != t.numel() {
                return Err(Error::Format(format!(
                    "checkpoint entry '{name}': {} values, expected {}",
                    e.values.len(),
                    t.numel()
                )));
            }
            t.set_values(&e.values);
            Ok(())
        };
        assign("speech.proj.weight".into(), &self.speech.frame_proj.weight)?;
        assign("speech.proj.bias".into(), &self.speech.frame_proj.bias)?;
        for (i, b) in self.speech.blocks.iter().enumerate() {
            assign(format!("speech.block{i}.linear.weight"), &b.linear.weight)?;
            assign(format!("speech.block{i}.linear.bias"), &b.linear.bias)?;
            assign(format!("speech.block{i}.norm.gamma"), &b.norm.gamma)?;
            assign(format!("speech.block{i}.norm.beta"), &b.norm.beta_shift)?;
        }
        for (i, b) in self.rir.blocks.iter().enumerate() {
            assign(format!("rir.block{i}.linear.weight"), &b.linear.weight)?;
            assign(format!("rir.block{i}.linear.bias"), &b.linear.bias)?;
            assign(format!("rir.block{i}.norm.gamma"), &b.norm.gamma)?;
            assign(format!("rir.block{i}.norm.beta"), &b.norm.beta_shift)?;
        }
        assign("temperature.log_tau".into(), &self.temperature.log_tau)?;

        let load_buffer = |name: String, target: &mut Vec<T>| -> Result<()> {
            let e = by_name
                .get(name.as_str())
                .ok_or_else(|| Error::Format(format!("checkpoint missing entry '{name}'")))?;
            if e.values.len() != target.len() {
                return Err(Error::Format(format!("checkpoint entry '{name}' has wrong size")));
            }
            target.copy_from_slice(&e.values);
            Ok(())
        };
        for (i, b) in self.speech.blocks.iter_mut().enumerate() {
            load_buffer(format!("speech.block{i}.norm.running_mean"), &mut b.norm.running_mean)?;
            load_buffer(format!("speech.block{i}.norm.running_var"), &mut b.norm.running_var)?;
        }
        for (i, b) in self.rir.blocks.iter_mut().enumerate() {
            load_buffer(format!("rir.block{i}.norm.running_mean"), &mut b.norm.running_mean)?;
            load_buffer(format!("rir.block{i}.norm.running_var"), &mut b.norm.running_var)?;
        }
        self.temperature.clamp();
        Ok(())
    }
}

// ---- feature preparation ----

/// Spectrogram framing parameters for the speech encoder input.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpectrogramParams {
    pub frame_length: usize,
    pub hop: usize,
    pub floor_db: f64,
}

impl Default for SpectrogramParams {
    fn default() -> Self {
        Self { frame_length: 256, hop: 128, floor_db: crate::dsp::DEFAULT_FLOOR_DB }
    }
}

/// Log-magnitude spectrum of an RIR at its padded power-of-two length.
pub fn rir_spectrum_features(rir: &Rir, floor_db: f64) -> Result<Vec<Real>> {
    let n = next_pow2(rir.samples.len());
    log_mag_spectrum(&rir.samples, n, floor_db)
}

pub fn speech_features(signal: &Signal<Real>, params: &SpectrogramParams) -> Result<(Vec<Real>, usize, usize)> {
    let sg = spectrogram(signal, params.frame_length, params.hop, params.floor_db)?;
    Ok((sg.data, sg.frames, sg.bins))
}

/// Encode one RIR to a unit embedding (eval mode).
pub fn encode_rir(rir: &Rir, model: &mut DualEncoder<Real>, floor_db: f64) -> Result<Vec<Real>> {
    let feats = rir_spectrum_features(rir, floor_db)?;
    if feats.len() != model.rir.input_dim {
        return Err(Error::Validation(format!(
            "RIR spectrum has {} bins, encoder expects {}",
            feats.len(),
            model.rir.input_dim
        )));
    }
    let x = Tensor::new(feats, &[1, model.rir.input_dim], false);
    Ok(model.embed_rir(&x, false).to_vec())
}

/// Encode one speech signal to a unit embedding (eval mode).
pub fn encode_speech(
    signal: &Signal<Real>,
    model: &mut DualEncoder<Real>,
    params: &SpectrogramParams,
) -> Result<Vec<Real>> {
    if signal.duration_s() > crate::corpus::MAX_DURATION_S {
        return Err(Error::Validation(format!(
            "signal duration {:.2} s exceeds {} s",
            signal.duration_s(),
            crate::corpus::MAX_DURATION_S
        )));
    }
    let (data, frames, bins) = speech_features(signal, params)?;
    if bins != model.speech.input_bins {
        return Err(Error::Validation(format!(
            "spectrogram has {bins} bins, encoder expects {}",
            model.speech.input_bins
        )));
    }
    let x = Tensor::new(data, &[frames, bins], false);
    Ok(model.embed_speech(&x, frames, false).to_vec())
}

/// Precomputed encoder inputs for one dataset item.
#[derive(Debug, Clone)]
pub struct FeatureItem {
    pub speech: Vec<Real>,
    pub rir_spectrum: Vec<Real>,
    pub class_id: u32,
}

#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub items: Vec<FeatureItem>,
    pub frames: usize,
    pub speech_bins: usize,
    pub rir_bins: usize,
}

/// Featurize a dataset: spectrogram per clip, log-magnitude spectrum of the
/// paired same-class RIR. All clips must produce equal frame counts.
pub fn featurize(
    dataset: &Dataset,
    bank: &[Rir],
    params: &SpectrogramParams,
    floor_db: f64,
) -> Result<FeatureSet> {
    if dataset.items.is_empty() {
        return Err(Error::Validation("empty dataset".into()));
    }
    let canon = per_class_canonical(bank);
    let mut items = Vec::with_capacity(dataset.items.len());
    let mut frames = 0usize;
    let mut speech_bins = 0usize;
    let mut rir_bins = 0usize;
    for item in &dataset.items {
        let (data, f, b) = speech_features(&item.clip.signal, params)?;
        if frames == 0 {
            frames = f;
            speech_bins = b;
        } else if f != frames {
            return Err(Error::Validation(format!(
                "clip frame count {f} differs from {frames}; equal-length clips required"
            )));
        }
        let rir = pair_rir(bank, &canon, item)?;
        let spec = rir_spectrum_features(rir, floor_db)?;
        if rir_bins == 0 {
            rir_bins = spec.len();
        } else if spec.len() != rir_bins {
            return Err(Error::Validation("inconsistent RIR lengths in bank".into()));
        }
        items.push(FeatureItem { speech: data, rir_spectrum: spec, class_id: item.class_id });
    }
    Ok(FeatureSet { items, frames, speech_bins, rir_bins })
}

// ---- pre-training ----

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub tau_init: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveSplit {
    Train,
    Val,
}

impl std::fmt::Display for CurveSplit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CurveSplit::Train => f.write_str("train"),
            CurveSplit::Val => f.write_str("val"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub split: CurveSplit,
    pub loss: f64,
}

/// `step,split,loss` CSV.
pub fn write_loss_csv<W: std::io::Write>(w: &mut W, records: &[LossRecord]) -> Result<()> {
    writeln!(w, "step,split,loss")?;
    for r in records {
        writeln!(w, "{},{},{}", r.step, r.split, r.loss)?;
    }
    Ok(())
}

/// One item per distinct class, uniformly chosen. The default pre-training
/// sampler ignores class; this variant guarantees all-distinct labels, which
/// reduces the objective to diagonal-positive InfoNCE.
pub fn sample_distinct_class_indices(labels: &[u32], rng: &mut Rng) -> Vec<usize> {
    use rand::Rng as _;
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    by_class
        .values()
        .map(|members| members[rng.gen_range(0..members.len())])
        .collect()
}

fn batch_tensors(
    set: &FeatureSet,
    indices: &[usize],
) -> (Tensor<Real>, Tensor<Real>, Vec<u32>) {
    let b = indices.len();
    let mut speech = Vec::with_capacity(b * set.frames * set.speech_bins);
    let mut rirs = Vec::with_capacity(b * set.rir_bins);
    let mut labels = Vec::with_capacity(b);
    for &i in indices {
        let item = &set.items[i];
        speech.extend_from_slice(&item.speech);
        rirs.extend_from_slice(&item.rir_spectrum);
        labels.push(item.class_id);
    }
    (
        Tensor::new(speech, &[b * set.frames, set.speech_bins], false),
        Tensor::new(rirs, &[b, set.rir_bins], false),
        labels,
    )
}

/// Mean contrastive loss over a feature set in eval mode.
pub fn evaluate_loss(model: &mut DualEncoder<Real>, set: &FeatureSet, batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    let indices: Vec<usize> = (0..set.items.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let (xs, xr, labels) = batch_tensors(set, chunk);
        let e1 = model.embed_speech(&xs, set.frames, false);
        let e2 = model.embed_rir(&xr, false);
        let tau = model.temperature.tau_tensor();
        let loss = contrastive_loss(&e1, &e2, &labels, &tau)?.item();
        if !loss.is_finite() {
            return Err(Error::Numeric("non-finite validation loss".into()));
        }
        total += loss * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(total / count as f64)
}

/// Minibatch AdamW on the symmetric contrastive objective with the linear
/// warmup schedule. Deterministic under a fixed seed in single-threaded mode.
pub fn pretrain(
    model: &mut DualEncoder<Real>,
    train: &FeatureSet,
    val: &FeatureSet,
    cfg: &PretrainConfig,
) -> Result<Vec<LossRecord>> {
    if train.items.is_empty() {
        return Err(Error::Validation("empty training set".into()));
    }
    if cfg.batch_size == 0 || cfg.batch_size > train.items.len() {
        return Err(Error::Validation(format!(
            "batch size {} invalid for dataset of {}",
            cfg.batch_size,
            train.items.len()
        )));
    }
    let steps_per_epoch = train.items.len() / cfg.batch_size;
    let total_steps = (cfg.epochs * steps_per_epoch) as u64;
    let schedule = LrSchedule::LinearWarmup {
        base_lr: cfg.base_lr,
        total_steps: total_steps.max(1),
        warmup_ratio: cfg.warmup_ratio,
    };
    schedule.validate()?;
    let mut opt = AdamW::new(
        model.params(),
        AdamWConfig { weight_decay: cfg.weight_decay, ..AdamWConfig::default() },
    );
    let mut shuffle_rng = stream_rng(cfg.seed, &[4]);
    let mut records = Vec::new();
    let mut step = 0u64;
    for _epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.items.len()).collect();
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks_exact(cfg.batch_size).take(steps_per_epoch) {
            let (xs, xr, labels) = batch_tensors(train, chunk);
            let e1 = model.embed_speech(&xs, train.frames, true);
            let e2 = model.embed_rir(&xr, true);
            let tau = model.temperature.tau_tensor();
            let loss_t = contrastive_loss(&e1, &e2, &labels, &tau)?;
            let loss = loss_t.item();
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite training loss at step {step}")));
            }
            opt.zero_grad();
            loss_t.backward();
            let lr = schedule.lr_at(step.min(total_steps))?;
            opt.step(lr)?;
            model.temperature.clamp();
            records.push(LossRecord { step, split: CurveSplit::Train, loss });
            step += 1;
        }
        let val_loss = evaluate_loss(model, val, cfg.batch_size)?;
        records.push(LossRecord { step, split: CurveSplit::Val, loss: val_loss });
    }
    Ok(records)
}
