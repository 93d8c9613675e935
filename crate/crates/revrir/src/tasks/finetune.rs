//! Fine-tuning: a linear classification head over either encoder, with the
//! encoder frozen (head-only training on precomputed embeddings) or unfrozen
//! (joint training).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::contrastive::{rir_spectrum_features, DualEncoder, FeatureSet};
use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, AdamW, AdamWConfig, Linear, LrSchedule, Tensor};
use crate::rng::{stream_rng, Rng};
use crate::sim::Rir;
use crate::Real;

/// Single linear layer from the embedding dimension to the class count.
pub struct ClassifierHead {
    pub linear: Linear<Real>,
    pub classes: usize,
}

impl ClassifierHead {
    pub fn new(embedding_dim: usize, classes: usize, rng: &mut Rng) -> Self {
        ClassifierHead { linear: Linear::new(embedding_dim, classes, rng), classes }
    }

    pub fn forward(&self, x: &Tensor<Real>) -> Tensor<Real> {
        self.linear.forward(x)
    }

    pub fn params(&self) -> Vec<Tensor<Real>> {
        self.linear.params()
    }

    pub fn predict(&self, embeddings: &EmbeddedDataset) -> Vec<u32> {
        let x = Tensor::new(embeddings.x.clone(), &[embeddings.n, embeddings.d], false);
        let logits = self.forward(&x);
        let lv = logits.values();
        (0..embeddings.n)
            .map(|i| {
                let row = &lv[i * self.classes..(i + 1) * self.classes];
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0 as u32
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderChoice {
    Speech,
    Rir,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub encoder: EncoderChoice,
    pub freeze_encoder: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Polynomial decay exponent.
    pub poly_power: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetric {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// Dense `[n x d]` embedding matrix with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedDataset {
    pub x: Vec<Real>,
    pub labels: Vec<u32>,
    pub n: usize,
    pub d: usize,
}

impl EmbeddedDataset {
    pub fn select(&self, indices: &[usize]) -> (Tensor<Real>, Vec<usize>) {
        let mut x = Vec::with_capacity(indices.len() * self.d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(&self.x[i * self.d..(i + 1) * self.d]);
            labels.push(self.labels[i] as usize);
        }
        (Tensor::new(x, &[indices.len(), self.d], false), labels)
    }
}

/// Eval-mode speech embeddings for a featurized dataset.
pub fn embed_speech_set(model: &mut DualEncoder<Real>, set: &FeatureSet, batch: usize) -> Result<EmbeddedDataset> {
    let d = model.embedding_dim();
    let mut x = Vec::with_capacity(set.items.len() * d);
    let mut labels = Vec::with_capacity(set.items.len());
    let indices: Vec<usize> = (0..set.items.len()).collect();
    for chunk in indices.chunks(batch.max(1)) {
        let mut speech = Vec::with_capacity(chunk.len() * set.frames * set.speech_bins);
        for &i in chunk {
            speech.extend_from_slice(&set.items[i].speech);
            labels.push(set.items[i].class_id);
        }
        let xt = Tensor::new(speech, &[chunk.len() * set.frames, set.speech_bins], false);
        let e = model.embed_speech(&xt, set.frames, false);
        x.extend_from_slice(&e.values());
    }
    Ok(EmbeddedDataset { x, labels, n: set.items.len(), d })
}

/// Eval-mode RIR embeddings for the bank positions named by a split
/// (`class -> canonical positions`), ordered by class then position.
pub fn embed_rir_set(
    model: &mut DualEncoder<Real>,
    bank: &[Rir],
    canon: &BTreeMap<u32, Vec<usize>>,
    positions: &BTreeMap<u32, Vec<usize>>,
    floor_db: f64,
    batch: usize,
) -> Result<EmbeddedDataset> {
    let d = model.embedding_dim();
    let mut feats: Vec<Vec<Real>> = Vec::new();
    let mut labels = Vec::new();
    for (&class, pos) in positions {
        let class_canon = canon
            .get(&class)
            .ok_or_else(|| Error::Lookup(format!("class {class} not in bank")))?;
        for &p in pos {
            let global = *class_canon.get(p).ok_or_else(|| {
                Error::Lookup(format!("class {class}: position {p} beyond bank"))
            })?;
            feats.push(rir_spectrum_features(&bank[global], floor_db)?);
            labels.push(class);
        }
    }
    let bins = feats.first().map(|f| f.len()).unwrap_or(0);
    let mut x = Vec::with_capacity(feats.len() * d);
    for chunk in feats.chunks(batch.max(1)) {
        let flat: Vec<Real> = chunk.iter().flatten().copied().collect();
        let xt = Tensor::new(flat, &[chunk.len(), bins], false);
        let e = model.embed_rir(&xt, false);
        x.extend_from_slice(&e.values());
    }
    Ok(EmbeddedDataset { x, labels, n: feats.len(), d })
}

/// Head-only training on precomputed embeddings; equivalent to logistic
/// regression on the frozen encoder's outputs.
pub fn train_head(
    head: &ClassifierHead,
    train: &EmbeddedDataset,
    val: &EmbeddedDataset,
    cfg: &FinetuneConfig,
) -> Result<Vec<EpochMetric>> {
    if train.n == 0 {
        return Err(Error::Validation("empty fine-tuning dataset".into()));
    }
    if let Some(&bad) = train.labels.iter().chain(val.labels.iter()).find(|&&l| l as usize >= head.classes) {
        return Err(Error::Validation(format!(
            "label {bad} out of range for {} classes",
            head.classes
        )));
    }
    let batch = cfg.batch_size.clamp(1, train.n);
    let steps_per_epoch = train.n.div_ceil(batch);
    let schedule = LrSchedule::Polynomial {
        base_lr: cfg.lr,
        total_steps: (cfg.epochs * steps_per_epoch) as u64,
        power: cfg.poly_power,
    };
    schedule.validate()?;
    let mut opt = AdamW::new(
        head.params(),
        AdamWConfig { weight_decay: cfg.weight_decay, ..AdamWConfig::default() },
    );
    let mut shuffle_rng = stream_rng(cfg.seed, &[5]);
    let mut metrics = Vec::new();
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.n).collect();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(batch) {
            let (x, labels) = train.select(chunk);
            let loss_t = softmax_cross_entropy(&head.forward(&x), &labels)?;
            let loss = loss_t.item();
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite fine-tune loss at step {step}")));
            }
            opt.zero_grad();
            loss_t.backward();
            opt.step(schedule.lr_at(step)?)?;
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
            step += 1;
        }
        let val_acc = crate::tasks::eval::top1_accuracy(&head.predict(val), &val.labels)?;
        metrics.push(EpochMetric { epoch, train_loss: loss_sum / seen as f64, val_accuracy: val_acc });
    }
    Ok(metrics)
}

pub struct FinetuneOutcome {
    pub head: ClassifierHead,
    pub per_epoch: Vec<EpochMetric>,
}

/// Fine-tune a head over the chosen encoder. With `freeze_encoder` the
/// encoder is untouched (embeddings are computed once); otherwise encoder and
/// head train jointly.
pub fn finetune(
    model: &mut DualEncoder<Real>,
    train_set: &FeatureSet,
    val_set: &FeatureSet,
    classes: usize,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome> {
    let mut rng = stream_rng(cfg.seed, &[6]);
    let head = ClassifierHead::new(model.embedding_dim(), classes, &mut rng);
    if cfg.freeze_encoder {
        let (train_emb, val_emb) = match cfg.encoder {
            EncoderChoice::Speech => (
                embed_speech_set(model, train_set, cfg.batch_size)?,
                embed_speech_set(model, val_set, cfg.batch_size)?,
            ),
            EncoderChoice::Rir => (
                embed_rir_features(model, train_set, cfg.batch_size)?,
                embed_rir_features(model, val_set, cfg.batch_size)?,
            ),
        };
        let per_epoch = train_head(&head, &train_emb, &val_emb, cfg)?;
        return Ok(FinetuneOutcome { head, per_epoch });
    }

    // joint training: backprop through the chosen encoder
    let batch = cfg.batch_size.clamp(1, train_set.items.len());
    let steps_per_epoch = train_set.items.len().div_ceil(batch);
    let schedule = LrSchedule::Polynomial {
        base_lr: cfg.lr,
        total_steps: (cfg.epochs * steps_per_epoch) as u64,
        power: cfg.poly_power,
    };
    schedule.validate()?;
    let mut params = head.params();
    match cfg.encoder {
        EncoderChoice::Speech => params.extend(model.speech.params()),
        EncoderChoice::Rir => params.extend(model.rir.params()),
    }
    let mut opt = AdamW::new(
        params,
        AdamWConfig { weight_decay: cfg.weight_decay, ..AdamWConfig::default() },
    );
    let mut shuffle_rng = stream_rng(cfg.seed, &[5]);
    let mut metrics = Vec::new();
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.items.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(batch) {
            let (emb, labels) = forward_encoder(model, train_set, chunk, cfg.encoder, true);
            let loss_t = softmax_cross_entropy(&head.forward(&emb), &labels)?;
            let loss = loss_t.item();
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite fine-tune loss at step {step}")));
            }
            opt.zero_grad();
            loss_t.backward();
            opt.step(schedule.lr_at(step)?)?;
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
            step += 1;
        }
        let val_emb = match cfg.encoder {
            EncoderChoice::Speech => embed_speech_set(model, val_set, batch)?,
            EncoderChoice::Rir => embed_rir_features(model, val_set, batch)?,
        };
        let val_acc = crate::tasks::eval::top1_accuracy(&head.predict(&val_emb), &val_emb.labels)?;
        metrics.push(EpochMetric { epoch, train_loss: loss_sum / seen as f64, val_accuracy: val_acc });
    }
    Ok(FinetuneOutcome { head, per_epoch: metrics })
}

/// Embeddings of the paired RIR spectra a feature set carries.
pub fn embed_rir_features(model: &mut DualEncoder<Real>, set: &FeatureSet, batch: usize) -> Result<EmbeddedDataset> {
    let d = model.embedding_dim();
    let mut x = Vec::with_capacity(set.items.len() * d);
    let mut labels = Vec::with_capacity(set.items.len());
    let indices: Vec<usize> = (0..set.items.len()).collect();
    for chunk in indices.chunks(batch.max(1)) {
        let mut feats = Vec::with_capacity(chunk.len() * set.rir_bins);
        for &i in chunk {
            feats.extend_from_slice(&set.items[i].rir_spectrum);
            labels.push(set.items[i].class_id);
        }
        let xt = Tensor::new(feats, &[chunk.len(), set.rir_bins], false);
        let e = model.embed_rir(&xt, false);
        x.extend_from_slice(&e.values());
    }
    Ok(EmbeddedDataset { x, labels, n: set.items.len(), d })
}

fn forward_encoder(
    model: &mut DualEncoder<Real>,
    set: &FeatureSet,
    chunk: &[usize],
    encoder: EncoderChoice,
    train: bool,
) -> (Tensor<Real>, Vec<usize>) {
    let labels: Vec<usize> = chunk.iter().map(|&i| set.items[i].class_id as usize).collect();
    let emb = match encoder {
        EncoderChoice::Speech => {
            let mut speech = Vec::with_capacity(chunk.len() * set.frames * set.speech_bins);
            for &i in chunk {
                speech.extend_from_slice(&set.items[i].speech);
            }
            let xt = Tensor::new(speech, &[chunk.len() * set.frames, set.speech_bins], false);
            model.embed_speech(&xt, set.frames, train)
        }
        EncoderChoice::Rir => {
            let mut feats = Vec::with_capacity(chunk.len() * set.rir_bins);
            for &i in chunk {
                feats.extend_from_slice(&set.items[i].rir_spectrum);
            }
            let xt = Tensor::new(feats, &[chunk.len(), set.rir_bins], false);
            model.embed_rir(&xt, train)
        }
    };
    (emb, labels)
}

// ---- embedding cache (frozen-encoder fine-tuning computes embeddings once) ----

pub const CACHE_MAGIC: &[u8; 4] = b"RVEC";
pub const CACHE_VERSION: u32 = 1;

/// Cache file keyed by checkpoint hash: rows as f64, labels as u32.
pub fn write_embedding_cache<W: Write>(w: &mut W, checkpoint_hash: u64, set: &EmbeddedDataset) -> Result<()> {
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&checkpoint_hash.to_le_bytes())?;
    w.write_all(&(set.n as u32).to_le_bytes())?;
    w.write_all(&(set.d as u32).to_le_bytes())?;
    for &v in &set.x {
        w.write_all(&v.to_le_bytes())?;
    }
    for &l in &set.labels {
        w.write_all(&l.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_embedding_cache<R: Read>(r: &mut R, expected_hash: u64) -> Result<EmbeddedDataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Format("not an embedding cache (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != CACHE_VERSION {
        return Err(Error::Format(format!("unsupported cache version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let hash = u64::from_le_bytes(b8);
    if hash != expected_hash {
        return Err(Error::State(format!(
            "embedding cache was built for checkpoint {hash:016x}, expected {expected_hash:016x}"
        )));
    }
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let d = u32::from_le_bytes(b4) as usize;
    let mut x = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        r.read_exact(&mut b8)?;
        x.push(f64::from_le_bytes(b8));
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b4)?;
        labels.push(u32::from_le_bytes(b4));
    }
    Ok(EmbeddedDataset { x, labels, n, d })
}
