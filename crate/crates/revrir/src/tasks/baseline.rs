//! Hand-crafted RIR-feature baseline: a 30-dimensional feature vector per
//! RIR (five octave bands x five spectral/decay features, plus five
//! time-domain features) feeding a four-layer ReLU classifier.
//!
//! Feature definitions (band k spans [k*50, k*200] Hz, k = 1..5):
//!  - band decay rate, dB/s: least-squares slope of the Schroeder decay curve
//!    of the band-limited RIR over its [-25, -5] dB range
//!  - band energy fraction: band spectral energy / total spectral energy
//!  - band spectral kurtosis: Pearson kurtosis (m4/m2^2) of |H(f)| in band
//!  - band spectral std: standard deviation of |H(f)| in band
//!  - band modal peak count: local maxima of |H(f)| in band at or above the
//!    band mean magnitude
//!
//! Time-domain features:
//!  - early-reflection density: local maxima of |h| in the first 50 ms at or
//!    above -40 dB of the global peak
//!  - direct-to-reverberant ratio, dB: energy in [argmax, argmax + 2.5 ms]
//!    against the rest, clamped to +/-120 dB
//!  - full-band decay rate, dB/s (Schroeder slope as above)
//!  - kurtosis of the time-domain samples
//!  - temporal centroid, seconds

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, RoomType};
use crate::dsp::{fft_real, ifft_real, next_pow2};
use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, AdamW, AdamWConfig, Dropout, Linear, LrSchedule, Tensor};
use crate::rng::{stream_rng, Rng};
use crate::sim::Rir;
use crate::tasks::eval::{collapse_to_types, confusion, top1_accuracy, ConfusionMatrix};
use crate::Real;
use rand::seq::SliceRandom;

pub const FEATURE_COUNT: usize = 30;
pub const BAND_COUNT: usize = 5;

/// Exactly 30 finite per-RIR features.
#[derive(Debug, Clone, PartialEq)]
pub struct RirFeatureVector(pub [f64; FEATURE_COUNT]);

pub fn band_edges_hz(k: usize) -> (f64, f64) {
    (k as f64 * 50.0, k as f64 * 200.0)
}

fn kurtosis(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if m2 < 1e-300 {
        return 0.0;
    }
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2)
}

/// Least-squares slope of the Schroeder decay curve in dB/s over the
/// [-25, -5] dB region (widened to (-60, 0) when that window is degenerate;
/// 0.0 when no decay region exists at all).
fn schroeder_decay_rate(h: &[f64], fs: f64) -> f64 {
    let energy: Vec<f64> = h.iter().map(|v| v * v).collect();
    let total: f64 = energy.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut tail = total;
    let mut curve_db = Vec::with_capacity(h.len());
    for &e in &energy {
        curve_db.push(10.0 * (tail.max(1e-300) / total).log10());
        tail -= e;
    }
    let fit = |lo_db: f64, hi_db: f64| -> Option<f64> {
        let pts: Vec<(f64, f64)> = curve_db
            .iter()
            .enumerate()
            .filter(|(_, &l)| l <= hi_db && l >= lo_db)
            .map(|(k, &l)| (k as f64 / fs, l))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = n * sxx - sx * sx;
        if denom.abs() < 1e-300 {
            return None;
        }
        Some((n * sxy - sx * sy) / denom)
    };
    fit(-25.0, -5.0).or_else(|| fit(-60.0, -1e-9)).unwrap_or(0.0)
}

fn local_maxima_count(xs: &[f64], threshold: f64) -> f64 {
    let mut count = 0usize;
    for i in 1..xs.len().saturating_sub(1) {
        if xs[i] >= threshold && xs[i] > xs[i - 1] && xs[i] >= xs[i + 1] {
            count += 1;
        }
    }
    count as f64
}

/// Deterministic 30-feature vector; errors on silent input (undefined decay).
pub fn baseline_features(rir: &Rir) -> Result<RirFeatureVector> {
    let h = &rir.samples;
    let fs = rir.sample_rate as f64;
    let total_energy: f64 = h.iter().map(|v| v * v).sum();
    if total_energy <= 0.0 {
        return Err(Error::Data(format!(
            "silent RIR (class {}): decay features undefined",
            rir.class_id
        )));
    }
    let n = next_pow2(h.len());
    let spectrum = fft_real(h, n)?;
    let mags: Vec<f64> = spectrum.iter().map(|c| c.abs()).collect();
    let bin_hz = fs / n as f64;
    let spectral_energy: f64 = mags.iter().map(|m| m * m).sum();

    let mut out = [0.0f64; FEATURE_COUNT];
    let mut w = 0usize;
    for k in 1..=BAND_COUNT {
        let (lo, hi) = band_edges_hz(k);
        let lo_bin = (lo / bin_hz).ceil() as usize;
        let hi_bin = ((hi / bin_hz).floor() as usize).min(mags.len() - 1);
        if lo_bin >= hi_bin {
            return Err(Error::Validation(format!(
                "band {k} [{lo}, {hi}] Hz resolves to no bins at fs {fs}"
            )));
        }
        let band = &mags[lo_bin..=hi_bin];

        // band-limit in the frequency domain, then Schroeder on the result
        let mut masked = vec![crate::dsp::Complex::<f64>::zero(); spectrum.len()];
        masked[lo_bin..=hi_bin].copy_from_slice(&spectrum[lo_bin..=hi_bin]);
        let band_time = ifft_real(&masked, n)?;
        out[w] = schroeder_decay_rate(&band_time[..h.len()], fs);
        w += 1;

        let band_energy: f64 = band.iter().map(|m| m * m).sum();
        out[w] = band_energy / spectral_energy;
        w += 1;
        out[w] = kurtosis(band);
        w += 1;
        let mean = band.iter().sum::<f64>() / band.len() as f64;
        let var = band.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / band.len() as f64;
        out[w] = var.sqrt();
        w += 1;
        out[w] = local_maxima_count(band, mean);
        w += 1;
    }

    // time-domain quintet
    let abs: Vec<f64> = h.iter().map(|v| v.abs()).collect();
    let peak = abs.iter().cloned().fold(0.0f64, f64::max);
    let early_len = ((0.050 * fs) as usize).min(abs.len());
    out[w] = local_maxima_count(&abs[..early_len], peak * 10f64.powf(-40.0 / 20.0));
    w += 1;

    let t0 = abs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let direct_end = (t0 + (0.0025 * fs) as usize).min(h.len());
    let e_direct: f64 = h[t0..direct_end].iter().map(|v| v * v).sum();
    let e_rest = (total_energy - e_direct).max(0.0);
    out[w] = if e_rest <= 0.0 {
        120.0
    } else {
        (10.0 * (e_direct / e_rest).log10()).clamp(-120.0, 120.0)
    };
    w += 1;

    out[w] = schroeder_decay_rate(h, fs);
    w += 1;
    out[w] = kurtosis(h);
    w += 1;
    let centroid_num: f64 = h.iter().enumerate().map(|(k, v)| k as f64 * v * v).sum();
    out[w] = centroid_num / total_energy / fs;
    w += 1;
    debug_assert_eq!(w, FEATURE_COUNT);

    if let Some(bad) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "non-finite feature {bad} for RIR of class {}",
            rir.class_id
        )));
    }
    Ok(RirFeatureVector(out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_ratio: f64,
    pub dropout: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr: 1e-3,
            warmup_ratio: 0.1,
            dropout: 0.2,
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

/// Reference interior widths for the 110-class setting; scaled
/// proportionally (rounded, floor 1) for other class counts.
pub fn scaled_widths(classes: usize) -> [usize; 3] {
    let scale = classes as f64 / 110.0;
    let w = |base: f64| ((base * scale).round() as usize).max(1);
    [w(65.0), w(90.0), w(100.0)]
}

/// Four fully connected layers with ReLU after all but the last, dropout
/// after each ReLU during training.
pub struct BaselineNet {
    pub layers: [Linear<Real>; 4],
    pub dropout: Dropout,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
}

impl BaselineNet {
    pub fn new(classes: usize, dropout: f64, rng: &mut Rng) -> Self {
        let [w1, w2, w3] = scaled_widths(classes);
        BaselineNet {
            layers: [
                Linear::new(FEATURE_COUNT, w1, rng),
                Linear::new(w1, w2, rng),
                Linear::new(w2, w3, rng),
                Linear::new(w3, classes, rng),
            ],
            dropout: Dropout::new(dropout),
            feature_mean: vec![0.0; FEATURE_COUNT],
            feature_std: vec![1.0; FEATURE_COUNT],
        }
    }

    fn standardize(&self, features: &[RirFeatureVector]) -> Vec<Real> {
        let mut out = Vec::with_capacity(features.len() * FEATURE_COUNT);
        for f in features {
            for j in 0..FEATURE_COUNT {
                out.push((f.0[j] - self.feature_mean[j]) / self.feature_std[j]);
            }
        }
        out
    }

    pub fn forward(&mut self, x: &Tensor<Real>, train: bool, rng: &mut Rng) -> Tensor<Real> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i + 1 < self.layers.len() {
                h = h.relu();
                h = self.dropout.forward(&h, train, rng);
            }
        }
        h
    }

    pub fn params(&self) -> Vec<Tensor<Real>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn predict(&mut self, features: &[RirFeatureVector]) -> Vec<u32> {
        let classes = self.layers[3].out_dim;
        let x = Tensor::new(self.standardize(features), &[features.len(), FEATURE_COUNT], false);
        let mut rng = stream_rng(0, &[0]);
        let logits = self.forward(&x, false, &mut rng);
        let lv = logits.values();
        (0..features.len())
            .map(|i| {
                let row = &lv[i * classes..(i + 1) * classes];
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0 as u32
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub top1: f64,
    pub type_accuracy: f64,
    pub confusion_rooms: ConfusionMatrix,
    pub confusion_types: ConfusionMatrix,
    pub per_epoch_loss: Vec<f64>,
}

/// Extract features for the named per-class canonical positions.
pub fn extract_split_features(
    bank: &[Rir],
    canon: &BTreeMap<u32, Vec<usize>>,
    positions: &BTreeMap<u32, Vec<usize>>,
) -> Result<(Vec<RirFeatureVector>, Vec<u32>)> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (&class, pos) in positions {
        let class_canon = canon
            .get(&class)
            .ok_or_else(|| Error::Lookup(format!("class {class} not in bank")))?;
        for &p in pos {
            let global = *class_canon.get(p).ok_or_else(|| {
                Error::Lookup(format!("class {class}: position {p} beyond bank"))
            })?;
            features.push(baseline_features(&bank[global]).map_err(|e| {
                Error::Data(format!("class {class} position {p}: {e}"))
            })?);
            labels.push(class);
        }
    }
    Ok((features, labels))
}

/// Train the baseline classifier on training-split RIR features and evaluate
/// on the validation split: Top-1, room confusion, and the 3-type collapse.
pub fn baseline_train_eval(
    bank: &[Rir],
    catalog: &Catalog,
    canon: &BTreeMap<u32, Vec<usize>>,
    train_positions: &BTreeMap<u32, Vec<usize>>,
    val_positions: &BTreeMap<u32, Vec<usize>>,
    cfg: &BaselineConfig,
) -> Result<(BaselineNet, BaselineReport)> {
    let (train_feats, train_labels) = extract_split_features(bank, canon, train_positions)?;
    let (val_feats, val_labels) = extract_split_features(bank, canon, val_positions)?;
    let classes = catalog.len();

    let mut rng = stream_rng(cfg.seed, &[7]);
    let mut net = BaselineNet::new(classes, cfg.dropout, &mut rng);
    // per-feature standardization fitted on the training split
    for j in 0..FEATURE_COUNT {
        let col: Vec<f64> = train_feats.iter().map(|f| f.0[j]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        net.feature_mean[j] = mean;
        net.feature_std[j] = var.sqrt().max(1e-12);
    }

    let x_all = net.standardize(&train_feats);
    let n = train_feats.len();
    let batch = cfg.batch_size.clamp(1, n);
    let steps_per_epoch = n.div_ceil(batch);
    let schedule = LrSchedule::LinearWarmup {
        base_lr: cfg.lr,
        total_steps: (cfg.epochs * steps_per_epoch) as u64,
        warmup_ratio: cfg.warmup_ratio,
    };
    schedule.validate()?;
    let mut opt = AdamW::new(
        net.params(),
        AdamWConfig { weight_decay: cfg.weight_decay, ..AdamWConfig::default() },
    );
    let mut shuffle_rng = stream_rng(cfg.seed, &[8]);
    let mut dropout_rng = stream_rng(cfg.seed, &[9]);
    let mut per_epoch_loss = Vec::new();
    let mut step = 0u64;
    for _epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch) {
            let mut x = Vec::with_capacity(chunk.len() * FEATURE_COUNT);
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                x.extend_from_slice(&x_all[i * FEATURE_COUNT..(i + 1) * FEATURE_COUNT]);
                labels.push(train_labels[i] as usize);
            }
            let xt = Tensor::new(x, &[chunk.len(), FEATURE_COUNT], false);
            let logits = net.forward(&xt, true, &mut dropout_rng);
            let loss_t = softmax_cross_entropy(&logits, &labels)?;
            let loss = loss_t.item();
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite baseline loss at step {step}")));
            }
            opt.zero_grad();
            loss_t.backward();
            opt.step(schedule.lr_at(step)?)?;
            loss_sum += loss * chunk.len() as f64;
            step += 1;
        }
        per_epoch_loss.push(loss_sum / n as f64);
    }

    let preds = net.predict(&val_feats);
    let top1 = top1_accuracy(&preds, &val_labels)?;
    let room_names: Vec<String> = (0..classes).map(|c| format!("room{c}")).collect();
    let confusion_rooms = confusion(&preds, &val_labels, classes, room_names)?;
    let type_preds = collapse_to_types(&preds, catalog)?;
    let type_labels = collapse_to_types(&val_labels, catalog)?;
    let type_accuracy = top1_accuracy(&type_preds, &type_labels)?;
    let type_names: Vec<String> = RoomType::ALL.iter().map(|t| t.name().to_string()).collect();
    let confusion_types = confusion(&type_preds, &type_labels, 3, type_names)?;

    Ok((
        net,
        BaselineReport { top1, type_accuracy, confusion_rooms, confusion_types, per_epoch_loss },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Placement;

    fn rir_from(samples: Vec<f64>) -> Rir {
        Rir {
            samples,
            sample_rate: 8000,
            class_id: 0,
            placement: Placement { source: [1.0; 3], microphone: [2.0; 3] },
            beta: 0.9,
        }
    }

    #[test]
    fn band_edges_follow_the_k_rule() {
        assert_eq!(band_edges_hz(3), (150.0, 600.0));
        assert_eq!(band_edges_hz(1), (50.0, 200.0));
        assert_eq!(band_edges_hz(5), (250.0, 1000.0));
    }

    #[test]
    fn exponential_decay_matches_analytic_slope() {
        // h[k] = exp(-k/(tau*fs)) on every sample: Schroeder slope is
        // -20/(tau ln 10) dB/s
        let fs = 8000.0;
        let tau = 0.05;
        let h: Vec<f64> = (0..4096).map(|k| (-(k as f64) / (tau * fs)).exp()).collect();
        let rate = schroeder_decay_rate(&h, fs);
        let analytic = -20.0 / (tau * 10f64.ln());
        assert!(
            (rate - analytic).abs() / analytic.abs() < 0.05,
            "rate {rate} vs analytic {analytic}"
        );
    }

    #[test]
    fn silent_rir_is_rejected() {
        let rir = rir_from(vec![0.0; 1024]);
        assert!(matches!(baseline_features(&rir), Err(Error::Data(_))));
    }

    #[test]
    fn features_are_deterministic_and_finite() {
        let mut samples = vec![0.0; 2048];
        for (k, s) in samples.iter_mut().enumerate() {
            *s = (-(k as f64) / 400.0).exp() * ((k * 2654435761) as f64 % 17.0 - 8.0) / 8.0;
        }
        let rir = rir_from(samples);
        let a = baseline_features(&rir).unwrap();
        let b = baseline_features(&rir).unwrap();
        assert_eq!(a, b);
        assert!(a.0.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn scale_invariant_features_hold_under_gain() {
        let mut samples = vec![0.0; 2048];
        for (k, s) in samples.iter_mut().enumerate() {
            *s = (-(k as f64) / 300.0).exp() * (((k * 48271) % 31) as f64 - 15.0) / 15.0;
        }
        let rir = rir_from(samples.clone());
        let scaled = rir_from(samples.iter().map(|v| 2.0 * v).collect());
        let a = baseline_features(&rir).unwrap();
        let b = baseline_features(&scaled).unwrap();
        for k in 0..BAND_COUNT {
            let base = k * 5;
            assert!((a.0[base] - b.0[base]).abs() < 1e-6, "band decay changed");
            assert!((a.0[base + 1] - b.0[base + 1]).abs() < 1e-9, "energy fraction changed");
            assert!((a.0[base + 2] - b.0[base + 2]).abs() < 1e-9, "kurtosis changed");
            assert!((b.0[base + 3] / a.0[base + 3] - 2.0).abs() < 1e-9, "std should double");
            assert_eq!(a.0[base + 4], b.0[base + 4], "peak count changed");
        }
        assert_eq!(a.0[25], b.0[25], "early reflection count changed");
        assert!((a.0[26] - b.0[26]).abs() < 1e-9, "DRR changed");
        assert!((a.0[27] - b.0[27]).abs() < 1e-6, "full-band decay changed");
        assert!((a.0[28] - b.0[28]).abs() < 1e-9, "kurtosis changed");
        assert!((a.0[29] - b.0[29]).abs() < 1e-12, "centroid changed");
    }

    #[test]
    fn width_scaling() {
        assert_eq!(scaled_widths(110), [65, 90, 100]);
        assert_eq!(scaled_widths(6), [4, 5, 5]);
    }
}
