//! Source-signal provisioning and dataset assembly: synthetic speech-shaped
//! utterances, strict 8 kHz/16-bit WAV ingestion, reverberation, and
//! leakage-free train/validation splits (disjoint RIRs, disjoint sources,
//! every class present on both sides).

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dsp::{convolve, Signal};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::sim::Rir;
use crate::Real;

pub const REQUIRED_SAMPLE_RATE: u32 = 8000;
pub const MIN_DURATION_S: f64 = 0.5;
pub const MAX_DURATION_S: f64 = 10.0;

/// Dry source signal with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub signal: Signal<Real>,
    pub source_id: String,
}

impl Utterance {
    pub fn new(signal: Signal<Real>, source_id: impl Into<String>) -> Result<Self> {
        if signal.sample_rate != REQUIRED_SAMPLE_RATE {
            return Err(Error::Format(format!(
                "sample_rate: expected {REQUIRED_SAMPLE_RATE}, found {}",
                signal.sample_rate
            )));
        }
        let dur = signal.duration_s();
        if !(MIN_DURATION_S..=MAX_DURATION_S).contains(&dur) {
            return Err(Error::Validation(format!(
                "duration {dur:.3} s outside [{MIN_DURATION_S}, {MAX_DURATION_S}]"
            )));
        }
        Ok(Utterance { signal, source_id: source_id.into() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub sample_rate: u32,
    /// One-pole lowpass corner; gives the -6 dB/octave tilt above it.
    pub tilt_cutoff_hz: f64,
    pub tilt: bool,
    /// Mean syllabic modulation rate; per-clip rate is uniform in +/- 1 Hz.
    pub mod_rate_hz: f64,
    pub gap_min_s: f64,
    pub gap_max_s: f64,
    pub peak: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: REQUIRED_SAMPLE_RATE,
            tilt_cutoff_hz: 500.0,
            tilt: true,
            mod_rate_hz: 4.0,
            gap_min_s: 0.1,
            gap_max_s: 0.4,
            peak: 0.5,
        }
    }
}

/// Speech-shaped noise: tilted white noise, a sinusoidal syllabic envelope,
/// and at least one silent gap per second (two per 2 s), peak-normalized.
/// Deterministic in `seed`; the source id records it.
pub fn synth_utterance(seed: u64, duration_s: f64, cfg: &SynthConfig) -> Result<Utterance> {
    if !(MIN_DURATION_S..=MAX_DURATION_S).contains(&duration_s) {
        return Err(Error::Validation(format!(
            "duration {duration_s} s outside [{MIN_DURATION_S}, {MAX_DURATION_S}]"
        )));
    }
    let fs = cfg.sample_rate as f64;
    let n = (duration_s * fs).round() as usize;
    let mut rng = stream_rng(seed, &[0x5e]);

    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

    if cfg.tilt {
        let a = (-2.0 * std::f64::consts::PI * cfg.tilt_cutoff_hz / fs).exp();
        let mut prev = 0.0;
        for v in x.iter_mut() {
            prev = (1.0 - a) * *v + a * prev;
            *v = prev;
        }
    }

    let mod_rate = cfg.mod_rate_hz + rng.gen_range(-1.0..1.0);
    let phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
    for (i, v) in x.iter_mut().enumerate() {
        let t = i as f64 / fs;
        let env = 0.55 + 0.45 * (2.0 * std::f64::consts::PI * mod_rate * t + phase).sin();
        *v *= env;
    }

    // two gaps per 2 s of audio, at least one
    let gap_count = ((duration_s).floor() as usize).max(1);
    let ramp = (0.010 * fs) as usize;
    for _ in 0..gap_count {
        let gap_len = (rng.gen_range(cfg.gap_min_s..cfg.gap_max_s) * fs) as usize;
        if gap_len + 2 * ramp >= n {
            continue;
        }
        let start = rng.gen_range(0..n - gap_len);
        for j in 0..gap_len {
            let w = if j < ramp {
                0.5 * (1.0 + (std::f64::consts::PI * j as f64 / ramp as f64).cos())
            } else if j >= gap_len - ramp {
                0.5 * (1.0 - (std::f64::consts::PI * (gap_len - 1 - j) as f64 / ramp as f64).cos())
            } else {
                0.0
            };
            x[start + j] *= w;
        }
    }

    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = cfg.peak / peak;
        for v in x.iter_mut() {
            *v *= g;
        }
    }

    Utterance::new(
        Signal::new(x, cfg.sample_rate),
        format!("synth-{seed:016x}"),
    )
}

// ---- WAV I/O (PCM, 16-bit, mono, 8 kHz; no silent resampling) ----

pub fn save_wav<W: Write>(w: &mut W, signal: &Signal<Real>) -> Result<()> {
    let n = signal.len() as u32;
    let byte_rate = signal.sample_rate * 2;
    let data_len = n * 2;
    w.write_all(b"RIFF")?;
    w.write_all(&(36 + data_len).to_le_bytes())?;
    w.write_all(b"WAVE")?;
    w.write_all(b"fmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&1u16.to_le_bytes())?; // PCM
    w.write_all(&1u16.to_le_bytes())?; // mono
    w.write_all(&signal.sample_rate.to_le_bytes())?;
    w.write_all(&byte_rate.to_le_bytes())?;
    w.write_all(&2u16.to_le_bytes())?; // block align
    w.write_all(&16u16.to_le_bytes())?; // bits per sample
    w.write_all(b"data")?;
    w.write_all(&data_len.to_le_bytes())?;
    for &v in &signal.samples {
        let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_all(&q.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_wav_file(path: &Path, signal: &Signal<Real>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    save_wav(&mut f, signal)
}

pub fn load_wav<R: Read>(r: &mut R) -> Result<Signal<Real>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("container: not a RIFF/WAVE file".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = (pos + 8 + size).min(bytes.len());
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::Format("fmt: chunk too short".into()));
                }
                let audio_format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let sample_rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((audio_format, channels, sample_rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos += 8 + size + (size & 1);
    }
    let (audio_format, channels, sample_rate, bits) =
        fmt.ok_or_else(|| Error::Format("fmt: chunk missing".into()))?;
    if audio_format != 1 {
        return Err(Error::Format(format!("audio_format: expected PCM (1), found {audio_format}")));
    }
    if channels != 1 {
        return Err(Error::Format(format!("channels: expected mono (1), found {channels}")));
    }
    if sample_rate != REQUIRED_SAMPLE_RATE {
        return Err(Error::Format(format!(
            "sample_rate: expected {REQUIRED_SAMPLE_RATE}, found {sample_rate}"
        )));
    }
    if bits != 16 {
        return Err(Error::Format(format!("bits_per_sample: expected 16, found {bits}")));
    }
    let data = data.ok_or_else(|| Error::Format("data: chunk missing".into()))?;
    let samples: Vec<Real> = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as Real / 32768.0)
        .collect();
    Ok(Signal::new(samples, sample_rate))
}

pub fn load_wav_file(path: &Path) -> Result<Utterance> {
    let mut f = std::fs::File::open(path)?;
    let signal = load_wav(&mut f)?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("wav")
        .to_string();
    Utterance::new(signal, stem)
}

/// Reverberated, labeled product of an utterance and an RIR.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverberantClip {
    pub signal: Signal<Real>,
    pub class_id: u32,
    /// Per-class canonical index of the RIR that produced this clip.
    pub rir_index: usize,
    pub source_id: String,
    /// Peak-normalization gain applied to the raw convolution.
    pub gain: f64,
}

/// Convolve, truncate to the utterance length, peak-normalize to 0.9 with the
/// gain recorded.
pub fn reverberate(s: &Utterance, h: &Rir, rir_index: usize) -> Result<ReverberantClip> {
    let mut y = convolve(&s.signal, &h.signal())?;
    y.samples.truncate(s.signal.len());
    let peak = y.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak <= 0.0 {
        return Err(Error::Data(format!(
            "silent reverberant output (source {}, class {})",
            s.source_id, h.class_id
        )));
    }
    let gain = 0.9 / peak;
    for v in y.samples.iter_mut() {
        *v *= gain;
    }
    Ok(ReverberantClip {
        signal: y,
        class_id: h.class_id,
        rir_index,
        source_id: s.source_id.clone(),
        gain,
    })
}

// ---- splits and dataset assembly ----

/// Canonical per-class ordering of bank entries, independent of bank order:
/// global indices sorted by (placement, beta) content.
pub fn per_class_canonical(bank: &[Rir]) -> BTreeMap<u32, Vec<usize>> {
    let mut map: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, r) in bank.iter().enumerate() {
        map.entry(r.class_id).or_default().push(i);
    }
    for indices in map.values_mut() {
        indices.sort_by(|&a, &b| {
            let ka = content_key(&bank[a]);
            let kb = content_key(&bank[b]);
            ka.partial_cmp(&kb).unwrap()
        });
    }
    map
}

fn content_key(r: &Rir) -> [f64; 7] {
    let p = &r.placement;
    [
        p.source[0], p.source[1], p.source[2],
        p.microphone[0], p.microphone[1], p.microphone[2],
        r.beta,
    ]
}

/// Disjoint RIR indices (per-class canonical positions) and disjoint source
/// ids for the two splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPolicy {
    /// class id -> canonical RIR positions assigned to training
    pub train_rirs: BTreeMap<u32, Vec<usize>>,
    pub val_rirs: BTreeMap<u32, Vec<usize>>,
    pub train_sources: Vec<String>,
    pub val_sources: Vec<String>,
}

impl SplitPolicy {
    /// First `rir_train_frac` of each class's canonical RIRs to train, the
    /// rest to validation; same scheme for sources in pool order.
    pub fn fractional(
        bank: &[Rir],
        sources: &[Utterance],
        rir_train_frac: f64,
        source_train_frac: f64,
    ) -> Result<SplitPolicy> {
        let canon = per_class_canonical(bank);
        let mut train_rirs = BTreeMap::new();
        let mut val_rirs = BTreeMap::new();
        for (&class, indices) in &canon {
            let k = ((indices.len() as f64) * rir_train_frac).round() as usize;
            let k = k.clamp(1, indices.len().saturating_sub(1).max(1));
            if indices.len() < 2 {
                return Err(Error::Config(format!(
                    "class {class} has {} RIRs; need at least 2 to split",
                    indices.len()
                )));
            }
            train_rirs.insert(class, (0..k).collect());
            val_rirs.insert(class, (k..indices.len()).collect());
        }
        let ids: Vec<String> = sources.iter().map(|s| s.source_id.clone()).collect();
        let uniq: BTreeSet<&String> = ids.iter().collect();
        if uniq.len() != ids.len() {
            return Err(Error::Config("duplicate source ids in pool".into()));
        }
        if ids.len() < 2 {
            return Err(Error::Config("need at least 2 sources to split".into()));
        }
        let k = (((ids.len() as f64) * source_train_frac).round() as usize).clamp(1, ids.len() - 1);
        let policy = SplitPolicy {
            train_rirs,
            val_rirs,
            train_sources: ids[..k].to_vec(),
            val_sources: ids[k..].to_vec(),
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        let classes: BTreeSet<&u32> = self.train_rirs.keys().collect();
        let val_classes: BTreeSet<&u32> = self.val_rirs.keys().collect();
        if classes != val_classes {
            return Err(Error::Config("a class is missing from one split".into()));
        }
        for (class, t) in &self.train_rirs {
            let v = &self.val_rirs[class];
            if t.is_empty() || v.is_empty() {
                return Err(Error::Config(format!("class {class}: empty split")));
            }
            let ts: BTreeSet<usize> = t.iter().copied().collect();
            if v.iter().any(|i| ts.contains(i)) {
                return Err(Error::Config(format!("class {class}: RIR index in both splits")));
            }
        }
        let ts: BTreeSet<&String> = self.train_sources.iter().collect();
        if self.val_sources.iter().any(|s| ts.contains(s)) {
            return Err(Error::Config("source id in both splits".into()));
        }
        if self.train_sources.is_empty() || self.val_sources.is_empty() {
            return Err(Error::Config("empty source split".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

/// One training pair: a reverberant clip and a same-class RIR that need not
/// be the one the clip was convolved with.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub clip: ReverberantClip,
    /// Per-class canonical position of the paired RIR.
    pub pair_rir_index: usize,
    pub class_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub items: Vec<DatasetItem>,
}

/// Balanced datasets: `pairs_per_class` items per class per split, each with
/// a fresh (source, clip RIR, pair RIR) draw from the split's own pools.
pub fn build_dataset(
    bank: &[Rir],
    pool: &[Utterance],
    policy: &SplitPolicy,
    pairs_per_class: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    policy.validate()?;
    if pairs_per_class == 0 {
        return Err(Error::Validation("pairs_per_class must be >= 1".into()));
    }
    let canon = per_class_canonical(bank);
    let by_id: BTreeMap<&str, &Utterance> =
        pool.iter().map(|u| (u.source_id.as_str(), u)).collect();

    let mut out = Vec::new();
    for (split, rirs, sources, tag) in [
        (Split::Train, &policy.train_rirs, &policy.train_sources, 0u64),
        (Split::Val, &policy.val_rirs, &policy.val_sources, 1u64),
    ] {
        let mut items = Vec::new();
        for (&class, positions) in rirs {
            let class_canon = canon.get(&class).ok_or_else(|| {
                Error::Config(format!("class {class} in policy but absent from bank"))
            })?;
            for p in positions {
                if *p >= class_canon.len() {
                    return Err(Error::Config(format!(
                        "class {class}: RIR position {p} beyond bank ({})",
                        class_canon.len()
                    )));
                }
            }
            for j in 0..pairs_per_class {
                let mut rng = stream_rng(seed, &[2, tag, class as u64, j as u64]);
                let source_id = &sources[rng.gen_range(0..sources.len())];
                let clip_pos = positions[rng.gen_range(0..positions.len())];
                let pair_pos = positions[rng.gen_range(0..positions.len())];
                let source = by_id.get(source_id.as_str()).ok_or_else(|| {
                    Error::Config(format!("source '{source_id}' not in pool"))
                })?;
                let clip = reverberate(source, &bank[class_canon[clip_pos]], clip_pos)?;
                items.push(DatasetItem { clip, pair_rir_index: pair_pos, class_id: class });
            }
        }
        out.push(Dataset { split, items });
    }
    let val = out.pop().unwrap();
    let train = out.pop().unwrap();
    assert_split_leakage_free(&train, &val, policy)?;
    Ok((train, val))
}

/// Set-intersection checks run at build time; leakage is a hard error.
fn assert_split_leakage_free(train: &Dataset, val: &Dataset, policy: &SplitPolicy) -> Result<()> {
    let train_rirs: BTreeSet<(u32, usize)> = train
        .items
        .iter()
        .flat_map(|i| [(i.class_id, i.clip.rir_index), (i.class_id, i.pair_rir_index)])
        .collect();
    for i in &val.items {
        if train_rirs.contains(&(i.class_id, i.clip.rir_index))
            || train_rirs.contains(&(i.class_id, i.pair_rir_index))
        {
            return Err(Error::Config(format!(
                "RIR leakage between splits for class {}",
                i.class_id
            )));
        }
    }
    let train_sources: BTreeSet<&str> = policy.train_sources.iter().map(|s| s.as_str()).collect();
    for i in &val.items {
        if train_sources.contains(i.clip.source_id.as_str()) {
            return Err(Error::Config(format!(
                "source leakage between splits ('{}')",
                i.clip.source_id
            )));
        }
    }
    Ok(())
}

/// Resolve a dataset item's paired RIR within the bank.
pub fn pair_rir<'a>(bank: &'a [Rir], canon: &BTreeMap<u32, Vec<usize>>, item: &DatasetItem) -> Result<&'a Rir> {
    let positions = canon
        .get(&item.class_id)
        .ok_or_else(|| Error::Lookup(format!("class {} not in bank", item.class_id)))?;
    let global = positions.get(item.pair_rir_index).ok_or_else(|| {
        Error::Lookup(format!(
            "class {}: pair position {} beyond bank",
            item.class_id, item.pair_rir_index
        ))
    })?;
    Ok(&bank[*global])
}

// ---- manifest ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSpec {
    Synth { source_id: String, seed: u64, duration_s: f64 },
    Wav { source_id: String, path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub split: Split,
    pub class_id: u32,
    pub source_id: String,
    pub clip_rir_index: usize,
    pub pair_rir_index: usize,
}

/// Together with the RIR bank, fully reproduces a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub sources: Vec<SourceSpec>,
    pub policy: SplitPolicy,
    pub pairs_per_class: usize,
    pub seed: u64,
    pub items: Vec<ManifestItem>,
}

impl Manifest {
    pub fn from_datasets(
        config_hash: u64,
        sources: Vec<SourceSpec>,
        policy: &SplitPolicy,
        pairs_per_class: usize,
        seed: u64,
        train: &Dataset,
        val: &Dataset,
    ) -> Manifest {
        let mut items = Vec::new();
        for ds in [train, val] {
            for i in &ds.items {
                items.push(ManifestItem {
                    split: ds.split,
                    class_id: i.class_id,
                    source_id: i.clip.source_id.clone(),
                    clip_rir_index: i.clip.rir_index,
                    pair_rir_index: i.pair_rir_index,
                });
            }
        }
        Manifest {
            config_hash: format!("{config_hash:016x}"),
            sources,
            policy: policy.clone(),
            pairs_per_class,
            seed,
            items,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("manifest serialization: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Manifest> {
        serde_json::from_str(s).map_err(|e| Error::Format(format!("manifest parse: {e}")))
    }

    /// Re-synthesize (or re-load) the utterance pool this manifest names.
    pub fn materialize_pool(&self, cfg: &SynthConfig, base_dir: &Path) -> Result<Vec<Utterance>> {
        let mut pool = Vec::new();
        for s in &self.sources {
            match s {
                SourceSpec::Synth { source_id, seed, duration_s } => {
                    let u = synth_utterance(*seed, *duration_s, cfg)?;
                    if &u.source_id != source_id {
                        return Err(Error::Config(format!(
                            "manifest source '{source_id}' does not match synthesis id '{}'",
                            u.source_id
                        )));
                    }
                    pool.push(u);
                }
                SourceSpec::Wav { path, .. } => {
                    pool.push(load_wav_file(&base_dir.join(path))?);
                }
            }
        }
        Ok(pool)
    }
}

/// A deterministic synthetic pool of `count` utterances.
pub fn synth_pool(count: usize, duration_s: f64, seed: u64, cfg: &SynthConfig) -> Result<(Vec<Utterance>, Vec<SourceSpec>)> {
    let mut pool = Vec::with_capacity(count);
    let mut specs = Vec::with_capacity(count);
    for i in 0..count {
        let item_seed = crate::rng::derive_seed(seed, &[3, i as u64]);
        let u = synth_utterance(item_seed, duration_s, cfg)?;
        specs.push(SourceSpec::Synth {
            source_id: u.source_id.clone(),
            seed: item_seed,
            duration_s,
        });
        pool.push(u);
    }
    Ok((pool, specs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{enumerate_rooms, DimensionRange, TypeGrid, TypeGrids};
    use crate::sim::{generate_rir_bank, AcousticConfig, ImageOrder};

    fn test_bank() -> Vec<Rir> {
        let g = |w: f64, d: f64| TypeGrid {
            width: DimensionRange::new(w, w, 1.0).unwrap(),
            depth: DimensionRange::new(d, d, 1.0).unwrap(),
            height: DimensionRange::new(3.0, 3.0, 1.0).unwrap(),
        };
        let catalog = enumerate_rooms(&TypeGrids {
            grids: [g(3.5, 4.5), g(8.0, 9.0), g(2.0, 9.0)],
        })
        .unwrap();
        let config = AcousticConfig {
            rir_length: 1024,
            max_image_order: ImageOrder::Max(2),
            ..AcousticConfig::default()
        };
        generate_rir_bank(&catalog, 4, 99, &config, 1).unwrap()
    }

    #[test]
    fn synth_respects_length_and_peak() {
        let u = synth_utterance(42, 2.0, &SynthConfig::default()).unwrap();
        assert_eq!(u.signal.len(), 16000);
        let peak = u.signal.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.5).abs() < 1e-6);
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_utterance(7, 1.0, &SynthConfig::default()).unwrap();
        let b = synth_utterance(7, 1.0, &SynthConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synth_duration_bounds() {
        assert!(synth_utterance(1, 0.4, &SynthConfig::default()).is_err());
        assert!(synth_utterance(1, 10.5, &SynthConfig::default()).is_err());
    }

    #[test]
    fn tilt_lowers_spectral_centroid() {
        let tilted = synth_utterance(5, 2.0, &SynthConfig::default()).unwrap();
        let flat = synth_utterance(5, 2.0, &SynthConfig { tilt: false, ..Default::default() }).unwrap();
        let centroid = |u: &Utterance| {
            let spec = crate::dsp::fft_real(&u.signal.samples, 16384).unwrap();
            let mut num = 0.0;
            let mut den = 0.0;
            for (k, c) in spec.iter().enumerate() {
                let m = c.abs();
                num += k as f64 * m * m;
                den += m * m;
            }
            num / den
        };
        assert!(centroid(&tilted) < centroid(&flat));
    }

    #[test]
    fn wav_round_trip_within_quantization() {
        let u = synth_utterance(9, 1.0, &SynthConfig::default()).unwrap();
        let mut buf = Vec::new();
        save_wav(&mut buf, &u.signal).unwrap();
        let back = load_wav(&mut buf.as_slice()).unwrap();
        assert_eq!(back.len(), u.signal.len());
        for (a, b) in back.samples.iter().zip(u.signal.samples.iter()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn wav_rejects_wrong_rate_and_channels() {
        let u = synth_utterance(9, 1.0, &SynthConfig::default()).unwrap();
        let mut buf = Vec::new();
        save_wav(&mut buf, &u.signal).unwrap();
        // corrupt: claim 44100 Hz
        let mut bad_rate = buf.clone();
        bad_rate[24..28].copy_from_slice(&44100u32.to_le_bytes());
        match load_wav(&mut bad_rate.as_slice()) {
            Err(Error::Format(msg)) => assert!(msg.contains("sample_rate")),
            other => panic!("expected format error, got {other:?}"),
        }
        // corrupt: claim stereo
        let mut bad_ch = buf.clone();
        bad_ch[22..24].copy_from_slice(&2u16.to_le_bytes());
        match load_wav(&mut bad_ch.as_slice()) {
            Err(Error::Format(msg)) => assert!(msg.contains("channels")),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn reverberate_with_delta_recovers_input() {
        let u = synth_utterance(11, 1.0, &SynthConfig::default()).unwrap();
        let mut delta = vec![0.0; 256];
        delta[0] = 1.0;
        let h = Rir {
            samples: delta,
            sample_rate: 8000,
            class_id: 3,
            placement: crate::sim::Placement { source: [1.0; 3], microphone: [2.0; 3] },
            beta: 0.0,
        };
        let clip = reverberate(&u, &h, 0).unwrap();
        assert_eq!(clip.signal.len(), u.signal.len());
        assert_eq!(clip.class_id, 3);
        // x = s * gain
        for (a, b) in clip.signal.samples.iter().zip(u.signal.samples.iter()) {
            assert!((a - b * clip.gain).abs() < 1e-9);
        }
        let peak = clip.signal.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.9).abs() < 1e-9);
    }

    #[test]
    fn reverberation_is_linear_before_normalization() {
        let u1 = synth_utterance(21, 1.0, &SynthConfig::default()).unwrap();
        let u2 = synth_utterance(22, 1.0, &SynthConfig::default()).unwrap();
        let bank = test_bank();
        let h = &bank[0];
        let conv = |s: &Signal<Real>| {
            let mut y = convolve(s, &h.signal()).unwrap();
            y.samples.truncate(s.len());
            y
        };
        let (a, b) = (0.7, -1.3);
        let mixed = Signal::new(
            u1.signal
                .samples
                .iter()
                .zip(u2.signal.samples.iter())
                .map(|(x, y)| a * x + b * y)
                .collect(),
            8000,
        );
        let lhs = conv(&mixed);
        let y1 = conv(&u1.signal);
        let y2 = conv(&u2.signal);
        for i in 0..lhs.len() {
            let rhs = a * y1.samples[i] + b * y2.samples[i];
            assert!((lhs.samples[i] - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn stronger_reflections_leave_more_late_energy() {
        // silence the source tail so late clip energy can only be reverb
        let mut u = synth_utterance(31, 2.0, &SynthConfig::default()).unwrap();
        let n = u.signal.len();
        for v in u.signal.samples[n - n / 5..].iter_mut() {
            *v = 0.0;
        }
        let room = crate::catalog::RoomSpec {
            class_id: 0,
            room_type: crate::catalog::RoomType::Small,
            width_mm: 3500,
            depth_mm: 4500,
            height_mm: 3000,
        };
        let placement = crate::sim::Placement {
            source: [1.0, 1.2, 1.1],
            microphone: [2.3, 3.1, 1.9],
        };
        let config = AcousticConfig::default();
        let late_fraction = |beta: f64| {
            let h = crate::sim::generate_rir(&room, &placement, beta, &config).unwrap();
            let clip = reverberate(&u, &h, 0).unwrap();
            let n = clip.signal.len();
            let tail: f64 = clip.signal.samples[n - n / 10..].iter().map(|v| v * v).sum();
            let total: f64 = clip.signal.samples.iter().map(|v| v * v).sum();
            tail / total
        };
        assert!(late_fraction(0.9) > late_fraction(0.0));
    }

    #[test]
    fn dataset_is_balanced_and_leakage_free() {
        let bank = test_bank();
        let (pool, _) = synth_pool(6, 1.0, 1234, &SynthConfig::default()).unwrap();
        let policy = SplitPolicy::fractional(&bank, &pool, 0.75, 0.67).unwrap();
        let (train, val) = build_dataset(&bank, &pool, &policy, 5, 77).unwrap();
        assert_eq!(train.items.len(), 15); // 3 classes x 5
        assert_eq!(val.items.len(), 15);
        let val_sources: BTreeSet<&str> =
            val.items.iter().map(|i| i.clip.source_id.as_str()).collect();
        for s in &policy.train_sources {
            assert!(!val_sources.contains(s.as_str()));
        }
    }

    #[test]
    fn dataset_is_bank_order_independent() {
        let bank = test_bank();
        let (pool, _) = synth_pool(4, 1.0, 55, &SynthConfig::default()).unwrap();
        let policy = SplitPolicy::fractional(&bank, &pool, 0.5, 0.5).unwrap();
        let (train_a, _) = build_dataset(&bank, &pool, &policy, 4, 7).unwrap();

        let mut shuffled = bank.clone();
        shuffled.reverse();
        let (train_b, _) = build_dataset(&shuffled, &pool, &policy, 4, 7).unwrap();

        let key = |d: &Dataset| {
            let mut v: Vec<(u32, usize, String)> = d
                .items
                .iter()
                .map(|i| (i.class_id, i.clip.rir_index, i.clip.source_id.clone()))
                .collect();
            v.sort();
            v
        };
        assert_eq!(key(&train_a), key(&train_b));
    }

    #[test]
    fn manifest_round_trip() {
        let bank = test_bank();
        let (pool, specs) = synth_pool(4, 1.0, 55, &SynthConfig::default()).unwrap();
        let policy = SplitPolicy::fractional(&bank, &pool, 0.5, 0.5).unwrap();
        let (train, val) = build_dataset(&bank, &pool, &policy, 2, 7).unwrap();
        let manifest = Manifest::from_datasets(0xfeed, specs, &policy, 2, 7, &train, &val);
        let json = manifest.to_json().unwrap();
        let back = Manifest::from_json(&json).unwrap();
        assert_eq!(back, manifest);
        let pool2 = back.materialize_pool(&SynthConfig::default(), Path::new(".")).unwrap();
        assert_eq!(pool2, pool);
    }
}
