//! Run configuration: one serializable record of every tunable across the
//! pipeline, with `paper` (full-scale) and `desk` (laptop-scale)
//! presets. Precedence: config file < `REVRIR_*` environment overrides <
//! command-line flags; the effective config and its hash go into every
//! artifact this binary writes.

use serde::{Deserialize, Serialize};

use revrir::catalog::{Catalog, RoomType, TypeGrids};
use revrir::contrastive::{EncoderDims, PretrainConfig, SpectrogramParams};
use revrir::error::{Error, Result};
use revrir::sim::{AcousticConfig, ImageOrder};
use revrir::tasks::finetune::{EncoderChoice, FinetuneConfig};
use revrir::tasks::BaselineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Paper,
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeSpec {
    pub min: f64,
    pub max: f64,
    pub hop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: RangeSpec,
    pub depth: RangeSpec,
    pub height: RangeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogSpec {
    pub small: GridSpec,
    pub large: GridSpec,
    pub hall: GridSpec,
    /// Rooms removed after enumeration: (type, width_m, depth_m, height_m).
    #[serde(default)]
    pub exclusions: Vec<(String, f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticSpec {
    pub speed_of_sound: f64,
    pub sample_rate: u32,
    pub beta_min: f64,
    pub beta_max: f64,
    pub rir_length: usize,
    pub min_wall_distance: f64,
    pub min_src_mic_distance: f64,
    /// 0 selects automatic order growth to the buffer length.
    pub max_image_order: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub rirs_per_class: usize,
    pub rir_train_fraction: f64,
    pub source_count: usize,
    pub source_train_fraction: f64,
    pub utterance_duration_s: f64,
    pub pairs_per_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub poly_power: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub catalog: CatalogSpec,
    pub acoustics: AcousticSpec,
    pub data: DataSpec,
    pub spectrogram: SpectrogramParams,
    pub encoder: EncoderDims,
    pub tau_init: f64,
    pub pretrain_epochs: usize,
    pub pretrain_batch: usize,
    pub pretrain_lr: f64,
    pub pretrain_warmup_ratio: f64,
    pub pretrain_weight_decay: f64,
    pub finetune: FinetuneSpec,
    pub baseline: BaselineConfig,
    pub floor_db: f64,
}

fn range(min: f64, max: f64, hop: f64) -> RangeSpec {
    RangeSpec { min, max, hop }
}

impl RunConfig {
    /// Full-scale configuration (110 rooms after exclusions, 5000 RIRs
    /// per class, d = 768). Listed for completeness; training at this scale
    /// needs accelerator hardware.
    pub fn paper() -> RunConfig {
        let exclusions = revrir::catalog::reference_110_exclusions()
            .into_iter()
            .map(|(t, w, d, h)| {
                (
                    t.name().to_string(),
                    w as f64 / 1000.0,
                    d as f64 / 1000.0,
                    h as f64 / 1000.0,
                )
            })
            .collect();
        RunConfig {
            preset: Preset::Paper,
            seed: 0,
            catalog: CatalogSpec {
                small: GridSpec {
                    width: range(1.5, 3.5, 1.0),
                    depth: range(2.5, 4.5, 1.0),
                    height: range(2.5, 3.0, 0.5),
                },
                large: GridSpec {
                    width: range(6.0, 13.0, 1.0),
                    depth: range(6.0, 12.0, 2.0),
                    height: range(2.5, 3.5, 1.0),
                },
                hall: GridSpec {
                    width: range(1.0, 3.0, 1.0),
                    depth: range(7.0, 13.0, 1.0),
                    height: range(2.5, 3.5, 1.0),
                },
                exclusions,
            },
            acoustics: AcousticSpec {
                speed_of_sound: 343.0,
                sample_rate: 8000,
                beta_min: 0.88,
                beta_max: 0.9,
                rir_length: 4096,
                min_wall_distance: 0.5,
                min_src_mic_distance: 0.5,
                max_image_order: 0,
            },
            data: DataSpec {
                rirs_per_class: 5000,
                rir_train_fraction: 0.9,
                source_count: 10000,
                source_train_fraction: 0.95,
                utterance_duration_s: 10.0,
                pairs_per_class: 5000,
            },
            spectrogram: SpectrogramParams::default(),
            encoder: EncoderDims {
                rir_input_bins: 2049,
                rir_hidden: vec![3264, 2432, 1600, 768],
                speech_bins: 129,
                speech_proj: 768,
                speech_hidden: vec![1024, 768],
            },
            tau_init: 0.07,
            pretrain_epochs: 4,
            pretrain_batch: 55,
            pretrain_lr: 1e-5,
            pretrain_warmup_ratio: 0.05,
            pretrain_weight_decay: 0.01,
            finetune: FinetuneSpec {
                epochs: 50,
                batch_size: 100,
                lr: 1e-4,
                poly_power: 0.1,
                weight_decay: 0.01,
            },
            baseline: BaselineConfig::default(),
            floor_db: -120.0,
        }
    }

    /// Desk-scale configuration: 6 rooms (2 per type), 200 RIRs per room,
    /// 2-second utterances, d = 32. Completes end-to-end on one core.
    pub fn desk() -> RunConfig {
        RunConfig {
            preset: Preset::Desk,
            seed: 0,
            catalog: CatalogSpec {
                // two rooms per type, separated in width/depth (height alone
                // is the weakest discriminator)
                small: GridSpec {
                    width: range(1.5, 3.5, 2.0),
                    depth: range(3.5, 3.5, 1.0),
                    height: range(2.5, 2.5, 1.0),
                },
                large: GridSpec {
                    width: range(6.0, 12.0, 6.0),
                    depth: range(10.0, 10.0, 2.0),
                    height: range(2.5, 2.5, 1.0),
                },
                hall: GridSpec {
                    width: range(2.0, 2.0, 1.0),
                    depth: range(7.0, 13.0, 6.0),
                    height: range(3.0, 3.0, 1.0),
                },
                exclusions: vec![],
            },
            acoustics: AcousticSpec {
                speed_of_sound: 343.0,
                sample_rate: 8000,
                beta_min: 0.88,
                beta_max: 0.9,
                rir_length: 4096,
                min_wall_distance: 0.5,
                min_src_mic_distance: 0.5,
                max_image_order: 0,
            },
            data: DataSpec {
                rirs_per_class: 200,
                rir_train_fraction: 0.8,
                source_count: 240,
                source_train_fraction: 0.8,
                utterance_duration_s: 2.0,
                pairs_per_class: 300,
            },
            spectrogram: SpectrogramParams { frame_length: 2048, hop: 1024, floor_db: -120.0 },
            encoder: EncoderDims {
                rir_input_bins: 2049,
                rir_hidden: vec![512, 256, 128, 32],
                speech_bins: 1025,
                speech_proj: 128,
                speech_hidden: vec![64, 32],
            },
            tau_init: 0.15,
            pretrain_epochs: 10,
            pretrain_batch: 32,
            pretrain_lr: 2e-3,
            pretrain_warmup_ratio: 0.05,
            pretrain_weight_decay: 0.01,
            finetune: FinetuneSpec {
                epochs: 40,
                batch_size: 32,
                lr: 1e-2,
                poly_power: 0.1,
                weight_decay: 0.0,
            },
            baseline: BaselineConfig::default(),
            floor_db: -120.0,
        }
    }

    pub fn preset(p: Preset) -> RunConfig {
        match p {
            Preset::Paper => RunConfig::paper(),
            Preset::Desk => RunConfig::desk(),
        }
    }

    pub fn from_json(s: &str) -> Result<RunConfig> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("config parse: {e}")))
    }

    /// Stable fingerprint of the effective configuration (seed excluded, so
    /// multi-seed runs over one setup share artifacts).
    pub fn hash(&self) -> u64 {
        let mut hashable = self.clone();
        hashable.seed = 0;
        let json = serde_json::to_string(&hashable).expect("config serializes");
        revrir::hash::fnv1a64(json.as_bytes())
    }

    pub fn grids(&self) -> Result<TypeGrids> {
        let conv = |g: &GridSpec| -> Result<revrir::catalog::TypeGrid> {
            Ok(revrir::catalog::TypeGrid {
                width: revrir::catalog::DimensionRange::new(g.width.min, g.width.max, g.width.hop)?,
                depth: revrir::catalog::DimensionRange::new(g.depth.min, g.depth.max, g.depth.hop)?,
                height: revrir::catalog::DimensionRange::new(g.height.min, g.height.max, g.height.hop)?,
            })
        };
        Ok(TypeGrids {
            grids: [conv(&self.catalog.small)?, conv(&self.catalog.large)?, conv(&self.catalog.hall)?],
        })
    }

    pub fn build_catalog(&self) -> Result<Catalog> {
        let full = revrir::catalog::enumerate_rooms(&self.grids()?)?;
        if self.catalog.exclusions.is_empty() {
            return Ok(full);
        }
        let excl: Result<Vec<(RoomType, i64, i64, i64)>> = self
            .catalog
            .exclusions
            .iter()
            .map(|(t, w, d, h)| {
                Ok((
                    RoomType::parse(t)?,
                    (w * 1000.0).round() as i64,
                    (d * 1000.0).round() as i64,
                    (h * 1000.0).round() as i64,
                ))
            })
            .collect();
        full.with_exclusions(&excl?)
    }

    pub fn acoustic_config(&self) -> AcousticConfig {
        AcousticConfig {
            speed_of_sound: self.acoustics.speed_of_sound,
            sample_rate: self.acoustics.sample_rate,
            beta_range: (self.acoustics.beta_min, self.acoustics.beta_max),
            rir_length: self.acoustics.rir_length,
            min_wall_distance: self.acoustics.min_wall_distance,
            min_src_mic_distance: self.acoustics.min_src_mic_distance,
            max_image_order: if self.acoustics.max_image_order == 0 {
                ImageOrder::Auto
            } else {
                ImageOrder::Max(self.acoustics.max_image_order)
            },
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            epochs: self.pretrain_epochs,
            batch_size: self.pretrain_batch,
            base_lr: self.pretrain_lr,
            warmup_ratio: self.pretrain_warmup_ratio,
            weight_decay: self.pretrain_weight_decay,
            tau_init: self.tau_init,
            seed: self.seed,
        }
    }

    pub fn finetune_config(&self, encoder: EncoderChoice, freeze: bool) -> FinetuneConfig {
        FinetuneConfig {
            encoder,
            freeze_encoder: freeze,
            epochs: self.finetune.epochs,
            batch_size: self.finetune.batch_size,
            lr: self.finetune.lr,
            poly_power: self.finetune.poly_power,
            weight_decay: self.finetune.weight_decay,
            seed: self.seed,
        }
    }

    /// Apply `REVRIR_<FIELD>` environment overrides for the common scalar
    /// knobs, then CLI flags on top.
    pub fn apply_env(&mut self, env: impl Iterator<Item = (String, String)>) -> Result<Vec<String>> {
        let mut applied = Vec::new();
        for (key, value) in env {
            let Some(field) = key.strip_prefix("REVRIR_") else { continue };
            let mut set = |ok: bool| -> Result<()> {
                if !ok {
                    return Err(Error::Config(format!("bad value for {key}: '{value}'")));
                }
                applied.push(format!("{key}={value}"));
                Ok(())
            };
            match field {
                "SEED" => set(value.parse::<u64>().map(|v| self.seed = v).is_ok())?,
                "RIRS_PER_CLASS" => {
                    set(value.parse::<usize>().map(|v| self.data.rirs_per_class = v).is_ok())?
                }
                "PAIRS_PER_CLASS" => {
                    set(value.parse::<usize>().map(|v| self.data.pairs_per_class = v).is_ok())?
                }
                "SOURCE_COUNT" => {
                    set(value.parse::<usize>().map(|v| self.data.source_count = v).is_ok())?
                }
                "UTTERANCE_DURATION_S" => set(
                    value
                        .parse::<f64>()
                        .map(|v| self.data.utterance_duration_s = v)
                        .is_ok(),
                )?,
                "RIR_LENGTH" => {
                    set(value.parse::<usize>().map(|v| self.acoustics.rir_length = v).is_ok())?
                }
                "PRETRAIN_EPOCHS" => {
                    set(value.parse::<usize>().map(|v| self.pretrain_epochs = v).is_ok())?
                }
                "PRETRAIN_BATCH" => {
                    set(value.parse::<usize>().map(|v| self.pretrain_batch = v).is_ok())?
                }
                "PRETRAIN_LR" => set(value.parse::<f64>().map(|v| self.pretrain_lr = v).is_ok())?,
                "FINETUNE_EPOCHS" => {
                    set(value.parse::<usize>().map(|v| self.finetune.epochs = v).is_ok())?
                }
                "FINETUNE_LR" => set(value.parse::<f64>().map(|v| self.finetune.lr = v).is_ok())?,
                "BASELINE_EPOCHS" => {
                    set(value.parse::<usize>().map(|v| self.baseline.epochs = v).is_ok())?
                }
                _ => {
                    return Err(Error::Config(format!("unknown environment override {key}")));
                }
            }
        }
        Ok(applied)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_build_valid_catalogs() {
        let paper = RunConfig::paper().build_catalog().unwrap();
        assert_eq!(paper.len(), 110);
        let desk = RunConfig::desk().build_catalog().unwrap();
        assert_eq!(desk.len(), 6);
        let per_type = |c: &Catalog, t: RoomType| c.rooms.iter().filter(|r| r.room_type == t).count();
        for t in RoomType::ALL {
            assert_eq!(per_type(&desk, t), 2);
        }
    }

    #[test]
    fn hash_ignores_seed_but_not_knobs() {
        let a = RunConfig::desk();
        let mut b = RunConfig::desk();
        b.seed = 99;
        assert_eq!(a.hash(), b.hash());
        b.data.rirs_per_class = 7;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn json_round_trip() {
        let a = RunConfig::desk();
        let s = serde_json::to_string_pretty(&a).unwrap();
        let b = RunConfig::from_json(&s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn env_overrides_apply_in_order() {
        let mut c = RunConfig::desk();
        let applied = c
            .apply_env(vec![("REVRIR_SEED".to_string(), "42".to_string())].into_iter())
            .unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(applied, vec!["REVRIR_SEED=42"]);
        assert!(c
            .apply_env(vec![("REVRIR_NOPE".to_string(), "1".to_string())].into_iter())
            .is_err());
    }
}
