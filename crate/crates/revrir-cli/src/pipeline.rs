//! Command implementations. Every artifact embeds the producing config hash;
//! consumers refuse inputs whose hashes disagree.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use revrir::catalog::Catalog;
use revrir::contrastive::{
    featurize, pretrain, write_loss_csv, DualEncoder, FeatureSet, LossRecord,
};
use revrir::corpus::{
    build_dataset, synth_pool, Dataset, Manifest, SourceSpec, SplitPolicy, SynthConfig,
};
use revrir::error::{Error, Result};
use revrir::nn::checkpoint::{checkpoint_hash, read_checkpoint, write_checkpoint, Checkpoint, Entry};
use revrir::rng::stream_rng;
use revrir::sim::{generate_rir_bank, read_bank, write_bank, Rir};
use revrir::tasks::eval::{collapse_to_types, confusion, top1_accuracy, ConfusionMatrix};
use revrir::tasks::finetune::{
    embed_rir_set, embed_speech_set, read_embedding_cache, train_head, write_embedding_cache,
    ClassifierHead, EmbeddedDataset, EncoderChoice, EpochMetric,
};
use revrir::tasks::{baseline_train_eval, mean_std, BaselineReport};
use revrir::Real;

use crate::config::RunConfig;

pub struct Paths {
    pub out: PathBuf,
}

impl Paths {
    pub fn new(out: &Path) -> Paths {
        Paths { out: out.to_path_buf() }
    }
    pub fn catalog(&self) -> PathBuf {
        self.out.join("catalog.txt")
    }
    pub fn bank(&self) -> PathBuf {
        self.out.join("bank.rvrb")
    }
    pub fn manifest(&self) -> PathBuf {
        self.out.join("manifest.json")
    }
    pub fn pretrain_checkpoint(&self, seed: u64) -> PathBuf {
        self.out.join(format!("pretrain-seed{seed}.rvck"))
    }
    pub fn pretrain_curve(&self, seed: u64) -> PathBuf {
        self.out.join(format!("pretrain-loss-seed{seed}.csv"))
    }
    pub fn head_checkpoint(&self, encoder: EncoderChoice, frozen: bool, seed: u64) -> PathBuf {
        self.out.join(format!(
            "head-{}-{}-seed{seed}.rvck",
            encoder_name(encoder),
            if frozen { "frozen" } else { "joint" }
        ))
    }
    pub fn metrics(&self, tag: &str, seed: u64) -> PathBuf {
        self.out.join(format!("metrics-{tag}-seed{seed}.json"))
    }
    pub fn cache_dir(&self) -> PathBuf {
        self.out.join("cache")
    }
    pub fn run_record(&self, command: &str) -> PathBuf {
        self.out.join(format!("run-{command}.json"))
    }
}

pub fn encoder_name(e: EncoderChoice) -> &'static str {
    match e {
        EncoderChoice::Speech => "speech",
        EncoderChoice::Rir => "rir",
    }
}

#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'a str,
    config_hash: String,
    applied_overrides: &'a [String],
    config: &'a RunConfig,
}

pub fn write_run_record(
    paths: &Paths,
    command: &str,
    cfg: &RunConfig,
    overrides: &[String],
) -> Result<()> {
    let record = RunRecord {
        command,
        config_hash: format!("{:016x}", cfg.hash()),
        applied_overrides: overrides,
        config: cfg,
    };
    let json = serde_json::to_string_pretty(&record)
        .map_err(|e| Error::Config(format!("run record: {e}")))?;
    fs::create_dir_all(&paths.out)?;
    fs::write(paths.run_record(command), json)?;
    Ok(())
}

// ---- artifact loading with hash verification ----

fn check_hash(expected: u64, found: u64, what: &str) -> Result<()> {
    if expected != found {
        return Err(Error::Config(format!(
            "{what} was produced by config {found:016x}, current config is {expected:016x}"
        )));
    }
    Ok(())
}

pub fn load_catalog(paths: &Paths, cfg: &RunConfig) -> Result<Catalog> {
    let text = fs::read_to_string(paths.catalog())
        .map_err(|_| Error::Data(format!("missing catalog at {:?}; run `catalog` first", paths.catalog())))?;
    let (catalog, hash) = Catalog::from_text(&text)?;
    check_hash(cfg.hash(), hash, "catalog")?;
    Ok(catalog)
}

pub fn load_bank_checked(paths: &Paths, cfg: &RunConfig) -> Result<Vec<Rir>> {
    let mut f = fs::File::open(paths.bank())
        .map_err(|_| Error::Data(format!("missing RIR bank at {:?}; run `gen-rirs` first", paths.bank())))?;
    let (bank, header) = read_bank(&mut f)?;
    check_hash(cfg.hash(), header.config_hash, "RIR bank")?;
    Ok(bank)
}

pub fn load_manifest_checked(paths: &Paths, cfg: &RunConfig) -> Result<Manifest> {
    let text = fs::read_to_string(paths.manifest())
        .map_err(|_| Error::Data(format!("missing manifest at {:?}; run `build-data` first", paths.manifest())))?;
    let manifest = Manifest::from_json(&text)?;
    let found = u64::from_str_radix(&manifest.config_hash, 16)
        .map_err(|_| Error::Format("manifest config hash is not hex".into()))?;
    check_hash(cfg.hash(), found, "dataset manifest")?;
    Ok(manifest)
}

pub fn load_model_checkpoint(path: &Path, cfg: &RunConfig) -> Result<(Checkpoint<Real>, u64)> {
    let mut f = fs::File::open(path)
        .map_err(|_| Error::Data(format!("missing checkpoint at {path:?}; run `pretrain` first")))?;
    let ckpt = read_checkpoint::<_, Real>(&mut f)?;
    check_hash(cfg.hash(), ckpt.config_hash, "checkpoint")?;
    let hash = checkpoint_hash(&ckpt)?;
    Ok((ckpt, hash))
}

// ---- commands ----

pub fn cmd_catalog(cfg: &RunConfig, paths: &Paths) -> Result<()> {
    let catalog = cfg.build_catalog()?;
    fs::create_dir_all(&paths.out)?;
    fs::write(paths.catalog(), catalog.to_text(cfg.hash()))?;
    println!("catalog: {} rooms -> {:?}", catalog.len(), paths.catalog());
    Ok(())
}

pub fn cmd_gen_rirs(cfg: &RunConfig, paths: &Paths, jobs: usize) -> Result<()> {
    let catalog = load_catalog(paths, cfg)?;
    let acoustics = cfg.acoustic_config();
    let bank = generate_rir_bank(&catalog, cfg.data.rirs_per_class, cfg.seed, &acoustics, jobs)?;
    let mut f = fs::File::create(paths.bank())?;
    write_bank(&mut f, &bank, cfg.hash())?;
    println!("gen-rirs: {} RIRs ({} per class) -> {:?}", bank.len(), cfg.data.rirs_per_class, paths.bank());
    Ok(())
}

pub struct BuiltData {
    pub catalog: Catalog,
    pub bank: Vec<Rir>,
    pub train: Dataset,
    pub val: Dataset,
    pub policy: SplitPolicy,
}

/// Rebuild datasets from the manifest (the manifest plus the bank is the
/// dataset's source of truth).
pub fn rebuild_data(cfg: &RunConfig, paths: &Paths) -> Result<BuiltData> {
    let catalog = load_catalog(paths, cfg)?;
    let bank = load_bank_checked(paths, cfg)?;
    let manifest = load_manifest_checked(paths, cfg)?;
    let pool = manifest.materialize_pool(&SynthConfig::default(), &paths.out)?;
    let (train, val) = build_dataset(&bank, &pool, &manifest.policy, manifest.pairs_per_class, manifest.seed)?;
    Ok(BuiltData { catalog, bank, train, val, policy: manifest.policy })
}

pub fn cmd_build_data(cfg: &RunConfig, paths: &Paths, export_wavs: bool) -> Result<()> {
    let bank = load_bank_checked(paths, cfg)?;
    let (pool, mut specs) = synth_pool(
        cfg.data.source_count,
        cfg.data.utterance_duration_s,
        cfg.seed,
        &SynthConfig::default(),
    )?;
    let policy = SplitPolicy::fractional(
        &bank,
        &pool,
        cfg.data.rir_train_fraction,
        cfg.data.source_train_fraction,
    )?;
    let data_seed = revrir::rng::derive_seed(cfg.seed, &[10]);
    let (train, val) = build_dataset(&bank, &pool, &policy, cfg.data.pairs_per_class, data_seed)?;

    if export_wavs {
        let dir = paths.out.join("clips");
        fs::create_dir_all(&dir)?;
        for u in &pool {
            let rel = format!("clips/{}.wav", u.source_id);
            revrir::corpus::save_wav_file(&paths.out.join(&rel), &u.signal)?;
        }
        specs = pool
            .iter()
            .map(|u| SourceSpec::Wav {
                source_id: u.source_id.clone(),
                path: format!("clips/{}.wav", u.source_id),
            })
            .collect();
    }

    let manifest = Manifest::from_datasets(
        cfg.hash(),
        specs,
        &policy,
        cfg.data.pairs_per_class,
        data_seed,
        &train,
        &val,
    );
    fs::write(paths.manifest(), manifest.to_json()?)?;
    println!(
        "build-data: {} train / {} val items -> {:?}",
        train.items.len(),
        val.items.len(),
        paths.manifest()
    );
    Ok(())
}

pub fn featurized(cfg: &RunConfig, data: &BuiltData) -> Result<(FeatureSet, FeatureSet)> {
    let train = featurize(&data.train, &data.bank, &cfg.spectrogram, cfg.floor_db)?;
    let val = featurize(&data.val, &data.bank, &cfg.spectrogram, cfg.floor_db)?;
    Ok((train, val))
}

pub fn cmd_pretrain(cfg: &RunConfig, paths: &Paths) -> Result<Vec<LossRecord>> {
    let data = rebuild_data(cfg, paths)?;
    let (train_fs, val_fs) = featurized(cfg, &data)?;
    let mut rng = stream_rng(cfg.seed, &[11]);
    let mut model = DualEncoder::<Real>::new(&cfg.encoder, cfg.tau_init, &mut rng)?;
    let records = pretrain(&mut model, &train_fs, &val_fs, &cfg.pretrain_config())?;

    let ckpt = model.to_checkpoint(cfg.hash());
    let mut f = fs::File::create(paths.pretrain_checkpoint(cfg.seed))?;
    write_checkpoint(&mut f, &ckpt)?;
    let mut c = fs::File::create(paths.pretrain_curve(cfg.seed))?;
    write_loss_csv(&mut c, &records)?;
    let last_train = records.iter().rev().find(|r| matches!(r.split, revrir::contrastive::CurveSplit::Train));
    println!(
        "pretrain: seed {} final train loss {:.4} -> {:?}",
        cfg.seed,
        last_train.map(|r| r.loss).unwrap_or(f64::NAN),
        paths.pretrain_checkpoint(cfg.seed)
    );
    Ok(records)
}

pub fn load_pretrained(cfg: &RunConfig, paths: &Paths, seed: u64) -> Result<(DualEncoder<Real>, u64)> {
    let (ckpt, hash) = load_model_checkpoint(&paths.pretrain_checkpoint(seed), cfg)?;
    let mut rng = stream_rng(seed, &[11]);
    let mut model = DualEncoder::<Real>::new(&cfg.encoder, cfg.tau_init, &mut rng)?;
    model.load_entries(&ckpt.params)?;
    Ok((model, hash))
}

/// Embeddings for the frozen path, cached on disk keyed by checkpoint hash.
fn cached_embeddings(
    paths: &Paths,
    ckpt_hash: u64,
    tag: &str,
    compute: impl FnOnce() -> Result<EmbeddedDataset>,
) -> Result<EmbeddedDataset> {
    let dir = paths.cache_dir();
    fs::create_dir_all(&dir)?;
    let file = dir.join(format!("emb-{ckpt_hash:016x}-{tag}.rvec"));
    if file.exists() {
        let mut f = fs::File::open(&file)?;
        if let Ok(set) = read_embedding_cache(&mut f, ckpt_hash) {
            return Ok(set);
        }
    }
    let set = compute()?;
    let mut f = fs::File::create(&file)?;
    write_embedding_cache(&mut f, ckpt_hash, &set)?;
    Ok(set)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsFile {
    pub config_hash: String,
    pub command: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encoder: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frozen: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_set: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top1_rooms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top1_types: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_epoch: Option<Vec<EpochMetric>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion_rooms: Option<ConfusionMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion_types: Option<ConfusionMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_summary: Option<SeedSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seeds: Vec<u64>,
    pub top1_rooms_mean: f64,
    pub top1_rooms_std: f64,
}

impl MetricsFile {
    fn new(cfg: &RunConfig, command: &str, seed: u64) -> MetricsFile {
        MetricsFile {
            config_hash: format!("{:016x}", cfg.hash()),
            command: command.to_string(),
            seed,
            encoder: None,
            frozen: None,
            eval_set: None,
            top1_rooms: None,
            top1_types: None,
            per_epoch: None,
            confusion_rooms: None,
            confusion_types: None,
            baseline: None,
            seed_summary: None,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("metrics serialization: {e}")))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<MetricsFile> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("metrics parse: {e}")))
    }
}

fn head_to_checkpoint(head: &ClassifierHead, encoder: EncoderChoice, frozen: bool, config_hash: u64) -> Checkpoint<Real> {
    Checkpoint {
        config_hash,
        params: vec![
            Entry::new("head.weight", head.linear.weight.shape(), head.linear.weight.to_vec()),
            Entry::new("head.bias", head.linear.bias.shape(), head.linear.bias.to_vec()),
            Entry::new(
                "meta.encoder",
                vec![1],
                vec![match encoder {
                    EncoderChoice::Speech => 0.0,
                    EncoderChoice::Rir => 1.0,
                }],
            ),
            Entry::new("meta.frozen", vec![1], vec![if frozen { 1.0 } else { 0.0 }]),
        ],
        optimizer: vec![],
    }
}

pub fn head_from_checkpoint(ckpt: &Checkpoint<Real>, embedding_dim: usize, classes: usize) -> Result<ClassifierHead> {
    let mut rng = stream_rng(0, &[0]);
    let head = ClassifierHead::new(embedding_dim, classes, &mut rng);
    let find = |name: &str| -> Result<&Entry<Real>> {
        ckpt.params
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Format(format!("head checkpoint missing '{name}'")))
    };
    let w = find("head.weight")?;
    if w.shape != vec![embedding_dim, classes] {
        return Err(Error::Config(format!(
            "head shape {:?} does not match encoder dim {embedding_dim} and {classes} classes",
            w.shape
        )));
    }
    head.linear.weight.set_values(&w.values);
    head.linear.bias.set_values(&find("head.bias")?.values);
    Ok(head)
}

pub struct FinetuneSummary {
    pub per_seed_top1: Vec<(u64, f64)>,
}

pub fn cmd_finetune(
    cfg: &RunConfig,
    paths: &Paths,
    encoder: EncoderChoice,
    frozen: bool,
    seeds: &[u64],
) -> Result<FinetuneSummary> {
    let data = rebuild_data(cfg, paths)?;
    let (train_fs, val_fs) = featurized(cfg, &data)?;
    let classes = data.catalog.len();
    let mut per_seed_top1 = Vec::new();

    for &seed in seeds {
        let mut run_cfg = cfg.clone();
        run_cfg.seed = seed;
        let (mut model, ckpt_hash) = load_pretrained(cfg, paths, seed)?;
        let ft = run_cfg.finetune_config(encoder, frozen);
        let (head, per_epoch) = if frozen {
            let (train_emb, val_emb) = match encoder {
                EncoderChoice::Speech => (
                    cached_embeddings(paths, ckpt_hash, "speech-train", || {
                        embed_speech_set(&mut model, &train_fs, ft.batch_size)
                    })?,
                    embed_speech_set(&mut model, &val_fs, ft.batch_size)?,
                ),
                EncoderChoice::Rir => (
                    cached_embeddings(paths, ckpt_hash, "rir-train", || {
                        embed_rir_set(
                            &mut model,
                            &data.bank,
                            &revrir::corpus::per_class_canonical(&data.bank),
                            &data.policy.train_rirs,
                            cfg.floor_db,
                            ft.batch_size,
                        )
                    })?,
                    embed_rir_set(
                        &mut model,
                        &data.bank,
                        &revrir::corpus::per_class_canonical(&data.bank),
                        &data.policy.val_rirs,
                        cfg.floor_db,
                        ft.batch_size,
                    )?,
                ),
            };
            let mut rng = stream_rng(seed, &[6]);
            let head = ClassifierHead::new(model.embedding_dim(), classes, &mut rng);
            let per_epoch = train_head(&head, &train_emb, &val_emb, &ft)?;
            (head, per_epoch)
        } else {
            let outcome = revrir::tasks::finetune::finetune(&mut model, &train_fs, &val_fs, classes, &ft)?;
            (outcome.head, outcome.per_epoch)
        };

        let final_acc = per_epoch.last().map(|m| m.val_accuracy).unwrap_or(0.0);
        per_seed_top1.push((seed, final_acc));

        let hc = head_to_checkpoint(&head, encoder, frozen, cfg.hash());
        let mut f = fs::File::create(paths.head_checkpoint(encoder, frozen, seed))?;
        write_checkpoint(&mut f, &hc)?;

        let mut metrics = MetricsFile::new(cfg, "finetune", seed);
        metrics.encoder = Some(encoder_name(encoder).to_string());
        metrics.frozen = Some(frozen);
        metrics.top1_rooms = Some(final_acc);
        metrics.per_epoch = Some(per_epoch);
        metrics.write(&paths.metrics(
            &format!("finetune-{}-{}", encoder_name(encoder), if frozen { "frozen" } else { "joint" }),
            seed,
        ))?;
        println!(
            "finetune: encoder {} ({}) seed {} val top-1 {:.3}",
            encoder_name(encoder),
            if frozen { "frozen" } else { "joint" },
            seed,
            final_acc
        );
    }

    if per_seed_top1.len() > 1 {
        let accs: Vec<f64> = per_seed_top1.iter().map(|(_, a)| *a).collect();
        let (mean, std) = mean_std(&accs);
        println!("finetune: {} seeds, top-1 {:.3} +/- {:.3}", accs.len(), mean, std);
    }
    Ok(FinetuneSummary { per_seed_top1 })
}

pub fn cmd_baseline(cfg: &RunConfig, paths: &Paths) -> Result<BaselineReport> {
    let catalog = load_catalog(paths, cfg)?;
    let bank = load_bank_checked(paths, cfg)?;
    let manifest = load_manifest_checked(paths, cfg)?;
    let canon = revrir::corpus::per_class_canonical(&bank);
    let mut bl_cfg = cfg.baseline.clone();
    bl_cfg.seed = cfg.seed;
    let (_net, report) = baseline_train_eval(
        &bank,
        &catalog,
        &canon,
        &manifest.policy.train_rirs,
        &manifest.policy.val_rirs,
        &bl_cfg,
    )?;
    let mut metrics = MetricsFile::new(cfg, "baseline", cfg.seed);
    metrics.top1_rooms = Some(report.top1);
    metrics.top1_types = Some(report.type_accuracy);
    metrics.confusion_rooms = Some(report.confusion_rooms.clone());
    metrics.confusion_types = Some(report.confusion_types.clone());
    metrics.baseline = Some(report.clone());
    metrics.write(&paths.metrics("baseline", cfg.seed))?;
    fs::write(paths.out.join(format!("confusion-baseline-types-seed{}.csv", cfg.seed)), report.confusion_types.to_csv())?;
    println!(
        "baseline: top-1 {:.3}, 3-type accuracy {:.3}",
        report.top1, report.type_accuracy
    );
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSet {
    Speech,
    Rir,
}

pub fn cmd_evaluate(
    cfg: &RunConfig,
    paths: &Paths,
    encoder: EncoderChoice,
    frozen: bool,
    eval_set: EvalSet,
    collapse: bool,
    seed: u64,
) -> Result<MetricsFile> {
    let data = rebuild_data(cfg, paths)?;
    let classes = data.catalog.len();
    let (mut model, _hash) = load_pretrained(cfg, paths, seed)?;

    let head_path = paths.head_checkpoint(encoder, frozen, seed);
    let mut f = fs::File::open(&head_path)
        .map_err(|_| Error::Data(format!("missing head checkpoint at {head_path:?}; run `finetune` first")))?;
    let head_ckpt = read_checkpoint::<_, Real>(&mut f)?;
    check_hash(cfg.hash(), head_ckpt.config_hash, "head checkpoint")?;
    let head = head_from_checkpoint(&head_ckpt, model.embedding_dim(), classes)?;

    let embeddings: EmbeddedDataset = match eval_set {
        EvalSet::Speech => {
            let (_, val_fs) = featurized(cfg, &data)?;
            embed_speech_set(&mut model, &val_fs, cfg.finetune.batch_size)?
        }
        EvalSet::Rir => embed_rir_set(
            &mut model,
            &data.bank,
            &revrir::corpus::per_class_canonical(&data.bank),
            &data.policy.val_rirs,
            cfg.floor_db,
            cfg.finetune.batch_size,
        )?,
    };
    let preds = head.predict(&embeddings);
    let top1 = top1_accuracy(&preds, &embeddings.labels)?;
    let room_names: Vec<String> = (0..classes).map(|c| format!("room{c}")).collect();
    let confusion_rooms = confusion(&preds, &embeddings.labels, classes, room_names)?;

    let mut metrics = MetricsFile::new(cfg, "evaluate", seed);
    metrics.encoder = Some(encoder_name(encoder).to_string());
    metrics.frozen = Some(frozen);
    metrics.eval_set = Some(
        match eval_set {
            EvalSet::Speech => "speech",
            EvalSet::Rir => "rir",
        }
        .to_string(),
    );
    metrics.top1_rooms = Some(top1);
    metrics.confusion_rooms = Some(confusion_rooms.clone());

    if collapse {
        let type_preds = collapse_to_types(&preds, &data.catalog)?;
        let type_labels = collapse_to_types(&embeddings.labels, &data.catalog)?;
        let type_acc = top1_accuracy(&type_preds, &type_labels)?;
        let type_names: Vec<String> = revrir::catalog::RoomType::ALL
            .iter()
            .map(|t| t.name().to_string())
            .collect();
        let confusion_types = confusion(&type_preds, &type_labels, 3, type_names)?;
        fs::write(
            paths.out.join(format!(
                "confusion-{}-{}-types-seed{seed}.csv",
                encoder_name(encoder),
                match eval_set {
                    EvalSet::Speech => "speech",
                    EvalSet::Rir => "rir",
                }
            )),
            confusion_types.to_csv(),
        )?;
        metrics.top1_types = Some(type_acc);
        metrics.confusion_types = Some(confusion_types);
    }

    let tag = format!(
        "evaluate-{}-{}",
        encoder_name(encoder),
        match eval_set {
            EvalSet::Speech => "speech",
            EvalSet::Rir => "rir",
        }
    );
    metrics.write(&paths.metrics(&tag, seed))?;
    println!(
        "evaluate: encoder {} on {} set, top-1 {:.3}{}",
        encoder_name(encoder),
        match eval_set {
            EvalSet::Speech => "speech",
            EvalSet::Rir => "RIR",
        },
        top1,
        metrics
            .top1_types
            .map(|t| format!(", 3-type {t:.3}"))
            .unwrap_or_default()
    );
    Ok(metrics)
}

fn render_confusion(name: &str, m: &ConfusionMatrix, out: &mut String) {
    out.push_str(&format!("\n{name}\n"));
    out.push_str(&format!("{:>12}", "truth\\pred"));
    for n in &m.class_names {
        out.push_str(&format!("{n:>10}"));
    }
    out.push('\n');
    for i in 0..m.classes {
        out.push_str(&format!("{:>12}", m.class_names[i]));
        for j in 0..m.classes {
            out.push_str(&format!("{:>10.3}", m.at(i, j)));
        }
        if m.support[i] == 0 {
            out.push_str("  (no support)");
        }
        out.push('\n');
    }
}

/// Render all metrics files in the output directory into one text report and
/// aggregate multi-seed accuracies.
pub fn cmd_report(paths: &Paths) -> Result<()> {
    let mut report = String::from("# run report\n");
    let mut entries: Vec<PathBuf> = fs::read_dir(&paths.out)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("metrics-") && n.ends_with(".json"))
                .unwrap_or(false)
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(Error::Data(format!("no metrics files in {:?}", paths.out)));
    }
    let mut by_tag: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for path in &entries {
        let m = MetricsFile::read(path)?;
        report.push_str(&format!(
            "\n## {} (seed {})\nconfig: {}\n",
            path.file_name().unwrap().to_string_lossy(),
            m.seed,
            m.config_hash
        ));
        if let Some(t) = m.top1_rooms {
            report.push_str(&format!("top-1 (rooms): {t:.4}\n"));
            let tag = format!(
                "{} {} {}",
                m.command,
                m.encoder.clone().unwrap_or_default(),
                m.eval_set.clone().unwrap_or_default()
            );
            by_tag.entry(tag).or_default().push(t);
        }
        if let Some(t) = m.top1_types {
            report.push_str(&format!("top-1 (3 types): {t:.4}\n"));
        }
        if let Some(c) = &m.confusion_types {
            render_confusion("confusion (3 types)", c, &mut report);
        }
    }
    report.push_str("\n# multi-seed summary\n");
    for (tag, accs) in &by_tag {
        let (mean, std) = mean_std(accs);
        report.push_str(&format!(
            "{tag}: n={} top-1 {mean:.4} +/- {std:.4}\n",
            accs.len()
        ));
    }
    let path = paths.out.join("report.txt");
    fs::write(&path, &report)?;
    println!("report -> {path:?}");
    Ok(())
}
