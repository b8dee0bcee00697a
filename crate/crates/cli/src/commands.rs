use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use binloc_core::audio::read_manifest;
use binloc_core::eval::{evaluate, run_sweep, EvalReport, RowTraining, SweepObserver, SweepPlan, SweepResult, SweepRow};
use binloc_core::features::{assemble_features, load_clip, load_labeled_set, write_feature_cache};
use binloc_core::nn::{load_checkpoint, save_checkpoint, ModelState};
use binloc_core::rng::{derive_seed, label_id};
use binloc_core::synth::{build_dataset, DatasetSummary};
use binloc_core::training::{train, EpochRecord, TrainOutcome};
use binloc_core::{Error as CoreError, FeatureSetSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Manifests, RunConfig};

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const TRAIN_LOG: &str = "train_log.jsonl";

/// Runs `f` on a pool of the configured size, or the global pool.
pub fn with_threads<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("starting worker threads")?
            .install(f),
        None => f(),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

/// Creates the run directory and records the resolved config in it.
fn prepare_run_dir(cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    let dir = cfg.run_dir(command)?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_file(&dir.join(RESOLVED_CONFIG), cfg.resolved().to_toml()?)?;
    Ok(dir)
}

/// Synthesizes the `[synth]` dataset, replacing any previous copy.
pub fn synth(cfg: &RunConfig) -> Result<DatasetSummary> {
    let dir = cfg.dataset_dir()?;
    let summary = build_dataset(&cfg.synth, &dir).with_context(|| format!("building dataset in {}", dir.display()))?;
    write_file(&dir.join("synth.toml"), toml::to_string(&cfg.synth)?)?;
    Ok(summary)
}

/// Resolves the manifests, synthesizing the dataset first if it is missing.
pub fn ensure_dataset(cfg: &RunConfig) -> Result<Manifests> {
    let m = cfg.manifests()?;
    let mut paths = vec![&m.train, &m.val];
    paths.extend(m.test_sets.iter().map(|t| &t.manifest));
    if paths.iter().all(|p| p.exists()) {
        return Ok(m);
    }
    if !cfg.uses_synth_dataset() {
        let missing = paths.iter().find(|p| !p.exists()).expect("one path is missing");
        bail!("manifest {} does not exist", missing.display());
    }
    log_line(format_args!("synthesizing dataset in {}", cfg.dataset_dir()?.display()));
    synth(cfg)?;
    for p in paths {
        if !p.exists() {
            bail!("manifest {} is not produced by [synth]", p.display());
        }
    }
    Ok(m)
}

fn log_line(args: std::fmt::Arguments<'_>) {
    eprintln!("{args}");
}

#[derive(Debug, Clone, Serialize)]
pub struct FeaturesOutcome {
    pub run_dir: PathBuf,
    pub spec: FeatureSetSpec,
    pub files: usize,
}

#[derive(Debug, Clone, Serialize)]
struct CacheEntry {
    split: String,
    clip_path: String,
    cache_path: String,
    azimuth_deg: f64,
    source_type: String,
}

/// Computes the configured feature planes for every clip and caches them
/// under `<run>/<split>/`, with an index in `features.jsonl`.
pub fn features(cfg: &RunConfig) -> Result<FeaturesOutcome> {
    let m = ensure_dataset(cfg)?;
    let mut splits = vec![("train".to_string(), m.train.clone()), ("val".to_string(), m.val.clone())];
    splits.extend(m.test_sets.iter().map(|t| (t.name.clone(), t.manifest.clone())));
    if let Some(wanted) = &cfg.features.splits {
        for w in wanted {
            if !splits.iter().any(|(n, _)| n == w) {
                bail!("unknown split {w:?} in [features] splits");
            }
        }
        splits.retain(|(n, _)| wanted.contains(n));
    }
    let dir = prepare_run_dir(cfg, "features")?;
    let spec = cfg.features.spec;
    let mut index = Vec::new();
    for (name, manifest) in &splits {
        let records = read_manifest(manifest)?;
        let manifest_dir = manifest.parent().unwrap_or(Path::new("."));
        let out = dir.join(name);
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let entries = records
            .par_iter()
            .map(|r| -> Result<CacheEntry> {
                let clip = load_clip(manifest_dir, r)?;
                let tensor = assemble_features(&clip, &spec)?;
                let stem = Path::new(&r.clip_path).file_stem().and_then(|s| s.to_str()).unwrap_or("clip");
                let rel = format!("{name}/{stem}.feat");
                write_feature_cache(dir.join(&rel), &tensor)?;
                Ok(CacheEntry {
                    split: name.clone(),
                    clip_path: r.clip_path.clone(),
                    cache_path: rel,
                    azimuth_deg: r.azimuth_deg,
                    source_type: r.source_type.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        log_line(format_args!("{name}: {} clips", entries.len()));
        index.extend(entries);
    }
    let mut text = String::new();
    for e in &index {
        text.push_str(&serde_json::to_string(e)?);
        text.push('\n');
    }
    write_file(&dir.join("features.jsonl"), text)?;
    Ok(FeaturesOutcome { run_dir: dir, spec, files: index.len() })
}

/// Appends one JSON line per epoch and echoes progress to stderr.
struct EpochLog {
    path: PathBuf,
    out: BufWriter<File>,
    label: String,
}

impl EpochLog {
    fn create(path: PathBuf, label: String) -> Result<Self> {
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(EpochLog { path, out: BufWriter::new(file), label })
    }

    fn record(&mut self, r: &EpochRecord) -> binloc_core::Result<()> {
        let line = serde_json::to_string(r).map_err(|e| CoreError::Format(e.to_string()))?;
        writeln!(self.out, "{line}")
            .and_then(|()| self.out.flush())
            .map_err(|source| CoreError::Io { path: self.path.clone(), source })?;
        log_line(format_args!(
            "{} epoch {:>4}  train {:.5}  val {:.5}  {:.1}s",
            self.label, r.epoch, r.train_loss, r.val_loss, r.elapsed_s
        ));
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub spec: FeatureSetSpec,
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub checkpoint: PathBuf,
}

/// Trains one model on `[features] spec`; writes the best checkpoint, the
/// epoch log and a summary.
pub fn train_model(cfg: &RunConfig) -> Result<TrainSummary> {
    let m = ensure_dataset(cfg)?;
    let spec = cfg.features.spec;
    let tc = cfg.train_config(spec);
    let dir = prepare_run_dir(cfg, "train")?;
    let train_set = load_labeled_set(&m.train, &spec)?;
    let val_set = load_labeled_set(&m.val, &spec)?;
    let init = ModelState::init(spec.n_planes(), derive_seed(cfg.seed, &[label_id("init")]))?;
    let mut log = EpochLog::create(dir.join(TRAIN_LOG), spec.fingerprint())?;
    let outcome = train(init, &train_set, &val_set, &tc, |r| log.record(r))?;
    let checkpoint = dir.join(CHECKPOINT);
    save_checkpoint(&checkpoint, &outcome.best)?;
    let summary = TrainSummary {
        spec,
        seed: cfg.seed,
        best_epoch: outcome.best_epoch,
        best_val_loss: outcome.best_val_loss,
        epochs_run: outcome.epochs_run,
        stopped_early: outcome.stopped_early,
        checkpoint,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalOutcome {
    pub run_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub reports: Vec<EvalReport>,
}

#[derive(Debug, Clone, Serialize)]
struct EvalCsvRow<'a> {
    testset: &'a str,
    mae_deg: f64,
    ci_low: f64,
    ci_high: f64,
    n: usize,
}

/// Evaluates a checkpoint on every test set. Without `[eval] checkpoint` the
/// one written by `binloc train` for the same config is used.
pub fn eval(cfg: &RunConfig) -> Result<EvalOutcome> {
    let checkpoint = match &cfg.eval.checkpoint {
        Some(p) => p.clone(),
        None => cfg.run_dir("train")?.join(CHECKPOINT),
    };
    if !checkpoint.exists() {
        bail!("checkpoint {} does not exist; run `binloc train` first or set [eval] checkpoint", checkpoint.display());
    }
    let ckpt = load_checkpoint(&checkpoint, None)?;
    let m = ensure_dataset(cfg)?;
    let dir = prepare_run_dir(cfg, "eval")?;
    let mut reports = Vec::with_capacity(m.test_sets.len());
    for (i, t) in m.test_sets.iter().enumerate() {
        let set = load_labeled_set(&t.manifest, &cfg.features.spec)?;
        let seed = derive_seed(cfg.seed, &[label_id("bootstrap"), i as u64]);
        let report = evaluate(&ckpt, &set, &t.name, seed).with_context(|| format!("evaluating on {}", t.name))?;
        write_json(&dir.join(format!("report_{}.json", t.name)), &report)?;
        write_file(&dir.join(format!("report_{}.txt", t.name)), report.to_text())?;
        log_line(format_args!(
            "{}: MAE {:.2} deg [{:.2}, {:.2}] over {} clips",
            t.name, report.overall_mae_deg, report.ci_low_deg, report.ci_high_deg, report.n_samples
        ));
        reports.push(report);
    }
    let mut w = csv_writer();
    for r in &reports {
        w.serialize(EvalCsvRow {
            testset: &r.testset,
            mae_deg: r.overall_mae_deg,
            ci_low: r.ci_low_deg,
            ci_high: r.ci_high_deg,
            n: r.n_samples,
        })?;
    }
    write_file(&dir.join("eval.csv"), w.into_inner()?)?;
    Ok(EvalOutcome { run_dir: dir, checkpoint, reports })
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

/// Writes each row's checkpoint, epoch log and reports under
/// `<run>/rows/<spec>/` as the sweep progresses.
struct RowWriter {
    rows_dir: PathBuf,
    log: Option<EpochLog>,
}

impl RowWriter {
    fn row_dir(&self, spec: &FeatureSetSpec) -> PathBuf {
        self.rows_dir.join(spec.fingerprint())
    }
}

fn to_core(e: anyhow::Error) -> CoreError {
    CoreError::Format(format!("{e:#}"))
}

impl SweepObserver for RowWriter {
    fn row_started(&mut self, spec: FeatureSetSpec, position: usize, total: usize) {
        log_line(format_args!("row {}/{}: {}", position + 1, total, spec.fingerprint()));
        let dir = self.row_dir(&spec);
        self.log = fs::create_dir_all(&dir)
            .map_err(anyhow::Error::from)
            .and_then(|()| EpochLog::create(dir.join(TRAIN_LOG), spec.fingerprint()))
            .map_err(|e| log_line(format_args!("warning: no epoch log for {}: {e:#}", spec.fingerprint())))
            .ok();
    }

    fn epoch(&mut self, _spec: FeatureSetSpec, record: &EpochRecord) -> binloc_core::Result<()> {
        match &mut self.log {
            Some(log) => log.record(record),
            None => Ok(()),
        }
    }

    fn row_finished(&mut self, row: &SweepRow, outcome: Option<&TrainOutcome>) -> binloc_core::Result<()> {
        self.log = None;
        let dir = self.row_dir(&row.spec);
        if let Some(o) = outcome {
            save_checkpoint(dir.join(CHECKPOINT), &o.best)?;
        }
        (|| -> Result<()> {
            for r in &row.reports {
                write_json(&dir.join(format!("report_{}.json", r.testset)), r)?;
            }
            let file = RowFile { spec: row.spec, seed: row.seed, training: &row.training, error: &row.error };
            write_json(&dir.join("row.json"), &file)
        })()
        .map_err(to_core)?;
        match &row.error {
            Some(e) => log_line(format_args!("row {} failed: {e}", row.spec.fingerprint())),
            None => {
                let maes: Vec<String> =
                    row.reports.iter().map(|r| format!("{} {:.2}", r.testset, r.overall_mae_deg)).collect();
                log_line(format_args!("row {} done: {}", row.spec.fingerprint(), maes.join(", ")));
            }
        }
        Ok(())
    }
}

/// Row summary without the per-clip predictions, which live in the reports.
#[derive(Serialize)]
struct RowFile<'a> {
    spec: FeatureSetSpec,
    seed: u64,
    training: &'a Option<RowTraining>,
    error: &'a Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub run_dir: PathBuf,
    pub result: SweepResult,
}

/// Output files of a sweep run, relative to the run directory.
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_TABLE_CSV: &str = "table.csv";
pub const SWEEP_SOURCES_CSV: &str = "sources.csv";

/// Trains and evaluates every feature set in `[sweep] specs`.
pub fn sweep(cfg: &RunConfig) -> Result<SweepOutcome> {
    let m = ensure_dataset(cfg)?;
    let dir = prepare_run_dir(cfg, "sweep")?;
    let plan = SweepPlan {
        specs: cfg.sweep_specs(),
        train_manifest: m.train,
        val_manifest: m.val,
        test_sets: m.test_sets,
    };
    let base = cfg.train_config(cfg.features.spec);
    let mut writer = RowWriter { rows_dir: dir.join("rows"), log: None };
    let result = run_sweep(&plan, &base, &mut writer)?;
    write_file(&dir.join(SWEEP_CSV), result.to_csv()?)?;
    write_file(&dir.join(SWEEP_TABLE_CSV), result.to_table_csv()?)?;
    write_file(&dir.join(SWEEP_SOURCES_CSV), result.to_sources_csv()?)?;
    write_file(&dir.join("sweep.txt"), result.to_text())?;
    Ok(SweepOutcome { run_dir: dir, result })
}
