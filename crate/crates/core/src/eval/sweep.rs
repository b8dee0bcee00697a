use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::report::{checkpoint_id, evaluate, EvalReport};
use crate::error::{ensure, Error, Result};
use crate::features::{enumerate_table1_specs, load_labeled_set, FeatureSetSpec};
use crate::nn::ModelState;
use crate::rng::{derive_seed, label_id};
use crate::training::{train, EpochRecord, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSet {
    pub name: String,
    pub manifest: PathBuf,
}

/// What a sweep trains on and evaluates against.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub specs: Vec<FeatureSetSpec>,
    pub train_manifest: PathBuf,
    pub val_manifest: PathBuf,
    pub test_sets: Vec<TestSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowTraining {
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub checkpoint_id: String,
}

/// One feature set: its training summary and one report per test set, or the
/// reason it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub spec: FeatureSetSpec,
    pub n_types: usize,
    pub n_planes: usize,
    pub seed: u64,
    pub training: Option<RowTraining>,
    pub reports: Vec<EvalReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub test_sets: Vec<String>,
    pub rows: Vec<SweepRow>,
}

/// Progress hooks; errors returned here abort the sweep.
pub trait SweepObserver {
    fn row_started(&mut self, _spec: FeatureSetSpec, _position: usize, _total: usize) {}
    fn epoch(&mut self, _spec: FeatureSetSpec, _record: &EpochRecord) -> Result<()> {
        Ok(())
    }
    fn row_finished(&mut self, _row: &SweepRow, _outcome: Option<&TrainOutcome>) -> Result<()> {
        Ok(())
    }
}

impl SweepObserver for () {}

/// Position in the thirteen-row table, or None for the two combinations the
/// table leaves out.
pub fn table_index(spec: &FeatureSetSpec) -> Option<usize> {
    enumerate_table1_specs().iter().position(|s| s == spec)
}

/// Training seed for one row, fixed by the base seed and the row identity so
/// that subsets of the sweep reproduce the full sweep's rows.
pub fn row_seed(base_seed: u64, spec: &FeatureSetSpec) -> u64 {
    let id = table_index(spec).map_or_else(|| label_id(&spec.fingerprint()), |i| i as u64);
    derive_seed(base_seed, &[label_id("sweep"), id])
}

/// Sorts into table order (extra combinations last, by name) and rejects
/// duplicates and empty sets.
pub fn canonical_order(specs: &[FeatureSetSpec]) -> Result<Vec<FeatureSetSpec>> {
    ensure!(!specs.is_empty(), Config, "sweep has no feature sets");
    let mut out = specs.to_vec();
    for s in &out {
        ensure!(!s.is_empty(), Config, "sweep contains an empty feature set");
    }
    out.sort_by_key(|s| (table_index(s).unwrap_or(usize::MAX), s.fingerprint()));
    for w in out.windows(2) {
        ensure!(w[0] != w[1], Config, "feature set {} listed twice", w[0].fingerprint());
    }
    Ok(out)
}

fn run_row(
    plan: &SweepPlan,
    cfg: &TrainConfig,
    observer: &mut dyn SweepObserver,
) -> Result<(RowTraining, Vec<EvalReport>, TrainOutcome)> {
    let spec = cfg.feature_spec;
    let outcome = {
        let train_set = load_labeled_set(&plan.train_manifest, &spec)?;
        let val_set = load_labeled_set(&plan.val_manifest, &spec)?;
        let init = ModelState::init(spec.n_planes(), derive_seed(cfg.seed, &[label_id("init")]))?;
        train(init, &train_set, &val_set, cfg, |r| observer.epoch(spec, r))?
    };
    let training = RowTraining {
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.epochs_run,
        best_val_loss: outcome.best_val_loss,
        stopped_early: outcome.stopped_early,
        checkpoint_id: checkpoint_id(&outcome.best),
    };
    let mut reports = Vec::with_capacity(plan.test_sets.len());
    for (i, t) in plan.test_sets.iter().enumerate() {
        let set = load_labeled_set(&t.manifest, &spec)?;
        let seed = derive_seed(cfg.seed, &[label_id("bootstrap"), i as u64]);
        reports.push(evaluate(&outcome.best, &set, &t.name, seed)?);
    }
    Ok((training, reports, outcome))
}

/// Trains and evaluates every feature set of the plan, in table order. A row
/// whose training or evaluation fails is kept as an error row.
pub fn run_sweep(plan: &SweepPlan, base: &TrainConfig, observer: &mut dyn SweepObserver) -> Result<SweepResult> {
    let specs = canonical_order(&plan.specs)?;
    ensure!(!plan.test_sets.is_empty(), Config, "sweep has no test sets");
    let mut rows = Vec::with_capacity(specs.len());
    for (pos, spec) in specs.iter().enumerate() {
        observer.row_started(*spec, pos, specs.len());
        let seed = row_seed(base.seed, spec);
        let cfg = TrainConfig { seed, feature_spec: *spec, ..base.clone() };
        let mut row = SweepRow {
            spec: *spec,
            n_types: spec.n_types(),
            n_planes: spec.n_planes(),
            seed,
            training: None,
            reports: Vec::new(),
            error: None,
        };
        let result = run_row(plan, &cfg, observer);
        match result {
            Ok((training, reports, outcome)) => {
                row.training = Some(training);
                row.reports = reports;
                observer.row_finished(&row, Some(&outcome))?;
            }
            Err(e) => {
                row.error = Some(e.to_string());
                observer.row_finished(&row, None)?;
            }
        }
        rows.push(row);
    }
    Ok(SweepResult { test_sets: plan.test_sets.iter().map(|t| t.name.clone()).collect(), rows })
}

/// One line of the long-format sweep CSV; numeric fields are empty on
/// error rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCsvRow {
    pub spec: String,
    pub n_types: usize,
    pub n_planes: usize,
    pub testset: String,
    pub mae_deg: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n: Option<usize>,
    pub error: Option<String>,
}

/// One line of the per-source CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCsvRow {
    pub spec: String,
    pub testset: String,
    pub source_type: String,
    pub mae_deg: f64,
    pub n: usize,
}

fn csv_string(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w).and_then(|()| w.flush().map_err(csv::Error::from)).map_err(|e| Error::Format(format!("csv: {e}")))?;
    let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(format!("csv: {e}")))
}

impl SweepRow {
    pub fn report(&self, testset: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.testset == testset)
    }
}

impl SweepResult {
    pub fn row(&self, spec: &FeatureSetSpec) -> Option<&SweepRow> {
        self.rows.iter().find(|r| &r.spec == spec)
    }

    pub fn csv_rows(&self) -> Vec<SweepCsvRow> {
        let mut out = Vec::new();
        for row in &self.rows {
            for t in &self.test_sets {
                let r = row.report(t);
                out.push(SweepCsvRow {
                    spec: row.spec.fingerprint(),
                    n_types: row.n_types,
                    n_planes: row.n_planes,
                    testset: t.clone(),
                    mae_deg: r.map(|r| r.overall_mae_deg),
                    ci_low: r.map(|r| r.ci_low_deg),
                    ci_high: r.map(|r| r.ci_high_deg),
                    n: r.map(|r| r.n_samples),
                    error: if r.is_some() { None } else { Some(row.error.clone().unwrap_or_else(|| "no report".into())) },
                });
            }
        }
        out
    }

    /// One line per (feature set, test set).
    pub fn to_csv(&self) -> Result<String> {
        csv_string(|w| self.csv_rows().iter().try_for_each(|r| w.serialize(r)))
    }

    /// One line per feature set with a MAE column per test set.
    pub fn to_table_csv(&self) -> Result<String> {
        csv_string(|w| {
            let mut header = vec!["spec".to_string(), "n_types".into(), "n_planes".into()];
            header.extend(self.test_sets.iter().map(|t| format!("mae_{t}")));
            w.write_record(&header)?;
            for row in &self.rows {
                let mut rec = vec![row.spec.fingerprint(), row.n_types.to_string(), row.n_planes.to_string()];
                rec.extend(self.test_sets.iter().map(|t| row.report(t).map_or(String::new(), |r| r.overall_mae_deg.to_string())));
                w.write_record(&rec)?;
            }
            Ok(())
        })
    }

    /// MAE per source type, one line per (feature set, test set, source).
    pub fn to_sources_csv(&self) -> Result<String> {
        csv_string(|w| {
            for row in &self.rows {
                for r in &row.reports {
                    for (k, g) in &r.per_source {
                        w.serialize(SourceCsvRow {
                            spec: row.spec.fingerprint(),
                            testset: r.testset.clone(),
                            source_type: k.clone(),
                            mae_deg: g.mae_deg,
                            n: g.n,
                        })?;
                    }
                }
            }
            Ok(())
        })
    }

    /// Aligned text table in the layout of the feature comparison grid.
    pub fn to_text(&self) -> String {
        let names: Vec<String> = self.rows.iter().map(|r| r.spec.display_name()).collect();
        let w = names.iter().map(String::len).max().unwrap_or(8).max(8);
        let cols: Vec<usize> = self.test_sets.iter().map(|t| t.len().max(8)).collect();
        let mut s = format!("{:<w$}  {:>5}  {:>6}", "features", "types", "planes");
        for (t, cw) in self.test_sets.iter().zip(&cols) {
            let _ = write!(s, "  {t:>cw$}");
        }
        s.push('\n');
        for (row, name) in self.rows.iter().zip(&names) {
            let _ = write!(s, "{name:<w$}  {:>5}  {:>6}", row.n_types, row.n_planes);
            for (t, cw) in self.test_sets.iter().zip(&cols) {
                match row.report(t) {
                    Some(r) => {
                        let _ = write!(s, "  {:>cw$.2}", r.overall_mae_deg);
                    }
                    None => {
                        let _ = write!(s, "  {:>cw$}", "error");
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}
