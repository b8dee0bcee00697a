use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::loss::circular_mse_loss;
use super::stopping::EarlyStopping;
use crate::error::{ensure, Error, Result};
use crate::features::{FeatureSetSpec, LabeledSet};
use crate::nn::{model_backward, model_forward, Checkpoint, Mode, ModelState, Tensor4};
use crate::rng::{derive_seed, label_id, stream};

fn default_learning_rate() -> f64 {
    1e-3
}
fn default_max_epochs() -> usize {
    1000
}
fn default_patience() -> usize {
    20
}
fn default_batch_size() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    pub feature_spec: FeatureSetSpec,
}

impl TrainConfig {
    /// Defaults: lr 1e-3, at most 1000 epochs, patience 20, batch 32.
    pub fn new(feature_spec: FeatureSetSpec, seed: u64) -> Self {
        TrainConfig {
            learning_rate: default_learning_rate(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            batch_size: default_batch_size(),
            seed,
            feature_spec,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.learning_rate.is_finite() && self.learning_rate > 0.0,
            Config,
            "learning_rate must be positive, got {}",
            self.learning_rate
        );
        ensure!(self.max_epochs >= 1, Config, "max_epochs must be at least 1");
        ensure!(self.patience >= 1, Config, "patience must be at least 1");
        ensure!(self.batch_size >= 1, Config, "batch_size must be at least 1");
        ensure!(!self.feature_spec.is_empty(), Config, "feature_spec selects no features");
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Seconds since training started.
    pub elapsed_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters and optimizer state of the epoch with the lowest
    /// validation loss.
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub log: Vec<EpochRecord>,
}

/// Copies the listed samples into a B × C × T × F batch with their labels.
pub fn gather_batch(set: &LabeledSet, indices: &[usize]) -> Result<(Tensor4<f32>, Vec<f64>)> {
    let mut data = Vec::with_capacity(indices.len() * set.sample_len());
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        data.extend_from_slice(set.sample(i));
        labels.push(set.labels_rad[i]);
    }
    let x = Tensor4::new([indices.len(), set.n_channels(), set.n_frames, set.n_bins], data)?;
    Ok((x, labels))
}

/// Inference-mode predictions (radians) for every sample, in set order.
pub fn predict(params: &ModelState<f32>, set: &LabeledSet, batch_size: usize) -> Result<Vec<f64>> {
    ensure!(batch_size >= 1, Precondition, "batch_size must be at least 1");
    let mut out = Vec::with_capacity(set.len());
    let all: Vec<usize> = (0..set.len()).collect();
    for chunk in all.chunks(batch_size) {
        let (x, _) = gather_batch(set, chunk)?;
        let (pred, _) = model_forward(params, &x, Mode::Infer)?;
        out.extend(pred.iter().map(|&p| p as f64));
    }
    Ok(out)
}

/// Circular MSE of inference-mode predictions over a whole set.
pub fn evaluate_loss(params: &ModelState<f32>, set: &LabeledSet, batch_size: usize) -> Result<f64> {
    let pred = predict(params, set, batch_size)?;
    Ok(circular_mse_loss(&set.labels_rad, &pred)?.0)
}

/// Trains from `init` with Adam and early stopping, calling `on_epoch` after
/// every epoch. Returns the best checkpoint, not the last.
pub fn train(
    init: ModelState<f32>,
    train_set: &LabeledSet,
    val_set: &LabeledSet,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    ensure!(!train_set.is_empty(), Config, "training split is empty");
    ensure!(!val_set.is_empty(), Config, "validation split is empty");
    for (name, set) in [("training", train_set), ("validation", val_set)] {
        ensure!(
            set.spec == config.feature_spec,
            Config,
            "{name} features are {}, config asks for {}",
            set.spec.fingerprint(),
            config.feature_spec.fingerprint()
        );
    }
    ensure!(
        init.input_channels == config.feature_spec.n_planes(),
        Config,
        "model expects {} input planes, features provide {}",
        init.input_channels,
        config.feature_spec.n_planes()
    );

    let start = Instant::now();
    let mut params = init;
    let mut adam = AdamState::new(&params);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best: Option<Checkpoint> = None;
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(config.seed, &[label_id("shuffle"), epoch as u64]));
        let mut loss_sum = 0.0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let (x, labels) = gather_batch(train_set, chunk)?;
            let dropout_seed = derive_seed(config.seed, &[label_id("dropout"), adam.t]);
            let (pred, trace) = model_forward(&params, &x, Mode::Train { dropout_seed })?;
            let pred: Vec<f64> = pred.iter().map(|&p| p as f64).collect();
            let (loss, grad) = circular_mse_loss(&labels, &pred)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite training loss at epoch {epoch}, batch {bi}")));
            }
            loss_sum += loss * chunk.len() as f64;
            let grad: Vec<f32> = grad.iter().map(|&g| g as f32).collect();
            let grads = model_backward(&params, trace.as_ref(), &grad)?;
            adam.step(&mut params, &grads, config.learning_rate)?;
            if !params.is_finite() {
                return Err(Error::Training(format!("parameters became non-finite at epoch {epoch}, batch {bi}")));
            }
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_loss = evaluate_loss(&params, val_set, config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("non-finite validation loss at epoch {epoch}")));
        }
        let record = EpochRecord { epoch, train_loss, val_loss, elapsed_s: start.elapsed().as_secs_f64() };
        log.push(record);
        on_epoch(&record)?;

        let decision = stopper.observe(epoch, val_loss);
        if decision.improved {
            best = Some(Checkpoint {
                params: params.clone(),
                adam_m: adam.m.clone(),
                adam_v: adam.v.clone(),
                step: adam.t,
                features: config.feature_spec,
            });
        }
        if decision.stop {
            stopped_early = true;
            break;
        }
    }

    let (best_epoch, best_val_loss) = stopper.best().expect("at least one epoch ran");
    Ok(TrainOutcome {
        best: best.expect("first epoch always improves"),
        best_epoch,
        best_val_loss,
        epochs_run: log.len(),
        stopped_early,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{ManifestRecord, Split};

    /// A small synthetic set whose single plane encodes the label as a tilt.
    fn toy_set(n: usize, seed: u64) -> LabeledSet {
        use rand::Rng as _;
        let spec = FeatureSetSpec::new(false, false, true, false);
        let (t, f) = (12, 16);
        let mut rng = stream(seed, &[]);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut records = Vec::new();
        for i in 0..n {
            let az: f64 = rng.random_range(-80.0..80.0);
            for r in 0..t {
                for c in 0..f {
                    let v = (az / 90.0) * (c as f64 / f as f64 - 0.5) + 0.05 * (r as f64).sin();
                    data.push(v as f32);
                }
            }
            labels.push(az.to_radians());
            records.push(ManifestRecord {
                clip_path: format!("toy{i}.wav"),
                azimuth_deg: az,
                source_type: "toy".into(),
                split: Split::Train,
            });
        }
        LabeledSet { spec, layout: spec.layout(), n_frames: t, n_bins: f, data, labels_rad: labels, records }
    }

    fn config(spec: FeatureSetSpec) -> TrainConfig {
        TrainConfig { max_epochs: 6, batch_size: 4, ..TrainConfig::new(spec, 11) }
    }

    #[test]
    fn config_validation() {
        let spec = FeatureSetSpec::new(false, false, true, true);
        assert!(TrainConfig::new(spec, 0).validate().is_ok());
        for bad in [
            TrainConfig { learning_rate: 0.0, ..TrainConfig::new(spec, 0) },
            TrainConfig { patience: 0, ..TrainConfig::new(spec, 0) },
            TrainConfig { batch_size: 0, ..TrainConfig::new(spec, 0) },
            TrainConfig::new(FeatureSetSpec::default(), 0),
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
        let parsed: TrainConfig = toml::from_str("feature_spec = \"ild+ipd\"\nseed = 3").unwrap();
        assert_eq!(parsed, TrainConfig::new(spec, 3));
        assert!(toml::from_str::<TrainConfig>("feature_spec = \"ild\"\nlr = 1").is_err());
    }

    #[test]
    fn empty_split_is_a_config_error() {
        let set = toy_set(4, 1);
        let mut empty = set.clone();
        empty.data.clear();
        empty.labels_rad.clear();
        empty.records.clear();
        let init = ModelState::init(1, 0).unwrap();
        let cfg = config(set.spec);
        assert!(matches!(train(init.clone(), &set, &empty, &cfg, |_| Ok(())), Err(Error::Config(_))));
        assert!(matches!(train(init, &empty, &set, &cfg, |_| Ok(())), Err(Error::Config(_))));
    }

    #[test]
    fn runs_are_bitwise_reproducible_and_return_the_best_epoch() {
        let tr = toy_set(10, 1);
        let va = toy_set(4, 2);
        let cfg = config(tr.spec);
        let init = ModelState::init(1, 5).unwrap();
        let mut seen = Vec::new();
        let a = train(init.clone(), &tr, &va, &cfg, |r| {
            seen.push(r.epoch);
            Ok(())
        })
        .unwrap();
        let b = train(init, &tr, &va, &cfg, |_| Ok(())).unwrap();
        assert_eq!(seen, (1..=6).collect::<Vec<_>>());
        assert_eq!(a.best.params, b.best.params);
        assert_eq!(a.log.iter().map(|r| r.val_loss).collect::<Vec<_>>(), b.log.iter().map(|r| r.val_loss).collect::<Vec<_>>());
        let min = a.log.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(a.best_val_loss, min);
        assert_eq!(a.log[a.best_epoch - 1].val_loss, min);
        assert_eq!(evaluate_loss(&a.best.params, &va, 3).unwrap(), min);
        assert_eq!(a.best.step as usize, a.best_epoch * 3);
    }

    #[test]
    fn frozen_parameters_stop_after_patience() {
        let tr = toy_set(6, 3);
        let va = toy_set(3, 4);
        // A learning rate far below f32 resolution leaves every weight unchanged,
        // so the validation loss is constant from the first epoch.
        let cfg = TrainConfig { learning_rate: 1e-30, max_epochs: 100, batch_size: 6, ..TrainConfig::new(tr.spec, 0) };
        let init = ModelState::init(1, 9).unwrap();
        let out = train(init.clone(), &tr, &va, &cfg, |_| Ok(())).unwrap();
        assert_eq!(out.epochs_run, 21);
        assert!(out.stopped_early);
        assert_eq!(out.best_epoch, 1);
        for (a, b) in out.best.params.blocks().iter().zip(init.blocks()) {
            assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-20));
        }
    }

    #[test]
    fn callback_errors_abort_training() {
        let tr = toy_set(4, 1);
        let cfg = config(tr.spec);
        let init = ModelState::init(1, 0).unwrap();
        let err = train(init, &tr, &tr, &cfg, |_| Err(Error::Training("stop".into()))).unwrap_err();
        assert!(matches!(err, Error::Training(_)));
    }
}
