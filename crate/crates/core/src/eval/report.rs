use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{abs_errors_deg, bootstrap_mean_ci, BOOTSTRAP_RESAMPLES};
use crate::audio::ManifestRecord;
use crate::error::{ensure, Result};
use crate::features::{FeatureSetSpec, LabeledSet};
use crate::nn::{encode_checkpoint, Checkpoint};
use crate::training::{angular_difference, predict};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMae {
    pub mae_deg: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleMae {
    pub azimuth_deg: f64,
    pub mae_deg: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub clip_path: String,
    pub source_type: String,
    pub azimuth_deg: f64,
    /// Network output wrapped to (−180°, 180°].
    pub predicted_deg: f64,
    pub abs_error_deg: f64,
}

/// MAE of one checkpoint on one test set, with breakdowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint_id: String,
    pub feature_spec: FeatureSetSpec,
    pub testset: String,
    pub n_samples: usize,
    pub overall_mae_deg: f64,
    /// 95% bootstrap interval of the overall MAE.
    pub ci_low_deg: f64,
    pub ci_high_deg: f64,
    pub per_source: BTreeMap<String, GroupMae>,
    /// Sorted by azimuth.
    pub per_angle: Vec<AngleMae>,
    pub predictions: Vec<Prediction>,
}

fn group(errs: impl Iterator<Item = f64>) -> GroupMae {
    let (sum, n) = errs.fold((0.0, 0), |(s, n), e| (s + e, n + 1));
    GroupMae { mae_deg: sum / n as f64, n }
}

impl EvalReport {
    /// Builds a report from labels and raw network outputs (radians).
    pub fn from_predictions(
        labels_rad: &[f64],
        pred_rad: &[f64],
        records: &[ManifestRecord],
        feature_spec: FeatureSetSpec,
        checkpoint_id: impl Into<String>,
        testset: impl Into<String>,
        bootstrap_seed: u64,
    ) -> Result<Self> {
        let errs = abs_errors_deg(labels_rad, pred_rad)?;
        ensure!(records.len() == errs.len(), Precondition, "record and prediction counts differ");
        let predictions: Vec<Prediction> = records
            .iter()
            .zip(pred_rad)
            .zip(&errs)
            .map(|((r, &p), &e)| Prediction {
                clip_path: r.clip_path.clone(),
                source_type: r.source_type.clone(),
                azimuth_deg: r.azimuth_deg,
                predicted_deg: angular_difference(p, 0.0).to_degrees(),
                abs_error_deg: e,
            })
            .collect();

        let mut by_source: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut by_angle: BTreeMap<i64, (f64, Vec<f64>)> = BTreeMap::new();
        for p in &predictions {
            by_source.entry(&p.source_type).or_default().push(p.abs_error_deg);
            let key = (p.azimuth_deg * 1e6).round() as i64;
            by_angle.entry(key).or_insert_with(|| (p.azimuth_deg, Vec::new())).1.push(p.abs_error_deg);
        }
        let per_source = by_source.into_iter().map(|(k, v)| (k.to_string(), group(v.into_iter()))).collect();
        let per_angle = by_angle
            .into_values()
            .map(|(az, v)| {
                let g = group(v.into_iter());
                AngleMae { azimuth_deg: az, mae_deg: g.mae_deg, n: g.n }
            })
            .collect();
        let (ci_low_deg, ci_high_deg) = bootstrap_mean_ci(&errs, BOOTSTRAP_RESAMPLES, bootstrap_seed)?;
        Ok(EvalReport {
            checkpoint_id: checkpoint_id.into(),
            feature_spec,
            testset: testset.into(),
            n_samples: errs.len(),
            overall_mae_deg: errs.iter().sum::<f64>() / errs.len() as f64,
            ci_low_deg,
            ci_high_deg,
            per_source,
            per_angle,
            predictions,
        })
    }

    /// Count-weighted MAE over the source types selected by `keep`, or None
    /// if no sample matches.
    pub fn subset_mae(&self, keep: impl Fn(&str) -> bool) -> Option<GroupMae> {
        let (sum, n) = self
            .per_source
            .iter()
            .filter(|(k, _)| keep(k))
            .fold((0.0, 0), |(s, n), (_, g)| (s + g.mae_deg * g.n as f64, n + g.n));
        (n > 0).then(|| GroupMae { mae_deg: sum / n as f64, n })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "test set   {}", self.testset);
        let _ = writeln!(s, "features   {}", self.feature_spec.display_name());
        let _ = writeln!(s, "checkpoint {}", self.checkpoint_id);
        let _ = writeln!(
            s,
            "MAE        {:.2} deg  (95% CI {:.2} to {:.2}, n = {})",
            self.overall_mae_deg, self.ci_low_deg, self.ci_high_deg, self.n_samples
        );
        let w = self.per_source.keys().map(String::len).max().unwrap_or(6).max(6);
        let _ = writeln!(s, "\n{:<w$}  {:>8}  {:>5}", "source", "MAE", "n");
        for (k, g) in &self.per_source {
            let _ = writeln!(s, "{k:<w$}  {:>8.2}  {:>5}", g.mae_deg, g.n);
        }
        let _ = writeln!(s, "\n{:>8}  {:>8}  {:>5}", "azimuth", "MAE", "n");
        for a in &self.per_angle {
            let _ = writeln!(s, "{:>8.1}  {:>8.2}  {:>5}", a.azimuth_deg, a.mae_deg, a.n);
        }
        s
    }
}

/// Short content hash of a checkpoint (FNV-1a 64 over its encoding).
pub fn checkpoint_id(ckpt: &Checkpoint) -> String {
    let h = encode_checkpoint(ckpt)
        .iter()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3));
    format!("{h:016x}")
}

/// Inference over a labeled test set.
pub fn evaluate(
    ckpt: &Checkpoint,
    set: &LabeledSet,
    testset: impl Into<String>,
    bootstrap_seed: u64,
) -> Result<EvalReport> {
    ensure!(
        ckpt.input_channels() == set.n_channels(),
        Validation,
        "checkpoint takes {} input planes but the {} features have {}",
        ckpt.input_channels(),
        set.spec.fingerprint(),
        set.n_channels()
    );
    ensure!(
        ckpt.features == set.spec,
        Validation,
        "checkpoint was trained on {} features, test set provides {}",
        ckpt.features.fingerprint(),
        set.spec.fingerprint()
    );
    ensure!(!set.is_empty(), Precondition, "test set is empty");
    let pred = predict(&ckpt.params, set, 32)?;
    EvalReport::from_predictions(&set.labels_rad, &pred, &set.records, set.spec, checkpoint_id(ckpt), testset, bootstrap_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::Split;
    use crate::nn::ModelState;
    use crate::rng::stream;
    use rand::Rng as _;

    fn records(n: usize, seed: u64) -> (Vec<ManifestRecord>, Vec<f64>, Vec<f64>) {
        let mut rng = stream(seed, &[]);
        let kinds = ["a", "b", "c"];
        let mut recs = Vec::new();
        let (mut t, mut p) = (Vec::new(), Vec::new());
        for i in 0..n {
            let az = -90.0 + 5.0 * rng.random_range(0..37) as f64;
            recs.push(ManifestRecord {
                clip_path: format!("{i}.wav"),
                azimuth_deg: az,
                source_type: kinds[i % 3].into(),
                split: Split::Test,
            });
            t.push(az.to_radians());
            p.push(rng.random_range(-3.0..3.0));
        }
        (recs, t, p)
    }

    #[test]
    fn partitions_reaggregate() {
        let (recs, t, p) = records(100, 2);
        let spec = FeatureSetSpec::new(false, false, true, true);
        let r = EvalReport::from_predictions(&t, &p, &recs, spec, "x", "test", 0).unwrap();
        assert_eq!(r.per_source.values().map(|g| g.n).sum::<usize>(), 100);
        assert_eq!(r.per_angle.iter().map(|g| g.n).sum::<usize>(), 100);
        let all = r.subset_mae(|_| true).unwrap();
        assert!((all.mae_deg - r.overall_mae_deg).abs() < 1e-9);
        let weighted: f64 = r.per_angle.iter().map(|a| a.mae_deg * a.n as f64).sum::<f64>() / 100.0;
        assert!((weighted - r.overall_mae_deg).abs() < 1e-9);
        assert!(r.ci_low_deg <= r.overall_mae_deg && r.overall_mae_deg <= r.ci_high_deg);
        assert!(r.per_angle.windows(2).all(|w| w[0].azimuth_deg < w[1].azimuth_deg));
        assert_eq!(r.subset_mae(|k| k == "a").unwrap().n, 34);
        assert!(r.subset_mae(|k| k == "zzz").is_none());
        assert!(r.to_text().contains("MAE"));
    }

    fn one_clip_set(spec: FeatureSetSpec, az: f64) -> LabeledSet {
        let (t, f) = (12, 12);
        LabeledSet {
            spec,
            layout: spec.layout(),
            n_frames: t,
            n_bins: f,
            data: vec![0.25; spec.n_planes() * t * f],
            labels_rad: vec![az.to_radians()],
            records: vec![ManifestRecord {
                clip_path: "a.wav".into(),
                azimuth_deg: az,
                source_type: "pink_noise".into(),
                split: Split::Test,
            }],
        }
    }

    #[test]
    fn zero_network_has_closed_form_error() {
        let spec = FeatureSetSpec::new(false, false, true, true);
        let mut params = ModelState::<f32>::zeros(2).unwrap();
        params.head.bias[0] = 0.5;
        let ckpt = Checkpoint::fresh(params, spec);
        let set = one_clip_set(spec, -40.0);
        let r = evaluate(&ckpt, &set, "one", 0).unwrap();
        let want = (-40f64.to_radians() - 0.5f32 as f64).abs().to_degrees();
        assert!((r.overall_mae_deg - want).abs() < 1e-9);
        assert_eq!(r, evaluate(&ckpt, &set, "one", 0).unwrap());
    }

    #[test]
    fn channel_mismatch_is_a_validation_error() {
        let spec = FeatureSetSpec::new(false, false, true, true);
        let ckpt = Checkpoint::fresh(ModelState::init(2, 0).unwrap(), spec);
        let other = FeatureSetSpec::new(true, false, false, false);
        assert!(matches!(evaluate(&ckpt, &one_clip_set(other, 0.0), "x", 0), Err(crate::Error::Validation(_))));
        let same_count = FeatureSetSpec::new(false, false, true, true);
        let ckpt_ild = Checkpoint::fresh(ModelState::init(1, 0).unwrap(), FeatureSetSpec::new(false, false, true, false));
        assert!(matches!(evaluate(&ckpt_ild, &one_clip_set(same_count, 0.0), "x", 0), Err(crate::Error::Validation(_))));
    }
}
