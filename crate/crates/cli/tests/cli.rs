use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use binloc_cli::commands::{self, CHECKPOINT, RESOLVED_CONFIG, TRAIN_LOG};
use binloc_cli::{Overrides, RunConfig};
use binloc_core::nn::{save_checkpoint, Checkpoint, ModelState};
use binloc_core::FeatureSetSpec;

/// Three angles, one clip per angle and split.
const TINY: &str = r#"
seed = 3

[synth.azimuths]
start_deg = -60.0
stop_deg = 60.0
step_deg = 60.0

[[synth.splits]]
name = "train"
split = "train"
kinds = ["am_noise"]
seeds = [1]

[[synth.splits]]
name = "val"
split = "val"
kinds = ["am_noise"]
seeds = [2]

[[synth.splits]]
name = "test"
split = "test"
kinds = ["am_noise", "bursty_pink"]
seeds = [3]

[train]
max_epochs = 2
batch_size = 2
"#;

fn binloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_binloc"))
        .args(args)
        .env_remove("BINLOC_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn tiny(root: &Path, extra: &str) -> RunConfig {
    let mut cfg = RunConfig::parse(&format!("{TINY}{extra}")).unwrap();
    cfg.apply(&Overrides { output_dir: Some(root.to_path_buf()), ..Default::default() }).unwrap();
    cfg
}

#[test]
fn misspelled_key_fails_with_one_line_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[train]\nlearningrate = 0.01\n");
    let out = binloc(&["--config", &cfg, "train"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("error: "), "{stderr}");
    assert!(stderr.contains("learningrate"), "{stderr}");
    assert!(stderr.contains("line 2"), "{stderr}");
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
}

#[test]
fn missing_checkpoint_is_a_clear_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TINY);
    let root = dir.path().join("out");
    let out = binloc(&["--config", &cfg, "--output-dir", root.to_str().unwrap(), "eval"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("does not exist"), "{stderr}");
}

#[test]
fn synth_prints_counts_matching_manifests_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TINY);
    let root = dir.path().join("nested/out");
    let run = || binloc(&["--config", &cfg, "--output-dir", root.to_str().unwrap(), "synth"]);
    let out = run();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();

    let resolved = tiny(&root, "");
    let m = resolved.manifests().unwrap();
    let first = fs::read(&m.test_sets[0].manifest).unwrap();
    for (name, path, want) in [("train", &m.train, 3), ("val", &m.val, 3), ("test", &m.test_sets[0].manifest, 6)] {
        let lines = fs::read_to_string(path).unwrap().lines().count();
        assert_eq!(lines, want);
        assert!(stdout.contains(&format!("{name}: {lines} clips")), "{stdout}");
    }

    let wav = m.train.parent().unwrap().join("train");
    let clip = fs::read_dir(&wav).unwrap().next().unwrap().unwrap().path();
    let wav_before = fs::read(&clip).unwrap();
    assert!(run().status.success());
    assert_eq!(fs::read(&m.test_sets[0].manifest).unwrap(), first);
    assert_eq!(fs::read(&clip).unwrap(), wav_before);
}

#[test]
fn thread_count_does_not_change_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let mut one = tiny(&dir.path().join("a"), "");
    one.threads = Some(1);
    let mut two = tiny(&dir.path().join("b"), "");
    two.threads = Some(2);
    for cfg in [&one, &two] {
        commands::with_threads(cfg, || commands::synth(cfg)).unwrap();
    }
    let (ma, mb) = (one.manifests().unwrap(), two.manifests().unwrap());
    assert_eq!(fs::read(&ma.train).unwrap(), fs::read(&mb.train).unwrap());
    let rel = "test/am_noise_s3_az+060.0.wav";
    let wa = ma.train.parent().unwrap().join(rel);
    assert!(wa.exists(), "{}", wa.display());
    assert_eq!(fs::read(wa).unwrap(), fs::read(mb.train.parent().unwrap().join(rel)).unwrap());
}

#[test]
fn oracle_checkpoint_scores_zero_error() {
    // every clip sits at 30 degrees and the network ignores its input and
    // predicts its head bias
    let dir = tempfile::tempdir().unwrap();
    let text = TINY.replace("seeds = [1]", "seeds = [1]\nazimuths_deg = [30.0]")
        .replace("seeds = [2]", "seeds = [2]\nazimuths_deg = [30.0]")
        .replace("seeds = [3]", "seeds = [3]\nazimuths_deg = [30.0]");
    let spec = FeatureSetSpec::new(false, false, true, true);
    let mut params = ModelState::<f32>::zeros(2).unwrap();
    params.head.bias[0] = 30f32.to_radians();
    let ckpt = dir.path().join("oracle.bin");
    save_checkpoint(&ckpt, &Checkpoint::fresh(params, spec)).unwrap();
    let text = format!("{text}\n[eval]\ncheckpoint = {:?}\n", ckpt.to_str().unwrap());
    let mut cfg = RunConfig::parse(&text).unwrap();
    cfg.apply(&Overrides { output_dir: Some(dir.path().to_path_buf()), ..Default::default() }).unwrap();

    let out = commands::eval(&cfg).unwrap();
    let report = &out.reports[0];
    assert_eq!(report.n_samples, 2);
    assert!(report.overall_mae_deg < 1e-4, "{}", report.overall_mae_deg);
    assert!(out.run_dir.join("report_test.json").exists());
    let csv = fs::read_to_string(out.run_dir.join("eval.csv")).unwrap();
    assert!(csv.starts_with("testset,mae_deg,ci_low,ci_high,n\ntest,"), "{csv}");
}

#[test]
fn train_then_eval_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TINY);
    let root = dir.path().join("runs");
    let args = |cmd: &'static str| vec!["--config".to_string(), cfg.clone(), "--output-dir".into(), root.to_str().unwrap().into(), cmd.into()];
    let run = |cmd| {
        let a = args(cmd);
        binloc(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };

    let out = run("train");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let resolved = tiny(&root, "");
    let train_dir = resolved.run_dir("train").unwrap();
    assert!(train_dir.join(CHECKPOINT).exists());
    let log = fs::read_to_string(train_dir.join(TRAIN_LOG)).unwrap();
    assert_eq!(log.lines().count(), 2);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["epoch", "train_loss", "val_loss", "elapsed_s"] {
            assert!(v.get(key).is_some(), "{line}");
        }
    }
    let persisted = RunConfig::load(train_dir.join(RESOLVED_CONFIG)).unwrap();
    assert_eq!(persisted, resolved.resolved());

    let out = run("eval");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(resolved.run_dir("eval").unwrap().join("report_test.txt")).unwrap();
    assert!(report.contains("MAE"), "{report}");
}

#[test]
fn seed_flag_overrides_the_file_and_changes_the_run_id() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TINY);
    let out = binloc(&["--config", &cfg, "--seed", "11", "config"]);
    assert!(out.status.success());
    let shown = RunConfig::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(shown.seed, 11);
    let base = tiny(dir.path(), "");
    assert_ne!(shown.run_id("train").unwrap(), base.run_id("train").unwrap());
}

#[test]
fn sweep_subset_keeps_canonical_order_and_writes_row_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), "\n[sweep]\nspecs = [\"mag_lr\", \"ipd\"]\n");
    let out = commands::sweep(&cfg).unwrap();
    let names: Vec<String> = out.result.rows.iter().map(|r| r.spec.fingerprint()).collect();
    assert_eq!(names, ["ipd", "mag_lr"]);
    let mut reader = csv::Reader::from_path(out.run_dir.join("sweep.csv")).unwrap();
    assert_eq!(
        reader.headers().unwrap(),
        vec!["spec", "n_types", "n_planes", "testset", "mae_deg", "ci_low", "ci_high", "n", "error"]
    );
    assert_eq!(reader.records().count(), 2);
    for name in &names {
        let row = out.run_dir.join("rows").join(name);
        for file in [CHECKPOINT, TRAIN_LOG, "report_test.json", "row.json"] {
            assert!(row.join(file).exists(), "{name}/{file}");
        }
    }
}
