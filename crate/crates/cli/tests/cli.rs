use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_trustprobe");

const SMALL: &str = r#"
seed = 11
output_dir = "out"

[model]
name = "small"
fc_hidden = 16

[data.synth]
counts = [[10, 10], [10, 10], [10, 10], [10, 10]]
payload = { kind = "embeddings", layers = 2, frames = 6, dims = 8 }
separation = 3.0
gender_leakage = 1.0
speakers_per_gender = 6

[folds]
k = 3

[train]
max_epochs = 3
batch_size = 16
"#;

fn trustprobe(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .env("TRUSTPROBE_THREADS", "1")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = trustprobe(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str], code: i32) -> String {
    let out = trustprobe(dir, args);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&out.stdout));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    err
}

fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn pipeline(dir: &Path, config: &str) {
    for stage in ["synth", "train", "attack", "eval", "profile"] {
        ok(dir, &["--config", config, stage]);
    }
}

/// Every file under `root` except the wall-clock metadata, with contents.
fn artifacts(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "run_meta.json" {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = workspace(SMALL);
    pipeline(dir.path(), "run.toml");
    let out = dir.path().join("out");
    for rel in [
        "config.toml",
        "run_meta.json",
        "data/manifest.jsonl",
        "train/folds.json",
        "train/predictions.jsonl",
        "train/metrics.json",
        "attack/report.jsonl",
        "attack/summary.json",
        "eval/metrics.json",
        "eval/details.json",
        "profile/profile.json",
        "profile/radar.svg",
    ] {
        assert!(out.join(rel).is_file(), "missing {rel}");
    }
    assert_eq!(fs::read_to_string(out.join("config.toml")).unwrap(), SMALL);
    let report = json(out.join("eval/metrics.json"));
    assert_eq!(report["model_name"], "small");
    for key in ["uar_percent", "gender_accuracy_percent", "asr_percent", "equality_of_odds_percent", "flops"] {
        assert!(report[key].is_number(), "{key}: {report}");
    }
    let predictions = fs::read_to_string(out.join("train/predictions.jsonl")).unwrap();
    assert_eq!(predictions.lines().count(), 80);
}

#[test]
fn reruns_are_byte_identical() {
    let a = workspace(SMALL);
    let b = workspace(SMALL);
    pipeline(a.path(), "run.toml");
    pipeline(b.path(), "run.toml");
    let (fa, fb) = (artifacts(&a.path().join("out")), artifacts(&b.path().join("out")));
    assert_eq!(fa.iter().map(|f| &f.0).collect::<Vec<_>>(), fb.iter().map(|f| &f.0).collect::<Vec<_>>());
    for (x, y) in fa.iter().zip(&fb) {
        assert!(x.1 == y.1, "{} differs", x.0.display());
    }
}

#[test]
fn seed_and_fold_overrides_apply() {
    let dir = workspace(SMALL);
    ok(dir.path(), &["--config", "run.toml", "--out", "o", "--seed", "5", "synth"]);
    ok(dir.path(), &["--config", "run.toml", "--out", "o", "--seed", "5", "--folds", "2", "train"]);
    let meta = json(dir.path().join("o/run_meta.json"));
    assert_eq!(meta["seed"], 5);
    assert_eq!(meta["folds"], 2);
    assert_eq!(json(dir.path().join("o/train/metrics.json"))["folds"].as_array().unwrap().len(), 2);
}

#[test]
fn pgd_single_full_step_matches_fgsm() {
    let dir = workspace(SMALL);
    ok(dir.path(), &["--config", "run.toml", "synth"]);
    ok(dir.path(), &["--config", "run.toml", "train"]);
    let fgsm = SMALL.to_string() + "\n[attack]\nkind = \"fgsm\"\n";
    let pgd = SMALL.to_string() + "\n[attack]\nkind = \"pgd\"\npgd_steps = 1\npgd_step_ratio = 1.0\n";
    let mut reports = Vec::new();
    for (name, text) in [("fgsm.toml", fgsm), ("pgd.toml", pgd)] {
        fs::write(dir.path().join(name), text).unwrap();
        ok(dir.path(), &["--config", name, "attack"]);
        let mut rows = fs::read_to_string(dir.path().join("out/attack/report.jsonl")).unwrap();
        rows = rows.replace("\"pgd\"", "\"fgsm\"");
        let summary = json(dir.path().join("out/attack/summary.json"));
        reports.push((rows, summary["asr"].clone(), summary["flipped"].clone()));
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn infinite_snr_gives_zero_asr() {
    for kind in ["fgsm", "pgd", "gaussian"] {
        let text = SMALL.to_string() + &format!("\n[attack]\nkind = \"{kind}\"\nsnr_db = inf\n");
        let dir = workspace(&text);
        ok(dir.path(), &["--config", "run.toml", "synth"]);
        ok(dir.path(), &["--config", "run.toml", "train"]);
        ok(dir.path(), &["--config", "run.toml", "attack"]);
        let summary = json(dir.path().join("out/attack/summary.json"));
        assert_eq!(summary["flipped"], 0, "{kind}");
        assert_eq!(summary["asr"], 0.0, "{kind}");
    }
}

#[test]
fn two_reports_give_two_polygons_and_a_legend() {
    let dir = workspace("");
    for (name, asr) in [("a", 20.0), ("b", 60.0)] {
        let report = serde_json::json!({
            "model_name": name,
            "uar_percent": 65.0,
            "gender_accuracy_percent": 90.0,
            "asr_percent": asr,
            "equality_of_odds_percent": 15.0,
            "flops": 3.0e9,
        });
        fs::write(dir.path().join(format!("{name}.json")), report.to_string()).unwrap();
    }
    ok(dir.path(), &["--out", "cmp", "profile", "a.json", "b.json"]);
    let svg = fs::read_to_string(dir.path().join("cmp/profile/radar.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polygon")).count(), 2);
    for name in ["a", "b"] {
        assert!(doc.descendants().any(|n| n.is_text() && n.text() == Some(name)), "legend lacks {name}");
    }
    let profile = json(dir.path().join("cmp/profile/profile.json"));
    assert_eq!(profile["models"].as_array().unwrap().len(), 2);
}

#[test]
fn missing_axis_names_axis_and_file() {
    let dir = workspace("");
    let report = serde_json::json!({
        "model_name": "partial",
        "uar_percent": 65.0,
        "gender_accuracy_percent": 90.0,
        "equality_of_odds_percent": 15.0,
        "flops": 3.0e9,
    });
    fs::write(dir.path().join("partial.json"), report.to_string()).unwrap();
    let err = fails(dir.path(), &["--out", "cmp", "profile", "partial.json"], 1);
    assert!(err.starts_with("error[E_PROFILE]"), "{err}");
    assert!(err.contains("safety") && err.contains("partial.json"), "{err}");
    assert!(!dir.path().join("cmp/profile").exists());
}

#[test]
fn missing_manifest_fails_before_training() {
    let dir = workspace("output_dir = \"out\"\n[data]\nmanifest = \"nowhere/manifest.jsonl\"\n");
    let err = fails(dir.path(), &["--config", "run.toml", "train"], 1);
    assert!(err.starts_with("error[E_DATA]") && err.contains("nowhere"), "{err}");
    assert!(!dir.path().join("out/train").exists());
}

#[test]
fn empty_corpus_is_rejected() {
    let text = SMALL.replace("[[10, 10], [10, 10], [10, 10], [10, 10]]", "[[0, 0], [0, 0], [0, 0], [0, 0]]");
    let dir = workspace(&text);
    let err = fails(dir.path(), &["--config", "run.toml", "synth"], 1);
    assert!(err.starts_with("error[E_DATA]"), "{err}");
}

#[test]
fn config_and_usage_errors_exit_with_two() {
    let dir = workspace("[train]\nlearning_rate = 0.1\nmomentum = 0.9\n");
    let err = fails(dir.path(), &["--config", "run.toml", "--out", "o", "train"], 2);
    assert!(err.starts_with("error[E_CONFIG]") && err.contains("momentum") && err.contains("line 3"), "{err}");
    let err = fails(dir.path(), &["train"], 2);
    assert!(err.starts_with("error[E_USAGE]"), "{err}");
    let err = fails(dir.path(), &["--config", "absent.toml", "train"], 1);
    assert!(err.starts_with("error[E_IO]"), "{err}");
}

#[test]
fn emotion_totals_build_the_full_session_corpus() {
    let text = r#"
output_dir = "out"

[data.synth]
emotion_totals = [1708, 1636, 1084, 1103]
payload = { kind = "embeddings", layers = 1, frames = 1, dims = 1 }
separation = 1.0
speakers_per_gender = 5
sessions = 5
"#;
    let dir = workspace(text);
    ok(dir.path(), &["--config", "run.toml", "synth"]);
    let manifest = fs::read_to_string(dir.path().join("out/data/manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 5531);
}

#[test]
fn waveform_corpus_runs_through_the_encoder() {
    let text = r#"
seed = 2
output_dir = "out"

[data.synth]
counts = [[4, 4], [4, 4], [4, 4], [4, 4]]
payload = { kind = "waveforms", samples = 1600 }
separation = 5.0
speakers_per_gender = 4

[model]
encoder = { layers = 2, dim = 8 }
fc_hidden = 8

[folds]
k = 2

[train]
max_epochs = 2

[attack]
kind = "fgsm"
surface = "waveform"
snr_db = 30.0
"#;
    let dir = workspace(text);
    pipeline(dir.path(), "run.toml");
    let summary = json(dir.path().join("out/attack/summary.json"));
    assert_eq!(summary["surface"], "waveform");
    assert_eq!(summary["items"], 32);
    let details = json(dir.path().join("out/eval/details.json"));
    assert!(details.is_object());
}
