use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jointre::data::{parse_corpus_str, validate_bilou};
use jointre::RunConfig;
use tempfile::TempDir;

const SMALL: &[&str] = &[
    "--word-dim",
    "8",
    "--char-dim",
    "4",
    "--label-dim",
    "4",
    "--ffnn-dim",
    "8",
    "--lstm-hidden",
    "8",
    "--lstm-layers",
    "1",
];

fn jointre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jointre"))
        .args(args)
        .env_remove("JOINTRE_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn workspace() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("synthetic.txt");
    fs::write(&corpus, jointre::SYNTHETIC_CORPUS).unwrap();
    (dir, corpus)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train(corpus: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--train", s(corpus), "--dev", s(corpus), "--out", s(out), "--quiet"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    jointre(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_writes_checkpoint_report_and_config() {
    let (dir, corpus) = workspace();
    let out = dir.path().join("run");
    let o = train(&corpus, &out, &["--setup", "1", "--mode", "joint", "--epochs", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["model.ckpt", "report.txt", "config.txt"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    let best = report.lines().find(|l| l.starts_with("best ")).unwrap();
    let average: f64 = best.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(average > 0.0, "{best}");
}

#[test]
fn both_scorer_ablations_are_a_usage_error() {
    let (dir, corpus) = workspace();
    let out = dir.path().join("run");
    let o = train(&corpus, &out, &["--no-bilinear", "--no-linear"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no_bilinear"));
    assert!(!out.exists());
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_eq!(jointre(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(jointre(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(jointre(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_corpus_is_a_data_error() {
    let (dir, _) = workspace();
    let missing = dir.path().join("missing.txt");
    let o = train(&missing, &dir.path().join("run"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_has_its_own_exit_code() {
    let (dir, corpus) = workspace();
    let o = train(&corpus, &dir.path().join("run"), &["--epochs", "3", "--learning-rate", "1e300"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite loss"));
}

#[test]
fn identical_seeds_give_identical_checkpoints() {
    let (dir, corpus) = workspace();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = train(&corpus, out, &["--epochs", "4", "--seed", "9", "--mode", "pipeline"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["model.ckpt", "report.txt", "config.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn written_config_reloads_to_the_same_run() {
    let (dir, corpus) = workspace();
    let first = dir.path().join("first");
    let flags = [
        "--setup", "2", "--mode", "pipeline", "--no-char", "--no-crf", "--epochs", "3", "--learning-rate", "0.002",
        "--keep-prob", "0.8", "--seed", "5", "--rc-labels", "gold", "--rc-loss-reduction", "sum",
        "--word-dropout-hides-chars", "--boundary-dim", "3",
    ];
    let o = train(&corpus, &first, &flags);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(first.join("config.txt")).unwrap();
    let config = RunConfig::from_kv_str(&text).unwrap();
    assert_eq!(config.to_kv_string(), text);
    assert_eq!(config.dims.boundary, 3);
    assert_eq!(config.adam.learning_rate, 0.002);
    assert!(config.ablations.no_char && config.ablations.no_crf && config.word_dropout_hides_chars);

    let second = dir.path().join("second");
    let cfg = first.join("config.txt");
    let o = jointre(&["train", "--train", s(&corpus), "--dev", s(&corpus), "-o", s(&second), "--quiet", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(first.join("model.ckpt")).unwrap(), fs::read(second.join("model.ckpt")).unwrap());
}

#[test]
fn flags_override_the_config_file() {
    let (dir, corpus) = workspace();
    let cfg = dir.path().join("c.txt");
    fs::write(&cfg, "epochs = 2\nseed = 3\n").unwrap();
    let out = dir.path().join("run");
    let o = train(&corpus, &out, &["--config", s(&cfg), "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let config = RunConfig::from_kv_str(&fs::read_to_string(out.join("config.txt")).unwrap()).unwrap();
    assert_eq!((config.epochs, config.seed), (2, 4));
}

#[test]
fn eval_and_predict_round_trip() {
    let (dir, corpus) = workspace();
    let out = dir.path().join("run");
    assert!(train(&corpus, &out, &["--epochs", "5"]).status.success());
    let ckpt = out.join("model.ckpt");

    let o = jointre(&["eval", "--checkpoint", s(&ckpt), "--test", s(&corpus), "--kv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let kv = String::from_utf8(o.stdout).unwrap();
    assert!(kv.starts_with("entity.metric=ner\n"));
    assert!(kv.lines().any(|l| l.starts_with("average=")));

    let pred = dir.path().join("pred.txt");
    let o = jointre(&["predict", "--checkpoint", s(&ckpt), "--input", s(&corpus), "--output", s(&pred)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let parsed = parse_corpus_str(&fs::read_to_string(&pred).unwrap()).unwrap();
    assert_eq!(parsed.len(), 10);
    for (i, sentence) in parsed.iter().enumerate() {
        validate_bilou(&sentence.entity_tags).unwrap();
        sentence.validate(i).unwrap();
    }
}

#[test]
fn eval_rejects_empty_and_unannotated_corpora() {
    let (dir, corpus) = workspace();
    let out = dir.path().join("run");
    assert!(train(&corpus, &out, &["--epochs", "1", "--setup", "2"]).status.success());
    let ckpt = out.join("model.ckpt");
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let bare = dir.path().join("bare.txt");
    fs::write(&bare, "0\tAnn\n1\tsleeps\n").unwrap();
    for test in [&empty, &bare] {
        let o = jointre(&["eval", "--checkpoint", s(&ckpt), "--test", s(test)]);
        assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    }
    // the boundary input of setup 2 needs gold tags at prediction time too
    let o = jointre(&["predict", "--checkpoint", s(&ckpt), "--input", s(&bare)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn relative_paths_resolve_under_the_data_dir() {
    let (dir, _) = workspace();
    let out = dir.path().join("run");
    let mut args = vec!["train", "--train", "synthetic.txt", "--dev", "synthetic.txt", "-o", s(&out), "--quiet", "--epochs", "1"];
    args.extend_from_slice(SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_jointre"))
        .args(&args)
        .env("JOINTRE_DATA_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn seeds_reports_mean_and_deviation() {
    let (_dir, corpus) = workspace();
    let mut args = vec!["seeds", "--train", s(&corpus), "--dev", s(&corpus), "--test", s(&corpus), "--seeds", "2", "--epochs", "2"];
    args.extend_from_slice(SMALL);
    let o = jointre(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("seed 1:") && text.contains("seed 2:"));
    let rel = text.lines().find(|l| l.starts_with("relations ")).unwrap();
    assert!(rel.ends_with(')') && rel.contains(" ("), "{rel}");

    let o = jointre(&["seeds", "--train", s(&corpus), "--dev", s(&corpus), "--test", s(&corpus), "--seeds", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failing_seeds_are_flagged() {
    let (dir, corpus) = workspace();
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let mut args = vec!["seeds", "--train", s(&corpus), "--dev", s(&corpus), "--test", s(&empty), "--seeds", "2", "--epochs", "1"];
    args.extend_from_slice(SMALL);
    let o = jointre(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stdout).unwrap().contains("seed 1: FAILED"));
}
