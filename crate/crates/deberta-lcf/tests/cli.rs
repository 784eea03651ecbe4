//! Drive the installed binary end to end: every verb, the exit-code
//! contract, and byte-level reproducibility of training outputs.

use deberta_lcf::data::{synthetic, write_semeval};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_deberta-lcf");

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn work_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("deberta-lcf-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn kv_value(text: &str, key: &str) -> Option<String> {
    text.lines().find_map(|l| {
        let mut parts = l.split_whitespace();
        (parts.next() == Some(key)).then(|| parts.next().unwrap_or_default().to_string())
    })
}

#[test]
fn stats_reports_fixture_counts_exactly() {
    let cases = [
        ("laptop_mini.xml", "semeval", ("6", "4", "3", "13")),
        ("restaurant_mini.xml", "semeval", ("8", "3", "2", "13")),
        ("twitter_mini.txt", "twitter", ("4", "3", "5", "12")),
    ];
    for (file, format, (pos, neg, neu, total)) in cases {
        let path = fixtures().join(file);
        let out = run(&["stats", "--dataset", path.to_str().unwrap(), "--format", format]);
        assert!(out.status.success(), "{file}: {out:?}");
        let text = stdout_of(&out);
        assert_eq!(kv_value(&text, "positive").as_deref(), Some(pos), "{file}");
        assert_eq!(kv_value(&text, "negative").as_deref(), Some(neg), "{file}");
        assert_eq!(kv_value(&text, "neutral").as_deref(), Some(neu), "{file}");
        assert_eq!(kv_value(&text, "total").as_deref(), Some(total), "{file}");
    }
}

#[test]
fn stats_missing_file_exits_2() {
    let out = run(&["stats", "--dataset", "/no/such/file.xml", "--format", "semeval"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn stats_malformed_file_fails_with_message() {
    let dir = work_dir("malformed");
    let path = dir.join("broken.xml");
    std::fs::write(&path, "<sentences><sentence id=\"1\"><text>x</wrong>").unwrap();
    let out = run(&["stats", "--dataset", path.to_str().unwrap(), "--format", "semeval"]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line"), "{err}");
}

fn write_corpus(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let (train, _) = synthetic::restaurant_corpus(n, 0, seed);
    let path = dir.join("train.xml");
    std::fs::write(&path, write_semeval(&train)).unwrap();
    path
}

fn write_config(dir: &Path, train_path: &Path, out_dir: &Path, extra: &str) -> PathBuf {
    let cfg = format!(
        "train_path = {}\ntrain_format = semeval\nout_dir = {}\n\
         layers = 1\nheads = 2\nd_model = 16\nd_ff = 32\nseed = 11\ndropout = 0.1\n{extra}",
        train_path.display(),
        out_dir.display()
    );
    let path = dir.join("run.cfg");
    std::fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn train_emits_three_files_and_reruns_byte_identically() {
    let dir = work_dir("train-determinism");
    let train_path = write_corpus(&dir, 24, 5);
    let out_dir = dir.join("out");
    let config = write_config(&dir, &train_path, &out_dir, "epochs = 4\nbatch_size = 8\n");

    let out = run(&["train", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    for file in ["model.ckpt", "history.csv", "config.resolved"] {
        assert!(out_dir.join(file).exists(), "missing {file}");
    }
    let first_history = std::fs::read(out_dir.join("history.csv")).unwrap();
    let first_ckpt = std::fs::read(out_dir.join("model.ckpt")).unwrap();

    let out = run(&["train", "--config", config.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(first_history, std::fs::read(out_dir.join("history.csv")).unwrap());
    assert_eq!(first_ckpt, std::fs::read(out_dir.join("model.ckpt")).unwrap());
}

#[test]
fn resolved_config_reproduces_the_run_bitwise() {
    let dir = work_dir("train-resolved");
    let train_path = write_corpus(&dir, 20, 6);
    let out_dir = dir.join("out");
    let config = write_config(&dir, &train_path, &out_dir, "epochs = 3\nbatch_size = 8\n");

    assert!(run(&["train", "--config", config.to_str().unwrap()]).status.success());
    let history = std::fs::read(out_dir.join("history.csv")).unwrap();
    let resolved = out_dir.join("config.resolved");
    let resolved_copy = dir.join("resolved.cfg");
    std::fs::copy(&resolved, &resolved_copy).unwrap();

    assert!(run(&["train", "--config", resolved_copy.to_str().unwrap()]).status.success());
    assert_eq!(history, std::fs::read(out_dir.join("history.csv")).unwrap());
    assert_eq!(
        std::fs::read(&resolved_copy).unwrap(),
        std::fs::read(&resolved).unwrap(),
        "resolved config is not a fixed point"
    );
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = work_dir("train-badkey");
    let train_path = write_corpus(&dir, 8, 7);
    let cfg_path = dir.join("bad.cfg");
    std::fs::write(&cfg_path, format!("train_path = {}\nwhatever = 1\n", train_path.display()))
        .unwrap();
    let out = run(&["train", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("whatever"));
}

/// Train an overfit model once and reuse it across the eval/predict/dump
/// assertions below.
fn overfit_checkpoint() -> (PathBuf, PathBuf) {
    let dir = work_dir("overfit-artifacts");
    let train_path = write_corpus(&dir, 32, 9);
    let out_dir = dir.join("out");
    let config = write_config(
        &dir,
        &train_path,
        &out_dir,
        "epochs = 220\nbatch_size = 8\nlr = 0.002\ndropout = 0\n",
    );
    let out = run(&["train", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    (out_dir.join("model.ckpt"), train_path)
}

#[test]
fn eval_predict_and_dump_attention_against_an_overfit_checkpoint() {
    let (ckpt, train_path) = overfit_checkpoint();
    let ckpt_s = ckpt.to_str().unwrap();

    // eval on the training data the checkpoint overfit
    let out = run(&["eval", "--ckpt", ckpt_s, "--dataset", train_path.to_str().unwrap(), "--format", "semeval"]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout_of(&out);
    let accuracy: f64 = kv_value(&text, "accuracy").unwrap().parse().unwrap();
    assert!(accuracy >= 0.95, "overfit accuracy {accuracy}");
    let macro_f1: f64 = kv_value(&text, "macro_f1").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&macro_f1));
    for key in ["precision_positive", "recall_negative", "f1_neutral"] {
        assert!(kv_value(&text, key).is_some(), "missing {key} in:\n{text}");
    }

    // predict: probabilities sum to one, label is one of the three
    let out = run(&["predict", "--ckpt", ckpt_s, "--text", "the pasta was delicious but the service was awful", "--aspect", "pasta"]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout_of(&out);
    let label = kv_value(&text, "polarity").unwrap();
    assert!(["positive", "negative", "neutral"].contains(&label.as_str()));
    let psum: f64 = ["p_negative", "p_neutral", "p_positive"]
        .iter()
        .map(|k| kv_value(&text, k).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((psum - 1.0).abs() < 1e-6, "probabilities sum to {psum}");

    // aspect absent from the text: exit 4
    let out = run(&["predict", "--ckpt", ckpt_s, "--text", "the pasta was fine", "--aspect", "battery"]);
    assert_eq!(out.status.code(), Some(4));

    // aspect occurring twice: first occurrence used and documented
    let out = run(&["predict", "--ckpt", ckpt_s, "--text", "pizza and more pizza", "--aspect", "pizza"]);
    assert!(out.status.success());
    let text = stdout_of(&out);
    assert!(text.contains("note:") && text.contains("first occurrence"), "{text}");

    // dump-attention: every weight row sums to one, the distance column
    // is the srd definition, and the mask is zero exactly above alpha
    let dump_dir = work_dir("dump");
    let out = run(&["dump-attention", "--ckpt", ckpt_s, "--text", "we thought the wine was really superb", "--aspect", "wine", "--out", dump_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    let mut matrix_files = 0;
    for entry in std::fs::read_dir(&dump_dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        if name.starts_with("global_") || name.starts_with("local_") || name.starts_with("fusion_") {
            matrix_files += 1;
            let content = std::fs::read_to_string(&path).unwrap();
            for line in content.lines() {
                let sum: f64 = line.split(',').map(|v| v.parse::<f64>().unwrap()).sum();
                assert!((sum - 1.0).abs() < 1e-9, "{name}: row sums to {sum}");
            }
        }
    }
    // 1 layer x 2 heads x 2 branches + 2 fusion heads
    assert_eq!(matrix_files, 6);

    let srd_text = std::fs::read_to_string(dump_dir.join("srd.csv")).unwrap();
    // sentence: "we thought the wine was really superb" -> aspect index 3
    let srd: Vec<usize> = srd_text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    // local sequence: [CLS] + 7 tokens + [SEP]; specials sit at alpha = 5
    assert_eq!(srd, vec![5, 3, 2, 1, 0, 1, 2, 3, 5]);

    let lcf_text = std::fs::read_to_string(dump_dir.join("lcf_weights.csv")).unwrap();
    let weights: Vec<f64> = lcf_text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    for (s, w) in srd.iter().zip(&weights) {
        let expected = if *s > 5 { 0.0 } else { 1.0 };
        assert_eq!(*w, expected);
    }
}

#[test]
fn eval_missing_checkpoint_exits_2() {
    let out = run(&["eval", "--ckpt", "/no/such.ckpt", "--dataset", "x", "--format", "semeval"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupt_checkpoint_exits_3() {
    let dir = work_dir("corrupt-ckpt");
    let path = dir.join("bad.ckpt");
    std::fs::write(&path, b"LCFD\x01\x00\x00\x00garbage").unwrap();
    let out = run(&["predict", "--ckpt", path.to_str().unwrap(), "--text", "x", "--aspect", "x"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_verb_and_missing_flags_exit_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["stats", "--dataset", "x"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}
