use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use storyline_core::models::save;
use storyline_core::{LinearModel, ModelKind};

fn storyline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_storyline"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = storyline(args);
    assert!(
        out.status.success(),
        "storyline {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_of(args: &[&str]) -> (i32, Value) {
    let out = storyline(args);
    let stderr = String::from_utf8(out.stderr).unwrap();
    let last = stderr.lines().last().unwrap_or_default();
    (out.status.code().unwrap(), serde_json::from_str(last).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Data {
    dir: PathBuf,
}

impl Data {
    fn synth(dir: &Path, extra: &[&str]) -> Self {
        let mut args = vec!["synth", "--out", s(dir)];
        args.extend_from_slice(extra);
        if !extra.contains(&"--stories") {
            args.extend(["--stories", "6", "--docs-per-story", "15"]);
        }
        ok(&args);
        Data { dir: dir.to_path_buf() }
    }

    fn path(&self, name: &str) -> String {
        self.dir.join(name).to_str().unwrap().to_owned()
    }

    fn train(&self, models: &Path) {
        ok(&[
            "train",
            "--corpus",
            &self.path("train.jsonl"),
            "--cache",
            &self.path("train.emb"),
            "--connections",
            &self.path("train.connections.tsv"),
            "--out",
            s(models),
        ]);
    }

    fn cluster(&self, models: &Path, out: &Path, extra: &[&str]) -> Value {
        let (corpus, cache) = (self.path("test.jsonl"), self.path("test.emb"));
        let mut args = vec![
            "--json", "cluster", "--corpus", &corpus, "--cache", &cache, "--models", s(models), "--out", s(out),
        ];
        args.extend_from_slice(extra);
        serde_json::from_str(&ok(&args)).unwrap()
    }

    fn evaluate(&self, predictions: &Path) -> Value {
        let report = ok(&[
            "--json",
            "evaluate",
            "--assignments",
            s(predictions),
            "--gold",
            &self.path("test.jsonl"),
            "--connections",
            &self.path("test.connections.tsv"),
        ]);
        serde_json::from_str(&report).unwrap()
    }
}

fn f(r: &Value, key: &str) -> f64 {
    r[key].as_f64().unwrap()
}

#[test]
fn synth_train_cluster_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = Data::synth(&tmp.path().join("data"), &[]);
    let models = tmp.path().join("models");
    data.train(&models);
    for name in ["rank.model", "accept.model", "merge.model", "config.json", "report.json", "manifest.json"] {
        assert!(models.join(name).is_file(), "{name}");
    }
    let out = tmp.path().join("run/assignments.jsonl");
    let summary = data.cluster(&models, &out, &[]);
    assert_eq!(summary["documents"].as_u64(), Some(90));
    assert!(tmp.path().join("run/assignments.pool.jsonl").is_file());
    assert!(tmp.path().join("run/assignments.manifest.json").is_file());
    let r = data.evaluate(&out);
    assert!(f(&r, "bcubed_f1") >= 0.9, "{r}");
    assert!(f(&r, "std_f1") >= 0.9, "{r}");
    assert_eq!(r["n_docs"].as_u64(), Some(90));

    // The pool export is an accepted prediction format too.
    let pooled = data.evaluate(&tmp.path().join("run/assignments.pool.jsonl"));
    assert_eq!(pooled["bcubed_f1"], r["bcubed_f1"]);
}

#[test]
fn gold_labels_score_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let data = Data::synth(tmp.path(), &["--split-stories", "2"]);
    let r = data.evaluate(Path::new(&data.path("test.jsonl")));
    for key in ["std_p", "std_r", "std_f1", "bcubed_p", "bcubed_r", "bcubed_f1"] {
        assert_eq!(f(&r, key), 1.0, "{key}");
    }
}

fn unit(k: usize, n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n];
    w[k] = 1.0;
    w
}

#[test]
fn merging_reduces_fragmentation_with_fixed_models() {
    let tmp = tempfile::tempdir().unwrap();
    let data = Data::synth(&tmp.path().join("data"), &["--sep", "0.9", "--split-stories", "3"]);
    let models = tmp.path().join("models");
    data.train(&models);

    // Replace the trained weights with fixed cosine-plus-recency models.
    let mut rank = unit(0, 8);
    rank[5] = 1.0;
    let merge = unit(0, 11);
    save(&LinearModel::new(ModelKind::Rank, rank.clone(), 0.0).unwrap(), &models.join("rank.model")).unwrap();
    save(&LinearModel::new(ModelKind::Accept, rank, -1.5).unwrap(), &models.join("accept.model")).unwrap();
    save(&LinearModel::new(ModelKind::Merge, merge, -0.8).unwrap(), &models.join("merge.model")).unwrap();

    let full_out = tmp.path().join("full.jsonl");
    let bare_out = tmp.path().join("bare.jsonl");
    let full = data.cluster(&models, &full_out, &[]);
    let bare = data.cluster(&models, &bare_out, &["--no-merge"]);
    assert_eq!(bare["merges"].as_u64(), Some(0));
    assert!(full["merges"].as_u64().unwrap() > 0, "{full}");
    assert!(full["clusters"].as_u64() < bare["clusters"].as_u64(), "{full} {bare}");
    let (rf, rb) = (data.evaluate(&full_out), data.evaluate(&bare_out));
    assert!(f(&rf, "std_r") >= f(&rb, "std_r"), "{rf} {rb}");
}

#[test]
fn inspect_lists_and_selects_clusters() {
    let tmp = tempfile::tempdir().unwrap();
    let data = Data::synth(&tmp.path().join("data"), &[]);
    let models = tmp.path().join("models");
    data.train(&models);
    let out = tmp.path().join("a.jsonl");
    data.cluster(&models, &out, &[]);
    let pool = tmp.path().join("a.pool.jsonl");
    let all: Vec<Value> = serde_json::from_str(&ok(&["--json", "inspect", "--pool", s(&pool)])).unwrap();
    assert!(!all.is_empty());
    let total: u64 = all.iter().map(|c| c["size"].as_u64().unwrap()).sum();
    assert_eq!(total, 90);
    let id = all[0]["id"].as_u64().unwrap().to_string();
    let one = ok(&["inspect", "--pool", s(&pool), "--cluster", &id]);
    assert!(one.starts_with(&format!("cluster {id}")), "{one}");

    let (code, err) = error_of(&["inspect", "--pool", s(&pool), "--cluster", "99999"]);
    assert_eq!(code, 2);
    assert_eq!(err["kind"], "validation");
}

#[test]
fn feature_set_must_match_the_models() {
    let tmp = tempfile::tempdir().unwrap();
    let data = Data::synth(&tmp.path().join("data"), &[]);
    let models = tmp.path().join("models");
    data.train(&models);
    let (corpus, cache) = (data.path("test.jsonl"), data.path("test.emb"));
    let out = tmp.path().join("x.jsonl");
    let (code, err) = error_of(&[
        "cluster", "--corpus", &corpus, "--cache", &cache, "--models", s(&models), "--out", s(&out), "--features", "4",
    ]);
    assert_eq!(code, 2, "{err}");
    assert_eq!(err["code"], 2);
}

#[test]
fn validation_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.jsonl");
    let (code, err) = error_of(&["evaluate", "--assignments", s(&missing), "--gold", s(&missing)]);
    assert_eq!(code, 2);
    assert!(err["error"].as_str().unwrap().contains("not found"), "{err}");

    let (code, _) = error_of(&["synth", "--out", s(tmp.path()), "--sep", "1.5"]);
    assert_eq!(code, 2);
}

#[test]
fn missing_embeddings_without_a_service() {
    let tmp = tempfile::tempdir().unwrap();
    let data = Data::synth(tmp.path(), &["--stories", "2", "--docs-per-story", "3"]);
    let cache = tmp.path().join("fresh.emb");
    let (code, err) = error_of(&["embed", "--corpus", &data.path("test.jsonl"), "--cache", s(&cache)]);
    assert_eq!(code, 2, "{err}");
    assert!(err["error"].as_str().unwrap().contains("more"), "{err}");
}

#[test]
fn unreachable_service_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = Data::synth(tmp.path(), &["--stories", "2", "--docs-per-story", "3"]);
    let cache = tmp.path().join("fresh.emb");
    let (code, err) = error_of(&[
        "embed",
        "--corpus",
        &data.path("test.jsonl"),
        "--cache",
        s(&cache),
        "--service",
        "http://127.0.0.1:9",
        "--backoff-ms",
        "1",
    ]);
    assert_eq!(code, 3, "{err}");
    assert_eq!(err["kind"], "runtime");
}
