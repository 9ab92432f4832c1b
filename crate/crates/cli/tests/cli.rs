use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

/// Runs the binary with a whitespace-separated argument string.
fn run_env(args: &str, cache: Option<&Path>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_manifold-probe"));
    c.env_remove("MANIFOLD_PROBE_CACHE");
    if let Some(dir) = cache {
        c.env("MANIFOLD_PROBE_CACHE", dir);
    }
    c.args(args.split_whitespace()).output().expect("binary runs")
}

fn run(args: &str) -> Output {
    run_env(args, None)
}

fn ok(args: &str) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn error_line(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(text.trim_end().lines().count(), 1, "{text}");
    serde_json::from_str(text.trim_end()).unwrap()
}

/// 24 layers, 10 classes of 40 items in 8 dimensions.
fn synth(dir: &Path, seed: u64) -> PathBuf {
    let d = dir.display();
    ok(&format!(
        "synth --seed {seed} --name toy --classes 10 --per-class 40 --dim 8 --out {d}"
    ));
    dir.join("manifest.toml")
}

#[test]
fn characterize_gives_one_row_per_layer_and_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let m = synth(&tmp.path().join("data"), 1).display().to_string();
    let out = tmp.path().join("char");
    ok(&format!(
        "characterize --manifest {m} --support 10 --queries 100 --k 5 --layers 1..24 --seed 3 --out {}",
        out.display()
    ));
    let table = json(out.join("toy_characterization.json"));
    assert_eq!(table["layers"].as_array().unwrap().len(), 24);
    assert!(table["fit"]["r_squared"].as_f64().unwrap() > 0.8);
    let curve = fs::read_to_string(out.join("toy_layer_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 25);
    let run_json = json(out.join("run.json"));
    assert_eq!(run_json["status"], "ok");
    assert_eq!(run_json["seed"], 3);

    let again = tmp.path().join("replayed");
    ok(&format!(
        "replay {} --out {}",
        out.join("run.json").display(),
        again.display()
    ));
    assert_eq!(
        fs::read(out.join("toy_characterization.json")).unwrap(),
        fs::read(again.join("toy_characterization.json")).unwrap()
    );
}

fn strip_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("wall_time_secs");
    v
}

#[test]
fn fewshot_writes_every_episode_and_ignores_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let m = synth(&tmp.path().join("data"), 2).display().to_string();
    let mut summaries = Vec::new();
    for threads in [1, 3] {
        let out = tmp.path().join(format!("t{threads}"));
        ok(&format!(
            "fewshot --manifest {m} --layer 20 --way 5 --shot 5 --episodes 600 --reduce pca --dims 6 \
             --metric mahalanobis --k 5 --seed 7 --threads {threads} --out {}",
            out.display()
        ));
        let s = json(out.join("toy_20_pca6_5w5s.json"));
        assert_eq!(s["per_episode"].as_array().unwrap().len(), 600);
        let csv = fs::read_to_string(out.join("toy_20_pca6_5w5s.csv")).unwrap();
        assert_eq!(csv.lines().count(), 601);
        summaries.push(strip_timing(s));
    }
    assert_eq!(summaries[0], summaries[1]);
}

#[test]
fn missing_manifest_is_a_usage_error_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let missing = tmp.path().join("nope.toml");
    let r = run(&format!(
        "fewshot --manifest {} --seed 1 --out {}",
        missing.display(),
        out.display()
    ));
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(error_line(&r)["error"], "usage");
    assert!(!out.exists());
}

#[test]
fn flag_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let m = synth(&tmp.path().join("data"), 4).display().to_string();
    let out = tmp.path().join("out");
    let cases = [
        format!("fewshot --manifest {m} --layer 3"),
        format!("fewshot --manifest {m} --layer 3 --seed 1 --reduce pca"),
        format!("fewshot --manifest {m} --layer 3 --seed 1 --dims 4"),
        format!("fewshot --manifest {m} --seed 1"),
        format!("fewshot --manifest {m} --layer 99 --seed 1"),
        format!("fewshot --manifest {m} --layer 3 --seed 1 --k 0"),
        format!("fewshot --manifest {m} --layer 3 --seed 1 --threads 0"),
        format!("characterize --manifest {m} --seed 1 --layers 9..3"),
        format!("characterize --manifest {m} --seed 1 --layers 30"),
        "fewshot --bogus".to_string(),
    ];
    for args in cases {
        let args = format!("{args} --out {}", out.display());
        let r = run(&args);
        assert_eq!(r.status.code(), Some(2), "{args}");
        assert_eq!(error_line(&r)["exit_code"], 2);
        assert!(!out.exists(), "{args} wrote output");
    }
}

#[test]
fn corrupt_layer_is_a_data_error_with_a_run_record() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let m = synth(&data, 5).display().to_string();
    let layer = data.join("layer_03.feb");
    let mut bytes = fs::read(&layer).unwrap();
    bytes.truncate(bytes.len() - 3);
    fs::write(&layer, bytes).unwrap();

    let out = tmp.path().join("out");
    let r = run(&format!(
        "fewshot --manifest {m} --layer 3 --seed 1 --out {}",
        out.display()
    ));
    assert_eq!(r.status.code(), Some(3));
    assert_eq!(error_line(&r)["error"], "data");
    assert_eq!(json(out.join("run.json"))["status"], "error");

    let ing = tmp.path().join("ingest");
    let r = run(&format!("ingest --manifest {m} --out {}", ing.display()));
    assert_eq!(r.status.code(), Some(3));
    let report = json(ing.join("ingest_report.json"));
    assert!(!report["layers"][2]["issues"].as_array().unwrap().is_empty());
}

#[test]
fn ingest_pools_into_a_loadable_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let m = synth(&tmp.path().join("data"), 6).display().to_string();
    let out = tmp.path().join("ingest");
    ok(&format!("ingest --manifest {m} --out {} --pool", out.display()));
    let pooled = out.join("pooled").join("manifest.toml");
    let again = tmp.path().join("again");
    ok(&format!(
        "ingest --manifest {} --out {}",
        pooled.display(),
        again.display()
    ));
    let layers = json(again.join("ingest_report.json"))["layers"]
        .as_array()
        .unwrap()
        .len();
    assert_eq!(layers, 24);
}

#[test]
fn sweep_report_and_logistic_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let m = synth(&tmp.path().join("data"), 8).display().to_string();
    let sweep = tmp.path().join("sweep");
    let cache = tmp.path().join("cache");
    let sweep_args = format!(
        "dim-sweep --manifest {m} --layers 12,24 --dims 8,2 --episodes 50 --seed 9 --out {}",
        sweep.display()
    );
    let r = run_env(&sweep_args, Some(&cache));
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = fs::read_to_string(sweep.join("toy_dim_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 4);

    // the same sweep twice: identical cells merge
    let rep = tmp.path().join("report");
    ok(&format!("report {0} {0} --out {1}", sweep.display(), rep.display()));
    let table = fs::read_to_string(rep.join("comparison.csv")).unwrap();
    assert!(table.starts_with("method,toy 5w5s\n"));
    assert_eq!(table.lines().count(), 1 + 6);
    assert!(table.lines().skip(1).all(|l| l.contains(" ± ")));

    let pts = tmp.path().join("points.csv");
    let mut text = String::from("layer,accuracy\n");
    for x in 1..=12 {
        let y = 0.9 / (1.0 + (-0.8 * (x as f64 - 6.0)).exp());
        text.push_str(&format!("{x},{y}\n"));
    }
    fs::write(&pts, text).unwrap();
    let fit_dir = tmp.path().join("fit");
    let fit_args = format!("fit-logistic --input {} --out {}", pts.display(), fit_dir.display());
    ok(&fit_args);
    let fit = json(fit_dir.join("logistic_fit.json"));
    assert!((fit["fit"]["L"].as_f64().unwrap() - 0.9).abs() < 1e-6);
    assert!((fit["fit"]["x0"].as_f64().unwrap() - 6.0).abs() < 1e-6);
    assert!((fit["asymptote_percent"].as_f64().unwrap() - 90.0).abs() < 1e-4);

    fs::write(&pts, "layer,accuracy\n1,0.5\n2,0.6\n").unwrap();
    assert_eq!(run(&fit_args).status.code(), Some(3));
}
