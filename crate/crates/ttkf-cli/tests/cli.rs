//! End-to-end checks of the four subcommands through the compiled binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ttkf"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ttkf-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn gen_is_deterministic() {
    let dir = workdir("gen");
    let a = dir.join("a.csv");
    let b = dir.join("b.csv");
    for out in [&a, &b] {
        let st = run(&[
            "gen",
            "--experiment",
            "siso4",
            "--seed",
            "7",
            "--samples",
            "50",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(st.status.success());
    }
    assert_eq!(read(&a), read(&b));
    assert_eq!(read(&a.with_extension("csv.meta.json")), read(&b.with_extension("csv.meta.json")));
    assert_eq!(read(&a).lines().count(), 51);
}

#[test]
fn gen_mixer_row_count_and_reference() {
    let dir = workdir("mixer");
    let out = dir.join("mix.csv");
    let reference = dir.join("ref.csv");
    let st = run(&[
        "gen",
        "--experiment",
        "mixer",
        "--seed",
        "7",
        "--snr",
        "12",
        "--out",
        out.to_str().unwrap(),
        "--reference-out",
        reference.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    assert_eq!(read(&out).lines().count(), 6001);
    assert_eq!(read(&reference).lines().count(), 6001);
}

#[test]
fn gen_rejects_unknown_experiment() {
    let st = run(&["gen", "--experiment", "nope", "--out", "/tmp/x.csv"]);
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn identify_writes_metrics_and_model() {
    let dir = workdir("identify");
    let data = dir.join("data.csv");
    let truth = dir.join("truth.tt");
    assert!(run(&[
        "gen",
        "--experiment",
        "siso4",
        "--seed",
        "3",
        "--samples",
        "80",
        "--out",
        data.to_str().unwrap(),
        "--truth-out",
        truth.to_str().unwrap(),
    ])
    .status
    .success());
    let metrics = dir.join("metrics.csv");
    let model = dir.join("model.tt");
    let out = run(&[
        "identify",
        "--input",
        data.to_str().unwrap(),
        "--memory",
        "4",
        "--degree",
        "4",
        "--sigma2",
        "1000",
        "--measurement-variance",
        "0.01",
        "--tolerance",
        "0.1",
        "--truth",
        truth.to_str().unwrap(),
        "--metrics-out",
        metrics.to_str().unwrap(),
        "--model-out",
        model.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["steps"], 80);
    assert!(summary["final_rel_err"].as_f64().unwrap() < 1.0);

    let text = read(&metrics);
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "t,rel_err,innovation,s,rank_mean_1,rank_mean_2,rank_mean_3,rank_cov_1,rank_cov_2,rank_cov_3,step_seconds"
    );
    assert_eq!(text.lines().count(), 81);
    assert!(model.exists());
    let loaded = ttkf::io::load_tensor_train(&model).unwrap();
    assert_eq!(loaded.mode_dims(), vec![5, 5, 5, 5]);
}

#[test]
fn identify_metrics_deterministic_modulo_timing() {
    let dir = workdir("determinism");
    let data = dir.join("data.csv");
    assert!(run(&[
        "gen", "--experiment", "siso4", "--seed", "9", "--samples", "60", "--out",
        data.to_str().unwrap(),
    ])
    .status
    .success());
    let mut outputs = Vec::new();
    for name in ["m1.csv", "m2.csv"] {
        let metrics = dir.join(name);
        assert!(run(&[
            "identify",
            "--input",
            data.to_str().unwrap(),
            "--memory",
            "4",
            "--degree",
            "4",
            "--sigma2",
            "1000",
            "--measurement-variance",
            "0.01",
            "--tolerance",
            "0.5",
            "--metrics-out",
            metrics.to_str().unwrap(),
        ])
        .status
        .success());
        // drop the wall-clock column (the only nondeterministic one)
        let stripped: Vec<String> = read(&metrics)
            .lines()
            .map(|line| {
                let (rest, _seconds) = line.rsplit_once(',').unwrap();
                rest.to_string()
            })
            .collect();
        outputs.push(stripped.join("\n"));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn identify_missing_input_is_usage_error() {
    let out = run(&[
        "identify",
        "--input",
        "/nonexistent/data.csv",
        "--memory",
        "4",
        "--degree",
        "4",
        "--sigma2",
        "1000",
        "--measurement-variance",
        "0.01",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn identify_reads_config_file() {
    let dir = workdir("config");
    let data = dir.join("data.csv");
    assert!(run(&[
        "gen", "--experiment", "siso4", "--seed", "5", "--samples", "40", "--out",
        data.to_str().unwrap(),
    ])
    .status
    .success());
    let cfg = dir.join("run.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "input": data,
            "memory": 4,
            "degree": 4,
            "sigma2": [1000.0],
            "measurement_variance": [0.01],
            "tolerance": 0.9,
        })
        .to_string(),
    )
    .unwrap();
    // flag overrides the file's tolerance
    let out = run(&["identify", "--config", cfg.to_str().unwrap(), "--tolerance", "0.1", "--steps", "20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["steps"], 20);
}

#[test]
fn compare_small_exact_passes_and_lossy_fails() {
    // p=1, M=1, d=2 -> 4 states
    let ok = run(&[
        "compare", "--memory", "1", "--degree", "2", "--steps", "25", "--tolerance", "0",
        "--bound", "1e-8", "--seed", "4",
    ]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(summary["pass"], true);

    let lossy = run(&[
        "compare", "--memory", "1", "--degree", "2", "--steps", "25", "--tolerance", "0.5",
        "--bound", "1e-8", "--seed", "4",
    ]);
    assert_eq!(lossy.status.code(), Some(1));
}

#[test]
fn compare_refuses_oversized_state() {
    let out = run(&["compare", "--memory", "10", "--degree", "7", "--inputs", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("refuses"));
}

#[test]
fn bench_writes_table() {
    let dir = workdir("bench");
    let out_csv = dir.join("bench.csv");
    let out = run(&[
        "bench", "--d-min", "2", "--d-max", "3", "--mode-size", "4", "--iterations", "5",
        "--out", out_csv.to_str().unwrap(), "--dense",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(&out_csv);
    assert_eq!(text.lines().next().unwrap(), "d,median_seconds,dense_median_seconds");
    assert_eq!(text.lines().count(), 3);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["linear_fit_r2"].is_number());
}

#[test]
fn bench_dense_refuses_large_degree() {
    let out = run(&["bench", "--d-min", "2", "--d-max", "12", "--mode-size", "5", "--iterations", "2", "--dense"]);
    assert_eq!(out.status.code(), Some(2));
}
