//! End-to-end runs of the `kfrev` binary.

use std::path::Path;
use std::process::{Command, Output};

fn kfrev(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kfrev"))
        .args(args)
        .output()
        .expect("spawn kfrev")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, market: &str, generator: &str, seed: &str) {
    ok(kfrev(&[
        "synth",
        "--generator",
        generator,
        "--instruments",
        "8",
        "--days",
        "260",
        "--seed",
        seed,
        "--market",
        market,
        "--output-dir",
        dir.to_str().unwrap(),
    ]));
}

fn backtest(data: &Path, out: &Path, market: &str, extra: &[&str]) -> String {
    let universe = data.join("universe.toml");
    let mut args = vec![
        "backtest",
        "--market",
        market,
        "--universe",
        universe.to_str().unwrap(),
        "--data-dir",
        data.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
        "--max-lag",
        "3",
    ];
    args.extend_from_slice(extra);
    ok(kfrev(&args))
}

#[test]
fn synth_then_backtest_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    synth(&data, "SYN", "ou", "3");
    assert!(data.join("universe.toml").is_file());
    assert!(data.join("SYN0007.csv").is_file());

    let stdout = backtest(&data, &out, "SYN", &["--debug-dumps"]);
    assert!(stdout.contains("SYN exec2"), "{stdout}");

    for scheme in ["exec1", "exec2", "exec3"] {
        for stem in ["daily_pnl", "cumulative"] {
            let path = out.join(format!("{stem}_{scheme}.csv"));
            let mut rdr = csv::Reader::from_path(&path).unwrap();
            assert!(rdr.records().count() > 100, "{}", path.display());
        }
    }
    let lags = std::fs::read_to_string(out.join("lag_profile.csv")).unwrap();
    assert!(lags.starts_with("lag,mean_rog_bps,t_stat"));
    assert_eq!(lags.lines().count(), 4);

    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["SYN"]["exec2"]["mean_rog_bps"].as_f64().unwrap() > 0.0);

    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("run_metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["instruments"].as_array().unwrap().len(), 8);
    assert!(out.join("panel.csv").is_file());
    assert!(out.join("books.csv").is_file());
    assert!(out.join("filter_steps").join("SYN0000.csv").is_file());
}

#[test]
fn rerun_from_metadata_reproduces_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let first = tmp.path().join("first");
    synth(&data, "SYN", "ou", "4");
    backtest(&data, &first, "SYN", &["--q", "0.5"]);

    let second = tmp.path().join("second");
    ok(kfrev(&[
        "backtest",
        "--config",
        first.join("run_metadata.json").to_str().unwrap(),
        "--output-dir",
        second.to_str().unwrap(),
    ]));
    assert_eq!(
        std::fs::read(first.join("summary.json")).unwrap(),
        std::fs::read(second.join("summary.json")).unwrap()
    );
}

#[test]
fn invalid_noise_is_rejected_before_loading_data() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere");
    let out = kfrev(&[
        "backtest",
        "--market",
        "SYN",
        "--universe",
        missing.join("universe.toml").to_str().unwrap(),
        "--data-dir",
        missing.to_str().unwrap(),
        "--output-dir",
        tmp.path().join("out").to_str().unwrap(),
        "--q=-1",
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains('q'), "{stderr}");
    assert!(!stderr.contains("nowhere"), "{stderr}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn lag_profile_and_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let (us, kr) = (tmp.path().join("us"), tmp.path().join("kr"));
    synth(&us, "US", "random-walk", "5");
    synth(&kr, "KR", "ou", "6");

    let lag_out = tmp.path().join("lags");
    let stdout = ok(kfrev(&[
        "lag-profile",
        "--market",
        "KR",
        "--universe",
        kr.join("universe.toml").to_str().unwrap(),
        "--data-dir",
        kr.to_str().unwrap(),
        "--output-dir",
        lag_out.to_str().unwrap(),
        "--max-lag",
        "4",
    ]));
    assert!(stdout.contains("T4:"), "{stdout}");
    assert!(lag_out.join("lag_profile.csv").is_file());

    let (us_out, kr_out) = (tmp.path().join("us_out"), tmp.path().join("kr_out"));
    backtest(&us, &us_out, "US", &[]);
    backtest(&kr, &kr_out, "KR", &[]);
    let table = tmp.path().join("compare.csv");
    ok(kfrev(&[
        "compare",
        us_out.join("summary.json").to_str().unwrap(),
        kr_out.join("summary.json").to_str().unwrap(),
        "--output",
        table.to_str().unwrap(),
    ]));
    let mut rdr = csv::Reader::from_path(&table).unwrap();
    let text = rdr
        .records()
        .map(|r| r.unwrap().iter().collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n");
    assert!(text.contains("US") && text.contains("KR"), "{text}");
}

#[test]
fn compare_rejects_duplicate_markets() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    let out = tmp.path().join("o");
    synth(&data, "SYN", "ou", "7");
    backtest(&data, &out, "SYN", &[]);
    let s = out.join("summary.json");
    let res = kfrev(&["compare", s.to_str().unwrap(), s.to_str().unwrap()]);
    assert!(!res.status.success());
}
