use std::collections::HashMap;
use std::process::Command;

use mtdc::cli::{run, EXIT_DIVERGED, EXIT_INVALID, EXIT_IO, EXIT_OK};

fn mtdc(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("mtdc").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn key_values(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn number(kv: &HashMap<String, String>, key: &str) -> f64 {
    kv.get(key)
        .unwrap_or_else(|| panic!("missing {key}"))
        .parse()
        .unwrap()
}

#[test]
fn stability_of_the_preset() {
    let (code, out, _) = mtdc(&["stability", "--preset", "paper_4term", "--machine-readable"]);
    assert_eq!(code, EXIT_OK);
    let kv = key_values(&out);
    assert_eq!(kv["condition8_holds"], "true");
    assert_eq!(kv["condition9_holds"], "true");
    assert_eq!(kv["hurwitz"], "true");
    assert_eq!(kv["state_dimension"], "8");
    assert!(number(&kv, "hurwitz_margin") > 0.0);
}

#[test]
fn post_step_equilibrium_of_the_preset() {
    let (code, out, _) = mtdc(&[
        "equilibrium",
        "--preset",
        "paper_4term",
        "--post-step",
        "--machine-readable",
    ]);
    assert_eq!(code, EXIT_OK);
    let kv = key_values(&out);
    for i in 1..=4 {
        assert!((number(&kv, &format!("u_eq_{i}")) - 50.0).abs() < 1e-6);
    }
    assert!((number(&kv, "V_eq_1") - 1e5).abs() < 1e-6);
    assert_eq!(kv["bound_holds"], "true");
}

#[test]
fn human_summary_matches_machine_values() {
    for cmd in [
        &["stability"][..],
        &["equilibrium", "--post-step"],
        &["equilibrium", "--controller", "droop"],
    ] {
        let (_, human, _) = mtdc(cmd);
        let mut args = cmd.to_vec();
        args.push("--machine-readable");
        let (_, machine, _) = mtdc(&args);
        let kv = key_values(&machine);
        let mut checked = 0;
        for line in human.lines() {
            let mut parts = line.split_whitespace();
            let (Some(key), Some(value)) = (parts.next(), parts.next()) else {
                continue;
            };
            let (Some(m), Ok(shown)) = (kv.get(key), value.parse::<f64>()) else {
                continue;
            };
            let exact: f64 = m.parse().unwrap();
            let digits = value
                .split('.')
                .nth(1)
                .map_or(0, |d| d.split('e').next().unwrap().len());
            let exponent = value
                .split_once('e')
                .map_or(0, |(_, e)| e.parse::<i32>().unwrap());
            let ulp = 10f64.powi(exponent - digits as i32);
            assert!((exact - shown).abs() <= ulp, "{key}: {value} vs {m}");
            checked += 1;
        }
        assert!(checked >= 5, "{human}");
    }
}

#[test]
fn reports_are_reproducible() {
    let a = mtdc(&["stability", "--machine-readable"]);
    let b = mtdc(&["stability", "--machine-readable"]);
    assert_eq!(a, b);
}

#[test]
fn simulate_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let (code, out, err) = mtdc(&[
        "simulate",
        "--preset",
        "paper_4term",
        "--tau",
        "0",
        "--horizon",
        "2",
        "--out-dir",
        out_dir,
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("settled: voltages"), "{out}");
    let csv = std::fs::read_to_string(dir.path().join("distributed_tau_0s.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 1 + 3 * 4);
    assert_eq!(lines.count(), 2001);
    let script = std::fs::read_to_string(dir.path().join("simulate.gp")).unwrap();
    assert!(script.contains("layout 1,2") && script.contains("\"distributed_tau_0s.csv\""));
    let report = std::fs::read_to_string(dir.path().join("simulate.txt")).unwrap();
    assert!(report.contains("stable=true"));
}

#[test]
fn droop_simulation_is_one_plot_row() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let (code, _, err) = mtdc(&[
        "simulate",
        "--controller",
        "droop",
        "--horizon",
        "0.2",
        "--out-dir",
        out_dir,
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let csv = std::fs::read_to_string(dir.path().join("droop_tau_0s.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 1 + 2 * 4);
    let (code, _, err) = mtdc(&["simulate", "--controller", "droop", "--tau", "0.1"]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("delay"));
}

#[test]
fn sweep_writes_one_row_per_delay() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let (code, out, err) = mtdc(&[
        "sweep-delay",
        "--tau-list",
        "0,0.1,0.22",
        "--horizon",
        "1",
        "--out-dir",
        out_dir,
        "--machine-readable",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let keys: Vec<&str> = out
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, _)| k)
        .filter(|k| k.ends_with(".stable"))
        .collect();
    assert_eq!(
        keys,
        ["tau_0s.stable", "tau_0.1s.stable", "tau_0.22s.stable"]
    );
    let script = std::fs::read_to_string(dir.path().join("sweep.gp")).unwrap();
    assert!(script.contains("layout 3,2"));
    for name in [
        "sweep_tau_0s.csv",
        "sweep_tau_0.1s.csv",
        "sweep_tau_0.22s.csv",
    ] {
        assert!(dir.path().join(name).is_file());
    }
}

#[test]
fn sweep_search_range_must_bracket() {
    let (code, _, err) = mtdc(&[
        "sweep-delay",
        "--tau-list",
        "0",
        "--horizon",
        "1",
        "--search",
        "0.01,0.02",
    ]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("delay range"), "{err}");
    let (code, ..) = mtdc(&["sweep-delay", "--controller", "droop"]);
    assert_eq!(code, EXIT_INVALID);
}

#[test]
fn asserted_stability_reports_divergence() {
    let (code, _, err) = mtdc(&[
        "simulate",
        "--tau",
        "0.5",
        "--horizon",
        "15",
        "--assert-stable",
    ]);
    assert_eq!(code, EXIT_DIVERGED, "{err}");
    assert!(err.contains("diverged"));
}

#[test]
fn config_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let preset = mtdc(&["preset", "paper_4term"]).1;

    let bad_unit = dir.path().join("unit.toml");
    std::fs::write(&bad_unit, preset.replacen("123.79 uF", "123.79 mF", 1)).unwrap();
    let (code, _, err) = mtdc(&["stability", "--config", bad_unit.to_str().unwrap()]);
    assert_eq!(code, EXIT_INVALID);
    assert!(
        err.contains("converters[0].capacitance") && err.contains("mF"),
        "{err}"
    );

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(
        &unknown,
        preset.replacen("[controller]", "[controller]\nfoo = 1", 1),
    )
    .unwrap();
    let (code, _, err) = mtdc(&["stability", "--config", unknown.to_str().unwrap()]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("line ") && err.contains("foo"), "{err}");

    let split = dir.path().join("split.toml");
    let text = preset.replacen("i = 1\nj = 3", "i = 1\nj = 2", 1).replacen(
        "i = 2\nj = 4",
        "i = 3\nj = 4",
        1,
    );
    let text = text.replacen(
        "[[lines]]\ni = 1\nj = 2\nresistance = \"0.0015 ohm\"\n",
        "",
        1,
    );
    let text = text.replacen(
        "[[lines]]\ni = 3\nj = 4\nresistance = \"0.0015 ohm\"\n",
        "",
        1,
    );
    std::fs::write(&split, text).unwrap();
    let (code, _, err) = mtdc(&["stability", "--config", split.to_str().unwrap()]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("not connected"), "{err}");

    let (code, _, err) = mtdc(&["stability", "--config", "/nonexistent/model.toml"]);
    assert_eq!(code, EXIT_IO);
    assert!(err.contains("/nonexistent/model.toml"));

    let (code, ..) = mtdc(&["simulate", "--tau", "-1"]);
    assert_eq!(code, EXIT_INVALID);
    let (code, ..) = mtdc(&["frobnicate"]);
    assert_eq!(code, EXIT_INVALID);
}

#[test]
fn preset_listing_and_limits() {
    let (code, out, _) = mtdc(&["preset"]);
    assert_eq!((code, out.as_str()), (EXIT_OK, "paper_4term\n"));
    let (code, out, _) = mtdc(&["limits", "--post-step", "--machine-readable"]);
    assert_eq!(code, EXIT_OK);
    let kv = key_values(&out);
    assert_eq!(kv["spread_grows"], "true");
    assert!(number(&kv, "scale_1e-6.sharing_error") < 1e-3);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_mtdc");
    let ok = Command::new(bin)
        .args(["equilibrium", "--post-step"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("u_eq_4"));
    let bad = Command::new(bin)
        .args(["equilibrium", "--preset", "missing"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_INVALID));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown preset"));
}
