//! End-to-end runs of the `kendall-lab` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kendall-lab"));
    cmd.env_remove("KS_OUT_DIR");
    cmd
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().arg("--out").arg(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture() -> String {
    format!("{}/tests/fixtures/hand_2x3.csv", env!("CARGO_MANIFEST_DIR"))
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_writes_requested_shape() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["gen", "--n", "2", "--p", "1"]);
    assert!(o.status.success(), "{o:?}");
    let text = fs::read_to_string(dir.path().join("gen_2_1_1.csv")).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 1);
    assert_eq!(data[0].split(',').count(), 2);
    assert!(text.starts_with("# config={"));
}

#[test]
fn tau_of_hand_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["tau", "--input", &fixture()]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("-0.333333"), "{}", stdout(&o));
    let csv = fs::read_to_string(dir.path().join("tau_3_2_input.csv")).unwrap();
    assert!(csv.lines().any(|l| l.contains("-0.3333333333333333")), "{csv}");
}

#[test]
fn hmat_on_unknown_marginal_needs_rank_mode() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["hmat", "--input", &fixture()]);
    assert_eq!(o.status.code(), Some(3));
    let o = run_in(dir.path(), &["--mode", "empirical_rank", "hmat", "--input", &fixture()]);
    assert!(o.status.success(), "{o:?}");
}

#[test]
fn spectrum_of_h() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["spectrum", "--matrix", "h", "--n", "20", "--p", "50"]);
    assert!(o.status.success(), "{o:?}");
    let eig = fs::read_to_string(dir.path().join("spectrum_h_20_50_1.spectrum.csv")).unwrap();
    assert!(eig.lines().filter(|l| !l.starts_with('#')).count() >= 50);
    let hist = json(&dir.path().join("spectrum_h_20_50_1.hist.json"));
    let counts: u64 = hist["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(counts, 50);
    assert_eq!(hist["source"], "h");
}

#[test]
fn law_grid_and_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["law", "--q", "0.5", "--points", "11"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("edges=[0.085786, 2.914214]"), "{}", stdout(&o));
    let grid = fs::read_to_string(dir.path().join("law_q0.5_a1_b0.csv")).unwrap();
    assert_eq!(grid.lines().filter(|l| !l.starts_with('#')).count(), 12);
    let o = run_in(dir.path(), &["law"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn alpha_of_sign_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["alpha", "--samples", "20000"]);
    assert!(o.status.success(), "{o:?}");
    let v = json(&dir.path().join("alpha_sign_uniform01_1.json"));
    let (a, se) = (v["alpha"].as_f64().unwrap(), v["std_error"].as_f64().unwrap());
    assert!((a - 1.0 / 3.0).abs() <= 4.0 * se + 1e-12, "{a} +/- {se}");
}

#[test]
fn figure_one_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["figure", "fig1", "--n", "30", "--p", "225"]);
    assert!(o.status.success(), "{o:?}");
    for f in ["fig1_30_225_1.spectrum.csv", "fig1_30_225_1.hist.json", "fig1_30_225_1.law.csv", "fig1_plot.py"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let ann = json(&dir.path().join("fig1_annotations.json"));
    assert!(ann["panels"][0]["ks"].as_f64().unwrap() < 0.1);
}

#[test]
fn figure_two_annotates_both_laws() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["figure", "fig2", "--n", "30", "--p", "200,300"]);
    assert!(o.status.success(), "{o:?}");
    let ann = json(&dir.path().join("fig2_annotations.json"));
    let panels = ann["panels"].as_array().unwrap();
    assert_eq!(panels.len(), 2);
    for panel in panels {
        let (n, p) = (panel["n"].as_f64().unwrap(), panel["p"].as_f64().unwrap());
        let qp = 2.0 * p / (n * (n - 1.0));
        let hi = panel["quadratic_edges"][1].as_f64().unwrap();
        assert!((hi - (1.0 + qp.sqrt()).powi(2) / 3.0).abs() < 1e-12);
        let q = p / n;
        let lo = panel["linear_edges"][0].as_f64().unwrap();
        assert!((lo - (1.0 / 3.0 + 2.0 / 3.0 * (1.0 - q.sqrt()).powi(2))).abs() < 1e-12);
        assert_eq!(panel["mean_line"].as_f64().unwrap(), 1.0 / 3.0);
    }
}

#[test]
fn experiment_report_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["experiment", "rank-bound"]);
    assert!(o.status.success(), "{o:?}");
    let r = json(&dir.path().join("rank-bound_20_100_1.json"));
    assert_eq!(r["passed"], true);
    assert_eq!(r["config"]["params"]["name"], "rank-bound");

    // an impossible tolerance fails honestly with exit 1
    let o = run_in(dir.path(), &["experiment", "quadratic-lsd", "--n", "20", "--p", "100", "--seeds", "1", "--tolerance", "0"]);
    assert_eq!(o.status.code(), Some(1), "{o:?}");

    assert_eq!(run_in(dir.path(), &["experiment", "nope"]).status.code(), Some(2));
    assert_eq!(run_in(dir.path(), &["gen", "--n", "1", "--p", "3"]).status.code(), Some(3));
    assert_eq!(run_in(dir.path(), &["gen", "--p", "0"]).status.code(), Some(3));
    assert_eq!(run_in(dir.path(), &["--threads", "0", "gen"]).status.code(), Some(2));
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert!(run_in(d.path(), &["spectrum", "--n", "25", "--p", "60", "--seed", "9"]).status.success());
        assert!(run_in(d.path(), &["experiment", "zero-onset"]).status.success());
    }
    assert_eq!(dir_contents(a.path()), dir_contents(b.path()));
}

#[test]
fn thread_count_does_not_change_results() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["spectrum", "--matrix", "h", "--n", "40", "--p", "300"];
    let one = run_in(a.path(), &[&["--threads", "1"][..], &args[..]].concat());
    let four = run_in(b.path(), &[&["--threads", "4"][..], &args[..]].concat());
    assert!(one.status.success() && four.status.success());
    assert_eq!(stdout(&one).lines().next(), stdout(&four).lines().next());
    let numeric = |d: &Path| -> Vec<String> {
        fs::read_to_string(d.join("spectrum_h_40_300_1.spectrum.csv"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(String::from)
            .collect()
    };
    assert_eq!(numeric(a.path()), numeric(b.path()));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().env("KS_OUT_DIR", dir.path()).args(["gen", "--n", "3", "--p", "2"]).output().unwrap();
    assert!(o.status.success(), "{o:?}");
    assert!(dir.path().join("gen_3_2_1.csv").exists());
}

#[test]
fn json_and_binary_formats() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &["--format", "json", "tau", "--n", "5", "--p", "4"]).status.success());
    let v = json(&dir.path().join("tau_5_4_1.json"));
    assert_eq!(v["order"], 4);
    assert_eq!(v["rows"][2][2], 1.0);
    assert!(run_in(dir.path(), &["--format", "bin", "hmat", "--n", "5", "--p", "4"]).status.success());
    assert!(dir.path().join("h_5_4_1.bin").exists());
    assert!(dir.path().join("h_5_4_1.bin.config.json").exists());
}
