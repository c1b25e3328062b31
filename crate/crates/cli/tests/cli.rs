use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn longmem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_longmem")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SMALL: [&str; 6] = [
    "--override",
    "m=40",
    "--override",
    "n_grid=[64,128]",
    "--override",
    "j_policy.factor=4",
];

#[test]
fn help_matches_golden() {
    for (args, file) in [(&["--help"][..], "help.txt"), (&["verify", "--help"][..], "verify_help.txt")] {
        let o = longmem(args);
        assert!(o.status.success());
        let golden = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(file)).unwrap();
        assert_eq!(stdout(&o), golden, "{file}");
    }
}

#[test]
fn usage_and_config_errors_exit_with_2() {
    assert_eq!(longmem(&["bogus"]).status.code(), Some(2));
    let missing = longmem(&["verify"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
    assert_eq!(longmem(&["constants", "--preset", "thm9"]).status.code(), Some(2));
    assert_eq!(longmem(&["constants", "--preset", "thm1", "--override", "alpha=2.5"]).status.code(), Some(2));
    assert_eq!(longmem(&["stable-table", "--alpha", "1.5", "--points", "1"]).status.code(), Some(2));
}

#[test]
fn stable_table_is_a_csv_of_a_symmetric_law() {
    let o = longmem(&["stable-table", "--alpha", "1.5", "--from", "-2", "--to", "2", "--points", "5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<Vec<f64>> =
        text.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(text.lines().next(), Some("x,cdf,pdf"));
    assert_eq!(rows.len(), 5);
    assert!((rows[2][1] - 0.5).abs() < 1e-9);
    assert!((rows[0][1] + rows[4][1] - 1.0).abs() < 1e-9);
    assert!((rows[0][2] - rows[4][2]).abs() < 1e-9);
}

#[test]
fn constants_prints_json() {
    let o = longmem(&["constants", "--preset", "thm1", "--quiet", "--override", "n_grid=[64]"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["constants"]["cTilde"].as_f64().unwrap() > 0.0);
    assert_eq!(v["normalizers"][0]["n"], 64);
}

#[test]
fn verify_writes_outputs_and_is_deterministic_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for workers in ["1", "3"] {
        let out = dir.path().join(workers);
        let mut args = vec!["verify", "--preset", "thm1", "--quiet", "--workers", workers, "--out", out.to_str().unwrap()];
        args.extend(SMALL);
        args.extend(["--override", "output.samples=true"]);
        let o = longmem(&args);
        assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));
        let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(summary["pass"].as_bool().unwrap(), o.status.code() == Some(0));
        let csv = fs::read_to_string(out.join("quantiles.csv")).unwrap();
        assert!(csv.starts_with("N,t,p,empirical_quantile,limit_quantile\n"));
        let bin = fs::read(out.join("samples.bin")).unwrap();
        assert_eq!(&bin[..8], b"LMPATHS1");
        reports.push(fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let report: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(report["schema"], "longmem-report/1");
    assert!(report["config"].get("workers").is_none());
}

#[test]
fn simulate_writes_sums_and_paths() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--preset", "thm1", "--quiet", "--seed", "7", "--out", dir.path().to_str().unwrap()];
    args.extend(SMALL);
    let o = longmem(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sums = fs::read_to_string(dir.path().join("sums.csv")).unwrap();
    assert_eq!(sums.lines().next(), Some("N,t,replication,normalized_sum"));
    // 2 sample sizes, 4 times, 40 replications.
    assert_eq!(sums.lines().count(), 1 + 2 * 4 * 40);
    assert!(dir.path().join("samples.bin").exists());
}
