use std::path::PathBuf;
use std::process::{Command, Output};

fn cslw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cslw")).args(args).env_remove("CSLW_SEED").output().expect("run cslw")
}

fn model(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models").join(name).display().to_string()
}

fn field(out: &Output, key: &str) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout);
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")).map(str::to_string))
        .unwrap_or_else(|| panic!("no {key} in {stdout}"))
}

#[test]
fn exact_inference_on_supplement() {
    for m in ["exact-enum", "exact-ve", "exact-ctx"] {
        let out = cslw(&["infer", "--model", &model("supplement.dcp"), "--query", "e=1", "--method", m]);
        assert!(out.status.success(), "{m}: {}", String::from_utf8_lossy(&out.stderr));
        let v: f64 = field(&out, "value").parse().unwrap();
        assert!((v - 0.74154).abs() < 1e-12, "{m}: {v}");
    }
}

#[test]
fn seed_from_environment_matches_flag() {
    let path = model("supplement.bif");
    let base = ["infer", "--model", &path, "--query", "a=1", "--evidence", "e=1", "--samples", "2000"];
    let flag = cslw(&[&base[..], &["--seed", "7"]].concat());
    let env = Command::new(env!("CARGO_BIN_EXE_cslw")).args(base).env("CSLW_SEED", "7").output().unwrap();
    assert!(flag.status.success() && env.status.success());
    assert_eq!(field(&flag, "value"), field(&env, "value"));
    assert_eq!(field(&env, "seed"), "7");
}

#[test]
fn convert_reports_rule_counts() {
    let dir = tempfile::tempdir().unwrap();
    let dst = dir.path().join("out.dcp");
    let out = cslw(&["convert", &model("supplement.bif"), dst.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(field(&out, "rules (tree)"), "10");
    assert_eq!(field(&out, "rules (table)"), "12");
    let back = cslw(&["validate", dst.to_str().unwrap()]);
    assert!(back.status.success(), "{}", String::from_utf8_lossy(&back.stdout));
}

#[test]
fn usage_errors_exit_with_two() {
    let missing = cslw(&["infer", "--model", "/nonexistent/model.dcp", "--query", "e=1"]);
    assert_eq!(missing.status.code(), Some(2));
    let bad = cslw(&["infer", "--model", &model("supplement.dcp"), "--query", "e"]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = cslw(&["infer", "--model", &model("supplement.dcp"), "--query", "a=1", "--evidence", "e"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error: "));
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let out = cslw(&[
        "bench", "--spec", &model("bench.spec"), "--methods", "lw,cslw", "--samples-list", "200", "--runs", "3",
        "--out", csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let (rows, agg) = text.split_once("\n\n").expect("aggregate block");
    assert_eq!(rows.lines().count(), 1 + 3 * 2 * 3);
    assert!(agg.starts_with("model,method,N,runs,mae,std,mean_elapsed_ms"));
    assert_eq!(agg.lines().count(), 1 + 3 * 2);
}
