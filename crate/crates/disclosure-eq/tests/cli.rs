use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_disclosure-eq")).args(args).output().unwrap()
}

fn shipped(name: &str) -> String {
    configs().join(format!("{name}.json")).to_str().unwrap().to_string()
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn shipped_configs_validate() {
    for name in ["example1a", "example1b", "example2", "example2_modified", "dye_micro"] {
        let out = run(&["validate", &shipped(name)]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn invalid_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            "prior.json",
            r#"{"states": [{"value": 0, "prior": 0.5}, {"value": 1, "prior": 0.6}],
                "outcomes": [[0.8, 0.2], [0.2, 0.8]], "mass": "triangular"}"#,
            "states.prior",
        ),
        (
            "top.json",
            r#"{"states": [{"value": 0, "prior": 0.5}, {"value": 1, "prior": 0.5}],
                "outcomes": [[0.8, 0.2], [0.2, 0.8]],
                "mass": {"density": {"support": [0, 1], "pieces": [{"interval": [0, 1], "coeffs": [1]}]}}}"#,
            "g(1) must be 0",
        ),
        ("syntax.json", "{\n  \"states\": [\n  ,]\n}", ":3:"),
    ];
    for (file, text, needle) in cases {
        let path = dir.path().join(file);
        std::fs::write(&path, text).unwrap();
        let out = run(&["validate", path.to_str().unwrap()]);
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(2), "{file}: {err}");
        assert!(err.contains(needle), "{file}: {err}");
    }
    assert_eq!(run(&["validate", dir.path().join("absent.json").to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["solve", "sideways", &shipped("dye_micro")]).status.code(), Some(2));
}

#[test]
fn solve_finite_dye() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = run(&["solve", "finite", &shipped("dye_micro"), "--out", out_dir]);
    assert_eq!(out.status.code(), Some(0));
    let rows = rows(&dir.path().join("outcome.csv"));
    assert_eq!(rows.len(), 3);
    let mut payoffs: Vec<(String, f64)> = rows.iter().map(|r| (format!("{},{}", &r[0], &r[1]), r[4].parse().unwrap())).collect();
    payoffs.sort_by(|a, b| a.0.cmp(&b.0));
    let want = [("0,0", 0.4), ("0,1", 0.8), ("1,0", 0.4)];
    for ((k, u), (wk, wu)) in payoffs.iter().zip(want) {
        assert_eq!(k, wk);
        assert!((u - wu).abs() < 1e-12);
    }
    assert_eq!(self::rows(&dir.path().join("pools.csv")).len(), 2);
    let manifest = std::fs::read_to_string(dir.path().join("manifest-solve-finite.json")).unwrap();
    assert!(manifest.contains("\"command\": \"solve finite\""));
}

#[test]
fn solve_limit_example_1a() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", "limit", &shipped("example1a"), "--out", dir.path().to_str().unwrap(), "--grid", "300"]);
    assert_eq!(out.status.code(), Some(0));
    let curve = rows(&dir.path().join("payoff_curves.csv"));
    for r in curve.iter().filter(|r| &r[0] == "1") {
        let mu: f64 = r[1].parse().unwrap();
        let u: f64 = r[2].parse().unwrap();
        if mu < 1.0 / 3.0 - 1e-9 {
            assert!((u - 4.0 / 13.0).abs() < 1e-9, "mu {mu}: {u}");
            assert_eq!(&r[3], "pool");
        }
        if mu > 2.0 / 3.0 + 1e-9 {
            assert_eq!(u, 1.0);
            assert_eq!(&r[3], "honest");
        }
    }
    let frontier = rows(&dir.path().join("frontier.csv"));
    assert_eq!(frontier.len(), 301);
    let th = rows(&dir.path().join("thresholds.csv"));
    let z_star_star: f64 = th[1][2].parse().unwrap();
    assert!((z_star_star - 2.0 / 3.0).abs() < 1e-6);
}

#[test]
fn solve_limit_example_2_has_honest_plateau() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", "limit", &shipped("example2"), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let th = rows(&dir.path().join("thresholds.csv"));
    let (z_star, z_star_star): (f64, f64) = (th[1][1].parse().unwrap(), th[1][2].parse().unwrap());
    assert!(z_star - z_star_star > 0.05, "{z_star_star} .. {z_star}");
}

#[test]
fn mismatched_kinds_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(run(&["solve", "limit", &shipped("dye_micro"), "--out", d]).status.code(), Some(2));
    assert_eq!(run(&["solve", "finite", &shipped("example1a"), "--out", d]).status.code(), Some(2));
    assert_eq!(run(&["solve", "finite", &shipped("dye_micro"), "--out", d, "--tol", "bogus=1"]).status.code(), Some(2));
}

#[test]
fn type_cap_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_disclosure-eq"))
        .args(["solve", "finite", &shipped("example1a"), "--N", "10", "--out", dir.path().to_str().unwrap()])
        .env("DISCLOSURE_EQ_MAX_TYPES", "100")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cap of 100"));
}

#[test]
fn simulate_needs_upstream_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let sim = ["simulate", &shipped("dye_micro"), "--out", d, "--reps", "200000", "--seed", "7"];
    assert_eq!(run(&sim).status.code(), Some(4));
    assert_eq!(run(&["solve", "finite", &shipped("dye_micro"), "--out", d]).status.code(), Some(0));
    let first = run(&sim);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let files = ["calibration.csv", "welfare.csv", "summary.csv"];
    let before: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(dir.path().join(f)).unwrap()).collect();
    let again = run(&["simulate", &shipped("dye_micro"), "--out", d, "--reps", "200000", "--seed", "7", "--workers", "3"]);
    assert_eq!(again.status.code(), Some(0));
    for (f, b) in files.iter().zip(&before) {
        assert_eq!(&std::fs::read(dir.path().join(f)).unwrap(), b, "{f} changed");
    }
    let cal = rows(&dir.path().join("calibration.csv"));
    assert_eq!(cal.len(), 2);
    let n: u64 = cal.iter().map(|r| r[6].parse::<u64>().unwrap()).sum();
    assert_eq!(n, 200_000);
}

#[test]
fn simulate_rejects_stale_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(run(&["solve", "finite", &shipped("example1a"), "--N", "3", "--out", d]).status.code(), Some(0));
    let out = run(&["simulate", &shipped("example1b"), "--out", d, "--reps", "1000"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn converge_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["converge", &shipped("example1a"), "--N", "4,8", "--out", dir.path().to_str().unwrap(), "--widths", "1,0.25"]);
    assert!(matches!(out.status.code(), Some(0) | Some(3)), "{}", String::from_utf8_lossy(&out.stderr));
    let conv = rows(&dir.path().join("convergence.csv"));
    assert_eq!(conv.len(), 2);
    assert_eq!(&conv[1][0], "8");
    let shrink = rows(&dir.path().join("variance_shrink.csv"));
    assert_eq!(shrink.len(), 2);
    assert!(dir.path().join("sandwich.csv").exists());
    assert!(dir.path().join("manifest-converge.json").exists());
}
