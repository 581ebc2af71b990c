use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rmv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmv")).args(args).output().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn model(dir: &Path, drift: &str, diffusion: &str, running: &str, x0: f64, control: &str) -> PathBuf {
    let text = format!(
        r#"horizon = 1.0

[actions]
points = [-1.0, 0.0, 1.0]

[coefficients]
drift = "{drift}"
diffusion = "{diffusion}"

[costs]
running = "{running}"
reflection = "0"
terminal = "0"

[simulation]
steps = 100
particles = 3
seed = 1
initial = {x0:?}

{control}
"#
    );
    let p = dir.join("model.toml");
    fs::write(&p, text).unwrap();
    p
}

const CONSTANT_ONE: &str = "[control]\nkind = \"constant\"\nvalue = 1.0";

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn unit_drift_gives_identity_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = model(dir.path(), "a", "0", "x", 0.0, CONSTANT_ONE);
    let out = dir.path().join("o");
    let o = rmv(&["--config", cfg.to_str().unwrap(), "simulate", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("trajectories.csv"));
    assert_eq!(rows.len(), 3 * 101);
    for r in rows {
        let (t, x): (f64, f64) = (r[0].parse().unwrap(), r[2].parse().unwrap());
        assert!((x - t).abs() < 1e-12, "{t} {x}");
    }
    assert_eq!(csv_rows(&out.join("moments.csv")).len(), 101);
}

#[test]
fn downward_drift_reports_total_reflection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = model(dir.path(), "-1", "0", "x", 0.0, CONSTANT_ONE);
    let o = rmv(&["--config", cfg.to_str().unwrap(), "simulate", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let k: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("total K (particle mean) "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((k - 1.0).abs() < 1e-12, "{stdout}");
}

#[test]
fn malformed_expression_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = model(dir.path(), "a - * x", "0", "x", 0.0, CONSTANT_ONE);
    let o = rmv(&["--config", cfg.to_str().unwrap(), "simulate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("coefficients.drift") && err.contains("column 5"), "{err}");
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(rmv(&["simulate", "--out", out]).status.code(), Some(2));
    assert_eq!(rmv(&["--config", "/nonexistent.toml", "simulate"]).status.code(), Some(2));
    assert_eq!(rmv(&["frobnicate"]).status.code(), Some(2));
    let cfg = model(dir.path(), "a", "0", "x", 0.0, "");
    assert_eq!(rmv(&["--config", cfg.to_str().unwrap(), "simulate", "--out", out]).status.code(), Some(2));
    let cfg = model(dir.path(), "a", "a", "x", 0.0, CONSTANT_ONE);
    assert_eq!(rmv(&["--config", cfg.to_str().unwrap(), "simulate", "--out", out]).status.code(), Some(2));
    assert_eq!(rmv(&["--threads", "0", "example3", "--out", out]).status.code(), Some(2));
    assert_eq!(rmv(&["example3", "--n-max", "0", "--out", out]).status.code(), Some(2));
    assert_eq!(rmv(&["--help"]).status.code(), Some(0));
}

#[test]
fn blowup_exits_3_with_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = model(dir.path(), "1 / (t - 0.02)", "0", "x", 0.0, CONSTANT_ONE);
    let o = rmv(&["--config", cfg.to_str().unwrap(), "simulate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("numerical blowup at step"), "{err}");
}

#[test]
fn chatter_table_on_bang_bang() {
    let dir = tempfile::tempdir().unwrap();
    let c = configs();
    let out = dir.path().join("o");
    let o = rmv(&[
        "--config",
        c.join("example3.toml").to_str().unwrap(),
        "chatter",
        "--policy",
        c.join("half_half.toml").to_str().unwrap(),
        "--steps-per-level",
        "200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let gaps: Vec<f64> = csv_rows(&out.join("chatter_table.csv")).iter().map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(gaps.len(), 6);
    for w in gaps.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..=4.5).contains(&ratio), "{gaps:?}");
    }
}

#[test]
fn chatter_rejects_level_zero_and_dirac_has_no_gap() {
    let dir = tempfile::tempdir().unwrap();
    let c = configs();
    let cfg = c.join("example3.toml");
    let base = ["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "chatter", "--policy"];
    let half = c.join("half_half.toml");
    let mut args = base.to_vec();
    args.extend([half.to_str().unwrap(), "--levels", "1,0,2"]);
    assert_eq!(rmv(&args).status.code(), Some(2));

    let dirac = dir.path().join("dirac.toml");
    fs::write(
        &dirac,
        "kind = \"relaxed\"\nactions = [-1.0, 0.0, 1.0]\nboundaries = [0.0, 0.5, 1.0]\nweights = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]\n",
    )
    .unwrap();
    let mut args = base.to_vec();
    args.extend([dirac.to_str().unwrap(), "--levels", "1,2,4,8"]);
    let o = rmv(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for r in csv_rows(&dir.path().join("chatter_table.csv")) {
        assert_eq!(r[3].parse::<f64>().unwrap(), 0.0, "{r:?}");
    }
}

#[test]
fn optimize_budget_one_writes_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("example3.toml");
    let out = dir.path().join("o");
    let o = rmv(&["--config", cfg.to_str().unwrap(), "optimize", "--budget", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&out.join("trace.csv")).len(), 1);
    for f in ["best_policy.toml", "strict_policy.toml", "strict_cost.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let bad = rmv(&["--config", cfg.to_str().unwrap(), "optimize", "--method", "newton", "--out", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn written_policy_is_readable_by_cost() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("example3.toml");
    let out = dir.path().join("o");
    let o = rmv(&["--config", cfg.to_str().unwrap(), "optimize", "--budget", "50", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let best: f64 = csv_rows(&out.join("trace.csv")).last().unwrap()[5].parse().unwrap();
    for (policy, label) in [("best_policy.toml", "relaxed"), ("strict_policy.toml", "strict")] {
        let o = rmv(&[
            "--config",
            cfg.to_str().unwrap(),
            "cost",
            "--policy",
            out.join(policy).to_str().unwrap(),
            "--out",
            dir.path().join("c").to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8(o.stdout).unwrap();
        let row: Vec<&str> = stdout.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[0], label);
        if label == "relaxed" {
            assert_eq!(row[1].parse::<f64>().unwrap(), best);
        }
    }
}

#[test]
fn convex_affine_model_strictifies_near_relaxed() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"horizon = 1.0

[actions]
interval = [0.0, 1.0]
count = 11

[coefficients]
drift = "a - x"
diffusion = "0.2"

[costs]
running = "(x - 0.5)^2 + 0.1*a"
reflection = "0"
terminal = "0"

[simulation]
steps = 160
particles = 200
seed = 3
initial = 0.2
"#;
    let cfg = dir.path().join("m.toml");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("o");
    let o = rmv(&[
        "--config", cfg.to_str().unwrap(), "optimize", "--budget", "150", "--cells", "2", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = csv_rows(&out.join("trace.csv"));
    let best = trace.iter().map(|r| r[3].parse::<f64>().unwrap()).fold(f64::INFINITY, f64::min);
    let stderr = trace.iter().find(|r| r[3].parse::<f64>().unwrap() == best).unwrap()[4].parse::<f64>().unwrap();
    let strict = csv_rows(&out.join("strict_cost.csv"));
    let (j, s): (f64, f64) = (strict[0][1].parse().unwrap(), strict[0][2].parse().unwrap());
    // drift and cost are affine in the action, so chattering costs only the block-switching error
    assert!(j >= best - 2.0 * stderr, "{j} vs {best}");
    assert!((j - best).abs() <= 2.0 * (stderr + s) + 1.0 / 16.0, "{j} vs {best}");
}

#[test]
fn roxin_command_reports_witness() {
    let cfg = configs().join("example3.toml");
    let o = rmv(&["--config", cfg.to_str().unwrap(), "roxin", "--x", "2", "--weights", "0.5,0,0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.contains("not convex: witness pair (-1.0, 1.0)"), "{s}");
    assert!(s.contains("residual 1.0, representable false"), "{s}");
}

#[test]
fn example3_prints_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = rmv(&["example3", "--n-max", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("example3_table.csv"));
    let j4: f64 = rows[2][1].parse().unwrap();
    assert!((j4 - 1.0 / 48.0).abs() < 1e-4);
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.contains("= 0.0") && s.contains("witness pair (-1.0, 1.0)"), "{s}");
}

#[test]
fn selftest_passes_is_repeatable_and_detects_tampering() {
    let a = rmv(&["selftest"]);
    let b = rmv(&["selftest"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let t = rmv(&["selftest", "--tamper", "cost.chattering_rate"]);
    assert_eq!(t.status.code(), Some(1));
    assert!(String::from_utf8(t.stderr).unwrap().contains("cost.chattering_rate"));
    assert_eq!(rmv(&["selftest", "--tamper", "nope"]).status.code(), Some(2));
}
