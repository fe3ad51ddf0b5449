use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fracgreen_cli::{exit, run, Command as Cmd, RunError, RunManifest};

const FIXTURES: [&str; 5] = ["linear_torsion", "linear_dirac", "desk_superlinear", "desk_sublinear", "boundary_linear"];

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.json"))
}

fn fracgreen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracgreen")).args(args).output().unwrap()
}

fn invoke(cmd: &str, spec: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    fracgreen(&args)
}

#[test]
fn verify_passes_on_every_fixture() {
    let dir = tempfile::tempdir().unwrap();
    for name in FIXTURES {
        let out = dir.path().join(name);
        let o = invoke("verify", &fixture(name), &out, &[]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
        assert_eq!(report["passed"], true);
    }
}

#[test]
fn torsion_fixture_is_checked_against_the_profile() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(invoke("verify", &fixture("linear_torsion"), dir.path(), &[]).status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(csv.starts_with("gate,value,threshold,passed\n"));
    assert!(csv.lines().any(|l| l.starts_with("torsion_oracle,") && l.ends_with(",true")), "{csv}");
}

#[test]
fn huge_growth_constant_reports_the_largest_admissible_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = invoke("solve", &fixture("desk_superlinear"), dir.path(), &["--set", "g.c=1e6"]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    let line = err.lines().find(|l| l.starts_with("largest admissible c:")).expect("c_max line");
    let c_max: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(c_max > 0.05 && c_max < 1e6, "{c_max}");
    assert!(!dir.path().join("solution.csv").exists());
    // just below the reported threshold the solve goes through
    let below = format!("g.c={}", 0.9 * c_max);
    assert_eq!(invoke("solve", &fixture("desk_superlinear"), dir.path(), &["--set", &below]).status.code(), Some(0));
}

#[test]
fn solve_then_verify_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let spec = fixture("desk_superlinear");
    assert_eq!(invoke("solve", &spec, dir.path(), &[]).status.code(), Some(0));
    assert_eq!(invoke("verify", &spec, dir.path(), &[]).status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("round_trip,0.000000e0,")), "{csv}");
}

#[test]
fn verify_fails_against_a_foreign_solution() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(invoke("solve", &fixture("desk_superlinear"), dir.path(), &["--set", "sigma=2.0"]).status.code(), Some(0));
    let o = invoke("verify", &fixture("desk_superlinear"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&o.stderr).contains("round_trip"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["solve", "verify", "boundary", "stability", "sweep"] {
        let spec = if cmd == "boundary" { fixture("boundary_linear") } else { fixture("desk_superlinear") };
        let (a, b) = (dir.path().join(format!("{cmd}-a")), dir.path().join(format!("{cmd}-b")));
        for out in [&a, &b] {
            assert_eq!(invoke(cmd, &spec, out, &["--seed", "11"]).status.code(), Some(0), "{cmd}");
        }
        let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(!names.is_empty());
        for name in names {
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{cmd}: {name:?}");
        }
    }
}

#[test]
fn seed_changes_the_battery_but_not_the_solution() {
    let dir = tempfile::tempdir().unwrap();
    let spec = fixture("desk_superlinear");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    invoke("verify", &spec, &a, &["--seed", "1"]);
    invoke("verify", &spec, &b, &["--seed", "2"]);
    assert_ne!(fs::read(a.join("verify.json")).unwrap(), fs::read(b.join("verify.json")).unwrap());
    invoke("solve", &spec, &a, &["--seed", "1"]);
    invoke("solve", &spec, &b, &["--seed", "2"]);
    assert_eq!(fs::read(a.join("solution.csv")).unwrap(), fs::read(b.join("solution.csv")).unwrap());
}

#[test]
fn critical_growth_exponent_is_a_spec_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = invoke("solve", &fixture("desk_superlinear"), dir.path(), &["--set", "g.p=2.0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("subcritical"));
}

#[test]
fn spec_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let spec = fixture("desk_superlinear");
    for set in ["bogus=1", "params.alpha=1.2", "mu.atoms=[[0.5,1.0]]", "nu.atoms=[[0.0,-1.0]]"] {
        assert_eq!(invoke("solve", &spec, dir.path(), &["--set", set]).status.code(), Some(2), "{set}");
    }
    // boundary runs need an eta measure
    assert_eq!(invoke("boundary", &spec, dir.path(), &[]).status.code(), Some(2));
    // malformed command line
    assert_eq!(fracgreen(&["solve", "--spec", spec.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn missing_spec_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = invoke("solve", &dir.path().join("nope.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn non_convergence_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let o = invoke("solve", &fixture("desk_superlinear"), dir.path(), &["--set", "solver.max_iter=2"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn library_entry_point_matches_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = RunManifest::new(Cmd::Solve, fixture("linear_dirac"), dir.path().join("lib"));
    let outcome = run(&manifest).unwrap();
    assert_eq!(outcome.files.len(), 2);
    invoke("solve", &fixture("linear_dirac"), &dir.path().join("bin"), &[]);
    assert_eq!(
        fs::read(dir.path().join("lib/solution.csv")).unwrap(),
        fs::read(dir.path().join("bin/solution.csv")).unwrap()
    );
    let bad = RunManifest::new(Cmd::Solve, fixture("linear_dirac"), dir.path()).with_override("g.p", "3.0");
    let err = run(&bad).unwrap_err();
    assert!(matches!(err, RunError::Core(_)));
    assert_eq!(err.exit_code(), exit::SPEC);
}

#[test]
fn output_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    invoke("solve", &fixture("boundary_linear"), &d.join("s"), &[]);
    let sol = fs::read_to_string(d.join("s/solution.csv")).unwrap();
    assert!(sol.starts_with("x,u,g_part,p_part,eta_part\n"));
    assert_eq!(sol.lines().count(), 1 + 512);
    assert!(!sol.contains('\r'));
    invoke("boundary", &fixture("boundary_linear"), &d.join("b"), &[]);
    assert!(fs::read_to_string(d.join("b/boundary.csv")).unwrap().starts_with("t,l1_norm,cauchy_diff,w11,w1q,scaled_mass,weighted_mass\n"));
    let b: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("b/boundary.json")).unwrap()).unwrap();
    assert_eq!(b["cauchy_decreasing"], true);
    invoke("stability", &fixture("desk_superlinear"), &d.join("t"), &[]);
    assert_eq!(fs::read_to_string(d.join("t/stability.csv")).unwrap().lines().next(), Some("n,distance"));
    invoke("sweep", &fixture("desk_superlinear"), &d.join("w"), &[]);
    assert!(fs::read_to_string(d.join("w/sweep.csv")).unwrap().starts_with("q_factor,q,n,norm,weighted,ratio,weighted_ratio\n"));
}
