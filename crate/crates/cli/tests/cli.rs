use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn spm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spm"))
        .args(args)
        .env_remove("SPM_WORKERS")
        .output()
        .expect("spm runs")
}

fn write_config(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const SQUEEZING: &str = r#"
seed = 3
bases = ["quadratic-qp", "quadratic-homodyne(0)"]

[model]
kind = "squeezing"
probe = { kind = "vacuum" }

[prior]
kind = "gaussian"
variance = 0.1
"#;

#[test]
fn solve_reports_coefficients() {
    let out = spm(&["solve", "--config", repo_config("squeezing_vacuum.toml").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let alpha: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("basis.quadratic-qp.alpha.2 = "))
        .expect("alpha line")
        .parse()
        .unwrap();
    assert!((alpha - 0.063643).abs() < 1e-6);
    assert!(text.contains("basis.quadratic-qp.msl_constrained = 8.44533"));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write_config(&dir, "empty.toml", &SQUEEZING.replace(r#"["quadratic-qp", "quadratic-homodyne(0)"]"#, "[]"));
    let unknown = write_config(&dir, "unknown.toml", &format!("colour = \"red\"\n{SQUEEZING}"));
    let bad_basis = write_config(&dir, "bad.toml", &SQUEEZING.replace("quadratic-qp", "quartic-z"));
    for path in [&empty, &unknown, &bad_basis] {
        let out = spm(&["solve", "--config", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(1), "{}", path.display());
        assert!(!out.stderr.is_empty());
    }
    let missing = spm(&["solve", "--config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn verify_passes_and_flags_injected_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let clean = write_config(&dir, "clean.toml", SQUEEZING);
    let out = spm(&["verify", "--config", clean.to_str().unwrap()]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.contains("checks.failed = 0"));

    let injected = write_config(&dir, "inject.toml", &format!("{SQUEEZING}\n[verify]\ninject_perturbation = true\n"));
    let out = spm(&["verify", "--config", injected.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l.contains("stationarity") && l.contains("= fail")), "{text}");
}

#[test]
fn sweep_is_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        &dir,
        "sweep.toml",
        &format!("{SQUEEZING}\n[sweep]\nvalues = [0.02, 0.1, 0.3]\n"),
    );
    let mut outputs = Vec::new();
    for workers in ["1", "2"] {
        let path = dir.path().join(format!("out{workers}.csv"));
        let out = spm(&[
            "sweep",
            "--config",
            config.to_str().unwrap(),
            "--workers",
            workers,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert!(text.starts_with("basis,sigma0_sq,"));
    assert_eq!(text.lines().count(), 1 + 2 * 3);
}

#[test]
fn seed_flag_changes_only_the_negative_control() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(&dir, "c.toml", SQUEEZING);
    let a = spm(&["solve", "--config", config.to_str().unwrap(), "--seed", "5"]);
    let b = spm(&["solve", "--config", config.to_str().unwrap(), "--seed", "6"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn oracle_reports_converged_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(&dir, "o.toml", SQUEEZING);
    let out = spm(&["oracle", "--config", config.to_str().unwrap()]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.contains("oracle.converged = true"));
    let global: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("oracle.global_msl = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(global > 0.0 && global < 0.084453);
}
