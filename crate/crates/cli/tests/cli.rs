use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn nfpe(cmd: &str, config: &Path, root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfpe"))
        .args([cmd, "--config"])
        .arg(config)
        .env("NFPE_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const QUADRATIC: &str = r#"
[coefficients]
preset = "linear"

[potential]
kind = "quadratic"
dimension = 1
scale = 1.0
offset = 1.0

[grid]
lo = [-6.0]
hi = [6.0]
cells = [128]

[equilibrium]
target_mass = 1.0

[output]
dir = "out"
"#;

const SMALL_RUN: &str = r#"
[coefficients]
preset = "smooth-nonlinear"
gamma = 1.0
gamma1 = 2.0
b0 = 1.0
b_sup = 2.0

[potential]
kind = "confining"
dimension = 1

[grid]
lo = [-12.0]
hi = [12.0]
cells = [128]

[initial]
kind = "gaussian"
center = [0.5]
sigma = 1.0

[run]
t_final = 1.0
steps = 50
snapshot_stride = 25

[particles]
n = 2000
dt = 0.02
t_final = 0.2
seed = 42
cross_check = true

[output]
dir = "out"
"#;

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn empty_config_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "empty.toml", "");
    let o = nfpe("evolve", &cfg, dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_key_is_named() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &QUADRATIC.replace("scale = 1.0", "scale = 1.0\nsclae = 2.0"));
    let o = nfpe("equilibrium", &cfg, dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("sclae"), "{}", stderr(&o));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
}

#[test]
fn zero_steps_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &SMALL_RUN.replace("steps = 50", "steps = 0"));
    let o = nfpe("evolve", &cfg, dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("run.steps"));
}

#[test]
fn nonpositive_target_mass_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &QUADRATIC.replace("target_mass = 1.0", "target_mass = 0.0"));
    assert_eq!(code(&nfpe("equilibrium", &cfg, dir.path())), 2);
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&nfpe("evolve", &dir.path().join("nope.toml"), dir.path())), 2);
}

#[test]
fn quadratic_potential_fails_balance_check() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", QUADRATIC);
    let o = nfpe("verify-hypotheses", &cfg, dir.path());
    assert_eq!(code(&o), 1);
    let report = std::fs::read_to_string(dir.path().join("out/hypotheses.txt")).unwrap();
    assert!(report.contains("(vi)") && report.contains("FAIL"));
}

#[test]
fn linear_preset_with_confining_potential_passes_hypotheses() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &SMALL_RUN.replace("preset = \"smooth-nonlinear\"\ngamma = 1.0\ngamma1 = 2.0\nb0 = 1.0\nb_sup = 2.0", "preset = \"linear\""));
    let o = nfpe("verify-hypotheses", &cfg, dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn equilibrium_prints_summary_and_copies_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", QUADRATIC);
    let o = nfpe("equilibrium", &cfg, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let line = stdout(&o);
    for key in ["mu=", "mass=", "max=", "sup_bound=", "residual="] {
        assert!(line.contains(key), "{line}");
    }
    let mass: f64 = line.split("mass=").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!((mass - 1.0).abs() < 1e-10);
    assert_eq!(std::fs::read_to_string(dir.path().join("out/config.toml")).unwrap(), QUADRATIC);
    assert_eq!(std::fs::read_to_string(&cfg).unwrap(), QUADRATIC);
    let field = std::fs::read_to_string(dir.path().join("out/equilibrium.txt")).unwrap();
    assert!(field.starts_with("# nfpe-field dim=1"));
    assert_eq!(field.lines().count(), 129);
}

#[test]
fn existing_output_directory_is_refused() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", QUADRATIC);
    assert_eq!(code(&nfpe("equilibrium", &cfg, dir.path())), 0);
    let o = nfpe("equilibrium", &cfg, dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("already exists"));
}

#[test]
fn evolve_writes_diagnostics_and_passes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", SMALL_RUN);
    let o = nfpe("evolve", &cfg, dir.path());
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let out = dir.path().join("out");
    let diag = std::fs::read_to_string(out.join("diagnostics.txt")).unwrap();
    assert_eq!(diag.lines().count(), 52);
    for name in ["field_000000.txt", "field_000025.txt", "field_000050.txt", "final.txt", "lyapunov.txt", "summary.txt"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn equilibrium_start_keeps_free_energy_flat() {
    let dir = TempDir::new().unwrap();
    let body = SMALL_RUN.replace("kind = \"gaussian\"\ncenter = [0.5]\nsigma = 1.0", "kind = \"equilibrium\"\nmass = 1.0");
    let cfg = write_config(&dir, "c.toml", &body);
    let o = nfpe("evolve", &cfg, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lyap = std::fs::read_to_string(dir.path().join("out/lyapunov.txt")).unwrap();
    let v: Vec<f64> = lyap.lines().skip(1).map(|l| l.split_whitespace().nth(3).unwrap().parse().unwrap()).collect();
    let spread = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1e-10 * (1.0 + v[0].abs()), "spread {spread}");
}

#[test]
fn particle_runs_are_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [&a, &b] {
        let cfg = write_config(dir, "c.toml", SMALL_RUN);
        let o = nfpe("particles", &cfg, dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(stdout(&o).contains("l1_kde_pde="));
    }
    let ea = std::fs::read(a.path().join("out/ensemble_final.txt")).unwrap();
    let eb = std::fs::read(b.path().join("out/ensemble_final.txt")).unwrap();
    assert_eq!(ea, eb);
    assert_eq!(String::from_utf8(ea).unwrap().lines().count(), 2001);
}

#[test]
fn single_thread_particles_match_default() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cfg_a = write_config(&a, "c.toml", SMALL_RUN);
    let cfg_b = write_config(&b, "c.toml", &format!("threads = 1\n{SMALL_RUN}"));
    assert_eq!(code(&nfpe("particles", &cfg_a, a.path())), 0);
    assert_eq!(code(&nfpe("particles", &cfg_b, b.path())), 0);
    assert_eq!(
        std::fs::read(a.path().join("out/ensemble_final.txt")).unwrap(),
        std::fs::read(b.path().join("out/ensemble_final.txt")).unwrap()
    );
}

#[test]
fn build_potential_writes_table_and_report() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", SMALL_RUN);
    let o = nfpe("build-potential", &cfg, dir.path());
    // the balance condition cannot hold for a potential growing at infinity
    assert_eq!(code(&o), 1);
    let report = std::fs::read_to_string(dir.path().join("out/certification.txt")).unwrap();
    assert!(report.contains("PASS ode residual"));
    assert!(report.contains("PASS continuity"));
    let table = std::fs::read_to_string(dir.path().join("out/potential.txt")).unwrap();
    assert_eq!(table.lines().count(), 2002);
}

#[test]
fn build_potential_needs_confining_kind() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", QUADRATIC);
    assert_eq!(code(&nfpe("build-potential", &cfg, dir.path())), 2);
}
