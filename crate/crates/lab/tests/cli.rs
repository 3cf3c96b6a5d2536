use std::path::Path;
use std::process::{Command, Output};

fn nlmarkov(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlmarkov"))
        .args(args)
        .env("NLMARKOV_OUT_DIR", out)
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

const UNORDERED: &str = r#"[experiment]
name = "unordered"
seed = 3
tests = ["solve"]

[coefficients]
name = "pme"
m = 2.0

[time]
r = [0.25, 0.25]
t = [1.0, 0.5]
"#;

#[test]
fn unordered_times_are_a_setup_error_with_a_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, UNORDERED).unwrap();
    let out = nlmarkov(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("line 12"), "{err}");
    assert!(!dir.path().join("unordered").exists());
}

#[test]
fn empty_archive_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.nlmflow");
    std::fs::write(&empty, b"").unwrap();
    let out = nlmarkov(&["report", empty.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("empty archive"));
}

#[test]
fn ck_on_the_heat_equation_holds() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlmarkov(&["verify-ck", "--m", "1"], dir.path());
    let stdout = text(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}{}", text(&out.stderr));
    assert!(stdout.contains("CK-residual: small; verdict: holds (linear)"), "{stdout}");
}

#[test]
fn ck_on_the_porous_medium_equation_is_violated() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlmarkov(&["verify-ck", "--m", "2"], dir.path());
    let stdout = text(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("CK-residual: large; verdict: violated (nonlinear)"), "{stdout}");
}

#[test]
fn flow_check_passes_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlmarkov(&["verify-flow", "--m", "2", "--r", "0.5", "--t", "1", "--name", "flow"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let run = dir.path().join("flow");
    let manifest = std::fs::read_to_string(run.join("manifest.txt")).unwrap();
    assert!(manifest.contains("config_sha256 = "));
    assert!(run.join("report.txt").exists());
}

#[test]
fn flags_override_the_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let out = nlmarkov(
        &["solve", "--m", "2", "--r", "0.1", "--t", "0.2", "--cells", "256", "--name", "where", "--out", flag_dir.path().to_str().unwrap()],
        env_dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(flag_dir.path().join("where/marginals.csv").exists());
    assert!(!env_dir.path().join("where").exists());
}

#[test]
fn batch_reports_every_job_and_the_worst_code() {
    let dir = tempfile::tempdir().unwrap();
    let good = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/barenblatt_m2.toml");
    std::fs::write(dir.path().join("bad.toml"), UNORDERED).unwrap();
    let list = dir.path().join("jobs.txt");
    std::fs::write(&list, format!("# two jobs\n{}\nbad.toml\n", good.display())).unwrap();
    let out = nlmarkov(&["batch", list.to_str().unwrap(), "--workers", "2"], dir.path());
    let stdout = text(&out.stdout);
    assert_eq!(out.status.code(), Some(2), "{stdout}");
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("pass "), "{stdout}");
    assert!(lines[1].starts_with("error "), "{stdout}");
}
