use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn specs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("specs")
}

fn cogrelay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cogrelay")).args(args).output().unwrap()
}

const SMALL: &str = "[experiment]
name = small
strategies = od, rd
seed = 7
[network]
p_pd = 0.1
s_sd = 0.2
p_relay = 0.1, 0.02
s_relay = 0.1, 0.1
relay_pd = 0.1, 0.1
relay_sd = 0.1, 0.1
[traffic]
lambda_p = 0.3
lambda_s = 0.2
[sim]
slots = 50000
";

fn write_spec(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn analyze_writes_the_fixed_columns() {
    let spec = specs().join("table1_n5.cfg");
    let out = cogrelay(&["analyze", "--spec", spec.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scenario,strategy,method,sweep_var,sweep_value,mu_p,mu_s,pi_p0,pi_s0,d_p_total,d_s_total,min_relays,status,ci_half_width,seed,build"
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&first[..6], &["table1_n5", "rd", "analytic", "n_relays", "0", "0.6"]);
    // no simulation, so no confidence interval
    assert_eq!(first[13], "");
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn invalid_specs_exit_with_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write_spec(&dir, "empty.cfg", "");
    let out = cogrelay(&["analyze", "--spec", &empty]);
    assert_eq!(out.status.code(), Some(1));

    let bad_omega = write_spec(&dir, "omega.cfg", &format!("{SMALL}[strategy]\nomega = 0.5, 0.4\n"));
    let out = cogrelay(&["analyze", "--spec", &bad_omega]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("omega"));

    let missing = cogrelay(&["analyze", "--spec", "/definitely/not/here.cfg"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn simulate_is_byte_stable_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "small.cfg", SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = cogrelay(&["simulate", "--spec", &spec, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(a).unwrap();
    assert_eq!(a, std::fs::read(b).unwrap());

    let other = cogrelay(&["simulate", "--spec", &spec, "--seed", "8"]);
    assert_ne!(a, other.stdout);
    let text = String::from_utf8(other.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(14) == Some("8")));
}

#[test]
fn strategy_and_slot_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "small.cfg", SMALL);
    let out = cogrelay(&[
        "simulate", "--spec", &spec, "--strategy", "rr", "--slots", "1000", "--replications", "2",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let strategies: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(strategies, vec!["rr", "rr"]);

    let bad = cogrelay(&["simulate", "--spec", &spec, "--strategy", "xx"]);
    assert!(!bad.status.success());
}

#[test]
fn compare_exit_code_reflects_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "small.cfg", &SMALL.replace("slots = 50000", "slots = 200000"));
    let out = cogrelay(&["compare", "--spec", &spec]);
    let report = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{report}");
    assert!(report.contains("PASS small od mu_s"));

    // an impossible tolerance turns sampling noise into failures
    let strict = write_spec(&dir, "strict.cfg", &format!("{SMALL}tolerance_abs = 1e-9\n"));
    let out = cogrelay(&["compare", "--spec", &strict]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn optimize_and_min_relays_run_on_bundled_specs() {
    let spec = specs().join("min_relays_table1.cfg");
    let out = cogrelay(&["min-relays", "--spec", spec.to_str().unwrap(), "--strategy", "od"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[2], "min_relays");
    assert_eq!(first[11], "0");
}
