use std::path::Path;
use std::process::{Command, Output};

const MINIMAL: &str = r#"
master_seed = 11

[kernel]
family = "standard"
d = 1
alpha = 1.0

[sim]
eps_cut = 0.01
t_max = 20.0

[[task]]
name = "exit"
kind = "estimate-exit"
x0 = [0.0]
domain = { ball = { center = [0.0], radius = 1.0 } }
n = 100
"#;

fn stablemc(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stablemc"));
    cmd.args(args).env_remove("STABLEMC_MASTER_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("experiment.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn run(dir: &Path, config: &str, out: &str, extra: &[&str], envs: &[(&str, &str)]) -> Output {
    let out = dir.join(out);
    let mut args = vec!["run", config, "--output-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    stablemc(&args, envs)
}

#[test]
fn minimal_config_writes_one_estimate_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let o = run(dir.path(), &cfg, "out", &[], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/exit.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("task,estimator,label,mean"));
    assert!(lines[1].contains(",11,"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/exit.json")).unwrap()).unwrap();
    assert_eq!(json["csv_version"], 1);
    assert_eq!(json["master_seed"], 11);
    assert_eq!(json["kind"], "estimate-exit");
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace("n = 100", "n = 2000");
    let cfg = write_config(dir.path(), &text);
    assert!(run(dir.path(), &cfg, "w1", &["--workers", "1"], &[]).status.success());
    assert!(run(dir.path(), &cfg, "w8", &["--workers", "8"], &[]).status.success());
    let a = std::fs::read(dir.path().join("w1/exit.csv")).unwrap();
    let b = std::fs::read(dir.path().join("w8/exit.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_alpha_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &MINIMAL.replace("alpha = 1.0", "alpha = 2.5"));
    let o = run(dir.path(), &cfg, "out", &[], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("out/exit.csv").exists());
}

#[test]
fn start_outside_domain_exits_with_precondition_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &MINIMAL.replace("x0 = [0.0]", "x0 = [5.0]"));
    assert_eq!(run(dir.path(), &cfg, "out", &[], &[]).status.code(), Some(3));
}

#[test]
fn scaling_on_state_dependent_kernel_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL
        .replace("family = \"standard\"", "family = \"modulated\"")
        .replace("alpha = 1.0", "alpha = 1.0\nkappa = 0.5\namplitude = 0.3\nwidth = 0.25")
        .replace(
            "kind = \"estimate-exit\"\nx0 = [0.0]\ndomain = { ball = { center = [0.0], radius = 1.0 } }",
            "kind = \"verify-scaling\"\nradii = [0.5, 1.0]",
        );
    let cfg = write_config(dir.path(), &text);
    let o = run(dir.path(), &cfg, "out", &[], &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn failed_verification_exits_with_code_four_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    // 2·eps below eps_cut: no tube of this radius can be followed
    let text = MINIMAL.replace("eps_cut = 0.01", "eps_cut = 0.2").replace(
        "kind = \"estimate-exit\"\nx0 = [0.0]\ndomain = { ball = { center = [0.0], radius = 1.0 } }",
        "kind = \"verify-support\"\ncurves = [[[0.0, [0.0]], [1.0, [1.0]]]]\neps = [0.05]",
    );
    let cfg = write_config(dir.path(), &text);
    let o = run(dir.path(), &cfg, "out", &[], &[]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let json = std::fs::read_to_string(dir.path().join("out/exit.json")).unwrap();
    assert!(json.contains("\"overall\": false"));
    assert!(json.contains("narrower"));
}

#[test]
fn seed_environment_variable_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    assert!(run(dir.path(), &cfg, "a", &[], &[("STABLEMC_MASTER_SEED", "99")]).status.success());
    let csv = std::fs::read_to_string(dir.path().join("a/exit.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains(",99,"));
    let o = run(dir.path(), &cfg, "b", &[], &[("STABLEMC_MASTER_SEED", "not-a-number")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let o = stablemc(&["run", "/nonexistent/experiment.toml"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn catalog_lists_every_verification_suite() {
    let o = stablemc(&["list-tasks"], &[]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for kind in ["verify-scaling", "verify-hitting", "verify-support", "verify-phi", "verify-mollify"] {
        assert!(text.contains(kind), "missing {kind}");
    }
}

#[test]
fn catalog_json_is_machine_readable() {
    let o = stablemc(&["list-tasks", "--json"], &[]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let kinds: Vec<&str> = v.as_array().unwrap().iter().map(|t| t["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds.len(), 12);
    assert_eq!(kinds[0], "simulate");

    let one = stablemc(&["list-tasks", "--json", "--task", "verify-phi"], &[]);
    let v: serde_json::Value = serde_json::from_slice(&one.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);
}

#[test]
fn unknown_task_kind_is_nonzero() {
    let o = stablemc(&["list-tasks", "--task", "verify-everything"], &[]);
    assert!(!o.status.success());
}

#[test]
fn example_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = stablemc_cli::config::load(&path, None).unwrap();
        cfg.validate().unwrap();
    }
}
