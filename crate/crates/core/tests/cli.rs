use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const RECIPES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/recipes");

fn iontrap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iontrap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = iontrap(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn recipe(name: &str) -> String {
    format!("{RECIPES}/{name}")
}

#[test]
fn fig2_recipe_resolves_ramp_parameters() {
    let cfg = ionwork::cli::parse_config(Path::new(&recipe("fig2.json"))).unwrap();
    assert_eq!(cfg.ramp.omega_initial, 1.0);
    assert_eq!(cfg.ramp.omega_final, 3.0);
    assert_eq!(cfg.ramp.tau, 0.05);
    assert_eq!(cfg.thermal.nbar, 1.0);
    assert_eq!(cfg.convention, ionwork::model::FrequencyConvention::MhzOrdinary);
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"ramp": {"omega_initail": 1, "omega_final": 3, "tau": 0.05}, "thermal": {"nbar": 1}}"#,
    );
    let out = iontrap(&["transitions", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("omega_initail"), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = iontrap(&["jarzynski", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(iontrap(&["no-such-command"]).status.code(), Some(2));
    let out = iontrap(&["filter", "--config", &recipe("filter.json"), "--format", "xml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn truncation_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"ramp": {"omega_initial": 1, "omega_final": 3, "tau": 0.05}, "thermal": {"nbar": 1},
            "truncation": {"n_max": 8, "n_max_limit": 8, "n_report": 2}}"#,
    );
    let out = iontrap(&["transitions", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn jarzynski_on_fig2_recipe() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("a");
    run_ok(&["jarzynski", "--config", &recipe("fig2.json"), "--out", out_dir.to_str().unwrap()]);
    let env = read_json(&out_dir.join("jarzynski.json"));
    assert_eq!(env["kind"], "jarzynski");
    let dev = env["payload"]["deviation"].as_f64().unwrap();
    assert!(dev < 1e-6, "deviation {dev}");

    let manifest = read_json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["config"]["truncation"]["n_max"], 64);
    assert_eq!(manifest["config"]["filter"]["eta"], 0.1);
    assert!(manifest["artifact_version"].as_str().unwrap().starts_with("ionwork "));
    let hash = manifest["config_hash"].as_str().unwrap();
    let csv = std::fs::read_to_string(out_dir.join("jarzynski.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), format!("# config_hash: {hash}"));
    assert_eq!(env["manifest"]["config_hash"], hash);
}

#[test]
fn filter_suppresses_other_levels() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["filter", "--config", &recipe("filter.json"), "--out", dir.path().to_str().unwrap(), "--svg"]);
    let csv = std::fs::read_to_string(dir.path().join("filter.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash: "));
    assert_eq!(lines.next().unwrap(), "n,N,p_dark");
    let mut seen = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let (n, cycles, p): (usize, usize, f64) = (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap());
        if cycles == 10 {
            seen += 1;
            if n == 3 {
                assert!(p >= 0.999, "n=3: {p}");
            } else {
                assert!(p < 0.05, "n={n}: {p}");
            }
        }
    }
    assert_eq!(seen, 13);
    let svg = std::fs::read_to_string(dir.path().join("filter.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn protocol_runs_are_byte_identical_and_rerunnable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"ramp": {"omega_initial": 1, "omega_final": 3, "tau": 0.05}, "thermal": {"nbar": 1},
            "protocol": {"samples": 3000}}"#,
    );
    let (a, b, c, d) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"), dir.path().join("d"));
    let cfg = cfg.to_str().unwrap();
    run_ok(&["protocol", "--config", cfg, "--out", a.to_str().unwrap(), "--seed", "11"]);
    run_ok(&["protocol", "--config", cfg, "--out", b.to_str().unwrap(), "--seed", "11"]);
    assert_eq!(dir_snapshot(&a), dir_snapshot(&b));

    // The resolved config alone reproduces every output.
    let resolved = a.join("config.resolved.json");
    run_ok(&["protocol", "--config", resolved.to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert_eq!(dir_snapshot(&a), dir_snapshot(&c));

    run_ok(&["protocol", "--config", cfg, "--out", d.to_str().unwrap(), "--seed", "12"]);
    assert_ne!(
        std::fs::read(a.join("protocol.csv")).unwrap(),
        std::fs::read(d.join("protocol.csv")).unwrap()
    );
    let header = std::fs::read_to_string(a.join("protocol.csv")).unwrap();
    assert_eq!(header.lines().nth(1).unwrap(), "shot,n_true,n_meas,m_true,m_meas,w,weight");
}

#[test]
fn format_flag_limits_outputs() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["bath", "--config", &recipe("bath.json"), "--out", dir.path().to_str().unwrap(), "--format", "csv"]);
    let names: Vec<String> = dir_snapshot(dir.path()).into_iter().map(|f| f.0).collect();
    assert_eq!(names, ["bath.csv", "config.resolved.json", "manifest.json"]);
    let csv = std::fs::read_to_string(dir.path().join("bath.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "q_over_hw,p");
}

#[test]
fn schemas_of_remaining_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let fast = write_config(
        dir.path(),
        r#"{"ramp": {"omega_initial": 1, "omega_final": 3, "tau": 0.05}, "thermal": {"nbar": 1}, "convention": "mrad"}"#,
    );
    let fast = fast.to_str().unwrap();
    for (cmd, file, header) in [
        ("transitions", "transitions.csv", "m,n,p"),
        ("work-dist", "workdist.csv", "w_over_hw0,p"),
        ("crooks", "crooks.csv", "w_over_hw0,p_forward,p_backward_minus_w,beta_w_minus_delta_f"),
    ] {
        let out = dir.path().join(cmd);
        run_ok(&[cmd, "--config", fast, "--out", out.to_str().unwrap()]);
        let csv = std::fs::read_to_string(out.join(file)).unwrap();
        assert_eq!(csv.lines().nth(1).unwrap(), header, "{cmd}");
        let env = read_json(&out.join(file.replace(".csv", ".json")));
        assert!(env["payload"].is_object(), "{cmd}");
    }
    let crooks = read_json(&dir.path().join("crooks/crooks.json"));
    assert!(crooks["payload"]["crooks_max_log_error"].as_f64().unwrap() < 1e-8);
}
