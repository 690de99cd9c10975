//! Runs the `poresim` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn poresim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poresim"))
        .args(args)
        .env_remove("PORESIM_LOG")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn gen_net(dir: &Path, kind: &str, size: usize) -> String {
    let path = dir.join(format!("{kind}-{size}.txt"));
    let p = path.to_str().unwrap().to_owned();
    let out = poresim(&["gen-net", "--kind", kind, "--size", &size.to_string(), "--seed", "4", "--out", &p]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    p
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn gen_net_then_validate_passes() {
    let dir = TempDir::new().unwrap();
    let net = gen_net(dir.path(), "random-tangent", 200);
    let out = poresim(&["validate", "--network", &net]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
}

#[test]
fn gen_net_chain_to_stdout() {
    let out = poresim(&["gen-net", "--kind", "chain", "--size", "3"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("3 balls, 2 arcs"));
}

#[test]
fn drain_lists_largest_balls() {
    let dir = TempDir::new().unwrap();
    let net = gen_net(dir.path(), "grid3d", 3);
    let full = poresim(&["drain", "--network", &net, "--saturation", "1"]);
    assert_eq!(code(&full), 0);
    assert_eq!(stdout(&full).lines().count(), 27);

    let bad = poresim(&["drain", "--network", &net, "--saturation", "1.5"]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn simulate_writes_hourly_csv() {
    let dir = TempDir::new().unwrap();
    let net = gen_net(dir.path(), "random-tangent", 100);
    let cfg = write_config(
        dir.path(),
        "scn.json",
        &format!(
            r#"{{
                "network": "{net}",
                "t_end_hours": 3,
                "dom_placement": {{"type": "uniform_concentration", "total": 0.2895}},
                "mb_placement": {{"type": "spots", "count": 20, "total": 0.104}},
                "voxel_edge_um": 24,
                "seed": 1
            }}"#
        ),
    );
    let csv = dir.path().join("out.csv");
    let out = poresim(&["simulate", "--config", &cfg, "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "time_h,mb,dom,som,fom,co2,mb_pct,dom_pct,som_pct,fom_pct,co2_pct");
    assert_eq!(lines.len(), 5);
    for (k, line) in lines[1..].iter().enumerate() {
        let t: f64 = line.split(',').next().unwrap().parse().unwrap();
        assert_eq!(t, k as f64);
    }

    // same inputs, same bytes
    let again = dir.path().join("again.csv");
    poresim(&["simulate", "--config", &cfg, "--out", again.to_str().unwrap()]);
    assert_eq!(fs::read(&csv).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn simulate_cli_overrides_reach_the_scenario() {
    let out = poresim(&[
        "simulate",
        "--preset",
        "paper-2021",
        "--scheme",
        "explicit",
        "--coupling",
        "sync",
        "--dt-diff",
        "0.5",
        "--hours",
        "2",
        "--print-config",
    ]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["scheme"], "explicit-sync");
    assert_eq!(v["dt_diffusion"], 0.5);
    assert_eq!(v["t_end_hours"], 2.0);
    assert!(v["t_end_days"].is_null());
}

#[test]
fn config_errors_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"t_end_hours": 1, "no_such_field": 3}"#);
    assert_eq!(code(&poresim(&["simulate", "--config", &cfg])), 2);
    assert_eq!(code(&poresim(&["simulate", "--preset", "nonexistent"])), 2);
    assert_eq!(code(&poresim(&["simulate", "--scheme", "implicit", "--coupling", "sync"])), 2);
    let missing = dir.path().join("missing.txt");
    assert_eq!(code(&poresim(&["validate", "--network", missing.to_str().unwrap()])), 2);
}

#[test]
fn step_collapse_exits_with_3() {
    let dir = TempDir::new().unwrap();
    let net = gen_net(dir.path(), "chain", 10);
    // a single ball holds all DOM and the coupled step overshoots wildly
    let cfg = write_config(
        dir.path(),
        "collapse.json",
        &format!(
            r#"{{
                "network": "{net}",
                "scheme": "explicit-sync",
                "dt_diffusion": 3600,
                "dt_transform": 3600,
                "max_backtracks": 2,
                "t_end_hours": 1,
                "dom_placement": {{"type": "single_ball", "ball": 0, "total": 1.0}}
            }}"#
        ),
    );
    let csv = dir.path().join("collapse.csv");
    let out = poresim(&["simulate", "--config", &cfg, "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    // the partial output ends with an error marker
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.lines().last().unwrap().starts_with("# error:"), "{text}");
}

#[test]
fn solver_divergence_exits_with_3() {
    let dir = TempDir::new().unwrap();
    let net = gen_net(dir.path(), "grid3d", 6);
    let cfg = write_config(
        dir.path(),
        "cg.json",
        &format!(
            r#"{{
                "network": "{net}",
                "t_end_hours": 1,
                "dt_diffusion": 600,
                "dt_transform": 600,
                "cg_tol": 1e-14,
                "cg_max_iter": 1,
                "dom_placement": {{"type": "single_ball", "ball": 0, "total": 1.0}}
            }}"#
        ),
    );
    let out = poresim(&["simulate", "--config", &cfg]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn profile_then_calibrate_recovers_the_contact_factor() {
    let dir = TempDir::new().unwrap();
    let net = gen_net(dir.path(), "random-tangent", 300);
    let reference = dir.path().join("ref.txt");
    let out = poresim(&[
        "profile",
        "--network",
        &net,
        "--contact-factor",
        "0.75",
        "--planes",
        "40",
        "--hours",
        "0.25",
        "--z-max",
        "4",
        "--out",
        reference.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&reference).unwrap().lines().count(), 40);

    let out = poresim(&[
        "--threads",
        "1",
        "calibrate",
        "--network",
        &net,
        "--reference",
        reference.to_str().unwrap(),
        "--alpha-min",
        "0.6",
        "--alpha-max",
        "0.9",
        "--hours",
        "0.25",
        "--z-max",
        "4",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (a, c) = l.split_once(',').unwrap();
            (a.parse().unwrap(), c.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 7);
    rows.sort_by(|x, y| y.1.total_cmp(&x.1));
    assert!((rows[0].0 - 0.75).abs() < 1e-9, "{text}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("best alpha 0.75"));
}
