//! End-to-end runs of the `qkd-tha` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const HEADER: &str = "variant,distance_km,rate,l,m1_lower,mph1_upper,eph_upper,mu0,mu1,p_z,p_mu0,error";

fn qkd_tha(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qkd-tha"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("THA_QKD_THREADS", t),
        None => cmd.env_remove("THA_QKD_THREADS"),
    };
    cmd.output().unwrap()
}

fn run_config(dir: &Path, name: &str, text: &str, threads: Option<&str>) -> (Output, String) {
    let cfg = dir.join(format!("{name}.conf"));
    let out = dir.join(format!("{name}.csv"));
    fs::write(&cfg, text).unwrap();
    let o = qkd_tha(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], threads);
    (o, fs::read_to_string(&out).unwrap_or_default())
}

const SMALL: &str = "\
[scenario]
n_total = 1e10
distances_km = 0:60:30, 400
protocol = bb84, lt

[adversary]
delta_gap = 0, 1e-6

[optimizer]
grid_points = 3
max_passes = 1
";

#[test]
fn sweep_writes_ordered_deterministic_rows() {
    let dir = TempDir::new().unwrap();
    let (o1, csv1) = run_config(dir.path(), "a", SMALL, Some("1"));
    assert!(o1.status.success(), "{}", String::from_utf8_lossy(&o1.stderr));
    let (o2, csv2) = run_config(dir.path(), "b", SMALL, Some("2"));
    assert!(o2.status.success());
    assert_eq!(csv1, csv2);

    let lines: Vec<&str> = csv1.lines().collect();
    assert_eq!(lines[0], HEADER);
    assert_eq!(lines.len(), 1 + 4 * 4);
    let fields: Vec<Vec<&str>> = lines[1..].iter().map(|l| l.split(',').collect()).collect();
    let variants: Vec<&str> = fields.iter().step_by(4).map(|f| f[0]).collect();
    assert_eq!(variants, ["bb84;delta_gap=0.0", "bb84;delta_gap=1e-6", "lt;delta_gap=0.0", "lt;delta_gap=1e-6"]);
    for f in &fields {
        assert_eq!(f.len(), 12);
        assert_eq!(f[11], "");
        let rate: f64 = f[2].parse().unwrap();
        let mantissa = f[2].split('e').next().unwrap();
        assert_eq!(mantissa.trim_start_matches('-').len(), 18, "17 significant digits in {}", f[2]);
        if f[1] == "4.0000000000000000e2" {
            assert_eq!(rate, 0.0);
        } else if f[1] == "0.0000000000000000e0" {
            assert!(rate > 0.0);
        }
    }

    let stderr = String::from_utf8_lossy(&o1.stderr);
    assert!(stderr.contains("applications=14") && stderr.contains("applications=32"), "{stderr}");
    assert!(stderr.contains("wrote 16 rows"));
}

#[test]
fn empty_distance_list_gives_header_only() {
    let dir = TempDir::new().unwrap();
    let (o, csv) = run_config(dir.path(), "empty", "[scenario]\ndistances_km =\n", None);
    assert!(o.status.success());
    assert_eq!(csv, format!("{HEADER}\n"));
}

#[test]
fn config_errors_exit_one_and_name_the_key() {
    let dir = TempDir::new().unwrap();
    for (text, key) in [
        ("[channel]\neta_d = 1.5\n", "channel"),
        ("[scenario]\nprotocol = e91\n", "scenario.protocol"),
        ("[adversary]\nkappa = 1.1\n", "adversary.kappa"),
        ("[optimizer]\ngrid_points = 1\n", "optimizer"),
        ("[protocol]\nmu_0 = 0.5\n", "protocol.mu_0"),
    ] {
        let (o, _) = run_config(dir.path(), "bad", text, None);
        assert_eq!(o.status.code(), Some(1), "{text}");
        let stderr = String::from_utf8_lossy(&o.stderr);
        assert!(stderr.contains(key), "{text}: {stderr}");
    }
    let o = qkd_tha(&["run", "--out", dir.path().join("x.csv").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    let o = qkd_tha(&["run", "--config", "/nonexistent.conf", "--out", "-"], None);
    assert_eq!(o.status.code(), Some(1));
    let o = qkd_tha(&["run", "--preset", "fig4", "--out", "-"], None);
    assert_eq!(o.status.code(), Some(1));
    let o = qkd_tha(&["run", "--preset", "fig2", "--out", "-"], Some("0"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unwritable_output_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("ok.conf");
    fs::write(&cfg, "[scenario]\ndistances_km = 0\n").unwrap();
    let out = dir.path().join("missing").join("out.csv");
    let o = qkd_tha(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_overlays_preset() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("o.conf");
    fs::write(&cfg, "[scenario]\ndistances_km =\n").unwrap();
    let out = dir.path().join("o.csv");
    let o =
        qkd_tha(&["run", "--preset", "fig5", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert!(o.status.success());
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("10 variants x 0 distances"), "{stderr}");
    assert!(stderr.contains("budget asymptotic:lt;delta_gap=0.0"));
}

#[test]
fn preset_command_prints_the_scenario() {
    let o = qkd_tha(&["preset", "fig3"], None);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("p_d = 5e-6") && text.contains("n_total = 1e12"));
}
