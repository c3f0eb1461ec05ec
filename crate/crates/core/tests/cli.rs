use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mvdelay::io::{read_ensemble_csv, sha256_hex, MANIFEST_NAME};

const LINEAR: &str = "[model]
kind = \"linear_meanfield\"
a_self = -0.5
b_delay = 0.3
c_mean = 0.4

[grid]
m = 8
dt = 0.125
T = 1.0

[solver]
particles = 40
max_iters = 5
seed = 11
macro_stride = 2
";

fn mvdelay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvdelay")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(mvdelay(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(mvdelay(&["picard", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    let bad = write_config(tmp.path(), "bad.toml", &LINEAR.replace("dt = 0.125", "dt = 0.0"));
    let o = mvdelay(&["picard", "--config", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.dt"));
}

#[test]
fn simulate_then_w2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", LINEAR);
    let a = tmp.path().join("a.csv").display().to_string();
    let b = tmp.path().join("b.csv").display().to_string();
    assert!(mvdelay(&["simulate", "--config", &cfg, "--out", &a]).status.success());
    assert!(mvdelay(&["simulate", "--config", &cfg, "--seed", "12", "--out", &b]).status.success());
    let ens = read_ensemble_csv(&fs::read_to_string(&a).unwrap(), 1.0).unwrap();
    assert_eq!(ens.len(), 40);

    let same = mvdelay(&["w2", &a, &a, "--metric", "sup"]);
    assert!(same.status.success());
    assert_eq!(stdout(&same).trim(), "0");
    for metric in ["sup", "l2"] {
        let o = mvdelay(&["w2", &a, &b, "--metric", metric]);
        assert!(o.status.success());
        let text = stdout(&o);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1);
        let d: f64 = lines[0].parse().unwrap();
        assert!(d > 0.0 && d.is_finite());
    }
}

#[test]
fn picard_replays_and_manifest_matches_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", LINEAR);
    let runs: Vec<_> = (0..2)
        .map(|i| {
            let dir = tmp.path().join(format!("run{i}"));
            assert!(mvdelay(&["picard", "--config", &cfg, "--out", &dir.display().to_string()]).status.success());
            dir
        })
        .collect();
    for name in ["picard.csv", "ensemble.csv", MANIFEST_NAME] {
        assert_eq!(fs::read(runs[0].join(name)).unwrap(), fs::read(runs[1].join(name)).unwrap(), "{name}");
    }
    let manifest: toml::Table = fs::read_to_string(runs[0].join(MANIFEST_NAME)).unwrap().parse().unwrap();
    assert_eq!(manifest["command"].as_str(), Some("picard"));
    let files = manifest["files"].as_table().unwrap();
    assert_eq!(files.len(), 2);
    for (name, digest) in files {
        assert_eq!(digest.as_str().unwrap(), sha256_hex(&fs::read(runs[0].join(name)).unwrap()));
    }
    let picard = fs::read_to_string(runs[0].join("picard.csv")).unwrap();
    assert!(picard.starts_with("iter,flow_distance,path_distance\n"));
}

#[test]
fn particles_feed_check_bounds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", LINEAR);
    let dir = tmp.path().join("p").display().to_string();
    assert!(mvdelay(&["particles", "--config", &cfg, "--out", &dir]).status.success());
    let o = mvdelay(&["check-bounds", &dir]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bound_name,lhs,stderr,rhs,margin,pass"));
    assert!(lines.count() >= 2);
}

#[test]
fn stiff_galerkin_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "g.toml",
        "[model]\nkind = \"porous_medium\"\n\n[grid]\nm = 4\ndt = 0.25\nT = 0.5\n\n[solver]\nparticles = 2\n\n[galerkin]\nn_modes = 8\n",
    );
    let dir = tmp.path().join("g").display().to_string();
    assert_eq!(mvdelay(&["galerkin", "--config", &cfg, "--out", &dir]).status.code(), Some(2));
}

#[test]
fn conditions_hold_for_the_shipped_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", LINEAR);
    let o = mvdelay(&["check-conditions", "--config", &cfg, "--trials", "100"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("condition,worst_margin,checks,violations\n"));
}
