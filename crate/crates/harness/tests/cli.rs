use std::path::Path;
use std::process::{Command, Output};

fn miniamp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_miniamp")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `(alpha, se_mse)` pairs of one series from CSV output.
fn se_column(csv: &[u8], series: &str) -> Vec<(f64, f64)> {
    let mut r = csv::Reader::from_reader(csv);
    r.records()
        .map(|r| r.unwrap())
        .filter(|r| &r[2] == series && &r[7] == "se_mse")
        .map(|r| (r[6].parse().unwrap(), r[8].parse().unwrap()))
        .collect()
}

#[test]
fn unknown_key_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "name = \"x\"\nkind = \"se_sweep\"\n[model]\nrhoo = 0.3\n");
    let out = miniamp(&["se", "sweep", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("rhoo"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_one() {
    let out = miniamp(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
    assert_eq!(miniamp(&["figures", "1", "--bogus"]).status.code(), Some(1));
    assert_eq!(miniamp(&["figures", "7"]).status.code(), Some(1));
    assert_eq!(miniamp(&["--help"]).status.code(), Some(0));
}

#[test]
fn wrong_subcommand_for_kind_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", "name = \"s\"\nkind = \"se_sweep\"\n[geometry]\nalpha = [1.0]\n");
    let out = miniamp(&["cluster", "run", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("se_sweep"), "{}", stderr(&out));
}

#[test]
fn missing_config_exits_one() {
    assert_eq!(miniamp(&["amp", "run", "/nonexistent/cfg.toml"]).status.code(), Some(1));
}

#[test]
fn single_batch_sweep_equals_offline() {
    let dir = tempfile::tempdir().unwrap();
    let alphas = [0.4, 0.8, 1.3];
    let list = alphas.map(|a| a.to_string()).join(", ");
    let one = write(
        dir.path(),
        "one.toml",
        &format!("name = \"one\"\nkind = \"se_sweep\"\n[model]\nrho = 0.3\ndelta = 1e-4\n[geometry]\nalpha_b = [{list}]\nnum_batches = 1\n"),
    );
    let off = write(
        dir.path(),
        "off.toml",
        &format!("name = \"off\"\nkind = \"se_sweep\"\n[model]\nrho = 0.3\ndelta = 1e-4\n[geometry]\nalpha = [{list}]\n"),
    );
    let a = miniamp(&["se", "sweep", &one]);
    let b = miniamp(&["se", "sweep", &off]);
    assert!(a.status.success() && b.status.success(), "{} {}", stderr(&a), stderr(&b));
    let mini = se_column(&a.stdout, "mini");
    let offline = se_column(&b.stdout, "offline");
    assert_eq!(mini.len(), alphas.len());
    assert_eq!(mini, offline);
}

#[test]
fn json_output_carries_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", "name = \"s\"\nkind = \"se_sweep\"\n[geometry]\nalpha = [1.0]\n");
    let out_path = dir.path().join("nested/out.json");
    let out = miniamp(&["se", "sweep", &cfg, "--format", "json", "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out_path).unwrap()).unwrap();
    let hash = v["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 16);
    assert!(v["rows"].as_array().unwrap().iter().all(|r| r["config_hash"] == hash));
}

#[test]
fn figure_two_writes_both_panels() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("fig2");
    let out = miniamp(&["figures", "2", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    for stem in ["fig2_left", "fig2_right"] {
        let text = std::fs::read_to_string(out_dir.join(format!("{stem}.csv"))).unwrap();
        assert!(text.starts_with("config_hash,experiment,series,seed,param,batch,alpha,metric,value,stderr,n,theory\n"));
        assert!(text.lines().count() > 10);
    }
}

/// Slow: three panels with 10 seeds at N = 2000.
#[test]
#[ignore = "runs the full desk-scale figure 1 (several minutes)"]
fn figure_one_writes_three_panels() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("fig1");
    let out = miniamp(&["figures", "1", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut names: Vec<_> = std::fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names, ["fig1_center.csv", "fig1_left.csv", "fig1_right.csv"]);
}

#[test]
fn output_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "g.toml",
        "name = \"g\"\nkind = \"glm_stream\"\nseeds = [0, 1, 2, 3, 4]\n[model]\nrho = 0.3\ndelta = 1e-6\n\
         [geometry]\nn = 200\nalpha_b = [0.5]\nalpha_max = 2.0\n[algorithm]\nreference_curves = false\n",
    );
    let one = miniamp(&["amp", "run", &cfg, "--threads", "1"]);
    let three = miniamp(&["amp", "run", &cfg, "--threads", "3"]);
    let again = miniamp(&["amp", "run", &cfg, "--threads", "3"]);
    assert!(one.status.success(), "{}", stderr(&one));
    assert_eq!(one.stdout, three.stdout);
    assert_eq!(three.stdout, again.stdout);
    let shifted = miniamp(&["amp", "run", &cfg, "--seed", "10"]);
    assert_ne!(one.stdout, shifted.stdout);
}
