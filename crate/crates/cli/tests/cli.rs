use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const TWO_STATE: &str = r#"{"states":["a","b"],"P":[[0.5,0.5],[0.5,0.5]],"s":[1,1],"nu":["0.5","0.5"]}"#;
const THREE_STATE: &str =
    r#"{"states":["0","1","2"],"P":[[0.2,0.5,0.3],[0.4,0.4,0.2],[0.3,0.3,0.4]],"s":[0.6,0.5,0.6],"nu":[0.3,0.4,0.3]}"#;
const W_CHAIN: &str = r#"{"states":["u","v"],"P":[[0.7,0.3],[0.4,0.6]],"s":[0.5,0.6],"nu":[0.5,0.5]}"#;
const BAD_ATOM: &str = r#"{"states":["a","b"],"P":[[0.9,0.1],[0.5,0.5]],"s":[1,1],"nu":[0.5,0.5]}"#;
const INDEP: &str = r#"{"family":"INDEP","f":{"kind":"LINEAR","a":1,"b":0}}"#;

fn modal_protocol(sizes: &str) -> String {
    format!(
        r#"{{"id":"modal","mode":{{"kind":"MODAL","n":100}},"process":{INDEP},"reps":40,
            "bandwidth":{{"kind":"LOCAL","c0":1.0}},"base_seed":11,"sizes":{sizes}}}"#
    )
}

fn nullrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nullrec")).args(args).env_remove("NULLREC_THREADS").output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn out_dir(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn stderr_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

#[test]
fn moments_check_agrees_with_enumeration() {
    let tmp = TempDir::new().unwrap();
    let chain = write(tmp.path(), "two.json", TWO_STATE);
    let o = nullrec(&["moments-check", "--chain", &chain, "--g", "1,0", "--m", "4"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<f64>> =
        text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 4);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], (i + 1) as f64);
        assert!(r[3] <= 1e-10, "{r:?}");
    }
}

#[test]
fn missing_input_is_config_error_without_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(tmp.path(), "run");
    let missing = tmp.path().join("nope.json");
    let o = nullrec(&["clt", "--protocol", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "ConfigParse");
    assert!(!out.exists());
}

#[test]
fn module_errors_have_distinct_codes() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(tmp.path(), "run");
    let bad = write(tmp.path(), "bad.json", BAD_ATOM);
    let o = nullrec(&["moments-check", "--chain", &bad, "--g", "1,0", "--m", "1", "--out", out.to_str().unwrap()]);
    let e = stderr_json(&o);
    assert_eq!(e["error"], "MinorizationViolated");
    assert_eq!(o.status.code(), Some(4));
    assert!(!out.exists());

    let chain = write(tmp.path(), "two.json", TWO_STATE);
    let o = nullrec(&["moments-check", "--chain", &chain, "--g", "1,0", "--m", "9"]);
    assert_eq!(stderr_json(&o)["error"], "OrderTooLarge");
    assert_eq!(o.status.code(), Some(11));
}

#[test]
fn clt_writes_one_summary_row_per_size() {
    let tmp = TempDir::new().unwrap();
    let proto = write(tmp.path(), "p.json", &modal_protocol("[100, 200, 300]"));
    let out = out_dir(tmp.path(), "run");
    let o = nullrec(&["clt", "--protocol", &proto, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "protocol_id,size,reps,admitted,ks_distance,mean,sd");
    assert_eq!(lines.len(), 4);
    for (line, size) in lines[1..].iter().zip(["100", "200", "300"]) {
        assert_eq!(line.split(',').nth(1), Some(size));
    }
    let reps = fs::read_to_string(out.join("replications_200.csv")).unwrap();
    assert_eq!(reps.lines().count(), 41);
    let meta: Value = serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["version"], nullrec::VERSION);
    assert_eq!(meta["seeds"]["base_seed"], 11);
    assert_eq!(meta["config"]["experiment"]["sizes"].as_array().unwrap().len(), 3);
    assert!(meta["trend"]["rows"].is_array());
}

#[test]
fn outputs_are_reproducible_across_runs_and_threads() {
    let tmp = TempDir::new().unwrap();
    let proto = write(tmp.path(), "p.json", &modal_protocol("[150]"));
    let a = out_dir(tmp.path(), "a");
    let b = out_dir(tmp.path(), "b");
    let o = nullrec(&["clt", "--protocol", &proto, "--out", a.to_str().unwrap(), "--threads", "1"]);
    assert!(o.status.success());
    let o = nullrec(&["clt", "--protocol", &proto, "--out", b.to_str().unwrap(), "--threads", "4"]);
    assert!(o.status.success());
    for f in ["summary.csv", "replications_150.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let spec = write(tmp.path(), "s.json", INDEP);
    for d in ["c", "d"] {
        let dir = out_dir(tmp.path(), d);
        let o = nullrec(&["simulate", "--spec", &spec, "--n", "300", "--halfwidth", "0.5", "--seed", "9", "--out", dir.to_str().unwrap()]);
        assert!(o.status.success());
    }
    for f in ["dataset.csv", "trajectory.csv", "metadata.json"] {
        let c = fs::read(tmp.path().join("c").join(f)).unwrap();
        let d = fs::read(tmp.path().join("d").join(f)).unwrap();
        if f == "metadata.json" {
            let strip = |v: &[u8]| {
                let mut v: Value = serde_json::from_slice(v).unwrap();
                v["config"]["common"]["out"] = Value::Null;
                v
            };
            assert_eq!(strip(&c), strip(&d));
        } else {
            assert_eq!(c, d, "{f}");
        }
    }
}

#[test]
fn seed_override_changes_replications() {
    let tmp = TempDir::new().unwrap();
    let proto = write(tmp.path(), "p.json", &modal_protocol("[100]"));
    let a = out_dir(tmp.path(), "a");
    let b = out_dir(tmp.path(), "b");
    assert!(nullrec(&["clt", "--protocol", &proto, "--out", a.to_str().unwrap()]).status.success());
    assert!(nullrec(&["clt", "--protocol", &proto, "--out", b.to_str().unwrap(), "--seed", "12"]).status.success());
    let ra = fs::read_to_string(a.join("replications_100.csv")).unwrap();
    let rb = fs::read_to_string(b.join("replications_100.csv")).unwrap();
    assert_ne!(ra, rb);
}

#[test]
fn simulate_chain_and_product() {
    let tmp = TempDir::new().unwrap();
    let x = write(tmp.path(), "x.json", THREE_STATE);
    let w = write(tmp.path(), "w.json", W_CHAIN);
    let out = out_dir(tmp.path(), "run");
    let o = nullrec(&["simulate", "--chain", &x, "--chain-w", &w, "--n", "200", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(lines.next(), Some("t,x,w,y"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 201);
    let ones = rows.iter().filter(|r| r[3] == "1").count();
    let meta: Value = serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["regenerations"].as_u64().unwrap() as usize, ones.saturating_sub(1));
}

#[test]
fn estimate_curve_round_trips_reals() {
    let tmp = TempDir::new().unwrap();
    let spec = write(tmp.path(), "s.json", INDEP);
    let out = out_dir(tmp.path(), "run");
    let o = nullrec(&[
        "estimate", "--spec", &spec, "--n", "5000", "--grid", "-1:1:3", "--h", "0.4", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let curve = fs::read_to_string(out.join("curve.csv")).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("x_eval,f_hat,h,sum_k,t_c,p_hat_c,studentized"));
    for line in lines {
        let h: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(h, 0.4);
    }
}

#[test]
fn autocov_and_embedded_print_tables() {
    let tmp = TempDir::new().unwrap();
    let x = write(tmp.path(), "x.json", THREE_STATE);
    let w = write(tmp.path(), "w.json", W_CHAIN);
    let o = nullrec(&["autocov", "--chain", &x, "--g", "1,-0.5,2", "--lags", "3"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with('-') || l.chars().next().unwrap().is_ascii_digit()).count(), 7);

    let out = out_dir(tmp.path(), "emb");
    let o = nullrec(&[
        "embedded", "--chain", &x, "--chain-w", &w, "--gx", "1,0,0.5", "--gw", "1,2", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("embedded.csv")).unwrap();
    for row in table.lines().skip(1) {
        let sum: f64 = row.split(',').skip(1).map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }
    let compound = fs::read_to_string(out.join("compound.csv")).unwrap();
    for row in compound.lines().skip(1) {
        let v: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert!((v[1] - v[3]).abs() <= v[2] + 1e-12 * v[3].abs().max(1.0));
    }
}
