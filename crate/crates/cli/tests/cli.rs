use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn altrelay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_altrelay"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_exits_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let missing = tmp.path().join("absent.json");
    for args in [
        vec!["rate", "--config", missing.to_str().unwrap(), "--out", out.to_str().unwrap()],
        vec!["dof", "--out", out.to_str().unwrap()],
    ] {
        let o = altrelay(&args);
        assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
        assert!(!out.exists());
    }
}

#[test]
fn odd_antenna_count_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "m3.json", r#"{"m": 3}"#);
    let out = tmp.path().join("out");
    let o = altrelay(&["rate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("M must be even"));
    assert!(!out.exists());
}

#[test]
fn out_of_range_zeta_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "zeta.json", r#"{"armijo": {"zeta": 1.5}}"#);
    let o = altrelay(&["rate", "--config", &cfg, "--out", tmp.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("zeta"));
}

#[test]
fn errors_are_listed_together() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "m = 5\ntrials = 0\n");
    let o = altrelay(&["rate", "--config", &cfg, "--out", tmp.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("M must be even") && msg.contains("trials must be at least 1"), "{msg}");
}

#[test]
fn default_config_is_accepted() {
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.json");
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = altrelay(&["rate", "--config", cfg, "--trials", "4", "--snr", "0,10", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("rate/proposed_naive_M4.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("scheme,M,snr_db,ergodic_rate_bits,outage_prob,"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("rate/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["armijo"]["zeta"], 0.2);
    assert_eq!(manifest["config"]["epsilon_outage"], 0.1);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "iter2.json",
        r#"{"scheme": "proposed_iterII", "scenario": "block_per_slot", "m": 2, "trials": 3, "window_pairs": 1}"#,
    );
    let mut csvs = Vec::new();
    for (run, workers) in [("a", "1"), ("b", "2")] {
        let out = tmp.path().join(run);
        let o = altrelay(&["outage", "--config", &cfg, "--snr", "5,15", "--workers", workers, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        csvs.push((
            fs::read(out.join("outage/proposed_iterII_M2.csv")).unwrap(),
            fs::read(out.join("outage/proposed_iterII_M2_trials.csv")).unwrap(),
        ));
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn dof_writes_slope_in_range() {
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/dof_m4.json");
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = altrelay(&["dof", "--config", cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("dof/dof.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let eta: f64 = row.last().unwrap().parse().unwrap();
    assert!((2.7..=3.3).contains(&eta), "eta {eta}");
    assert!(out.join("dof/proposed_naive_M4.csv").exists());
}

#[test]
fn gradcheck_table_is_within_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = altrelay(&["gradcheck", "--seed", "7", "--trials", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("gradcheck/gradcheck.csv")).unwrap();
    // 20 components for each of 2 antenna counts and 3 SNRs
    assert_eq!(csv.lines().count(), 1 + 20 * 6);
    for line in csv.lines().skip(1) {
        let err: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(err < 1e-5, "{line}");
    }
}

#[test]
fn converge_needs_an_optimized_scheme() {
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.json");
    let tmp = tempfile::tempdir().unwrap();
    let o = altrelay(&["converge", "--config", cfg, "--out", tmp.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn converge_writes_aggregate_and_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "it1.json", r#"{"scheme": "proposed_iterI", "m": 2}"#);
    let out = tmp.path().join("out");
    let o = altrelay(&["converge", "--config", &cfg, "--trials", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let agg = fs::read_to_string(out.join("converge/proposed_iterI_M2.csv")).unwrap();
    assert!(agg.starts_with("iter,mean_bits,d10"));
    let traces = fs::read_to_string(out.join("converge/proposed_iterI_M2_traces.csv")).unwrap();
    assert!(traces.lines().skip(1).all(|l| l.contains(",slow,")));
}

#[test]
fn dump_channels_writes_both_formats() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ch.json", r#"{"scenario": "block_per_two_slots", "m": 2, "window_pairs": 1}"#);
    let out = tmp.path().join("out");
    let o = altrelay(&["dump-channels", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("dump-channels/channels_M2.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 4);
    let csv = fs::read_to_string(out.join("dump-channels/channels_M2.csv")).unwrap();
    assert!(csv.starts_with("slot,matrix,row,col,re,im"));
}
