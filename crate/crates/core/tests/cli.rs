use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vanetsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vanetsim"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn small_sweep(out: &Path) -> Output {
    vanetsim(&[
        "sweep", "--protocol", "all", "--nodes", "10", "--sessions", "2", "--seeds", "1", "--duration", "60",
        "--grid", "3x3:400", "--workers", "1", "--out-dir", out.to_str().unwrap(),
    ])
}

#[test]
fn sweep_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(small_sweep(&a).status.success());
    assert!(small_sweep(&b).status.success());
    let csv = fs::read_to_string(a.join("metrics.csv")).unwrap();
    // header plus one row per protocol variant
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.starts_with("scenario_id,protocol,profile,nodes,sessions,seed,pdr,ae2ed_ms,nro,"));
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 1);
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?} differs");
    }
}

#[test]
fn run_writes_events_and_honours_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    fs::write(&cfg, "# tiny run\nprotocol = dymo\nprofile = mod\nnodes = 8\nsessions = 2\nduration = 40\ngrid = 3x3:300\n").unwrap();
    let out = dir.path().join("out");
    let o = vanetsim(&["run", "--config", cfg.to_str().unwrap(), "--seed", "4", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let events = fs::read_to_string(out.join("mod-dymo-n8-s2-seed4-events.csv")).unwrap();
    assert!(events.starts_with("time_s,event,node,packet_id,"));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.lines().nth(1).unwrap().starts_with("mod-dymo-n8-s2-seed4,dymo,mod,8,2,4,"));
}

#[test]
fn diagnose_prints_both_separations() {
    let o = vanetsim(&["diagnose", "--d-t0", "200", "--d1", "50", "--alpha", "120", "--d2", "50", "--beta", "150"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("obtuse-obtuse"), "{text}");
    assert!(text.contains("d_t1 (case)    268.301270"), "{text}");
    assert!(text.contains("d_t1 (exact)   268.924726"), "{text}");
}

#[test]
fn bad_input_exits_with_two() {
    let o = vanetsim(&["diagnose", "--d-t0", "200", "--d1", "50", "--alpha", "200", "--d2", "50", "--beta", "150"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    let o = vanetsim(&["run", "--nodes", "1", "--out-dir", "/nonexistent/never"]);
    assert_eq!(o.status.code(), Some(2));
    let o = vanetsim(&["sweep", "--protocol", "aodv"]);
    assert_eq!(o.status.code(), Some(2));
}
