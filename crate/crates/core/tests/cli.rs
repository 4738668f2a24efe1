use std::path::Path;
use std::process::Command;

fn physmotion(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_physmotion")).args(args).current_dir(dir).output().unwrap()
}

#[test]
fn dump_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = physmotion(&["dump-config"], dir.path());
    assert!(out.status.success());
    let cfg = physmotion::pipeline::config::Config::from_json_str(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(cfg, physmotion::pipeline::config::Config::default());
}

#[test]
fn synth_refine_eval() {
    let dir = tempfile::tempdir().unwrap();
    let synth = physmotion(&["synth", "--duration", "2", "--seed", "4", "-o", "obs.json", "--truth", "truth.json"], dir.path());
    assert!(synth.status.success(), "{}", String::from_utf8_lossy(&synth.stderr));
    let refine = physmotion(&["refine", "obs.json", "-o", "out.json", "--no-physics", "--subsample", "5", "--trace", "trace.csv"], dir.path());
    assert!(refine.status.success(), "{}", String::from_utf8_lossy(&refine.stderr));
    assert!(dir.path().join("trace.csv").exists());
    let eval = physmotion(&["eval", "out.json", "truth.json", "--json"], dir.path());
    assert!(eval.status.success());
    let report: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert!(report["mpjpe"].as_f64().unwrap() < 60.0, "{report}");
}

#[test]
fn invalid_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("w.json"), r#"{"w_e": -1}"#).unwrap();
    let synth = physmotion(&["synth", "--duration", "2", "-o", "obs.json"], dir.path());
    assert!(synth.status.success());
    for args in [
        &["refine", "obs.json", "-o", "x.json", "--weights", "w.json"][..],
        &["refine", "missing.json", "-o", "x.json"],
        &["refine", "obs.json", "-o", "x.json", "--subsample", "0"],
        &["synth", "--scene", "cartwheel", "-o", "y.json"],
    ] {
        let out = physmotion(args, dir.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
