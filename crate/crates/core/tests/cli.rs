use std::process::Command;

fn stepnav(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_stepnav")).args(args).env_remove("STEPNAV_SEED").output().unwrap()
}

fn error_kind(out: &std::process::Output) -> String {
    assert!(!out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    v["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn missing_config_is_a_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = stepnav(&["simulate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(error_kind(&out), "invalid_config");
    let out = stepnav(&["simulate", "--config", "/nonexistent.toml", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(error_kind(&out), "io");
}

#[test]
fn bad_policy_and_config_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, stepnav::presets::adaptive_dvl().to_toml_string() + "\nbogus = 2\n").unwrap();
    let out = stepnav(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(error_kind(&out), "toml");

    std::fs::write(&cfg, stepnav::presets::adaptive_dvl().to_toml_string()).unwrap();
    let out = stepnav(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--policy",
        "warp:9",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(error_kind(&out), "invalid_config");
}

#[test]
fn seed_flag_changes_results_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = stepnav::presets::adaptive_dvl();
    c.duration_s = 10.0;
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, c.to_toml_string()).unwrap();
    let run = |seed: &str| {
        let out = dir.path().join(seed);
        let o =
            stepnav(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["seed"].as_u64().unwrap().to_string(), seed);
        std::fs::read(out.join("metrics.json")).unwrap()
    };
    assert_ne!(run("5"), run("6"));
}
