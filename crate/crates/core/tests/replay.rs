use stepnav::io::{export_log, read_log, write_log, ReplaySource};
use stepnav::presets;
use stepnav::sim::runner::{feature_context, ground_truth, navigate, run_with_truth, RunOptions};
use stepnav::sim::StepSizePolicy;

#[test]
fn replayed_log_reproduces_simulation_bit_for_bit() {
    for mut c in [presets::adaptive_dvl(), presets::adaptive_gnss()] {
        c.duration_s = 30.0;
        c.dt = 0.01;
        let policy = StepSizePolicy::Fixed(c.dt);
        let sim = run_with_truth(&c, ground_truth(&c).unwrap(), &policy, 0, RunOptions::default()).unwrap();

        let mut buf = Vec::new();
        write_log(&mut buf, &export_log(&c, 0).unwrap()).unwrap();
        let rows = read_log(buf.as_slice(), "mem").unwrap();
        let mut src = ReplaySource::new(rows, &c).unwrap();
        let replay = navigate(
            &mut src,
            c.filter_config().unwrap(),
            &policy,
            feature_context(&c).unwrap(),
            c.dtau_ticks().unwrap(),
            RunOptions::default(),
        )
        .unwrap();
        assert_eq!(replay.metrics, sim.metrics);
    }
}

#[test]
fn coarser_replay_policy_runs_on_fine_log() {
    let mut c = presets::adaptive_dvl();
    c.duration_s = 20.0;
    c.dt = 0.002;
    let rows = export_log(&c, 0).unwrap();
    let mut src = ReplaySource::new(rows, &c).unwrap();
    let out = navigate(
        &mut src,
        c.filter_config().unwrap(),
        &StepSizePolicy::Fixed(0.04),
        feature_context(&c).unwrap(),
        c.dtau_ticks().unwrap(),
        RunOptions::default(),
    )
    .unwrap();
    assert_eq!(out.metrics.iterations, 500.0);
    assert!(out.metrics.mean_speed_error_mps < 0.1);
}
