use proptest::prelude::*;
use softboltz_cli::config::Settings;
use softboltz_cli::output::ReadTable;
use std::path::Path;
use std::process::Command;

const SMALL: [&str; 8] = [
    "--set",
    "grid.points_per_axis=16",
    "--set",
    "time.max_steps=3",
    "--set",
    "kernel.n_theta=8",
    "--threads",
    "1",
];

fn run(out: &Path, args: &[&str]) -> i32 {
    let o = Command::new(env!("CARGO_BIN_EXE_softboltz"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    o.status.code().unwrap()
}

fn simulate(out: &Path, extra: &[&str]) -> i32 {
    let mut a = vec!["simulate"];
    a.extend_from_slice(&SMALL);
    a.extend_from_slice(extra);
    run(out, &a)
}

#[test]
fn configuration_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("missing.conf");
    assert_eq!(run(d.path(), &["simulate", "--config", missing.to_str().unwrap()]), 2);
    assert_eq!(simulate(d.path(), &["--set", "grid.points_per_axis=47"]), 2);
    assert_eq!(simulate(d.path(), &["--set", "grid.no_such_key=1"]), 2);
    assert_eq!(simulate(d.path(), &["--set", "grid.extent"]), 2);
    assert_eq!(run(d.path(), &["no_such_command"]), 2);
    let tail = ["experiment", "theorem2", "--set", "initial.kind=power_tail", "--set", "initial.delta=5"];
    assert_eq!(run(d.path(), &tail), 2);
}

#[test]
fn simulate_writes_settings_and_run() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(simulate(d.path(), &["--set", "initial.kind=maxwellian", "--set", "experiment.label=m"]), 0);
    let conf = std::fs::read_to_string(d.path().join("effective.conf")).unwrap();
    assert!(conf.contains("grid.points_per_axis = 16"));
    let file = d.path().join("run_m.csv");
    let text = std::fs::read_to_string(&file).unwrap();
    assert!(text.lines().next().unwrap().starts_with("# "));
    let t = ReadTable::read(&file).unwrap();
    assert_eq!(t.rows.len(), 4);
    for c in ["d_l1", "d_l12", "h_rel", "dissipation"] {
        for x in t.column(c).unwrap() {
            assert!(x.abs() <= 1e-10, "{c} {x}");
        }
    }
    let mass = t.column("mass").unwrap();
    assert!(mass.iter().all(|m| (m - mass[0]).abs() <= 1e-14));
}

#[test]
fn effective_conf_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(simulate(a.path(), &["--set", "time.integrator=rk2"]), 0);
    let conf = a.path().join("effective.conf");
    assert_eq!(run(b.path(), &["simulate", "--config", conf.to_str().unwrap()]), 0);
    let ra = std::fs::read_to_string(a.path().join("run_default.csv")).unwrap();
    let rb = std::fs::read_to_string(b.path().join("run_default.csv")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn overrides_beat_the_file() {
    let d = tempfile::tempdir().unwrap();
    let conf = d.path().join("in.conf");
    std::fs::write(&conf, "# comment\ngrid.points_per_axis = 20\ntime.max_steps = 2\n").unwrap();
    let out = d.path().join("out");
    let code = run(
        &out,
        &["simulate", "--config", conf.to_str().unwrap(), "--set", "time.max_steps=1", "--threads", "1"],
    );
    assert_eq!(code, 0);
    let s = Settings::from_file(&out.join("effective.conf")).unwrap();
    assert_eq!(s.points_per_axis, 20);
    assert_eq!(s.max_steps, 1);
    assert_eq!(s.threads, 1);
}

#[test]
fn verify_is_deterministic_and_reportable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["verify", "--suite", "elementary", "--set", "experiment.samples=2000", "--seed", "7"];
    assert_eq!(run(a.path(), &args), 0);
    assert_eq!(run(b.path(), &args), 0);
    let ra = std::fs::read(a.path().join("oracle_elementary.csv")).unwrap();
    let rb = std::fs::read(b.path().join("oracle_elementary.csv")).unwrap();
    assert_eq!(ra, rb);
    assert!(a.path().join("summary_verify_elementary.txt").exists());
    let t = ReadTable::read(&a.path().join("oracle_elementary.csv")).unwrap();
    assert_eq!(t.header[0], "id");
    assert_eq!(t.rows.len(), 1);
    assert_eq!(run(a.path(), &["report"]), 0);
    assert_eq!(run(a.path(), &["verify", "--suite", "no_such_suite"]), 2);
}

#[test]
fn report_needs_csv_files() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(d.path(), &["report"]), 2);
    assert_eq!(simulate(d.path(), &[]), 0);
    assert_eq!(run(d.path(), &["report"]), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn settings_text_round_trips(
        half in 8usize..40,
        extent in 1.0f64..20.0,
        gamma in -4.0f64..-0.01,
        caps in prop::collection::vec(0.1f64..100.0, 0..4),
        seed in any::<u64>(),
        keep in any::<bool>(),
    ) {
        let mut s = Settings::default();
        s.points_per_axis = 2 * half;
        s.extent = extent;
        s.gamma = gamma;
        s.bn_sequence = caps;
        s.seed = seed;
        s.keep_fields = keep;
        let mut back = Settings::default();
        back.apply_text(&s.to_text()).unwrap();
        prop_assert_eq!(back.to_text(), s.to_text());
        prop_assert_eq!(back.extent.to_bits(), extent.to_bits());
        prop_assert_eq!(back.gamma.to_bits(), gamma.to_bits());
        prop_assert_eq!(back.seed, seed);
    }
}
