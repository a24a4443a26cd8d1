use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
scenario = "V2"
pretrain_episodes = 2
direct_episodes = 2
iterations = 2
epochs = 1
steps = 10
rollouts = 1
eval_episodes = 1

[forward_model]
epochs = 2

[inverse_model]
epochs = 2
"#;

fn ugatlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ugatlab"))
        .args(args)
        .env_remove("UGATLAB_OUT")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn help_exits_zero_with_usage() {
    let o = ugatlab(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("Usage") && text.contains("train-ugat") && text.contains("gap-report"));
}

#[test]
fn misspelled_config_key_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "alhpa = 0.3\n");
    let o = ugatlab(&[
        "train-ugat",
        "--config",
        &cfg,
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(
        err.starts_with("ugatlab: error[config]:") && err.contains("alhpa"),
        "{err}"
    );
}

#[test]
fn nested_unknown_key_and_bad_values_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    for text in [
        "[sim]\ntickk = 0.1\n",
        "rollout_epsilon = 2.0\n",
        "seeds = []\n",
    ] {
        let cfg = write_config(tmp.path(), text);
        let o = ugatlab(&[
            "train-direct",
            "--config",
            &cfg,
            "--out",
            tmp.path().to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(1), "{text}: {}", stderr(&o));
    }
    let o = ugatlab(&["train-direct", "--scenario", "V9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ugatlab: error[usage]:"));
}

#[test]
fn train_ugat_writes_the_run_layout_and_gap_report_rebuilds_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("runs");
    let o = ugatlab(&[
        "--quiet",
        "train-ugat",
        "--config",
        &cfg,
        "--seeds",
        "1,2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    for seed in [1, 2] {
        let dir = out.join("ugat-edl").join("V2").join(format!("seed-{seed}"));
        for file in [
            "manifest.json",
            "training_curve.csv",
            "grounding_audit.csv",
            "alpha_trace.csv",
            "metrics.csv",
            "trajectory.csv",
            "vehicles.csv",
        ] {
            assert!(
                dir.join(file).is_file(),
                "missing {}",
                dir.join(file).display()
            );
        }
    }
    let written = std::fs::read_to_string(out.join("gap_report.csv")).unwrap();
    assert!(out.join("summary.txt").is_file());

    let rebuilt = tmp.path().join("rebuilt");
    let o = ugatlab(&[
        "gap-report",
        out.to_str().unwrap(),
        "--out",
        rebuilt.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        std::fs::read_to_string(rebuilt.join("gap_report.csv")).unwrap(),
        written
    );
    assert!(String::from_utf8_lossy(&o.stdout).contains("seeds=1,2"));

    // A damaged seed directory is listed and skipped, with a nonzero exit.
    std::fs::remove_file(out.join("ugat-edl/V2/seed-2/metrics.csv")).unwrap();
    let o = ugatlab(&["gap-report", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed-2"));
    assert!(
        String::from_utf8_lossy(&o.stdout).contains("seeds=1\n")
            || String::from_utf8_lossy(&o.stdout).contains("seeds=1 ")
    );
}

#[test]
fn identical_invocations_give_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = ugatlab(&[
            "-q",
            "train-direct",
            "--config",
            &cfg,
            "--seeds",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let seed_dir = out.join("direct/V2/seed-3");
        let mut names: Vec<_> = std::fs::read_dir(&seed_dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        names.sort();
        files.push(
            names
                .iter()
                .map(|p| std::fs::read(p).unwrap())
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn demand_gen_writes_a_loadable_schedule() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("demand.txt");
    let o = ugatlab(&[
        "demand-gen",
        "--out",
        path.to_str().unwrap(),
        "--vehicles-per-hour",
        "600",
        "--duration",
        "600",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let schedule = ugatlab::sim::DemandSchedule::load(&path).unwrap();
    assert!(!schedule.is_empty());
}

#[test]
fn gradcheck_subcommand_passes() {
    let o = ugatlab(&["gradcheck", "--cases", "12"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 failed"));
}
