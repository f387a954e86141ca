use std::path::Path;
use std::process::{Command, Output};

fn flowscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowscope"))
        .args(args)
        .env_remove("FLOWSCOPE_SEED")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_1() {
    let out = flowscope(&["bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn help_exits_0() {
    let out = flowscope(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    for sub in ["gen-data", "sweep-top1", "train", "mixed-sample", "shift-table", "plot"] {
        assert!(stdout(&out).contains(sub), "help lacks {sub}");
    }
}

#[test]
fn invalid_values_exit_1() {
    assert_eq!(flowscope(&["shift-table", "--shifts", "-1"]).status.code(), Some(1));
    assert_eq!(flowscope(&["sweep-top1", "--n", "0", "--d", "4"]).status.code(), Some(1));
    assert_eq!(flowscope(&["shift-table", "--steps", "many"]).status.code(), Some(1));
}

#[test]
fn missing_input_file_exits_2() {
    let out = flowscope(&["sweep-top1", "--data", "/nonexistent/points.csv", "--mc", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shift_table_reproduces_grid_percentages() {
    let out = flowscope(&["shift-table", "--steps", "50", "--shifts", "0.1,0.3,0.5,0.7,1.0,2.0,4.0", "--threshold", "0.2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut rows = text.lines();
    assert_eq!(rows.next(), Some("shift,steps,threshold,fraction,percent"));
    let percents: Vec<f64> = rows.map(|r| r.rsplit(',').next().unwrap().parse().unwrap()).collect();
    let expected = [72.0, 46.0, 34.0, 28.0, 22.0, 12.0, 6.0];
    for (got, want) in percents.iter().zip(expected) {
        assert!((got - want).abs() <= 2.0, "{got} vs {want}");
    }
}

#[test]
fn class_scale_top1_sweep_saturates() {
    let out = flowscope(&["sweep-top1", "--n", "1400", "--d", "4096", "--mc", "256", "--seed", "7", "--times", "0.1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let row = text.lines().nth(1).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let rec = rdr.records().next().unwrap().unwrap();
    let mean: f64 = rec[3].parse().unwrap();
    assert!(mean >= 0.95, "{row}");
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = path(dir.path(), "run.cfg");
    std::fs::write(&cfg, "# small table\nshift-table.steps=10\nshift-table.shifts=1\nglobal.seed=5\n").unwrap();
    let from_file = stdout(&flowscope(&["shift-table", "--config", &cfg]));
    assert_eq!(from_file.lines().nth(1), Some("1,10,0.2,0.3,30"));
    let overridden = stdout(&flowscope(&["shift-table", "--config", &cfg, "--steps", "20"]));
    assert_eq!(overridden.lines().nth(1), Some("1,20,0.2,0.25,25"));
}

#[test]
fn config_file_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = path(dir.path(), "bad.cfg");
    std::fs::write(&cfg, "shift-table.nonsense=3\n").unwrap();
    let out = flowscope(&["shift-table", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonsense"));
    std::fs::write(&cfg, "nosuchcommand.steps=3\n").unwrap();
    assert_eq!(flowscope(&["shift-table", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn seed_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |env: Option<&str>, seed: Option<&str>, name: &str| {
        let out = path(dir.path(), name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_flowscope"));
        cmd.args(["gen-data", "--n", "3", "--d", "2", "--out", &out]).env_remove("FLOWSCOPE_SEED");
        if let Some(s) = seed {
            cmd.args(["--seed", s]);
        }
        if let Some(v) = env {
            cmd.env("FLOWSCOPE_SEED", v);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(out).unwrap()
    };
    let from_env = run(Some("9"), None, "env.csv");
    assert_eq!(from_env, run(None, Some("9"), "flag.csv"));
    assert_ne!(from_env, run(None, None, "default.csv"));
    assert_eq!(run(Some("9"), Some("4"), "both.csv"), run(None, Some("4"), "four.csv"));
}

#[test]
fn train_sample_and_plot_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ring = path(d, "ring.csv");
    let model = path(d, "model.bin");
    let steps = [
        vec!["gen-data", "--kind", "ring", "--n", "4", "--seed", "1", "--out", &ring],
        vec!["train", "--data", &ring, "--model-out", &model, "--hidden", "16", "--time-dim", "8", "--class-dim", "4", "--steps", "50", "--batch-size", "32"],
    ];
    for s in &steps {
        assert!(flowscope(s).status.success(), "{s:?}");
    }
    let samples = flowscope(&["sample", "--model", &model, "--steps", "10", "--n-samples", "3", "--class", "2", "--terminal-only"]);
    assert!(samples.status.success());
    assert_eq!(stdout(&samples).lines().count(), 4);

    let traj = flowscope(&["sample", "--model", &model, "--steps", "10", "--n-samples", "1"]);
    let text = stdout(&traj);
    assert!(text.lines().nth(1).unwrap().contains("init"));
    assert_eq!(text.lines().count(), 1 + 11);

    let sweep = path(d, "loss.csv");
    let svg = path(d, "loss.svg");
    let eval = flowscope(&["eval-loss", "--data", &ring, "--model", &model, "--mc", "8", "--times", "0.1,0.5", "--out", &sweep, "--svg", &svg]);
    assert!(eval.status.success());
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let plotted = path(d, "plot.svg");
    assert!(flowscope(&["plot", "--input", &sweep, "--series", "1", "--out", &plotted]).status.success());
    let body = std::fs::read_to_string(&plotted).unwrap();
    assert_eq!(body.matches("<polyline").count(), 1);
    assert_eq!(flowscope(&["plot", "--input", &sweep, "--series", "9", "--out", &plotted]).status.code(), Some(1));
}

#[test]
fn every_subcommand_documents_its_flags() {
    let subs = [
        "gen-data", "sweep-target-mse", "sweep-top1", "sweep-dims", "train", "eval-loss", "sample", "mixed-sample", "resume",
        "shift-table", "plot",
    ];
    for sub in subs {
        let out = flowscope(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        let text = stdout(&out);
        for flag in ["--seed", "--workers", "--config", "--out", "[default: 0]"] {
            assert!(text.contains(flag), "{sub} help lacks {flag}");
        }
    }
}
