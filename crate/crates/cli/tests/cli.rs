use std::path::Path;
use std::process::{Command, Output};

fn riskscreen(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskscreen")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_then_all_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let data_s = data.to_str().unwrap();
    let o = riskscreen(&["synth", "--n", "300", "--seed", "4", "--output", data_s], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("wrote 10 tables"));

    let config = data.join("riskscreen.toml");
    let o = riskscreen(&["all", "--config", config.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = data.join("out");
    for f in ["manifest.json", "table1.csv", "sweep.csv", "cohort.csv", "models/race_aware.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let first = std::fs::read(out.join("manifest.json")).unwrap();

    let o = riskscreen(&["report", "--config", config.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(out.join("manifest.json")).unwrap(), first);
}

#[test]
fn csv_sources_and_output_override() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = riskscreen(
        &["synth", "--n", "300", "--format", "csv", "--no-extended", "--output", data.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(data.join("DEMO_G.csv").is_file());
    assert!(!data.join("MCQ_G.csv").exists());

    let elsewhere = dir.path().join("elsewhere");
    let config = data.join("riskscreen.toml");
    let o = riskscreen(
        &["all", "--unweighted", "--config", config.to_str().unwrap(), "--output", elsewhere.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(elsewhere.join("manifest.json").is_file());
}

#[test]
fn bad_config_exits_with_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "data_sources = []\nmodel_a = \"nope\"\n[reward]\nr = 0.5\n").unwrap();
    let o = riskscreen(&["all", "--config", config.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains("data_sources"), "{err}");
    assert!(err.contains("nope"), "{err}");
    assert!(err.contains("0.5"), "{err}");
}

#[test]
fn stage_without_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskscreen(&["fit"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--config"));
}
