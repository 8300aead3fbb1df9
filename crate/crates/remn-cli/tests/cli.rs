use std::fs;
use std::path::Path;
use std::process::Command;

fn remn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_remn"))
}

#[test]
fn synth_writes_frames_and_masks() {
    let dir = tempfile::tempdir().unwrap();
    let out = remn()
        .args(["synth", "--scenario", "plain", "--frames", "5", "--size", "64x64"])
        .args(["--seed", "3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    for t in 0..5 {
        let ppm = dir.path().join(format!("frames/{:06}.ppm", t));
        let pgm = dir.path().join(format!("masks/{:06}.pgm", t));
        assert!(ppm.exists() && pgm.exists());
        assert!(fs::read(&ppm).unwrap().starts_with(b"P6"));
        assert!(fs::read(&pgm).unwrap().starts_with(b"P5"));
    }
}

#[test]
fn synth_rejects_bad_scenario_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = remn()
        .args(["synth", "--scenario", "nope", "--frames", "5", "--size", "64x64", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_rejects_unaligned_size_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = remn()
        .args(["synth", "--scenario", "plain", "--frames", "5", "--size", "60x60", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn write_config(path: &Path, extra: &str) {
    fs::write(
        path,
        format!(
            "# test config\nscenario.name = plain\nscenario.frames = 10\n\
             scenario.size = 64x64\nseed = 5\n{}",
            extra
        ),
    )
    .unwrap();
}

#[test]
fn run_emits_json_report_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    write_config(&cfg, "");
    let out = remn().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let obj = v.as_object().unwrap();
    for field in [
        "j_mean",
        "f_mean",
        "jf_mean",
        "fps",
        "peak_bank",
        "redundancy",
        "per_frame_latency",
        "config",
    ] {
        assert!(obj.contains_key(field), "missing {}", field);
    }
    assert_eq!(obj["per_frame_latency"].as_array().unwrap().len(), 10);
}

#[test]
fn run_writes_outputs_and_eval_scores_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    write_config(&cfg, "");
    let run_out = dir.path().join("run");
    let out = remn()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&run_out)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run_out.join("report.json").exists());
    assert!(run_out.join("masks/000009.pgm").exists());

    let gt = dir.path().join("gt");
    let out = remn()
        .args(["synth", "--scenario", "plain", "--frames", "10", "--size", "64x64"])
        .args(["--seed", "5", "--out"])
        .arg(&gt)
        .output()
        .unwrap();
    assert!(out.status.success());

    let out = remn()
        .args(["eval", "--pred"])
        .arg(run_out.join("masks"))
        .arg("--gt")
        .arg(gt.join("masks"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let j = v["j_mean"].as_f64().unwrap();
    assert!(j > 0.5, "j_mean {}", j);
}

#[test]
fn run_csv_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    write_config(&cfg, "");
    let out = remn()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--report", "csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 12);
    assert!(text.lines().last().unwrap().starts_with("summary,"));
}

#[test]
fn run_policy_unbounded_grows_bank() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    write_config(&cfg, "scenario.frames = 30\n");
    let out = remn()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--policy", "interval:2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["peak_bank"].as_u64().unwrap() > 8);
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    write_config(&cfg, "bogus.key = 1\n");
    let out = remn().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_missing_dir_exits_nonzero() {
    let out = remn()
        .args(["eval", "--pred", "/nonexistent/a", "--gt", "/nonexistent/b"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_exits_2() {
    let out = remn().args(["run", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
