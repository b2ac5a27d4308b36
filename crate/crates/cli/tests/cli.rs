use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_trackmppi");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("spawn")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Small oval so a closed-loop lap finishes in a few simulated seconds.
fn small_track(dir: &Path) -> PathBuf {
    let o = run(dir, &["track-gen", "--straight", "4", "--radius", "2.5", "--run-dir", "track"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join("track/centerline.json")
}

fn episode(dir: &Path, track: &Path, extra: &str) -> PathBuf {
    let p = dir.join("episode.json");
    let text = format!(
        r#"{{"track":{:?},"target_speed":4.0,"laps":1,"time_limit":30.0{extra}}}"#,
        track.to_str().unwrap()
    );
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn help_and_version_exit_zero() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["--help"])), 0);
    assert_eq!(code(&run(d.path(), &["--version"])), 0);
    assert_eq!(code(&run(d.path(), &["no-such-command"])), 1);
}

#[test]
fn track_gen_writes_centerline_and_map() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["track-gen", "--run-dir", "tg"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = d.path().join("tg");
    for f in ["manifest.json", "centerline.json", "world_costmap.json", "world_costmap.f32"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let line = trackmppi::Centerline::from_json_file(out.join("centerline.json")).unwrap();
    let map = trackmppi::io::read_grid(out.join("world_costmap.json")).unwrap();
    // Cell centers sit at most half a diagonal from any point.
    let bound = map.resolution() / line.half_width;
    for v in &line.vertices {
        assert!(map.lookup(v[0], v[1]) <= bound);
    }
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "track-gen");
    assert_eq!(manifest["config"]["oval"]["radius"], 3.8);
}

#[test]
fn track_gen_rejects_zero_radius() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["track-gen", "--radius", "0", "--run-dir", "tg"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("radius"), "{}", stderr(&o));
}

#[test]
fn timestamped_run_dirs_do_not_collide() {
    let d = tempfile::tempdir().unwrap();
    for _ in 0..2 {
        assert_eq!(code(&run(d.path(), &["track-gen", "--out", "runs"])), 0);
    }
    let n = fs::read_dir(d.path().join("runs")).unwrap().count();
    assert_eq!(n, 2);
}

#[test]
fn non_empty_run_dir_is_refused() {
    let d = tempfile::tempdir().unwrap();
    fs::create_dir(d.path().join("busy")).unwrap();
    fs::write(d.path().join("busy/x"), "x").unwrap();
    assert_eq!(code(&run(d.path(), &["track-gen", "--run-dir", "busy"])), 1);
}

#[test]
fn unknown_override_key_lists_valid_keys() {
    let d = tempfile::tempdir().unwrap();
    let cfg = configs().join("oval_episode.json");
    let o = run(d.path(), &["simulate", "--config", cfg.to_str().unwrap(), "--set", "provider.latncy=0.1"]);
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    assert!(e.contains("latncy") && e.contains("latency"), "{e}");
}

#[test]
fn unknown_config_file_key_is_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("bad.json");
    fs::write(&p, r#"{"track":"t.json","target_speed":5,"colour":1}"#).unwrap();
    let o = run(d.path(), &["simulate", "--config", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn simulate_completes_a_lap() {
    let d = tempfile::tempdir().unwrap();
    let track = small_track(d.path());
    let cfg = episode(d.path(), &track, "");
    let o = run(d.path(), &["simulate", "--config", cfg.to_str().unwrap(), "--run-dir", "sim"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = json(&d.path().join("sim/summary.json"));
    assert_eq!(summary["laps"], 1);
    assert_eq!(summary["completed"], true);
    let csv = fs::read_to_string(d.path().join("sim/episode.csv")).unwrap();
    assert!(csv.lines().count() > 100);

    let o = run(
        d.path(),
        &["plot", "--log", "sim/episode.csv", "--track", track.to_str().unwrap(), "--run-dir", "plot"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = fs::read_to_string(d.path().join("plot/trajectory.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}

#[test]
fn failed_episode_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let track = small_track(d.path());
    let cfg = episode(d.path(), &track, "");
    let o = run(
        d.path(),
        &["simulate", "--config", cfg.to_str().unwrap(), "--set", "time_limit=0.5", "--run-dir", "sim"],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(d.path().join("sim/episode.csv").exists());
}

#[test]
fn sweep_writes_one_row_per_target_and_direction() {
    let d = tempfile::tempdir().unwrap();
    let track = small_track(d.path());
    let cfg = episode(d.path(), &track, "");
    let o = run(
        d.path(),
        &[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "time_limit=0.5",
            "--targets",
            "3,4",
            "--directions",
            "ccw,cw",
            "--run-dir",
            "sw",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(d.path().join("sw/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5, "{csv}");
    assert!(lines[1..].iter().all(|l| l.contains("FAILURE")), "{csv}");
}

#[test]
fn sweep_rejects_bad_direction() {
    let d = tempfile::tempdir().unwrap();
    let cfg = configs().join("oval_episode.json");
    let o = run(d.path(), &["sweep", "--config", cfg.to_str().unwrap(), "--targets", "5", "--directions", "up"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn dataset_and_ablate_from_shipped_configs() {
    let d = tempfile::tempdir().unwrap();
    let ds = configs().join("oval_dataset.json");
    let o = run(d.path(), &["dataset", "--config", ds.to_str().unwrap(), "--set", "pose_count=3", "--run-dir", "ds"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let poses = fs::read_to_string(d.path().join("ds/poses.csv")).unwrap();
    assert_eq!(poses.lines().count(), 4);

    let ab = configs().join("oval_ablate.json");
    let o = run(d.path(), &["ablate", "--config", ab.to_str().unwrap(), "--set", "ablation.block=16", "--run-dir", "ab"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let score = json(&d.path().join("ab/score.json"));
    assert!(score["min_score"].as_f64().unwrap() <= score["baseline"].as_f64().unwrap() + 1e-12);
    assert!(d.path().join("ab/sensitivity.pgm").exists());
}

#[test]
fn replay_reproduces_outputs_byte_for_byte() {
    let d = tempfile::tempdir().unwrap();
    let ab = configs().join("oval_ablate.json");
    let o = run(d.path(), &["ablate", "--config", ab.to_str().unwrap(), "--set", "ablation.block=16", "--run-dir", "a"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(d.path(), &["replay", "a/manifest.json", "--run-dir", "b"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["sensitivity.json", "sensitivity.f32", "sensitivity.pgm", "score.json"] {
        let a = fs::read(d.path().join("a").join(f)).unwrap();
        let b = fs::read(d.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let ma = json(&d.path().join("a/manifest.json"));
    let mb = json(&d.path().join("b/manifest.json"));
    assert_eq!(ma["config"], mb["config"]);

    let track = small_track(d.path());
    let cfg = episode(d.path(), &track, "");
    let o = run(
        d.path(),
        &["simulate", "--config", cfg.to_str().unwrap(), "--set", "time_limit=1", "--run-dir", "s1"],
    );
    assert_eq!(code(&o), 2);
    let o = run(d.path(), &["replay", "s1/manifest.json", "--run-dir", "s2"]);
    assert_eq!(code(&o), 2);
    assert_eq!(
        fs::read(d.path().join("s1/episode.csv")).unwrap(),
        fs::read(d.path().join("s2/episode.csv")).unwrap()
    );
}
