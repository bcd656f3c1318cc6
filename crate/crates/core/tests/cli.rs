use std::fs;
use std::path::Path;
use std::process::Command;

use bevlift::io::read_bev;
use bevlift::pipeline::{preset_config, run_pipeline, PipelineConfig, BEV_FILE, MANIFEST_FILE, METRICS_FILE};
use bevlift::pooling::{compare_grids, EngineKind};
use bevlift::scene::ScenePreset;

fn bevlift(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bevlift")).args(args).output().unwrap()
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = bevlift(&["run", "--preset", "boxes", "--views", "2", "--out", path_arg(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for name in [BEV_FILE, METRICS_FILE, MANIFEST_FILE] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let text = fs::read_to_string(out.join(METRICS_FILE)).unwrap();
    assert!(text.starts_with("silog,abs_rel,sq_rel,log10,rmse,count\n"));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest["engine"], "sequential");
    assert_eq!(manifest["config"]["frames"], 2);
}

#[test]
fn worker_count_does_not_change_the_result() {
    let dir = tempfile::tempdir().unwrap();
    let mut grids = Vec::new();
    for workers in [1, 8] {
        let mut cfg = preset_config(ScenePreset::Boxes, 3, dir.path().join(format!("w{workers}")));
        cfg.scene.views = 2;
        cfg.engine = EngineKind::ScatterAdd;
        cfg.workers = workers;
        grids.push(run_pipeline(&cfg).unwrap().bev);
    }
    let diff = compare_grids(grids[1].data(), grids[0].data(), 1e-5, 1e-6);
    assert!(diff.within, "{diff:?}");
}

#[test]
fn manifest_reproduces_its_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let res = bevlift(&["run", "--preset", "random", "--seed", "4", "--out", path_arg(&first)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let second = dir.path().join("second");
    let manifest = first.join(MANIFEST_FILE);
    let res = bevlift(&["run", "--config", path_arg(&manifest), "--out", path_arg(&second)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(fs::read(first.join(BEV_FILE)).unwrap(), fs::read(second.join(BEV_FILE)).unwrap());
    assert_eq!(fs::read(first.join(METRICS_FILE)).unwrap(), fs::read(second.join(METRICS_FILE)).unwrap());
}

#[test]
fn failed_run_leaves_no_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    fs::create_dir_all(&out).unwrap();
    // a stale dump from an earlier run must not survive a failure
    fs::write(out.join(BEV_FILE), b"stale").unwrap();
    let bad_rig = dir.path().join("rig.json");
    fs::write(&bad_rig, "[{\"view_id\": 0}]").unwrap();
    let cfg = PipelineConfig { rig: Some(bad_rig), out_dir: out.clone(), ..Default::default() };
    assert!(run_pipeline(&cfg).is_err());
    for name in [BEV_FILE, METRICS_FILE, MANIFEST_FILE] {
        assert!(!out.join(name).exists(), "{name} left behind");
    }
}

#[test]
fn generated_scene_runs_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let res = bevlift(&["gen-scene", "--preset", "wall", "--views", "1", "--out", path_arg(&scene)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for name in ["rig.json", "poses.json", "cloud_0.bin", "cloud_1.bin", "config.json"] {
        assert!(scene.join(name).is_file(), "missing {name}");
    }
    let out = dir.path().join("run");
    let res = bevlift(&[
        "run",
        "--config",
        path_arg(&scene.join("config.json")),
        "--oracle-depth",
        "--out",
        path_arg(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let bev = read_bev(&out.join(BEV_FILE)).unwrap();
    assert_eq!(bev.shape(), (32, 128, 128));
    assert!(bev.data().iter().any(|&x| x != 0.0));
    let metrics = fs::read_to_string(out.join(METRICS_FILE)).unwrap();
    assert!(metrics.lines().nth(1).unwrap().starts_with("0,0,0,0,0,"), "{metrics}");
}

#[test]
fn bench_writes_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    let res = bevlift(&[
        "bench", "--points", "2000,4000", "--channels", "8", "--rows", "32", "--cols", "32", "--workers", "1,2", "--repeats",
        "3", "--out", path_arg(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "engine,points,channels,rows,cols,workers,median_ns,throughput_pps");
    let rows: Vec<_> = lines.collect();
    assert!(rows.len() >= 3);
    for row in &rows {
        assert_eq!(row.split(',').count(), 8, "{row}");
    }
    let summary = fs::read_to_string(out.join("bench_summary.csv")).unwrap();
    assert!(summary.lines().count() >= 2);
}

#[test]
fn metrics_subcommand_reads_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.csv");
    fs::write(&pairs, "pred,gt\n10,8\n20,25\n").unwrap();
    let res = bevlift(&["metrics", "--pairs", path_arg(&pairs)]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    assert!((row[1] - 0.225).abs() < 1e-12);
    assert_eq!(row[5], 2.0);
}

#[test]
fn usage_errors_exit_with_code_two() {
    let res = bevlift(&["run", "--engine", "warp_drive"]);
    assert_eq!(res.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.csv");
    fs::write(&pairs, "1,0\n").unwrap();
    let res = bevlift(&["metrics", "--pairs", path_arg(&pairs)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("index 0"));
}
