use std::path::Path;
use std::process::{Command, Output};

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "model": { "encoder_dim": 16, "mlp_dim": 16, "latent_dim": 4, "num_q": 2 },
        "planner": { "iterations": 2, "population": 16, "prior_samples": 4, "elites": 4 },
        "optim": { "batch_size": 8 },
        "data": { "num_clips": 4, "rollouts_per_clip": 1, "clip_min_frames": 20, "clip_max_frames": 30 },
        "tracker": { "steps": 40, "seed_steps": 10, "checkpoint_every": 0 },
        "puppeteer": { "steps": 16, "seed_steps": 4, "checkpoint_every": 0 },
        "task": { "episode_limit": 10 },
        "eval": { "episodes": 2, "gap_sweep": [0.1, 1.2] },
        "paths": {
            "out_dir": dir.join("out").to_str().unwrap(),
            "dataset": dir.join("data/offline.json").to_str().unwrap(),
            "tracker_checkpoint": dir.join("ckpt/tracker.json").to_str().unwrap(),
            "puppeteer_checkpoint": dir.join("ckpt/puppeteer.json").to_str().unwrap()
        }
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn run(cfg: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_puppeteer"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out_dir = dir.path().join("out");
    ok(&run(&cfg, &["gen-data"]));
    ok(&run(&cfg, &["train-tracker", "--seed", "7"]));
    let first = std::fs::read(out_dir.join("tracker_train.jsonl")).unwrap();
    ok(&run(&cfg, &["train-tracker", "--seed", "7"]));
    assert_eq!(first, std::fs::read(out_dir.join("tracker_train.jsonl")).unwrap());
    assert!(out_dir.join("tracker_metrics.json").exists());

    ok(&run(&cfg, &["train-puppeteer"]));
    let p1 = std::fs::read(out_dir.join("puppeteer_train.jsonl")).unwrap();
    ok(&run(&cfg, &["train-puppeteer"]));
    assert_eq!(p1, std::fs::read(out_dir.join("puppeteer_train.jsonl")).unwrap());

    ok(&run(&cfg, &["eval", "--mode", "all", "--sweep"]));
    let e1 = std::fs::read(out_dir.join("eval.jsonl")).unwrap();
    let csv = std::fs::read_to_string(out_dir.join("eval.csv")).unwrap();
    for label in ["hierarchical_plan", "hierarchical_policy_prior", "scripted_baseline"] {
        assert!(csv.contains(label), "{csv}");
    }
    let sweep = std::fs::read_to_string(out_dir.join("gap_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3, "{sweep}");
    ok(&run(&cfg, &["eval", "--mode", "all"]));
    assert_eq!(e1, std::fs::read(out_dir.join("eval.jsonl")).unwrap());

    let e_path = out_dir.join("eval.jsonl");
    let input = format!("ours:{}:{}", e_path.display(), e_path.display());
    ok(&run(&cfg, &["metrics", "naturalness", "--input", &input]));
    let nat = std::fs::read_to_string(out_dir.join("naturalness.csv")).unwrap();
    assert!(nat.starts_with("method,eplen@ckpt,eplen@ckpt_std,eplen,eplen_std,height,height_std"), "{nat}");

    ok(&run(&cfg, &["eval", "--mode", "plan", "--set", "task.gap_length=1.2"]));
    ok(&run(&cfg, &["plot", "learning", "--log", out_dir.join("tracker_train.jsonl").to_str().unwrap(), "--out", out_dir.join("learning.svg").to_str().unwrap()]));
    ok(&run(&cfg, &["plot", "trajectory", "--dump", e_path.to_str().unwrap(), "--out", out_dir.join("traj.svg").to_str().unwrap()]));
    assert!(std::fs::read_to_string(out_dir.join("traj.svg")).unwrap().starts_with("<svg"));

    let src = dir.path().join("ckpt/puppeteer.json");
    let ft = dir.path().join("ckpt/finetuned.json");
    ok(&run(
        &cfg,
        &[
            "finetune",
            "--set",
            "task.name=hurdles",
            "--set",
            &format!("paths.source_checkpoint={}", src.display()),
            "--set",
            &format!("paths.puppeteer_checkpoint={}", ft.display()),
        ],
    ));
    assert!(ft.exists());
    let log = std::fs::read_to_string(out_dir.join("finetune_train.jsonl")).unwrap();
    assert!(log.lines().next().unwrap().contains("\"phase\":\"source\""));
}

#[test]
fn tracking_metrics_match_a_recomputation_from_the_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    ok(&run(&cfg, &["metrics", "tracking", "--policy", "scripted"]));
    let out_dir = dir.path().join("out");
    let text = std::fs::read_to_string(out_dir.join("tracking_rollouts.jsonl")).unwrap();
    let (mut success, mut err, mut comic, mut n) = (0usize, 0.0, 0.0, 0usize);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let d: Vec<f64> = serde_json::from_value(v["distances"].clone()).unwrap();
        let r: Vec<f64> = serde_json::from_value(v["rewards"].clone()).unwrap();
        let expected = v["expected_steps"].as_u64().unwrap() as usize;
        if d.len() == expected && d.iter().all(|&x| x <= 0.5) {
            success += 1;
        }
        err += d.iter().sum::<f64>() / d.len() as f64;
        comic += r.iter().sum::<f64>();
        n += 1;
    }
    let mut rdr = std::fs::read_to_string(out_dir.join("tracking_metrics.csv")).unwrap();
    let row = rdr.split_off(rdr.find('\n').unwrap() + 1);
    let cols: Vec<&str> = row.trim().split(',').collect();
    assert_eq!(cols[0], "scripted");
    assert_eq!(cols[2].parse::<f64>().unwrap(), 100.0 * success as f64 / n as f64);
    assert_eq!(cols[3].parse::<f64>().unwrap(), err / n as f64);
    assert_eq!(cols[4].parse::<f64>().unwrap(), comic / n as f64);
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = run(&cfg, &["gen-data", "--set", "planner.horizn=3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("planner.horizn"));

    std::fs::write(dir.path().join("bad.json"), r#"{"planner": {"bogus": 1}}"#).unwrap();
    let out = run(&dir.path().join("bad.json"), &["gen-data"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let out = run(&cfg, &["finetune"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = run(&cfg, &["train-puppeteer"]);
    assert_eq!(out.status.code(), Some(1));
}
