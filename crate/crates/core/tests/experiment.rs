use std::fs;
use std::path::Path;

use bellman_core::experiment::{run_experiment, ExperimentConfig};
use bellman_core::model_free::read_episode_csv;

fn config(body: &str, dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::from_toml_str(body).unwrap();
    c.output_dir = dir.to_path_buf();
    c
}

const TINY: &str = r#"
[env]
name = "cart-pole"

[learner]
episodes = 5

[experiment]
operators = ["bellman"]
seeds = [1]
smoothing_window = 2
"#;

#[test]
fn one_cell_writes_one_row_per_episode() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_experiment(&config(TINY, dir.path()), Some(1)).unwrap();
    assert!(run.failures().is_empty());
    let logs = read_episode_csv(fs::File::open(dir.path().join("cells/bellman-seed1.csv")).unwrap()).unwrap();
    assert_eq!(logs.len(), 5);
    assert_eq!(logs.iter().map(|l| l.episode_index).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    // Cart-pole pays +1 per step.
    assert!(logs.iter().all(|l| l.total_reward == l.steps as f64));

    let aggregate = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    let mut lines = aggregate.lines();
    assert_eq!(lines.next(), Some("episode,bellman"));
    assert_eq!(lines.count(), 5);
    let second: f64 = aggregate.lines().nth(2).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    let want = (logs[0].total_reward + logs[1].total_reward) / 2.0;
    assert!((second - want).abs() < 1e-12);
}

#[test]
fn summary_and_header_layout() {
    let body = TINY.replace(r#"operators = ["bellman"]"#, r#"operators = ["bellman", "consistent", "advantage"]"#).replace("seeds = [1]", "seeds = [1, 2]");
    let dir = tempfile::tempdir().unwrap();
    let c = config(&body, dir.path());
    run_experiment(&c, None).unwrap();
    let aggregate = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    assert_eq!(aggregate.lines().next(), Some("episode,bellman,consistent,advantage"));
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("env,operator,seeds,final_quartile_mean,seed_std,failed_cells,config_hash"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[0], "cart-pole");
        assert_eq!(fields[2], "2");
        assert_eq!(fields[5], "0");
        assert_eq!(fields[6], c.hash());
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let read_all = |dir: &Path| -> Vec<(String, Vec<u8>)> {
        let mut files = vec![];
        for name in ["aggregate.csv", "summary.csv", "cells/bellman-seed1.csv"] {
            files.push((name.to_string(), fs::read(dir.join(name)).unwrap()));
        }
        files
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&config(TINY, a.path()), Some(1)).unwrap();
    run_experiment(&config(TINY, b.path()), Some(3)).unwrap();
    assert_eq!(read_all(a.path()), read_all(b.path()));
}

#[test]
fn failing_cell_does_not_stop_the_others() {
    let body = r#"
[env]
name = "mountain-car"

[learner]
episodes = 30
beta.constant = 1e308

[experiment]
operators = ["bellman", "advantage"]
seeds = [1]
"#;
    let dir = tempfile::tempdir().unwrap();
    let run = run_experiment(&config(body, dir.path()), Some(2)).unwrap();
    let failures = run.failures();
    assert_eq!(failures.len(), 1, "{failures:?}");
    assert_eq!(failures[0].0, "advantage-seed1");
    assert!(dir.path().join("cells/bellman-seed1.csv").exists());
    assert!(!dir.path().join("cells/advantage-seed1.csv").exists());
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert_eq!(fs::read_to_string(dir.path().join("aggregate.csv")).unwrap().lines().next(), Some("episode,bellman"));
}

#[test]
fn committed_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["mountain-car", "cart-pole", "acrobot"] {
        let c = ExperimentConfig::load(root.join(format!("{name}.toml"))).unwrap();
        assert_eq!(c.env.name(), name);
        assert_eq!(c.seeds, vec![1, 2, 3, 4, 5]);
        assert_eq!(c.learner.episodes, 2000);
        assert_eq!(c.operators.len(), 3);
    }
}
