use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn macrohrl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_macrohrl"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("MACROHRL_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const TINY: &str = r#"
workers = 1

[hierarchy]
hidden = [16]

[[schedule.stage]]
name = "warm"
difficulty = 1
map = "small"
ppo = "default"
iterations = 2
episodes_per_iter = 2
max_ticks = 600

[[schedule.stage]]
name = "next"
difficulty = 2
map = "small"
ppo = "default"
reward = "score"
iterations = 1
episodes_per_iter = 2
max_ticks = 600
"#;

#[test]
fn full_pipeline_and_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = tmp.path().join("exp.toml");
    fs::write(&cfg, TINY).unwrap();
    let c = cfg.to_str().unwrap();

    ok(&macrohrl(&["--config", c, "gen-replays", "--games", "12"], &out));
    let manifest = fs::read_to_string(out.join("replays/manifest.tsv")).unwrap();
    assert_eq!(manifest.lines().count(), 2 + 12);
    assert!(out.join("replays/game_0011.log").exists());

    ok(&macrohrl(&["--config", c, "mine"], &out));
    assert!(fs::read_to_string(out.join("macros.txt")).unwrap().lines().count() > 1);
    assert!(out.join("macro_report.tsv").exists() && out.join("expert_stats.toml").exists());

    ok(&macrohrl(&["--config", c, "train"], &out));
    let curve = fs::read_to_string(out.join("train/curve.csv")).unwrap();
    assert!(curve.starts_with("# schema macrohrl-curve v1\n"));
    assert_eq!(curve.lines().count(), 2 + 3);
    assert!(out.join("train/stages/1-next/best/manifest.toml").exists());
    assert!(out.join("train.config.toml").exists());

    // A second invocation finds every stage done and leaves the curve alone.
    let again = macrohrl(&["--config", c, "train"], &out);
    ok(&again);
    assert!(String::from_utf8_lossy(&again.stderr).lines().all(|l| !l.contains("iteration")));
    assert_eq!(fs::read_to_string(out.join("train/curve.csv")).unwrap(), curve);

    let best = out.join("train/stages/1-next/best");
    ok(&macrohrl(
        &["--config", c, "evaluate", "--checkpoint", best.to_str().unwrap(), "--games", "3", "--levels", "1,2"],
        &out,
    ));
    let eval = fs::read_to_string(out.join("eval.csv")).unwrap();
    assert_eq!(eval.lines().count(), 2 + 2);
    assert!(eval.lines().nth(2).unwrap().starts_with("1,3,"));
}

#[test]
fn replay_generation_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&macrohrl(&["gen-replays", "--games", "3", "--seed", "5"], a.path()));
    ok(&macrohrl(&["gen-replays", "--games", "3", "--seed", "5"], b.path()));
    for f in ["manifest.tsv", "game_0000.log", "game_0002.log"] {
        assert_eq!(
            fs::read(a.path().join("replays").join(f)).unwrap(),
            fs::read(b.path().join("replays").join(f)).unwrap()
        );
    }
}

#[test]
fn manifest_outcomes_match_the_logs() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&macrohrl(&["gen-replays", "--games", "6", "--opponent", "3"], tmp.path()));
    let dir = tmp.path().join("replays");
    let manifest = fs::read_to_string(dir.join("manifest.tsv")).unwrap();
    let mut listed = Vec::new();
    for row in manifest.lines().skip(2) {
        let cols: Vec<&str> = row.split('\t').collect();
        assert_eq!(cols[2], "3");
        listed.push(cols[3].to_string());
        // The log's own end record, read independently of the manifest.
        let log = fs::read_to_string(dir.join(cols[0])).unwrap();
        let end: Vec<&str> = log.lines().last().unwrap().split('\t').collect();
        assert_eq!(end[2], "end");
        assert_eq!(end[3], cols[3]);
        assert_eq!(end[0], cols[4]);
    }
    assert_eq!(listed.len(), 6);
}

#[test]
fn smoke_curriculum_runs_quickly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let cfg = out.join("smoke.toml");
    fs::write(&cfg, "curriculum = \"smoke\"\nworkers = 1\n").unwrap();
    let c = cfg.to_str().unwrap();
    ok(&macrohrl(&["--config", c, "gen-replays", "--games", "10"], out));
    ok(&macrohrl(&["--config", c, "mine"], out));
    let t = std::time::Instant::now();
    ok(&macrohrl(&["--config", c, "train"], out));
    let secs = t.elapsed().as_secs_f64();
    let curve = fs::read_to_string(out.join("train/curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 2 + 3);
    assert!(secs < 60.0, "smoke training took {secs:.1}s");
}

#[test]
fn evaluation_tables_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["evaluate", "--baseline", "random-primitive", "--games", "3", "--levels", "1,2", "--workers", "1"];
    ok(&macrohrl(&args, a.path()));
    ok(&macrohrl(&args, b.path()));
    let ta = fs::read_to_string(a.path().join("eval.csv")).unwrap();
    assert_eq!(ta, fs::read_to_string(b.path().join("eval.csv")).unwrap());
    for row in ta.lines().skip(2) {
        let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((cols[5] + cols[6] + cols[7] - 1.0).abs() < 1e-5);
        assert_eq!(cols[2] + cols[3] + cols[4], cols[1]);
    }
}

#[test]
fn baselines_write_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&macrohrl(
        &["evaluate", "--baseline", "random-primitive", "--games", "2", "--levels", "3", "--workers", "1"],
        tmp.path(),
    ));
    let eval = fs::read_to_string(tmp.path().join("eval.csv")).unwrap();
    assert!(eval.starts_with("# schema macrohrl-eval v1\nlevel,games,wins,ties,losses"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    // Usage and configuration errors.
    assert_eq!(macrohrl(&["train", "--bogus"], out).status.code(), Some(2));
    assert_eq!(macrohrl(&["--config", "/no/such.toml", "mine"], out).status.code(), Some(2));
    let bad = out.join("bad.toml");
    fs::write(&bad, "curriculum = \"marathon\"\n").unwrap();
    assert_eq!(macrohrl(&["--config", bad.to_str().unwrap(), "train"], out).status.code(), Some(2));
    let env = Command::new(env!("CARGO_BIN_EXE_macrohrl"))
        .args(["mine", "--out"])
        .arg(out)
        .env("MACROHRL_MINING__TOP_K", "\"many\"")
        .output()
        .unwrap();
    assert_eq!(env.status.code(), Some(2));

    // Missing or malformed data.
    assert_eq!(macrohrl(&["mine"], out).status.code(), Some(3));
    assert_eq!(macrohrl(&["train"], out).status.code(), Some(3));
    fs::create_dir_all(out.join("replays")).unwrap();
    fs::write(out.join("replays/x.log"), "not a replay\n").unwrap();
    assert_eq!(macrohrl(&["mine"], out).status.code(), Some(3));
    assert_eq!(
        macrohrl(&["evaluate", "--checkpoint", out.join("none").to_str().unwrap()], out).status.code(),
        Some(3)
    );

    // Mining that yields nothing fails explicitly.
    let strict = out.join("strict.toml");
    fs::write(&strict, "[mining]\nmin_support = 100000\n").unwrap();
    let other = out.join("other");
    ok(&macrohrl(&["gen-replays", "--games", "2"], &other));
    let none = macrohrl(&["--config", strict.to_str().unwrap(), "mine"], &other);
    assert_eq!(none.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&none.stderr).contains("no macro-actions"));
}
