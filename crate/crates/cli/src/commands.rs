use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use macrohrl::config::{ConfigError, ExperimentConfig};
use macrohrl::curriculum::{self, run_schedule, CurriculumError, ScheduleRun};
use macrohrl::engine::{record_expert_game, to_text, DifficultyConfig, ReplayLog};
use macrohrl::hrl::{
    evaluate, load_hierarchy, mix_seed, random_macro_baseline, random_primitive_baseline, EnvConfig, EvalSummary,
    HrlError,
};
use macrohrl::mining::{mine_macros, parse_macro_file, write_macro_file, MacroAction, MiningError};
use macrohrl::rewards::{collect_expert_stats, ExpertStats, RewardKind};

use crate::{Baseline, Cli, CliError, Command};

pub const EVAL_SCHEMA: &str = "# schema macrohrl-eval v1";
pub const MANIFEST_SCHEMA: &str = "# schema macrohrl-replays v1";

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<HrlError> for CliError {
    fn from(e: HrlError) -> Self {
        match e {
            HrlError::Config(_) | HrlError::Topology(_) => CliError::Config(e.to_string()),
            HrlError::Checkpoint(_) => CliError::Data(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<CurriculumError> for CliError {
    fn from(e: CurriculumError) -> Self {
        match e {
            CurriculumError::Config(_) => CliError::Config(e.to_string()),
            CurriculumError::Hrl(h) => h.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<MiningError> for CliError {
    fn from(e: MiningError) -> Self {
        match e {
            MiningError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_output(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Defaults, then the config file, then `MACROHRL_*` variables, then command-line flags.
pub fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let text = match &cli.config {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = ExperimentConfig::from_toml_with_env(&text, std::env::vars())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    match &cli.command {
        Command::GenReplays { games, opponent } => {
            if let Some(g) = games {
                cfg.replays.games = *g;
            }
            if let Some(o) = opponent {
                cfg.replays.opponent = *o;
            }
        }
        Command::Evaluate { games, levels, .. } => {
            if let Some(g) = games {
                cfg.eval.games = *g;
            }
            if let Some(l) = levels {
                cfg.eval.levels = l.clone();
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    if cfg.workers > 0 {
        // Only fails if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
    }
    let name = match &cli.command {
        Command::GenReplays { .. } => "gen-replays",
        Command::Mine { .. } => "mine",
        Command::Train { .. } => "train",
        Command::Evaluate { .. } => "evaluate",
    };
    write_output(&cfg.out.join(format!("{name}.config.toml")), &cfg.to_toml())?;
    match cli.command {
        Command::GenReplays { .. } => gen_replays(&cfg),
        Command::Mine { replays } => mine(&cfg, &replays.unwrap_or_else(|| cfg.out.join("replays"))),
        Command::Train { macros, expert_stats } => train(
            &cfg,
            &macros.unwrap_or_else(|| cfg.out.join("macros.txt")),
            &expert_stats.unwrap_or_else(|| cfg.out.join("expert_stats.toml")),
        ),
        Command::Evaluate {
            checkpoint,
            baseline,
            macros,
            ..
        } => evaluate_cmd(&cfg, checkpoint, baseline, &macros.unwrap_or_else(|| cfg.out.join("macros.txt"))),
    }
}

/// Game `i` uses seed `seed + i`.
fn gen_replays(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = cfg.out.join("replays");
    let opponent = DifficultyConfig::level(cfg.replays.opponent).map_err(|e| CliError::Config(e.to_string()))?;
    let mut manifest = format!("{MANIFEST_SCHEMA}\nfile\tseed\topponent\toutcome\tticks\n");
    for i in 0..cfg.replays.games as u64 {
        let seed = cfg.seed.wrapping_add(i);
        let log = record_expert_game(&cfg.engine, seed, &opponent, cfg.replays.max_ticks)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let file = format!("game_{i:04}.log");
        write_output(&dir.join(&file), &to_text(&log))?;
        let outcome = log.end().map(|(o, _)| format!("{o:?}").to_lowercase()).unwrap_or_default();
        let ticks = log.records.last().map(|r| r.tick()).unwrap_or(0);
        manifest.push_str(&format!("{file}\t{seed}\t{}\t{outcome}\t{ticks}\n", cfg.replays.opponent));
    }
    write_output(&dir.join("manifest.tsv"), &manifest)?;
    println!("wrote {} replays to {}", cfg.replays.games, dir.display());
    Ok(())
}

fn read_replays(dir: &Path) -> Result<Vec<ReplayLog>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "log"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("{}: no .log replay files", dir.display())));
    }
    files
        .iter()
        .map(|p| {
            let text = read_input(p)?;
            ReplayLog::parse(&p.display().to_string(), &text).map_err(|e| CliError::Data(e.to_string()))
        })
        .collect()
}

fn mine(cfg: &ExperimentConfig, replays: &Path) -> Result<(), CliError> {
    let logs = read_replays(replays)?;
    let report = mine_macros(&logs, &cfg.mining)?;
    let stats = collect_expert_stats(&logs).map_err(|e| CliError::Data(e.to_string()))?;
    write_output(&cfg.out.join("macros.txt"), &write_macro_file(&report.macros))?;
    write_output(&cfg.out.join("macro_report.tsv"), &report.frequency_table())?;
    let stats_text = toml::to_string(&stats).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_output(&cfg.out.join("expert_stats.toml"), &stats_text)?;
    print!("{}", report.frequency_table());
    Ok(())
}

fn load_macros(path: &Path) -> Result<Vec<MacroAction>, CliError> {
    Ok(parse_macro_file(&read_input(path)?)?)
}

fn train(cfg: &ExperimentConfig, macros_path: &Path, stats_path: &Path) -> Result<(), CliError> {
    let macros = load_macros(macros_path)?;
    let (_, schedule) = cfg.resolved_schedule()?;
    let hierarchy = cfg.resolved_hierarchy()?;
    let stats: Option<ExpertStats> = if schedule.stages.iter().any(|s| s.reward == RewardKind::Designed) {
        let text = read_input(stats_path)?;
        Some(toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", stats_path.display())))?)
    } else {
        None
    };
    let out = cfg.out.join("train");
    write_output(&out.join("schedule.toml"), &schedule.to_toml())?;
    let run = ScheduleRun {
        hierarchy,
        macros: &macros,
        expert_stats: stats.as_ref(),
        workers: cfg.workers,
        seed: cfg.seed,
        out_dir: Some(out.clone()),
    };
    let mut stderr = std::io::stderr();
    let results = run_schedule(&schedule, &run, &mut |stage, r| {
        let _ = writeln!(
            stderr,
            "stage {} iteration {}: win {:.3} tie {:.3} loss {:.3} length {:.0}{}",
            schedule.stages[stage].name,
            r.iteration,
            r.win_rate(),
            r.tie_rate(),
            r.loss_rate(),
            r.mean_length,
            if r.new_best { " (best)" } else { "" }
        );
        Ok(())
    })?;
    for (i, r) in results.iter().enumerate() {
        println!(
            "{}: best win rate {:.3}, checkpoint {}",
            r.name,
            r.best_win_rate,
            curriculum::stage_dir(&out, i, &r.name).join("best").display()
        );
    }
    println!("learning curve: {}", out.join("curve.csv").display());
    Ok(())
}

fn evaluate_cmd(
    cfg: &ExperimentConfig,
    checkpoint: Option<PathBuf>,
    baseline: Option<Baseline>,
    macros_path: &Path,
) -> Result<(), CliError> {
    let engine = curriculum::map_config(&cfg.eval.map).ok_or_else(|| CliError::Config("unknown map".into()))?;
    let hierarchy = match &checkpoint {
        Some(dir) => Some(load_hierarchy(dir).map_err(|e| match e {
            HrlError::Io { .. } => CliError::Data(e.to_string()),
            e => e.into(),
        })?),
        None => None,
    };
    let macros = match baseline {
        Some(Baseline::RandomMacro) => load_macros(macros_path)?,
        _ => Vec::new(),
    };
    let mut csv = format!("{EVAL_SCHEMA}\nlevel,games,wins,ties,losses,win_rate,tie_rate,loss_rate,mean_length\n");
    println!("{:>5} {:>6} {:>8} {:>8} {:>8} {:>10}", "level", "games", "win", "tie", "loss", "length");
    for &level in &cfg.eval.levels {
        let env = EnvConfig {
            engine: engine.clone(),
            difficulty: level,
            max_ticks: cfg.eval.max_ticks,
        };
        let seed0 = mix_seed(cfg.seed, level as u64);
        let s: EvalSummary = match (&hierarchy, baseline) {
            (Some(h), _) => evaluate(h, &env, cfg.eval.games, seed0, cfg.eval.greedy)?,
            (None, Some(Baseline::RandomMacro)) => random_macro_baseline(&macros, &env, cfg.eval.games, seed0)?,
            (None, _) => random_primitive_baseline(&env, cfg.eval.games, seed0)?,
        };
        println!(
            "{level:>5} {:>6} {:>8.3} {:>8.3} {:>8.3} {:>10.1}",
            s.games,
            s.win_rate(),
            s.tie_rate(),
            s.loss_rate(),
            s.mean_length
        );
        csv.push_str(&format!(
            "{level},{},{},{},{},{:.6},{:.6},{:.6},{:.3}\n",
            s.games,
            s.wins,
            s.ties,
            s.losses,
            s.win_rate(),
            s.tie_rate(),
            s.loss_rate(),
            s.mean_length
        ));
    }
    write_output(&cfg.out.join("eval.csv"), &csv)?;
    Ok(())
}
