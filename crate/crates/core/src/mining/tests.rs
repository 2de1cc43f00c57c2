use super::*;
use crate::engine::{
    new_game, record_expert_game, to_text, DifficultyConfig, EngineConfig, ReplayHeader, REPLAY_FORMAT_VERSION,
};
use std::collections::BTreeSet;

fn t(s: &str) -> Token {
    s.parse().unwrap()
}

fn pat(tokens: &[&str], support: usize) -> Pattern<Token> {
    Pattern {
        tokens: tokens.iter().map(|s| t(s)).collect(),
        support,
    }
}

fn header() -> ReplayHeader {
    ReplayHeader {
        version: REPLAY_FORMAT_VERSION,
        seed: 0,
        difficulty: 1,
        width: 32,
        height: 32,
        max_ticks: 1000,
        player: 0,
    }
}

fn action(tick: u32, a: PrimitiveAction) -> ReplayRecord {
    ReplayRecord::Action {
        tick,
        player: 0,
        action: a,
        entity_kind: None,
    }
}

fn expert_logs(n: u64) -> Vec<ReplayLog> {
    let cfg = EngineConfig::default();
    let opp = DifficultyConfig::level(1).unwrap();
    (0..n).map(|s| record_expert_game(&cfg, s, &opp, 3200).unwrap()).collect()
}

#[test]
fn token_text_round_trip() {
    for s in [
        "select_worker",
        "select_army",
        "select_production",
        "build_supply@worker",
        "train_melee@production",
        "attack_q@army",
        "attack@none",
        "move@base",
        "gather@worker",
        "noop",
    ] {
        assert_eq!(t(s).to_string(), s);
    }
    assert!("build_ore@worker".parse::<Token>().is_err());
    assert!("select_dragon".parse::<Token>().is_err());
}

#[test]
fn fragments_bucket_by_tick() {
    let log = ReplayLog {
        header: header(),
        records: vec![
            action(3, PrimitiveAction::Select(SelectTarget::Army)),
            action(7, PrimitiveAction::Command(Command::MovePos(Pos::new(1, 1)))),
            action(120, PrimitiveAction::Command(Command::TrainUnit(EntityKind::Worker))),
        ],
    };
    let db = segment_replays(&[log], 100).unwrap();
    assert_eq!(
        db.sequences,
        vec![
            vec![t("select_army"), t("move@army")],
            vec![t("train_worker@army")]
        ]
    );
    let empty = ReplayLog {
        header: header(),
        records: vec![],
    };
    assert!(segment_replays(&[empty], 100).unwrap().is_empty());
    assert!(matches!(segment_replays(&[], 0), Err(MiningError::Config(_))));
}

#[test]
fn expert_database_size_matches_line_recount() {
    let logs = expert_logs(30);
    let fragment_ticks = 40;
    let db = segment_replays(&logs, fragment_ticks).unwrap();
    let mut expected = 0;
    for log in &logs {
        let text = to_text(log);
        let mut frags = BTreeSet::new();
        for line in text.lines().filter(|l| !l.starts_with('#')) {
            let f: Vec<&str> = line.split('\t').collect();
            if f[2] == "end" || f[2] == "noop" {
                continue;
            }
            frags.insert(f[0].parse::<u32>().unwrap() / fragment_ticks);
        }
        expected += frags.len();
    }
    assert_eq!(db.len(), expected);
    let tokens: usize = db.sequences.iter().map(|s| s.len()).sum();
    let actions: usize = logs.iter().map(|l| l.actions().count()).sum();
    assert_eq!(tokens, actions);
}

#[test]
fn malformed_log_names_file_and_line() {
    let good = to_text(&expert_logs(1)[0]);
    let mut lines: Vec<&str> = good.lines().collect();
    lines[3] = "12\t0\tteleport\t1 2";
    let files = vec![("game7.log".to_string(), lines.join("\n"))];
    match segment_replay_texts(&files, 40) {
        Err(MiningError::Parse(e)) => {
            assert_eq!(e.file, "game7.log");
            assert_eq!(e.line, 4);
            assert!(e.to_string().starts_with("game7.log:4:"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn filter_rules() {
    let pats = vec![
        pat(&["select_worker", "build_supply@worker", "build_supply@worker"], 9),
        pat(&["build_supply@worker", "select_base", "train_worker@base"], 8),
        pat(&["select_worker", "build_supply@worker"], 7),
        pat(&["select_worker", "build_supply@worker", "gather@worker"], 6),
    ];
    let kept = filter_patterns(&pats, 75);
    assert_eq!(kept, vec![pats[3].clone()]);
    assert!(filter_patterns(&pats, 0).is_empty());
}

#[test]
fn filter_respects_top_k() {
    let pats: Vec<Pattern<Token>> = (0..100)
        .map(|i| {
            let k = ["select_worker", "select_base", "select_army"][i % 3];
            Pattern {
                tokens: vec![t(k), t("gather@worker"), t("move@army")],
                support: 100 - i,
            }
        })
        .collect();
    let kept = filter_patterns(&pats, 75);
    assert_eq!(kept.len(), 75);
    assert_eq!(kept[..], pats[..75]);
}

#[test]
fn postprocess_rules() {
    let pats = vec![
        pat(&["select_worker", "train_worker@worker", "gather@worker"], 10),
        pat(&["select_worker", "build_supply@worker", "gather@worker"], 9),
        pat(&["select_worker", "build_supply@worker", "select_base"], 8),
        pat(&["select_worker", "build_supply@worker", "gather@base"], 7),
        pat(&["select_worker", "build_supply@worker", "gather@worker"], 6),
        pat(&["select_production", "train_melee@production", "move@production"], 5),
        pat(&["select_army", "attack@army", "attack_q@army"], 4),
    ];
    let macros = postprocess(&pats);
    let described: Vec<String> = macros.iter().map(|m| m.describe()).collect();
    assert_eq!(
        described,
        vec![
            "select_worker -> build_supply@worker -> gather@worker",
            "select_production -> train_melee@production -> move@production",
            "select_army -> attack@army -> attack_q@army",
        ]
    );
    assert_eq!(macros.iter().map(|m| m.id).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert_eq!(macros[0].support, 9);
    assert_eq!(macros[0].group(), MacroGroup::Building);
    assert_eq!(macros[1].group(), MacroGroup::Population);
    assert_eq!(macros[2].group(), MacroGroup::Army);
}

#[test]
fn mined_expert_macros_satisfy_invariants_and_are_deterministic() {
    let logs = expert_logs(30);
    let cfg = MiningConfig::default();
    let a = mine_macros(&logs, &cfg).unwrap();
    let b = mine_macros(&logs, &cfg).unwrap();
    assert_eq!(a.macros, b.macros);
    assert!(a.macros.len() >= 6 && a.macros.len() <= 75, "{} macros", a.macros.len());
    for m in &a.macros {
        assert!(m.steps[0].is_select());
        assert!(m.steps.len() > 2 && m.steps.len() <= cfg.max_len);
        assert_eq!(m.steps.iter().filter(|s| s.is_select()).count(), 1);
        let distinct: BTreeSet<&Token> = m.steps.iter().collect();
        assert_eq!(distinct.len(), m.steps.len());
        let kind = m.select_kind().unwrap();
        assert!(m.steps[1..].iter().all(|s| kind.can_execute(s.action)));
        assert!(m.support >= a.min_support);
    }
    // The worker supply macro shape appears among the mined set.
    assert!(a
        .macros
        .iter()
        .any(|m| m.steps[0] == t("select_worker") && m.steps.contains(&t("build_supply@worker"))));
    let groups: BTreeSet<MacroGroup> = a.macros.iter().map(|m| m.group()).collect();
    assert_eq!(groups.len(), 3, "{}", a.frequency_table());
}

#[test]
fn impossible_support_reports_no_macros() {
    let logs = expert_logs(2);
    let cfg = MiningConfig {
        min_support: Some(1_000_000),
        ..Default::default()
    };
    assert!(matches!(mine_macros(&logs, &cfg), Err(MiningError::NoMacros(_))));
}

#[test]
fn frequency_table_is_sorted() {
    let report = mine_macros(&expert_logs(10), &MiningConfig::default()).unwrap();
    let table = report.frequency_table();
    let supports: Vec<usize> = table
        .lines()
        .skip(2)
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(supports.len(), report.macros.len());
    assert!(supports.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn macro_file_round_trip() {
    let report = mine_macros(&expert_logs(5), &MiningConfig::default()).unwrap();
    let text = write_macro_file(&report.macros);
    assert_eq!(parse_macro_file(&text).unwrap(), report.macros);
    assert!(matches!(parse_macro_file("nope"), Err(MiningError::MacroFile { line: 1, .. })));
    let broken = format!("{MACRO_FILE_HEADER} count=1\n0\t3\tgather@worker\n");
    assert!(matches!(parse_macro_file(&broken), Err(MiningError::MacroFile { line: 2, .. })));
}

fn supply_macro() -> MacroAction {
    MacroAction {
        id: 0,
        steps: vec![t("select_worker"), t("build_supply@worker")],
        support: 1,
    }
}

#[test]
fn executing_a_build_macro_starts_construction() {
    let mut g = new_game(3, &DifficultyConfig::level(1).unwrap(), 2000).unwrap();
    g.players[0].minerals = 500;
    let before = g.count(0, EntityKind::Supply);
    let mut r = DefaultResolver::new(&g, 0);
    let ex = execute_macro(&mut g, &supply_macro(), &mut r).unwrap();
    assert_eq!(ex.steps, 2);
    assert_eq!(ex.ticks, 2 * g.config.ticks_per_decision);
    assert_eq!(g.count(0, EntityKind::Supply), before + 1);
    assert_eq!(g.under_construction(0, EntityKind::Supply), 1);
}

#[test]
fn build_macro_without_funds_has_no_effect() {
    let mut g = new_game(3, &DifficultyConfig::level(1).unwrap(), 2000).unwrap();
    g.players[0].minerals = 0;
    let mut r = DefaultResolver::new(&g, 0);
    let tick = g.tick;
    execute_macro(&mut g, &supply_macro(), &mut r).unwrap();
    assert_eq!(g.count(0, EntityKind::Supply), 0);
    assert!(g.tick > tick);
}

#[test]
fn macro_stops_when_the_game_ends() {
    let ticks = EngineConfig::default().ticks_per_decision;
    let mut g = new_game(3, &DifficultyConfig::level(1).unwrap(), ticks).unwrap();
    let mac = MacroAction {
        id: 0,
        steps: vec![t("select_worker"), t("build_supply@worker"), t("gather@worker")],
        support: 1,
    };
    let mut r = DefaultResolver::new(&g, 0);
    let ex = execute_macro(&mut g, &mac, &mut r).unwrap();
    assert_eq!(ex.steps, 1);
    assert_eq!(ex.outcome, Outcome::Tie);
    assert!(matches!(execute_macro(&mut g, &mac, &mut r), Err(EngineError::Terminal)));
}

#[test]
fn primitive_macros_are_single_steps() {
    let p = primitive_macros();
    assert!(p.iter().all(|m| m.steps.len() == 1));
    let distinct: BTreeSet<&Token> = p.iter().map(|m| &m.steps[0]).collect();
    assert_eq!(distinct.len(), p.len());
}
