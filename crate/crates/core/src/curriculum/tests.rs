use super::*;
use crate::hrl::{NodeKind, TrainReport};
use crate::mining::Token;

fn mac(id: usize, steps: &[&str]) -> MacroAction {
    MacroAction {
        id,
        steps: steps.iter().map(|s| s.parse::<Token>().unwrap()).collect(),
        support: 10,
    }
}

fn macros() -> Vec<MacroAction> {
    vec![
        mac(0, &["select_worker", "build_supply@worker", "gather@worker"]),
        mac(1, &["select_base", "train_worker@base", "gather@base"]),
        mac(2, &["select_production", "train_melee@production", "move@production"]),
        mac(3, &["select_army", "attack@army", "attack_q@army"]),
    ]
}

fn small(topology: TopologyKind) -> HierarchyConfig {
    HierarchyConfig {
        hidden: vec![12],
        ..HierarchyConfig::for_topology(topology)
    }
}

fn stage(name: &str, difficulty: u8, iterations: usize) -> CurriculumStage {
    CurriculumStage {
        name: name.into(),
        difficulty,
        reward: RewardKind::Score,
        ppo: "default".into(),
        iterations,
        episodes_per_iter: 2,
        max_ticks: 800,
        ..Default::default()
    }
}

fn run<'a>(m: &'a [MacroAction], out: Option<PathBuf>) -> ScheduleRun<'a> {
    ScheduleRun {
        hierarchy: small(TopologyKind::TwoLayer),
        macros: m,
        expert_stats: None,
        workers: 1,
        seed: 3,
        out_dir: out,
    }
}

fn probe_obs(h: &Hierarchy, ni: usize) -> Vec<f64> {
    let g = EnvConfig::default().new_game(0).unwrap();
    h.nodes[ni].observe(&g, 0)
}

#[test]
fn schedule_toml_round_trip_and_presets() {
    for name in PRESETS {
        let p = preset(name).unwrap();
        p.schedule.validate().unwrap();
        let text = p.schedule.to_toml();
        assert_eq!(Schedule::from_toml(&text).unwrap(), p.schedule);
    }
    let cheat = preset("cheat").unwrap();
    assert_eq!(cheat.topology, TopologyKind::FinalThreeLayer);
    assert!(cheat
        .schedule
        .stages
        .iter()
        .all(|s| s.init == StageInit::FromScratch && s.reward == RewardKind::WinLoss && s.difficulty >= 8));
    let noncheat = preset("noncheat").unwrap();
    let levels: Vec<u8> = noncheat.schedule.stages.iter().map(|s| s.difficulty).collect();
    assert_eq!(levels, [1, 2, 5, 7]);
    assert!(preset("nope").is_none());

    let text = r#"
[[stage]]
name = "warmup"
difficulty = 2
map = "small"
init = "from-scratch"
mode = { alternate = ["controller", "base"] }
reward = "win-loss"
iterations = 4

[[stage]]
name = "main"
difficulty = 5
init = { from-checkpoint = "runs/a/best" }
"#;
    let s = Schedule::from_toml(text).unwrap();
    assert_eq!(s.stages[0].mode, UpdateMode::Alternate(vec!["controller".into(), "base".into()]));
    assert_eq!(s.stages[1].init, StageInit::FromCheckpoint("runs/a/best".into()));
    assert_eq!(s.stages[1].map, "default");
    assert_eq!(s.total_iterations(), 4 + 50);
}

#[test]
fn schedule_validation() {
    assert!(Schedule::default().validate().is_err());
    let dup = Schedule {
        stages: vec![stage("a", 1, 1), stage("a", 2, 1)],
    };
    assert!(dup.validate().is_err());
    for bad in [
        CurriculumStage {
            map: "moon".into(),
            ..stage("a", 1, 1)
        },
        stage("a", 11, 1),
        stage("a", 1, 0),
        CurriculumStage {
            ppo: "fast".into(),
            ..stage("a", 1, 1)
        },
        stage("a/b", 1, 1),
    ] {
        assert!(Schedule { stages: vec![bad] }.validate().is_err());
    }
    // Designed reward without expert statistics.
    let m = macros();
    let s = Schedule {
        stages: vec![CurriculumStage {
            reward: RewardKind::Designed,
            ..stage("a", 1, 1)
        }],
    };
    assert!(matches!(
        run_schedule(&s, &run(&m, None), &mut |_, _| Ok(())),
        Err(CurriculumError::Config(_))
    ));
}

#[test]
fn single_scratch_stage_matches_a_plain_train_call() {
    let m = macros();
    let s = Schedule {
        stages: vec![CurriculumStage {
            init: StageInit::FromScratch,
            ..stage("only", 1, 2)
        }],
    };
    let r = run(&m, None);
    let res = run_schedule(&s, &r, &mut |_, _| Ok(())).unwrap();

    let st = &s.stages[0];
    let mut h = build_topology(
        &HierarchyConfig {
            init_seed: mix_seed(r.seed, 1),
            ..r.hierarchy.clone()
        },
        &m,
    )
    .unwrap();
    let cfg = TrainConfig {
        env: st.env().unwrap(),
        reward: st.reward_spec(None).unwrap(),
        ppo: st.ppo_config().unwrap(),
        iterations: 2,
        episodes_per_iter: 2,
        seed: mix_seed(r.seed ^ 0x5747_0000, 1),
        workers: 1,
        ..Default::default()
    };
    let plain: TrainReport = train(&mut h, &cfg, &mut |_, _, _| Ok(())).unwrap();
    assert_eq!(res[0].records, plain.records);
    assert_eq!(Some(res[0].best_win_rate), plain.best_win_rate);
    assert_eq!(&res[0].best, plain.best.as_ref().unwrap());
}

#[test]
fn same_topology_transfer_is_exact() {
    let m = macros();
    let src = build_topology(&small(TopologyKind::TwoLayer), &m).unwrap();
    let target = HierarchyConfig {
        init_seed: 99,
        ..small(TopologyKind::TwoLayer)
    };
    let t = transfer_init(&src, &target, &m, false).unwrap();
    assert_eq!(t.loaded, ["controller", "base", "battle"]);
    assert!(t.fresh.is_empty());
    for ni in 0..src.nodes.len() {
        let obs = probe_obs(&src, ni);
        let a = src.nodes[ni].net.policy(&obs).unwrap();
        let b = t.hierarchy.nodes[ni].net.policy(&obs).unwrap();
        assert_eq!(a, b);
        assert_eq!(src.nodes[ni].net.value(&obs).unwrap().to_bits(), t.hierarchy.nodes[ni].net.value(&obs).unwrap().to_bits());
    }
}

#[test]
fn two_layer_checkpoint_into_three_layer() {
    let m = macros();
    let src = build_topology(&small(TopologyKind::TwoLayer), &m).unwrap();
    let t = transfer_init(&src, &small(TopologyKind::ThreeLayer), &m, true).unwrap();
    assert_eq!(t.loaded, ["controller", "battle"]);
    assert_eq!(t.fresh, ["base", "building", "population"]);
    assert!(matches!(t.hierarchy.node("base").unwrap().kind, NodeKind::Internal { .. }));
    assert_eq!(
        t.hierarchy.node("battle").unwrap().net.params,
        src.node("battle").unwrap().net.params
    );
    assert!(!t.mask.is_trainable("controller") && t.mask.is_trainable("building"));
    // A matched node with a different shape is an error.
    let wide = HierarchyConfig {
        hidden: vec![20],
        ..small(TopologyKind::TwoLayer)
    };
    assert!(matches!(
        transfer_init(&src, &wide, &m, false),
        Err(CurriculumError::Hrl(HrlError::Checkpoint(_)))
    ));
}

#[test]
fn frozen_loaded_nodes_survive_training() {
    let m = macros();
    let src = build_topology(&small(TopologyKind::TwoLayer), &m).unwrap();
    let t = transfer_init(&src, &small(TopologyKind::ThreeLayer), &m, true).unwrap();
    let mut h = t.hierarchy.clone();
    let st = stage("s", 1, 1);
    let cfg = TrainConfig {
        env: st.env().unwrap(),
        reward: st.reward_spec(None).unwrap(),
        iterations: 1,
        episodes_per_iter: 2,
        mask: t.mask.clone(),
        workers: 1,
        ..Default::default()
    };
    train(&mut h, &cfg, &mut |_, _, _| Ok(())).unwrap();
    for name in &t.loaded {
        assert_eq!(h.node(name).unwrap().net.params.values, src.node(name).unwrap().net.params.values);
    }
    assert!(t.fresh.iter().any(|n| h.node(n).unwrap().net.params != t.hierarchy.node(n).unwrap().net.params));
}

#[test]
fn scratch_stages_do_not_inherit_parameters() {
    let m = macros();
    let s = Schedule {
        stages: vec![
            stage("first", 1, 1),
            CurriculumStage {
                init: StageInit::FromScratch,
                ..stage("second", 2, 1)
            },
            stage("third", 2, 1),
        ],
    };
    let r = run(&m, None);
    let res = run_schedule(&s, &r, &mut |_, _| Ok(())).unwrap();
    let fresh = |i: u64| {
        build_topology(
            &HierarchyConfig {
                init_seed: mix_seed(r.seed, i),
                ..r.hierarchy.clone()
            },
            &m,
        )
        .unwrap()
    };
    // The best model of an iteration-0-only stage is its initial model.
    assert_eq!(res[1].best.nodes[0].net.params.checksum(), fresh(2).nodes[0].net.params.checksum());
    assert_ne!(res[1].best.nodes[0].net.params.checksum(), res[0].best.nodes[0].net.params.checksum());
    assert!(res[1].loaded.is_empty());
    // The third stage continues from the second.
    assert_eq!(res[2].loaded.len(), 3);
    assert_eq!(res[2].best.nodes[0].net.params, res[1].best.nodes[0].net.params);
}

#[test]
fn interrupted_schedule_resumes_without_gaps() {
    let m = macros();
    let s = Schedule {
        stages: vec![stage("a", 1, 2), stage("b", 2, 3)],
    };
    let full_dir = tempfile::tempdir().unwrap();
    run_schedule(&s, &run(&m, Some(full_dir.path().into())), &mut |_, _| Ok(())).unwrap();
    let full = fs::read_to_string(full_dir.path().join("curve.csv")).unwrap();
    assert_eq!(full.lines().filter(|l| !l.starts_with('#')).count(), 1 + s.total_iterations());

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_path_buf();
    let mut seen = 0;
    let err = run_schedule(&s, &run(&m, Some(out.clone())), &mut |stage, r| {
        seen += 1;
        if stage == 1 && r.iteration == 0 {
            return Err(CurriculumError::Config("simulated crash".into()));
        }
        Ok(())
    })
    .unwrap_err();
    assert!(matches!(err, CurriculumError::Stage { ref stage, iteration: 0, .. } if stage == "b"), "{err}");
    assert_eq!(seen, 3);
    // A row written without its checkpoint is discarded on resume.
    append_row(&out.join("curve.csv"), "b,1,2,0,0,1,5\n").unwrap();
    let mut resumed = Vec::new();
    run_schedule(&s, &run(&m, Some(out.clone())), &mut |stage, r| {
        resumed.push((stage, r.iteration));
        Ok(())
    })
    .unwrap();
    assert_eq!(resumed, [(1, 1), (1, 2)]);
    assert_eq!(fs::read_to_string(out.join("curve.csv")).unwrap(), full);
    // Everything is done: a further run only reloads.
    let res = run_schedule(&s, &run(&m, Some(out)), &mut |_, _| panic!("no training expected")).unwrap();
    assert_eq!(res.len(), 2);
}
