mod common;

use proptest::prelude::*;
use svo_mapf::execution::{build_adg, pad_plan, simulate_execution, ExecutionConfig};
use svo_mapf::gridworld::{EnvConfig, BLOCKING_REWARD, IDLE_OFF_GOAL_REWARD, IDLE_ON_GOAL_REWARD, MOVE_REWARD};
use svo_mapf::harness::{
    corridor_case_study, run_batch, run_episode, BenchConfig, CaseStudyConfig, PolicySpec, ScriptedMode,
};
use svo_mapf::learner::network::softmax;
use svo_mapf::learner::{clipped_surrogate, NetConfig, PolicyLayout};
use svo_mapf::mapgen::{gen_maze, gen_random, gen_room, read_map, write_map, MapFamily};
use svo_mapf::pathing::{astar_path, distance_field};
use svo_mapf::resolver::COLLISION_PENALTY;
use svo_mapf::social::{compute_overlap, redistribute_rewards, SocialConfig};
use svo_mapf::{Error, Exec, Scenario};

fn any_scenario(family: u8, seed: u64, n: usize) -> Scenario {
    match family % 3 {
        0 => gen_random(14, 12, 0.25, n, seed).unwrap(),
        1 => gen_room(16, 16, n, seed).unwrap(),
        _ => gen_maze(13, 13, n, seed).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generation_is_pure_and_valid(family in 0u8..3, seed in any::<u64>(), n in 1usize..10) {
        let a = any_scenario(family, seed, n);
        let b = any_scenario(family, seed, n);
        prop_assert_eq!(&a, &b);
        prop_assert!(a.validate().is_ok());
        prop_assert_eq!(write_map(&a.map), write_map(&b.map));
    }

    #[test]
    fn map_text_round_trips(family in 0u8..3, seed in any::<u64>()) {
        let m = any_scenario(family, seed, 1).map;
        prop_assert_eq!(read_map(&write_map(&m)).unwrap(), m);
    }

    #[test]
    fn path_flows_are_consistent(seed in any::<u64>(), n in 1usize..6) {
        let sc = gen_random(15, 15, 0.3, n, seed).unwrap();
        for (s, g) in sc.starts.iter().zip(&sc.goals) {
            let p = astar_path(&sc.map, *s, *g).unwrap();
            let d = distance_field(&sc.map, *g).unwrap().get(*s).unwrap();
            prop_assert_eq!(p.vertices.len(), d as usize + 1);
            prop_assert_eq!(&p, &astar_path(&sc.map, *s, *g).unwrap());
            // Directions replay the vertex sequence.
            let mut cur = *s;
            for (k, a) in p.directions.iter().enumerate() {
                prop_assert_eq!(cur, p.vertices[k]);
                if a.is_move() {
                    cur = sc.map.target(cur, *a).unwrap();
                }
            }
            prop_assert_eq!(cur, *g);
        }
    }

    #[test]
    fn overlap_is_pure(seed in any::<u64>(), n in 2usize..8) {
        let sc = gen_random(12, 12, 0.2, n, seed).unwrap();
        let a = compute_overlap(&sc.map, &sc.starts, &sc.goals, 0.95).unwrap();
        let b = compute_overlap(&sc.map, &sc.starts, &sc.goals, 0.95).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(a.matrix.get(i, j).to_bits(), b.matrix.get(i, j).to_bits());
            }
        }
    }

    #[test]
    fn egoistic_action_reward_is_raw(own in 0usize..8, partner in 0usize..8, rho in 0.5f64..4.0) {
        // Reachable per-step rewards: base + optional collision + blocking.
        let table = |k: usize| {
            let base = [MOVE_REWARD, IDLE_OFF_GOAL_REWARD, IDLE_ON_GOAL_REWARD][k % 3];
            let collision = if k.is_multiple_of(2) { 0.0 } else { COLLISION_PENALTY };
            base + collision + BLOCKING_REWARD * (k / 4) as f64
        };
        let (_, ra) = redistribute_rewards(table(own), table(partner), 0.0, rho).unwrap();
        prop_assert_eq!(ra, table(own));
    }

    #[test]
    fn execution_is_safe_and_complete(seed in any::<u64>(), n in 2usize..9, jitter in 0.0f64..0.8,
                                      speeds in proptest::collection::vec(0.1f64..5.0, 8)) {
        let sc = gen_random(10, 10, 0.15, n, seed).unwrap();
        let plan = pad_plan(&common::greedy_plan(&sc, 40));
        match build_adg(&plan) {
            Err(Error::DependencyCycle(_)) => {}
            Err(e) => prop_assert!(false, "{}", e),
            Ok(graph) => {
                let cfg = ExecutionConfig { base_time: 1.0, jitter, seed };
                let log = simulate_execution(&graph, &speeds[..n], &cfg).unwrap();
                prop_assert!(log.all_done());
                let occ = common::occupancy_from_log(&graph, &log);
                prop_assert!(common::co_occupancy_violations(&occ).is_empty());
            }
        }
    }

    #[test]
    fn unit_speed_replay_matches_plan_without_following(seed in any::<u64>(), n in 2usize..7) {
        let sc = gen_random(12, 12, 0.1, n, seed).unwrap();
        let plan = pad_plan(&common::greedy_plan(&sc, 40));
        // Same-step following: someone enters a cell another robot leaves.
        let following = (1..plan[0].len()).any(|t| {
            (0..n).any(|a| (0..n).any(|b| a != b && plan[a][t] == plan[b][t - 1] && plan[a][t] != plan[a][t - 1]))
        });
        prop_assume!(!following);
        let graph = build_adg(&plan).unwrap();
        let log = simulate_execution(&graph, &vec![1.0; n], &ExecutionConfig::default()).unwrap();
        for t in graph.tasks().iter().filter(|t| !t.anchor) {
            prop_assert_eq!(log.done_at[t.task_id], (t.time + 1) as f64);
        }
    }

    #[test]
    fn heads_are_distributions(seed in any::<u64>(), scale in 0.1f64..20.0,
                               obs in proptest::collection::vec(-3.0f64..3.0, 12), bin in 0usize..4) {
        let layout = PolicyLayout::new(NetConfig { obs_len: 12, svo_bins: 4, hidden: 6 });
        let params: Vec<f64> = layout.init_params(seed).iter().map(|p| p * scale).collect();
        let f = layout.forward(&params, &obs, bin);
        let pa: f64 = softmax(f.action_logits()).iter().sum();
        let pz: f64 = softmax(f.svo_logits(4)).iter().sum();
        prop_assert!((pa - 1.0).abs() < 1e-9 && (pz - 1.0).abs() < 1e-9);
    }

    #[test]
    fn surrogate_never_exceeds_clip_bound(r in 0.0f64..50.0, a in -10.0f64..10.0, eps in 0.05f64..0.5) {
        let (s, _) = clipped_surrogate(r, a, eps);
        prop_assert!(s <= (1.0 + eps) * a.abs() + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn episodes_are_deterministic(seed in any::<u64>(), n in 1usize..8) {
        let sc = gen_random(12, 12, 0.2, n, seed).unwrap();
        let policy = PolicySpec::Scripted(ScriptedMode::Heterogeneous);
        let a = run_episode(&sc, &policy, EnvConfig::default(), &SocialConfig::default(), 1).unwrap();
        let b = run_episode(&sc, &policy, EnvConfig::default(), &SocialConfig::default(), 1).unwrap();
        prop_assert_eq!(&a, &b);
        let on_goal = a.goals as f64 / n as f64;
        prop_assert_eq!(a.metrics.arrival_rate, on_goal);
    }

    #[test]
    fn report_aggregation_identities(seed in any::<u64>(), instances in 1usize..10) {
        let cfg = BenchConfig {
            family: MapFamily::Random,
            width: 10,
            height: 10,
            n_agents: 4,
            instances,
            seed,
            env: EnvConfig { max_episode_length: 48, ..EnvConfig::default() },
            ..BenchConfig::default()
        };
        let r = run_batch(&cfg, &PolicySpec::Greedy, Exec::Sequential).unwrap();
        let k = r.success_rate * instances as f64;
        prop_assert!((k - k.round()).abs() < 1e-9);
        let mean = r.per_instance.iter().map(|x| x.arrival_rate).sum::<f64>() / instances as f64;
        prop_assert_eq!(r.mean_arrival_rate, mean);
    }

    #[test]
    fn solving_policy_scores_two_for_any_mixture(p in 0.0f64..=1.0, seed in any::<u64>()) {
        let cfg = CaseStudyConfig { p_recess: p, p_ishape: 1.0 - p, episodes: 20, seed, ..CaseStudyConfig::default() };
        let r = corridor_case_study(&cfg, &PolicySpec::Scripted(ScriptedMode::Heterogeneous), Exec::Sequential).unwrap();
        prop_assert_eq!(r.mean_goals, 2.0);
    }
}
