mod common;

use apportion_core::apportion::{self, closed_form, ApportionProblem, Bounds};
use apportion_core::consensus::ConsensusState;
use apportion_core::netsim::{self, DelayModel, FixedDelays, RunOptions, Simulator};
use apportion_core::termination::{CheckpointSchedule, NodeAgent};
use apportion_core::topology::{build_weights, Graph};
use apportion_core::consensus::LocalWeights;
use apportion_core::NodeId;
use common::{floyd_diameter, random_connected, random_problem, rng};
use proptest::prelude::*;

const RHO: f64 = 0.02;

fn delays(graph: &Graph, tau_bar: u32, stochastic: bool, seed: u64) -> DelayModel {
    if stochastic {
        DelayModel::stochastic(tau_bar, seed)
    } else {
        DelayModel::fixed(tau_bar, FixedDelays::random(graph, tau_bar, seed))
    }
}

fn schedule(graph: &Graph, tau_bar: u32) -> CheckpointSchedule {
    CheckpointSchedule::new(graph.diameter().unwrap().max(1) as u32, tau_bar).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_are_column_stochastic_and_local(n in 1usize..10, extra in 0.0f64..0.6, seed: u64) {
        let g = random_connected(n, extra, &mut rng(seed));
        let w = build_weights(&g).unwrap();
        prop_assert!(w.is_column_stochastic(1e-12));
        for i in g.nodes() {
            for j in g.nodes() {
                if i != j && !g.has_edge(i, j) {
                    prop_assert_eq!(w.get(i, j), 0.0);
                }
            }
            // column i depends only on the degree of i
            let expect = 1.0 / (g.degree(i) as f64 + 1.0);
            prop_assert_eq!(w.self_weight(i), expect);
        }
    }

    #[test]
    fn diameter_matches_all_pairs(n in 1usize..12, extra in 0.0f64..0.5, seed: u64) {
        let g = random_connected(n, extra, &mut rng(seed));
        prop_assert_eq!(g.diameter().unwrap(), floyd_diameter(&g));
    }

    #[test]
    fn mass_is_conserved(n in 2usize..9, tau_bar in 0u32..4, stochastic: bool, seed: u64) {
        let mut r = rng(seed);
        let g = random_connected(n, 0.3, &mut r);
        let p = random_problem(n, &mut r);
        let w = build_weights(&g).unwrap();
        let init = apportion::init_states(&p, false);
        let mut sim = Simulator::new(&g, &w, &init, &delays(&g, tau_bar, stochastic, seed), schedule(&g, tau_bar), 0.0).unwrap();
        let first = sim.audit();
        prop_assert_eq!(first.inflight_mass_r, 0.0);
        for _ in 0..150 {
            sim.step().unwrap();
            prop_assert!(sim.audit().conservation_error(&first) <= 1e-9);
        }
    }

    #[test]
    fn cycle_matches_oracle(n in 1usize..9, tau_bar in 0u32..4, stochastic: bool, seed: u64) {
        let mut r = rng(seed);
        let g = random_connected(n, 0.3, &mut r);
        let p = random_problem(n, &mut r);
        let w = build_weights(&g).unwrap();
        let d = delays(&g, tau_bar, stochastic, seed);
        let out = netsim::run_cycle(&g, &w, &p, &d, schedule(&g, tau_bar), RHO, RunOptions::default()).unwrap();
        let oracle = closed_form(&p);
        for (i, b) in p.units().iter().enumerate() {
            let b = b.unwrap();
            prop_assert!(b.contains(out.commands.watts[i]));
            prop_assert!((out.commands.watts[i] - oracle.watts[i]).abs() <= RHO * b.span());
        }
        prop_assert!((out.commands.total() - p.demand()).abs() <= RHO * p.span_total());
        prop_assert!(out.theta <= 100);
    }

    #[test]
    fn checkpoint_extremes_shrink_and_sandwich(n in 2usize..8, tau_bar in 0u32..4, stochastic: bool, seed: u64) {
        let mut r = rng(seed);
        let g = random_connected(n, 0.3, &mut r);
        let p = random_problem(n, &mut r);
        let w = build_weights(&g).unwrap();
        let d = delays(&g, tau_bar, stochastic, seed);
        let out = netsim::run_cycle(&g, &w, &p, &d, schedule(&g, tau_bar), RHO, RunOptions::default()).unwrap();
        let mut prev: Option<(f64, f64)> = None;
        for chunk in out.trace.checkpoints.chunks(n) {
            let z = chunk[0].z;
            let y = chunk[0].y;
            for e in chunk {
                // every node agrees on the extremes and its ratio lies between them
                prop_assert_eq!((e.z, e.y), (z, y));
                prop_assert!(y - 1e-12 <= e.ratio && e.ratio <= z + 1e-12);
            }
            if let Some((pz, py)) = prev {
                prop_assert!(z <= pz + 1e-12 && y >= py - 1e-12);
            }
            prev = Some((z, y));
        }
    }

    #[test]
    fn demand_placement_does_not_change_the_limit(n in 2usize..7, seed: u64, a in 0usize..7, b in 0usize..7) {
        let mut r = rng(seed);
        let g = random_connected(n, 0.4, &mut r);
        let p = random_problem(n, &mut r);
        let bounds: Vec<Bounds> = p.units().iter().map(|b| b.unwrap()).collect();
        let q1 = ApportionProblem::new(p.demand(), bounds.clone(), [NodeId(a % n)]).unwrap();
        let q2 = ApportionProblem::new(p.demand(), bounds, [NodeId(b % n), NodeId(a % n)]).unwrap();
        let w = build_weights(&g).unwrap();
        let steps = 4000;
        for q in [&q1, &q2] {
            let init = apportion::init_states(q, false);
            let mut sim = Simulator::new(&g, &w, &init, &DelayModel::stochastic(2, seed), schedule(&g, 2), 0.0).unwrap();
            for _ in 0..steps {
                sim.step().unwrap();
            }
            for agent in sim.agents() {
                let s = agent.state();
                prop_assert!((s.r / s.s - q.limit_ratio()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn max_consensus_is_exact_after_one_period(n in 1usize..11, tau_bar in 0u32..4, seed: u64) {
        let mut r = rng(seed);
        let g = random_connected(n, 0.25, &mut r);
        let w = build_weights(&g).unwrap();
        let sched = schedule(&g, tau_bar);
        let zs: Vec<f64> = (0..n).map(|_| r.random_range(-1e3..1e3)).collect();
        let ys: Vec<f64> = (0..n).map(|_| r.random_range(-1e3..1e3)).collect();
        let agents = g
            .nodes()
            .map(|i| NodeAgent::with_extremes(LocalWeights::from_matrix(&w, &g, i), ConsensusState::new(1.0, 1.0), zs[i.0], ys[i.0]))
            .collect();
        let d = DelayModel::fixed(tau_bar, FixedDelays::random(&g, tau_bar, seed));
        let mut sim = Simulator::from_agents(&g, agents, &d, sched, 0.0).unwrap();
        let mut events = Vec::new();
        while events.is_empty() {
            events = sim.step().unwrap();
        }
        prop_assert_eq!(sim.step_index(), sched.checkpoint_len());
        let max = zs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
        for e in events {
            prop_assert_eq!(e.z, max);
            prop_assert_eq!(e.y, min);
        }
    }
}

use rand::Rng;

#[test]
fn ratio_averaging_converges_for_many_graphs() {
    for seed in 0..40u64 {
        let mut r = rng(seed);
        let n = r.random_range(2..9);
        let g = random_connected(n, 0.3, &mut r);
        let w = build_weights(&g).unwrap();
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-100.0..100.0)).collect();
        let mean = x.iter().sum::<f64>() / n as f64;
        for d in [delays(&g, 3, false, seed), delays(&g, 3, true, seed)] {
            let out = netsim::run_ratio_averaging(&g, &w, &x, &d, 5000).unwrap();
            for v in out {
                assert!((v - mean).abs() < 1e-6, "seed {seed}: {v} vs {mean}");
            }
        }
    }
}

#[test]
fn t_state_tracks_ratio() {
    let g = Graph::cycle(6).unwrap();
    let w = build_weights(&g).unwrap();
    let p = random_problem(6, &mut rng(3));
    let opts = RunOptions {
        track_t: true,
        ..RunOptions::default()
    };
    let out = netsim::run_cycle(&g, &w, &p, &DelayModel::stochastic(3, 3), schedule(&g, 3), RHO, opts).unwrap();
    let r_over_t = out.r_over_t.unwrap();
    // r / t converges to the mean of r(0), which is the limit ratio times the
    // mean of s(0)
    let mean_s = p.span_total() / 6.0;
    for v in r_over_t {
        assert!((v / mean_s - p.limit_ratio()).abs() < 0.05);
    }
}

#[test]
fn more_renewable_power_never_raises_other_commands() {
    // closed form over a ramp of renewable output
    let mut previous: Option<Vec<f64>> = None;
    for step in 0..=100 {
        let pv = 10.0 * step as f64;
        let bounds = vec![
            Bounds::new(0.0, 1500.0),
            Bounds::new((pv - 1.0).max(0.0), pv.max(1e-3)),
            Bounds::new(0.0, 1000.0),
            Bounds::new(0.0, 1200.0),
        ];
        let p = ApportionProblem::new(3000.0, bounds, [NodeId(1)]).unwrap();
        let cmd = closed_form(&p).watts;
        if let Some(prev) = &previous {
            for i in [0, 2, 3] {
                assert!(cmd[i] <= prev[i] + 1e-9);
            }
        }
        previous = Some(cmd);
    }
}
