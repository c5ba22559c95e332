//! SVO-ordered tie-breaking.
//!
//! Agents are examined along a FIFO consideration chain seeded
//! most-prosocial first. Moves into obstacles are replaced by `Idle` with a
//! collision penalty. Moves that would create a vertex or swap conflict with
//! the current working joint action are replaced by `Idle`, and for each
//! conflicting pair the strictly more prosocial member is penalized. When an
//! agent is idled, every agent that was heading into its cell is queued
//! again. An idled agent is never released, so the chain terminates.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Action, Cell};
use crate::mapgen::GridMap;

pub const COLLISION_PENALTY: f64 = -2.0;

/// Status of one agent's intended action against a working joint action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    Valid,
    /// Moves into an obstacle or off the map.
    Invalid,
    /// Vertex or swap conflict with the listed agents.
    Restricted(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Annotation {
    Normal,
    Invalidated,
    RestrictedIdled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionOutcome {
    pub actions: Vec<Action>,
    /// `true` where the agent receives the collision penalty.
    pub penalized: Vec<bool>,
    pub annotations: Vec<Annotation>,
    /// Chain pops performed.
    pub iterations: usize,
    /// Order in which agents were popped off the chain.
    pub chain_trace: Vec<usize>,
}

impl ResolutionOutcome {
    /// Collision penalty for agent `i` (0 when not penalized).
    pub fn penalty(&self, i: usize) -> f64 {
        if self.penalized[i] {
            COLLISION_PENALTY
        } else {
            0.0
        }
    }

    /// Agents idled by the resolver (invalid or restricted).
    pub fn interventions(&self) -> usize {
        self.annotations.iter().filter(|a| **a != Annotation::Normal).count()
    }
}

/// Where `action` takes an agent at `pos`; `None` for an invalid move.
fn target_of(map: &GridMap, pos: Cell, action: Action) -> Option<Cell> {
    if action == Action::Idle {
        Some(pos)
    } else {
        map.target(pos, action)
    }
}

/// Classify agent `i`'s action under the joint action `actions`.
///
/// Other agents' invalid moves are treated as staying in place.
pub fn classify(map: &GridMap, positions: &[Cell], actions: &[Action], i: usize) -> Classification {
    let Some(ti) = target_of(map, positions[i], actions[i]) else {
        return Classification::Invalid;
    };
    let conflicts: Vec<usize> = (0..positions.len())
        .filter(|&j| j != i)
        .filter(|&j| {
            let tj = target_of(map, positions[j], actions[j]).unwrap_or(positions[j]);
            let vertex = tj == ti;
            let swap = ti == positions[j] && tj == positions[i] && ti != positions[i];
            vertex || swap
        })
        .collect();
    if conflicts.is_empty() {
        Classification::Valid
    } else {
        Classification::Restricted(conflicts)
    }
}

/// Convert intended actions into a conflict-free joint action.
pub fn resolve(map: &GridMap, positions: &[Cell], intended: &[Action], svos: &[f64]) -> Result<ResolutionOutcome> {
    let n = positions.len();
    if intended.len() != n || svos.len() != n {
        return Err(Error::Contract(format!(
            "resolve: {n} positions, {} intents, {} SVOs",
            intended.len(),
            svos.len()
        )));
    }
    if let Some(bad) = svos.iter().find(|z| !(0.0..=45.0).contains(*z)) {
        return Err(Error::Contract(format!("SVO {bad}° outside [0°, 45°]")));
    }

    let mut working = intended.to_vec();
    let mut idled = vec![false; n];
    let mut penalized = vec![false; n];
    let mut annotations = vec![Annotation::Normal; n];
    let mut chain_trace = Vec::new();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svos[b].total_cmp(&svos[a]).then(a.cmp(&b)));
    let mut queued = vec![true; n];
    let mut chain: VecDeque<usize> = order.into();

    let limit = 4 * n;
    while let Some(i) = chain.pop_front() {
        queued[i] = false;
        chain_trace.push(i);
        if chain_trace.len() > limit {
            return Err(Error::Internal(format!(
                "resolver exceeded {limit} chain evaluations for {n} agents"
            )));
        }
        if idled[i] {
            continue;
        }
        match classify(map, positions, &working, i) {
            Classification::Valid => {}
            Classification::Invalid => {
                working[i] = Action::Idle;
                idled[i] = true;
                penalized[i] = true;
                annotations[i] = Annotation::Invalidated;
            }
            Classification::Restricted(others) => {
                working[i] = Action::Idle;
                idled[i] = true;
                annotations[i] = Annotation::RestrictedIdled;
                for j in others {
                    if svos[i] > svos[j] {
                        penalized[i] = true;
                    } else if svos[j] > svos[i] {
                        penalized[j] = true;
                    }
                }
            }
        }
        if idled[i] {
            // Anyone heading into the now-occupied cell must be re-examined.
            for j in 0..n {
                if j != i
                    && !queued[j]
                    && !idled[j]
                    && working[j].is_move()
                    && target_of(map, positions[j], working[j]) == Some(positions[i])
                {
                    queued[j] = true;
                    chain.push_back(j);
                }
            }
        }
    }

    let outcome = ResolutionOutcome {
        actions: working,
        penalized,
        annotations,
        iterations: chain_trace.len(),
        chain_trace,
    };
    check_conditions(map, positions, &outcome.actions)?;
    Ok(outcome)
}

/// Verify a joint action is valid and free of vertex and swap conflicts.
pub fn check_conditions(map: &GridMap, positions: &[Cell], actions: &[Action]) -> Result<()> {
    let mut next = Vec::with_capacity(positions.len());
    for (i, (p, a)) in positions.iter().zip(actions).enumerate() {
        let t = target_of(map, *p, *a)
            .ok_or_else(|| Error::Contract(format!("agent {i}: {a:?} from {p} hits an obstacle")))?;
        next.push(t);
    }
    let mut seen = std::collections::HashMap::with_capacity(next.len());
    for (i, t) in next.iter().enumerate() {
        if let Some(j) = seen.insert(*t, i) {
            return Err(Error::Contract(format!("vertex conflict: agents {j} and {i} at {t}")));
        }
    }
    let at: std::collections::HashMap<Cell, usize> = positions.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    for (i, t) in next.iter().enumerate() {
        if *t == positions[i] {
            continue;
        }
        if let Some(&j) = at.get(t) {
            if next[j] == positions[i] {
                return Err(Error::Contract(format!("swap conflict: agents {i} and {j}")));
            }
        }
    }
    Ok(())
}

/// Baseline intents: each agent takes its first distance-decreasing move,
/// `Idle` on its goal.
pub fn greedy_intents(env: &crate::gridworld::Env) -> Vec<Action> {
    (0..env.n_agents())
        .map(|i| env.field(i).descent(env.map(), env.position(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::mapgen::{gen_random, read_map};
    use Action::*;

    fn open(w: usize, h: usize) -> GridMap {
        GridMap::empty(w, h).unwrap()
    }

    #[test]
    fn classify_static_and_dynamic() {
        let m = read_map("type octile\nheight 2\nwidth 3\nmap\n.@.\n...\n").unwrap();
        let pos = [Cell::new(0, 0), Cell::new(1, 2)];
        assert_eq!(classify(&m, &pos, &[Right, Idle], 0), Classification::Invalid);
        assert_eq!(classify(&m, &pos, &[Up, Idle], 0), Classification::Invalid);
        let pos = [Cell::new(1, 0), Cell::new(1, 2)];
        assert_eq!(
            classify(&m, &pos, &[Right, Left], 0),
            Classification::Restricted(vec![1])
        );
        assert_eq!(
            classify(&m, &pos, &[Right, Left], 1),
            Classification::Restricted(vec![0])
        );
        let pos = [Cell::new(1, 0), Cell::new(1, 1)];
        assert_eq!(
            classify(&m, &pos, &[Right, Left], 0),
            Classification::Restricted(vec![1])
        );
        assert_eq!(
            classify(&m, &pos, &[Right, Left], 1),
            Classification::Restricted(vec![0])
        );
        // Following into a vacated cell is fine.
        assert_eq!(classify(&m, &pos, &[Right, Right], 0), Classification::Valid);
    }

    #[test]
    fn compatible_intents_pass_through() {
        let m = open(4, 4);
        let pos = [Cell::new(0, 0), Cell::new(3, 3)];
        let out = resolve(&m, &pos, &[Right, Up], &[0.0, 45.0]).unwrap();
        assert_eq!(out.actions, vec![Right, Up]);
        assert_eq!(out.penalized, vec![false, false]);
        assert_eq!(out.annotations, vec![Annotation::Normal; 2]);
    }

    #[test]
    fn wall_move_is_idled_and_penalized() {
        let m = open(3, 3);
        let pos = [Cell::new(0, 0), Cell::new(2, 2)];
        let out = resolve(&m, &pos, &[Up, Left], &[22.5, 0.0]).unwrap();
        assert_eq!(out.actions, vec![Idle, Left]);
        assert_eq!(out.penalized, vec![true, false]);
        assert_eq!(out.annotations[0], Annotation::Invalidated);
    }

    #[test]
    fn swap_penalizes_only_the_prosocial_agent() {
        let m = open(3, 1 + 1);
        let pos = [Cell::new(0, 0), Cell::new(0, 1)];
        let out = resolve(&m, &pos, &[Right, Left], &[45.0, 0.0]).unwrap();
        assert_eq!(out.actions, vec![Idle, Idle]);
        assert_eq!(out.penalized, vec![true, false]);
        // Equal SVOs: nobody is penalized.
        let out = resolve(&m, &pos, &[Right, Left], &[10.0, 10.0]).unwrap();
        assert_eq!(out.actions, vec![Idle, Idle]);
        assert_eq!(out.penalized, vec![false, false]);
    }

    /// Five agents in a row all moving right; agent 1 at the head walks
    /// into a wall. SVO order 0 > 1 > 2 > 3 > 4.
    ///
    /// ```text
    /// cols:  0 1 2 3 4 5
    /// agent: 4 0 2 3 1 @
    /// ```
    pub(crate) fn follower_chain() -> (GridMap, Vec<Cell>, Vec<Action>, Vec<f64>) {
        let m = read_map("type octile\nheight 3\nwidth 7\nmap\n.......\n.....@.\n.......\n").unwrap();
        let cols = [1, 4, 2, 3, 0];
        let pos = cols.iter().map(|&c| Cell::new(1, c)).collect();
        let svos = vec![45.0, 33.75, 22.5, 11.25, 0.0];
        (m, pos, vec![Right; 5], svos)
    }

    #[test]
    fn follower_chain_cascade() {
        let (m, pos, intents, svos) = follower_chain();
        let out = resolve(&m, &pos, &intents, &svos).unwrap();
        assert_eq!(out.actions, vec![Idle; 5]);
        assert_eq!(out.chain_trace, vec![0, 1, 2, 3, 4, 2, 0, 4]);
        assert_eq!(out.penalized, vec![true, true, true, false, false]);
        assert_eq!(out.annotations[1], Annotation::Invalidated);
    }

    #[test]
    fn bad_inputs_are_contract_errors() {
        let m = open(3, 3);
        let pos = [Cell::new(0, 0)];
        assert!(resolve(&m, &pos, &[Idle, Idle], &[0.0]).is_err());
        assert!(resolve(&m, &pos, &[Idle], &[50.0]).is_err());
    }

    /// Joint action produced by `resolve`, checked step by step.
    fn assert_sound(m: &GridMap, pos: &[Cell], intents: &[Action], svos: &[f64]) {
        let out = resolve(m, pos, intents, svos).unwrap();
        let n = pos.len();
        check_conditions(m, pos, &out.actions).unwrap();
        assert!(out.iterations <= 4 * n);
        for i in 0..n {
            match out.annotations[i] {
                Annotation::Normal => assert_eq!(out.actions[i], intents[i]),
                _ => assert_eq!(out.actions[i], Idle),
            }
            if out.penalized[i] {
                let invalid = classify(m, pos, intents, i) == Classification::Invalid;
                // Some conflicting pair in which i is strictly more prosocial:
                // the partner either shares i's target, swaps with it, or
                // targets i's (possibly idled) cell.
                let ti = target_of(m, pos[i], intents[i]).unwrap_or(pos[i]);
                let pair = (0..n).any(|j| {
                    let tj = target_of(m, pos[j], intents[j]).unwrap_or(pos[j]);
                    j != i && svos[i] > svos[j] && (tj == ti || tj == pos[i] || ti == pos[j])
                });
                assert!(invalid || pair, "agent {i} penalized without cause");
            }
        }
        assert_eq!(resolve(m, pos, intents, svos).unwrap(), out);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn resolver_is_safe(seed in 0u64..1_000_000, n in 2usize..24, density in 0.0f64..0.35) {
            use rand::Rng;
            let Ok(sc) = gen_random(8, 8, density, n, seed) else { return Ok(()) };
            let mut rng = crate::rng::rng_from_seed(seed ^ 0xABCD);
            let intents: Vec<Action> = (0..n).map(|_| Action::ALL[rng.gen_range(0..5)]).collect();
            let svos: Vec<f64> = (0..n).map(|_| crate::social::svo_bin_angle(rng.gen_range(0..5), 5)).collect();
            assert_sound(&sc.map, &sc.starts, &intents, &svos);
        }
    }
}
