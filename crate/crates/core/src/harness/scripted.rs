//! Hand-written SVO policies for the corridor dilemma.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::Exec;
use crate::geom::{Action, Cell};
use crate::gridworld::Env;
use crate::pathing::{bfs_from, UNREACHABLE};
use crate::resolver::greedy_intents;
use crate::social::{compute_overlap_with_fields, update_fixed_partners, OverlapMatrix, SocialConfig, SvoState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedMode {
    /// Everyone egoistic and greedy.
    HomogeneousSelfish,
    /// Lower index of each conflicting partner pair turns prosocial and
    /// steps aside.
    Heterogeneous,
}

#[derive(Debug, Clone)]
pub struct ScriptedStep {
    pub intents: Vec<Action>,
    /// SVO bin assigned to each agent.
    pub svo_bins: Vec<usize>,
    pub partners: Vec<usize>,
    pub overlap: OverlapMatrix,
}

/// Update partners and SVOs on `env` and return the intended actions.
///
/// Heterogeneous mode gives the top bin (45°) to agent `i` when its fixed
/// partner `p != i` overlaps it and `i < p`; that agent retreats from
/// `p`'s path flow instead of descending. Everyone else gets bin 0 and
/// descends.
pub fn scripted_policy_step(env: &mut Env, mode: ScriptedMode, social: &SocialConfig) -> Result<ScriptedStep> {
    let n = env.n_agents();
    let bins = env.config().svo_bins;
    let overlap = compute_overlap_with_fields(
        env.map(),
        env.fields(),
        &env.positions(),
        social.overlap_decay,
        Exec::Sequential,
    )?;
    let partners = update_fixed_partners(&overlap.partners, &overlap.matrix, &env.partners());
    for (i, p) in partners.iter().enumerate() {
        env.set_partner(i, *p);
    }
    let mut intents = greedy_intents(env);
    let mut svo_bins = vec![0; n];
    if mode == ScriptedMode::Heterogeneous {
        for i in 0..n {
            let p = partners[i];
            if p != i && overlap.matrix.get(i, p) > 0.0 && i < p {
                svo_bins[i] = bins - 1;
                intents[i] = retreat_action(env, i, &overlap.flows[p].vertices, env.position(p));
            }
        }
    }
    for (i, b) in svo_bins.iter().enumerate() {
        env.set_svo(i, SvoState::fixed(*b, bins));
    }
    Ok(ScriptedStep {
        intents,
        svo_bins,
        partners,
        overlap: overlap.matrix,
    })
}

/// Step away from the cells in `flow`.
///
/// Off the flow, move to the neighbour farthest from it (first in Up, Down,
/// Left, Right on ties) if that is farther than the current cell. On the
/// flow, take the first step of a BFS, avoiding `partner_at`, towards the
/// nearest cell off it.
pub fn retreat_action(env: &Env, i: usize, flow: &[Cell], partner_at: Cell) -> Action {
    let map = env.map();
    let pos = env.position(i);
    let d = bfs_from(map, flow);
    let here = d[map.index(pos)];
    if here == UNREACHABLE {
        return Action::Idle;
    }
    if here > 0 {
        let mut best = (Action::Idle, here);
        for (a, c) in map.neighbors(pos) {
            let dc = d[map.index(c)];
            if dc != UNREACHABLE && dc > best.1 {
                best = (a, dc);
            }
        }
        return best.0;
    }
    // BFS remembering the first move of each branch.
    let mut first = vec![None; map.len()];
    let mut seen = vec![false; map.len()];
    let mut queue = VecDeque::new();
    seen[map.index(pos)] = true;
    queue.push_back(pos);
    while let Some(c) = queue.pop_front() {
        for (a, nb) in map.neighbors(c) {
            let k = map.index(nb);
            if seen[k] || nb == partner_at {
                continue;
            }
            seen[k] = true;
            let via = if c == pos {
                a
            } else {
                first[map.index(c)].expect("set on enqueue")
            };
            if d[k] != UNREACHABLE && d[k] >= 1 {
                return via;
            }
            first[k] = Some(via);
            queue.push_back(nb);
        }
    }
    Action::Idle
}
