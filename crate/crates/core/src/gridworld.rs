//! Discrete-time MAPF environment.
//!
//! Agents commit intents, the resolver sanitizes them, and [`Env::step`]
//! applies the joint action atomically. The environment never repairs an
//! unsafe joint action: vertex or swap conflicts are contract errors.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Action, Cell};
use crate::mapgen::{GridMap, Scenario};
use crate::pathing::{detour_exceeds, distance_field, DistanceField};
use crate::resolver::{check_conditions, COLLISION_PENALTY};
use crate::social::{SvoState, DEFAULT_SVO_BINS};

pub const MOVE_REWARD: f64 = -0.3;
pub const IDLE_OFF_GOAL_REWARD: f64 = -0.3;
pub const IDLE_ON_GOAL_REWARD: f64 = 0.0;
/// Per blocked agent.
pub const BLOCKING_REWARD: f64 = -1.0;
pub const BLOCK_THRESHOLD: u32 = 10;
pub const DEFAULT_MAX_EPISODE_LENGTH: usize = 256;
/// Distances in the goal vector are clamped to this many cells and scaled
/// into [0, 1].
pub const GOAL_MAGNITUDE_CLAMP: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub max_episode_length: usize,
    /// Extra path length beyond which an agent counts as blocked.
    pub block_threshold: u32,
    /// Side of the square observation window (odd).
    pub fov: usize,
    /// Side of the central window carrying the heuristic plane (odd, ≤ fov).
    pub heuristic_fov: usize,
    pub svo_bins: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            max_episode_length: DEFAULT_MAX_EPISODE_LENGTH,
            block_threshold: BLOCK_THRESHOLD,
            fov: 9,
            heuristic_fov: 5,
            svo_bins: DEFAULT_SVO_BINS,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fov.is_multiple_of(2) || self.heuristic_fov.is_multiple_of(2) || self.heuristic_fov > self.fov {
            return Err(Error::Param(format!(
                "fov {} / heuristic fov {} must be odd with heuristic ≤ fov",
                self.fov, self.heuristic_fov
            )));
        }
        if self.svo_bins == 0 || self.max_episode_length == 0 {
            return Err(Error::Param("svo_bins and max_episode_length must be positive".into()));
        }
        Ok(())
    }

    /// Three FoV planes, a 4-long goal vector, own previous SVO
    /// distribution, partner's SVO one-hot and the partner offset.
    pub fn observation_len(&self) -> usize {
        3 * self.fov * self.fov + 4 + 2 * self.svo_bins + 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: usize,
    pub pos: Cell,
    pub goal: Cell,
    pub svo: SvoState,
    pub partner: usize,
}

impl AgentState {
    pub fn on_goal(&self) -> bool {
        self.pos == self.goal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub t: usize,
    pub actions: Vec<Action>,
    /// External reward per agent.
    pub rewards: Vec<f64>,
    pub blocked: Vec<usize>,
    pub on_goal: Vec<bool>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub success: bool,
    pub episode_length: usize,
    pub arrival_rate: f64,
    pub collisions_prevented: usize,
    /// SVO angle per step per agent.
    pub svo_trace: Vec<Vec<f64>>,
}

/// One episode of one scenario.
#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    map: Arc<GridMap>,
    fields: Arc<Vec<DistanceField>>,
    agents: Vec<AgentState>,
    t: usize,
    done: bool,
    /// Blocking verdicts keyed by (agent j, cell of j, cell of blocker).
    block_cache: HashMap<(usize, usize, usize), bool>,
}

impl Env {
    pub fn new(scenario: &Scenario, cfg: EnvConfig) -> Result<Self> {
        scenario.validate()?;
        let map = Arc::new(scenario.map.clone());
        let fields = scenario
            .goals
            .iter()
            .map(|g| distance_field(&map, *g))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(map, Arc::new(fields), &scenario.starts, cfg)
    }

    /// Build from a shared map and precomputed goal fields (one per agent).
    pub fn from_parts(
        map: Arc<GridMap>,
        fields: Arc<Vec<DistanceField>>,
        starts: &[Cell],
        cfg: EnvConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if fields.len() != starts.len() {
            return Err(Error::Contract(format!(
                "{} goal fields for {} agents",
                fields.len(),
                starts.len()
            )));
        }
        let agents = starts
            .iter()
            .zip(fields.iter())
            .enumerate()
            .map(|(id, (s, f))| AgentState {
                id,
                pos: *s,
                goal: f.goal(),
                svo: SvoState::initial(cfg.svo_bins),
                partner: id,
            })
            .collect();
        let mut env = Env {
            cfg,
            map,
            fields,
            agents,
            t: 0,
            done: false,
            block_cache: HashMap::new(),
        };
        env.done = env.all_on_goal();
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn shared_map(&self) -> Arc<GridMap> {
        self.map.clone()
    }

    pub fn fields(&self) -> &[DistanceField] {
        &self.fields
    }

    pub fn field(&self, i: usize) -> &DistanceField {
        &self.fields[i]
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> &AgentState {
        &self.agents[i]
    }

    pub fn position(&self, i: usize) -> Cell {
        self.agents[i].pos
    }

    pub fn positions(&self) -> Vec<Cell> {
        self.agents.iter().map(|a| a.pos).collect()
    }

    pub fn goals(&self) -> Vec<Cell> {
        self.agents.iter().map(|a| a.goal).collect()
    }

    pub fn svo_angles(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.svo.angle).collect()
    }

    pub fn set_svo(&mut self, i: usize, svo: SvoState) {
        self.agents[i].svo = svo;
    }

    pub fn set_partner(&mut self, i: usize, partner: usize) {
        self.agents[i].partner = partner;
    }

    pub fn partners(&self) -> Vec<usize> {
        self.agents.iter().map(|a| a.partner).collect()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn all_on_goal(&self) -> bool {
        self.agents.iter().all(AgentState::on_goal)
    }

    pub fn arrival_rate(&self) -> f64 {
        self.agents.iter().filter(|a| a.on_goal()).count() as f64 / self.agents.len() as f64
    }

    /// Apply a sanitized joint action. `penalized` marks agents the resolver
    /// charged a collision penalty.
    pub fn step(&mut self, actions: &[Action], penalized: &[bool]) -> Result<StepOutcome> {
        let n = self.agents.len();
        if self.done {
            return Err(Error::Contract("step on a terminated episode".into()));
        }
        if actions.len() != n || penalized.len() != n {
            return Err(Error::Contract(format!(
                "joint action of {} / {} penalty flags for {n} agents",
                actions.len(),
                penalized.len()
            )));
        }
        check_conditions(&self.map, &self.positions(), actions)?;
        for (agent, a) in self.agents.iter_mut().zip(actions) {
            if a.is_move() {
                agent.pos = self.map.target(agent.pos, *a).expect("checked above");
            }
        }
        self.t += 1;

        let blocked = self.cached_blocking_counts();
        let rewards = (0..n)
            .map(|i| {
                let agent = &self.agents[i];
                let base = match actions[i] {
                    Action::Idle if agent.on_goal() => IDLE_ON_GOAL_REWARD,
                    Action::Idle => IDLE_OFF_GOAL_REWARD,
                    _ => MOVE_REWARD,
                };
                let collision = if penalized[i] { COLLISION_PENALTY } else { 0.0 };
                base + collision + BLOCKING_REWARD * blocked[i] as f64
            })
            .collect();
        let on_goal: Vec<bool> = self.agents.iter().map(AgentState::on_goal).collect();
        self.done = on_goal.iter().all(|g| *g) || self.t >= self.cfg.max_episode_length;
        Ok(StepOutcome {
            t: self.t,
            actions: actions.to_vec(),
            rewards,
            blocked,
            on_goal,
            done: self.done,
        })
    }

    /// Number of other agents whose shortest path becomes impossible, or
    /// longer by more than the block threshold, with agent `i`'s cell
    /// treated as an obstacle.
    pub fn detect_blocking(&self, i: usize) -> usize {
        (0..self.agents.len()).filter(|&j| j != i && self.blocks(i, j)).count()
    }

    pub fn blocking_counts(&self) -> Vec<usize> {
        (0..self.agents.len()).map(|i| self.detect_blocking(i)).collect()
    }

    fn blocks(&self, i: usize, j: usize) -> bool {
        let pi = self.agents[i].pos;
        let pj = self.agents[j].pos;
        let field = &self.fields[j];
        let (Some(dj), Some(di)) = (field.get(pj), field.get(pi)) else {
            return false;
        };
        // A cell off every shortest path cannot lengthen it.
        if pj.manhattan(pi) as u32 + di > dj {
            return false;
        }
        detour_exceeds(&self.map, field, pj, pi, dj + self.cfg.block_threshold)
    }

    /// [`Env::blocking_counts`], memoized across steps; the verdict depends
    /// only on the two cells and `j`'s goal.
    fn cached_blocking_counts(&mut self) -> Vec<usize> {
        let n = self.agents.len();
        let mut counts = vec![0; n];
        for (i, count) in counts.iter_mut().enumerate() {
            for j in (0..n).filter(|&j| j != i) {
                let key = (
                    j,
                    self.map.index(self.agents[j].pos),
                    self.map.index(self.agents[i].pos),
                );
                let hit = match self.block_cache.get(&key) {
                    Some(&b) => b,
                    None => {
                        let b = self.blocks(i, j);
                        self.block_cache.insert(key, b);
                        b
                    }
                };
                *count += usize::from(hit);
            }
        }
        counts
    }

    /// Flattened local observation of agent `i`.
    pub fn observe(&self, i: usize) -> Vec<f64> {
        let cfg = &self.cfg;
        let f = cfg.fov;
        let half = (f / 2) as isize;
        let h_half = (cfg.heuristic_fov / 2) as isize;
        let me = &self.agents[i];
        let field = &self.fields[i];
        let my_d = field.get(me.pos);
        let mut obs = vec![0.0; cfg.observation_len()];
        let (occ, rest) = obs.split_at_mut(f * f);
        let (others, rest) = rest.split_at_mut(f * f);
        let (heur, rest) = rest.split_at_mut(f * f);

        let mut occupied = vec![false; self.map.len()];
        for a in &self.agents {
            if a.id != i {
                occupied[self.map.index(a.pos)] = true;
            }
        }
        for dr in -half..=half {
            for dc in -half..=half {
                let k = ((dr + half) as usize) * f + (dc + half) as usize;
                let cell = offset(me.pos, dr, dc).filter(|c| self.map.in_bounds(*c));
                let Some(c) = cell else {
                    occ[k] = 1.0;
                    continue;
                };
                if self.map.is_obstacle(c) {
                    occ[k] = 1.0;
                    continue;
                }
                if occupied[self.map.index(c)] {
                    others[k] = 1.0;
                }
                if dr.abs() <= h_half && dc.abs() <= h_half {
                    if let (Some(d), Some(md)) = (field.get(c), my_d) {
                        if d < md {
                            heur[k] = 1.0;
                        }
                    }
                }
            }
        }

        let (goal, rest) = rest.split_at_mut(4);
        let dr = me.goal.row as f64 - me.pos.row as f64;
        let dc = me.goal.col as f64 - me.pos.col as f64;
        let e = dr.hypot(dc);
        if e > 0.0 {
            goal[0] = dr / e;
            goal[1] = dc / e;
            goal[2] = e.min(GOAL_MAGNITUDE_CLAMP) / GOAL_MAGNITUDE_CLAMP;
            let bfs = my_d.map_or(GOAL_MAGNITUDE_CLAMP, |d| d as f64);
            goal[3] = bfs.min(GOAL_MAGNITUDE_CLAMP) / GOAL_MAGNITUDE_CLAMP;
        }

        let k = cfg.svo_bins;
        let (own, rest) = rest.split_at_mut(k);
        own.copy_from_slice(&me.svo.distribution);
        let (partner_svo, offset_out) = rest.split_at_mut(k);
        if me.partner != i {
            let p = &self.agents[me.partner];
            partner_svo[p.svo.sampled_bin] = 1.0;
            let pr = (p.pos.row as f64 - me.pos.row as f64).clamp(-(half as f64), half as f64);
            let pc = (p.pos.col as f64 - me.pos.col as f64).clamp(-(half as f64), half as f64);
            offset_out[0] = pr / half.max(1) as f64;
            offset_out[1] = pc / half.max(1) as f64;
        }
        obs
    }
}

fn offset(c: Cell, dr: isize, dc: isize) -> Option<Cell> {
    Some(Cell::new(c.row.checked_add_signed(dr)?, c.col.checked_add_signed(dc)?))
}
