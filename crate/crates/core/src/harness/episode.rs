//! Running one scenario to termination under some policy.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::scripted::{scripted_policy_step, ScriptedMode};
use crate::error::Result;
use crate::geom::{Action, Cell};
use crate::gridworld::{Env, EnvConfig, EpisodeMetrics};
use crate::learner::{team_step, Policy};
use crate::mapgen::Scenario;
use crate::resolver::{greedy_intents, resolve, ResolutionOutcome};
use crate::rng::rng_from_seed;
use crate::social::SocialConfig;

#[derive(Debug, Clone)]
pub enum PolicySpec {
    /// Greedy descent for everyone at 0°, resolver only.
    Greedy,
    Scripted(ScriptedMode),
    Trained {
        policy: Arc<Policy>,
        greedy: bool,
    },
}

impl PolicySpec {
    pub fn label(&self) -> String {
        match self {
            PolicySpec::Greedy => "greedy".into(),
            PolicySpec::Scripted(ScriptedMode::HomogeneousSelfish) => "homo".into(),
            PolicySpec::Scripted(ScriptedMode::Heterogeneous) => "hetero".into(),
            PolicySpec::Trained { greedy: false, .. } => "trained".into(),
            PolicySpec::Trained { greedy: true, .. } => "trained-greedy".into(),
        }
    }
}

/// One line of an episode trace. Record 0 holds the start state and has no
/// actions or rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub positions: Vec<Cell>,
    pub actions: Option<Vec<Action>>,
    /// Degrees, as used by the resolver at this step.
    pub svos: Vec<f64>,
    pub rewards: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub metrics: EpisodeMetrics,
    pub goals: usize,
    pub trace: Vec<TraceRecord>,
    /// Largest resolver chain length seen, against `4 n`.
    pub max_resolver_iterations: usize,
}

impl EpisodeResult {
    /// Positions per timestep, starting with the start state.
    pub fn positions(&self) -> Vec<Vec<Cell>> {
        self.trace.iter().map(|r| r.positions.clone()).collect()
    }

    /// Trace as JSON lines followed by one line of metrics.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.trace {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.metrics)?);
        out.push('\n');
        Ok(out)
    }
}

/// Run `scenario` until every agent is on its goal or the step cap.
/// `seed` drives sampling for trained policies and is unused otherwise.
pub fn run_episode(
    scenario: &Scenario,
    policy: &PolicySpec,
    env_cfg: EnvConfig,
    social: &SocialConfig,
    seed: u64,
) -> Result<EpisodeResult> {
    let mut env = Env::new(scenario, env_cfg)?;
    let mut rng = rng_from_seed(seed);
    let mut trace = vec![TraceRecord {
        t: 0,
        positions: env.positions(),
        actions: None,
        svos: env.svo_angles(),
        rewards: None,
    }];
    let mut svo_trace = Vec::new();
    let mut prevented = 0;
    let mut max_iter = 0;
    while !env.is_done() {
        let (resolution, step) = match policy {
            PolicySpec::Trained { policy, greedy } => {
                let ts = team_step(&mut env, policy, social, &mut rng, *greedy)?;
                (ts.resolution, ts.step)
            }
            PolicySpec::Greedy => {
                let intents = greedy_intents(&env);
                apply(&mut env, &intents)?
            }
            PolicySpec::Scripted(mode) => {
                let s = scripted_policy_step(&mut env, *mode, social)?;
                apply(&mut env, &s.intents)?
            }
        };
        prevented += resolution.interventions();
        max_iter = max_iter.max(resolution.iterations);
        let svos = env.svo_angles();
        svo_trace.push(svos.clone());
        trace.push(TraceRecord {
            t: step.t,
            positions: env.positions(),
            actions: Some(step.actions),
            svos,
            rewards: Some(step.rewards),
        });
    }
    let goals = env.agents().iter().filter(|a| a.on_goal()).count();
    Ok(EpisodeResult {
        metrics: EpisodeMetrics {
            success: env.all_on_goal(),
            episode_length: env.t(),
            arrival_rate: env.arrival_rate(),
            collisions_prevented: prevented,
            svo_trace,
        },
        goals,
        trace,
        max_resolver_iterations: max_iter,
    })
}

fn apply(env: &mut Env, intents: &[Action]) -> Result<(ResolutionOutcome, crate::gridworld::StepOutcome)> {
    let resolution = resolve(env.map(), &env.positions(), intents, &env.svo_angles())?;
    let step = env.step(&resolution.actions, &resolution.penalized)?;
    Ok((resolution, step))
}
