//! Instance batches and the corridor case study.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::episode::{run_episode, PolicySpec};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gridworld::EnvConfig;
use crate::mapgen::{gen_corridor_mixture, gen_maze, gen_random, gen_room, CorridorKind, MapFamily, Scenario};
use crate::rng::derive_seed;
use crate::social::SocialConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub family: MapFamily,
    pub width: usize,
    pub height: usize,
    /// Obstacle density; random maps only.
    pub density: f64,
    pub n_agents: usize,
    pub instances: usize,
    pub seed: u64,
    pub env: EnvConfig,
    pub social: SocialConfig,
    /// Record wall-clock times. Off by default so reports are reproducible.
    pub timing: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            family: MapFamily::Random,
            width: 32,
            height: 32,
            density: 0.2,
            n_agents: 8,
            instances: 200,
            seed: 0,
            env: EnvConfig::default(),
            social: SocialConfig::default(),
            timing: false,
        }
    }
}

impl BenchConfig {
    pub fn instance_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, &[index as u64])
    }

    pub fn scenario(&self, index: usize) -> Result<Scenario> {
        let seed = self.instance_seed(index);
        match self.family {
            MapFamily::Random => gen_random(self.width, self.height, self.density, self.n_agents, seed),
            MapFamily::Room => gen_room(self.width, self.height, self.n_agents, seed),
            MapFamily::Maze => gen_maze(self.width, self.height, self.n_agents, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub index: usize,
    pub seed: u64,
    pub success: bool,
    pub episode_length: usize,
    pub arrival_rate: f64,
    pub collisions_prevented: usize,
    pub max_resolver_iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchConfig,
    pub policy: String,
    pub instances: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_episode_length: f64,
    pub mean_arrival_rate: f64,
    pub collisions_prevented: usize,
    /// Mean wall-clock over all instances.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_general_s: Option<f64>,
    /// Mean wall-clock over solved instances; `None` when none solved.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_success_s: Option<f64>,
    pub per_instance: Vec<InstanceResult>,
}

impl BenchmarkReport {
    pub fn from_instances(config: BenchConfig, policy: String, per_instance: Vec<InstanceResult>) -> Self {
        let n = per_instance.len();
        let nf = n.max(1) as f64;
        let successes = per_instance.iter().filter(|r| r.success).count();
        let (time_general_s, time_success_s) = if config.timing {
            let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            let all = per_instance.iter().filter_map(|r| r.wall_s).collect();
            let ok = per_instance
                .iter()
                .filter(|r| r.success)
                .filter_map(|r| r.wall_s)
                .collect();
            (mean(all), mean(ok))
        } else {
            (None, None)
        };
        BenchmarkReport {
            config,
            policy,
            instances: n,
            successes,
            success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
            mean_episode_length: per_instance.iter().map(|r| r.episode_length as f64).sum::<f64>() / nf,
            mean_arrival_rate: per_instance.iter().map(|r| r.arrival_rate).sum::<f64>() / nf,
            collisions_prevented: per_instance.iter().map(|r| r.collisions_prevented).sum(),
            time_general_s,
            time_success_s,
            per_instance,
        }
    }

    /// Per-instance rows: `index,seed,success,episode_length,arrival_rate,collisions_prevented`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,seed,success,episode_length,arrival_rate,collisions_prevented\n");
        for r in &self.per_instance {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.index, r.seed, r.success as u8, r.episode_length, r.arrival_rate, r.collisions_prevented
            ));
        }
        out
    }

    /// One numeric column of the per-instance table, for t-tests.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let f: fn(&InstanceResult) -> f64 = match name {
            "success" => |r| r.success as u8 as f64,
            "episode_length" => |r| r.episode_length as f64,
            "arrival_rate" => |r| r.arrival_rate,
            "collisions_prevented" => |r| r.collisions_prevented as f64,
            _ => return Err(Error::Param(format!("unknown metric column {name:?}"))),
        };
        Ok(self.per_instance.iter().map(f).collect())
    }
}

/// Generate `config.instances` scenarios and run each to termination.
/// Instance `i` uses seed `derive_seed(config.seed, [i])`, so the report does
/// not depend on `exec`.
pub fn run_batch(config: &BenchConfig, policy: &PolicySpec, exec: Exec) -> Result<BenchmarkReport> {
    config.env.validate()?;
    let rows = exec.try_map(config.instances, |i| -> Result<InstanceResult> {
        let start = Instant::now();
        let sc = config.scenario(i)?;
        let seed = config.instance_seed(i);
        let r = run_episode(&sc, policy, config.env, &config.social, derive_seed(seed, &[1]))?;
        Ok(InstanceResult {
            index: i,
            seed,
            success: r.metrics.success,
            episode_length: r.metrics.episode_length,
            arrival_rate: r.metrics.arrival_rate,
            collisions_prevented: r.metrics.collisions_prevented,
            max_resolver_iterations: r.max_resolver_iterations,
            wall_s: config.timing.then(|| start.elapsed().as_secs_f64()),
        })
    })?;
    Ok(BenchmarkReport::from_instances(config.clone(), policy.label(), rows))
}

/// Expected goals per two-agent episode when recess maps yield `goals_recess`
/// and i-shape maps `goals_ishape`.
pub fn expected_goals(p_recess: f64, goals_recess: f64, goals_ishape: f64) -> f64 {
    p_recess * goals_recess + (1.0 - p_recess) * goals_ishape
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseStudyConfig {
    pub p_recess: f64,
    pub p_ishape: f64,
    pub episodes: usize,
    pub seed: u64,
    pub min_len: usize,
    pub max_len: usize,
    pub env: EnvConfig,
    pub social: SocialConfig,
}

impl Default for CaseStudyConfig {
    fn default() -> Self {
        CaseStudyConfig {
            p_recess: 0.8,
            p_ishape: 0.2,
            episodes: 1000,
            seed: 0,
            min_len: 4,
            max_len: 8,
            env: EnvConfig::default(),
            social: SocialConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyReport {
    pub config: CaseStudyConfig,
    pub policy: String,
    pub mean_goals: f64,
    pub recess_episodes: usize,
    pub ishape_episodes: usize,
    /// `None` when no episode of that kind was drawn.
    pub mean_goals_recess: Option<f64>,
    pub mean_goals_ishape: Option<f64>,
    pub successes: usize,
}

/// Two-agent corridor episodes whose kind is drawn per episode.
pub fn corridor_case_study(config: &CaseStudyConfig, policy: &PolicySpec, exec: Exec) -> Result<CaseStudyReport> {
    let (pr, pi) = (config.p_recess, config.p_ishape);
    if !(0.0..=1.0).contains(&pr) || !(0.0..=1.0).contains(&pi) || ((pr + pi) - 1.0).abs() > 1e-9 {
        return Err(Error::Param(format!(
            "p_recess {pr} and p_ishape {pi} must be probabilities summing to 1"
        )));
    }
    if config.episodes == 0 || config.min_len > config.max_len {
        return Err(Error::Param("need episodes > 0 and min_len <= max_len".into()));
    }
    let rows = exec.try_map(config.episodes, |e| -> Result<(CorridorKind, usize)> {
        let seed = derive_seed(config.seed, &[e as u64]);
        let (kind, sc) = gen_corridor_mixture(pr, config.min_len..=config.max_len, seed)?;
        let r = run_episode(&sc, policy, config.env, &config.social, derive_seed(seed, &[1]))?;
        Ok((kind, r.goals))
    })?;
    let tally = |k: CorridorKind| {
        let g: Vec<usize> = rows.iter().filter(|r| r.0 == k).map(|r| r.1).collect();
        let mean = (!g.is_empty()).then(|| g.iter().sum::<usize>() as f64 / g.len() as f64);
        (g.len(), mean)
    };
    let (recess_episodes, mean_goals_recess) = tally(CorridorKind::Recess);
    let (ishape_episodes, mean_goals_ishape) = tally(CorridorKind::IShape);
    Ok(CaseStudyReport {
        config: config.clone(),
        policy: policy.label(),
        mean_goals: rows.iter().map(|r| r.1).sum::<usize>() as f64 / rows.len() as f64,
        recess_episodes,
        ishape_episodes,
        mean_goals_recess,
        mean_goals_ishape,
        successes: rows.iter().filter(|r| r.1 == 2).count(),
    })
}
