//! Experience collection over an ensemble of environments.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::gae::gae_segmented;
use super::loss::{LossConfig, Sample};
use super::policy::{team_step, Policy};
use crate::error::Result;
use crate::exec::Exec;
use crate::gridworld::{Env, EnvConfig};
use crate::mapgen::{gen_corridor_mixture, Scenario};
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::social::SocialConfig;

/// Corridor training distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Curriculum {
    pub p_recess: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for Curriculum {
    fn default() -> Self {
        Curriculum {
            p_recess: 0.8,
            min_len: 4,
            max_len: 8,
        }
    }
}

impl Curriculum {
    pub fn lengths(&self) -> RangeInclusive<usize> {
        self.min_len..=self.max_len
    }

    pub fn scenario(&self, seed: u64) -> Result<Scenario> {
        Ok(gen_corridor_mixture(self.p_recess, self.lengths(), seed)?.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStat {
    pub goals: usize,
    pub n_agents: usize,
    pub length: usize,
    /// Mean over agents of the summed external reward.
    pub reward: f64,
}

/// One environment of the ensemble with its own RNG and episode counter.
#[derive(Debug, Clone)]
pub struct EnvSlot {
    pub env: Env,
    rng: SimRng,
    seed: u64,
    episode: u64,
    returns: Vec<f64>,
    /// Per agent, samples of the episode in progress.
    open: Vec<Vec<Sample>>,
}

/// Samples of one agent over one contiguous stretch, and the value after it.
struct Stream {
    samples: Vec<Sample>,
    terminal: bool,
    bootstrap: (f64, f64),
}

impl EnvSlot {
    pub fn new(curriculum: &Curriculum, env_cfg: EnvConfig, seed: u64) -> Result<Self> {
        let env = Env::new(&curriculum.scenario(derive_seed(seed, &[0]))?, env_cfg)?;
        let n = env.n_agents();
        Ok(EnvSlot {
            env,
            rng: rng_from_seed(derive_seed(seed, &[u64::MAX])),
            seed,
            episode: 0,
            returns: vec![0.0; n],
            open: vec![Vec::new(); n],
        })
    }

    fn reset(&mut self, curriculum: &Curriculum) -> Result<()> {
        self.episode += 1;
        let sc = curriculum.scenario(derive_seed(self.seed, &[self.episode]))?;
        let env = Env::new(&sc, *self.env.config())?;
        self.returns = vec![0.0; env.n_agents()];
        self.open = vec![Vec::new(); env.n_agents()];
        self.env = env;
        Ok(())
    }

    fn run(
        &mut self,
        policy: &Policy,
        social: &SocialConfig,
        curriculum: &Curriculum,
        steps: usize,
    ) -> Result<(Vec<Stream>, Vec<EpisodeStat>)> {
        let mut streams = Vec::new();
        let mut stats = Vec::new();
        for _ in 0..steps {
            let ts = team_step(&mut self.env, policy, social, &mut self.rng, false)?;
            let n = self.env.n_agents();
            for i in 0..n {
                let d = &ts.decisions[i];
                self.returns[i] += ts.step.rewards[i];
                self.open[i].push(Sample {
                    obs: ts.observations[i].clone(),
                    svo_bin: d.svo_bin,
                    action: d.action,
                    logp_svo_old: d.logp_svo,
                    logp_action_old: d.logp_action,
                    value_action_old: d.value_action,
                    value_svo_old: d.value_svo,
                    reward_action: ts.reward_action[i],
                    reward_svo: ts.reward_svo[i],
                    valid: ts.valid[i],
                    blocking: ts.blocking[i],
                    z_exp: ts.z_exp[i].clone(),
                    alpha: ts.alpha[i],
                    adv_action: 0.0,
                    adv_svo: 0.0,
                    ret_action: 0.0,
                    ret_svo: 0.0,
                });
            }
            if ts.step.done {
                stats.push(EpisodeStat {
                    goals: ts.step.on_goal.iter().filter(|g| **g).count(),
                    n_agents: n,
                    length: ts.step.t,
                    reward: self.returns.iter().sum::<f64>() / n as f64,
                });
                for open in self.open.drain(..) {
                    streams.push(Stream {
                        samples: open,
                        terminal: true,
                        bootstrap: (0.0, 0.0),
                    });
                }
                self.reset(curriculum)?;
            }
        }
        // Cut the episode in progress and bootstrap from the current state.
        for i in 0..self.env.n_agents() {
            let samples = std::mem::take(&mut self.open[i]);
            if samples.is_empty() {
                continue;
            }
            let bootstrap = policy.values(&self.env.observe(i));
            streams.push(Stream {
                samples,
                terminal: false,
                bootstrap,
            });
        }
        Ok((streams, stats))
    }
}

/// Fill advantages and returns of one stream for both reward channels.
fn finish_stream(stream: Stream, loss: &LossConfig) -> Result<Vec<Sample>> {
    let mut samples = stream.samples;
    let len = samples.len();
    let mut ends = vec![false; len];
    ends[len - 1] = true;
    for (channel, boot) in [(0, stream.bootstrap.0), (1, stream.bootstrap.1)] {
        let pick = |s: &Sample| {
            if channel == 0 {
                (s.reward_action, s.value_action_old)
            } else {
                (s.reward_svo, s.value_svo_old)
            }
        };
        let rewards: Vec<f64> = samples.iter().map(|s| pick(s).0).collect();
        let values: Vec<f64> = samples.iter().map(|s| pick(s).1).collect();
        let mut next: Vec<f64> = values[1..].to_vec();
        next.push(if stream.terminal { 0.0 } else { boot });
        let (adv, ret) = gae_segmented(&rewards, &values, &next, &ends, loss.gamma, loss.lambda)?;
        for (s, (a, r)) in samples.iter_mut().zip(adv.into_iter().zip(ret)) {
            if channel == 0 {
                s.adv_action = a;
                s.ret_action = r;
            } else {
                s.adv_svo = a;
                s.ret_svo = r;
            }
        }
    }
    Ok(samples)
}

/// Run every slot for `steps` team timesteps and return samples with
/// advantages filled in, plus the episodes that finished. Output order is
/// slot order regardless of `exec`.
pub fn collect_rollout(
    slots: &mut [EnvSlot],
    policy: &Policy,
    social: &SocialConfig,
    curriculum: &Curriculum,
    loss: &LossConfig,
    steps: usize,
    exec: Exec,
) -> Result<(Vec<Sample>, Vec<EpisodeStat>)> {
    type SlotResult = Option<Result<(Vec<Sample>, Vec<EpisodeStat>)>>;
    let mut results: Vec<SlotResult> = Vec::new();
    results.resize_with(slots.len(), || None);
    let mut pairs: Vec<(&mut EnvSlot, &mut SlotResult)> = slots.iter_mut().zip(results.iter_mut()).collect();
    exec.for_each_mut(&mut pairs, |_, (slot, out)| {
        let r = slot
            .run(policy, social, curriculum, steps)
            .and_then(|(streams, stats)| {
                let mut samples = Vec::new();
                for s in streams {
                    samples.extend(finish_stream(s, loss)?);
                }
                Ok((samples, stats))
            });
        **out = Some(r);
    });
    let mut samples = Vec::new();
    let mut stats = Vec::new();
    for r in results {
        let (s, e) = r.expect("every slot ran")?;
        samples.extend(s);
        stats.extend(e);
    }
    Ok((samples, stats))
}

/// `n` ensemble slots seeded from `seed`.
pub fn make_slots(n: usize, curriculum: &Curriculum, env_cfg: EnvConfig, seed: u64) -> Result<Vec<EnvSlot>> {
    (0..n)
        .map(|i| EnvSlot::new(curriculum, env_cfg, derive_seed(seed, &[i as u64])))
        .collect()
}
