//! Training loop, optimizer and checkpoints.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::loss::{smp3o_loss, LossConfig, LossReport, Sample};
use super::network::{NetConfig, PolicyLayout};
use super::policy::Policy;
use super::rollout::{collect_rollout, make_slots, Curriculum};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gridworld::EnvConfig;
use crate::rng::{derive_seed, rng_from_seed};
use crate::social::SocialConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    /// Team timesteps summed over the ensemble.
    pub total_steps: usize,
    pub n_envs: usize,
    pub rollout_steps: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub grad_clip: f64,
    pub hidden: usize,
    /// Standardize each advantage stream per rollout batch.
    pub normalize_advantages: bool,
    pub env: EnvConfig,
    pub social: SocialConfig,
    pub loss: LossConfig,
    pub curriculum: Curriculum,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            total_steps: 200_000,
            n_envs: 8,
            rollout_steps: 256,
            epochs: 10,
            minibatch: 16,
            learning_rate: 1e-4,
            momentum: 0.9,
            grad_clip: 10.0,
            hidden: 64,
            normalize_advantages: false,
            env: EnvConfig::default(),
            social: SocialConfig::default(),
            loss: LossConfig::default(),
            curriculum: Curriculum::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.loss.validate()?;
        if self.n_envs == 0 || self.rollout_steps == 0 || self.minibatch == 0 || self.hidden == 0 {
            return Err(Error::Param(
                "n_envs, rollout_steps, minibatch and hidden must be positive".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Param(format!("learning rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.grad_clip <= 0.0 {
            return Err(Error::Param("momentum must be in [0, 1) and grad_clip positive".into()));
        }
        Ok(())
    }

    pub fn iterations(&self) -> usize {
        self.total_steps.div_ceil(self.n_envs * self.rollout_steps)
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            obs_len: self.env.observation_len(),
            svo_bins: self.env.svo_bins,
            hidden: self.hidden,
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(self)?)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub env_steps: usize,
    pub episodes: usize,
    /// Mean per-agent external return of the episodes finished this
    /// iteration.
    pub mean_reward: f64,
    /// Mean number of agents on goal at the end of those episodes.
    pub goals: f64,
    pub ep_len: f64,
    /// Minibatch-averaged loss terms over all epochs.
    pub loss: LossReport,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub config: TrainConfig,
    pub net: NetConfig,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(config: &TrainConfig, params: Vec<f64>) -> Result<Self> {
        Ok(Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: config.hash()?,
            config: config.clone(),
            net: config.net_config(),
            params,
        })
    }

    pub fn policy(&self) -> Policy {
        Policy::new(PolicyLayout::new(self.net), self.params.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Contract(format!(
                "checkpoint version {} unsupported",
                ck.version
            )));
        }
        if ck.config.hash()? != ck.config_hash || ck.net != ck.config.net_config() {
            return Err(Error::Contract("checkpoint config hash mismatch".into()));
        }
        if ck.params.len() != PolicyLayout::new(ck.net).n_params() {
            return Err(Error::Contract("checkpoint parameter count mismatch".into()));
        }
        Ok(ck)
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Last parameters that were entirely finite.
    pub checkpoint: Checkpoint,
    pub curve: Vec<IterationStats>,
    /// Set when training stopped on a non-finite loss or parameter.
    pub diverged: Option<Error>,
}

/// Momentum gradient descent with global-norm clipping.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub learning_rate: f64,
    pub momentum: f64,
    pub grad_clip: f64,
    velocity: Vec<f64>,
}

impl Optimizer {
    pub fn new(n: usize, learning_rate: f64, momentum: f64, grad_clip: f64) -> Self {
        Optimizer {
            learning_rate,
            momentum,
            grad_clip,
            velocity: vec![0.0; n],
        }
    }

    /// Clip `grad` in place and apply one update; returns the pre-clip norm.
    pub fn step(&mut self, params: &mut [f64], grad: &mut [f64]) -> f64 {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > self.grad_clip {
            let s = self.grad_clip / norm;
            grad.iter_mut().for_each(|g| *g *= s);
        }
        if self.learning_rate == 0.0 {
            return norm;
        }
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grad.iter()) {
            *v = self.momentum * *v + g;
            *p -= self.learning_rate * *v;
        }
        norm
    }
}

fn standardize(samples: &mut [Sample]) {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return;
    }
    for channel in 0..2 {
        let get = |s: &Sample| if channel == 0 { s.adv_action } else { s.adv_svo };
        let mean = samples.iter().map(get).sum::<f64>() / n;
        let var = samples.iter().map(|s| (get(s) - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt().max(1e-8);
        for s in samples.iter_mut() {
            let v = if channel == 0 {
                &mut s.adv_action
            } else {
                &mut s.adv_svo
            };
            *v = (*v - mean) / sd;
        }
    }
}

fn add_report(acc: &mut LossReport, r: &LossReport) {
    acc.total += r.total;
    acc.policy_action += r.policy_action;
    acc.policy_svo += r.policy_svo;
    acc.value_action += r.value_action;
    acc.value_svo += r.value_svo;
    acc.entropy_action += r.entropy_action;
    acc.entropy_svo += r.entropy_svo;
    acc.stab += r.stab;
    acc.valid += r.valid;
    acc.blocking += r.blocking;
    acc.clip_fraction += r.clip_fraction;
}

fn scale_report(r: &mut LossReport, s: f64) {
    for v in [
        &mut r.total,
        &mut r.policy_action,
        &mut r.policy_svo,
        &mut r.value_action,
        &mut r.value_svo,
        &mut r.entropy_action,
        &mut r.entropy_svo,
        &mut r.stab,
        &mut r.valid,
        &mut r.blocking,
        &mut r.clip_fraction,
    ] {
        *v *= s;
    }
}

/// Collect, then run `epochs` passes of shuffled minibatch updates, for
/// `config.iterations()` iterations. `on_iteration` sees each iteration's
/// statistics as they are produced.
pub fn train(config: &TrainConfig, exec: Exec, mut on_iteration: impl FnMut(&IterationStats)) -> Result<TrainOutcome> {
    config.validate()?;
    let mut policy = Policy::init(&config.env, config.hidden, derive_seed(config.seed, &[1]));
    let mut slots = make_slots(
        config.n_envs,
        &config.curriculum,
        config.env,
        derive_seed(config.seed, &[2]),
    )?;
    let mut opt = Optimizer::new(
        policy.params.len(),
        config.learning_rate,
        config.momentum,
        config.grad_clip,
    );
    let mut grad = vec![0.0; policy.params.len()];
    let mut curve = Vec::new();
    let mut last_good = policy.params.clone();

    for it in 0..config.iterations() {
        let (mut samples, episodes) = collect_rollout(
            &mut slots,
            &policy,
            &config.social,
            &config.curriculum,
            &config.loss,
            config.rollout_steps,
            exec,
        )?;
        if config.normalize_advantages {
            standardize(&mut samples);
        }
        let mut report = LossReport::default();
        let mut norm_sum = 0.0;
        let mut updates = 0usize;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut diverged = None;
        'epochs: for epoch in 0..config.epochs {
            let mut rng = rng_from_seed(derive_seed(config.seed, &[3, it as u64, epoch as u64]));
            order.shuffle(&mut rng);
            for chunk in order.chunks(config.minibatch) {
                let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
                grad.iter_mut().for_each(|g| *g = 0.0);
                let r = match smp3o_loss(&policy.layout, &policy.params, &batch, &config.loss, Some(&mut grad)) {
                    Ok(r) => r,
                    Err(e) => {
                        diverged = Some(e.to_string());
                        break 'epochs;
                    }
                };
                norm_sum += opt.step(&mut policy.params, &mut grad);
                if policy.params.iter().any(|p| !p.is_finite()) {
                    diverged = Some("non-finite parameter after update".into());
                    break 'epochs;
                }
                add_report(&mut report, &r);
                updates += 1;
            }
        }
        if let Some(message) = diverged {
            return Ok(TrainOutcome {
                checkpoint: Checkpoint::new(config, last_good)?,
                curve,
                diverged: Some(Error::Diverged { iteration: it, message }),
            });
        }
        last_good.copy_from_slice(&policy.params);
        if updates > 0 {
            scale_report(&mut report, 1.0 / updates as f64);
        }
        let ne = episodes.len().max(1) as f64;
        let stats = IterationStats {
            iteration: it,
            env_steps: (it + 1) * config.n_envs * config.rollout_steps,
            episodes: episodes.len(),
            mean_reward: episodes.iter().map(|e| e.reward).sum::<f64>() / ne,
            goals: episodes.iter().map(|e| e.goals as f64).sum::<f64>() / ne,
            ep_len: episodes.iter().map(|e| e.length as f64).sum::<f64>() / ne,
            loss: report,
            grad_norm: if updates > 0 { norm_sum / updates as f64 } else { 0.0 },
        };
        on_iteration(&stats);
        curve.push(stats);
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(config, policy.params)?,
        curve,
        diverged: None,
    })
}

/// Learning curve as CSV: `iteration,mean_reward,goals,ep_len`.
pub fn curves_csv(curve: &[IterationStats]) -> String {
    let mut out = String::from("iteration,mean_reward,goals,ep_len\n");
    for s in curve {
        out.push_str(&format!("{},{},{},{}\n", s.iteration, s.mean_reward, s.goals, s.ep_len));
    }
    out
}
