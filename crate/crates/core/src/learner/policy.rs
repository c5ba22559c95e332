//! Acting with a parameterized policy, one team timestep at a time.

use rand::Rng;

use super::network::{argmax, log_softmax, softmax, Forward, NetConfig, PolicyLayout};
use crate::error::Result;
use crate::exec::Exec;
use crate::geom::Action;
use crate::gridworld::{Env, EnvConfig, StepOutcome};
use crate::resolver::{resolve, ResolutionOutcome};
use crate::social::{
    compute_overlap_with_fields, redistribute_rewards, stability_target, svo_bin_angle, update_fixed_partners,
    OverlapMatrix, SocialConfig, SvoState,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub layout: PolicyLayout,
    pub params: Vec<f64>,
}

impl Policy {
    pub fn new(layout: PolicyLayout, params: Vec<f64>) -> Self {
        Policy { layout, params }
    }

    /// Freshly initialized policy sized for `env`.
    pub fn init(env: &EnvConfig, hidden: usize, seed: u64) -> Self {
        let layout = PolicyLayout::new(NetConfig {
            obs_len: env.observation_len(),
            svo_bins: env.svo_bins,
            hidden,
        });
        let params = layout.init_params(seed);
        Policy { layout, params }
    }

    /// Sample (or, with `greedy`, take the mode of) an SVO bin and then an
    /// action conditioned on it.
    pub fn decide(&self, obs: &[f64], rng: &mut impl Rng, greedy: bool) -> Decision {
        let k = self.layout.cfg.svo_bins;
        let mut fwd = Forward::default();
        self.layout.forward_svo(&self.params, obs, &mut fwd);
        let lpz = log_softmax(fwd.svo_logits(k));
        let pz = softmax(fwd.svo_logits(k));
        let svo_bin = if greedy {
            argmax(&pz)
        } else {
            super::network::sample_index(&pz, rng)
        };
        self.layout.forward_action(&self.params, obs, svo_bin, &mut fwd);
        let lpa = log_softmax(fwd.action_logits());
        let pa: Vec<f64> = lpa.iter().map(|l| l.exp()).collect();
        let action = if greedy {
            argmax(&pa)
        } else {
            super::network::sample_index(&pa, rng)
        };
        Decision {
            svo_bin,
            svo_probs: pz,
            logp_svo: lpz[svo_bin],
            action,
            logp_action: lpa[action],
            value_action: fwd.value_action(k),
            value_svo: fwd.value_svo(k),
        }
    }

    /// `(V_action, V_svo)` for an observation.
    pub fn values(&self, obs: &[f64]) -> (f64, f64) {
        let k = self.layout.cfg.svo_bins;
        let mut fwd = Forward::default();
        self.layout.forward_svo(&self.params, obs, &mut fwd);
        (fwd.value_action(k), fwd.value_svo(k))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub svo_bin: usize,
    pub svo_probs: Vec<f64>,
    pub logp_svo: f64,
    pub action: usize,
    pub logp_action: f64,
    pub value_action: f64,
    pub value_svo: f64,
}

/// Everything one team timestep produced, per agent where applicable.
#[derive(Debug, Clone)]
pub struct TeamStep {
    pub observations: Vec<Vec<f64>>,
    pub decisions: Vec<Decision>,
    pub valid: Vec<[bool; Action::COUNT]>,
    pub blocking: Vec<bool>,
    pub overlap: OverlapMatrix,
    pub partners: Vec<usize>,
    pub resolution: ResolutionOutcome,
    pub step: StepOutcome,
    pub reward_svo: Vec<f64>,
    pub reward_action: Vec<f64>,
    pub alpha: Vec<f64>,
    pub z_exp: Vec<Vec<f64>>,
}

/// Run one timestep of `env` under `policy`.
pub fn team_step(
    env: &mut Env,
    policy: &Policy,
    social: &SocialConfig,
    rng: &mut impl Rng,
    greedy: bool,
) -> Result<TeamStep> {
    let n = env.n_agents();
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
    let blocking: Vec<bool> = env.blocking_counts().into_iter().map(|c| c > 0).collect();
    let valid: Vec<[bool; Action::COUNT]> = (0..n)
        .map(|i| Action::ALL.map(|a| a == Action::Idle || env.map().target(env.position(i), a).is_some()))
        .collect();
    let observations: Vec<Vec<f64>> = (0..n).map(|i| env.observe(i)).collect();
    let decisions: Vec<Decision> = observations.iter().map(|o| policy.decide(o, rng, greedy)).collect();

    let bins = env.config().svo_bins;
    let previous: Vec<Vec<f64>> = env.agents().iter().map(|a| a.svo.distribution.clone()).collect();
    for (i, d) in decisions.iter().enumerate() {
        env.set_svo(
            i,
            SvoState {
                distribution: d.svo_probs.clone(),
                sampled_bin: d.svo_bin,
                angle: svo_bin_angle(d.svo_bin, bins),
                previous: previous[i].clone(),
            },
        );
    }
    let intents: Vec<Action> = decisions
        .iter()
        .map(|d| Action::from_index(d.action).expect("action head has five outputs"))
        .collect();
    let resolution = resolve(env.map(), &env.positions(), &intents, &env.svo_angles())?;
    let step = env.step(&resolution.actions, &resolution.penalized)?;

    let mut reward_svo = Vec::with_capacity(n);
    let mut reward_action = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    let mut z_exp = Vec::with_capacity(n);
    for i in 0..n {
        let p = partners[i];
        let (rs, ra) = redistribute_rewards(
            step.rewards[i],
            step.rewards[p],
            env.agent(i).svo.angle,
            social.svo_importance,
        )?;
        reward_svo.push(rs);
        reward_action.push(ra);
        let (a, z) = stability_target(
            &decisions[i].svo_probs,
            &previous[i],
            overlap.matrix.get(i, p),
            social.kappa,
        );
        alpha.push(a);
        z_exp.push(z);
    }
    Ok(TeamStep {
        observations,
        decisions,
        valid,
        blocking,
        overlap: overlap.matrix,
        partners,
        resolution,
        step,
        reward_svo,
        reward_action,
        alpha,
        z_exp,
    })
}
