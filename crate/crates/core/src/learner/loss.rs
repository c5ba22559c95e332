//! Cross-advantage clipped surrogate objective with auxiliary losses.
//!
//! Per sample:
//!
//! ```text
//! loss = - policy · (surr(r_action, A_svo) + surr(r_svo, A_action))
//!        + value  · ((V_a - ret_a)² + (V_s - ret_s)²)
//!        - entropy · (H(π_action) + H(π_svo))
//!        + stab   · Σ_k BCE(π_svo[k], z_exp[k])
//!        + valid  · Σ_{invalid a} -log(1 - π_action[a])
//!        + block  · BCE(σ(blocking logit), label)
//! surr(r, A) = min(r A, clip(r, 1-ε, 1+ε) A)
//! ```
//!
//! averaged over the minibatch.

use serde::{Deserialize, Serialize};

use super::network::{log_one_minus, log_softmax, Forward, PolicyLayout};
use crate::error::{Error, Result};
use crate::geom::Action;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    pub value_coef: f64,
    pub policy_coef: f64,
    pub entropy_coef: f64,
    pub valid_coef: f64,
    pub blocking_coef: f64,
    pub stab_coef: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 0.95,
            lambda: 0.95,
            clip_eps: 0.2,
            value_coef: 0.08,
            policy_coef: 10.0,
            entropy_coef: 0.01,
            valid_coef: 0.5,
            blocking_coef: 0.5,
            stab_coef: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0 && self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Param("gamma and lambda must lie in (0, 1]".into()));
        }
        if self.clip_eps <= 0.0 {
            return Err(Error::Param("clip_eps must be positive".into()));
        }
        Ok(())
    }
}

/// One agent-step of experience.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub obs: Vec<f64>,
    pub svo_bin: usize,
    pub action: usize,
    pub logp_svo_old: f64,
    pub logp_action_old: f64,
    pub value_action_old: f64,
    pub value_svo_old: f64,
    pub reward_action: f64,
    pub reward_svo: f64,
    /// Statically valid actions (no obstacle, stays on the map).
    pub valid: [bool; Action::COUNT],
    pub blocking: bool,
    pub z_exp: Vec<f64>,
    pub alpha: f64,
    pub adv_action: f64,
    pub adv_svo: f64,
    pub ret_action: f64,
    pub ret_svo: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    /// Mean clipped surrogate of the action ratio (uses the SVO advantage).
    pub policy_action: f64,
    /// Mean clipped surrogate of the SVO ratio (uses the action advantage).
    pub policy_svo: f64,
    pub value_action: f64,
    pub value_svo: f64,
    pub entropy_action: f64,
    pub entropy_svo: f64,
    pub stab: f64,
    pub valid: f64,
    pub blocking: f64,
    pub clip_fraction: f64,
}

/// `min(r A, clip(r) A)` and its derivative with respect to `log r`.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> (f64, f64) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
    if unclipped <= clipped {
        (unclipped, unclipped)
    } else {
        (clipped, 0.0)
    }
}

fn entropy_and_grad(lp: &[f64]) -> (f64, Vec<f64>) {
    let h: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
    let g = lp.iter().map(|l| -l.exp() * (l + h)).collect();
    (h, g)
}

/// `d log(1 - p_k) / d logits`.
fn log_one_minus_grad(logits: &[f64], lp: &[f64], k: usize) -> Vec<f64> {
    let pk = lp[k].exp();
    let rest = log_one_minus(logits, k) + lp_lse(logits);
    logits
        .iter()
        .enumerate()
        .map(|(j, l)| if j == k { -pk } else { pk * (l - rest).exp() })
        .collect()
}

fn lp_lse(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

/// Loss (and, with `grad`, its gradient accumulated into `grad`) over a
/// minibatch.
pub fn smp3o_loss(
    layout: &PolicyLayout,
    params: &[f64],
    batch: &[&Sample],
    cfg: &LossConfig,
    mut grad: Option<&mut [f64]>,
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::Contract("empty minibatch".into()));
    }
    let k = layout.cfg.svo_bins;
    let scale = 1.0 / batch.len() as f64;
    let mut rep = LossReport::default();
    let mut fwd = Forward::default();
    let mut d_svo = vec![0.0; k + 2];
    let mut d_act = vec![0.0; Action::COUNT + 1];
    let mut clipped = 0usize;

    for s in batch {
        layout.forward_svo(params, &s.obs, &mut fwd);
        layout.forward_action(params, &s.obs, s.svo_bin, &mut fwd);
        d_svo.iter_mut().for_each(|v| *v = 0.0);
        d_act.iter_mut().for_each(|v| *v = 0.0);

        // Action policy: ratio of the action, advantage of the SVO stream.
        let la = fwd.action_logits().to_vec();
        let lpa = log_softmax(&la);
        let ra = (lpa[s.action] - s.logp_action_old).exp();
        let (surr_a, dsurr_a) = clipped_surrogate(ra, s.adv_svo, cfg.clip_eps);
        if (ra - 1.0).abs() > cfg.clip_eps {
            clipped += 1;
        }
        let (ha, dha) = entropy_and_grad(&lpa);
        for j in 0..Action::COUNT {
            let dlp = if j == s.action { 1.0 } else { 0.0 } - lpa[j].exp();
            d_act[j] += -cfg.policy_coef * dsurr_a * dlp - cfg.entropy_coef * dha[j];
        }
        let mut valid = 0.0;
        for a in 0..Action::COUNT {
            if s.valid[a] {
                continue;
            }
            valid -= log_one_minus(&la, a);
            for (d, g) in d_act.iter_mut().zip(log_one_minus_grad(&la, &lpa, a)) {
                *d -= cfg.valid_coef * g;
            }
        }
        let b = fwd.blocking_logit();
        let y = if s.blocking { 1.0 } else { 0.0 };
        let softplus = b.max(0.0) + (-b.abs()).exp().ln_1p();
        let block = softplus - y * b;
        d_act[Action::COUNT] += cfg.blocking_coef * (1.0 / (1.0 + (-b).exp()) - y);

        // SVO policy: ratio of the SVO sample, advantage of the action stream.
        let lz = fwd.svo_logits(k).to_vec();
        let lpz = log_softmax(&lz);
        let rz = (lpz[s.svo_bin] - s.logp_svo_old).exp();
        let (surr_z, dsurr_z) = clipped_surrogate(rz, s.adv_action, cfg.clip_eps);
        let (hz, dhz) = entropy_and_grad(&lpz);
        for j in 0..k {
            let dlp = if j == s.svo_bin { 1.0 } else { 0.0 } - lpz[j].exp();
            d_svo[j] += -cfg.policy_coef * dsurr_z * dlp - cfg.entropy_coef * dhz[j];
        }
        let mut stab = 0.0;
        for (i, e) in s.z_exp.iter().enumerate() {
            let l1m = log_one_minus(&lz, i);
            stab -= e * lpz[i] + (1.0 - e) * l1m;
            let g1m = log_one_minus_grad(&lz, &lpz, i);
            for j in 0..k {
                let dlp = if j == i { 1.0 } else { 0.0 } - lpz[j].exp();
                d_svo[j] -= cfg.stab_coef * (e * dlp + (1.0 - e) * g1m[j]);
            }
        }

        let va = fwd.value_action(k);
        let vs = fwd.value_svo(k);
        let ea = va - s.ret_action;
        let es = vs - s.ret_svo;
        d_svo[k] += cfg.value_coef * 2.0 * ea;
        d_svo[k + 1] += cfg.value_coef * 2.0 * es;

        rep.policy_action += surr_a;
        rep.policy_svo += surr_z;
        rep.value_action += ea * ea;
        rep.value_svo += es * es;
        rep.entropy_action += ha;
        rep.entropy_svo += hz;
        rep.stab += stab;
        rep.valid += valid;
        rep.blocking += block;

        if let Some(g) = grad.as_deref_mut() {
            d_svo.iter_mut().for_each(|v| *v *= scale);
            d_act.iter_mut().for_each(|v| *v *= scale);
            layout.svo.backward(params, &fwd.svo_cache, &d_svo, g);
            layout.action.backward(params, &fwd.action_cache, &d_act, g);
        }
    }

    for v in [
        &mut rep.policy_action,
        &mut rep.policy_svo,
        &mut rep.value_action,
        &mut rep.value_svo,
        &mut rep.entropy_action,
        &mut rep.entropy_svo,
        &mut rep.stab,
        &mut rep.valid,
        &mut rep.blocking,
    ] {
        *v *= scale;
    }
    rep.clip_fraction = clipped as f64 * scale;
    rep.total = -cfg.policy_coef * (rep.policy_action + rep.policy_svo)
        + cfg.value_coef * (rep.value_action + rep.value_svo)
        - cfg.entropy_coef * (rep.entropy_action + rep.entropy_svo)
        + cfg.stab_coef * rep.stab
        + cfg.valid_coef * rep.valid
        + cfg.blocking_coef * rep.blocking;
    if !rep.total.is_finite() {
        return Err(Error::Internal(format!("non-finite loss: {rep:?}")));
    }
    Ok(rep)
}

#[cfg(test)]
pub(crate) mod tests {
    use rand::Rng;

    use super::*;
    use crate::learner::network::{softmax, NetConfig};
    use crate::rng::rng_from_seed;

    pub(crate) fn small_layout() -> PolicyLayout {
        PolicyLayout::new(NetConfig {
            obs_len: 12,
            svo_bins: 3,
            hidden: 6,
        })
    }

    /// Random samples whose old log-probs are near the current policy's.
    pub(crate) fn random_batch(layout: &PolicyLayout, params: &[f64], n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = rng_from_seed(seed);
        let k = layout.cfg.svo_bins;
        (0..n)
            .map(|_| {
                let obs: Vec<f64> = (0..layout.cfg.obs_len)
                    .map(|_| {
                        if rng.gen::<f64>() < 0.4 {
                            0.0
                        } else {
                            rng.gen_range(-1.0..1.0)
                        }
                    })
                    .collect();
                let svo_bin = rng.gen_range(0..k);
                let f = layout.forward(params, &obs, svo_bin);
                let action = rng.gen_range(0..Action::COUNT);
                let lpa = log_softmax(f.action_logits());
                let lpz = log_softmax(f.svo_logits(k));
                let mut valid = [true; Action::COUNT];
                for v in valid.iter_mut().skip(1) {
                    *v = rng.gen::<f64>() < 0.7;
                }
                let mut z: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
                let sum: f64 = z.iter().sum();
                z.iter_mut().for_each(|v| *v /= sum);
                Sample {
                    obs,
                    svo_bin,
                    action,
                    logp_svo_old: lpz[svo_bin] + rng.gen_range(-0.1..0.1),
                    logp_action_old: lpa[action] + rng.gen_range(-0.1..0.1),
                    value_action_old: 0.0,
                    value_svo_old: 0.0,
                    reward_action: 0.0,
                    reward_svo: 0.0,
                    valid,
                    blocking: rng.gen(),
                    z_exp: z,
                    alpha: 0.5,
                    adv_action: rng.gen_range(-2.0..2.0),
                    adv_svo: rng.gen_range(-2.0..2.0),
                    ret_action: rng.gen_range(-3.0..0.0),
                    ret_svo: rng.gen_range(-3.0..0.0),
                }
            })
            .collect()
    }

    #[test]
    fn identity_ratio_gives_mean_advantages() {
        let layout = small_layout();
        let params = layout.init_params(4);
        let mut batch = random_batch(&layout, &params, 8, 1);
        let k = layout.cfg.svo_bins;
        for s in &mut batch {
            let f = layout.forward(&params, &s.obs, s.svo_bin);
            s.logp_action_old = log_softmax(f.action_logits())[s.action];
            s.logp_svo_old = log_softmax(f.svo_logits(k))[s.svo_bin];
        }
        let refs: Vec<&Sample> = batch.iter().collect();
        let rep = smp3o_loss(&layout, &params, &refs, &LossConfig::default(), None).unwrap();
        let mean_svo_adv = batch.iter().map(|s| s.adv_svo).sum::<f64>() / 8.0;
        let mean_act_adv = batch.iter().map(|s| s.adv_action).sum::<f64>() / 8.0;
        assert!((rep.policy_action - mean_svo_adv).abs() < 1e-12);
        assert!((rep.policy_svo - mean_act_adv).abs() < 1e-12);
        assert_eq!(rep.clip_fraction, 0.0);
    }

    #[test]
    fn zero_advantages_leave_auxiliary_terms() {
        let layout = small_layout();
        let params = layout.init_params(5);
        let mut batch = random_batch(&layout, &params, 6, 2);
        for s in &mut batch {
            s.adv_action = 0.0;
            s.adv_svo = 0.0;
        }
        let refs: Vec<&Sample> = batch.iter().collect();
        let cfg = LossConfig::default();
        let r = smp3o_loss(&layout, &params, &refs, &cfg, None).unwrap();
        assert_eq!(r.policy_action, 0.0);
        assert_eq!(r.policy_svo, 0.0);
        let rest = cfg.value_coef * (r.value_action + r.value_svo)
            - cfg.entropy_coef * (r.entropy_action + r.entropy_svo)
            + cfg.stab_coef * r.stab
            + cfg.valid_coef * r.valid
            + cfg.blocking_coef * r.blocking;
        assert!((r.total - rest).abs() < 1e-12);
    }

    #[test]
    fn surrogate_upper_bound() {
        for &r in &[0.0, 0.5, 0.8, 1.0, 1.2, 3.0, 50.0] {
            for &a in &[-3.0, -0.1, 0.0, 0.7, 4.0] {
                let (s, _) = clipped_surrogate(r, a, 0.2);
                assert!(s <= 1.2 * f64::abs(a) + 1e-15);
            }
        }
    }

    #[test]
    fn stab_term_is_minimal_at_target() {
        let layout = small_layout();
        let params = layout.init_params(6);
        let batch = random_batch(&layout, &params, 1, 3);
        let k = layout.cfg.svo_bins;
        let lz = layout.forward(&params, &batch[0].obs, 0).svo_logits(k).to_vec();
        let p = softmax(&lz);
        let bce = |e: &[f64]| -> f64 {
            e.iter()
                .zip(&p)
                .map(|(e, p)| -(e * p.ln() + (1.0 - e) * (1.0 - p).ln()))
                .sum()
        };
        let mut s = batch[0].clone();
        s.z_exp = p.clone();
        let cfg = LossConfig::default();
        let r = smp3o_loss(&layout, &params, &[&s], &cfg, None).unwrap();
        assert!((r.stab - bce(&p)).abs() < 1e-12);
    }
}
