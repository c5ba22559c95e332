//! Generalized advantage estimation.

use crate::error::{Error, Result};

/// Advantages and returns for one stream that may contain several episode
/// ends.
///
/// `next_values[t]` is the value of the state after step `t` (zero when the
/// episode terminated there); `ends[t]` stops the advantage trace.
pub fn gae_segmented(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    ends: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || next_values.len() != n || ends.len() != n {
        return Err(Error::Contract(format!(
            "gae: {n} rewards, {} values, {} next values, {} end flags",
            values.len(),
            next_values.len(),
            ends.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        if ends[t] {
            running = 0.0;
        }
        let delta = rewards[t] + gamma * next_values[t] - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Advantages for a single trajectory with a bootstrap value after its
/// last step (zero for a terminal state).
pub fn gae_advantages(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma <= 1.0 && (0.0..=1.0).contains(&lambda)) {
        return Err(Error::Param(format!("gamma {gamma} / lambda {lambda} out of range")));
    }
    if values.len() != rewards.len() {
        return Err(Error::Contract(format!(
            "gae: {} rewards but {} values",
            rewards.len(),
            values.len()
        )));
    }
    let mut next: Vec<f64> = values.iter().skip(1).copied().collect();
    next.push(bootstrap);
    let ends = vec![false; rewards.len()];
    Ok(gae_segmented(rewards, values, &next, &ends, gamma, lambda)?.0)
}
