//! Two small tanh MLPs over one flat parameter vector.
//!
//! The SVO trunk reads the observation and emits `K` SVO logits, the action
//! value and the SVO value. The action trunk reads the observation plus the
//! one-hot of the sampled SVO bin and emits 5 action logits and a blocking
//! logit. Weights are stored input-major so zero inputs (most of a sparse
//! observation) are skipped in both passes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Action;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetConfig {
    pub obs_len: usize,
    pub svo_bins: usize,
    pub hidden: usize,
}

/// Dense `in → h → h → out` network with tanh hidden layers, living at
/// `offset` in a shared parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp {
    offset: usize,
    input: usize,
    hidden: usize,
    output: usize,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    pub x: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub out: Vec<f64>,
}

fn dense_forward(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let n = b.len();
    out.clear();
    out.extend_from_slice(b);
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let row = &w[j * n..(j + 1) * n];
        for (o, wk) in out.iter_mut().zip(row) {
            *o += xj * wk;
        }
    }
}

/// Accumulate weight/bias gradients and (optionally) the input gradient.
fn dense_backward(w: &[f64], x: &[f64], dout: &[f64], gw: &mut [f64], gb: &mut [f64], dx: Option<&mut [f64]>) {
    let n = dout.len();
    for (g, d) in gb.iter_mut().zip(dout) {
        *g += d;
    }
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let row = &mut gw[j * n..(j + 1) * n];
        for (g, d) in row.iter_mut().zip(dout) {
            *g += xj * d;
        }
    }
    if let Some(dx) = dx {
        for (j, dxj) in dx.iter_mut().enumerate() {
            let row = &w[j * n..(j + 1) * n];
            *dxj = row.iter().zip(dout).map(|(a, b)| a * b).sum();
        }
    }
}

impl Mlp {
    pub fn new(offset: usize, input: usize, hidden: usize, output: usize) -> Self {
        Mlp {
            offset,
            input,
            hidden,
            output,
        }
    }

    pub fn n_params(&self) -> usize {
        let (i, h, o) = (self.input, self.hidden, self.output);
        i * h + h + h * h + h + h * o + o
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.n_params()
    }

    /// `(w1, b1, w2, b2, w3, b3)` boundaries relative to `offset`.
    fn splits(&self) -> [usize; 6] {
        let (i, h, o) = (self.input, self.hidden, self.output);
        let w1 = i * h;
        let b1 = w1 + h;
        let w2 = b1 + h * h;
        let b2 = w2 + h;
        let w3 = b2 + h * o;
        let b3 = w3 + o;
        [w1, b1, w2, b2, w3, b3]
    }

    pub fn forward(&self, params: &[f64], x: &[f64], cache: &mut MlpCache) {
        debug_assert_eq!(x.len(), self.input);
        let p = &params[self.range()];
        let [w1, b1, w2, b2, w3, b3] = self.splits();
        cache.x.clear();
        cache.x.extend_from_slice(x);
        dense_forward(&p[..w1], &p[w1..b1], x, &mut cache.h1);
        cache.h1.iter_mut().for_each(|v| *v = v.tanh());
        dense_forward(&p[b1..w2], &p[w2..b2], &cache.h1, &mut cache.h2);
        cache.h2.iter_mut().for_each(|v| *v = v.tanh());
        dense_forward(&p[b2..w3], &p[w3..b3], &cache.h2, &mut cache.out);
    }

    /// Accumulate `d loss / d params` into `grad` given `d loss / d out`.
    pub fn backward(&self, params: &[f64], cache: &MlpCache, dout: &[f64], grad: &mut [f64]) {
        let p = &params[self.range()];
        let g = &mut grad[self.range()];
        let [w1, b1, w2, b2, w3, b3] = self.splits();
        let h = self.hidden;

        let (g_rest, g_out) = g.split_at_mut(b2);
        let (g_w3, g_b3) = g_out.split_at_mut(w3 - b2);
        let mut dh2 = vec![0.0; h];
        dense_backward(&p[b2..w3], &cache.h2, dout, g_w3, &mut g_b3[..b3 - w3], Some(&mut dh2));
        for (d, a) in dh2.iter_mut().zip(&cache.h2) {
            *d *= 1.0 - a * a;
        }

        let (g_first, g_second) = g_rest.split_at_mut(b1);
        let (g_w2, g_b2) = g_second.split_at_mut(w2 - b1);
        let mut dh1 = vec![0.0; h];
        dense_backward(&p[b1..w2], &cache.h1, &dh2, g_w2, g_b2, Some(&mut dh1));
        for (d, a) in dh1.iter_mut().zip(&cache.h1) {
            *d *= 1.0 - a * a;
        }

        let (g_w1, g_b1) = g_first.split_at_mut(w1);
        dense_backward(&p[..w1], &cache.x, &dh1, g_w1, g_b1, None);
    }

    fn init(&self, params: &mut [f64], rng: &mut impl Rng, out_scale: f64) {
        let p = &mut params[self.range()];
        let [w1, b1, w2, b2, w3, _] = self.splits();
        let layers = [
            (0, w1, self.input, self.hidden, 1.0),
            (b1, w2, self.hidden, self.hidden, 1.0),
            (b2, w3, self.hidden, self.output, out_scale),
        ];
        for (from, to, fan_in, fan_out, scale) in layers {
            let limit = scale * (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut p[from..to] {
                *w = rng.gen_range(-limit..limit);
            }
        }
    }
}

/// Output layout of the SVO trunk: `K` logits, then `V_action`, `V_svo`.
pub const SVO_EXTRA_OUTPUTS: usize = 2;
/// Output layout of the action trunk: 5 logits, then the blocking logit.
pub const ACTION_OUTPUTS: usize = Action::COUNT + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyLayout {
    pub cfg: NetConfig,
    pub svo: Mlp,
    pub action: Mlp,
}

impl PolicyLayout {
    pub fn new(cfg: NetConfig) -> Self {
        let svo = Mlp::new(0, cfg.obs_len, cfg.hidden, cfg.svo_bins + SVO_EXTRA_OUTPUTS);
        let action = Mlp::new(svo.n_params(), cfg.obs_len + cfg.svo_bins, cfg.hidden, ACTION_OUTPUTS);
        PolicyLayout { cfg, svo, action }
    }

    pub fn n_params(&self) -> usize {
        self.svo.n_params() + self.action.n_params()
    }

    /// Glorot-uniform weights, zero biases, policy heads scaled down so
    /// the initial policies are close to uniform.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        let mut p = vec![0.0; self.n_params()];
        self.svo.init(&mut p, &mut rng, 0.1);
        self.action.init(&mut p, &mut rng, 0.1);
        p
    }
}

/// Forward outputs of both trunks for one agent-step.
#[derive(Debug, Clone, Default)]
pub struct Forward {
    pub svo_cache: MlpCache,
    pub action_cache: MlpCache,
}

impl Forward {
    pub fn svo_logits(&self, k: usize) -> &[f64] {
        &self.svo_cache.out[..k]
    }

    pub fn value_action(&self, k: usize) -> f64 {
        self.svo_cache.out[k]
    }

    pub fn value_svo(&self, k: usize) -> f64 {
        self.svo_cache.out[k + 1]
    }

    pub fn action_logits(&self) -> &[f64] {
        &self.action_cache.out[..Action::COUNT]
    }

    pub fn blocking_logit(&self) -> f64 {
        self.action_cache.out[Action::COUNT]
    }
}

impl PolicyLayout {
    pub fn forward_svo(&self, params: &[f64], obs: &[f64], fwd: &mut Forward) {
        self.svo.forward(params, obs, &mut fwd.svo_cache);
    }

    pub fn forward_action(&self, params: &[f64], obs: &[f64], svo_bin: usize, fwd: &mut Forward) {
        let mut x = Vec::with_capacity(obs.len() + self.cfg.svo_bins);
        x.extend_from_slice(obs);
        x.extend(std::iter::repeat_n(0.0, self.cfg.svo_bins));
        x[obs.len() + svo_bin] = 1.0;
        self.action.forward(params, &x, &mut fwd.action_cache);
    }

    pub fn forward(&self, params: &[f64], obs: &[f64], svo_bin: usize) -> Forward {
        let mut f = Forward::default();
        self.forward_svo(params, obs, &mut f);
        self.forward_action(params, obs, svo_bin, &mut f);
        f
    }
}

/// Numerically stable `log softmax`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// `log(1 - softmax(logits)[k])`, computed without cancellation.
pub fn log_one_minus(logits: &[f64], k: usize) -> f64 {
    let m_all = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse_all = m_all + logits.iter().map(|l| (l - m_all).exp()).sum::<f64>().ln();
    let rest = logits.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, l)| *l);
    let m = rest.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let lse_rest = m + rest.map(|l| (l - m).exp()).sum::<f64>().ln();
    lse_rest - lse_all
}

/// Index drawn from `probs` with one uniform variate.
pub fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Lowest index of the largest probability.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
