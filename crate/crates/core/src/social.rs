//! Partner selection from path-flow overlap, fixed-partner updates, and
//! SVO-based reward redistribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geom::Cell;
use crate::mapgen::GridMap;
use crate::pathing::{distance_field, DistanceField, PathFlow};

pub const DEFAULT_SVO_BINS: usize = 5;
pub const MAX_SVO_DEGREES: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SocialConfig {
    /// Overlap decay per path index.
    pub overlap_decay: f64,
    /// Divisor of the pair reward fed to the SVO policy.
    pub svo_importance: f64,
    /// Overlap at which the SVO blend weight saturates.
    pub kappa: f64,
    pub svo_bins: usize,
}

impl Default for SocialConfig {
    fn default() -> Self {
        SocialConfig {
            overlap_decay: 0.95,
            svo_importance: 2.0,
            kappa: 1.0,
            svo_bins: DEFAULT_SVO_BINS,
        }
    }
}

/// Center of SVO bin `bin` out of `bins`, uniformly spaced over [0°, 45°].
pub fn svo_bin_angle(bin: usize, bins: usize) -> f64 {
    if bins <= 1 {
        0.0
    } else {
        MAX_SVO_DEGREES * bin as f64 / (bins - 1) as f64
    }
}

/// An agent's social value orientation at one timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvoState {
    pub distribution: Vec<f64>,
    pub sampled_bin: usize,
    /// Degrees, always the center of `sampled_bin`.
    pub angle: f64,
    /// Distribution the current one was conditioned on.
    pub previous: Vec<f64>,
}

impl SvoState {
    /// Uniform prior over `bins`, egoistic angle.
    pub fn initial(bins: usize) -> Self {
        let u = vec![1.0 / bins as f64; bins];
        SvoState {
            distribution: u.clone(),
            sampled_bin: 0,
            angle: 0.0,
            previous: u,
        }
    }

    /// Deterministic state concentrated on `bin`.
    pub fn fixed(bin: usize, bins: usize) -> Self {
        let mut d = vec![0.0; bins];
        d[bin] = 1.0;
        SvoState {
            distribution: d.clone(),
            sampled_bin: bin,
            angle: svo_bin_angle(bin, bins),
            previous: d,
        }
    }

    pub fn bins(&self) -> usize {
        self.distribution.len()
    }
}

/// Symmetric, zero-diagonal matrix of decay-weighted conflicting overlaps.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrix {
    n: usize,
    decay: f64,
    data: Vec<f64>,
}

impl OverlapMatrix {
    pub fn zeros(n: usize, decay: f64) -> Self {
        OverlapMatrix {
            n,
            decay,
            data: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    fn add_pair(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
        self.data[j * self.n + i] += v;
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.get(i, i) == 0.0 && (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapResult {
    pub matrix: OverlapMatrix,
    /// Temporary partner per agent; an agent with no overlap is its own
    /// partner.
    pub partners: Vec<usize>,
    /// Agents whose goal was unreachable; their flow is the singleton
    /// current cell.
    pub unreachable: Vec<usize>,
    pub flows: Vec<PathFlow>,
}

/// Path flows for every agent from its current position, one per distance
/// field. Unreachable goals yield a singleton flow and are reported.
pub fn path_flows(
    map: &GridMap,
    fields: &[DistanceField],
    positions: &[Cell],
    exec: Exec,
) -> (Vec<PathFlow>, Vec<usize>) {
    let flows: Vec<Option<PathFlow>> = exec.map(positions.len(), |i| fields[i].path_from(map, positions[i]).ok());
    let unreachable = flows
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_none())
        .map(|(i, _)| i)
        .collect();
    let flows = flows
        .into_iter()
        .zip(positions)
        .map(|(f, p)| f.unwrap_or_else(|| PathFlow::singleton(*p)))
        .collect();
    (flows, unreachable)
}

/// Accumulate the overlap matrix from precomputed flows.
///
/// For every cell visited by two agents whose directions there differ,
/// `decay^t_i + decay^t_j` is added to both `[i][j]` and `[j][i]`, with `t`
/// the cell's index along each agent's path. Same-direction co-visits add
/// nothing. Cells are scanned in row-major order and pairs in agent order,
/// so the floating-point sums are reproducible.
pub fn overlap_from_flows(map: &GridMap, flows: &[PathFlow], decay: f64) -> OverlapMatrix {
    let n = flows.len();
    let mut visits: Vec<Vec<(usize, usize)>> = vec![Vec::new(); map.len()];
    for (agent, flow) in flows.iter().enumerate() {
        for (t, v) in flow.vertices.iter().enumerate() {
            visits[map.index(*v)].push((agent, t));
        }
    }
    let mut m = OverlapMatrix::zeros(n, decay);
    for cell_visits in visits.iter().filter(|v| v.len() > 1) {
        for (k, &(i, ti)) in cell_visits.iter().enumerate() {
            for &(j, tj) in &cell_visits[k + 1..] {
                if i == j || flows[i].directions[ti] == flows[j].directions[tj] {
                    continue;
                }
                m.add_pair(i, j, decay.powi(ti as i32) + decay.powi(tj as i32));
            }
        }
    }
    m
}

/// Row-wise argmax (lowest index on ties); all-zero rows select themselves.
pub fn temporary_partners(m: &OverlapMatrix) -> Vec<usize> {
    (0..m.n())
        .map(|i| {
            let row = m.row(i);
            let mut best = i;
            let mut best_v = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if v > best_v {
                    best = j;
                    best_v = v;
                }
            }
            best
        })
        .collect()
}

/// Overlap and temporary partners using per-agent distance fields (one per
/// goal, typically cached for the episode).
pub fn compute_overlap_with_fields(
    map: &GridMap,
    fields: &[DistanceField],
    positions: &[Cell],
    decay: f64,
    exec: Exec,
) -> Result<OverlapResult> {
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(Error::Param(format!("overlap decay {decay} outside (0, 1]")));
    }
    if fields.len() != positions.len() {
        return Err(Error::Contract(format!(
            "{} distance fields for {} agents",
            fields.len(),
            positions.len()
        )));
    }
    let (flows, unreachable) = path_flows(map, fields, positions, exec);
    let matrix = overlap_from_flows(map, &flows, decay);
    let partners = temporary_partners(&matrix);
    Ok(OverlapResult {
        matrix,
        partners,
        unreachable,
        flows,
    })
}

/// Overlap and temporary partners from scratch.
pub fn compute_overlap(map: &GridMap, positions: &[Cell], goals: &[Cell], decay: f64) -> Result<OverlapResult> {
    if goals.len() != positions.len() {
        return Err(Error::Contract("positions and goals differ in length".into()));
    }
    let fields = goals
        .iter()
        .map(|g| distance_field(map, *g))
        .collect::<Result<Vec<_>>>()?;
    compute_overlap_with_fields(map, &fields, positions, decay, Exec::default())
}

/// Keep each fixed partner while the agent still overlaps it; otherwise
/// adopt the temporary partner.
pub fn update_fixed_partners(temporary: &[usize], overlap: &OverlapMatrix, previous: &[usize]) -> Vec<usize> {
    (0..temporary.len())
        .map(|i| {
            if overlap.get(i, previous[i]) == 0.0 {
                temporary[i]
            } else {
                previous[i]
            }
        })
        .collect()
}

/// Rewards for the SVO policy (`r_svo`) and the action policy (`r_action`):
///
/// ```text
/// r_svo    = (r_self + r_partner) / rho
/// r_action = cos(Z) r_self + sin(Z) r_partner
/// ```
///
/// For a self-partnered agent pass `r_partner = r_self`.
pub fn redistribute_rewards(r_self: f64, r_partner: f64, svo_degrees: f64, rho: f64) -> Result<(f64, f64)> {
    if !(0.0..=MAX_SVO_DEGREES).contains(&svo_degrees) {
        return Err(Error::Contract(format!("SVO {svo_degrees}° outside [0°, 45°]")));
    }
    if rho <= 0.0 {
        return Err(Error::Contract(format!("rho must be positive, got {rho}")));
    }
    let z = svo_degrees.to_radians();
    Ok(((r_self + r_partner) / rho, z.cos() * r_self + z.sin() * r_partner))
}

/// Blend weight `alpha = min(o, clip(o, 0, kappa)) / kappa` and the target
/// `z_exp = alpha z_prev + (1 - alpha) z_current`.
pub fn stability_target(z_current: &[f64], z_previous: &[f64], overlap: f64, kappa: f64) -> (f64, Vec<f64>) {
    let alpha = overlap.min(overlap.clamp(0.0, kappa)).max(0.0) / kappa;
    let z_exp = z_current
        .iter()
        .zip(z_previous)
        .map(|(z, zp)| alpha * zp + (1.0 - alpha) * z)
        .collect();
    (alpha, z_exp)
}
