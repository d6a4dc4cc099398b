//! Sensitivity measures: mutual information, first-order Sobol indices, arc diameters and
//! one-way CPT (tornado) sensitivity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{joint_marginal, posterior_index, tvd};
use crate::network::{BayesianNetwork, Cpt};

/// Default tornado step.
pub const DEFAULT_DELTA: f64 = 0.05;

/// Values within this distance share a rank.
const RANK_TOL: f64 = 1e-12;

fn pair_joint(net: &BayesianNetwork, a: usize, b: usize) -> Result<(Vec<f64>, usize)> {
    if a == b {
        return Err(Error::Invalid(format!("`{}` paired with itself", net.name(a))));
    }
    Ok((joint_marginal(net, &[a, b], &[])?, net.cardinality(b)))
}

/// Mutual information (natural log) between two nodes under the network's joint distribution.
pub fn mutual_information(net: &BayesianNetwork, a: usize, b: usize) -> Result<f64> {
    let (joint, cb) = pair_joint(net, a, b)?;
    let ca = joint.len() / cb;
    let pa: Vec<f64> = (0..ca).map(|i| joint[i * cb..(i + 1) * cb].iter().sum()).collect();
    let pb: Vec<f64> = (0..cb).map(|j| (0..ca).map(|i| joint[i * cb + j]).sum()).collect();
    let mut mi = 0.0;
    for i in 0..ca {
        for j in 0..cb {
            let p = joint[i * cb + j];
            if p > 0.0 {
                mi += p * (p / (pa[i] * pb[j])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// First-order Sobol index of `input` for the indicator embedding of `target`: the summed
/// variance of `P(target = k | input)` across input states over the summed variance of the
/// indicators.
pub fn sobol_index(net: &BayesianNetwork, target: usize, input: usize) -> Result<f64> {
    let (joint, ci) = pair_joint(net, target, input)?;
    let ct = joint.len() / ci;
    let pt: Vec<f64> = (0..ct).map(|k| joint[k * ci..(k + 1) * ci].iter().sum()).collect();
    let denom: f64 = pt.iter().map(|p| p * (1.0 - p)).sum();
    if denom <= 1e-15 {
        return Err(Error::ZeroVariance(net.name(target).to_string()));
    }
    let mut num = 0.0;
    for o in 0..ci {
        let po: f64 = (0..ct).map(|k| joint[k * ci + o]).sum();
        if po > 0.0 {
            num += po
                * (0..ct)
                    .map(|k| (joint[k * ci + o] / po - pt[k]).powi(2))
                    .sum::<f64>();
        }
    }
    Ok((num / denom).clamp(0.0, 1.0))
}

fn edge_cpt(net: &BayesianNetwork, parent: usize, child: usize) -> Result<(&Cpt, usize)> {
    let cpt = net.cpt(child);
    let pos = cpt
        .parents
        .iter()
        .position(|&p| p == parent)
        .ok_or_else(|| Error::MissingEdge(net.name(parent).to_string(), net.name(child).to_string()))?;
    Ok((cpt, pos))
}

/// Largest total variation distance between two child rows that differ only in the state of
/// `parent`, over all co-parent configurations.
pub fn arc_diameter(net: &BayesianNetwork, parent: usize, child: usize) -> Result<f64> {
    let (cpt, pos) = edge_cpt(net, parent, child)?;
    let mut best = 0.0f64;
    for j in 0..cpt.n_rows() {
        let mut ps = cpt.decode(j);
        if ps[pos] != 0 {
            continue;
        }
        let rows: Vec<&[f64]> = (0..cpt.parent_cards[pos])
            .map(|s| {
                ps[pos] = s;
                cpt.row(cpt.config_of(&ps))
            })
            .collect();
        for (a, ra) in rows.iter().enumerate() {
            for rb in &rows[a + 1..] {
                best = best.max(tvd(ra, rb));
            }
        }
    }
    Ok(best.clamp(0.0, 1.0))
}

/// Largest total variation distance between any two rows of the child's CPT.
pub fn arc_diameter_whole_row(net: &BayesianNetwork, parent: usize, child: usize) -> Result<f64> {
    let (cpt, _) = edge_cpt(net, parent, child)?;
    let mut best = 0.0f64;
    for a in 0..cpt.n_rows() {
        for b in a + 1..cpt.n_rows() {
            best = best.max(tvd(cpt.row(a), cpt.row(b)));
        }
    }
    Ok(best.clamp(0.0, 1.0))
}

/// Competition ranks (1, 2, 2, 4, ...) for descending `values`.
pub fn competition_ranks(values: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|&v| 1 + values.iter().filter(|&&w| w > v + RANK_TOL).count())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSensitivity {
    pub node: String,
    pub mutual_information: f64,
    pub sobol_index: f64,
    pub mi_rank: usize,
    pub sobol_rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeStrength {
    pub parent: String,
    pub child: String,
    pub diameter: f64,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub target: String,
    /// Every other node, by Sobol index (largest first).
    pub nodes: Vec<NodeSensitivity>,
    /// Every edge, in graph edge order.
    pub edges: Vec<EdgeStrength>,
}

pub fn edge_strengths(net: &BayesianNetwork, whole_row: bool) -> Result<Vec<EdgeStrength>> {
    let edges = net.dag().edges();
    let diam = edges
        .iter()
        .map(|&(p, c)| {
            if whole_row {
                arc_diameter_whole_row(net, p, c)
            } else {
                arc_diameter(net, p, c)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let ranks = competition_ranks(&diam);
    Ok(edges
        .iter()
        .zip(diam)
        .zip(ranks)
        .map(|((&(p, c), diameter), rank)| EdgeStrength {
            parent: net.name(p).to_string(),
            child: net.name(c).to_string(),
            diameter,
            rank,
        })
        .collect())
}

pub fn sensitivity_report(net: &BayesianNetwork, target: &str) -> Result<SensitivityReport> {
    let t = net.require(target)?;
    let others: Vec<usize> = (0..net.n_nodes()).filter(|&v| v != t).collect();
    let mi = others
        .iter()
        .map(|&v| mutual_information(net, t, v))
        .collect::<Result<Vec<_>>>()?;
    let sobol = others
        .iter()
        .map(|&v| sobol_index(net, t, v))
        .collect::<Result<Vec<_>>>()?;
    let mi_ranks = competition_ranks(&mi);
    let sobol_ranks = competition_ranks(&sobol);
    let mut nodes: Vec<NodeSensitivity> = others
        .iter()
        .enumerate()
        .map(|(i, &v)| NodeSensitivity {
            node: net.name(v).to_string(),
            mutual_information: mi[i],
            sobol_index: sobol[i],
            mi_rank: mi_ranks[i],
            sobol_rank: sobol_ranks[i],
        })
        .collect();
    nodes.sort_by(|a, b| b.sobol_index.total_cmp(&a.sobol_index));
    Ok(SensitivityReport {
        target: target.to_string(),
        nodes,
        edges: edge_strengths(net, false)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TornadoEntry {
    pub node: String,
    /// `parent=state` for each parent, in CPT parent order.
    pub parent_configuration: Vec<String>,
    pub state: String,
    pub theta: f64,
    pub baseline_output: f64,
    pub sensitivity_value: f64,
    /// Sign of the sensitivity value: -1, 0 or 1.
    pub direction: i8,
    /// Set when the entry sits on a bound and a one-sided difference was used.
    pub one_sided: bool,
}

/// Row with entry `k` moved to `value` and the others rescaled proportionally to keep the sum
/// at one. A row with no remaining mass spreads it evenly.
pub fn covary_row(row: &[f64], k: usize, value: f64) -> Vec<f64> {
    let rest = 1.0 - row[k];
    let new_rest = 1.0 - value;
    let others = (row.len() - 1) as f64;
    row.iter()
        .enumerate()
        .map(|(i, &p)| {
            if i == k {
                value
            } else if rest > 0.0 {
                p * new_rest / rest
            } else {
                new_rest / others
            }
        })
        .collect()
}

fn perturbed_output(net: &BayesianNetwork, node: usize, row: usize, k: usize, value: f64, target: usize, ts: usize) -> Result<f64> {
    let mut cpt = net.cpt(node).clone();
    let new_row = covary_row(cpt.row(row), k, value);
    cpt.row_mut(row).copy_from_slice(&new_row);
    Ok(posterior_index(&net.with_cpt(cpt)?, target, &[])?[ts])
}

/// One-way sensitivity of `P(target = target_state)` to every CPT entry, by central
/// differences of step `delta` (shrunk to stay inside [0, 1]). Returns the `top_k` entries
/// with the largest absolute value.
pub fn tornado(
    net: &BayesianNetwork,
    target: &str,
    target_state: &str,
    top_k: usize,
    delta: f64,
) -> Result<Vec<TornadoEntry>> {
    if top_k == 0 {
        return Err(Error::Invalid("top_k must be at least 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Invalid(format!("step {delta} outside (0, 1)")));
    }
    let t = net.require(target)?;
    let ts = net.state_index(t, target_state)?;
    let baseline = posterior_index(net, t, &[])?[ts];
    let relevant = net.dag().ancestors_of(&[t]);
    let coords: Vec<(usize, usize, usize)> = (0..net.n_nodes())
        .flat_map(|v| {
            let cpt = net.cpt(v);
            (0..cpt.n_rows()).flat_map(move |j| (0..cpt.card).map(move |k| (v, j, k)))
        })
        .filter(|&(v, _, _)| net.cardinality(v) > 1)
        .collect();
    let mut entries = coords
        .par_iter()
        .map(|&(v, j, k)| {
            let cpt = net.cpt(v);
            let theta = cpt.prob(j, k);
            let step = delta.min(theta).min(1.0 - theta);
            let (value, one_sided) = if !relevant[v] {
                (0.0, step == 0.0)
            } else if step > 0.0 {
                let up = perturbed_output(net, v, j, k, theta + step, t, ts)?;
                let down = perturbed_output(net, v, j, k, theta - step, t, ts)?;
                ((up - down) / (2.0 * step), false)
            } else if theta <= 0.0 {
                let up = perturbed_output(net, v, j, k, delta, t, ts)?;
                ((up - baseline) / delta, true)
            } else {
                let down = perturbed_output(net, v, j, k, 1.0 - delta, t, ts)?;
                ((baseline - down) / delta, true)
            };
            let parent_configuration = cpt
                .parents
                .iter()
                .zip(cpt.decode(j))
                .map(|(&p, s)| format!("{}={}", net.name(p), net.states(p)[s]))
                .collect();
            Ok(TornadoEntry {
                node: net.name(v).to_string(),
                parent_configuration,
                state: net.states(v)[k].clone(),
                theta,
                baseline_output: baseline,
                sensitivity_value: value,
                direction: if value > 0.0 {
                    1
                } else if value < 0.0 {
                    -1
                } else {
                    0
                },
                one_sided,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| b.sensitivity_value.abs().total_cmp(&a.sensitivity_value.abs()));
    entries.truncate(top_k);
    Ok(entries)
}
