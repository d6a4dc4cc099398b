//! Exact inference by variable elimination: posteriors, most probable explanation and
//! evidence sweeps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::network::BayesianNetwork;

/// Hard evidence keyed by node name.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvidenceMap(pub BTreeMap<String, String>);

impl EvidenceMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, node: &str, state: &str) -> Self {
        self.0.insert(node.to_string(), state.to_string());
        self
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `(node, state)` index pairs, in node-name order.
    pub fn resolve(&self, net: &BayesianNetwork) -> Result<Vec<(usize, usize)>> {
        self.0
            .iter()
            .map(|(n, s)| {
                let v = net.require(n)?;
                Ok((v, net.state_index(v, s)?))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub target: String,
    pub states: Vec<String>,
    pub distribution: Vec<f64>,
    pub evidence: EvidenceMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpeResult {
    pub evidence: EvidenceMap,
    /// State of every non-evidence node.
    pub assignment: BTreeMap<String, String>,
    /// Log of the joint probability of the assignment together with the evidence.
    pub log_probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub node: String,
    pub state: String,
    pub distribution: Vec<f64>,
    /// Total variation distance from the no-evidence baseline.
    pub tvd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub target: String,
    pub states: Vec<String>,
    pub baseline: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

pub fn tvd(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn check_evidence(net: &BayesianNetwork, evidence: &[(usize, usize)]) -> Result<()> {
    for (i, &(v, s)) in evidence.iter().enumerate() {
        if v >= net.n_nodes() {
            return Err(Error::Invalid(format!("node index {v} out of range")));
        }
        if s >= net.cardinality(v) {
            return Err(Error::Invalid(format!("state index {s} out of range for `{}`", net.name(v))));
        }
        if evidence[..i].iter().any(|&(u, t)| u == v && t != s) {
            return Err(Error::Invalid(format!("conflicting evidence on `{}`", net.name(v))));
        }
    }
    Ok(())
}

/// CPT factors of the ancestors of `query ∪ evidence`, reduced by the evidence. Other nodes
/// are barren and sum to one.
fn relevant_factors(net: &BayesianNetwork, query: &[usize], evidence: &[(usize, usize)]) -> Vec<Factor> {
    let mut roots: Vec<usize> = query.to_vec();
    roots.extend(evidence.iter().map(|e| e.0));
    let keep = net.dag().ancestors_of(&roots);
    (0..net.n_nodes())
        .filter(|&v| keep[v])
        .map(|v| reduce_all(Factor::from_cpt(net.cpt(v)), evidence))
        .collect()
}

fn reduce_all(mut f: Factor, evidence: &[(usize, usize)]) -> Factor {
    for &(v, s) in evidence {
        f = f.reduce(v, s);
    }
    f
}

/// Greedy min-fill order over `to_eliminate`, ties to the lowest index.
fn min_fill_order(factors: &[Factor], to_eliminate: &[usize], n: usize) -> Vec<usize> {
    let mut adj = vec![vec![false; n]; n];
    for f in factors {
        for &a in &f.vars {
            for &b in &f.vars {
                if a != b {
                    adj[a][b] = true;
                }
            }
        }
    }
    let mut remaining: Vec<usize> = to_eliminate.to_vec();
    remaining.sort_unstable();
    let mut eliminated = vec![false; n];
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let (pick, _) = remaining
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let nb: Vec<usize> = (0..n).filter(|&u| adj[v][u] && !eliminated[u]).collect();
                let mut fill = 0;
                for (x, &a) in nb.iter().enumerate() {
                    fill += nb[x + 1..].iter().filter(|&&b| !adj[a][b]).count();
                }
                (i, fill)
            })
            .min_by_key(|&(i, fill)| (fill, i))
            .expect("non-empty");
        let v = remaining.remove(pick);
        let nb: Vec<usize> = (0..n).filter(|&u| adj[v][u] && !eliminated[u]).collect();
        for &a in &nb {
            for &b in &nb {
                if a != b {
                    adj[a][b] = true;
                }
            }
        }
        eliminated[v] = true;
        order.push(v);
    }
    order
}

fn eliminate(mut factors: Vec<Factor>, order: &[usize], max: bool) -> (Vec<Factor>, Vec<(usize, Factor)>) {
    let mut trace = Vec::new();
    for &v in order {
        let (with, without): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.vars.contains(&v));
        factors = without;
        if with.is_empty() {
            continue;
        }
        let psi = with.iter().skip(1).fold(with[0].clone(), |acc, f| acc.product(f));
        if max {
            factors.push(psi.max_out(v));
            trace.push((v, psi));
        } else {
            factors.push(psi.sum_out(v));
        }
    }
    (factors, trace)
}

fn joint_unnormalized(
    net: &BayesianNetwork,
    query: &[usize],
    evidence: &[(usize, usize)],
    order: Option<&[usize]>,
) -> Result<Vec<f64>> {
    check_evidence(net, evidence)?;
    for (i, &q) in query.iter().enumerate() {
        if q >= net.n_nodes() || query[..i].contains(&q) {
            return Err(Error::Invalid("query nodes must be distinct and in range".into()));
        }
        if evidence.iter().any(|e| e.0 == q) {
            return Err(Error::Invalid(format!("`{}` is both queried and observed", net.name(q))));
        }
    }
    let factors = relevant_factors(net, query, evidence);
    let mut hidden: Vec<usize> = factors.iter().flat_map(|f| f.vars.iter().copied()).collect();
    hidden.sort_unstable();
    hidden.dedup();
    hidden.retain(|v| !query.contains(v));
    let order = match order {
        Some(o) => {
            let mut full: Vec<usize> = o.iter().copied().filter(|v| hidden.contains(v)).collect();
            full.extend(hidden.iter().filter(|v| !o.contains(v)));
            full
        }
        None => min_fill_order(&factors, &hidden, net.n_nodes()),
    };
    let (rest, _) = eliminate(factors, &order, false);
    let joint = rest.iter().fold(Factor::unit(), |acc, f| acc.product(f));
    Ok(joint.permuted(query))
}

fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let z: f64 = v.iter().sum();
    if !(z > 0.0) {
        return Err(Error::ZeroProbabilityEvidence);
    }
    v.iter_mut().for_each(|x| *x /= z);
    Ok(v)
}

/// `P(query | evidence)` laid out row-major over `query` (last node fastest).
pub fn joint_marginal(net: &BayesianNetwork, query: &[usize], evidence: &[(usize, usize)]) -> Result<Vec<f64>> {
    normalize(joint_unnormalized(net, query, evidence, None)?)
}

pub fn posterior_index(net: &BayesianNetwork, target: usize, evidence: &[(usize, usize)]) -> Result<Vec<f64>> {
    joint_marginal(net, &[target], evidence)
}

/// Posterior with an explicit elimination order. Nodes missing from `order` are eliminated
/// afterwards in index order.
pub fn posterior_with_order(
    net: &BayesianNetwork,
    target: usize,
    evidence: &[(usize, usize)],
    order: &[usize],
) -> Result<Vec<f64>> {
    normalize(joint_unnormalized(net, &[target], evidence, Some(order))?)
}

/// `P(evidence)`.
pub fn evidence_probability(net: &BayesianNetwork, evidence: &[(usize, usize)]) -> Result<f64> {
    Ok(joint_unnormalized(net, &[], evidence, None)?[0])
}

pub fn posterior(net: &BayesianNetwork, target: &str, evidence: &EvidenceMap) -> Result<PosteriorReport> {
    let t = net.require(target)?;
    let ev = evidence.resolve(net)?;
    Ok(PosteriorReport {
        target: target.to_string(),
        states: net.states(t).to_vec(),
        distribution: posterior_index(net, t, &ev)?,
        evidence: evidence.clone(),
    })
}

/// Relative tolerance under which two max-product scores count as tied.
const TIE_TOL: f64 = 1e-12;

/// Most probable joint state of all non-evidence nodes, as state indices for every node
/// (evidence nodes carry their observed state).
pub fn mpe_index(net: &BayesianNetwork, evidence: &[(usize, usize)]) -> Result<Vec<usize>> {
    check_evidence(net, evidence)?;
    let n = net.n_nodes();
    let factors: Vec<Factor> = (0..n)
        .map(|v| reduce_all(Factor::from_cpt(net.cpt(v)), evidence))
        .collect();
    let hidden: Vec<usize> = (0..n).filter(|v| !evidence.iter().any(|e| e.0 == *v)).collect();
    let order = min_fill_order(&factors, &hidden, n);
    let (rest, trace) = eliminate(factors, &order, true);
    let top: f64 = rest.iter().map(|f| f.values[0]).product();
    if !(top > 0.0) {
        return Err(Error::ZeroProbabilityEvidence);
    }
    let mut x = vec![0usize; n];
    for &(v, s) in evidence {
        x[v] = s;
    }
    for (v, psi) in trace.iter().rev() {
        let card = psi.card_of(*v).expect("eliminated variable in scope");
        let scores: Vec<f64> = (0..card)
            .map(|s| {
                x[*v] = s;
                psi.values[psi.index_of(&x)]
            })
            .collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        x[*v] = scores
            .iter()
            .position(|&p| p >= best * (1.0 - TIE_TOL))
            .expect("some state attains the max");
    }
    Ok(x)
}

pub fn mpe(net: &BayesianNetwork, evidence: &EvidenceMap) -> Result<MpeResult> {
    let ev = evidence.resolve(net)?;
    let x = mpe_index(net, &ev)?;
    let assignment = (0..net.n_nodes())
        .filter(|v| !ev.iter().any(|e| e.0 == *v))
        .map(|v| (net.name(v).to_string(), net.states(v)[x[v]].clone()))
        .collect();
    Ok(MpeResult {
        evidence: evidence.clone(),
        assignment,
        log_probability: net.joint_log_probability(&x),
    })
}

/// Posterior of `target` with each other node fixed to each of its states in turn. A
/// `Neutral` state is skipped unless `include_neutral`; rows whose evidence is impossible
/// are omitted. Rows are sorted by distance from the baseline, largest first.
pub fn evidence_sweep(net: &BayesianNetwork, target: &str, include_neutral: bool) -> Result<SweepReport> {
    let t = net.require(target)?;
    if net.n_nodes() < 2 {
        return Err(Error::Invalid("evidence sweep needs at least two nodes".into()));
    }
    let baseline = posterior_index(net, t, &[])?;
    let mut rows = Vec::new();
    for v in (0..net.n_nodes()).filter(|&v| v != t) {
        for (s, state) in net.states(v).iter().enumerate() {
            if !include_neutral && state == "Neutral" {
                continue;
            }
            match posterior_index(net, t, &[(v, s)]) {
                Ok(distribution) => rows.push(SweepRow {
                    node: net.name(v).to_string(),
                    state: state.clone(),
                    tvd: tvd(&distribution, &baseline),
                    distribution,
                }),
                Err(Error::ZeroProbabilityEvidence) => {}
                Err(e) => return Err(e),
            }
        }
    }
    rows.sort_by(|a, b| b.tvd.total_cmp(&a.tvd));
    Ok(SweepReport {
        target: target.to_string(),
        states: net.states(t).to_vec(),
        baseline,
        rows,
    })
}
