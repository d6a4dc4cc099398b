//! Bootstrap consensus over tabu-search structures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::score::BDeuConfig;
use crate::search::{tabu_search_with, SearchConstraints, SearchControls};

/// Which frequency the retention threshold applies to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Adjacency frequency; retained edges take their majority direction.
    #[default]
    Undirected,
    /// Frequency of each direction separately.
    Directed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub resamples: usize,
    pub threshold: f64,
    pub rule: ThresholdRule,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            resamples: 200,
            threshold: 0.5,
            rule: ThresholdRule::Undirected,
        }
    }
}

impl BootstrapOptions {
    pub fn validate(&self) -> Result<()> {
        if self.resamples == 0 {
            return Err(Error::Invalid("resamples must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Invalid(format!("threshold {} outside (0, 1]", self.threshold)));
        }
        Ok(())
    }
}

/// Frequencies for an unordered pair `a < b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeFrequency {
    pub a: String,
    pub b: String,
    /// Fraction of resamples with `a` and `b` adjacent.
    pub undirected: f64,
    /// Fraction with `a -> b`.
    pub forward: f64,
    /// Fraction with `b -> a`.
    pub backward: f64,
    /// Orientation kept in the consensus graph, if any.
    pub retained: Option<(String, String)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Consensus {
    pub dag: Dag,
    pub frequencies: Vec<EdgeFrequency>,
    pub resamples: usize,
}

/// Resampled rows and search seed for resample `r`.
pub fn resample(data: &Dataset, seed: u64, r: usize) -> (Dataset, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    let d = data.resample(&mut rng);
    (d, rng.random())
}

pub fn bootstrap_consensus(
    data: &Dataset,
    config: &BDeuConfig,
    controls: &SearchControls,
    options: &BootstrapOptions,
    seed: u64,
) -> Result<Consensus> {
    bootstrap_consensus_with(
        data,
        config,
        controls,
        &SearchConstraints::default(),
        &Dag::empty(data.names().to_vec()),
        options,
        seed,
    )
}

/// Runs the constrained search on each resample from `start` and builds the consensus.
/// Frozen edges are always kept.
pub fn bootstrap_consensus_with(
    data: &Dataset,
    config: &BDeuConfig,
    controls: &SearchControls,
    constraints: &SearchConstraints,
    start: &Dag,
    options: &BootstrapOptions,
    seed: u64,
) -> Result<Consensus> {
    options.validate()?;
    if data.n_rows() == 0 {
        return Err(Error::Invalid("cannot learn from an empty dataset".into()));
    }
    let dags: Vec<Dag> = (0..options.resamples)
        .into_par_iter()
        .map(|r| {
            let (d, s) = resample(data, seed, r);
            tabu_search_with(&d, config, controls, constraints, start.clone(), s)
        })
        .collect();
    Ok(consensus_from(data.names(), &dags, options, &constraints.frozen))
}

/// Consensus graph from a collection of DAGs over the same nodes.
pub fn consensus_from(
    names: &[String],
    dags: &[Dag],
    options: &BootstrapOptions,
    frozen: &[(usize, usize)],
) -> Consensus {
    let n = names.len();
    let total = dags.len() as f64;
    let mut count = vec![vec![0usize; n]; n];
    for g in dags {
        for (p, c) in g.edges() {
            count[p][c] += 1;
        }
    }
    // (parent, child, frequency used for cycle repair)
    let mut kept: Vec<(usize, usize, f64)> = Vec::new();
    let mut frequencies = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let fwd = count[a][b] as f64 / total;
            let bwd = count[b][a] as f64 / total;
            let und = (count[a][b] + count[b][a]) as f64 / total;
            let pick = match options.rule {
                ThresholdRule::Undirected if und >= options.threshold => {
                    Some(if bwd > fwd { (b, a, und) } else { (a, b, und) })
                }
                ThresholdRule::Undirected => None,
                ThresholdRule::Directed => {
                    let f_ok = fwd >= options.threshold;
                    let b_ok = bwd >= options.threshold;
                    match (f_ok, b_ok) {
                        (true, true) if bwd > fwd => Some((b, a, bwd)),
                        (true, _) => Some((a, b, fwd)),
                        (false, true) => Some((b, a, bwd)),
                        (false, false) => None,
                    }
                }
            };
            let pick = if frozen.contains(&(a, b)) {
                Some((a, b, f64::INFINITY))
            } else if frozen.contains(&(b, a)) {
                Some((b, a, f64::INFINITY))
            } else {
                pick
            };
            if let Some(e) = pick {
                kept.push(e);
            }
            if count[a][b] + count[b][a] > 0 || pick.is_some() {
                frequencies.push(EdgeFrequency {
                    a: names[a].clone(),
                    b: names[b].clone(),
                    undirected: und,
                    forward: fwd,
                    backward: bwd,
                    retained: pick.map(|(p, c, _)| (names[p].clone(), names[c].clone())),
                });
            }
        }
    }

    while let Some(cycle) = find_cycle(n, &kept) {
        let weakest = cycle
            .iter()
            .copied()
            .min_by(|&i, &j| {
                let (x, y) = (kept[i], kept[j]);
                x.2.total_cmp(&y.2).then((x.0, x.1).cmp(&(y.0, y.1)))
            })
            .expect("cycle has edges");
        let (p, c, _) = kept.remove(weakest);
        let (a, b) = (p.min(c), p.max(c));
        if let Some(f) = frequencies
            .iter_mut()
            .find(|f| f.a == names[a] && f.b == names[b])
        {
            f.retained = None;
        }
    }
    let edges: Vec<(usize, usize)> = kept.iter().map(|&(p, c, _)| (p, c)).collect();
    Consensus {
        dag: Dag::from_edges(names.to_vec(), &edges).expect("cycles removed"),
        frequencies,
        resamples: dags.len(),
    }
}

/// Indices into `edges` of some directed cycle.
fn find_cycle(n: usize, edges: &[(usize, usize, f64)]) -> Option<Vec<usize>> {
    let mut out: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (i, &(p, c, _)) in edges.iter().enumerate() {
        out[p].push((c, i));
    }
    // 0 unvisited, 1 on stack, 2 done
    let mut state = vec![0u8; n];
    let mut via: Vec<Option<usize>> = vec![None; n];
    for root in 0..n {
        if state[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        state[root] = 1;
        while let Some(top) = stack.last_mut() {
            let (v, i) = *top;
            if i < out[v].len() {
                top.1 += 1;
                let (w, e) = out[v][i];
                match state[w] {
                    0 => {
                        state[w] = 1;
                        via[w] = Some(e);
                        stack.push((w, 0));
                    }
                    1 => {
                        let mut cycle = vec![e];
                        let mut u = v;
                        while u != w {
                            let ei = via[u].expect("on stack below the root");
                            cycle.push(ei);
                            u = edges[ei].0;
                        }
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                state[v] = 2;
                stack.pop();
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::tabu_search;
    use crate::synthetic::{sample_dataset, TernaryNetBuilder};

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i}")).collect()
    }

    #[test]
    fn single_resample_equals_single_search() {
        let net = TernaryNetBuilder::random(5, 0.5, 2);
        let data = sample_dataset(&net, 800, 3);
        let cfg = BDeuConfig::default();
        let controls = SearchControls::default();
        let opts = BootstrapOptions {
            resamples: 1,
            ..Default::default()
        };
        let c = bootstrap_consensus(&data, &cfg, &controls, &opts, 17).unwrap();
        let (d, s) = resample(&data, 17, 0);
        assert_eq!(c.dag, tabu_search(&d, &cfg, &controls, s));
    }

    #[test]
    fn majority_direction_and_threshold() {
        let n = names(3);
        let g = |e: &[(usize, usize)]| Dag::from_edges(n.clone(), e).unwrap();
        let dags = vec![g(&[(0, 1)]), g(&[(1, 0)]), g(&[(1, 0), (1, 2)]), g(&[])];
        let c = consensus_from(&n, &dags, &BootstrapOptions::default(), &[]);
        assert_eq!(c.dag.edges(), vec![(1, 0)]);
        let f01 = &c.frequencies[0];
        assert_eq!((f01.undirected, f01.forward, f01.backward), (0.75, 0.25, 0.5));
        assert_eq!(c.frequencies[1].retained, None);
        assert!(c
            .frequencies
            .iter()
            .all(|f| (0.0..=1.0).contains(&f.undirected)));

        let directed = BootstrapOptions {
            rule: ThresholdRule::Directed,
            ..Default::default()
        };
        assert_eq!(consensus_from(&n, &dags, &directed, &[]).dag.edges(), vec![(1, 0)]);
        let tie = vec![g(&[(0, 1)]), g(&[(1, 0)])];
        assert_eq!(
            consensus_from(&n, &tie, &BootstrapOptions::default(), &[]).dag.edges(),
            vec![(0, 1)]
        );
    }

    #[test]
    fn weakest_edge_on_cycle_dropped() {
        let n = names(3);
        let g = |e: &[(usize, usize)]| Dag::from_edges(n.clone(), e).unwrap();
        let dags = vec![
            g(&[(0, 1), (1, 2)]),
            g(&[(0, 1), (1, 2)]),
            g(&[(0, 1), (2, 0)]),
            g(&[(2, 0)]),
        ];
        let c = consensus_from(&n, &dags, &BootstrapOptions::default(), &[]);
        assert_eq!(c.dag.edges(), vec![(0, 1), (2, 0)]);
    }

    #[test]
    fn independent_columns_give_empty_consensus() {
        let net = TernaryNetBuilder::new(4).build_uniformish(5);
        let data = sample_dataset(&net, 1000, 6);
        let opts = BootstrapOptions {
            resamples: 30,
            ..Default::default()
        };
        let c = bootstrap_consensus(&data, &BDeuConfig::default(), &SearchControls::default(), &opts, 1)
            .unwrap();
        assert_eq!(c.dag.n_edges(), 0);
        assert!(c.frequencies.iter().all(|f| f.undirected < 0.5));
    }

    #[test]
    fn reproducible() {
        let net = TernaryNetBuilder::random(4, 0.6, 8);
        let data = sample_dataset(&net, 500, 9);
        let opts = BootstrapOptions {
            resamples: 8,
            ..Default::default()
        };
        let run = || {
            bootstrap_consensus(&data, &BDeuConfig::default(), &SearchControls::default(), &opts, 4)
                .unwrap()
        };
        assert_eq!(run(), run());
    }
}
