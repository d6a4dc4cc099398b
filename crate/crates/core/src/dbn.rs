//! Two-slice dynamic networks: lagged panels, inter-slice transition learning and next-day
//! shock queries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_consensus_with, BootstrapOptions, EdgeFrequency};
use crate::data::Dataset;
use crate::discretize::DiscretePanel;
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::inference::{posterior_index, EvidenceMap, PosteriorReport};
use crate::network::{fit_cpt, BayesianNetwork, Cpt, Metadata, ModelJson};
use crate::score::BDeuConfig;
use crate::search::{tabu_search_with, SearchConstraints, SearchControls};

pub const NEXT_SLICE_SUFFIX: &str = "@T+1";

pub fn next_name(name: &str) -> String {
    format!("{name}{NEXT_SLICE_SUFFIX}")
}

/// Pairs each day with the next: columns are the slice-T variables followed by their
/// `@T+1` copies, one row per consecutive pair of days.
pub fn build_lagged_panel(data: &Dataset) -> Result<Dataset> {
    let rows = data.n_rows();
    if rows < 2 {
        return Err(Error::Invalid("a lagged panel needs at least two rows".into()));
    }
    let n = data.n_vars();
    let mut names = data.names().to_vec();
    names.extend(data.names().iter().map(|s| next_name(s)));
    let mut states = data.all_states().to_vec();
    states.extend(data.all_states().iter().cloned());
    let mut columns: Vec<Vec<u8>> = (0..n).map(|v| data.column(v)[..rows - 1].to_vec()).collect();
    columns.extend((0..n).map(|v| data.column(v)[1..].to_vec()));
    Dataset::new(names, states, columns)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoSliceNetwork {
    static_net: BayesianNetwork,
    /// One CPT per slice-T+1 node. `node` is `n + j` and parents index slice-T nodes.
    transitions: Vec<Cpt>,
    pub metadata: Metadata,
}

impl TwoSliceNetwork {
    pub fn new(static_net: BayesianNetwork, transitions: Vec<Cpt>, metadata: Metadata) -> Result<Self> {
        let n = static_net.n_nodes();
        if transitions.len() != n {
            return Err(Error::Invalid(format!("{} transition tables for {n} nodes", transitions.len())));
        }
        for (j, cpt) in transitions.iter().enumerate() {
            if cpt.node != n + j || cpt.card != static_net.cardinality(j) {
                return Err(Error::Invalid(format!(
                    "transition table of `{}` is misaligned",
                    static_net.name(j)
                )));
            }
            if cpt.parents.iter().any(|&p| p >= n) {
                return Err(Error::Invalid(format!(
                    "transition parents of `{}` must lie in slice T",
                    static_net.name(j)
                )));
            }
        }
        let tsn = Self {
            static_net,
            transitions,
            metadata,
        };
        // validates every table against the unrolled structure
        tsn.try_unrolled()?;
        Ok(tsn)
    }

    pub fn static_net(&self) -> &BayesianNetwork {
        &self.static_net
    }

    pub fn transitions(&self) -> &[Cpt] {
        &self.transitions
    }

    /// `(parent at T, child)` inter-slice edges, by slice-T index.
    pub fn transition_edges(&self) -> Vec<(usize, usize)> {
        let n = self.static_net.n_nodes();
        let mut e: Vec<(usize, usize)> = self
            .transitions
            .iter()
            .flat_map(|c| c.parents.iter().map(move |&p| (p, c.node - n)))
            .collect();
        e.sort_unstable();
        e
    }

    fn try_unrolled(&self) -> Result<BayesianNetwork> {
        let n = self.static_net.n_nodes();
        let mut names = self.static_net.names().to_vec();
        names.extend(self.static_net.names().iter().map(|s| next_name(s)));
        let mut edges = self.static_net.dag().edges();
        edges.extend(self.transition_edges().into_iter().map(|(p, c)| (p, n + c)));
        let dag = Dag::from_edges(names, &edges)?;
        let mut states = self.static_net.all_states().to_vec();
        states.extend(self.static_net.all_states().iter().cloned());
        let mut cpts = self.static_net.cpts().to_vec();
        cpts.extend(self.transitions.iter().cloned());
        BayesianNetwork::new(dag, states, cpts, self.metadata.clone())
    }

    /// The 2n-node network: slice T followed by the `@T+1` copies.
    pub fn unrolled(&self) -> BayesianNetwork {
        self.try_unrolled().expect("validated at construction")
    }

    pub fn to_json_model(&self) -> TwoSliceJson {
        let net = &self.static_net;
        TwoSliceJson {
            model: net.to_json_model(),
            transitions: self
                .transitions
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    (
                        net.name(j).to_string(),
                        TransitionJson {
                            parents_at_t: c.parents.iter().map(|&p| net.name(p).to_string()).collect(),
                            rows: (0..c.n_rows()).map(|r| c.row(r).to_vec()).collect(),
                        },
                    )
                })
                .collect(),
            transition_metadata: self.metadata.clone(),
        }
    }

    pub fn from_json_model(json: &TwoSliceJson) -> Result<Self> {
        let static_net = BayesianNetwork::from_json_model(&json.model)?;
        let n = static_net.n_nodes();
        let mut transitions = Vec::with_capacity(n);
        for j in 0..n {
            let name = static_net.name(j);
            let t = json
                .transitions
                .get(name)
                .ok_or_else(|| Error::Invalid(format!("no transition table for `{name}`")))?;
            let parents = t
                .parents_at_t
                .iter()
                .map(|p| static_net.require(p))
                .collect::<Result<Vec<_>>>()?;
            let parent_cards: Vec<usize> = parents.iter().map(|&p| static_net.cardinality(p)).collect();
            let card = static_net.cardinality(j);
            if t.rows.len() != parent_cards.iter().product::<usize>() || t.rows.iter().any(|r| r.len() != card) {
                return Err(Error::Invalid(format!("transition table of `{name}` has the wrong shape")));
            }
            let mut values = Vec::with_capacity(t.rows.len() * card);
            for row in &t.rows {
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-6 || row.iter().any(|&p| !(p >= 0.0)) {
                    return Err(Error::Invalid(format!("transition row of `{name}` sums to {s}")));
                }
                if (s - 1.0).abs() > 1e-12 {
                    values.extend(row.iter().map(|p| p / s));
                } else {
                    values.extend_from_slice(row);
                }
            }
            transitions.push(Cpt {
                node: n + j,
                parents,
                parent_cards,
                card,
                values,
            });
        }
        if let Some(extra) = json.transitions.keys().find(|k| static_net.index_of(k).is_none()) {
            return Err(Error::UnknownNode(extra.clone()));
        }
        Self::new(static_net, transitions, json.transition_metadata.clone())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_json_model())?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_json_model(&serde_json::from_str(s)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionJson {
    #[serde(rename = "parents_at_T")]
    pub parents_at_t: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Static model schema plus `transitions`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSliceJson {
    #[serde(flatten)]
    pub model: ModelJson,
    pub transitions: BTreeMap<String, TransitionJson>,
    #[serde(default)]
    pub transition_metadata: Metadata,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionOptions {
    pub config: BDeuConfig,
    pub controls: SearchControls,
    pub bootstrap: BootstrapOptions,
    /// Use one search on the full lagged panel instead of bootstrap consensus.
    pub single_run: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnedTransitions {
    pub network: TwoSliceNetwork,
    /// Bootstrap frequencies of inter-slice pairs (empty for a single run).
    pub frequencies: Vec<EdgeFrequency>,
}

/// Learns inter-slice edges `X@T -> Y@T+1` with the slice-T structure held fixed, then fits
/// the transition tables by maximum likelihood on the lagged panel.
pub fn learn_transitions(
    panel: &Dataset,
    static_net: &BayesianNetwork,
    options: &TransitionOptions,
    seed: u64,
) -> Result<LearnedTransitions> {
    if panel.names() != static_net.names() {
        return Err(Error::Invalid("panel columns differ from the static network's nodes".into()));
    }
    let n = panel.n_vars();
    let lagged = build_lagged_panel(panel)?;
    let mut allowed = vec![vec![false; 2 * n]; 2 * n];
    for row in allowed.iter_mut().take(n) {
        row[n..].iter_mut().for_each(|a| *a = true);
    }
    let frozen = static_net.dag().edges();
    let constraints = SearchConstraints {
        allowed: Some(allowed),
        frozen: frozen.clone(),
    };
    let start = Dag::from_edges(lagged.names().to_vec(), &frozen)?;
    let (dag, frequencies) = if options.single_run {
        let d = tabu_search_with(&lagged, &options.config, &options.controls, &constraints, start, seed);
        (d, Vec::new())
    } else {
        let c = bootstrap_consensus_with(
            &lagged,
            &options.config,
            &options.controls,
            &constraints,
            &start,
            &options.bootstrap,
            seed,
        )?;
        let inter: Vec<EdgeFrequency> = c
            .frequencies
            .into_iter()
            .filter(|f| f.b.ends_with(NEXT_SLICE_SUFFIX) && !f.a.ends_with(NEXT_SLICE_SUFFIX))
            .collect();
        (c.dag, inter)
    };
    let slice_t: Vec<(usize, usize)> = dag.edges().into_iter().filter(|&(_, c)| c < n).collect();
    if slice_t != frozen {
        return Err(Error::Numerical("transition learning altered the slice-T structure".into()));
    }
    let transitions = (0..n)
        .map(|j| fit_cpt(&lagged, n + j, dag.parents(n + j)))
        .collect();
    let metadata = Metadata {
        seed: Some(seed),
        resamples: (!options.single_run).then_some(options.bootstrap.resamples),
        threshold: (!options.single_run).then_some(options.bootstrap.threshold),
        ess: Some(options.config.equivalent_sample_size),
        source: static_net.metadata.source.clone(),
    };
    Ok(LearnedTransitions {
        network: TwoSliceNetwork::new(static_net.clone(), transitions, metadata)?,
        frequencies,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalReport {
    pub at_t: PosteriorReport,
    pub at_t1: PosteriorReport,
}

/// Target distribution at T and at T+1 given evidence on slice-T nodes.
pub fn temporal_query(tsn: &TwoSliceNetwork, evidence: &EvidenceMap, target: &str) -> Result<TemporalReport> {
    let net = tsn.static_net();
    let t = net.require(target)?;
    let ev = evidence.resolve(net)?;
    let unrolled = tsn.unrolled();
    let n = net.n_nodes();
    let at_t = match ev.iter().find(|e| e.0 == t) {
        Some(&(_, s)) => {
            if posterior_index(&unrolled, n + t, &ev).is_err() {
                return Err(Error::ZeroProbabilityEvidence);
            }
            (0..net.cardinality(t)).map(|k| f64::from(k == s)).collect()
        }
        None => posterior_index(&unrolled, t, &ev)?,
    };
    let at_t1 = posterior_index(&unrolled, n + t, &ev)?;
    Ok(TemporalReport {
        at_t: PosteriorReport {
            target: target.to_string(),
            states: net.states(t).to_vec(),
            distribution: at_t,
            evidence: evidence.clone(),
        },
        at_t1: PosteriorReport {
            target: next_name(target),
            states: net.states(t).to_vec(),
            distribution: at_t1,
            evidence: evidence.clone(),
        },
    })
}

/// Lagged learning input from a discretized panel.
pub fn lagged_from_panel(panel: &DiscretePanel) -> Result<Dataset> {
    build_lagged_panel(&panel.data)
}
