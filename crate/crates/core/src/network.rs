//! Discrete Bayesian networks: CPTs, maximum-likelihood fitting and the model JSON schema.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::score::count_families;

/// Conditional probability table. Rows are indexed row-major over `parents` (last parent
/// fastest); each row is a distribution over the node's states.
#[derive(Clone, Debug, PartialEq)]
pub struct Cpt {
    pub node: usize,
    pub parents: Vec<usize>,
    pub parent_cards: Vec<usize>,
    pub card: usize,
    pub values: Vec<f64>,
}

impl Cpt {
    pub fn n_rows(&self) -> usize {
        self.parent_cards.iter().product()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.card..(j + 1) * self.card]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.card..(j + 1) * self.card]
    }

    pub fn prob(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.card + k]
    }

    /// Row index for parent states listed in `self.parents` order.
    pub fn config_of(&self, parent_states: &[usize]) -> usize {
        parent_states
            .iter()
            .zip(&self.parent_cards)
            .fold(0, |acc, (&s, &c)| acc * c + s)
    }

    /// Parent states (in `self.parents` order) of row `j`.
    pub fn decode(&self, mut j: usize) -> Vec<usize> {
        let mut out = vec![0; self.parents.len()];
        for i in (0..self.parents.len()).rev() {
            out[i] = j % self.parent_cards[i];
            j /= self.parent_cards[i];
        }
        out
    }

    fn check_rows(&self, name: &str, tol: f64) -> Result<()> {
        if self.values.len() != self.n_rows() * self.card {
            return Err(Error::Invalid(format!(
                "CPT of `{name}` has {} entries, expected {}",
                self.values.len(),
                self.n_rows() * self.card
            )));
        }
        for j in 0..self.n_rows() {
            let row = self.row(j);
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::Invalid(format!("CPT of `{name}` row {j} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::Invalid(format!("CPT of `{name}` row {j} sums to {s}")));
            }
        }
        Ok(())
    }
}

/// How the structure was learned.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resamples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ess: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BayesianNetwork {
    dag: Dag,
    states: Vec<Vec<String>>,
    cpts: Vec<Cpt>,
    pub metadata: Metadata,
}

impl BayesianNetwork {
    /// Validates that every CPT matches the DAG's parent set and holds distributions.
    pub fn new(dag: Dag, states: Vec<Vec<String>>, cpts: Vec<Cpt>, metadata: Metadata) -> Result<Self> {
        if states.len() != dag.n_nodes() || cpts.len() != dag.n_nodes() {
            return Err(Error::Invalid("states/CPTs do not cover the DAG's nodes".into()));
        }
        for (v, cpt) in cpts.iter().enumerate() {
            let name = dag.name(v);
            if cpt.node != v || cpt.card != states[v].len() {
                return Err(Error::Invalid(format!("CPT of `{name}` is misaligned")));
            }
            let mut ps = cpt.parents.clone();
            ps.sort_unstable();
            if ps != dag.parents(v) {
                return Err(Error::Invalid(format!(
                    "CPT parents of `{name}` differ from the graph"
                )));
            }
            let cards: Vec<usize> = cpt.parents.iter().map(|&p| states[p].len()).collect();
            if cards != cpt.parent_cards {
                return Err(Error::Invalid(format!("CPT of `{name}` has wrong parent cardinalities")));
            }
            cpt.check_rows(name, 1e-9)?;
        }
        Ok(Self {
            dag,
            states,
            cpts,
            metadata,
        })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn n_nodes(&self) -> usize {
        self.dag.n_nodes()
    }

    pub fn names(&self) -> &[String] {
        self.dag.names()
    }

    pub fn name(&self, v: usize) -> &str {
        self.dag.name(v)
    }

    pub fn states(&self, v: usize) -> &[String] {
        &self.states[v]
    }

    pub fn all_states(&self) -> &[Vec<String>] {
        &self.states
    }

    pub fn cardinality(&self, v: usize) -> usize {
        self.states[v].len()
    }

    pub fn cpt(&self, v: usize) -> &Cpt {
        &self.cpts[v]
    }

    pub fn cpts(&self) -> &[Cpt] {
        &self.cpts
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.dag.index_of(name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name).ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn state_index(&self, v: usize, state: &str) -> Result<usize> {
        self.states[v]
            .iter()
            .position(|s| s == state)
            .ok_or_else(|| Error::UnknownState {
                node: self.name(v).to_string(),
                state: state.to_string(),
            })
    }

    /// Copy with one CPT replaced. The replacement must keep the same parents and shape.
    pub fn with_cpt(&self, cpt: Cpt) -> Result<Self> {
        let mut cpts = self.cpts.clone();
        let v = cpt.node;
        cpts[v] = cpt;
        Self::new(self.dag.clone(), self.states.clone(), cpts, self.metadata.clone())
    }

    /// Joint probability of a full assignment (state index per node), as a product of CPT
    /// entries.
    pub fn joint_probability(&self, assignment: &[usize]) -> f64 {
        self.cpts
            .iter()
            .map(|cpt| {
                let ps: Vec<usize> = cpt.parents.iter().map(|&p| assignment[p]).collect();
                cpt.prob(cpt.config_of(&ps), assignment[cpt.node])
            })
            .product()
    }

    pub fn joint_log_probability(&self, assignment: &[usize]) -> f64 {
        self.cpts
            .iter()
            .map(|cpt| {
                let ps: Vec<usize> = cpt.parents.iter().map(|&p| assignment[p]).collect();
                cpt.prob(cpt.config_of(&ps), assignment[cpt.node]).ln()
            })
            .sum()
    }

    pub fn to_json_model(&self) -> ModelJson {
        ModelJson {
            nodes: (0..self.n_nodes())
                .map(|v| NodeJson {
                    name: self.name(v).to_string(),
                    states: self.states[v].clone(),
                })
                .collect(),
            edges: self
                .dag
                .edges()
                .into_iter()
                .map(|(p, c)| [self.name(p).to_string(), self.name(c).to_string()])
                .collect(),
            cpts: self
                .cpts
                .iter()
                .map(|cpt| {
                    (
                        self.name(cpt.node).to_string(),
                        CptJson {
                            parents: cpt.parents.iter().map(|&p| self.name(p).to_string()).collect(),
                            rows: (0..cpt.n_rows()).map(|j| cpt.row(j).to_vec()).collect(),
                        },
                    )
                })
                .collect(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn from_json_model(model: &ModelJson) -> Result<Self> {
        let names: Vec<String> = model.nodes.iter().map(|n| n.name.clone()).collect();
        let edges: Vec<(String, String)> = model
            .edges
            .iter()
            .map(|[p, c]| (p.clone(), c.clone()))
            .collect();
        let dag = Dag::from_named_edges(names.clone(), &edges)?;
        let states: Vec<Vec<String>> = model.nodes.iter().map(|n| n.states.clone()).collect();
        let mut cpts = Vec::with_capacity(names.len());
        for (v, name) in names.iter().enumerate() {
            let cj = model
                .cpts
                .get(name)
                .ok_or_else(|| Error::Invalid(format!("no CPT for `{name}`")))?;
            let parents = cj
                .parents
                .iter()
                .map(|p| dag.index_of(p).ok_or_else(|| Error::UnknownNode(p.clone())))
                .collect::<Result<Vec<_>>>()?;
            let parent_cards: Vec<usize> = parents.iter().map(|&p| states[p].len()).collect();
            let card = states[v].len();
            if cj.rows.len() != parent_cards.iter().product::<usize>()
                || cj.rows.iter().any(|r| r.len() != card)
            {
                return Err(Error::Invalid(format!("CPT of `{name}` has the wrong shape")));
            }
            let mut cpt = Cpt {
                node: v,
                parents,
                parent_cards,
                card,
                values: cj.rows.concat(),
            };
            // externally produced tables are often rounded; accept and renormalize
            cpt.check_rows(name, 1e-6)?;
            for j in 0..cpt.n_rows() {
                let row = cpt.row_mut(j);
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    row.iter_mut().for_each(|p| *p /= s);
                }
            }
            cpts.push(cpt);
        }
        if let Some(extra) = model.cpts.keys().find(|k| !names.contains(k)) {
            return Err(Error::UnknownNode(extra.clone()));
        }
        Self::new(dag, states, cpts, model.metadata.clone())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_json_model())?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_json_model(&serde_json::from_str(s)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeJson {
    pub name: String,
    pub states: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CptJson {
    pub parents: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// On-disk model: `{nodes, edges, cpts, metadata}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelJson {
    pub nodes: Vec<NodeJson>,
    pub edges: Vec<[String; 2]>,
    pub cpts: BTreeMap<String, CptJson>,
    #[serde(default)]
    pub metadata: Metadata,
}

/// Maximum-likelihood CPT for `node` with the given parent order. Unobserved parent
/// configurations get a uniform row.
pub fn fit_cpt(data: &Dataset, node: usize, parents: &[usize]) -> Cpt {
    let counts = count_families(data, node, parents);
    let r = counts.r;
    let mut values = Vec::with_capacity(counts.q * r);
    for j in 0..counts.q {
        let row = counts.row(j);
        let total: u32 = row.iter().sum();
        if total == 0 {
            values.extend(std::iter::repeat_n(1.0 / r as f64, r));
        } else {
            values.extend(row.iter().map(|&c| c as f64 / total as f64));
        }
    }
    Cpt {
        node,
        parents: parents.to_vec(),
        parent_cards: parents.iter().map(|&p| data.cardinality(p)).collect(),
        card: r,
        values,
    }
}

/// Fits every CPT of `dag` by maximum likelihood. The DAG's nodes are matched to dataset
/// columns by name.
pub fn fit_mle(dag: &Dag, data: &Dataset, metadata: Metadata) -> Result<BayesianNetwork> {
    let cols = dag
        .names()
        .iter()
        .map(|n| data.require(n))
        .collect::<Result<Vec<_>>>()?;
    let sub = data.select_columns(&cols);
    let cpts = (0..dag.n_nodes())
        .map(|v| fit_cpt(&sub, v, dag.parents(v)))
        .collect();
    BayesianNetwork::new(dag.clone(), sub.all_states().to_vec(), cpts, metadata)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(cols: Vec<Vec<u8>>, cards: &[usize]) -> Dataset {
        let names = (0..cols.len()).map(|i| format!("v{i}")).collect();
        let states = cards
            .iter()
            .map(|&c| (0..c).map(|s| format!("s{s}")).collect())
            .collect();
        Dataset::new(names, states, cols).unwrap()
    }

    #[test]
    fn mle_rows() {
        let d = data(vec![vec![0, 1, 0, 1], vec![0, 0, 0, 1]], &[2, 2]);
        let dag = Dag::empty(d.names().to_vec());
        let net = fit_mle(&dag, &d, Metadata::default()).unwrap();
        assert_eq!(net.cpt(0).values, vec![0.5, 0.5]);
        assert_eq!(net.cpt(1).values, vec![0.75, 0.25]);
    }

    #[test]
    fn unobserved_configuration_is_uniform() {
        let d = data(vec![vec![0, 0, 1], vec![0, 1, 2]], &[3, 3]);
        let dag = Dag::from_edges(d.names().to_vec(), &[(0, 1)]).unwrap();
        let net = fit_mle(&dag, &d, Metadata::default()).unwrap();
        let cpt = net.cpt(1);
        assert_eq!(cpt.row(2), &[1.0 / 3.0; 3]);
        assert_eq!(cpt.row(0), &[0.5, 0.5, 0.0]);
        assert_eq!(cpt.row(1), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn json_round_trip_preserves_parent_order() {
        let d = data(
            vec![vec![0, 1, 1, 0, 1], vec![1, 0, 1, 1, 0], vec![0, 1, 1, 0, 0]],
            &[2, 2, 2],
        );
        let dag = Dag::from_edges(d.names().to_vec(), &[(0, 2), (1, 2)]).unwrap();
        let net = fit_mle(
            &dag,
            &d,
            Metadata {
                seed: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        let s = net.to_json_string().unwrap();
        let back = BayesianNetwork::from_json_str(&s).unwrap();
        assert_eq!(back, net);

        // a file listing parents in the other order describes the same distribution
        let mut model = net.to_json_model();
        let cj = model.cpts.get_mut("v2").unwrap();
        cj.parents.reverse();
        let rows = cj.rows.clone();
        cj.rows = vec![rows[0].clone(), rows[2].clone(), rows[1].clone(), rows[3].clone()];
        let swapped = BayesianNetwork::from_json_model(&model).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let x = [a, b, c];
                    assert!((swapped.joint_probability(&x) - net.joint_probability(&x)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_rows() {
        let d = data(vec![vec![0, 1]], &[2]);
        let net = fit_mle(&Dag::empty(d.names().to_vec()), &d, Metadata::default()).unwrap();
        let mut model = net.to_json_model();
        model.cpts.get_mut("v0").unwrap().rows = vec![vec![0.7, 0.7]];
        assert!(BayesianNetwork::from_json_model(&model).is_err());
    }

    #[test]
    fn decode_inverts_config_of() {
        let cpt = Cpt {
            node: 0,
            parents: vec![1, 2],
            parent_cards: vec![3, 2],
            card: 2,
            values: vec![0.5; 12],
        };
        for j in 0..6 {
            assert_eq!(cpt.config_of(&cpt.decode(j)), j);
        }
        assert_eq!(cpt.decode(3), vec![1, 1]);
    }
}
