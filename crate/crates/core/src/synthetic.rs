//! Seeded generators for test networks, categorical samples and price panels.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::discretize::tertile_states;
use crate::graph::Dag;
use crate::network::{BayesianNetwork, Cpt, Metadata};
use crate::panel::{PanelKind, TimePanel};

/// Builds ternary networks whose child tends to follow the rounded mean of its parents.
#[derive(Clone, Debug)]
pub struct TernaryNetBuilder {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl TernaryNetBuilder {
    pub fn new(n: usize) -> Self {
        Self { n, edges: Vec::new() }
    }

    /// Adds `p -> c`. `strength` is the probability mass placed on the preferred child state.
    pub fn edge(mut self, p: usize, c: usize, strength: f64) -> Self {
        self.edges.push((p, c, strength));
        self
    }

    pub fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("X{i}")).collect()
    }

    fn dag(&self) -> Dag {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|&(p, c, _)| (p, c)).collect();
        Dag::from_edges(Self::names(self.n), &edges).expect("builder edges form a DAG")
    }

    pub fn build(&self, seed: u64) -> BayesianNetwork {
        self.build_with_roots(seed, 0.2, 0.45)
    }

    /// Like [`build`](Self::build) with root marginals close to uniform.
    pub fn build_uniformish(&self, seed: u64) -> BayesianNetwork {
        self.build_with_roots(seed, 0.3, 0.36)
    }

    fn build_with_roots(&self, seed: u64, lo: f64, hi: f64) -> BayesianNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dag = self.dag();
        let cpts = (0..self.n)
            .map(|v| {
                let parents = dag.parents(v).to_vec();
                if parents.is_empty() {
                    let raw: Vec<f64> = (0..3).map(|_| rng.random_range(lo..hi)).collect();
                    let s: f64 = raw.iter().sum();
                    return Cpt {
                        node: v,
                        parents,
                        parent_cards: vec![],
                        card: 3,
                        values: raw.iter().map(|x| x / s).collect(),
                    };
                }
                let strength = self
                    .edges
                    .iter()
                    .filter(|e| e.1 == v)
                    .map(|e| e.2)
                    .sum::<f64>()
                    / parents.len() as f64;
                let mut cpt = Cpt {
                    node: v,
                    parent_cards: vec![3; parents.len()],
                    parents,
                    card: 3,
                    values: Vec::new(),
                };
                for j in 0..cpt.n_rows() {
                    let ps = cpt.decode(j);
                    let mean = ps.iter().sum::<usize>() as f64 / ps.len() as f64;
                    let pref = mean.round() as usize;
                    let jitter = rng.random_range(-0.02..0.02);
                    let top = (strength + jitter).clamp(1.0 / 3.0, 1.0);
                    cpt.values
                        .extend((0..3).map(|k| if k == pref { top } else { (1.0 - top) / 2.0 }));
                }
                cpt
            })
            .collect();
        BayesianNetwork::new(dag, vec![tertile_states(); self.n], cpts, Metadata::default())
            .expect("generated network is valid")
    }

    /// Random ternary network: each forward pair `i -> j` (i < j) is an edge with probability
    /// `edge_prob`, at most three parents per node, Dirichlet(1) CPT rows.
    pub fn random(n: usize, edge_prob: f64, seed: u64) -> BayesianNetwork {
        random_network(&vec![3; n], edge_prob, 3, seed)
    }
}

fn dirichlet_row<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k)
        .map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-3)
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Random network over nodes with the given cardinalities. Nodes are named `X0..`.
pub fn random_network(cards: &[usize], edge_prob: f64, max_parents: usize, seed: u64) -> BayesianNetwork {
    let n = cards.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for c in 1..n {
        let mut k = 0;
        for p in 0..c {
            if k < max_parents && rng.random_bool(edge_prob) {
                edges.push((p, c));
                k += 1;
            }
        }
    }
    let dag = Dag::from_edges(TernaryNetBuilder::names(n), &edges).expect("forward edges are acyclic");
    let states: Vec<Vec<String>> = cards
        .iter()
        .map(|&k| {
            if k == 3 {
                tertile_states()
            } else {
                (0..k).map(|s| format!("s{s}")).collect()
            }
        })
        .collect();
    let cpts = (0..n)
        .map(|v| {
            let parents = dag.parents(v).to_vec();
            let parent_cards: Vec<usize> = parents.iter().map(|&p| cards[p]).collect();
            let rows: usize = parent_cards.iter().product();
            Cpt {
                node: v,
                parents,
                parent_cards,
                card: cards[v],
                values: (0..rows).flat_map(|_| dirichlet_row(&mut rng, cards[v])).collect(),
            }
        })
        .collect();
    BayesianNetwork::new(dag, states, cpts, Metadata::default()).expect("generated network is valid")
}

/// Draws `rows` samples by forward sampling in topological order.
pub fn sample_dataset(net: &BayesianNetwork, rows: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = net.n_nodes();
    let order = net.dag().topological_order();
    let mut columns = vec![Vec::with_capacity(rows); n];
    let mut x = vec![0usize; n];
    for _ in 0..rows {
        for &v in &order {
            let cpt = net.cpt(v);
            let ps: Vec<usize> = cpt.parents.iter().map(|&p| x[p]).collect();
            x[v] = draw(cpt.row(cpt.config_of(&ps)), rng.random::<f64>());
        }
        for v in 0..n {
            columns[v].push(x[v] as u8);
        }
    }
    Dataset::new(net.names().to_vec(), net.all_states().to_vec(), columns)
        .expect("sampled states are in range")
}

fn draw(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding left a sliver above the last cumulative sum
    row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Weekday dates starting at `start` (or the following Monday).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Simulated daily closing prices. Returns load on a common GARCH(1,1) factor with
/// instrument-specific GARCH(1,1) noise; the second instrument also reacts to the first
/// instrument's previous-day return.
pub fn simulate_prices(names: &[String], n_days: usize, seed: u64) -> TimePanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let burn = 300;
    let total = n_days + burn;
    let factor = garch_path(&mut rng, total, 0.05, 0.08, 0.9);
    let mut returns: Vec<Vec<f64>> = Vec::with_capacity(names.len());
    for i in 0..names.len() {
        let loading = if i % 2 == 0 { 0.8 } else { -0.5 } * (1.0 - 0.1 * (i % 3) as f64);
        let own = garch_path(&mut rng, total, 0.1, 0.1, 0.85);
        let mut r: Vec<f64> = (0..total).map(|t| loading * factor[t] + own[t]).collect();
        if i == 1 {
            let lead = &returns[0];
            for t in 1..total {
                r[t] += 0.6 * lead[t - 1];
            }
        }
        returns.push(r);
    }
    let series = returns
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut level = (100.0 + 10.0 * i as f64).ln();
            let mut prices = Vec::with_capacity(n_days + 1);
            prices.push(level.exp());
            for &x in &r[burn..] {
                level += x / 100.0;
                prices.push(level.exp());
            }
            prices.truncate(n_days);
            prices
        })
        .collect();
    let dates = business_days(NaiveDate::from_ymd_opt(2015, 1, 2).expect("valid date"), n_days);
    TimePanel::new(dates, names.to_vec(), series, PanelKind::Prices).expect("simulated panel is valid")
}

fn garch_path<R: Rng>(rng: &mut R, n: usize, omega: f64, alpha: f64, beta: f64) -> Vec<f64> {
    let mut h = omega / (1.0 - alpha - beta);
    let mut prev = 0.0f64;
    (0..n)
        .map(|_| {
            h = omega + alpha * prev * prev + beta * h;
            let z: f64 = rng.sample(StandardNormal);
            prev = h.sqrt() * z;
            prev
        })
        .collect()
}
