//! Family counts and the BDeu score.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Dag;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BDeuConfig {
    /// Equivalent sample size N'.
    pub equivalent_sample_size: f64,
}

impl Default for BDeuConfig {
    fn default() -> Self {
        Self {
            equivalent_sample_size: 10.0,
        }
    }
}

impl BDeuConfig {
    pub fn new(ess: f64) -> Result<Self> {
        if !(ess > 0.0) || !ess.is_finite() {
            return Err(Error::Invalid(format!("equivalent sample size must be > 0, got {ess}")));
        }
        Ok(Self {
            equivalent_sample_size: ess,
        })
    }
}

/// Contingency counts `N_ijk` for one node and an ordered parent list.
///
/// Parent configuration `j` is row-major over `parents`: the last parent varies fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FamilyCounts {
    pub node: usize,
    pub parents: Vec<usize>,
    /// Child cardinality `r_i`.
    pub r: usize,
    /// Number of parent configurations `q_i`.
    pub q: usize,
    /// `counts[j * r + k]`.
    pub counts: Vec<u32>,
}

impl FamilyCounts {
    pub fn get(&self, j: usize, k: usize) -> u32 {
        self.counts[j * self.r + k]
    }

    pub fn row(&self, j: usize) -> &[u32] {
        &self.counts[j * self.r..(j + 1) * self.r]
    }

    /// `N_ij`.
    pub fn marginals(&self) -> Vec<u32> {
        (0..self.q).map(|j| self.row(j).iter().sum()).collect()
    }
}

pub fn count_families(data: &Dataset, node: usize, parents: &[usize]) -> FamilyCounts {
    let r = data.cardinality(node);
    let q: usize = parents.iter().map(|&p| data.cardinality(p)).product();
    let mut counts = vec![0u32; q * r];
    let child = data.column(node);
    let cols: Vec<(&[u8], usize)> = parents
        .iter()
        .map(|&p| (data.column(p), data.cardinality(p)))
        .collect();
    for (row, &k) in child.iter().enumerate() {
        let mut j = 0;
        for &(col, card) in &cols {
            j = j * card + col[row] as usize;
        }
        counts[j * r + k as usize] += 1;
    }
    FamilyCounts {
        node,
        parents: parents.to_vec(),
        r,
        q,
        counts,
    }
}

/// Name-based variant of [`count_families`].
pub fn count_families_named(data: &Dataset, node: &str, parents: &[&str]) -> Result<FamilyCounts> {
    let n = data.require(node)?;
    let ps = parents
        .iter()
        .map(|p| data.require(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(count_families(data, n, &ps))
}

/// BDeu family term, evaluated in log space.
pub fn bdeu_family_score(counts: &FamilyCounts, config: &BDeuConfig) -> f64 {
    let ess = config.equivalent_sample_size;
    let a_j = ess / counts.q as f64;
    let a_jk = ess / (counts.r * counts.q) as f64;
    let lg_aj = ln_gamma(a_j);
    let lg_ajk = ln_gamma(a_jk);
    let mut score = 0.0;
    for j in 0..counts.q {
        let row = counts.row(j);
        let n_ij: u32 = row.iter().sum();
        if n_ij == 0 {
            continue;
        }
        score += lg_aj - ln_gamma(n_ij as f64 + a_j);
        for &n_ijk in row {
            if n_ijk > 0 {
                score += ln_gamma(n_ijk as f64 + a_jk) - lg_ajk;
            }
        }
    }
    score
}

/// Decomposable BDeu score with a uniform structure prior.
pub fn bdeu_score(dag: &Dag, data: &Dataset, config: &BDeuConfig) -> f64 {
    (0..dag.n_nodes())
        .map(|v| bdeu_family_score(&count_families(data, v, dag.parents(v)), config))
        .sum()
}

/// Memoized family scores for one dataset. Keys use sorted parent sets.
pub struct ScoreCache<'a> {
    data: &'a Dataset,
    config: BDeuConfig,
    cache: HashMap<(usize, Vec<usize>), f64>,
}

impl<'a> ScoreCache<'a> {
    pub fn new(data: &'a Dataset, config: BDeuConfig) -> Self {
        Self {
            data,
            config,
            cache: HashMap::new(),
        }
    }

    pub fn family(&mut self, node: usize, parents: &[usize]) -> f64 {
        debug_assert!(parents.windows(2).all(|w| w[0] < w[1]));
        if let Some(&s) = self.cache.get(&(node, parents.to_vec())) {
            return s;
        }
        let s = bdeu_family_score(&count_families(self.data, node, parents), &self.config);
        self.cache.insert((node, parents.to_vec()), s);
        s
    }

    pub fn total(&mut self, dag: &Dag) -> f64 {
        (0..dag.n_nodes()).map(|v| self.family(v, dag.parents(v))).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::cpdag;

    /// Stirling series with an upward shift; independent of the library implementation.
    fn lgamma_oracle(x: f64) -> f64 {
        let mut shift = 0.0;
        let mut z = x;
        while z < 15.0 {
            shift -= z.ln();
            z += 1.0;
        }
        let z2 = z * z;
        shift + (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * z)
            - 1.0 / (360.0 * z * z2)
            + 1.0 / (1260.0 * z2 * z2 * z)
            - 1.0 / (1680.0 * z2 * z2 * z2 * z)
    }

    fn family_oracle(counts: &[Vec<u32>], r: usize, ess: f64) -> f64 {
        let q = counts.len();
        let a_j = ess / q as f64;
        let a_jk = ess / (r * q) as f64;
        counts
            .iter()
            .map(|row| {
                let n_ij: u32 = row.iter().sum();
                lgamma_oracle(a_j) - lgamma_oracle(n_ij as f64 + a_j)
                    + row
                        .iter()
                        .map(|&n| lgamma_oracle(n as f64 + a_jk) - lgamma_oracle(a_jk))
                        .sum::<f64>()
            })
            .sum()
    }

    fn binary(values: &[u8]) -> Dataset {
        Dataset::new(
            vec!["a".into()],
            vec![vec!["x".into(), "y".into()]],
            vec![values.to_vec()],
        )
        .unwrap()
    }

    #[test]
    fn parentless_binary_counts() {
        let d = binary(&[0, 0, 0, 1]);
        let c = count_families(&d, 0, &[]);
        assert_eq!(c.counts, vec![3, 1]);
        assert_eq!(c.marginals(), vec![4]);
    }

    #[test]
    fn unknown_column_is_an_error() {
        let d = binary(&[0, 1]);
        assert!(matches!(
            count_families_named(&d, "zz", &[]),
            Err(Error::UnknownNode(_))
        ));
    }

    #[test]
    fn each_pair_once() {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for i in 0..3u8 {
            for j in 0..3u8 {
                a.push(i);
                b.push(j);
            }
        }
        let states = vec!["0".to_string(), "1".into(), "2".into()];
        let d = Dataset::new(vec!["p".into(), "c".into()], vec![states.clone(), states], vec![a, b])
            .unwrap();
        let c = count_families(&d, 1, &[0]);
        assert!(c.counts.iter().all(|&n| n == 1));
        assert_eq!(c.counts.iter().sum::<u32>(), 9);
    }

    #[test]
    fn worked_binary_example() {
        let d = binary(&[0, 0, 0, 1]);
        let got = bdeu_family_score(&count_families(&d, 0, &[]), &BDeuConfig::default());
        // lnG(10) - lnG(14) + lnG(8) - lnG(5) + lnG(6) - lnG(5), integer arguments
        let lf = |n: u32| (1..n).map(|k| (k as f64).ln()).sum::<f64>();
        let expected = lf(10) - lf(14) + lf(8) - lf(5) + lf(6) - lf(5);
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
        assert!((got - family_oracle(&[vec![3, 1]], 2, 10.0)).abs() < 1e-10);
    }

    #[test]
    fn zero_observations_score_zero() {
        let d = binary(&[]);
        assert_eq!(bdeu_family_score(&count_families(&d, 0, &[]), &BDeuConfig::default()), 0.0);
    }

    #[test]
    fn scaled_counts_track_oracle() {
        for scale in [1u32, 2, 4, 8] {
            let rows = vec![vec![3 * scale, scale, 0], vec![scale, 5 * scale, 2 * scale]];
            let fc = FamilyCounts {
                node: 0,
                parents: vec![1],
                r: 3,
                q: 2,
                counts: rows.concat(),
            };
            for ess in [0.5, 1.0, 10.0] {
                let got = bdeu_family_score(&fc, &BDeuConfig::new(ess).unwrap());
                let want = family_oracle(&rows, 3, ess);
                assert!((got - want).abs() < 1e-9 * (1.0 + want.abs()), "{got} {want}");
            }
        }
    }

    #[test]
    fn invalid_ess_rejected() {
        assert!(BDeuConfig::new(0.0).is_err());
        assert!(BDeuConfig::new(f64::NAN).is_err());
    }

    fn ternary_random(n_vars: usize, rows: usize, seed: u64) -> Dataset {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let states = vec!["L".to_string(), "N".into(), "H".into()];
        let cols = (0..n_vars)
            .map(|_| (0..rows).map(|_| rng.random_range(0..3u8)).collect())
            .collect();
        Dataset::new(
            (0..n_vars).map(|i| format!("v{i}")).collect(),
            vec![states; n_vars],
            cols,
        )
        .unwrap()
    }

    #[test]
    fn two_node_orientations_score_equal() {
        let d = ternary_random(2, 300, 1);
        let names = d.names().to_vec();
        let ab = Dag::from_edges(names.clone(), &[(0, 1)]).unwrap();
        let ba = Dag::from_edges(names.clone(), &[(1, 0)]).unwrap();
        let cfg = BDeuConfig::default();
        assert!((bdeu_score(&ab, &d, &cfg) - bdeu_score(&ba, &d, &cfg)).abs() < 1e-9);
        let empty = Dag::empty(names);
        let sum = bdeu_family_score(&count_families(&d, 0, &[]), &cfg)
            + bdeu_family_score(&count_families(&d, 1, &[]), &cfg);
        assert_eq!(bdeu_score(&empty, &d, &cfg), sum);
    }

    #[test]
    fn score_equivalence_on_three_nodes() {
        let d = ternary_random(3, 500, 2);
        let cfg = BDeuConfig::default();
        let dags = crate::graph::enumerate_dags(d.names(), usize::MAX);
        for a in &dags {
            for b in &dags {
                if cpdag(a) == cpdag(b) {
                    assert!((bdeu_score(a, &d, &cfg) - bdeu_score(b, &d, &cfg)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn edge_edit_changes_only_child_term() {
        let d = ternary_random(3, 200, 3);
        let cfg = BDeuConfig::default();
        let names = d.names().to_vec();
        let before = Dag::from_edges(names.clone(), &[(0, 1)]).unwrap();
        let after = Dag::from_edges(names, &[(0, 1), (0, 2)]).unwrap();
        let delta = bdeu_score(&after, &d, &cfg) - bdeu_score(&before, &d, &cfg);
        let fam = bdeu_family_score(&count_families(&d, 2, &[0]), &cfg)
            - bdeu_family_score(&count_families(&d, 2, &[]), &cfg);
        assert!((delta - fam).abs() < 1e-9);
    }

    #[test]
    fn cache_matches_direct() {
        let d = ternary_random(3, 100, 5);
        let cfg = BDeuConfig::default();
        let mut cache = ScoreCache::new(&d, cfg);
        let dag = Dag::from_edges(d.names().to_vec(), &[(0, 2), (1, 2)]).unwrap();
        assert_eq!(cache.total(&dag), bdeu_score(&dag, &d, &cfg));
        assert_eq!(cache.total(&dag), bdeu_score(&dag, &d, &cfg));
    }
}
