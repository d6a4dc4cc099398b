//! Tabu search over DAGs with add / delete / reverse moves, scored by BDeu.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::graph::Dag;
use crate::score::{BDeuConfig, ScoreCache};

/// Score gains at or below this are treated as no improvement.
pub const IMPROVEMENT_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchControls {
    /// Number of recent moves whose inverses are forbidden.
    pub tabu_tenure: usize,
    /// Stop after this many consecutive iterations without a new best score.
    pub max_non_improving: usize,
    pub max_in_degree: usize,
    pub max_iterations: usize,
}

impl Default for SearchControls {
    fn default() -> Self {
        Self {
            tabu_tenure: 10,
            max_non_improving: 15,
            max_in_degree: 4,
            max_iterations: 10_000,
        }
    }
}

/// Restrictions on the search space.
#[derive(Clone, Debug, Default)]
pub struct SearchConstraints {
    /// `allowed[p][c]`: whether the edge `p -> c` may be added. `None` permits all edges.
    pub allowed: Option<Vec<Vec<bool>>>,
    /// Edges present in the start graph that no move may delete or reverse.
    pub frozen: Vec<(usize, usize)>,
}

impl SearchConstraints {
    fn may_add(&self, p: usize, c: usize) -> bool {
        self.allowed.as_ref().is_none_or(|a| a[p][c])
    }

    fn is_frozen(&self, p: usize, c: usize) -> bool {
        self.frozen.contains(&(p, c))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    Add(usize, usize),
    Delete(usize, usize),
    /// Reverse the existing edge `p -> c` into `c -> p`.
    Reverse(usize, usize),
}

impl Move {
    fn inverse(self) -> Move {
        match self {
            Move::Add(p, c) => Move::Delete(p, c),
            Move::Delete(p, c) => Move::Add(p, c),
            Move::Reverse(p, c) => Move::Reverse(c, p),
        }
    }
}

/// Tabu search from the empty graph without constraints.
pub fn tabu_search(data: &Dataset, config: &BDeuConfig, controls: &SearchControls, seed: u64) -> Dag {
    tabu_search_with(
        data,
        config,
        controls,
        &SearchConstraints::default(),
        Dag::empty(data.names().to_vec()),
        seed,
    )
}

/// Tabu search from `start`. The best graph found is polished by hill climbing so that the
/// result admits no improving single move.
pub fn tabu_search_with(
    data: &Dataset,
    config: &BDeuConfig,
    controls: &SearchControls,
    constraints: &SearchConstraints,
    start: Dag,
    seed: u64,
) -> Dag {
    let mut cache = ScoreCache::new(data, *config);
    let n = data.n_vars();
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);

    let mut current = start;
    let mut current_score = cache.total(&current);
    let mut best = current.clone();
    let mut best_score = current_score;
    let mut tabu: Vec<Move> = Vec::new();
    let mut non_improving = 0;

    for _ in 0..controls.max_iterations {
        let Some((mv, delta)) = best_move(
            &current,
            &mut cache,
            &pairs,
            controls,
            constraints,
            |m, delta| !tabu.contains(&m) || current_score + delta > best_score + IMPROVEMENT_EPS,
        ) else {
            break;
        };
        apply(&mut current, mv);
        current_score += delta;
        tabu.push(mv.inverse());
        if tabu.len() > controls.tabu_tenure {
            tabu.remove(0);
        }
        if current_score > best_score + IMPROVEMENT_EPS {
            best = current.clone();
            best_score = current_score;
            non_improving = 0;
        } else {
            non_improving += 1;
            if non_improving >= controls.max_non_improving {
                break;
            }
        }
    }

    // hill-climb the incumbent to a strict local optimum
    loop {
        match best_move(&best, &mut cache, &pairs, controls, constraints, |_, _| true) {
            Some((mv, delta)) if delta > IMPROVEMENT_EPS => apply(&mut best, mv),
            _ => break,
        }
    }
    best
}

fn apply(dag: &mut Dag, mv: Move) {
    match mv {
        Move::Add(p, c) => dag.insert_unchecked(p, c),
        Move::Delete(p, c) => {
            dag.remove_edge(p, c);
        }
        Move::Reverse(p, c) => {
            dag.remove_edge(p, c);
            dag.insert_unchecked(c, p);
        }
    }
}

fn with_parent(parents: &[usize], extra: usize) -> Vec<usize> {
    let mut v = parents.to_vec();
    if let Err(pos) = v.binary_search(&extra) {
        v.insert(pos, extra);
    }
    v
}

fn without_parent(parents: &[usize], gone: usize) -> Vec<usize> {
    parents.iter().copied().filter(|&p| p != gone).collect()
}

/// Legal single moves from `dag` with their score deltas, visited in `pairs` order.
pub fn legal_moves(
    dag: &Dag,
    cache: &mut ScoreCache<'_>,
    pairs: &[(usize, usize)],
    controls: &SearchControls,
    constraints: &SearchConstraints,
) -> Vec<(Move, f64)> {
    let mut out = Vec::new();
    for &(a, b) in pairs {
        if dag.has_edge(a, b) {
            if constraints.is_frozen(a, b) {
                continue;
            }
            let pa_b = dag.parents(b);
            let base_b = cache.family(b, pa_b);
            let del = cache.family(b, &without_parent(pa_b, a)) - base_b;
            out.push((Move::Delete(a, b), del));

            if constraints.may_add(b, a) && dag.parents(a).len() < controls.max_in_degree {
                let mut trial = dag.clone();
                trial.remove_edge(a, b);
                if !trial.has_path(a, b) {
                    let pa_a = dag.parents(a);
                    let rev = del + cache.family(a, &with_parent(pa_a, b)) - cache.family(a, pa_a);
                    out.push((Move::Reverse(a, b), rev));
                }
            }
        } else if !dag.has_edge(b, a)
            && constraints.may_add(a, b)
            && dag.parents(b).len() < controls.max_in_degree
            && !dag.has_path(b, a)
        {
            let pa_b = dag.parents(b);
            let add = cache.family(b, &with_parent(pa_b, a)) - cache.family(b, pa_b);
            out.push((Move::Add(a, b), add));
        }
    }
    out
}

fn best_move<F>(
    dag: &Dag,
    cache: &mut ScoreCache<'_>,
    pairs: &[(usize, usize)],
    controls: &SearchControls,
    constraints: &SearchConstraints,
    admissible: F,
) -> Option<(Move, f64)>
where
    F: Fn(Move, f64) -> bool,
{
    let mut best: Option<(Move, f64)> = None;
    for (mv, delta) in legal_moves(dag, cache, pairs, controls, constraints) {
        if !admissible(mv, delta) {
            continue;
        }
        if best.is_none_or(|(_, d)| delta > d) {
            best = Some((mv, delta));
        }
    }
    best
}

/// Largest score gain available from any single legal move (negative if none improves).
pub fn best_single_move_gain(
    dag: &Dag,
    data: &Dataset,
    config: &BDeuConfig,
    controls: &SearchControls,
    constraints: &SearchConstraints,
) -> Option<f64> {
    let mut cache = ScoreCache::new(data, *config);
    let n = data.n_vars();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    legal_moves(dag, &mut cache, &pairs, controls, constraints)
        .into_iter()
        .map(|(_, d)| d)
        .reduce(f64::max)
}
