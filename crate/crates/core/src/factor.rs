//! Dense factors over discrete variables, row-major with the last variable fastest.

use crate::network::Cpt;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Factor {
    /// Sorted ascending.
    pub vars: Vec<usize>,
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
}

fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * cards[i + 1];
    }
    s
}

/// Stride of each of `vars` inside `f` (0 when `f` does not mention it).
fn strides_within(f: &Factor, vars: &[usize]) -> Vec<usize> {
    let own = strides(&f.cards);
    vars.iter()
        .map(|v| f.vars.iter().position(|u| u == v).map_or(0, |i| own[i]))
        .collect()
}

/// Visits every assignment of `cards` in row-major order, passing the running offsets
/// `sum_d assign[d] * stride[d]` for each stride table.
fn odometer<const K: usize>(cards: &[usize], tables: [&[usize]; K], mut f: impl FnMut(&[usize], [usize; K])) {
    let total: usize = cards.iter().product();
    let mut assign = vec![0usize; cards.len()];
    let mut idx = [0usize; K];
    for _ in 0..total {
        f(&assign, idx);
        for d in (0..cards.len()).rev() {
            assign[d] += 1;
            for k in 0..K {
                idx[k] += tables[k][d];
            }
            if assign[d] < cards[d] {
                break;
            }
            for k in 0..K {
                idx[k] -= tables[k][d] * cards[d];
            }
            assign[d] = 0;
        }
    }
}

impl Factor {
    pub fn unit() -> Self {
        Factor {
            vars: vec![],
            cards: vec![],
            values: vec![1.0],
        }
    }

    pub fn from_cpt(cpt: &Cpt) -> Self {
        let mut scope: Vec<(usize, usize)> = cpt
            .parents
            .iter()
            .zip(&cpt.parent_cards)
            .map(|(&p, &c)| (p, c))
            .collect();
        scope.push((cpt.node, cpt.card));
        scope.sort_unstable();
        let vars: Vec<usize> = scope.iter().map(|s| s.0).collect();
        let cards: Vec<usize> = scope.iter().map(|s| s.1).collect();
        let parent_pos: Vec<usize> = cpt
            .parents
            .iter()
            .map(|p| vars.iter().position(|v| v == p).expect("parent in scope"))
            .collect();
        let node_pos = vars.iter().position(|&v| v == cpt.node).expect("node in scope");
        let mut values = Vec::with_capacity(cards.iter().product());
        let mut ps = vec![0; parent_pos.len()];
        odometer(&cards, [], |a, _| {
            for (slot, &pos) in ps.iter_mut().zip(&parent_pos) {
                *slot = a[pos];
            }
            values.push(cpt.prob(cpt.config_of(&ps), a[node_pos]));
        });
        Factor { vars, cards, values }
    }

    pub fn card_of(&self, v: usize) -> Option<usize> {
        self.vars.iter().position(|&u| u == v).map(|i| self.cards[i])
    }

    pub fn product(&self, other: &Factor) -> Factor {
        let mut scope: Vec<(usize, usize)> = self
            .vars
            .iter()
            .zip(&self.cards)
            .chain(other.vars.iter().zip(&other.cards))
            .map(|(&v, &c)| (v, c))
            .collect();
        scope.sort_unstable();
        scope.dedup();
        let vars: Vec<usize> = scope.iter().map(|s| s.0).collect();
        let cards: Vec<usize> = scope.iter().map(|s| s.1).collect();
        let sa = strides_within(self, &vars);
        let sb = strides_within(other, &vars);
        let mut values = Vec::with_capacity(cards.iter().product());
        odometer(&cards, [&sa, &sb], |_, [ia, ib]| {
            values.push(self.values[ia] * other.values[ib]);
        });
        Factor { vars, cards, values }
    }

    fn marginalize(&self, v: usize, combine: impl Fn(f64, f64) -> f64, init: f64) -> Factor {
        let Some(pos) = self.vars.iter().position(|&u| u == v) else {
            return self.clone();
        };
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(pos);
        cards.remove(pos);
        let mut out = vec![init; cards.iter().product()];
        let mut s_out = strides(&cards);
        s_out.insert(pos, 0);
        let s_in = strides(&self.cards);
        odometer(&self.cards, [&s_in, &s_out], |_, [i, o]| {
            out[o] = combine(out[o], self.values[i]);
        });
        Factor {
            vars,
            cards,
            values: out,
        }
    }

    pub fn sum_out(&self, v: usize) -> Factor {
        self.marginalize(v, |a, b| a + b, 0.0)
    }

    pub fn max_out(&self, v: usize) -> Factor {
        self.marginalize(v, f64::max, f64::NEG_INFINITY)
    }

    /// Restricts `v` to `state` and drops it from the scope.
    pub fn reduce(&self, v: usize, state: usize) -> Factor {
        let Some(pos) = self.vars.iter().position(|&u| u == v) else {
            return self.clone();
        };
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(pos);
        cards.remove(pos);
        let s_in = strides(&self.cards);
        let s_sub = strides_within(self, &vars);
        let offset = state * s_in[pos];
        let mut values = Vec::with_capacity(cards.iter().product());
        odometer(&cards, [&s_sub], |_, [i]| values.push(self.values[offset + i]));
        Factor { vars, cards, values }
    }

    /// Index of the entry matching `assignment` (indexed by variable id).
    pub fn index_of(&self, assignment: &[usize]) -> usize {
        self.vars
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&v, &c)| acc * c + assignment[v])
    }

    /// Reorders a factor over exactly `order`'s variables into `order`'s row-major layout.
    pub fn permuted(&self, order: &[usize]) -> Vec<f64> {
        let cards: Vec<usize> = order
            .iter()
            .map(|&v| self.card_of(v).expect("variable in scope"))
            .collect();
        let s = strides_within(self, order);
        let mut out = Vec::with_capacity(self.values.len());
        odometer(&cards, [&s], |_, [i]| out.push(self.values[i]));
        out
    }
}
