//! Directed acyclic graphs, partially directed graphs and Markov equivalence.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// DAG over indexed, named nodes. Parent lists are kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Dag {
    names: Vec<String>,
    parents: Vec<Vec<usize>>,
}

impl Dag {
    pub fn empty(names: Vec<String>) -> Self {
        let n = names.len();
        Self {
            names,
            parents: vec![Vec::new(); n],
        }
    }

    pub fn from_edges(names: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let mut dag = Self::empty(names);
        for &(p, c) in edges {
            dag.add_edge(p, c)?;
        }
        Ok(dag)
    }

    pub fn from_named_edges(names: Vec<String>, edges: &[(String, String)]) -> Result<Self> {
        let idx = |n: &str| {
            names
                .iter()
                .position(|x| x == n)
                .ok_or_else(|| Error::UnknownNode(n.to_string()))
        };
        let pairs = edges
            .iter()
            .map(|(p, c)| Ok((idx(p)?, idx(c)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_edges(names, &pairs)
    }

    pub fn n_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&c| self.parents[c].binary_search(&v).is_ok())
            .collect()
    }

    pub fn has_edge(&self, p: usize, c: usize) -> bool {
        self.parents[c].binary_search(&p).is_ok()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.has_edge(a, b) || self.has_edge(b, a)
    }

    /// All edges as `(parent, child)`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c)))
            .collect();
        e.sort_unstable();
        e
    }

    pub fn n_edges(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// True if `to` is reachable from `from` along directed edges.
    pub fn has_path(&self, from: usize, to: usize) -> bool {
        if from == to {
            return true;
        }
        let children = self.children_lists();
        let mut seen = vec![false; self.n_nodes()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(v) = stack.pop() {
            for &c in &children[v] {
                if c == to {
                    return true;
                }
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        false
    }

    pub(crate) fn children_lists(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.n_nodes()];
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                ch[p].push(c);
            }
        }
        ch
    }

    pub fn add_edge(&mut self, p: usize, c: usize) -> Result<()> {
        if p >= self.n_nodes() || c >= self.n_nodes() {
            return Err(Error::Invalid(format!("edge {p} -> {c} out of range")));
        }
        if p == c || self.has_edge(p, c) || self.has_path(c, p) {
            return Err(Error::Cycle(self.names[p].clone(), self.names[c].clone()));
        }
        self.insert_unchecked(p, c);
        Ok(())
    }

    pub(crate) fn insert_unchecked(&mut self, p: usize, c: usize) {
        let ps = &mut self.parents[c];
        if let Err(pos) = ps.binary_search(&p) {
            ps.insert(pos, p);
        }
    }

    pub fn remove_edge(&mut self, p: usize, c: usize) -> bool {
        let ps = &mut self.parents[c];
        match ps.binary_search(&p) {
            Ok(pos) => {
                ps.remove(pos);
                true
            }
            Err(_) => false,
        }
    }

    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.n_nodes();
        let children = self.children_lists();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_front() {
            order.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.push_back(c);
                }
            }
        }
        order
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().len() == self.n_nodes()
    }

    /// Nodes with a directed path into any of `targets`, including the targets.
    pub fn ancestors_of(&self, targets: &[usize]) -> Vec<bool> {
        let mut seen = vec![false; self.n_nodes()];
        let mut stack: Vec<usize> = targets.to_vec();
        for &t in targets {
            seen[t] = true;
        }
        while let Some(v) = stack.pop() {
            for &p in &self.parents[v] {
                if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
        seen
    }

    /// Unordered adjacencies as `(min, max)` pairs.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.edges()
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect()
    }

    /// Colliders `a -> c <- b` with `a < b` non-adjacent, as `(a, c, b)`.
    pub fn v_structures(&self) -> BTreeSet<(usize, usize, usize)> {
        let mut out = BTreeSet::new();
        for c in 0..self.n_nodes() {
            let ps = &self.parents[c];
            for (i, &a) in ps.iter().enumerate() {
                for &b in &ps[i + 1..] {
                    if !self.adjacent(a, b) {
                        out.insert((a, c, b));
                    }
                }
            }
        }
        out
    }

    /// d-separation of `x` and `y` given `z` via reachability on active trails.
    pub fn d_separated(&self, x: usize, y: usize, z: &[usize]) -> bool {
        if x == y {
            return false;
        }
        let n = self.n_nodes();
        let mut observed = vec![false; n];
        for &v in z {
            observed[v] = true;
        }
        if observed[x] || observed[y] {
            return true;
        }
        // nodes that are observed or have an observed descendant
        let anc_of_obs = self.ancestors_of(z);
        let children = self.children_lists();
        // (node, arrived_from_child): true means we came up from a child
        let mut visited = vec![[false; 2]; n];
        let mut queue = VecDeque::new();
        queue.push_back((x, true));
        while let Some((v, up)) = queue.pop_front() {
            let slot = usize::from(up);
            if visited[v][slot] {
                continue;
            }
            visited[v][slot] = true;
            if v == y {
                return false;
            }
            if up {
                if !observed[v] {
                    for &p in &self.parents[v] {
                        queue.push_back((p, true));
                    }
                    for &c in &children[v] {
                        queue.push_back((c, false));
                    }
                }
            } else {
                if !observed[v] {
                    for &c in &children[v] {
                        queue.push_back((c, false));
                    }
                }
                if anc_of_obs[v] {
                    for &p in &self.parents[v] {
                        queue.push_back((p, true));
                    }
                }
            }
        }
        true
    }
}

/// Partially directed graph. Undirected edges are stored as `(min, max)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pdag {
    pub names: Vec<String>,
    pub directed: BTreeSet<(usize, usize)>,
    pub undirected: BTreeSet<(usize, usize)>,
}

impl Pdag {
    pub fn is_undirected(&self, a: usize, b: usize) -> bool {
        self.undirected.contains(&(a.min(b), a.max(b)))
    }

    pub fn is_directed(&self, p: usize, c: usize) -> bool {
        self.directed.contains(&(p, c))
    }

    fn adjacent(&self, a: usize, b: usize) -> bool {
        self.is_undirected(a, b) || self.is_directed(a, b) || self.is_directed(b, a)
    }

    fn orient(&mut self, p: usize, c: usize) -> bool {
        if self.undirected.remove(&(p.min(c), p.max(c))) {
            self.directed.insert((p, c));
            true
        } else {
            false
        }
    }
}

/// Completed PDAG (essential graph) of `dag`: v-structure arcs plus their consequences under
/// Meek's orientation rules are directed, every other adjacency is undirected.
pub fn cpdag(dag: &Dag) -> Pdag {
    let n = dag.n_nodes();
    let mut directed = BTreeSet::new();
    for (a, c, b) in dag.v_structures() {
        directed.insert((a, c));
        directed.insert((b, c));
    }
    let undirected = dag
        .edges()
        .into_iter()
        .filter(|e| !directed.contains(e))
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    let mut g = Pdag {
        names: dag.names().to_vec(),
        directed,
        undirected,
    };

    loop {
        let mut changed = false;
        let und: Vec<(usize, usize)> = g.undirected.iter().copied().collect();
        for (u, v) in und {
            for (a, b) in [(u, v), (v, u)] {
                if !g.is_undirected(a, b) {
                    continue;
                }
                if meek_orients(&g, n, a, b) {
                    g.orient(a, b);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    g
}

/// Whether rules R1–R3 force the undirected edge `a - b` to become `a -> b`.
fn meek_orients(g: &Pdag, n: usize, a: usize, b: usize) -> bool {
    // R1: c -> a - b, c and b non-adjacent
    if (0..n).any(|c| c != b && g.is_directed(c, a) && !g.adjacent(c, b)) {
        return true;
    }
    // R2: a -> c -> b with a - b
    if (0..n).any(|c| g.is_directed(a, c) && g.is_directed(c, b)) {
        return true;
    }
    // R3: a - c -> b, a - d -> b, c and d non-adjacent
    let mids: Vec<usize> = (0..n)
        .filter(|&c| g.is_undirected(a, c) && g.is_directed(c, b))
        .collect();
    for (i, &c) in mids.iter().enumerate() {
        for &d in &mids[i + 1..] {
            if !g.adjacent(c, d) {
                return true;
            }
        }
    }
    false
}

/// Every DAG over `names` whose nodes have at most `max_in_degree` parents. Exponential; meant
/// for exhaustive checks on small graphs.
pub fn enumerate_dags(names: &[String], max_in_degree: usize) -> Vec<Dag> {
    let n = names.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
        .collect();
    let mut out = Vec::new();
    let mut edges = Vec::with_capacity(pairs.len());
    for code in 0..3usize.pow(pairs.len() as u32) {
        let mut c = code;
        edges.clear();
        for &(a, b) in &pairs {
            match c % 3 {
                1 => edges.push((a, b)),
                2 => edges.push((b, a)),
                _ => {}
            }
            c /= 3;
        }
        let mut dag = Dag::empty(names.to_vec());
        for &(p, ch) in &edges {
            dag.insert_unchecked(p, ch);
        }
        if dag.parents.iter().all(|ps| ps.len() <= max_in_degree) && dag.is_acyclic() {
            out.push(dag);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i}")).collect()
    }

    fn all_dags(n: usize) -> Vec<Dag> {
        enumerate_dags(&names(n), usize::MAX)
    }

    #[test]
    fn dag_counts_match_known_sequence() {
        assert_eq!(all_dags(3).len(), 25);
        assert_eq!(all_dags(4).len(), 543);
    }

    #[test]
    fn equivalence_class_counts() {
        for (n, classes) in [(3, 11), (4, 185)] {
            let set: HashSet<Pdag> = all_dags(n).iter().map(cpdag).collect();
            assert_eq!(set.len(), classes);
        }
    }

    #[test]
    fn cpdag_equality_matches_skeleton_and_colliders() {
        let dags = all_dags(4);
        let pd: Vec<Pdag> = dags.iter().map(cpdag).collect();
        for i in 0..dags.len() {
            for j in 0..dags.len() {
                let vp = dags[i].skeleton() == dags[j].skeleton()
                    && dags[i].v_structures() == dags[j].v_structures();
                assert_eq!(vp, pd[i] == pd[j]);
            }
        }
    }

    #[test]
    fn collider_stays_directed_chain_does_not() {
        let collider = Dag::from_edges(names(3), &[(0, 1), (2, 1)]).unwrap();
        let p = cpdag(&collider);
        assert!(p.undirected.is_empty());
        assert_eq!(p.directed.len(), 2);

        let chain = Dag::from_edges(names(3), &[(0, 1), (1, 2)]).unwrap();
        let p = cpdag(&chain);
        assert!(p.directed.is_empty());
        assert_eq!(p.undirected.len(), 2);
    }

    #[test]
    fn meek_rule_one_propagates() {
        // a -> c <- b, c -> d : c - d compelled by R1
        let d = Dag::from_edges(names(4), &[(0, 2), (1, 2), (2, 3)]).unwrap();
        let p = cpdag(&d);
        assert!(p.is_directed(2, 3));
    }

    #[test]
    fn add_edge_rejects_cycles() {
        let mut d = Dag::from_edges(names(3), &[(0, 1), (1, 2)]).unwrap();
        assert!(d.add_edge(2, 0).is_err());
        assert!(d.add_edge(1, 1).is_err());
        assert!(d.add_edge(0, 2).is_ok());
        assert!(d.is_acyclic());
    }

    /// d-separation by the moralized ancestral graph criterion.
    fn d_sep_moral(d: &Dag, x: usize, y: usize, z: &[usize]) -> bool {
        let mut keep = vec![x, y];
        keep.extend_from_slice(z);
        let anc = d.ancestors_of(&keep);
        let n = d.n_nodes();
        let mut adj = vec![vec![false; n]; n];
        for c in (0..n).filter(|&c| anc[c]) {
            let ps = d.parents(c);
            for &p in ps {
                adj[p][c] = true;
                adj[c][p] = true;
            }
            for &a in ps {
                for &b in ps {
                    if a != b {
                        adj[a][b] = true;
                    }
                }
            }
        }
        let blocked: HashSet<usize> = z.iter().copied().collect();
        let mut seen = vec![false; n];
        let mut stack = vec![x];
        seen[x] = true;
        while let Some(v) = stack.pop() {
            if v == y {
                return false;
            }
            for w in 0..n {
                if adj[v][w] && anc[w] && !seen[w] && !blocked.contains(&w) {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        true
    }

    #[test]
    fn d_separation_agrees_with_moralization() {
        for d in all_dags(4) {
            for x in 0..4 {
                for y in 0..4 {
                    if x == y {
                        continue;
                    }
                    for mask in 0..16usize {
                        let z: Vec<usize> = (0..4)
                            .filter(|&v| mask >> v & 1 == 1 && v != x && v != y)
                            .collect();
                        assert_eq!(d.d_separated(x, y, &z), d_sep_moral(&d, x, y, &z));
                    }
                }
            }
        }
    }
}
