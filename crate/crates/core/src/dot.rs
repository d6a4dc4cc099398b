//! Graphviz export with edge widths from arc strength.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::graph::{cpdag, Dag};

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Pen width for an arc of the given strength in [0, 1].
pub fn pen_width(strength: f64) -> f64 {
    1.0 + 5.0 * strength.clamp(0.0, 1.0)
}

/// DOT text for `dag`. Every edge carries a `penwidth` from `strengths` (0 when missing);
/// edges left undirected by the equivalence class are drawn without arrowheads.
pub fn to_dot(dag: &Dag, strengths: &BTreeMap<(usize, usize), f64>) -> String {
    let pdag = cpdag(dag);
    let mut out = String::from("digraph network {\n  node [shape=ellipse];\n");
    for name in dag.names() {
        let _ = writeln!(out, "  {};", quote(name));
    }
    for (p, c) in dag.edges() {
        let s = strengths.get(&(p, c)).copied().unwrap_or(0.0);
        let style = if pdag.is_undirected(p, c) { ", dir=none" } else { "" };
        let _ = writeln!(
            out,
            "  {} -> {} [penwidth={:.3}, label=\"{:.3}\"{}];",
            quote(dag.name(p)),
            quote(dag.name(c)),
            pen_width(s),
            s,
            style
        );
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_width_per_edge_and_undirected_style() {
        let names: Vec<String> = ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
        let dag = Dag::from_edges(names, &[(0, 2), (1, 2), (2, 3), (0, 4)]).unwrap();
        let mut w = BTreeMap::new();
        w.insert((0, 2), 0.5);
        let dot = to_dot(&dag, &w);
        assert_eq!(dot.matches("penwidth=").count(), 4);
        assert!(dot.contains("\"a\" -> \"c\" [penwidth=3.500, label=\"0.500\"];"));
        assert!(dot.contains("\"c\" -> \"d\" [penwidth=1.000, label=\"0.000\"];"));
        assert!(dot.contains("\"a\" -> \"e\" [penwidth=1.000, label=\"0.000\", dir=none];"));
    }
}
