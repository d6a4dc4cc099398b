//! CSV tables: filter selection, MPE, evidence sweeps, sensitivity, tornado, edge
//! frequencies and temporal shocks.

use std::io::Write;

use crate::bootstrap::EdgeFrequency;
use crate::dbn::TemporalReport;
use crate::error::Result;
use crate::garch::FilterModel;
use crate::inference::{MpeResult, SweepReport};
use crate::network::BayesianNetwork;
use crate::sensitivity::{SensitivityReport, TornadoEntry};

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(out)
}

/// One row per instrument with the selected orders and BIC of both filters.
pub fn write_filter_table<W: Write>(out: W, rows: &[(FilterModel, FilterModel)]) -> Result<()> {
    let mut w = writer(out);
    w.write_record([
        "instrument",
        "ar_garch_lag",
        "ar_garch_p",
        "ar_garch_q",
        "ar_garch_bic",
        "garch_p",
        "garch_q",
        "garch_bic",
    ])?;
    for (ar, g) in rows {
        w.write_record([
            ar.instrument.clone(),
            ar.ar_order.to_string(),
            ar.garch_p.to_string(),
            ar.garch_q.to_string(),
            format!("{:.4}", ar.bic),
            g.garch_p.to_string(),
            g.garch_q.to_string(),
            format!("{:.4}", g.bic),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// MPE per evidence state of one node: a `node` column followed by one column per result,
/// headed `<evidence node>=<state>`. The last row holds the log probabilities.
pub fn write_mpe_table<W: Write>(out: W, net: &BayesianNetwork, results: &[MpeResult]) -> Result<()> {
    let mut w = writer(out);
    let mut header = vec!["node".to_string()];
    header.extend(results.iter().map(|r| {
        r.evidence
            .0
            .iter()
            .map(|(n, s)| format!("{n}={s}"))
            .collect::<Vec<_>>()
            .join(";")
    }));
    w.write_record(&header)?;
    for name in net.names() {
        let mut rec = vec![name.clone()];
        for r in results {
            let s = r
                .assignment
                .get(name)
                .or_else(|| r.evidence.0.get(name))
                .cloned()
                .unwrap_or_default();
            rec.push(s);
        }
        w.write_record(&rec)?;
    }
    let mut rec = vec!["log_probability".to_string()];
    rec.extend(results.iter().map(|r| r.log_probability.to_string()));
    w.write_record(&rec)?;
    w.flush()?;
    Ok(())
}

/// Baseline row, then one row per evidence setting, as stored in the report.
pub fn write_sweep<W: Write>(out: W, sweep: &SweepReport) -> Result<()> {
    let mut w = writer(out);
    let mut header = vec!["node".to_string(), "state".to_string()];
    header.extend(sweep.states.iter().map(|s| format!("P({}={s})", sweep.target)));
    header.push("tvd".into());
    w.write_record(&header)?;
    let mut base = vec!["(baseline)".to_string(), String::new()];
    base.extend(sweep.baseline.iter().map(f64::to_string));
    base.push("0".into());
    w.write_record(&base)?;
    for row in &sweep.rows {
        let mut rec = vec![row.node.clone(), row.state.clone()];
        rec.extend(row.distribution.iter().map(f64::to_string));
        rec.push(row.tvd.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-node mutual information and Sobol index with ranks. `mi_percent` multiplies MI by 100.
pub fn write_sensitivity<W: Write>(out: W, report: &SensitivityReport, mi_percent: bool) -> Result<()> {
    let mut w = writer(out);
    let mi_col = if mi_percent { "mutual_information_x100" } else { "mutual_information" };
    w.write_record(["node", mi_col, "mi_rank", "sobol_index", "sobol_rank"])?;
    let factor = if mi_percent { 100.0 } else { 1.0 };
    for n in &report.nodes {
        w.write_record([
            n.node.clone(),
            (n.mutual_information * factor).to_string(),
            n.mi_rank.to_string(),
            n.sobol_index.to_string(),
            n.sobol_rank.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_arc_strengths<W: Write>(out: W, report: &SensitivityReport) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["parent", "child", "diameter", "rank"])?;
    for e in &report.edges {
        w.write_record([e.parent.clone(), e.child.clone(), e.diameter.to_string(), e.rank.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Ranked tornado entries, largest absolute sensitivity first.
pub fn write_tornado<W: Write>(out: W, entries: &[TornadoEntry]) -> Result<()> {
    let mut w = writer(out);
    w.write_record([
        "rank",
        "node",
        "parent_configuration",
        "state",
        "theta",
        "baseline_output",
        "sensitivity_value",
        "direction",
        "one_sided",
    ])?;
    for (i, e) in entries.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            e.node.clone(),
            e.parent_configuration.join(";"),
            e.state.clone(),
            e.theta.to_string(),
            e.baseline_output.to_string(),
            e.sensitivity_value.to_string(),
            e.direction.to_string(),
            e.one_sided.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_edge_frequencies<W: Write>(out: W, freqs: &[EdgeFrequency]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["a", "b", "undirected", "a_to_b", "b_to_a", "retained"])?;
    for f in freqs {
        let kept = f
            .retained
            .as_ref()
            .map(|(p, c)| format!("{p}->{c}"))
            .unwrap_or_default();
        w.write_record([
            f.a.clone(),
            f.b.clone(),
            f.undirected.to_string(),
            f.forward.to_string(),
            f.backward.to_string(),
            kept,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per shock: the evidence, then the target distribution at T and at T+1.
pub fn write_temporal<W: Write>(out: W, rows: &[TemporalReport]) -> Result<()> {
    let mut w = writer(out);
    let Some(first) = rows.first() else {
        w.flush()?;
        return Ok(());
    };
    let mut header = vec!["evidence".to_string()];
    header.extend(first.at_t.states.iter().map(|s| format!("{}={s}@T", first.at_t.target)));
    header.extend(first.at_t1.states.iter().map(|s| format!("{}={s}@T+1", first.at_t.target)));
    w.write_record(&header)?;
    for r in rows {
        let ev = if r.at_t.evidence.is_empty() {
            "(baseline)".to_string()
        } else {
            r.at_t
                .evidence
                .0
                .iter()
                .map(|(n, s)| format!("{n}={s}"))
                .collect::<Vec<_>>()
                .join(";")
        };
        let mut rec = vec![ev];
        rec.extend(r.at_t.distribution.iter().map(f64::to_string));
        rec.extend(r.at_t1.distribution.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{evidence_sweep, mpe, EvidenceMap};
    use crate::synthetic::TernaryNetBuilder;

    #[test]
    fn mpe_table_layout() {
        let net = TernaryNetBuilder::new(3).edge(0, 1, 0.9).edge(1, 2, 0.9).build(1);
        let results: Vec<MpeResult> = ["Low", "High"]
            .iter()
            .map(|s| mpe(&net, &EvidenceMap::new().with("X1", s)).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_mpe_table(&mut buf, &net, &results).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "node,X1=Low,X1=High");
        assert_eq!(lines[1], "X0,Low,High");
        assert_eq!(lines[2], "X1,Low,High");
        assert!(lines[4].starts_with("log_probability,"));
    }

    #[test]
    fn sweep_has_baseline_first() {
        let net = TernaryNetBuilder::new(2).edge(0, 1, 0.7).build(2);
        let mut buf = Vec::new();
        write_sweep(&mut buf, &evidence_sweep(&net, "X1", false).unwrap()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("node,state,P(X1=Low),P(X1=Neutral),P(X1=High),tvd\n(baseline),,"));
        assert_eq!(text.lines().count(), 4);
    }
}
