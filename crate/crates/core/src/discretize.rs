//! Tertile binning of continuous panels into Low / Neutral / High states.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::panel::{PanelKind, TimePanel};

pub const TERTILE_LABELS: [&str; 3] = ["Low", "Neutral", "High"];

/// Lower and upper cut points, placed at the 1/3 and 2/3 empirical quantiles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub lower: f64,
    pub upper: f64,
}

impl Thresholds {
    /// State index: `0` for `v <= lower`, `1` for `lower < v <= upper`, `2` above.
    pub fn classify(&self, v: f64) -> u8 {
        if v <= self.lower {
            0
        } else if v <= self.upper {
            1
        } else {
            2
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePanel {
    pub dates: Vec<NaiveDate>,
    pub data: Dataset,
    pub thresholds: BTreeMap<String, Thresholds>,
}

impl DiscretePanel {
    pub fn names(&self) -> &[String] {
        self.data.names()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Writes `date,<name>...` rows with state labels.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(self.data.names().iter().cloned());
        w.write_record(&header)?;
        for (row, date) in self.dates.iter().enumerate() {
            let mut rec = vec![date.to_string()];
            for var in 0..self.data.n_vars() {
                let s = self.data.column(var)[row] as usize;
                rec.push(self.data.states(var)[s].clone());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`DiscretePanel::write_csv`]. States are the tertile labels;
    /// thresholds are not stored in the CSV and come back empty.
    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(source);
        let headers = reader.headers()?.clone();
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        if names.is_empty() {
            return Err(Error::Parse {
                line: 1,
                column: String::new(),
                message: "no state columns".into(),
            });
        }
        let mut dates = Vec::new();
        let mut columns = vec![Vec::new(); names.len()];
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let d = rec.get(0).unwrap_or("");
            dates.push(NaiveDate::parse_from_str(d, "%Y-%m-%d").map_err(|e| Error::Parse {
                line,
                column: "date".into(),
                message: format!("bad date `{d}`: {e}"),
            })?);
            for (c, name) in names.iter().enumerate() {
                let cell = rec.get(c + 1).unwrap_or("");
                let s = TERTILE_LABELS.iter().position(|l| *l == cell).ok_or_else(|| {
                    Error::Parse {
                        line,
                        column: name.clone(),
                        message: format!("unknown state `{cell}`"),
                    }
                })?;
                columns[c].push(s as u8);
            }
        }
        let states = vec![tertile_states(); names.len()];
        Ok(Self {
            dates,
            data: Dataset::new(names, states, columns)?,
            thresholds: BTreeMap::new(),
        })
    }
}

pub fn tertile_states() -> Vec<String> {
    TERTILE_LABELS.iter().map(|s| s.to_string()).collect()
}

/// Empirical quantile with linear interpolation between order statistics
/// (`h = (n - 1) * prob`).
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn tertile_thresholds(values: &[f64]) -> Option<Thresholds> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() || sorted[0] == sorted[sorted.len() - 1] {
        return None;
    }
    Some(Thresholds {
        lower: quantile(&sorted, 1.0 / 3.0),
        upper: quantile(&sorted, 2.0 / 3.0),
    })
}

/// Bins every column of a returns or residual panel into tertile states.
pub fn discretize(panel: &TimePanel) -> Result<DiscretePanel> {
    if panel.kind == PanelKind::Prices {
        return Err(Error::Invalid(
            "discretization expects log returns or residuals, not prices".into(),
        ));
    }
    let mut thresholds = BTreeMap::new();
    let mut columns = Vec::with_capacity(panel.series.len());
    for (name, series) in panel.names.iter().zip(&panel.series) {
        let t = tertile_thresholds(series).ok_or_else(|| Error::ConstantColumn(name.clone()))?;
        columns.push(series.iter().map(|&v| t.classify(v)).collect());
        thresholds.insert(name.clone(), t);
    }
    Ok(DiscretePanel {
        dates: panel.dates.clone(),
        data: Dataset::new(
            panel.names.clone(),
            vec![tertile_states(); panel.names.len()],
            columns,
        )?,
        thresholds,
    })
}
