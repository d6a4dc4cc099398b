//! Aligned daily panels: CSV ingestion, forward-fill imputation and log returns.

use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanelKind {
    Prices,
    LogReturns,
    Residuals,
}

/// Daily observations for a set of named instruments, all aligned to `dates`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimePanel {
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    pub series: Vec<Vec<f64>>,
    pub kind: PanelKind,
}

/// Optional column selection applied while loading.
#[derive(Clone, Debug, Default)]
pub struct PanelSchema {
    pub columns: Option<Vec<String>>,
}

impl TimePanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        names: Vec<String>,
        series: Vec<Vec<f64>>,
        kind: PanelKind,
    ) -> Result<Self> {
        if names.len() != series.len() {
            return Err(Error::Invalid(format!(
                "{} names for {} series",
                names.len(),
                series.len()
            )));
        }
        if let Some((i, s)) = series.iter().enumerate().find(|(_, s)| s.len() != dates.len()) {
            return Err(Error::Invalid(format!(
                "series `{}` has {} values for {} dates",
                names[i],
                s.len(),
                dates.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Invalid(format!("dates not increasing at {}", w[1])));
        }
        Ok(Self {
            dates,
            names,
            series,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.series[i].as_slice())
    }
}

/// Parses `date,<ticker1>,...` CSV. Empty cells are carried forward from the last
/// observed value; rows before the latest-starting column's first observation are
/// dropped so the result is rectangular.
pub fn load_panel<R: Read>(source: R, schema: &PanelSchema) -> Result<TimePanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            column: headers.get(0).unwrap_or("").to_string(),
            message: "expected a date column followed by at least one instrument".into(),
        });
    }
    let all_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let selected: Vec<usize> = match &schema.columns {
        None => (0..all_names.len()).collect(),
        Some(cols) => cols
            .iter()
            .map(|c| {
                all_names.iter().position(|n| n == c).ok_or_else(|| Error::Parse {
                    line: 1,
                    column: c.clone(),
                    message: "column not present in header".into(),
                })
            })
            .collect::<Result<_>>()?,
    };

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut raw: Vec<Vec<Option<f64>>> = vec![Vec::new(); selected.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let line = row_idx + 2;
        let record = record?;
        let date_cell = record.get(0).unwrap_or("");
        let date = NaiveDate::parse_from_str(date_cell, "%Y-%m-%d").map_err(|e| Error::Parse {
            line,
            column: headers[0].to_string(),
            message: format!("bad date `{date_cell}`: {e}"),
        })?;
        if let Some(&prev) = dates.last() {
            if date == prev {
                return Err(Error::Parse {
                    line,
                    column: headers[0].to_string(),
                    message: format!("duplicate date {date}"),
                });
            }
            if date < prev {
                return Err(Error::Parse {
                    line,
                    column: headers[0].to_string(),
                    message: format!("date {date} precedes {prev}"),
                });
            }
        }
        dates.push(date);
        for (slot, &col) in selected.iter().enumerate() {
            let cell = record.get(col + 1).unwrap_or("");
            let value = if cell.is_empty() {
                None
            } else {
                Some(cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::Parse {
                        line,
                        column: all_names[col].clone(),
                        message: format!("bad number `{cell}`"),
                    }
                })?)
            };
            raw[slot].push(value);
        }
    }

    let names: Vec<String> = selected.iter().map(|&c| all_names[c].clone()).collect();
    let mut start = 0;
    for (slot, col) in raw.iter().enumerate() {
        match col.iter().position(Option::is_some) {
            Some(first) => start = start.max(first),
            None => {
                return Err(Error::Invalid(format!(
                    "column `{}` has no observations",
                    names[slot]
                )))
            }
        }
    }
    let series = raw
        .iter()
        .map(|col| forward_fill(&col[start..]).into_iter().map(|v| v.unwrap()).collect())
        .collect();
    TimePanel::new(dates[start..].to_vec(), names, series, PanelKind::Prices)
}

/// Replaces each missing value with the most recent observed one. Leading gaps stay missing.
pub fn forward_fill(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut last = None;
    values
        .iter()
        .map(|v| {
            if v.is_some() {
                last = *v;
            }
            last
        })
        .collect()
}

/// `r_t = ln(p_t / p_{t-1})` per column; the first date is consumed.
pub fn to_log_returns(panel: &TimePanel) -> Result<TimePanel> {
    if panel.kind != PanelKind::Prices {
        return Err(Error::Invalid(format!(
            "log returns need a price panel, got {:?}",
            panel.kind
        )));
    }
    if panel.len() < 2 {
        return Err(Error::Invalid("need at least two dates for returns".into()));
    }
    let mut series = Vec::with_capacity(panel.series.len());
    for (name, prices) in panel.names.iter().zip(&panel.series) {
        if let Some((i, &v)) = prices.iter().enumerate().find(|(_, &v)| v <= 0.0) {
            return Err(Error::NonPositivePrice {
                column: name.clone(),
                date: panel.dates[i].to_string(),
                value: v,
            });
        }
        series.push(prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect());
    }
    TimePanel::new(
        panel.dates[1..].to_vec(),
        panel.names.clone(),
        series,
        PanelKind::LogReturns,
    )
}
