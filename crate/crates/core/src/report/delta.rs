use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{MetricId, ReportError};
use crate::metrics::{MetricReport, ProtocolKind};

/// Cell address: which benchmark condition and which metric.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub dataset: String,
    pub protocol: ProtocolKind,
    pub condition: Option<String>,
    pub metric: MetricId,
}

/// Signed differences `left - right`, stored as unrounded fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTable {
    pub left_tag: String,
    pub right_tag: String,
    pub cells: BTreeMap<CellKey, f64>,
}

/// Rounds half away from zero. A 1e-9 nudge in units of the last digit
/// absorbs binary representation error of decimal inputs.
pub fn round_half_away(x: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    let y = x * s;
    (y + y.signum() * 1e-9).round() / s
}

/// A fraction difference shown in percentage points: `+12.27`, `-00.03`.
pub fn format_delta(v: f64) -> String {
    let p = round_half_away(v * 100.0, 2);
    let sign = if p < 0.0 { '-' } else { '+' };
    format!("{sign}{:05.2}", p.abs())
}

type ReportKey = (String, ProtocolKind, Option<String>);

fn index<'a>(
    reports: &'a [MetricReport],
    side: &str,
) -> Result<BTreeMap<ReportKey, &'a MetricReport>, ReportError> {
    let mut map = BTreeMap::new();
    for r in reports {
        if map.insert(r.key(), r).is_some() {
            return Err(ReportError::KeyMismatch(format!(
                "{side} has two reports for {:?}",
                r.key()
            )));
        }
    }
    Ok(map)
}

/// Pairs reports by (dataset, protocol, occlusion) and subtracts every
/// metric both sides carry.
pub fn delta_table(
    left_tag: &str,
    left: &[MetricReport],
    right_tag: &str,
    right: &[MetricReport],
) -> Result<DeltaTable, ReportError> {
    let l = index(left, "left")?;
    let r = index(right, "right")?;
    let lk: BTreeSet<_> = l.keys().collect();
    let rk: BTreeSet<_> = r.keys().collect();
    if lk != rk {
        let only: Vec<String> = lk
            .symmetric_difference(&rk)
            .map(|(d, p, c)| {
                format!(
                    "{d}/{p}{}",
                    c.as_ref().map(|c| format!(".{c}")).unwrap_or_default()
                )
            })
            .collect();
        return Err(ReportError::KeyMismatch(format!(
            "present on one side only: {}",
            only.join(", ")
        )));
    }
    let mut cells = BTreeMap::new();
    for (key, a) in &l {
        let b = r[key];
        for m in MetricId::all_in(a) {
            if let (Some(x), Some(y)) = (m.value(a), m.value(b)) {
                cells.insert(
                    CellKey {
                        dataset: key.0.clone(),
                        protocol: key.1,
                        condition: key.2.clone(),
                        metric: m,
                    },
                    x - y,
                );
            }
        }
    }
    Ok(DeltaTable {
        left_tag: left_tag.to_string(),
        right_tag: right_tag.to_string(),
        cells,
    })
}

impl DeltaTable {
    pub fn get(&self, dataset: &str, protocol: ProtocolKind, metric: MetricId) -> Option<f64> {
        self.cells
            .iter()
            .find(|(k, _)| {
                k.dataset == dataset
                    && k.protocol == protocol
                    && k.condition.is_none()
                    && k.metric == metric
            })
            .map(|(_, &v)| v)
    }

    /// Display string of a clean-condition cell.
    pub fn display(
        &self,
        dataset: &str,
        protocol: ProtocolKind,
        metric: MetricId,
    ) -> Option<String> {
        self.get(dataset, protocol, metric).map(format_delta)
    }

    /// `left - right` becomes `right - left`.
    pub fn negated(&self) -> DeltaTable {
        DeltaTable {
            left_tag: self.right_tag.clone(),
            right_tag: self.left_tag.clone(),
            cells: self.cells.iter().map(|(k, v)| (k.clone(), -v)).collect(),
        }
    }

    pub const CSV_HEADER: [&'static str; 7] = [
        "left",
        "right",
        "dataset",
        "protocol",
        "occlusion",
        "metric",
        "delta",
    ];

    /// One row per cell, full precision.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::CSV_HEADER).expect("in-memory write");
        for (k, v) in &self.cells {
            w.write_record([
                self.left_tag.as_str(),
                &self.right_tag,
                &k.dataset,
                k.protocol.as_str(),
                k.condition.as_deref().unwrap_or(""),
                &k.metric.to_string(),
                &v.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn parse_csv(text: &str) -> Result<DeltaTable, ReportError> {
        let bad = |m: String| ReportError::KeyMismatch(format!("delta CSV: {m}"));
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut table = DeltaTable {
            left_tag: String::new(),
            right_tag: String::new(),
            cells: BTreeMap::new(),
        };
        for row in reader.records() {
            let row = row.map_err(|e| bad(e.to_string()))?;
            if row.len() != 7 {
                return Err(bad(format!("expected 7 columns, got {}", row.len())));
            }
            table.left_tag = row[0].to_string();
            table.right_tag = row[1].to_string();
            let key = CellKey {
                dataset: row[2].to_string(),
                protocol: row[3].parse().map_err(bad)?,
                condition: (!row[4].is_empty()).then(|| row[4].to_string()),
                metric: row[5].parse().map_err(bad)?,
            };
            let v: f64 = row[6].parse().map_err(|e| bad(format!("{e}")))?;
            table.cells.insert(key, v);
        }
        Ok(table)
    }
}
