use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::delta::round_half_away;
use super::{format_delta, DeltaTable, Far, MetricId};
use crate::metrics::{MetricReport, ProtocolKind, CSV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            _ => Err(format!("unknown table format `{s}` (csv, markdown)")),
        }
    }
}

fn percent(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{:.2}", round_half_away(x * 100.0, 2)),
        _ => "-".to_string(),
    }
}

const RETRIEVAL: [MetricId; 2] = [MetricId::Rank(1), MetricId::Map];
const VERIFICATION: [MetricId; 4] = [
    MetricId::Rank(1),
    MetricId::Rank(20),
    MetricId::Tar(Far(1e-4)),
    MetricId::Tar(Far(1e-3)),
];

fn markdown_section(out: &mut String, title: &str, reports: &[&MetricReport], cols: &[MetricId]) {
    if reports.is_empty() {
        return;
    }
    let _ = writeln!(out, "### {title}\n");
    out.push_str("| Model | Dataset | Protocol | Occlusion |");
    for c in cols {
        let _ = write!(out, " {c} |");
    }
    out.push_str("\n|---|---|---|---|");
    out.push_str(&"---:|".repeat(cols.len()));
    out.push('\n');
    for r in reports {
        let _ = write!(
            out,
            "| {} | {} | {} | {} |",
            r.model_tag,
            r.dataset,
            r.protocol,
            r.occlusion_condition.as_deref().unwrap_or("clean")
        );
        for c in cols {
            let _ = write!(out, " {} |", percent(c.value(r)));
        }
        out.push('\n');
    }
    out.push('\n');
}

/// Result tables. CSV keeps full precision; markdown shows percentages
/// with retrieval protocols as (R1, mAP) and the templated protocol as
/// (R1, R20, T@F 1e-4, T@F 1e-3).
pub fn emit_reports(reports: &[MetricReport], format: TableFormat) -> String {
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER).expect("in-memory write");
            for r in reports {
                w.write_record(r.csv_record()).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
        }
        TableFormat::Markdown => {
            let (templated, retrieval): (Vec<&MetricReport>, Vec<&MetricReport>) = reports
                .iter()
                .partition(|r| r.protocol == ProtocolKind::BtsTemplated);
            let mut out = String::new();
            markdown_section(&mut out, "Retrieval", &retrieval, &RETRIEVAL);
            markdown_section(
                &mut out,
                "Templated verification",
                &templated,
                &VERIFICATION,
            );
            out
        }
    }
}

fn marked(v: f64) -> String {
    let s = format_delta(v);
    match s.as_bytes()[0] {
        _ if s[1..].bytes().all(|b| b == b'0' || b == b'.') => s,
        b'+' => format!("<span style=\"color:green\">{s}</span>"),
        _ => format!("<span style=\"color:red\">{s}</span>"),
    }
}

/// Delta table. CSV keeps unrounded values; markdown rounds to two
/// decimals in percentage points, green for gains and red for losses.
pub fn emit_delta(table: &DeltaTable, format: TableFormat) -> String {
    match format {
        TableFormat::Csv => table.to_csv(),
        TableFormat::Markdown => {
            let cols: BTreeSet<MetricId> = table.cells.keys().map(|k| k.metric).collect();
            let mut rows: BTreeMap<
                (String, ProtocolKind, Option<String>),
                BTreeMap<MetricId, f64>,
            > = BTreeMap::new();
            for (k, &v) in &table.cells {
                rows.entry((k.dataset.clone(), k.protocol, k.condition.clone()))
                    .or_default()
                    .insert(k.metric, v);
            }
            let mut out = format!("### {} - {}\n\n", table.left_tag, table.right_tag);
            out.push_str("| Dataset | Protocol | Occlusion |");
            for c in &cols {
                let _ = write!(out, " {c} |");
            }
            out.push_str("\n|---|---|---|");
            out.push_str(&"---:|".repeat(cols.len()));
            out.push('\n');
            for ((d, p, c), cells) in &rows {
                let _ = write!(out, "| {d} | {p} | {} |", c.as_deref().unwrap_or("clean"));
                for m in &cols {
                    let cell = cells.get(m).map(|&v| marked(v)).unwrap_or_default();
                    let _ = write!(out, " {cell} |");
                }
                out.push('\n');
            }
            out
        }
    }
}
