use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MetricsError, ProtocolKind, TarPoint};

pub const CSV_HEADER: [&str; 11] = [
    "model_tag",
    "dataset",
    "protocol",
    "occlusion",
    "rank1",
    "rank20",
    "map",
    "tar@1e-3",
    "tar@1e-4",
    "evaluated",
    "skipped",
];

/// Scores for one (model, dataset, protocol, occlusion condition).
/// All scores are fractions in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model_tag: String,
    pub dataset: String,
    pub protocol: ProtocolKind,
    pub rank_accuracies: BTreeMap<usize, f64>,
    pub map_score: f64,
    pub tar_at_far: Vec<TarPoint>,
    pub num_queries_evaluated: usize,
    pub num_queries_skipped: usize,
    pub occlusion_condition: Option<String>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_cell(s: &str, column: &str) -> Result<Option<f64>, MetricsError> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|e| MetricsError::Serialization(format!("column {column}: {e}")))
}

impl MetricReport {
    pub fn rank(&self, k: usize) -> Option<f64> {
        self.rank_accuracies.get(&k).copied()
    }

    /// TAR at the operating point whose target equals `far`.
    pub fn tar(&self, far: f64) -> Option<f64> {
        self.tar_at_far
            .iter()
            .find(|p| (p.far_target - far).abs() <= far * 1e-9)
            .map(|p| p.tar)
    }

    /// (dataset, protocol, occlusion) identity of the report.
    pub fn key(&self) -> (String, ProtocolKind, Option<String>) {
        (
            self.dataset.clone(),
            self.protocol,
            self.occlusion_condition.clone(),
        )
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self, MetricsError> {
        serde_json::from_str(line).map_err(|e| MetricsError::Serialization(e.to_string()))
    }

    /// Cells in [`CSV_HEADER`] order. Floats use the shortest exact
    /// representation; absent metrics are empty cells.
    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.model_tag.clone(),
            self.dataset.clone(),
            self.protocol.to_string(),
            self.occlusion_condition.clone().unwrap_or_default(),
            cell(self.rank(1)),
            cell(self.rank(20)),
            self.map_score.to_string(),
            cell(self.tar(1e-3)),
            cell(self.tar(1e-4)),
            self.num_queries_evaluated.to_string(),
            self.num_queries_skipped.to_string(),
        ]
    }

    /// Inverse of [`csv_record`](Self::csv_record). TAR thresholds are not
    /// stored in CSV and come back as NaN.
    pub fn from_csv_record(cells: &[&str]) -> Result<Self, MetricsError> {
        if cells.len() != CSV_HEADER.len() {
            return Err(MetricsError::Serialization(format!(
                "expected {} columns, got {}",
                CSV_HEADER.len(),
                cells.len()
            )));
        }
        let protocol = cells[2]
            .parse::<ProtocolKind>()
            .map_err(MetricsError::Serialization)?;
        let mut rank_accuracies = BTreeMap::new();
        for (k, col) in [(1usize, 4usize), (20, 5)] {
            if let Some(v) = parse_cell(cells[col], CSV_HEADER[col])? {
                rank_accuracies.insert(k, v);
            }
        }
        let mut tar_at_far = Vec::new();
        for (far, col) in [(1e-3, 7usize), (1e-4, 8)] {
            if let Some(v) = parse_cell(cells[col], CSV_HEADER[col])? {
                tar_at_far.push(TarPoint {
                    far_target: far,
                    tar: v,
                    threshold: f64::NAN,
                    empirical_far: f64::NAN,
                    feasible: true,
                });
            }
        }
        let count = |col: usize| {
            cells[col].parse::<usize>().map_err(|e| {
                MetricsError::Serialization(format!("column {}: {e}", CSV_HEADER[col]))
            })
        };
        Ok(MetricReport {
            model_tag: cells[0].to_string(),
            dataset: cells[1].to_string(),
            protocol,
            rank_accuracies,
            map_score: parse_cell(cells[6], "map")?.unwrap_or(f64::NAN),
            tar_at_far,
            num_queries_evaluated: count(9)?,
            num_queries_skipped: count(10)?,
            occlusion_condition: (!cells[3].is_empty()).then(|| cells[3].to_string()),
        })
    }

    /// Header plus one row, with an optional leading `# ...` comment line.
    pub fn to_csv(&self, comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(c) = comment {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        w.write_record(self.csv_record()).expect("in-memory write");
        out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"));
        out
    }

    /// Parses every data row of a report CSV, skipping `#` comment lines.
    pub fn parse_csv(text: &str) -> Result<Vec<Self>, MetricsError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut out = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| MetricsError::Serialization(e.to_string()))?;
            let cells: Vec<&str> = row.iter().collect();
            out.push(Self::from_csv_record(&cells)?);
        }
        Ok(out)
    }
}
