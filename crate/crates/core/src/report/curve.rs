use super::ReportError;
use crate::metrics::{MetricReport, ProtocolKind};

/// Relative rank-1 loss above which a point is flagged.
pub const DECLINE_FLAG: f64 = 0.10;

pub const CURVE_HEADER: [&str; 9] = [
    "model_tag",
    "dataset",
    "protocol",
    "region",
    "condition",
    "coverage",
    "rank1",
    "relative",
    "flagged",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub condition: String,
    pub coverage: f64,
    pub absolute: f64,
    /// `absolute / clean`; `None` when clean rank-1 is zero.
    pub relative: Option<f64>,
    /// Relative rank-1 fell by more than [`DECLINE_FLAG`].
    pub flagged: bool,
}

/// Rank-1 against occlusion level for one (model, dataset, protocol,
/// region). The first point is the clean condition at coverage 0.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionCurve {
    pub model_tag: String,
    pub dataset: String,
    pub protocol: ProtocolKind,
    pub region: String,
    pub points: Vec<CurvePoint>,
}

impl OcclusionCurve {
    /// Fails when the relative series is undefined. The absolute series is
    /// still usable.
    pub fn check(&self) -> Result<(), ReportError> {
        if self.points.iter().any(|p| p.relative.is_none()) {
            return Err(ReportError::ZeroCleanRank1);
        }
        Ok(())
    }

    pub fn any_flagged(&self) -> bool {
        self.points.iter().any(|p| p.flagged)
    }

    /// Data rows in [`CURVE_HEADER`] order.
    pub fn csv_rows(&self) -> Vec<[String; 9]> {
        self.points
            .iter()
            .map(|p| {
                [
                    self.model_tag.clone(),
                    self.dataset.clone(),
                    self.protocol.to_string(),
                    self.region.clone(),
                    p.condition.clone(),
                    p.coverage.to_string(),
                    p.absolute.to_string(),
                    p.relative.map(|v| v.to_string()).unwrap_or_default(),
                    p.flagged.to_string(),
                ]
            })
            .collect()
    }

    pub fn to_csv(curves: &[OcclusionCurve]) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CURVE_HEADER).expect("in-memory write");
        for c in curves {
            for row in c.csv_rows() {
                w.write_record(&row).expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Builds the curve from the clean report and `(coverage, report)` pairs,
/// ordered by coverage.
pub fn occlusion_curve(
    clean: &MetricReport,
    region: &str,
    occluded: &[(f64, &MetricReport)],
) -> OcclusionCurve {
    let base = clean.rank(1).unwrap_or(0.0);
    let point = |condition: String, coverage: f64, absolute: f64| {
        let relative = (base > 0.0).then(|| absolute / base);
        CurvePoint {
            condition,
            coverage,
            absolute,
            relative,
            flagged: relative.is_some_and(|r| 1.0 - r > DECLINE_FLAG),
        }
    };
    let mut rest: Vec<&(f64, &MetricReport)> = occluded.iter().collect();
    rest.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut points = vec![point("clean".into(), 0.0, base)];
    for (cov, r) in rest {
        let label = r
            .occlusion_condition
            .clone()
            .unwrap_or_else(|| cov.to_string());
        points.push(point(label, *cov, r.rank(1).unwrap_or(0.0)));
    }
    OcclusionCurve {
        model_tag: clean.model_tag.clone(),
        dataset: clean.dataset.clone(),
        protocol: clean.protocol,
        region: region.to_string(),
        points,
    }
}
