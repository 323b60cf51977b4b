use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{occlusion_curve, OcclusionCurve, ReportError};
use crate::corpus::{validate_corpus, Corpus};
use crate::error_kind;
use crate::imageops::{occlude_corpus, OcclusionRecord, OcclusionSpec, RasterCodec};
use crate::metrics::{evaluate, EvalOptions, EvalProtocol, Metric, MetricReport, ProtocolKind};
use crate::mining::{encode_corpus, ToyEncoder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub tag: String,
    pub embeddings: PathBuf,
    pub metadata: PathBuf,
    pub protocols: Vec<ProtocolKind>,
    /// Occlusion label of a corpus that was occluded beforehand; its
    /// reports carry this condition instead of being clean.
    #[serde(default)]
    pub condition: Option<String>,
}

/// One benchmark sweep. Occlusion images are seeded with
/// `seed ^ spec.seed ^ record_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model_tag: String,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub corpora: Vec<CorpusEntry>,
    #[serde(default)]
    pub occlusions: Vec<OcclusionSpec>,
    #[serde(default)]
    pub metric: Metric,
    /// CMC ranks, ascending.
    #[serde(default = "default_ranks")]
    pub ranks: Vec<usize>,
    /// TAR operating points, descending.
    #[serde(default = "default_far_targets")]
    pub far_targets: Vec<f64>,
    /// Toy encoder applied to every corpus before evaluation.
    #[serde(default)]
    pub encoder: Option<PathBuf>,
}

pub fn default_ranks() -> Vec<usize> {
    vec![1, 20]
}

pub fn default_far_targets() -> Vec<f64> {
    vec![1e-3, 1e-4]
}

fn safe_component(s: &str) -> bool {
    !s.is_empty() && s != "." && s != ".." && !s.contains(['/', '\\'])
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ReportError> {
        let bad = |m: String| Err(ReportError::Config(m));
        if !safe_component(&self.model_tag) {
            return bad(format!(
                "model_tag `{}` is not a valid directory name",
                self.model_tag
            ));
        }
        if self.corpora.is_empty() {
            return bad("no corpora listed".into());
        }
        let mut seen = BTreeSet::new();
        for c in &self.corpora {
            if !safe_component(&c.tag) {
                return bad(format!(
                    "dataset tag `{}` is not a valid directory name",
                    c.tag
                ));
            }
            if !seen.insert(&c.tag) {
                return bad(format!("dataset tag `{}` listed twice", c.tag));
            }
            if c.protocols.is_empty() {
                return bad(format!("dataset `{}` lists no protocols", c.tag));
            }
            if let Some(cond) = &c.condition {
                if !safe_component(cond) {
                    return bad(format!("condition `{cond}` is not a valid file name part"));
                }
                if !self.occlusions.is_empty() {
                    return bad(format!(
                        "dataset `{}` is already occluded; drop the occlusion list",
                        c.tag
                    ));
                }
            }
        }
        EvalProtocol {
            ranks: self.ranks.clone(),
            far_targets: self.far_targets.clone(),
            ..EvalProtocol::new(ProtocolKind::Market)
        }
        .validate()
        .map_err(|e| ReportError::Config(e.to_string()))?;
        let mut labels = BTreeSet::new();
        for o in &self.occlusions {
            o.validate()?;
            if !labels.insert(o.condition_label()) {
                return bad(format!(
                    "occlusion condition `{}` listed twice",
                    o.condition_label()
                ));
            }
        }
        Ok(())
    }
}

/// A (dataset, protocol, condition) that produced no report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub dataset: String,
    pub protocol: Option<ProtocolKind>,
    pub occlusion: Option<String>,
    /// Error variant, e.g. `BadMagic`.
    pub kind: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutcome {
    pub reports: Vec<MetricReport>,
    pub failures: Vec<Failure>,
    pub curves: Vec<OcclusionCurve>,
    /// Files written, relative to the output directory, in write order.
    pub files: Vec<PathBuf>,
}

struct DatasetResult {
    reports: Vec<MetricReport>,
    failures: Vec<Failure>,
    occlusion_manifests: Vec<(String, Vec<OcclusionRecord>)>,
}

fn fail<E: std::fmt::Display + std::fmt::Debug>(
    dataset: &str,
    protocol: Option<ProtocolKind>,
    occlusion: Option<&str>,
    e: E,
) -> Failure {
    Failure {
        dataset: dataset.to_string(),
        protocol,
        occlusion: occlusion.map(String::from),
        kind: error_kind(&e),
        error: e.to_string(),
    }
}

fn run_dataset(
    config: &RunConfig,
    entry: &CorpusEntry,
    encoder: Option<&ToyEncoder>,
) -> DatasetResult {
    let mut out = DatasetResult {
        reports: Vec::new(),
        failures: Vec::new(),
        occlusion_manifests: Vec::new(),
    };
    let corpus = match Corpus::load(&entry.embeddings, &entry.metadata) {
        Ok(c) => c,
        Err(e) => {
            out.failures.push(fail(&entry.tag, None, None, e));
            return out;
        }
    };
    let check = validate_corpus(&corpus.manifest, &corpus.embeddings);
    if !check.is_usable() {
        out.failures.push(Failure {
            dataset: entry.tag.clone(),
            protocol: None,
            occlusion: None,
            kind: "InvalidCorpus".into(),
            error: check.summary().replace('\n', "; "),
        });
        return out;
    }
    let corpus = match encoder.map(|e| encode_corpus(e, &corpus)).transpose() {
        Ok(Some(c)) => c,
        Ok(None) => corpus,
        Err(e) => {
            out.failures.push(fail(&entry.tag, None, None, e));
            return out;
        }
    };

    let mut conditions: Vec<(Option<String>, Corpus)> = Vec::new();
    conditions.push((entry.condition.clone(), corpus.clone()));
    if !config.occlusions.is_empty() {
        match RasterCodec::fit(&corpus.embeddings) {
            Ok(codec) => {
                for spec in &config.occlusions {
                    let label = spec.condition_label();
                    let seeded = OcclusionSpec {
                        seed: config.seed ^ spec.seed,
                        ..spec.clone()
                    };
                    match occlude_corpus(&corpus, &seeded, &codec) {
                        Ok((c, manifest)) => {
                            out.occlusion_manifests.push((label.clone(), manifest));
                            conditions.push((Some(label), c));
                        }
                        Err(e) => out.failures.push(fail(&entry.tag, None, Some(&label), e)),
                    }
                }
            }
            Err(e) => out.failures.push(fail(&entry.tag, None, None, e)),
        }
    }

    let options = |cond: &Option<String>| EvalOptions {
        metric: config.metric,
        model_tag: config.model_tag.clone(),
        occlusion_condition: cond.clone(),
        ..EvalOptions::default()
    };
    for &protocol in &entry.protocols {
        for (cond, c) in &conditions {
            let p = EvalProtocol {
                ranks: config.ranks.clone(),
                far_targets: config.far_targets.clone(),
                ..EvalProtocol::new(protocol)
            };
            match evaluate(c, &p, &options(cond)) {
                Ok(mut r) => {
                    r.dataset = entry.tag.clone();
                    out.reports.push(r);
                }
                Err(e) => out
                    .failures
                    .push(fail(&entry.tag, Some(protocol), cond.as_deref(), e)),
            }
        }
    }
    out
}

fn write(
    root: &Path,
    rel: PathBuf,
    bytes: &[u8],
    files: &mut Vec<PathBuf>,
) -> Result<(), ReportError> {
    let path = root.join(&rel);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| ReportError::io(dir, e))?;
    }
    fs::write(&path, bytes).map_err(|e| ReportError::io(&path, e))?;
    files.push(rel);
    Ok(())
}

fn curves_for(config: &RunConfig, reports: &[MetricReport]) -> Vec<OcclusionCurve> {
    let mut curves = Vec::new();
    for clean in reports.iter().filter(|r| r.occlusion_condition.is_none()) {
        let regions: BTreeSet<_> = config.occlusions.iter().map(|o| o.region).collect();
        for region in regions {
            let points: Vec<(f64, &MetricReport)> = config
                .occlusions
                .iter()
                .filter(|o| o.region == region)
                .filter_map(|o| {
                    let label = o.condition_label();
                    reports
                        .iter()
                        .find(|r| {
                            r.dataset == clean.dataset
                                && r.protocol == clean.protocol
                                && r.occlusion_condition.as_deref() == Some(label.as_str())
                        })
                        .map(|r| (o.coverage.fraction(), r))
                })
                .collect();
            if !points.is_empty() {
                curves.push(occlusion_curve(clean, region.as_str(), &points));
            }
        }
    }
    curves
}

/// Evaluates every (dataset, protocol, occlusion condition) and writes
/// `reports/<model>/<dataset>/<protocol>[.<condition>].csv`, a
/// `summary.jsonl`, a `failures.csv` manifest, occlusion manifests and
/// `curves/<model>.csv`. A failing dataset is recorded and skipped.
pub fn run_benchmark(config: &RunConfig) -> Result<BenchmarkOutcome, ReportError> {
    config.validate()?;
    let encoder = config
        .encoder
        .as_ref()
        .map(ToyEncoder::load)
        .transpose()
        .map_err(|e| ReportError::Config(format!("encoder: {e}")))?;
    let results: Vec<DatasetResult> = config
        .corpora
        .par_iter()
        .map(|entry| run_dataset(config, entry, encoder.as_ref()))
        .collect();

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut files = Vec::new();
    let root = &config.output_dir;
    let model_dir = PathBuf::from("reports").join(&config.model_tag);
    let header = format!("seed={} model_tag={}", config.seed, config.model_tag);
    for (entry, res) in config.corpora.iter().zip(results) {
        for (label, manifest) in &res.occlusion_manifests {
            let mut w = csv::Writer::from_writer(Vec::new());
            for rec in manifest {
                w.serialize(rec).expect("in-memory write");
            }
            let mut bytes = format!("# {header}\n").into_bytes();
            bytes.extend(w.into_inner().expect("flush"));
            let rel = PathBuf::from("occlusion")
                .join(&config.model_tag)
                .join(&entry.tag)
                .join(format!("{label}.csv"));
            write(root, rel, &bytes, &mut files)?;
        }
        for r in &res.reports {
            let name = match &r.occlusion_condition {
                Some(c) => format!("{}.{c}.csv", r.protocol),
                None => format!("{}.csv", r.protocol),
            };
            let rel = model_dir.join(&entry.tag).join(name);
            write(root, rel, r.to_csv(Some(&header)).as_bytes(), &mut files)?;
        }
        reports.extend(res.reports);
        failures.extend(res.failures);
    }

    let curves = if config.occlusions.is_empty() {
        Vec::new()
    } else {
        let curves = curves_for(config, &reports);
        for c in &curves {
            if let Err(e) = c.check() {
                failures.push(fail(&c.dataset, Some(c.protocol), Some(&c.region), e));
            }
        }
        let mut bytes = format!("# {header}\n").into_bytes();
        bytes.extend(OcclusionCurve::to_csv(&curves).into_bytes());
        let rel = PathBuf::from("curves").join(format!("{}.csv", config.model_tag));
        write(root, rel, &bytes, &mut files)?;
        curves
    };

    let summary: String = reports.iter().map(|r| r.to_json_line() + "\n").collect();
    write(
        root,
        model_dir.join("summary.jsonl"),
        summary.as_bytes(),
        &mut files,
    )?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dataset", "protocol", "occlusion", "kind", "error"])
        .expect("in-memory write");
    for f in &failures {
        w.write_record([
            f.dataset.as_str(),
            f.protocol.map(|p| p.as_str()).unwrap_or(""),
            f.occlusion.as_deref().unwrap_or(""),
            &f.kind,
            &f.error,
        ])
        .expect("in-memory write");
    }
    let mut bytes = format!("# {header}\n").into_bytes();
    bytes.extend(w.into_inner().expect("flush"));
    write(root, model_dir.join("failures.csv"), &bytes, &mut files)?;

    Ok(BenchmarkOutcome {
        reports,
        failures,
        curves,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, SynthConfig};
    use crate::imageops::OcclusionLevel;

    fn setup(dir: &Path, seed: u64) -> CorpusEntry {
        let c = synth_corpus(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let emb = dir.join(format!("s{seed}.emb"));
        let meta = dir.join(format!("s{seed}.jsonl"));
        c.save(&emb, &meta).unwrap();
        CorpusEntry {
            tag: format!("synth{seed}"),
            embeddings: emb,
            metadata: meta,
            protocols: vec![ProtocolKind::Market],
            condition: None,
        }
    }

    fn config(dir: &Path, corpora: Vec<CorpusEntry>, occ: bool) -> RunConfig {
        RunConfig {
            model_tag: "toy".into(),
            output_dir: dir.join("out"),
            seed: 11,
            corpora,
            occlusions: if occ {
                OcclusionLevel::ALL
                    .iter()
                    .map(|&l| OcclusionSpec::level(l, 0))
                    .collect()
            } else {
                vec![]
            },
            metric: Metric::Euclidean,
            ranks: default_ranks(),
            far_targets: default_far_targets(),
            encoder: None,
        }
    }

    #[test]
    fn one_clean_dataset_gives_one_report() {
        let d = tempfile::tempdir().unwrap();
        let cfg = config(d.path(), vec![setup(d.path(), 0)], false);
        let out = run_benchmark(&cfg).unwrap();
        assert_eq!(out.reports.len(), 1);
        assert!(out.failures.is_empty());
        let text = fs::read_to_string(d.path().join("out/reports/toy/synth0/market.csv")).unwrap();
        assert!(text.starts_with("# seed=11"));
    }

    #[test]
    fn occlusion_levels_give_five_reports_and_a_curve() {
        let d = tempfile::tempdir().unwrap();
        let cfg = config(d.path(), vec![setup(d.path(), 1)], true);
        let out = run_benchmark(&cfg).unwrap();
        assert_eq!(out.reports.len(), 5);
        assert_eq!(out.curves.len(), 1);
        assert_eq!(out.curves[0].points.len(), 5);
        assert!(d
            .path()
            .join("out/reports/toy/synth1/market.heavy.csv")
            .exists());
        assert!(d.path().join("out/curves/toy.csv").exists());
        assert!(d
            .path()
            .join("out/occlusion/toy/synth1/extreme.csv")
            .exists());
    }

    #[test]
    fn reruns_are_byte_identical() {
        let d = tempfile::tempdir().unwrap();
        let entries = vec![setup(d.path(), 2), setup(d.path(), 3)];
        let mut cfg = config(d.path(), entries, true);
        let a = run_benchmark(&cfg).unwrap();
        let first: Vec<Vec<u8>> = a
            .files
            .iter()
            .map(|f| fs::read(cfg.output_dir.join(f)).unwrap())
            .collect();
        cfg.output_dir = d.path().join("out2");
        let b = run_benchmark(&cfg).unwrap();
        assert_eq!(a.files, b.files);
        let second: Vec<Vec<u8>> = b
            .files
            .iter()
            .map(|f| fs::read(cfg.output_dir.join(f)).unwrap())
            .collect();
        assert_eq!(first, second);
    }

    #[test]
    fn broken_dataset_is_recorded_not_fatal() {
        let d = tempfile::tempdir().unwrap();
        let good = setup(d.path(), 4);
        let bad_path = d.path().join("bad.emb");
        fs::write(&bad_path, b"XXXX").unwrap();
        let bad = CorpusEntry {
            tag: "broken".into(),
            embeddings: bad_path,
            metadata: good.metadata.clone(),
            protocols: vec![ProtocolKind::Market],
            condition: None,
        };
        let out = run_benchmark(&config(d.path(), vec![bad, good], false)).unwrap();
        assert_eq!(out.reports.len(), 1);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].kind, "BadMagic");
        let manifest = fs::read_to_string(d.path().join("out/reports/toy/failures.csv")).unwrap();
        assert!(manifest.contains("broken"));
    }

    #[test]
    fn config_validation() {
        let d = tempfile::tempdir().unwrap();
        let e = setup(d.path(), 5);
        let cfg = config(d.path(), vec![e.clone(), e], false);
        assert!(matches!(cfg.validate(), Err(ReportError::Config(_))));
        let cfg = RunConfig {
            model_tag: "../x".into(),
            ..config(d.path(), vec![], false)
        };
        assert!(cfg.validate().is_err());
    }
}
