use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use reidbench_core::imageops::{Coverage, Region};
use reidbench_core::metrics::{Metric, ProtocolKind};
use reidbench_core::mining::Nonlinearity;
use reidbench_core::report::TableFormat;

/// Seeds are kept within the signed 64-bit range so they survive a trip
/// through the TOML config and sidecar files.
fn seed(s: &str) -> Result<u64, String> {
    let v: u64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > i64::MAX as u64 {
        return Err(format!("seed must be at most {}", i64::MAX));
    }
    Ok(v)
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(format!("`{s}` must be a positive number"));
    }
    Ok(v)
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(format!("`{s}` must be a non-negative number"));
    }
    Ok(v)
}

fn count(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v == 0 {
        return Err("must be at least 1".into());
    }
    Ok(v)
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

fn region(s: &str) -> Result<Region, String> {
    s.parse()
}

#[derive(Debug, Clone, PartialEq, Parser)]
#[command(
    name = "reidbench",
    version,
    about = "Long-term re-identification benchmarking: corpora, evaluation, triplet training, occlusion and reports",
    after_help = "Exit codes: 0 success, 1 validation or evaluation failure, 2 usage error.\n\
                  Explicit flags override values from --config."
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Default, Args)]
pub struct Common {
    /// TOML config with optional top-level `seed` and sections [synth],
    /// [train], [occlusion], [eval]
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Random seed, echoed into every artifact [required by synth, train,
    /// occlude and occluding evals unless the config sets it]
    #[arg(long, global = true, value_parser = seed)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it [default: all cores]
    #[arg(long, global = true, value_parser = count)]
    pub workers: Option<usize>,
    /// Output directory; every file is written below it [default: .]
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Generate a synthetic clothes-change corpus
    Synth(SynthArgs),
    /// Check a corpus for non-finite vectors, shape conflicts, duplicates
    /// and unmatched queries
    Validate(CorpusArgs),
    /// Evaluate corpora, optionally under occlusion, and write reports
    Eval(EvalArgs),
    /// Train a toy encoder with batch-hard triplet loss
    Train(TrainArgs),
    /// Occlude every embedding of a corpus through its raster encoding
    Occlude(OccludeArgs),
    /// Collect reports into result tables and occlusion curves
    Report(ReportArgs),
    /// Signed differences between two models' reports
    Delta(DeltaArgs),
}

#[derive(Debug, Clone, PartialEq, Default, Args)]
pub struct SynthArgs {
    /// [default: 20]
    #[arg(long, value_parser = count)]
    pub num_identities: Option<usize>,
    /// [default: 2]
    #[arg(long, value_parser = count)]
    pub clothes_sets: Option<usize>,
    /// [default: 4]
    #[arg(long, value_parser = count)]
    pub images_per_set: Option<usize>,
    /// [default: 32]
    #[arg(long, value_parser = count)]
    pub dim: Option<usize>,
    /// Expected distance between identity centers [default: 1.0]
    #[arg(long, value_parser = positive)]
    pub identity_separation: Option<f64>,
    /// Norm of each outfit offset [default: 0.5]
    #[arg(long, value_parser = non_negative)]
    pub clothes_offset: Option<f64>,
    /// Expected norm of per-image noise [default: 0.2]
    #[arg(long, value_parser = non_negative)]
    pub noise: Option<f64>,
    /// Identities placed wholly in the train split [default: 0]
    #[arg(long)]
    pub train_identities: Option<usize>,
    /// Confine outfit offsets to a shared subspace [default: whole space]
    #[arg(long, value_parser = count)]
    pub clothes_subspace_dim: Option<usize>,
    /// Dataset tag stored in every record [default: synthetic]
    #[arg(long)]
    pub dataset: Option<String>,
    /// Output file stem [default: synth]
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Args)]
pub struct CorpusArgs {
    /// EMB1 embedding file
    #[arg(long, value_name = "PATH")]
    pub embeddings: PathBuf,
    /// JSON-lines metadata file
    #[arg(long, value_name = "PATH")]
    pub metadata: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Args)]
pub struct EvalArgs {
    /// EMB1 embedding file [required unless the config lists corpora]
    #[arg(long, value_name = "PATH", requires = "metadata")]
    pub embeddings: Option<PathBuf>,
    #[arg(long, value_name = "PATH", requires = "embeddings")]
    pub metadata: Option<PathBuf>,
    /// Dataset tag used in output paths [default: file stem]
    #[arg(long)]
    pub dataset: Option<String>,
    /// market, prcc_cc, deepchange, bts_templated; comma separated
    /// [default: prcc_cc]
    #[arg(long, value_delimiter = ',', value_parser = parse::<ProtocolKind>)]
    pub protocol: Vec<ProtocolKind>,
    /// euclidean or cosine_distance [default: euclidean]
    #[arg(long, value_parser = parse::<Metric>)]
    pub metric: Option<Metric>,
    /// CMC ranks, ascending, comma separated [default: 1,20]
    #[arg(long, value_delimiter = ',', value_parser = count)]
    pub ranks: Vec<usize>,
    /// TAR@FAR operating points, descending, comma separated [default:
    /// 1e-3,1e-4]
    #[arg(long, value_delimiter = ',', value_parser = positive)]
    pub far_targets: Vec<f64>,
    /// [default: model]
    #[arg(long)]
    pub model_tag: Option<String>,
    /// Occlusion levels to add: light (20%), moderate (40%), heavy (60%),
    /// extreme (80%) or a fraction; comma separated [default: none]
    #[arg(long, value_delimiter = ',', value_parser = parse::<Coverage>)]
    pub occlusion: Vec<Coverage>,
    /// whole, top_half or bottom_half [default: whole]
    #[arg(long, value_parser = region)]
    pub region: Option<Region>,
    /// Label for a corpus that was occluded beforehand
    #[arg(long, conflicts_with = "occlusion")]
    pub condition: Option<String>,
    /// ENC1 encoder applied before evaluation
    #[arg(long, value_name = "PATH")]
    pub encoder: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Triplet margin [default: 0.35]
    #[arg(long, value_parser = positive, allow_negative_numbers = true)]
    pub margin: Option<f64>,
    /// Identities per batch, P [default: 10]
    #[arg(long = "batch-identities", short = 'P', value_parser = count)]
    pub batch_identities: Option<usize>,
    /// Images per identity, K [default: 4]
    #[arg(long = "images-per-identity", short = 'K', value_parser = count)]
    pub images_per_identity: Option<usize>,
    /// Adam learning rate [default: 1e-5]
    #[arg(long, value_parser = non_negative)]
    pub learning_rate: Option<f64>,
    /// [default: 1e-6]
    #[arg(long, value_parser = non_negative)]
    pub weight_decay: Option<f64>,
    /// [default: 2000]
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Protocol for held-out rank-1 [default: prcc_cc]
    #[arg(long, value_parser = parse::<ProtocolKind>)]
    pub validation_protocol: Option<ProtocolKind>,
    /// identity or tanh [default: identity]
    #[arg(long, value_parser = parse::<Nonlinearity>)]
    pub nonlinearity: Option<Nonlinearity>,
    /// Output dimension of a randomly initialised encoder [default: start
    /// from the identity map]
    #[arg(long, value_parser = count)]
    pub random_init: Option<usize>,
    /// Output file stem [default: encoder]
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Args)]
pub struct OccludeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// light (20%), moderate (40%), heavy (60%), extreme (80%) or a
    /// fraction [default: moderate]
    #[arg(long, value_parser = parse::<Coverage>)]
    pub level: Option<Coverage>,
    /// whole, top_half or bottom_half [default: whole]
    #[arg(long, value_parser = region)]
    pub region: Option<Region>,
    /// Allowed coverage error [default: 0.02]
    #[arg(long, value_parser = non_negative)]
    pub tolerance: Option<f64>,
    /// Output file stem [default: <metadata stem>.<condition>]
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Args)]
pub struct ReportArgs {
    /// Report CSV / summary.jsonl files, or directories searched for them
    #[arg(long, required = true, value_name = "PATH")]
    pub reports: Vec<PathBuf>,
    /// csv or markdown [default: markdown]
    #[arg(long, value_parser = parse::<TableFormat>)]
    pub format: Option<TableFormat>,
}

#[derive(Debug, Clone, PartialEq, Default, Args)]
pub struct DeltaArgs {
    /// Reports of the left model (file or directory)
    #[arg(long, value_name = "PATH")]
    pub left: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub right: PathBuf,
    /// [default: model_tag of the left reports]
    #[arg(long)]
    pub left_tag: Option<String>,
    #[arg(long)]
    pub right_tag: Option<String>,
    /// csv or markdown [default: markdown]
    #[arg(long, value_parser = parse::<TableFormat>)]
    pub format: Option<TableFormat>,
}

fn table_format(f: TableFormat) -> &'static str {
    match f {
        TableFormat::Csv => "csv",
        TableFormat::Markdown => "markdown",
    }
}

/// Collects `--flag value` pairs.
#[derive(Default)]
struct Argv(Vec<String>);

impl Argv {
    fn opt<T: ToString>(&mut self, flag: &str, v: &Option<T>) {
        if let Some(v) = v {
            self.0.push(format!("--{flag}"));
            self.0.push(v.to_string());
        }
    }

    fn path(&mut self, flag: &str, v: &Option<PathBuf>) {
        self.opt(flag, &v.as_ref().map(|p| p.display().to_string()));
    }

    fn list<T, F: Fn(&T) -> String>(&mut self, flag: &str, v: &[T], f: F) {
        if !v.is_empty() {
            self.0.push(format!("--{flag}"));
            self.0.push(v.iter().map(f).collect::<Vec<_>>().join(","));
        }
    }

    fn corpus(&mut self, c: &CorpusArgs) {
        self.path("embeddings", &Some(c.embeddings.clone()));
        self.path("metadata", &Some(c.metadata.clone()));
    }
}

impl Cli {
    pub fn parse_from_args<I, T>(args: I) -> Result<Cli, clap::Error>
    where
        I: IntoIterator<Item = T>,
        T: Into<OsString> + Clone,
    {
        Cli::try_parse_from(args)
    }

    /// Renders back to an argument vector that parses to the same value.
    pub fn to_argv(&self) -> Vec<String> {
        let mut a = Argv(vec!["reidbench".into()]);
        let name = match &self.command {
            Command::Synth(_) => "synth",
            Command::Validate(_) => "validate",
            Command::Eval(_) => "eval",
            Command::Train(_) => "train",
            Command::Occlude(_) => "occlude",
            Command::Report(_) => "report",
            Command::Delta(_) => "delta",
        };
        a.0.push(name.into());
        a.path("config", &self.common.config);
        a.opt("seed", &self.common.seed);
        a.opt("workers", &self.common.workers);
        a.path("out", &self.common.out);
        match &self.command {
            Command::Synth(s) => {
                a.opt("num-identities", &s.num_identities);
                a.opt("clothes-sets", &s.clothes_sets);
                a.opt("images-per-set", &s.images_per_set);
                a.opt("dim", &s.dim);
                a.opt("identity-separation", &s.identity_separation);
                a.opt("clothes-offset", &s.clothes_offset);
                a.opt("noise", &s.noise);
                a.opt("train-identities", &s.train_identities);
                a.opt("clothes-subspace-dim", &s.clothes_subspace_dim);
                a.opt("dataset", &s.dataset);
                a.opt("name", &s.name);
            }
            Command::Validate(c) => a.corpus(c),
            Command::Eval(e) => {
                a.path("embeddings", &e.embeddings);
                a.path("metadata", &e.metadata);
                a.opt("dataset", &e.dataset);
                a.list("protocol", &e.protocol, |p| p.to_string());
                a.opt("metric", &e.metric);
                a.list("ranks", &e.ranks, |r| r.to_string());
                a.list("far-targets", &e.far_targets, |f| f.to_string());
                a.opt("model-tag", &e.model_tag);
                a.list("occlusion", &e.occlusion, |c| c.label());
                a.opt("region", &e.region);
                a.opt("condition", &e.condition);
                a.path("encoder", &e.encoder);
            }
            Command::Train(t) => {
                a.corpus(&t.corpus);
                a.opt("margin", &t.margin);
                a.opt("batch-identities", &t.batch_identities);
                a.opt("images-per-identity", &t.images_per_identity);
                a.opt("learning-rate", &t.learning_rate);
                a.opt("weight-decay", &t.weight_decay);
                a.opt("max-steps", &t.max_steps);
                a.opt("validation-protocol", &t.validation_protocol);
                a.opt("nonlinearity", &t.nonlinearity);
                a.opt("random-init", &t.random_init);
                a.opt("name", &t.name);
            }
            Command::Occlude(o) => {
                a.corpus(&o.corpus);
                a.opt("level", &o.level.map(|c| c.label()));
                a.opt("region", &o.region);
                a.opt("tolerance", &o.tolerance);
                a.opt("name", &o.name);
            }
            Command::Report(r) => {
                for p in &r.reports {
                    a.path("reports", &Some(p.clone()));
                }
                a.opt("format", &r.format.map(table_format));
            }
            Command::Delta(d) => {
                a.path("left", &Some(d.left.clone()));
                a.path("right", &Some(d.right.clone()));
                a.opt("left-tag", &d.left_tag);
                a.opt("right-tag", &d.right_tag);
                a.opt("format", &d.format.map(table_format));
            }
        }
        a.0
    }
}
