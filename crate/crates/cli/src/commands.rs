use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use reidbench_core::corpus::{synth_corpus, validate_corpus, Corpus};
use reidbench_core::imageops::{occlude_corpus, Coverage, OcclusionSpec, RasterCodec, Region};
use reidbench_core::metrics::{MetricReport, ProtocolKind, CSV_HEADER};
use reidbench_core::mining::{trace_to_csv, train, Nonlinearity, ToyEncoder};
use reidbench_core::report::{
    default_far_targets, default_ranks, delta_table, emit_delta, emit_reports, occlusion_curve,
    run_benchmark, CorpusEntry, OcclusionCurve, ReportError, RunConfig, TableFormat,
};
use serde::Serialize;

use crate::args::{
    Cli, Command, CorpusArgs, DeltaArgs, EvalArgs, OccludeArgs, ReportArgs, SynthArgs, TrainArgs,
};
use crate::config::FileConfig;
use crate::error::{CliError, UsageKind};

struct Ctx {
    file: FileConfig,
    seed: Option<u64>,
    out: PathBuf,
}

impl Ctx {
    fn require_seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| {
            CliError::usage(
                UsageKind::MissingRequired,
                "--seed is required (or a top-level `seed` in --config)",
            )
        })
    }

    fn write(&self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.out.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::failed(dir.display(), e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::failed(path.display(), e))?;
        Ok(path)
    }

    /// Records the resolved configuration next to the outputs.
    fn sidecar<T: Serialize>(
        &self,
        command: &str,
        stem: &str,
        seed: Option<u64>,
        config: &T,
    ) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Sidecar<'a, T> {
            command: &'a str,
            version: &'a str,
            seed: Option<u64>,
            config: &'a T,
        }
        let text = toml::to_string(&Sidecar {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
        })
        .map_err(|e| CliError::failed("run.toml", e))?;
        self.write(format!("runs/{command}.{stem}.toml"), text.as_bytes())?;
        Ok(())
    }
}

fn file_part(name: &str, flag: &str) -> Result<(), CliError> {
    if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
        return Err(CliError::usage(
            UsageKind::BadValue,
            format!("{flag} `{name}` must be a plain file name"),
        ));
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into())
}

fn load(c: &CorpusArgs) -> Result<Corpus, CliError> {
    Corpus::load(&c.embeddings, &c.metadata)
        .map_err(|e| CliError::failed(c.embeddings.display(), e))
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let file = match &cli.common.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let ctx = Ctx {
        seed: cli.common.seed.or(file.seed),
        out: cli.common.out.clone().unwrap_or_else(|| PathBuf::from(".")),
        file,
    };
    match &cli.command {
        Command::Synth(a) => synth(&ctx, a),
        Command::Validate(a) => validate(a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Occlude(a) => occlude(&ctx, a),
        Command::Report(a) => report(&ctx, a),
        Command::Delta(a) => delta(&ctx, a),
    }
}

fn synth(ctx: &Ctx, a: &SynthArgs) -> Result<(), CliError> {
    let mut cfg = ctx.file.synth.clone().unwrap_or_default();
    cfg.seed = ctx.require_seed()?;
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = a.$flag.clone() { cfg.$field = v; }
        )*};
    }
    set!(num_identities => num_identities, clothes_sets => clothes_sets_per_identity,
        images_per_set => images_per_clothes_set, dim => dim,
        identity_separation => identity_separation, clothes_offset => clothes_offset_scale,
        noise => noise_scale, train_identities => train_identities, dataset => dataset);
    if a.clothes_subspace_dim.is_some() {
        cfg.clothes_subspace_dim = a.clothes_subspace_dim;
    }
    cfg.validate()
        .map_err(|e| CliError::usage(UsageKind::BadValue, e.to_string()))?;
    let name = a.name.clone().unwrap_or_else(|| "synth".into());
    file_part(&name, "--name")?;
    let corpus = synth_corpus(&cfg).map_err(|e| CliError::failed("synth", e))?;
    let emb = ctx.out.join(format!("{name}.emb"));
    let meta = ctx.out.join(format!("{name}.jsonl"));
    fs::create_dir_all(&ctx.out).map_err(|e| CliError::failed(ctx.out.display(), e))?;
    corpus
        .save(&emb, &meta)
        .map_err(|e| CliError::failed(emb.display(), e))?;
    ctx.sidecar("synth", &name, Some(cfg.seed), &cfg)?;
    println!(
        "wrote {} and {} ({} records, D={}, seed {})",
        emb.display(),
        meta.display(),
        corpus.manifest.len(),
        cfg.dim,
        cfg.seed
    );
    Ok(())
}

fn validate(a: &CorpusArgs) -> Result<(), CliError> {
    let c = load(a)?;
    let report = validate_corpus(&c.manifest, &c.embeddings);
    println!("{}", report.summary());
    if report.is_clean() {
        Ok(())
    } else {
        Err(CliError::Failed {
            kind: "InvalidCorpus".into(),
            message: format!("{} failed validation", a.embeddings.display()),
        })
    }
}

fn eval(ctx: &Ctx, a: &EvalArgs) -> Result<(), CliError> {
    let section = ctx.file.eval.clone().unwrap_or_default();
    let mut corpora = match (&a.embeddings, &a.metadata) {
        (Some(emb), Some(meta)) => vec![CorpusEntry {
            tag: a.dataset.clone().unwrap_or_else(|| stem(meta)),
            embeddings: emb.clone(),
            metadata: meta.clone(),
            protocols: vec![ProtocolKind::PrccCc],
            condition: a.condition.clone(),
        }],
        _ => {
            if a.dataset.is_some() || a.condition.is_some() {
                return Err(CliError::usage(
                    UsageKind::MissingRequired,
                    "--dataset and --condition need --embeddings and --metadata",
                ));
            }
            section.corpora.clone()
        }
    };
    if corpora.is_empty() {
        return Err(CliError::usage(
            UsageKind::MissingRequired,
            "--embeddings and --metadata are required (or [eval] corpora in --config)",
        ));
    }
    if !a.protocol.is_empty() {
        corpora
            .iter_mut()
            .for_each(|c| c.protocols = a.protocol.clone());
    }
    let mut occlusions: Vec<OcclusionSpec> = if a.occlusion.is_empty() {
        section.occlusions.clone()
    } else {
        a.occlusion
            .iter()
            .map(|&coverage| OcclusionSpec {
                coverage,
                ..OcclusionSpec::default()
            })
            .collect()
    };
    if let Some(r) = a.region {
        occlusions.iter_mut().for_each(|o| o.region = r);
    }
    let seed = if occlusions.is_empty() {
        ctx.seed.unwrap_or(0)
    } else {
        ctx.require_seed()?
    };
    let config = RunConfig {
        model_tag: a
            .model_tag
            .clone()
            .or(section.model_tag.clone())
            .unwrap_or_else(|| "model".into()),
        output_dir: ctx.out.clone(),
        seed,
        corpora,
        occlusions,
        metric: a.metric.or(section.metric).unwrap_or_default(),
        ranks: match &a.ranks {
            r if !r.is_empty() => r.clone(),
            _ => section.ranks.clone().unwrap_or_else(default_ranks),
        },
        far_targets: match &a.far_targets {
            f if !f.is_empty() => f.clone(),
            _ => section
                .far_targets
                .clone()
                .unwrap_or_else(default_far_targets),
        },
        encoder: a.encoder.clone().or(section.encoder.clone()),
    };
    let outcome = run_benchmark(&config).map_err(|e| match e {
        ReportError::Config(m) => CliError::usage(UsageKind::BadValue, m),
        e => CliError::failed("eval", e),
    })?;
    let mut stem = format!(
        "{}.{}",
        config.model_tag,
        config
            .corpora
            .iter()
            .map(|c| c.tag.as_str())
            .collect::<Vec<_>>()
            .join("+")
    );
    if let Some(c) = &a.condition {
        stem.push('.');
        stem.push_str(c);
    }
    #[derive(Serialize)]
    struct EvalRecord<'a> {
        model_tag: &'a str,
        seed: u64,
        metric: String,
        ranks: &'a [usize],
        far_targets: &'a [f64],
        encoder: Option<&'a PathBuf>,
        corpora: &'a [CorpusEntry],
        occlusions: &'a [OcclusionSpec],
    }
    ctx.sidecar(
        "eval",
        &stem,
        Some(seed),
        &EvalRecord {
            model_tag: &config.model_tag,
            seed,
            metric: config.metric.to_string(),
            ranks: &config.ranks,
            far_targets: &config.far_targets,
            encoder: config.encoder.as_ref(),
            corpora: &config.corpora,
            occlusions: &config.occlusions,
        },
    )?;
    if !outcome.reports.is_empty() {
        print!("{}", emit_reports(&outcome.reports, TableFormat::Markdown));
    }
    for f in &outcome.failures {
        let mut at = f.dataset.clone();
        if let Some(p) = f.protocol {
            at.push('/');
            at.push_str(p.as_str());
        }
        if let Some(o) = &f.occlusion {
            at.push('.');
            at.push_str(o);
        }
        eprintln!("error[{}]: {at}: {}", f.kind, f.error);
    }
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed {
            kind: "EvaluationFailed".into(),
            message: format!(
                "{} evaluation(s) failed; see reports/{}/failures.csv",
                outcome.failures.len(),
                config.model_tag
            ),
        })
    }
}

fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = ctx.file.train.clone().unwrap_or_default();
    cfg.seed = ctx.require_seed()?;
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = a.$field { cfg.$field = v; }
        )*};
    }
    set!(
        margin,
        batch_identities,
        images_per_identity,
        learning_rate,
        weight_decay,
        max_steps,
        validation_protocol
    );
    cfg.validate()
        .map_err(|e| CliError::usage(UsageKind::BadValue, e.to_string()))?;
    let enc_section = ctx.file.encoder.clone().unwrap_or_default();
    let nl: Nonlinearity = a
        .nonlinearity
        .or(enc_section.nonlinearity)
        .unwrap_or_default();
    let random_init = a.random_init.or(enc_section.random_init);
    let name = a.name.clone().unwrap_or_else(|| "encoder".into());
    file_part(&name, "--name")?;

    let corpus = load(&a.corpus)?;
    let dim = corpus.embeddings.dim;
    let encoder = match random_init {
        Some(d) => ToyEncoder::random(dim, d, nl, cfg.seed),
        None => ToyEncoder::identity(dim, nl),
    };
    let outcome = train(&corpus, encoder, &cfg).map_err(|e| CliError::failed("train", e))?;
    let enc = ctx.write(format!("{name}.enc"), &outcome.encoder.to_bytes())?;
    let trace = format!("# seed={}\n{}", cfg.seed, trace_to_csv(&outcome));
    ctx.write(format!("{name}.trace.csv"), trace.as_bytes())?;

    #[derive(Serialize)]
    struct TrainRecord<'a> {
        embeddings: &'a Path,
        metadata: &'a Path,
        nonlinearity: Nonlinearity,
        random_init: Option<usize>,
        train: &'a reidbench_core::mining::TrainConfig,
    }
    ctx.sidecar(
        "train",
        &name,
        Some(cfg.seed),
        &TrainRecord {
            embeddings: &a.corpus.embeddings,
            metadata: &a.corpus.metadata,
            nonlinearity: nl,
            random_init,
            train: &cfg,
        },
    )?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    let last = outcome.eval_trace.last().map(|p| p.rank1);
    println!(
        "wrote {}; {} steps ({} per epoch); held-out rank-1 {} -> {} (best {})",
        enc.display(),
        outcome.loss_trace.len(),
        outcome.steps_per_epoch,
        fmt(outcome.initial_rank1()),
        fmt(last),
        fmt(outcome.best_rank1())
    );
    Ok(())
}

fn occlude(ctx: &Ctx, a: &OccludeArgs) -> Result<(), CliError> {
    let mut spec = ctx.file.occlusion.clone().unwrap_or_default();
    spec.seed = ctx.require_seed()?;
    if let Some(c) = a.level {
        spec.coverage = c;
    }
    if let Some(r) = a.region {
        spec.region = r;
    }
    if let Some(t) = a.tolerance {
        spec.tolerance = t;
    }
    spec.validate()
        .map_err(|e| CliError::usage(UsageKind::BadValue, e.to_string()))?;
    let name = a
        .name
        .clone()
        .unwrap_or_else(|| format!("{}.{}", stem(&a.corpus.metadata), spec.condition_label()));
    file_part(&name, "--name")?;

    let corpus = load(&a.corpus)?;
    let codec = RasterCodec::fit(&corpus.embeddings).map_err(|e| CliError::failed("occlude", e))?;
    let (occluded, records) =
        occlude_corpus(&corpus, &spec, &codec).map_err(|e| CliError::failed("occlude", e))?;
    let emb = ctx.out.join(format!("{name}.emb"));
    let meta = ctx.out.join(format!("{name}.jsonl"));
    fs::create_dir_all(&ctx.out).map_err(|e| CliError::failed(ctx.out.display(), e))?;
    occluded
        .save(&emb, &meta)
        .map_err(|e| CliError::failed(emb.display(), e))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &records {
        w.serialize(r)
            .map_err(|e| CliError::failed("occlusion manifest", e))?;
    }
    let mut manifest = format!("# seed={}\n", spec.seed).into_bytes();
    manifest.extend(
        w.into_inner()
            .map_err(|e| CliError::failed("occlusion manifest", e.to_string()))?,
    );
    ctx.write(format!("{name}.occlusion.csv"), &manifest)?;
    ctx.sidecar("occlude", &name, Some(spec.seed), &spec)?;
    let mean = records.iter().map(|r| r.coverage).sum::<f64>() / records.len().max(1) as f64;
    println!(
        "wrote {} ({} images, condition {}, mean coverage {mean:.4})",
        emb.display(),
        records.len(),
        spec.condition_label()
    );
    Ok(())
}

/// Report files found under `paths`, with the seeds named in their
/// `# seed=` comment lines.
struct Collected {
    reports: Vec<MetricReport>,
    seeds: BTreeSet<String>,
}

fn is_report_csv(text: &str) -> bool {
    text.lines()
        .find(|l| !l.starts_with('#'))
        .is_some_and(|l| l.trim_end() == CSV_HEADER.join(","))
}

fn seeds_in(text: &str, seeds: &mut BTreeSet<String>) {
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        for tok in line.trim_start_matches('#').split_whitespace() {
            if let Some(s) = tok.strip_prefix("seed=") {
                seeds.insert(s.to_string());
            }
        }
    }
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::failed(dir.display(), e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::failed(dir.display(), e))?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "csv") {
            out.push(p);
        }
    }
    Ok(())
}

fn collect(paths: &[PathBuf]) -> Result<Collected, CliError> {
    let mut reports = Vec::new();
    let mut seeds = BTreeSet::new();
    for p in paths {
        let explicit = !p.is_dir();
        let files = if explicit {
            vec![p.clone()]
        } else {
            let mut v = Vec::new();
            walk(p, &mut v)?;
            v
        };
        for f in files {
            let text = fs::read_to_string(&f).map_err(|e| CliError::failed(f.display(), e))?;
            if f.extension().is_some_and(|e| e == "jsonl") {
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    reports.push(
                        MetricReport::from_json_line(line)
                            .map_err(|e| CliError::failed(f.display(), e))?,
                    );
                }
                continue;
            }
            if !is_report_csv(&text) {
                if explicit {
                    return Err(CliError::Failed {
                        kind: "NotAReport".into(),
                        message: format!("{} is not a metric report CSV", f.display()),
                    });
                }
                continue;
            }
            seeds_in(&text, &mut seeds);
            reports.extend(
                MetricReport::parse_csv(&text).map_err(|e| CliError::failed(f.display(), e))?,
            );
        }
    }
    let mut seen = BTreeSet::new();
    reports.retain(|r| seen.insert((r.model_tag.clone(), r.key())));
    reports.sort_by(|a, b| (&a.model_tag, a.key()).cmp(&(&b.model_tag, b.key())));
    if reports.is_empty() {
        return Err(CliError::Failed {
            kind: "NoReports".into(),
            message: "no metric reports found".into(),
        });
    }
    Ok(Collected { reports, seeds })
}

fn seeds_line(seeds: &BTreeSet<String>) -> String {
    let list: Vec<&str> = seeds.iter().map(String::as_str).collect();
    format!("seeds={}", list.join(","))
}

/// `heavy`, `0.3`, `heavy.top_half` or `0.3.bottom_half`.
fn parse_condition(label: &str) -> Option<(Coverage, Region)> {
    for region in [Region::TopHalf, Region::BottomHalf] {
        if let Some(level) = label.strip_suffix(&format!(".{region}")) {
            return level.parse().ok().map(|c| (c, region));
        }
    }
    label.parse().ok().map(|c| (c, Region::Whole))
}

fn curves(reports: &[MetricReport]) -> BTreeMap<String, Vec<OcclusionCurve>> {
    let mut out: BTreeMap<String, Vec<OcclusionCurve>> = BTreeMap::new();
    for clean in reports.iter().filter(|r| r.occlusion_condition.is_none()) {
        let mut by_region: BTreeMap<Region, Vec<(f64, &MetricReport)>> = BTreeMap::new();
        for r in reports {
            if r.model_tag != clean.model_tag
                || r.dataset != clean.dataset
                || r.protocol != clean.protocol
            {
                continue;
            }
            if let Some((cov, region)) = r.occlusion_condition.as_deref().and_then(parse_condition)
            {
                by_region
                    .entry(region)
                    .or_default()
                    .push((cov.fraction(), r));
            }
        }
        for (region, points) in by_region {
            out.entry(clean.model_tag.clone())
                .or_default()
                .push(occlusion_curve(clean, region.as_str(), &points));
        }
    }
    out
}

fn report(ctx: &Ctx, a: &ReportArgs) -> Result<(), CliError> {
    let c = collect(&a.reports)?;
    let format = a.format.unwrap_or(TableFormat::Markdown);
    let body = emit_reports(&c.reports, format);
    let (name, header) = match format {
        TableFormat::Csv => ("tables.csv", format!("# {}\n", seeds_line(&c.seeds))),
        TableFormat::Markdown => (
            "tables.md",
            format!("<!-- {} -->\n\n", seeds_line(&c.seeds)),
        ),
    };
    ctx.write(name, format!("{header}{body}").as_bytes())?;
    for (model, list) in curves(&c.reports) {
        let text = format!(
            "# {} model_tag={model}\n{}",
            seeds_line(&c.seeds),
            OcclusionCurve::to_csv(&list)
        );
        ctx.write(format!("curves/{model}.csv"), text.as_bytes())?;
        for curve in list.iter().filter(|c| c.any_flagged()) {
            eprintln!(
                "note: {model} {} {} {}: relative rank-1 fell by more than 10%",
                curve.dataset, curve.protocol, curve.region
            );
        }
    }
    print!("{body}");
    Ok(())
}

fn side(
    paths: &Path,
    tag: &Option<String>,
    flag: &str,
) -> Result<(String, Vec<MetricReport>, BTreeSet<String>), CliError> {
    let c = collect(std::slice::from_ref(&paths.to_path_buf()))?;
    let models: BTreeSet<&str> = c.reports.iter().map(|r| r.model_tag.as_str()).collect();
    let tag = match tag {
        Some(t) => t.clone(),
        None if models.len() == 1 => models.first().unwrap().to_string(),
        None => {
            return Err(CliError::usage(
                UsageKind::MissingRequired,
                format!("{flag} holds models {models:?}; pass {flag}-tag"),
            ))
        }
    };
    let reports: Vec<MetricReport> = c
        .reports
        .into_iter()
        .filter(|r| r.model_tag == tag)
        .collect();
    if reports.is_empty() {
        return Err(CliError::Failed {
            kind: "NoReports".into(),
            message: format!("no reports for model `{tag}` under {}", paths.display()),
        });
    }
    Ok((tag, reports, c.seeds))
}

fn delta(ctx: &Ctx, a: &DeltaArgs) -> Result<(), CliError> {
    let (lt, left, mut seeds) = side(&a.left, &a.left_tag, "--left")?;
    let (rt, right, rs) = side(&a.right, &a.right_tag, "--right")?;
    seeds.extend(rs);
    file_part(&lt, "--left-tag")?;
    file_part(&rt, "--right-tag")?;
    let table = delta_table(&lt, &left, &rt, &right).map_err(|e| CliError::failed("delta", e))?;
    let md = emit_delta(&table, TableFormat::Markdown);
    let csv = emit_delta(&table, TableFormat::Csv);
    let seeds = seeds_line(&seeds);
    ctx.write(
        format!("deltas/{lt}-{rt}.md"),
        format!("<!-- {seeds} -->\n\n{md}").as_bytes(),
    )?;
    ctx.write(
        format!("deltas/{lt}-{rt}.csv"),
        format!("# {seeds}\n{csv}").as_bytes(),
    )?;
    match a.format.unwrap_or(TableFormat::Markdown) {
        TableFormat::Markdown => print!("{md}"),
        TableFormat::Csv => print!("{csv}"),
    }
    Ok(())
}
