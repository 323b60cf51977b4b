use super::{
    apply_protocol, cmc, mean_average_precision, pairwise_distances, tar_at_far, template_vectors,
    EvalEntry, EvalProtocol, Metric, MetricReport, MetricsError,
};
use crate::corpus::{Corpus, Embeddings};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub metric: Metric,
    /// L2-normalize every vector before comparison. Templates are always
    /// unit length.
    pub normalize: bool,
    pub model_tag: String,
    pub occlusion_condition: Option<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            metric: Metric::Euclidean,
            normalize: true,
            model_tag: "model".to_string(),
            occlusion_condition: None,
        }
    }
}

fn unit(v: &[f32]) -> Result<Vec<f32>, MetricsError> {
    let n = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    Ok(v.iter().map(|&x| (x as f64 / n) as f32).collect())
}

fn materialize(
    embeddings: &Embeddings,
    entries: &[EvalEntry],
    templated: bool,
    normalize: bool,
) -> Result<Embeddings, MetricsError> {
    let mut data = Vec::with_capacity(entries.len() * embeddings.dim);
    for e in entries {
        if templated {
            let rows: Vec<&[f32]> = e.members.iter().map(|&i| embeddings.row(i)).collect();
            data.extend(template_vectors(&rows)?);
        } else {
            let row = embeddings.row(e.members[0]);
            if normalize {
                data.extend(unit(row)?);
            } else {
                data.extend_from_slice(row);
            }
        }
    }
    Ok(Embeddings::new(entries.len(), embeddings.dim, data)?)
}

/// Runs `protocol` over a corpus: masks, optional templating, distances,
/// CMC, mAP and TAR@FAR.
pub fn evaluate(
    corpus: &Corpus,
    protocol: &EvalProtocol,
    options: &EvalOptions,
) -> Result<MetricReport, MetricsError> {
    let view = apply_protocol(&corpus.manifest, protocol)?;
    for e in view.queries.iter().chain(&view.gallery) {
        for &i in &e.members {
            if corpus.embeddings.row(i).iter().any(|v| !v.is_finite()) {
                return Err(MetricsError::NonFiniteInput {
                    which: "record",
                    row: i,
                });
            }
        }
    }

    let queries = materialize(
        &corpus.embeddings,
        &view.queries,
        protocol.template_queries,
        options.normalize,
    )?;
    let gallery = materialize(
        &corpus.embeddings,
        &view.gallery,
        protocol.template_gallery,
        options.normalize,
    )?;
    let dist = pairwise_distances(&queries, &gallery, options.metric)?;

    let curve = cmc(&dist, &view.matches, &view.valid, &protocol.ranks)?;
    let map_score = mean_average_precision(&dist, &view.matches, &view.valid)?;

    let tar = if protocol.far_targets.is_empty() {
        Vec::new()
    } else {
        let mut genuine = Vec::new();
        let mut impostor = Vec::new();
        for (i, &d) in dist.values.iter().enumerate() {
            if !view.valid.bits[i] {
                continue;
            }
            if view.matches.bits[i] {
                genuine.push(d);
            } else {
                impostor.push(d);
            }
        }
        tar_at_far(&genuine, &impostor, &protocol.far_targets)?
    };

    Ok(MetricReport {
        model_tag: options.model_tag.clone(),
        dataset: corpus
            .manifest
            .dataset_tags
            .iter()
            .cloned()
            .collect::<Vec<_>>()
            .join("+"),
        protocol: protocol.kind,
        rank_accuracies: curve.accuracies,
        map_score,
        tar_at_far: tar,
        num_queries_evaluated: curve.evaluated,
        num_queries_skipped: view.skipped.len(),
        occlusion_condition: options.occlusion_condition.clone(),
    })
}
