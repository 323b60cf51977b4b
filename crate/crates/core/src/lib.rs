//! Long-term person re-identification benchmarking toolkit.
//!
//! - [`corpus`]: embedding/metadata files, validation, synthetic corpora,
//!   KS / CCD dataset composition.
//! - [`metrics`]: distances, evaluation protocols, CMC, mAP, TAR@FAR.
//! - [`mining`]: P×K sampling, triplet loss with hardest violating
//!   negatives, Adam, toy-encoder training.
//! - [`imageops`]: PPM rasters, patch occlusion, training augmentations.
//! - [`report`]: benchmark runs, ablation deltas, occlusion curves, tables.

pub mod corpus;
pub mod imageops;
pub mod metrics;
pub mod mining;
pub mod report;

/// Variant name of an error, looking through the transparent `Corpus(..)`,
/// `Metrics(..)`, `Image(..)` and `Mining(..)` wrappers: `BadMagic`,
/// `NoEvaluableQueries`.
pub fn error_kind(err: &impl std::fmt::Debug) -> String {
    let text = format!("{err:?}");
    let mut s = text.as_str();
    loop {
        let end = s
            .find(|c: char| !(c.is_alphanumeric() || c == '_'))
            .unwrap_or(s.len());
        let (name, rest) = s.split_at(end);
        if matches!(name, "Corpus" | "Metrics" | "Image" | "Mining" | "Report")
            && rest.starts_with('(')
        {
            s = &rest[1..];
            continue;
        }
        return name.to_string();
    }
}
