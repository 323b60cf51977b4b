use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{DistanceMatrix, Mask, MetricsError};

#[derive(Debug, Clone, PartialEq)]
pub struct CmcResult {
    pub accuracies: BTreeMap<usize, f64>,
    pub evaluated: usize,
}

fn check_shapes(dist: &DistanceMatrix, masks: [&Mask; 2]) -> Result<(), MetricsError> {
    for m in masks {
        if (m.rows, m.cols) != (dist.rows, dist.cols) {
            return Err(MetricsError::MaskShape {
                mask: (m.rows, m.cols),
                dist: (dist.rows, dist.cols),
            });
        }
    }
    Ok(())
}

/// Valid gallery indices for one query, by ascending distance with ties
/// broken by ascending gallery index.
fn ranked(row: &[f64], valid: &[bool]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).filter(|&g| valid[g]).collect();
    order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    order
}

/// 1-based position of the first match in the ranked valid list.
fn first_match(dist: &DistanceMatrix, matches: &Mask, valid: &Mask, q: usize) -> Option<usize> {
    let m = matches.row(q);
    ranked(dist.row(q), valid.row(q))
        .iter()
        .position(|&g| m[g])
        .map(|p| p + 1)
}

fn average_precision(dist: &DistanceMatrix, matches: &Mask, valid: &Mask, q: usize) -> Option<f64> {
    let m = matches.row(q);
    let v = valid.row(q);
    let relevant = (0..dist.cols).filter(|&g| m[g] && v[g]).count();
    if relevant == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &g) in ranked(dist.row(q), v).iter().enumerate() {
        if m[g] {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    Some(sum / relevant as f64)
}

/// Cumulative match characteristic at each requested rank. Queries without
/// any valid match are left out of the denominator.
pub fn cmc(
    dist: &DistanceMatrix,
    matches: &Mask,
    valid: &Mask,
    ranks: &[usize],
) -> Result<CmcResult, MetricsError> {
    check_shapes(dist, [matches, valid])?;
    let positions: Vec<Option<usize>> = (0..dist.rows)
        .into_par_iter()
        .map(|q| first_match(dist, matches, valid, q))
        .collect();
    let found: Vec<usize> = positions.into_iter().flatten().collect();
    if found.is_empty() {
        return Err(MetricsError::NoEvaluableQueries);
    }
    let n = found.len() as f64;
    let accuracies = ranks
        .iter()
        .map(|&k| (k, found.iter().filter(|&&p| p <= k).count() as f64 / n))
        .collect();
    Ok(CmcResult {
        accuracies,
        evaluated: found.len(),
    })
}

/// Mean over evaluable queries of (1/R) Σ precision@r at each relevant rank r.
pub fn mean_average_precision(
    dist: &DistanceMatrix,
    matches: &Mask,
    valid: &Mask,
) -> Result<f64, MetricsError> {
    check_shapes(dist, [matches, valid])?;
    let aps: Vec<Option<f64>> = (0..dist.rows)
        .into_par_iter()
        .map(|q| average_precision(dist, matches, valid, q))
        .collect();
    let aps: Vec<f64> = aps.into_iter().flatten().collect();
    if aps.is_empty() {
        return Err(MetricsError::NoEvaluableQueries);
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}
