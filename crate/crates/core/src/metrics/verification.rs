use serde::{Deserialize, Serialize};

use super::MetricsError;

/// One TAR@FAR operating point. Scores are distances, so a pair is
/// accepted when its distance is strictly below `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TarPoint {
    pub far_target: f64,
    pub tar: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub threshold: f64,
    /// Fraction of impostor scores below `threshold`; never above the target.
    #[serde(deserialize_with = "null_as_nan")]
    pub empirical_far: f64,
    /// False when the target is below 1/len(impostors): the strictest
    /// threshold is reported instead (empirical FAR 0).
    pub feasible: bool,
}

/// JSON has no NaN or infinity; serde_json writes them as `null`.
fn null_as_nan<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

fn sorted(scores: &[f64], which: &'static str) -> Result<Vec<f64>, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyScoreList(which));
    }
    if let Some(row) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteInput { which, row });
    }
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Number of entries of an ascending slice strictly below `t`.
fn count_below(sorted: &[f64], t: f64) -> usize {
    sorted.partition_point(|&s| s < t)
}

/// Largest number of accepted impostors allowed at `far` out of `n`.
fn allowed_false_accepts(far: f64, n: usize) -> usize {
    let mut m = (far * n as f64).floor().max(0.0) as usize;
    while m > 0 && m as f64 / n as f64 > far {
        m -= 1;
    }
    while m < n && (m + 1) as f64 / n as f64 <= far {
        m += 1;
    }
    m
}

/// True accept rate at each FAR target using conservative empirical
/// thresholds: the largest threshold whose impostor acceptance fraction
/// does not exceed the target.
pub fn tar_at_far(
    genuine: &[f64],
    impostor: &[f64],
    far_targets: &[f64],
) -> Result<Vec<TarPoint>, MetricsError> {
    let genuine = sorted(genuine, "genuine")?;
    let impostor = sorted(impostor, "impostor")?;
    let n = impostor.len();
    Ok(far_targets
        .iter()
        .map(|&far| {
            let m = allowed_false_accepts(far, n);
            // Any threshold up to the (m+1)-th smallest impostor accepts at
            // most m impostors; nothing larger does.
            let threshold = if m >= n { f64::INFINITY } else { impostor[m] };
            let accepted = count_below(&impostor, threshold);
            TarPoint {
                far_target: far,
                tar: count_below(&genuine, threshold) as f64 / genuine.len() as f64,
                threshold,
                empirical_far: accepted as f64 / n as f64,
                feasible: m > 0,
            }
        })
        .collect())
}
