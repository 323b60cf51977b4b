use super::MetricsError;
use crate::corpus::Embeddings;

/// Mean of the L2-normalized members, renormalized to unit length.
pub fn template_vectors(members: &[&[f32]]) -> Result<Vec<f32>, MetricsError> {
    let first = members.first().ok_or(MetricsError::EmptyGroup(0))?;
    let dim = first.len();
    let mut acc = vec![0.0f64; dim];
    for m in members {
        if m.len() != dim {
            return Err(MetricsError::DimMismatch(format!(
                "template member of length {} in a D={dim} group",
                m.len()
            )));
        }
        let n = m
            .iter()
            .map(|&x| (x as f64) * (x as f64))
            .sum::<f64>()
            .sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(MetricsError::ZeroVector);
        }
        for (a, &x) in acc.iter_mut().zip(m.iter()) {
            *a += x as f64 / n;
        }
    }
    let count = members.len() as f64;
    acc.iter_mut().for_each(|a| *a /= count);
    let n = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n < 1e-12 {
        return Err(MetricsError::ZeroVector);
    }
    Ok(acc.into_iter().map(|a| (a / n) as f32).collect())
}

/// One template per group of row indices into `embeddings`.
pub fn template_embeddings(
    embeddings: &Embeddings,
    groups: &[Vec<usize>],
) -> Result<Embeddings, MetricsError> {
    let mut data = Vec::with_capacity(groups.len() * embeddings.dim);
    for (g, members) in groups.iter().enumerate() {
        if members.is_empty() {
            return Err(MetricsError::EmptyGroup(g));
        }
        let rows: Vec<&[f32]> = members.iter().map(|&i| embeddings.row(i)).collect();
        data.extend(template_vectors(&rows)?);
    }
    Ok(Embeddings::new(groups.len(), embeddings.dim, data)?)
}
