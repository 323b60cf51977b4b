use super::{MiningError, TrainConfig};

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One Adam update. `step` counts from 1. Weight decay is added to the
/// gradient as `weight_decay * param` before the moment updates.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    config: &TrainConfig,
    step: u64,
) -> Result<(), MiningError> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(MiningError::ShapeMismatch(format!(
            "{n} params, {} grads, {}/{} moments",
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if step == 0 {
        return Err(MiningError::InvalidConfig("adam step counts from 1".into()));
    }
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let t = step.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..n {
        let g = grads[i] + config.weight_decay * params[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut p = vec![1.0, -2.0, 3.5];
        let mut s = AdamState::new(3);
        for t in 1..=10 {
            adam_step(&mut p, &[0.0; 3], &mut s, &cfg, t).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn constant_gradient_moves_by_learning_rate() {
        let cfg = TrainConfig {
            weight_decay: 0.0,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let mut p = vec![0.0, 0.0];
        let mut s = AdamState::new(2);
        let mut last = p.clone();
        for t in 1..=5000 {
            last.copy_from_slice(&p);
            adam_step(&mut p, &[2.5, -0.01], &mut s, &cfg, t).unwrap();
        }
        assert!(((last[0] - p[0]) - 1e-3).abs() < 1e-8);
        assert!(((p[1] - last[1]) - 1e-3).abs() < 1e-6);
    }

    /// Independent transcription of the Adam recurrences with an explicit
    /// running product for the bias corrections.
    fn reference(p0: &[f64], grads: &[Vec<f64>], cfg: &TrainConfig) -> Vec<f64> {
        let mut p = p0.to_vec();
        let mut m = vec![0.0; p.len()];
        let mut v = vec![0.0; p.len()];
        let (mut b1t, mut b2t) = (1.0, 1.0);
        for g in grads {
            b1t *= cfg.adam_beta1;
            b2t *= cfg.adam_beta2;
            for i in 0..p.len() {
                let gi = g[i] + cfg.weight_decay * p[i];
                m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * gi;
                v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * gi * gi;
                let mh = m[i] / (1.0 - b1t);
                let vh = v[i] / (1.0 - b2t);
                p[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_epsilon);
            }
        }
        p
    }

    #[test]
    fn matches_reference_over_100_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            weight_decay: 1e-3,
            ..TrainConfig::default()
        };
        let p0: Vec<f64> = (0..16).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let grads: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..16).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let mut p = p0.clone();
        let mut s = AdamState::new(16);
        for (t, g) in grads.iter().enumerate() {
            adam_step(&mut p, g, &mut s, &cfg, t as u64 + 1).unwrap();
        }
        for (a, b) in p.iter().zip(reference(&p0, &grads, &cfg)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::new(2);
        assert!(matches!(
            adam_step(&mut [0.0; 2], &[0.0; 3], &mut s, &TrainConfig::default(), 1),
            Err(MiningError::ShapeMismatch(_))
        ));
    }
}
