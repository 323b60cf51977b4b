use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::MiningError;
use crate::corpus::{decode_container, encode_container, CorpusError, Embeddings, ENCODER_MAGIC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    #[default]
    Identity,
    Tanh,
}

impl Nonlinearity {
    fn code(self) -> f32 {
        match self {
            Nonlinearity::Identity => 0.0,
            Nonlinearity::Tanh => 1.0,
        }
    }

    fn from_code(c: f32) -> Option<Self> {
        match c {
            0.0 => Some(Nonlinearity::Identity),
            1.0 => Some(Nonlinearity::Tanh),
            _ => None,
        }
    }
}

impl Nonlinearity {
    pub fn as_str(self) -> &'static str {
        match self {
            Nonlinearity::Identity => "identity",
            Nonlinearity::Tanh => "tanh",
        }
    }
}

impl std::fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Nonlinearity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(Nonlinearity::Identity),
            "tanh" => Ok(Nonlinearity::Tanh),
            other => Err(format!("unknown nonlinearity `{other}` (identity, tanh)")),
        }
    }
}

/// `y = f(x W + b)` with `W` stored row-major as d_in × d_out.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    pub d_in: usize,
    pub d_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub nonlinearity: Nonlinearity,
}

impl ToyEncoder {
    /// Square identity map.
    pub fn identity(dim: usize, nonlinearity: Nonlinearity) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        Self {
            d_in: dim,
            d_out: dim,
            weights,
            bias: vec![0.0; dim],
            nonlinearity,
        }
    }

    /// Gaussian weights with variance 1/d_in, zero bias.
    pub fn random(d_in: usize, d_out: usize, nonlinearity: Nonlinearity, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = 1.0 / (d_in as f64).sqrt();
        let weights = (0..d_in * d_out)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                s * v
            })
            .collect();
        Self {
            d_in,
            d_out,
            weights,
            bias: vec![0.0; d_out],
            nonlinearity,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Weights then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), MiningError> {
        if params.len() != self.param_count() {
            return Err(MiningError::ShapeMismatch(format!(
                "{} params for an encoder with {}",
                params.len(),
                self.param_count()
            )));
        }
        let (w, b) = params.split_at(self.weights.len());
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
        Ok(())
    }

    /// Pre-activations for `n` row-major inputs.
    fn affine(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len() / self.d_in;
        let mut z = Vec::with_capacity(n * self.d_out);
        for r in 0..n {
            let xr = &x[r * self.d_in..(r + 1) * self.d_in];
            z.extend_from_slice(&self.bias);
            let zr = &mut z[r * self.d_out..];
            for (i, &xi) in xr.iter().enumerate() {
                let w = &self.weights[i * self.d_out..(i + 1) * self.d_out];
                for (zo, &wo) in zr.iter_mut().zip(w) {
                    *zo += xi * wo;
                }
            }
        }
        z
    }

    fn check_input(&self, x: &[f64]) -> Result<(), MiningError> {
        if !x.len().is_multiple_of(self.d_in) {
            return Err(MiningError::ShapeMismatch(format!(
                "input length {} is not a multiple of {}",
                x.len(),
                self.d_in
            )));
        }
        Ok(())
    }

    /// Encodes row-major inputs; returns (outputs, pre-activations).
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), MiningError> {
        self.check_input(x)?;
        let z = self.affine(x);
        let y = match self.nonlinearity {
            Nonlinearity::Identity => z.clone(),
            Nonlinearity::Tanh => z.iter().map(|v| v.tanh()).collect(),
        };
        Ok((y, z))
    }

    /// Parameter gradient (weights then bias) given dL/dy.
    pub fn backward(&self, x: &[f64], z: &[f64], grad_y: &[f64]) -> Result<Vec<f64>, MiningError> {
        self.check_input(x)?;
        let n = x.len() / self.d_in;
        if z.len() != n * self.d_out || grad_y.len() != z.len() {
            return Err(MiningError::ShapeMismatch("backward buffers".into()));
        }
        let dz: Vec<f64> = match self.nonlinearity {
            Nonlinearity::Identity => grad_y.to_vec(),
            Nonlinearity::Tanh => z
                .iter()
                .zip(grad_y)
                .map(|(&zv, &g)| {
                    let t = zv.tanh();
                    g * (1.0 - t * t)
                })
                .collect(),
        };
        let mut grad = vec![0.0; self.param_count()];
        let (gw, gb) = grad.split_at_mut(self.weights.len());
        for r in 0..n {
            let xr = &x[r * self.d_in..(r + 1) * self.d_in];
            let dr = &dz[r * self.d_out..(r + 1) * self.d_out];
            for (i, &xi) in xr.iter().enumerate() {
                for (g, &d) in gw[i * self.d_out..(i + 1) * self.d_out].iter_mut().zip(dr) {
                    *g += xi * d;
                }
            }
            for (g, &d) in gb.iter_mut().zip(dr) {
                *g += d;
            }
        }
        Ok(grad)
    }

    /// ENC1 container: rows 0..d_in hold `W`, row d_in the bias, row
    /// d_in+1 the nonlinearity code in column 0. Values are stored as f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut data: Vec<f32> = self.weights.iter().map(|&v| v as f32).collect();
        data.extend(self.bias.iter().map(|&v| v as f32));
        let mut tail = vec![0.0f32; self.d_out];
        tail[0] = self.nonlinearity.code();
        data.extend(tail);
        let m = Embeddings::new(self.d_in + 2, self.d_out, data).expect("consistent shape");
        encode_container(ENCODER_MAGIC, &m)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MiningError> {
        let m = decode_container(ENCODER_MAGIC, bytes)?;
        if m.rows < 3 || m.dim == 0 {
            return Err(MiningError::ShapeMismatch(format!(
                "encoder container has {} rows of width {}",
                m.rows, m.dim
            )));
        }
        let d_in = m.rows - 2;
        let d_out = m.dim;
        let code = m.row(d_in + 1)[0];
        let nonlinearity = Nonlinearity::from_code(code).ok_or_else(|| {
            MiningError::ShapeMismatch(format!("unknown nonlinearity code {code}"))
        })?;
        let to64 = |s: &[f32]| s.iter().map(|&v| v as f64).collect::<Vec<_>>();
        let enc = Self {
            d_in,
            d_out,
            weights: to64(&m.data[..d_in * d_out]),
            bias: to64(m.row(d_in)),
            nonlinearity,
        };
        if enc.params().iter().any(|v| !v.is_finite()) {
            return Err(MiningError::ShapeMismatch(
                "non-finite encoder parameter".into(),
            ));
        }
        Ok(enc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MiningError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| CorpusError::io(path, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MiningError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| CorpusError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
