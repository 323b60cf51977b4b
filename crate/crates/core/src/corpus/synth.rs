//! Gaussian-cluster stand-in corpora with per-outfit offsets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, EmbeddingRecord, Embeddings, Manifest, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_identities: usize,
    pub clothes_sets_per_identity: usize,
    pub images_per_clothes_set: usize,
    pub dim: usize,
    /// Expected distance between two identity centers.
    pub identity_separation: f64,
    /// Exact norm of each outfit offset.
    pub clothes_offset_scale: f64,
    /// Expected norm of the per-image noise vector.
    pub noise_scale: f64,
    pub seed: u64,
    /// The first `train_identities` identities go entirely to the train
    /// split; the rest are divided between query and gallery.
    pub train_identities: usize,
    /// Outfit offsets are confined to a random subspace of this dimension
    /// shared by all identities. `None` uses the whole space.
    pub clothes_subspace_dim: Option<usize>,
    pub dataset: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_identities: 20,
            clothes_sets_per_identity: 2,
            images_per_clothes_set: 4,
            dim: 32,
            identity_separation: 1.0,
            clothes_offset_scale: 0.5,
            noise_scale: 0.2,
            seed: 0,
            train_identities: 0,
            clothes_subspace_dim: None,
            dataset: "synthetic".to_string(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::InvalidConfig(m.to_string()));
        if self.num_identities == 0 {
            return bad("num_identities must be positive");
        }
        if self.clothes_sets_per_identity < 2 {
            return bad("clothes_sets_per_identity must be at least 2");
        }
        if self.images_per_clothes_set == 0 {
            return bad("images_per_clothes_set must be positive");
        }
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if !(self.identity_separation > 0.0 && self.identity_separation.is_finite()) {
            return bad("identity_separation must be a positive finite number");
        }
        if !(self.clothes_offset_scale >= 0.0 && self.clothes_offset_scale.is_finite()) {
            return bad("clothes_offset_scale must be non-negative");
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad("noise_scale must be non-negative");
        }
        if self.train_identities > self.num_identities {
            return bad("train_identities exceeds num_identities");
        }
        if let Some(k) = self.clothes_subspace_dim {
            if k == 0 || k > self.dim {
                return bad("clothes_subspace_dim must lie in 1..=dim");
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Orthonormal basis for a random `k`-dimensional subspace of R^dim.
fn random_basis(rng: &mut ChaCha8Rng, dim: usize, k: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v = gaussian(rng, dim);
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        if normalize(&mut v) > 1e-6 {
            basis.push(v);
        }
    }
    basis
}

fn split_for(config: &SynthConfig, identity: usize, clothes: usize, image: usize) -> Split {
    if identity < config.train_identities {
        Split::Train
    } else if config.images_per_clothes_set == 1 {
        if clothes == 0 {
            Split::Query
        } else {
            Split::Gallery
        }
    } else if image.is_multiple_of(2) {
        Split::Query
    } else {
        Split::Gallery
    }
}

/// Generates a corpus. Identical configs give bit-identical output.
///
/// Each identity gets a Gaussian center, each (identity, outfit) pair a
/// random offset of norm `clothes_offset_scale`, and each image isotropic
/// noise. Outfits double as media groups; cameras alternate every two
/// images so same-outfit cross-camera matches exist.
pub fn synth_corpus(config: &SynthConfig) -> Result<Corpus, CorpusError> {
    config.validate()?;
    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let subspace = config
        .clothes_subspace_dim
        .map(|k| random_basis(&mut rng, dim, k));

    let center_scale = config.identity_separation / (2.0 * dim as f64).sqrt();
    let noise_scale = config.noise_scale / (dim as f64).sqrt();

    let total =
        config.num_identities * config.clothes_sets_per_identity * config.images_per_clothes_set;
    let mut records = Vec::with_capacity(total);
    let mut data = Vec::with_capacity(total * dim);

    for identity in 0..config.num_identities {
        let center: Vec<f64> = gaussian(&mut rng, dim)
            .into_iter()
            .map(|z| z * center_scale)
            .collect();
        let label = format!("id{identity:04}");
        for clothes in 0..config.clothes_sets_per_identity {
            let mut offset = match &subspace {
                Some(basis) => {
                    let coeffs = gaussian(&mut rng, basis.len());
                    let mut v = vec![0.0; dim];
                    for (c, b) in coeffs.iter().zip(basis) {
                        v.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
                    }
                    v
                }
                None => gaussian(&mut rng, dim),
            };
            normalize(&mut offset);
            offset
                .iter_mut()
                .for_each(|x| *x *= config.clothes_offset_scale);
            let outfit = format!("{label}_c{clothes}");
            for image in 0..config.images_per_clothes_set {
                let noise = gaussian(&mut rng, dim);
                for d in 0..dim {
                    data.push((center[d] + offset[d] + noise[d] * noise_scale) as f32);
                }
                records.push(EmbeddingRecord {
                    record_id: records.len() as u64,
                    identity: label.clone(),
                    media_id: outfit.clone(),
                    camera_id: format!("cam{}", (image / 2) % 2),
                    clothes_id: outfit.clone(),
                    dataset: config.dataset.clone(),
                    split: split_for(config, identity, clothes, image),
                });
            }
        }
    }

    let embeddings = Embeddings::new(records.len(), dim, data)?;
    Corpus::new(Manifest::new(records, dim), embeddings)
}
