use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::triplet::selection_gradient;
use super::{
    adam_step, sample_batch, triplet_loss, AdamState, IdentityIndex, MiningError, ToyEncoder,
    TrainConfig, TripletBatch,
};
use crate::corpus::{Corpus, Embeddings, Manifest, Split};
use crate::metrics::{evaluate, EvalOptions, EvalProtocol};

/// One optimisation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub active_count: usize,
    /// Set on steps that close an epoch (and on the final step).
    pub val_rank1: Option<f64>,
}

/// Validation rank-1 after `step` updates; step 0 is the initial encoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    pub epoch: usize,
    pub rank1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub encoder: ToyEncoder,
    pub loss_trace: Vec<TraceRow>,
    pub eval_trace: Vec<EvalPoint>,
    pub steps_per_epoch: usize,
}

impl TrainOutcome {
    pub fn initial_rank1(&self) -> Option<f64> {
        self.eval_trace.first().map(|p| p.rank1)
    }

    pub fn best_rank1(&self) -> Option<f64> {
        self.eval_trace.iter().map(|p| p.rank1).reduce(f64::max)
    }
}

/// Runs every row of the corpus through `encoder`.
pub fn encode_corpus(encoder: &ToyEncoder, corpus: &Corpus) -> Result<Corpus, MiningError> {
    let e = &corpus.embeddings;
    if e.dim != encoder.d_in {
        return Err(MiningError::ShapeMismatch(format!(
            "corpus dim {} vs encoder input {}",
            e.dim, encoder.d_in
        )));
    }
    let rows: Vec<Vec<f32>> = (0..e.rows)
        .into_par_iter()
        .map(|i| {
            let x: Vec<f64> = e.row(i).iter().map(|&v| v as f64).collect();
            let (y, _) = encoder.forward(&x).expect("row has d_in values");
            y.into_iter().map(|v| v as f32).collect()
        })
        .collect();
    let data = rows.concat();
    let embeddings = Embeddings::new(e.rows, encoder.d_out, data)?;
    let mut manifest = Manifest::new(corpus.manifest.records.clone(), encoder.d_out);
    manifest.protocol_hint = corpus.manifest.protocol_hint;
    Ok(Corpus::new(manifest, embeddings)?)
}

fn validation_rank1(
    encoder: &ToyEncoder,
    validation: &Corpus,
    protocol: &EvalProtocol,
) -> Result<f64, MiningError> {
    let encoded = encode_corpus(encoder, validation)?;
    let report = evaluate(&encoded, protocol, &EvalOptions::default())?;
    Ok(report.rank(1).unwrap_or(0.0))
}

/// Trains `encoder` on the train split with P×K triplet batches and Adam;
/// query and gallery records form the validation set, scored at step 0,
/// after every epoch and after the last step.
pub fn train(
    corpus: &Corpus,
    mut encoder: ToyEncoder,
    config: &TrainConfig,
) -> Result<TrainOutcome, MiningError> {
    config.validate()?;
    if corpus.embeddings.dim != encoder.d_in {
        return Err(MiningError::ShapeMismatch(format!(
            "corpus dim {} vs encoder input {}",
            corpus.embeddings.dim, encoder.d_in
        )));
    }
    let index = IdentityIndex::from_manifest(&corpus.manifest, Split::Train);
    let train_ids: BTreeSet<&str> = index.identities.iter().map(String::as_str).collect();
    if let Some(r) = corpus
        .manifest
        .records
        .iter()
        .find(|r| r.split != Split::Train && train_ids.contains(r.identity.as_str()))
    {
        return Err(MiningError::OverlappingSplits(r.identity.clone()));
    }
    let validation = corpus.filter(|r| r.split != Split::Train);
    let mut protocol = EvalProtocol::new(config.validation_protocol);
    protocol.ranks = vec![1];
    protocol.far_targets.clear();

    let batch_size = config.batch_size();
    let steps_per_epoch = index.total_rows().div_ceil(batch_size).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = AdamState::new(encoder.param_count());
    let mut params = encoder.params();
    let mut loss_trace = Vec::with_capacity(config.max_steps);
    let mut eval_trace = Vec::new();
    let has_validation = !validation.manifest.is_empty();

    if has_validation {
        eval_trace.push(EvalPoint {
            step: 0,
            epoch: 0,
            rank1: validation_rank1(&encoder, &validation, &protocol)?,
        });
    }

    let d_in = encoder.d_in;
    for step in 1..=config.max_steps {
        let picked = sample_batch(
            &index,
            config.batch_identities,
            config.images_per_identity,
            &mut rng,
        )?;
        let mut x = Vec::with_capacity(batch_size * d_in);
        for &r in &picked.rows {
            x.extend(corpus.embeddings.row(r).iter().map(|&v| v as f64));
        }
        let (y, z) = encoder.forward(&x)?;
        let record_ids = picked
            .rows
            .iter()
            .map(|&r| corpus.manifest.records[r].record_id)
            .collect();
        let batch = TripletBatch::new(y, encoder.d_out, picked.labels, record_ids)?;
        let loss = triplet_loss(&batch, config.margin)?;
        let grad_y = selection_gradient(&batch, &loss.triplets, false)?;
        let grad = encoder.backward(&x, &z, &grad_y)?;
        adam_step(&mut params, &grad, &mut state, config, step as u64)?;
        encoder.set_params(&params)?;

        let epoch_end = step % steps_per_epoch == 0;
        let epoch = step.div_ceil(steps_per_epoch);
        let mut val_rank1 = None;
        if has_validation && (epoch_end || step == config.max_steps) {
            let r1 = validation_rank1(&encoder, &validation, &protocol)?;
            eval_trace.push(EvalPoint {
                step,
                epoch,
                rank1: r1,
            });
            val_rank1 = Some(r1);
        }
        loss_trace.push(TraceRow {
            step,
            epoch,
            loss: loss.loss,
            active_count: loss.active_count,
            val_rank1,
        });
    }

    Ok(TrainOutcome {
        encoder,
        loss_trace,
        eval_trace,
        steps_per_epoch,
    })
}

/// `step,epoch,loss,active_count,val_rank1`; the step-0 validation point
/// becomes a row with empty loss cells.
pub fn trace_to_csv(outcome: &TrainOutcome) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "epoch", "loss", "active_count", "val_rank1"])
        .expect("in-memory write");
    if let Some(p) = outcome.eval_trace.first().filter(|p| p.step == 0) {
        w.write_record(["0", "0", "", "", &p.rank1.to_string()])
            .expect("in-memory write");
    }
    for r in &outcome.loss_trace {
        w.write_record([
            r.step.to_string(),
            r.epoch.to_string(),
            r.loss.to_string(),
            r.active_count.to_string(),
            r.val_rank1.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, SynthConfig};
    use crate::mining::Nonlinearity;

    fn small() -> Corpus {
        synth_corpus(&SynthConfig {
            num_identities: 24,
            train_identities: 12,
            dim: 8,
            seed: 3,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn config(steps: usize) -> TrainConfig {
        TrainConfig {
            batch_identities: 4,
            images_per_identity: 4,
            max_steps: steps,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let c = small();
        let e = ToyEncoder::random(8, 8, Nonlinearity::Tanh, 1);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..config(20)
        };
        let out = train(&c, e.clone(), &cfg).unwrap();
        assert_eq!(out.encoder, e);
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let c = small();
        let e = ToyEncoder::identity(8, Nonlinearity::Identity);
        let a = train(&c, e.clone(), &config(30)).unwrap();
        let b = train(&c, e, &config(30)).unwrap();
        assert_eq!(trace_to_csv(&a), trace_to_csv(&b));
        assert_eq!(a.encoder, b.encoder);
    }

    #[test]
    fn epochs_and_validation_points() {
        let c = small();
        // 12 train identities × 8 images = 96 rows, batches of 16 → 6 steps.
        let out = train(
            &c,
            ToyEncoder::identity(8, Nonlinearity::Identity),
            &config(14),
        )
        .unwrap();
        assert_eq!(out.steps_per_epoch, 6);
        let steps: Vec<usize> = out.eval_trace.iter().map(|p| p.step).collect();
        assert_eq!(steps, vec![0, 6, 12, 14]);
        let csv = trace_to_csv(&out);
        assert!(csv.starts_with("step,epoch,loss,active_count,val_rank1\n0,0,,,"));
        assert_eq!(csv.lines().count(), 16);
    }

    #[test]
    fn overlapping_identities_rejected() {
        let mut c = small();
        let q = c.manifest.split_indices(Split::Query)[0];
        let train_id = c.manifest.records[c.manifest.split_indices(Split::Train)[0]]
            .identity
            .clone();
        c.manifest.records[q].identity = train_id;
        assert!(matches!(
            train(
                &c,
                ToyEncoder::identity(8, Nonlinearity::Identity),
                &config(2)
            ),
            Err(MiningError::OverlappingSplits(_))
        ));
    }
}
