//! Linear baseline: bag-of-words pair features and an L2-regularized hinge
//! loss trained by Pegasos-style stochastic subgradient descent. A declared
//! stand-in for the shared task's unpublished SVM; reports that include it
//! must carry the "baseline: reimplemented" label.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ArgumentPairRecord, Corpus};
use crate::par;
use crate::tokenizer::{subword_ids, Vocabulary};

/// Label every baseline report must carry (the organizers' SVM is unknown).
pub const BASELINE_LABEL: &str = "baseline: reimplemented";

const NUM_SPECIAL_IDS: u32 = 4;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training data contains a single class only")]
    SingleClass,
    #[error("model file: {0}")]
    BadModelFile(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Maps a record to term counts: argument 1 in block `[0, |V|)`,
/// argument 2 in block `[|V|, 2|V|)`; special ids excluded.
#[derive(Debug, Clone, Copy)]
pub struct BowFeaturizer<'a> {
    pub vocab: &'a Vocabulary,
}

impl<'a> BowFeaturizer<'a> {
    pub fn new(vocab: &'a Vocabulary) -> Self {
        BowFeaturizer { vocab }
    }

    pub fn feature_dim(&self) -> usize {
        2 * self.vocab.len()
    }
}

/// Sparse feature vector: sorted `(index, count)` pairs.
pub type SparseVector = Vec<(u32, f64)>;

/// Subword term counts of both arguments, block-stacked.
pub fn featurize_pair(rec: &ArgumentPairRecord, featurizer: &BowFeaturizer) -> SparseVector {
    let block = featurizer.vocab.len() as u32;
    let mut counts: std::collections::BTreeMap<u32, f64> = std::collections::BTreeMap::new();
    for id in subword_ids(&rec.argument1, featurizer.vocab) {
        if id >= NUM_SPECIAL_IDS {
            *counts.entry(id).or_insert(0.0) += 1.0;
        }
    }
    for id in subword_ids(&rec.argument2, featurizer.vocab) {
        if id >= NUM_SPECIAL_IDS {
            *counts.entry(block + id).or_insert(0.0) += 1.0;
        }
    }
    counts.into_iter().collect()
}

/// Dense linear model over the stacked feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl LinearModel {
    pub fn score(&self, x: &SparseVector) -> f64 {
        let mut acc = self.bias;
        for &(i, v) in x {
            acc += self.weights[i as usize] * v;
        }
        acc
    }
}

fn sparse_dot(w: &[f64], x: &SparseVector) -> f64 {
    x.iter().map(|&(i, v)| w[i as usize] * v).sum()
}

/// Regularized empirical hinge risk `lambda/2 ||w||^2 + mean hinge` (bias
/// unregularized), used by tests and diagnostics.
pub fn hinge_objective(model: &LinearModel, features: &[(SparseVector, f64)]) -> f64 {
    let norm2: f64 = model.weights.iter().map(|w| w * w).sum();
    let mut loss = 0.0;
    for (x, y) in features {
        loss += (1.0 - y * model.score(x)).max(0.0);
    }
    model.lambda / 2.0 * norm2 + loss / features.len() as f64
}

fn train_impl(
    train: &Corpus,
    featurizer: &BowFeaturizer,
    lambda: f64,
    epochs: usize,
    seed: u64,
    mut epoch_average_sink: Option<&mut Vec<LinearModel>>,
) -> Result<LinearModel, BaselineError> {
    if train.is_empty() {
        return Err(BaselineError::EmptyTrainingSet);
    }
    let has_pos = train.records.iter().any(|r| r.is_same_stance);
    let has_neg = train.records.iter().any(|r| !r.is_same_stance);
    if !has_pos || !has_neg {
        return Err(BaselineError::SingleClass);
    }

    let features: Vec<(SparseVector, f64)> = par::map_ordered(&train.records, |rec| {
        let y = if rec.is_same_stance { 1.0 } else { -1.0 };
        (featurize_pair(rec, featurizer), y)
    });

    let dim = featurizer.feature_dim();
    // Stored weights carry a lazy scale factor so the per-step shrink is O(1).
    let mut w = vec![0.0; dim];
    let mut scale = 1.0f64;
    let mut bias = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t: u64 = 0;

    for _epoch in 0..epochs {
        let mut order: Vec<usize> = (0..features.len()).collect();
        order.shuffle(&mut rng);

        let mut epoch_avg = epoch_average_sink
            .as_ref()
            .map(|_| (vec![0.0; dim], 0.0f64, 0u64));
        for idx in order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let (x, y) = &features[idx];
            let margin = y * (scale * sparse_dot(&w, x) + bias);

            scale *= 1.0 - eta * lambda;
            if scale.abs() < 1e-9 {
                // First step (or underflow): materialize before adding.
                for v in w.iter_mut() {
                    *v *= scale;
                }
                scale = 1.0;
            }
            if margin < 1.0 {
                let step = eta * y / scale;
                for &(i, v) in x {
                    w[i as usize] += step * v;
                }
                bias += eta * y;
            }

            if let Some((avg_w, avg_b, n)) = epoch_avg.as_mut() {
                for (a, &v) in avg_w.iter_mut().zip(&w) {
                    *a += scale * v;
                }
                *avg_b += bias;
                *n += 1;
            }
        }
        if let (Some(sink), Some((mut avg_w, avg_b, n))) =
            (epoch_average_sink.as_deref_mut(), epoch_avg)
        {
            for v in avg_w.iter_mut() {
                *v /= n as f64;
            }
            sink.push(LinearModel {
                weights: avg_w,
                bias: avg_b / n as f64,
                lambda,
                epochs,
                seed,
            });
        }
    }

    for v in w.iter_mut() {
        *v *= scale;
    }
    Ok(LinearModel { weights: w, bias, lambda, epochs, seed })
}

/// Pegasos-style training: step `t` uses rate `1/(lambda t)`, hinge
/// subgradient on labels mapped to -1/+1. Deterministic per seed.
pub fn train_svm(
    train: &Corpus,
    featurizer: &BowFeaturizer,
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<LinearModel, BaselineError> {
    train_impl(train, featurizer, lambda, epochs, seed, None)
}

/// [`train_svm`] that also returns the averaged iterate of each epoch
/// (Pegasos' theory object; used to monitor the objective).
pub fn train_svm_with_epoch_averages(
    train: &Corpus,
    featurizer: &BowFeaturizer,
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<(LinearModel, Vec<LinearModel>), BaselineError> {
    let mut averages = Vec::new();
    let model = train_impl(train, featurizer, lambda, epochs, seed, Some(&mut averages))?;
    Ok((model, averages))
}

/// `sign(w . x + b) > 0`; a tie classifies as different-side.
pub fn predict_svm(model: &LinearModel, rec: &ArgumentPairRecord, featurizer: &BowFeaturizer) -> bool {
    model.score(&featurize_pair(rec, featurizer)) > 0.0
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    label: String,
    lambda: f64,
    epochs: usize,
    seed: u64,
    bias: f64,
    feature_dim: usize,
    weights: Vec<(u32, f64)>,
}

/// JSON persistence with sparse weights.
pub fn save_model<W: Write>(model: &LinearModel, writer: W) -> Result<(), BaselineError> {
    let file = ModelFile {
        label: BASELINE_LABEL.into(),
        lambda: model.lambda,
        epochs: model.epochs,
        seed: model.seed,
        bias: model.bias,
        feature_dim: model.weights.len(),
        weights: model
            .weights
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i as u32, v))
            .collect(),
    };
    serde_json::to_writer_pretty(writer, &file)
        .map_err(|e| BaselineError::BadModelFile(e.to_string()))
}

pub fn load_model<R: Read>(reader: R) -> Result<LinearModel, BaselineError> {
    let file: ModelFile =
        serde_json::from_reader(reader).map_err(|e| BaselineError::BadModelFile(e.to_string()))?;
    let mut weights = vec![0.0; file.feature_dim];
    for (i, v) in file.weights {
        let slot = weights
            .get_mut(i as usize)
            .ok_or_else(|| BaselineError::BadModelFile(format!("index {i} out of range")))?;
        *slot = v;
    }
    Ok(LinearModel {
        weights,
        bias: file.bias,
        lambda: file.lambda,
        epochs: file.epochs,
        seed: file.seed,
    })
}
