//! Gradient-descent reference training for [`LinearDecoder`].

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use nalgebra::{DMatrix, DVector};

use super::decoder::{DecoderInput, LinearDecoder, INPUT_WIDTH, OUTPUT_WIDTH, PARAM_COUNT};
use crate::error::{Error, Result};
use crate::loss::{total_pose_loss, LossConfig, LossTerms, PoseTarget};
use crate::pose::Symmetry;
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// When set, the rate decays geometrically from `learning_rate` at the
    /// first epoch to this value at the last. Fixed-rate steps on L1 terms
    /// oscillate with an amplitude proportional to the rate.
    pub final_learning_rate: Option<f64>,
    pub epochs: usize,
    pub seed: u64,
    /// Samples per step; `None` steps once per epoch on the full set. With a
    /// batch size the order is reshuffled every epoch from `seed`.
    pub batch_size: Option<usize>,
    /// Descend in whitened input coordinates and fold the result back into
    /// the decoder. The pooled statistics are strongly correlated, and plain
    /// steps on them crawl along the small-eigenvalue directions.
    pub whiten: bool,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2.0,
            final_learning_rate: Some(0.01),
            epochs: 40_000,
            seed: 0,
            batch_size: None,
            whiten: true,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Step size used during `epoch`.
    pub fn rate_at(&self, epoch: usize) -> f64 {
        match self.final_learning_rate {
            Some(f) if self.epochs > 1 => {
                let p = epoch as f64 / (self.epochs - 1) as f64;
                self.learning_rate * (f / self.learning_rate).powf(p)
            }
            _ => self.learning_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid("learning rate must be finite and >= 0".into()));
        }
        if let Some(f) = self.final_learning_rate {
            if !(f > 0.0 && f.is_finite() && self.learning_rate > 0.0) {
                return Err(Error::Invalid(
                    "final learning rate needs positive start and end rates".into(),
                ));
            }
        }
        if self.batch_size == Some(0) {
            return Err(Error::Invalid("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub input: DecoderInput,
    pub target: PoseTarget,
    pub symmetry: Symmetry,
}

/// Mean loss over the whole training set, evaluated before the epoch's
/// updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub terms: LossTerms,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub decoder: LinearDecoder,
    /// `epochs + 1` records; the last one is the loss after training.
    pub history: Vec<EpochRecord>,
}

struct BatchResult {
    total: f64,
    terms: LossTerms,
    grad: Vec<f64>,
}

fn add_terms(a: &mut LossTerms, b: &LossTerms, f: f64) {
    a.translation += f * b.translation;
    a.rot_x += f * b.rot_x;
    a.rot_z += f * b.rot_z;
    a.angular += f * b.angular;
    a.conf_x += f * b.conf_x;
    a.conf_z += f * b.conf_z;
    a.scale += f * b.scale;
}

/// Mean loss and parameter gradient over `samples[idx]`. Per-sample work
/// runs in parallel; the reduction is sequential in index order.
fn evaluate(model: &LinearDecoder, samples: &[TrainingSample], idx: &[usize], cfg: &LossConfig) -> Result<BatchResult> {
    let parts: Vec<Result<(f64, LossTerms, Vec<f64>)>> = idx
        .par_iter()
        .map(|&i| {
            let s = &samples[i];
            let out = model.forward(&s.input)?;
            let report = total_pose_loss(&out.prediction, &s.target, &s.symmetry, cfg)?;
            let mut g = vec![0.0; PARAM_COUNT];
            let pg = report.gradient.expect("pose loss returns a gradient");
            model.backward(&out, &pg, &mut g);
            Ok((report.total, report.terms, g))
        })
        .collect();
    let inv = 1.0 / idx.len() as f64;
    let mut acc = BatchResult {
        total: 0.0,
        terms: LossTerms::default(),
        grad: vec![0.0; PARAM_COUNT],
    };
    for part in parts {
        let (total, terms, g) = part?;
        acc.total += total * inv;
        add_terms(&mut acc.terms, &terms, inv);
        for (a, b) in acc.grad.iter_mut().zip(&g) {
            *a += b * inv;
        }
    }
    Ok(acc)
}

/// Gradient descent on the mean weighted pose loss.
///
/// Only weights and biases move; the standardization of `model` is kept.
/// Identical inputs give bit-identical results regardless of thread count.
pub fn train_reference(model: &LinearDecoder, samples: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    if samples.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    if !cfg.whiten {
        return descend(model.clone(), samples, cfg);
    }
    let w = Whitening::fit(model, samples);
    let inner: Vec<TrainingSample> = samples
        .iter()
        .map(|s| TrainingSample {
            input: DecoderInput {
                features: w.apply(model, &s.input.features),
                ..s.input.clone()
            },
            ..s.clone()
        })
        .collect();
    let out = descend(w.lift(model), &inner, cfg)?;
    Ok(TrainOutcome {
        decoder: w.fold(model, &out.decoder),
        history: out.history,
    })
}

/// `z = sqrt(top) D^-1/2 V^T (x - m)` over the standardized inputs,
/// restricted to directions the training set actually spans, zero padded to
/// `INPUT_WIDTH`. Every direction gets the largest eigenvalue `top`, so
/// step sizes that were stable before stay stable.
struct Whitening {
    mean: DVector<f64>,
    /// Rows are the kept eigenvectors scaled by `sqrt(top / lambda)`.
    project: DMatrix<f64>,
    /// Rows are the kept eigenvectors scaled by `sqrt(lambda / top)`.
    unproject: DMatrix<f64>,
}

impl Whitening {
    fn fit(model: &LinearDecoder, samples: &[TrainingSample]) -> Self {
        let n = samples.len();
        let x = DMatrix::from_fn(n, INPUT_WIDTH, |i, c| {
            model.standardize(c, samples[i].input.features[c])
        });
        let mean = DVector::from_fn(INPUT_WIDTH, |c, _| x.column(c).mean());
        let centered = DMatrix::from_fn(n, INPUT_WIDTH, |i, c| x[(i, c)] - mean[c]);
        let cov = centered.transpose() * &centered / n as f64;
        let eig = cov.symmetric_eigen();
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let mut order: Vec<usize> = (0..INPUT_WIDTH).filter(|&k| eig.eigenvalues[k] > 1e-10 * top).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut project = DMatrix::zeros(INPUT_WIDTH, INPUT_WIDTH);
        let mut unproject = DMatrix::zeros(INPUT_WIDTH, INPUT_WIDTH);
        for (r, &k) in order.iter().enumerate() {
            let root = (eig.eigenvalues[k] / top).sqrt();
            for c in 0..INPUT_WIDTH {
                project[(r, c)] = eig.eigenvectors[(c, k)] / root;
                unproject[(r, c)] = eig.eigenvectors[(c, k)] * root;
            }
        }
        Whitening {
            mean,
            project,
            unproject,
        }
    }

    fn apply(&self, model: &LinearDecoder, features: &[f64]) -> Vec<f64> {
        let x = DVector::from_fn(INPUT_WIDTH, |c, _| model.standardize(c, features[c]) - self.mean[c]);
        (&self.project * x).iter().cloned().collect()
    }

    /// The model in whitened coordinates, equal to `model` on the span of
    /// the training set.
    fn lift(&self, model: &LinearDecoder) -> LinearDecoder {
        let w = DMatrix::from_row_slice(OUTPUT_WIDTH, INPUT_WIDTH, &model.weights);
        let u = &w * self.unproject.transpose();
        let b = DVector::from_column_slice(&model.bias) + &w * &self.mean;
        LinearDecoder {
            weights: row_major(&u),
            bias: b.iter().cloned().collect(),
            ..LinearDecoder::zeros()
        }
    }

    /// Back to `model`'s standardization. Weight components outside the
    /// span are taken from `model` unchanged.
    fn fold(&self, model: &LinearDecoder, trained: &LinearDecoder) -> LinearDecoder {
        let w0 = DMatrix::from_row_slice(OUTPUT_WIDTH, INPUT_WIDTH, &model.weights);
        let u = DMatrix::from_row_slice(OUTPUT_WIDTH, INPUT_WIDTH, &trained.weights);
        let span = self.unproject.transpose() * &self.project;
        let w = &w0 - &w0 * span.transpose() + &u * &self.project;
        let b = DVector::from_column_slice(&trained.bias) - &w * &self.mean;
        LinearDecoder {
            weights: row_major(&w),
            bias: b.iter().cloned().collect(),
            ..model.clone()
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().cloned().collect()
}

fn descend(mut model: LinearDecoder, samples: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut params = model.params();
    let all: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let record = |epoch: usize, r: &BatchResult| -> Result<EpochRecord> {
        if !r.total.is_finite() {
            return Err(Error::DivergedLoss { epoch, loss: r.total });
        }
        Ok(EpochRecord {
            epoch,
            total: r.total,
            terms: r.terms,
        })
    };
    for epoch in 0..cfg.epochs {
        let full = evaluate(&model, samples, &all, &cfg.loss)?;
        history.push(record(epoch, &full)?);
        let lr = cfg.rate_at(epoch);
        match cfg.batch_size {
            None => step(&mut params, &full.grad, lr),
            Some(b) => {
                let mut order = all.clone();
                order.shuffle(&mut rng_from_seed(derive_seed(cfg.seed, epoch as u64)));
                for chunk in order.chunks(b) {
                    let r = evaluate(&model, samples, chunk, &cfg.loss)?;
                    step(&mut params, &r.grad, lr);
                    model.set_params(&params)?;
                }
            }
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::DivergedLoss { epoch, loss: f64::NAN });
        }
        model.set_params(&params)?;
    }
    let last = evaluate(&model, samples, &all, &cfg.loss)?;
    history.push(record(cfg.epochs, &last)?);
    Ok(TrainOutcome {
        decoder: model,
        history,
    })
}

fn step(params: &mut [f64], grad: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}
