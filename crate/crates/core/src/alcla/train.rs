//! Full-batch Adam training with clipping, plateau halving or best-epoch selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{forward_tensors, loss_and_gradient, AlClaConfig, AlClaParams, DecoderBasis, MomentTensors};
use crate::baselines::{accuracy_report, AccuracyReport};
use crate::detectors::SampleSet;
use crate::error::{Error, Result};
use crate::fockstats::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// Halve the learning rate after `patience` epochs without train-accuracy gain.
    Plateau { patience: usize, factor: f64, min_lr: f64 },
    /// Constant learning rate; keep the last epoch where one accuracy rose and the other held.
    BestEpoch,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Plateau { patience: 50, factor: 0.5, min_lr: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub train: AccuracyReport,
    pub test: Option<AccuracyReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub params: AlClaParams,
    pub basis: DecoderBasis,
    pub history: Vec<EpochRecord>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// Epoch whose parameters were kept in best-epoch mode.
    pub selected_epoch: Option<usize>,
}

impl TrainOutcome {
    pub fn last(&self) -> &EpochRecord {
        self.history.last().expect("at least one epoch")
    }
}

/// Seeded per-class shuffle; each class contributes round(fraction · size) training states,
/// keeping at least one per class in training.
pub fn stratified_split(labels: &[Label], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [Label::Classical, Label::Nonclassical] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_train = ((idx.len() as f64 * fraction).round() as usize).clamp(idx.len().min(1), idx.len());
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

pub fn predict_tensors(data: &[&MomentTensors], params: &AlClaParams, basis: &DecoderBasis) -> Vec<Label> {
    data.iter().map(|t| forward_tensors(t, params, basis).label()).collect()
}

fn report(data: &[&MomentTensors], params: &AlClaParams, basis: &DecoderBasis) -> Result<AccuracyReport> {
    let labels: Vec<Label> = data.iter().map(|t| t.label).collect();
    accuracy_report(&predict_tensors(data, params, basis), &labels)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, x: &mut [f64], g: &[f64], lr: f64, c: &super::AdamConfig) {
        self.t += 1;
        let b1t = 1.0 - c.beta1.powi(self.t);
        let b2t = 1.0 - c.beta2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g[i] * g[i];
            x[i] -= lr * (self.m[i] / b1t) / ((self.v[i] / b2t).sqrt() + c.eps);
        }
    }
}

/// Trains on raw sample sets; moment tensors are built once per state.
pub fn train(dataset: &[SampleSet], config: &AlClaConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if let Some(s) = dataset.iter().find(|s| s.d_x() != config.d_x) {
        return Err(Error::dim(format!("state has {} modes, config expects {}", s.d_x(), config.d_x)));
    }
    let tensors = dataset
        .par_iter()
        .map(|s| MomentTensors::from_samples(s, config.l, config.normalize_by_samples))
        .collect::<Result<Vec<_>>>()?;
    train_tensors(&tensors, config)
}

pub fn train_tensors(data: &[MomentTensors], config: &AlClaConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let labels: Vec<Label> = data.iter().map(|t| t.label).collect();
    if !labels.contains(&Label::Classical) || !labels.contains(&Label::Nonclassical) {
        return Err(Error::SingleClass("training needs classical and nonclassical states".into()));
    }
    if data.iter().any(|t| t.d_x != config.d_x || t.order() != config.l) {
        return Err(Error::dim("moment tensors do not match config (d_x, L)"));
    }
    let basis = DecoderBasis::new(config.d_x, config.l);
    let (train_idx, test_idx) = stratified_split(&labels, config.train_fraction, config.seed);
    let train_set: Vec<&MomentTensors> = train_idx.iter().map(|&i| &data[i]).collect();
    let test_set: Vec<&MomentTensors> = test_idx.iter().map(|&i| &data[i]).collect();

    let mut params = AlClaParams::init(config, config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len());
    let mut lr = config.adam.lr;
    let mut history = Vec::with_capacity(config.epochs);

    let mut best_train = f64::NEG_INFINITY;
    let mut since_improvement = 0usize;
    let mut running: Option<(f64, f64)> = None;
    let mut selected: Option<(usize, AlClaParams)> = None;

    for epoch in 0..config.epochs {
        let (loss, grad) = loss_and_gradient(&train_set, &params, &basis, config);
        adam.step(&mut flat, &grad.flatten(), lr, &config.adam);
        params.assign(&flat);
        params.clip(&config.clip);
        if config.upper_triangular_k {
            params.mask_lower();
        }
        flat = params.flatten();
        debug_assert!(params.within(&config.clip));

        let train_rep = report(&train_set, &params, &basis)?;
        let test_rep = if test_set.is_empty() { None } else { Some(report(&test_set, &params, &basis)?) };
        history.push(EpochRecord { epoch, loss, lr, train: train_rep.clone(), test: test_rep.clone() });

        match config.schedule {
            Schedule::Plateau { patience, factor, min_lr } => {
                if train_rep.total > best_train {
                    best_train = train_rep.total;
                    since_improvement = 0;
                } else {
                    since_improvement += 1;
                    if since_improvement >= patience {
                        lr = (lr * factor).max(min_lr);
                        since_improvement = 0;
                    }
                }
            }
            Schedule::BestEpoch => {
                let tr = train_rep.total;
                let te = test_rep.as_ref().map_or(tr, |r| r.total);
                let accept = match running {
                    None => true,
                    Some((btr, bte)) => (tr > btr && te >= bte) || (te > bte && tr >= btr),
                };
                if accept {
                    running = Some((tr, te));
                    selected = Some((epoch, params.clone()));
                }
            }
        }
    }

    let selected_epoch = match selected {
        Some((e, p)) => {
            params = p;
            Some(e)
        }
        None => None,
    };
    Ok(TrainOutcome { params, basis, history, train_indices: train_idx, test_indices: test_idx, selected_epoch })
}
