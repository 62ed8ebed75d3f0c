//! Linear SVM baseline, accuracy metrics and trade-off curves.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alcla::{self, AlClaConfig, TrainOutcome};
use crate::detectors::SampleSet;
use crate::error::{Error, Result};
use crate::fockstats::Label;

pub const SVM_EPOCHS: usize = 5000;
pub const DEFAULT_LAMBDA_GRID: [f64; 7] = [0.0, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// `None` when the class is absent.
    pub classical: Option<f64>,
    pub nonclassical: Option<f64>,
    pub total: f64,
    pub n_classical: usize,
    pub n_nonclassical: usize,
}

impl AccuracyReport {
    pub fn len(&self) -> usize {
        self.n_classical + self.n_nonclassical
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn accuracy_report(predictions: &[Label], labels: &[Label]) -> Result<AccuracyReport> {
    if predictions.len() != labels.len() {
        return Err(Error::dim(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::Empty("label set".into()));
    }
    let mut hits = [0usize; 2];
    let mut counts = [0usize; 2];
    for (p, l) in predictions.iter().zip(labels) {
        let c = l.as_u8() as usize;
        counts[c] += 1;
        if p == l {
            hits[c] += 1;
        }
    }
    let ratio = |c: usize| (counts[c] > 0).then(|| hits[c] as f64 / counts[c] as f64);
    Ok(AccuracyReport {
        classical: ratio(0),
        nonclassical: ratio(1),
        total: (hits[0] + hits[1]) as f64 / labels.len() as f64,
        n_classical: counts[0],
        n_nonclassical: counts[1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Bias for witnesses, λ for the classifier.
    pub param: f64,
    pub acc_classical: f64,
    pub acc_nonclassical: f64,
    pub total: f64,
    /// Binomial standard error of the total accuracy.
    pub stderr: f64,
}

impl CurvePoint {
    pub fn new(param: f64, acc_classical: f64, acc_nonclassical: f64, total: f64, n: usize) -> Self {
        let stderr = if n > 0 { (total * (1.0 - total) / n as f64).sqrt() } else { 0.0 };
        Self { param, acc_classical, acc_nonclassical, total, stderr }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub method: String,
    pub points: Vec<CurvePoint>,
}

pub const CURVE_HEADER: &str = "name,bias,acc_classical,acc_nonclassical,value,stderr";

impl TradeoffCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CURVE_HEADER);
        s.push('\n');
        self.append_rows(&mut s);
        s
    }

    pub fn append_rows(&self, s: &mut String) {
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                self.method, p.param, p.acc_classical, p.acc_nonclassical, p.total, p.stderr
            );
        }
    }

    /// Highest nonclassical accuracy among points with classical accuracy ≥ `min_classical`.
    pub fn best_nonclassical_at(&self, min_classical: f64) -> Option<f64> {
        self.points
            .iter()
            .filter(|p| p.acc_classical >= min_classical)
            .map(|p| p.acc_nonclassical)
            .fold(None, |a, v| Some(a.map_or(v, |a: f64| a.max(v))))
    }
}

/// Writes several curves into one CSV.
pub fn curves_to_csv(curves: &[TradeoffCurve]) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for c in curves {
        c.append_rows(&mut s);
    }
    s
}

pub fn write_curves(path: impl AsRef<Path>, curves: &[TradeoffCurve]) -> Result<()> {
    crate::dataset::write_atomic(path.as_ref(), curves_to_csv(curves).as_bytes())
}

pub fn feature_dimension(d_x: usize) -> usize {
    d_x + d_x * (d_x + 1) / 2
}

/// ⟨n_i⟩ per mode, then ⟨n_i n_j⟩ for i ≤ j in row order.
pub fn moment_features(samples: &SampleSet) -> Vec<f64> {
    let d = samples.d_x();
    let m = samples.m() as f64;
    let mut v = vec![0.0; feature_dimension(d)];
    if samples.m() == 0 {
        return v;
    }
    for (row, count) in samples.histogram() {
        let w = count as f64 / m;
        let x: Vec<f64> = row.iter().map(|&r| r as f64).collect();
        let mut idx = d;
        for i in 0..d {
            v[i] += w * x[i];
            for j in i..d {
                v[idx] += w * x[i] * x[j];
                idx += 1;
            }
        }
    }
    v
}

/// Per-feature shift and scale fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Constant features get unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let dim = rows.first().ok_or_else(|| Error::Empty("feature rows".into()))?.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::dim("feature rows differ in length"));
        }
        let mean: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let scale = (0..dim)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
    pub standardizer: Standardizer,
}

impl SvmModel {
    pub fn decision(&self, features: &[f64]) -> f64 {
        let z = self.standardizer.apply(features);
        self.w.iter().zip(&z).map(|(w, x)| w * x).sum::<f64>() + self.b
    }

    /// Positive side is nonclassical; zero is classical.
    pub fn predict(&self, features: &[f64]) -> Label {
        if self.decision(features) > 0.0 {
            Label::Nonclassical
        } else {
            Label::Classical
        }
    }
}

/// Full-batch Pegasos on Σ hinge + ‖(w, b)‖²/(2C) over standardized features, step 1/(λt).
pub fn svm_fit(features: &[Vec<f64>], labels: &[Label], c: f64) -> Result<SvmModel> {
    svm_fit_epochs(features, labels, c, SVM_EPOCHS)
}

pub fn svm_fit_epochs(features: &[Vec<f64>], labels: &[Label], c: f64, epochs: usize) -> Result<SvmModel> {
    if features.len() != labels.len() {
        return Err(Error::dim("features and labels differ in length"));
    }
    if !(c > 0.0) {
        return Err(Error::param("C must be > 0"));
    }
    if !labels.contains(&Label::Classical) || !labels.contains(&Label::Nonclassical) {
        return Err(Error::SingleClass("SVM needs both classes".into()));
    }
    let standardizer = Standardizer::fit(features)?;
    let n = features.len();
    // constant feature carries the intercept
    let xs: Vec<Vec<f64>> = features
        .iter()
        .map(|r| {
            let mut z = standardizer.apply(r);
            z.push(1.0);
            z
        })
        .collect();
    let ys: Vec<f64> = labels.iter().map(|l| if *l == Label::Nonclassical { 1.0 } else { -1.0 }).collect();
    let lambda = 1.0 / (c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let dim = xs[0].len();
    let mut w = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    for t in 1..=epochs {
        let eta = 1.0 / (lambda * t as f64);
        g.iter_mut().zip(&w).for_each(|(gi, wi)| *gi = lambda * wi);
        for (x, y) in xs.iter().zip(&ys) {
            let margin = y * x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            if margin < 1.0 {
                g.iter_mut().zip(x).for_each(|(gi, xi)| *gi -= y * xi / n as f64);
            }
        }
        w.iter_mut().zip(&g).for_each(|(wi, gi)| *wi -= eta * gi);
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > radius {
            w.iter_mut().for_each(|v| *v *= radius / norm);
        }
    }
    let b = w.pop().expect("intercept");
    Ok(SvmModel { w, b, c, standardizer })
}

/// One training run per λ, concurrently. Points report accuracy over all states.
pub fn lambda_sweep(
    dataset: &[SampleSet],
    config: &AlClaConfig,
    grid: &[f64],
) -> Result<(TradeoffCurve, Vec<TrainOutcome>)> {
    if grid.is_empty() {
        return Err(Error::Empty("lambda grid".into()));
    }
    config.validate()?;
    let tensors = dataset
        .par_iter()
        .map(|s| alcla::MomentTensors::from_samples(s, config.l, config.normalize_by_samples))
        .collect::<Result<Vec<_>>>()?;
    let runs = grid
        .par_iter()
        .map(|&lambda| alcla::train_tensors(&tensors, &AlClaConfig { lambda, ..config.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<Label> = tensors.iter().map(|t| t.label).collect();
    let refs: Vec<&alcla::MomentTensors> = tensors.iter().collect();
    let mut points = Vec::with_capacity(grid.len());
    for (&lambda, run) in grid.iter().zip(&runs) {
        let preds = alcla::train::predict_tensors(&refs, &run.params, &run.basis);
        let acc = accuracy_report(&preds, &labels)?;
        points.push(CurvePoint::new(
            lambda,
            acc.classical.unwrap_or(f64::NAN),
            acc.nonclassical.unwrap_or(f64::NAN),
            acc.total,
            labels.len(),
        ));
    }
    Ok((TradeoffCurve { method: format!("alcla_L{}", config.l), points }, runs))
}
