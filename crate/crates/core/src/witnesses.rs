//! Moment- and probability-based nonclassicality witnesses, evaluated exactly or from
//! samples with delta-method standard errors, plus bias sweeps over labeled datasets.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{accuracy_report, CurvePoint, TradeoffCurve};
use crate::detectors::{DetectorModel, JointDistribution, SampleSet};
use crate::error::{Error, Result};
use crate::fockstats::{Label, MomentVector};
use crate::linalg::{jacobi_eigen, SquareMatrix};
use crate::special::{binomial, binomial_real};

/// Floor on the eigenvalue margin below zero required to call a matrix non-PSD.
pub const PSD_TOL: f64 = 1e-8;
/// Empirical eigenvalue margins are this many standard errors.
pub const STDERR_MARGIN: f64 = 3.0;
pub const DEFAULT_DIMENSION_CAP: usize = 64;
const MAX_DIMENSION_CAP: usize = 256;

/// A witness value with its classical bound. A state is flagged nonclassical at bias b
/// iff `value + b < threshold − margin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub name: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub threshold: f64,
    pub margin: f64,
    /// False when the witness is undefined for this input (e.g. Mandel Q of vacuum).
    pub applicable: bool,
    pub note: Option<String>,
}

impl WitnessReport {
    fn scalar(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, stderr: None, threshold, margin: 0.0, applicable: true, note: None }
    }

    fn eigen(name: &str, value: f64) -> Self {
        Self { margin: PSD_TOL, ..Self::scalar(name, value, 0.0) }
    }

    fn not_applicable(name: &str, threshold: f64, why: &str) -> Self {
        Self {
            applicable: false,
            note: Some(why.into()),
            ..Self::scalar(name, 0.0, threshold)
        }
    }

    fn with_stderr(mut self, stderr: f64) -> Self {
        self.stderr = Some(stderr);
        if self.margin > 0.0 {
            self.margin = PSD_TOL.max(STDERR_MARGIN * stderr);
        }
        self
    }

    /// Nonclassical verdict after adding `bias` to the value.
    pub fn verdict_at_bias(&self, bias: f64) -> bool {
        self.applicable && self.value + bias < self.threshold - self.margin
    }

    pub fn is_nonclassical(&self) -> bool {
        self.verdict_at_bias(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    Integer,
    HalfInteger,
}

impl IndexKind {
    /// Matrix dimension for probabilities p_0..p_C.
    pub fn dimension(self, c: usize) -> usize {
        match self {
            IndexKind::Integer => c / 2 + 1,
            IndexKind::HalfInteger => c.div_ceil(2),
        }
    }

    /// Index value of row `a`.
    pub fn index(self, a: usize) -> f64 {
        match self {
            IndexKind::Integer => a as f64,
            IndexKind::HalfInteger => a as f64 + 0.5,
        }
    }

    /// Integer sum of the indices of rows `a` and `b`.
    fn sum(self, a: usize, b: usize) -> usize {
        match self {
            IndexKind::Integer => a + b,
            IndexKind::HalfInteger => a + b + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixSource {
    PnrProbabilities,
    ClickProbabilities,
    MultimodeMoments,
    MultimodeProbabilities,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix {
    pub entries: SquareMatrix,
    pub index_kind: IndexKind,
    pub source: MatrixSource,
}

impl MomentMatrix {
    pub fn min_eigenvalue(&self) -> f64 {
        jacobi_eigen(&self.entries).min().0
    }
}

/// Q = (⟨n²⟩ − ⟨n⟩²)/⟨n⟩ − 1.
pub fn mandel_q(mom: &MomentVector) -> Result<WitnessReport> {
    if mom.order() < 2 {
        return Err(Error::param("Mandel Q needs moments up to order 2"));
    }
    Ok(mandel_q_from(mom.raw(1), mom.raw(2)))
}

fn mandel_q_from(n1: f64, n2: f64) -> WitnessReport {
    if n1 <= 0.0 {
        return WitnessReport::not_applicable("mandel_q", 0.0, "mean photon number is zero");
    }
    WitnessReport::scalar("mandel_q", (n2 - n1 * n1) / n1 - 1.0, 0.0)
}

/// Q₃ = ⟨n⟩⟨:n³:⟩ − ⟨:n²:⟩².
pub fn q3_pnr(mom: &MomentVector) -> Result<WitnessReport> {
    if mom.order() < 3 {
        return Err(Error::param("Q3 needs moments up to order 3"));
    }
    Ok(WitnessReport::scalar("q3", q3_from_raw(mom.raw(1), mom.raw(2), mom.raw(3)), 0.0))
}

fn q3_from_raw(n1: f64, n2: f64, n3: f64) -> f64 {
    let f2 = n2 - n1;
    let f3 = n3 - 3.0 * n2 + 2.0 * n1;
    n1 * f3 - f2 * f2
}

/// Klyshko ratio (k+1) p_{k−1} p_{k+1} / (k p_k²) at one k.
pub fn klyshko(probs: &[f64], k: usize) -> Result<WitnessReport> {
    if k < 1 || k + 1 >= probs.len() {
        return Err(Error::param(format!(
            "Klyshko index k = {k} outside 1..={}",
            probs.len().saturating_sub(2)
        )));
    }
    Ok(match klyshko_ratio(probs, k) {
        Some(r) => WitnessReport::scalar("klyshko", r, 1.0),
        None => WitnessReport::not_applicable("klyshko", 1.0, "p_k and numerator both vanish"),
    })
}

fn klyshko_ratio(probs: &[f64], k: usize) -> Option<f64> {
    let num = (k + 1) as f64 * probs[k - 1] * probs[k + 1];
    let den = k as f64 * probs[k] * probs[k];
    if den > 0.0 {
        Some(num / den)
    } else if num > 0.0 {
        Some(f64::INFINITY)
    } else {
        None
    }
}

/// Minimum Klyshko ratio over all valid k, with the minimizing k.
pub fn klyshko_min(probs: &[f64]) -> (WitnessReport, Option<usize>) {
    let best = (1..probs.len().saturating_sub(1))
        .filter_map(|k| klyshko_ratio(probs, k).map(|r| (r, k)))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    match best {
        Some((r, k)) => (WitnessReport::scalar("klyshko", r, 1.0), Some(k)),
        None => (WitnessReport::not_applicable("klyshko", 1.0, "no k with defined ratio"), None),
    }
}

fn scaled_matrix(c: usize, kind: IndexKind, entry: impl Fn(usize, usize) -> f64) -> SquareMatrix {
    SquareMatrix::from_fn(kind.dimension(c), entry)
}

/// Matrix C(j+k, j) p_{j+k} for probabilities p_0..p_C.
pub fn generalized_klyshko_pnr(probs: &[f64], kind: IndexKind) -> Result<(MomentMatrix, WitnessReport)> {
    if probs.len() < 2 {
        return Err(Error::param("generalized Klyshko needs C >= 1"));
    }
    let c = probs.len() - 1;
    let entries = scaled_matrix(c, kind, |a, b| {
        binomial_real(kind.sum(a, b) as f64, kind.index(a)) * probs[kind.sum(a, b)]
    });
    let m = MomentMatrix { entries, index_kind: kind, source: MatrixSource::PnrProbabilities };
    let report = WitnessReport::eigen(kind.witness_name("gen_klyshko"), m.min_eigenvalue());
    Ok((m, report))
}

/// Matrix c_{j+k} / C(N, j+k) for click probabilities c_0..c_N.
pub fn generalized_klyshko_click(clicks: &[f64], bins: usize, kind: IndexKind) -> Result<(MomentMatrix, WitnessReport)> {
    if clicks.len() != bins + 1 {
        return Err(Error::dim(format!("{} click probabilities for N = {bins}", clicks.len())));
    }
    if bins < 1 {
        return Err(Error::param("click generalized Klyshko needs N >= 1"));
    }
    let entries = scaled_matrix(bins, kind, |a, b| {
        let s = kind.sum(a, b);
        clicks[s] / binomial(bins as u64, s as u64)
    });
    let m = MomentMatrix { entries, index_kind: kind, source: MatrixSource::ClickProbabilities };
    let report = WitnessReport::eigen(kind.witness_name("gen_klyshko"), m.min_eigenvalue());
    Ok((m, report))
}

impl IndexKind {
    fn witness_name(self, base: &str) -> &'static str {
        match (base, self) {
            ("gen_klyshko", IndexKind::Integer) => "gen_klyshko_int",
            ("gen_klyshko", IndexKind::HalfInteger) => "gen_klyshko_half",
            (_, IndexKind::Integer) => "multimode_gen_klyshko_int",
            (_, IndexKind::HalfInteger) => "multimode_gen_klyshko_half",
        }
    }
}

fn check_bins(bins: usize, min: usize, name: &str) -> Result<()> {
    if bins < min {
        return Err(Error::param(format!("{name} needs N >= {min}, got {bins}")));
    }
    Ok(())
}

/// Q_B = ⟨c²⟩ − ((N−1)/N)⟨c⟩² − ⟨c⟩ from click moments ⟨c⟩, ⟨c²⟩.
pub fn qb(click_moments: &[f64], bins: usize) -> Result<WitnessReport> {
    check_bins(bins, 2, "Q_B")?;
    if click_moments.len() < 2 {
        return Err(Error::param("Q_B needs two click moments"));
    }
    Ok(WitnessReport::scalar("qb", qb_value(click_moments, bins), 0.0))
}

fn qb_value(c: &[f64], bins: usize) -> f64 {
    let n = bins as f64;
    c[1] - (n - 1.0) / n * c[0] * c[0] - c[0]
}

/// Third-order binomial witness Q_{B,3} from ⟨c⟩, ⟨c²⟩, ⟨c³⟩.
pub fn qb3(click_moments: &[f64], bins: usize) -> Result<WitnessReport> {
    check_bins(bins, 3, "Q_B,3")?;
    if click_moments.len() < 3 {
        return Err(Error::param("Q_B,3 needs three click moments"));
    }
    Ok(WitnessReport::scalar("qb3", qb3_value(click_moments, bins), 0.0))
}

fn qb3_value(c: &[f64], bins: usize) -> f64 {
    let n = bins as f64;
    c[2] * c[0] - (n - 2.0) / (n - 1.0) * c[1] * c[1] - (n + 1.0) / (n - 1.0) * c[1] * c[0]
        + n / (n - 1.0) * c[0] * c[0]
}

/// Number of second-order features: d_x means then the upper triangle of ⟨n_i n_j⟩.
pub fn second_order_feature_count(d_x: usize) -> usize {
    d_x + d_x * (d_x + 1) / 2
}

/// (1+d)×(1+d) matrix [[1, ⟨n_j⟩], [⟨n_i⟩, ⟨:n_i n_j:⟩]] from the feature vector
/// (means, then raw ⟨n_i n_j⟩ for i ≤ j).
fn moment_matrix_from_features(d: usize, f: &[f64]) -> SquareMatrix {
    let mut m = SquareMatrix::zeros(d + 1);
    m[(0, 0)] = 1.0;
    for i in 0..d {
        m[(0, i + 1)] = f[i];
        m[(i + 1, 0)] = f[i];
    }
    let mut t = d;
    for i in 0..d {
        for j in i..d {
            let v = if i == j { f[t] - f[i] } else { f[t] };
            m[(i + 1, j + 1)] = v;
            m[(j + 1, i + 1)] = v;
            t += 1;
        }
    }
    m
}

fn second_order_features(row: &[u32], out: &mut [f64]) {
    let d = row.len();
    for i in 0..d {
        out[i] = row[i] as f64;
    }
    let mut t = d;
    for i in 0..d {
        for j in i..d {
            out[t] = row[i] as f64 * row[j] as f64;
            t += 1;
        }
    }
}

/// Second-order multimode matrix of moments from an exact joint table.
pub fn multimode_moment_matrix(joint: &JointDistribution) -> (MomentMatrix, WitnessReport) {
    let d = joint.d_x;
    let mut f = vec![0.0; second_order_feature_count(d)];
    let mut buf = f.clone();
    for (k, p) in &joint.entries {
        second_order_features(k, &mut buf);
        f.iter_mut().zip(&buf).for_each(|(a, b)| *a += p * b);
    }
    let m = MomentMatrix {
        entries: moment_matrix_from_features(d, &f),
        index_kind: IndexKind::Integer,
        source: MatrixSource::MultimodeMoments,
    };
    let r = WitnessReport::eigen("moment_matrix", m.min_eigenvalue());
    (m, r)
}

/// Positional superindex n_0 + n_1·base + … ; None if any digit ≥ base.
pub fn superindex(tuple: &[u32], base: usize) -> Option<usize> {
    let mut c = 0usize;
    let mut scale = 1usize;
    for &n in tuple {
        if n as usize >= base {
            return None;
        }
        c = c.checked_add((n as usize).checked_mul(scale)?)?;
        scale = scale.checked_mul(base)?;
    }
    Some(c)
}

fn digit_sum(mut x: usize, base: usize) -> usize {
    let mut s = 0;
    while x > 0 {
        s += x % base;
        x /= base;
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultimodeKlyshkoOptions {
    pub base: usize,
    pub kind: IndexKind,
    pub dimension_cap: usize,
    /// Without permission, a full matrix larger than the cap is an error.
    pub allow_truncation: bool,
}

impl MultimodeKlyshkoOptions {
    pub fn new(base: usize, kind: IndexKind) -> Self {
        Self { base, kind, dimension_cap: DEFAULT_DIMENSION_CAP, allow_truncation: true }
    }
}

/// Output of the multimode generalized Klyshko construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodeKlyshko {
    pub matrix: MomentMatrix,
    pub report: WitnessReport,
    pub full_dimension: usize,
    /// Index pairs of the evaluated block whose superindex sum carries a digit.
    pub carry_pairs: usize,
}

/// Plan the matrix: (full dimension, evaluated dimension, largest superindex needed).
fn multimode_layout(d_x: usize, opts: &MultimodeKlyshkoOptions) -> Result<(usize, usize, usize)> {
    if opts.base < 2 {
        return Err(Error::param(format!("superindex base must be >= 2, got {}", opts.base)));
    }
    if opts.dimension_cap == 0 || opts.dimension_cap > MAX_DIMENSION_CAP {
        return Err(Error::param(format!("dimension cap must lie in 1..={MAX_DIMENSION_CAP}")));
    }
    let c_max = (opts.base as f64).powi(d_x as i32) - 1.0;
    let full = if c_max > 1e15 { usize::MAX } else { opts.kind.dimension(c_max as usize) };
    if full > opts.dimension_cap && !opts.allow_truncation {
        return Err(Error::BasisOverflow { size: full, cap: opts.dimension_cap });
    }
    let dim = full.min(opts.dimension_cap);
    Ok((full, dim, opts.kind.sum(dim - 1, dim - 1)))
}

fn multimode_matrix(p: &[f64], dim: usize, base: usize, kind: IndexKind) -> (SquareMatrix, usize) {
    let mut carries = 0;
    let m = SquareMatrix::from_fn(dim, |a, b| {
        let s = kind.sum(a, b);
        let direct = digit_sum(a, base) + digit_sum(b, base) + usize::from(kind == IndexKind::HalfInteger);
        if digit_sum(s, base) != direct {
            carries += 1;
        }
        binomial_real(s as f64, kind.index(a)) * p[s]
    });
    (m, carries)
}

/// Generalized Klyshko matrix over superindexed multimode probabilities. Tuples with
/// any per-mode count ≥ base are dropped (overflow bins). Only the leading principal
/// block of size ≤ `dimension_cap` is evaluated.
pub fn multimode_generalized_klyshko(
    joint: &JointDistribution,
    opts: &MultimodeKlyshkoOptions,
) -> Result<MultimodeKlyshko> {
    let (full, dim, s_max) = multimode_layout(joint.d_x, opts)?;
    let mut p = vec![0.0; s_max + 1];
    for (k, q) in &joint.entries {
        if let Some(c) = superindex(k, opts.base) {
            if c <= s_max {
                p[c] += q;
            }
        }
    }
    Ok(assemble_multimode(&p, full, dim, opts))
}

fn assemble_multimode(p: &[f64], full: usize, dim: usize, opts: &MultimodeKlyshkoOptions) -> MultimodeKlyshko {
    let (entries, carry_pairs) = multimode_matrix(p, dim, opts.base, opts.kind);
    let matrix = MomentMatrix { entries, index_kind: opts.kind, source: MatrixSource::MultimodeProbabilities };
    let mut report = WitnessReport::eigen(opts.kind.witness_name("multimode"), matrix.min_eigenvalue());
    if dim < full {
        report.note = Some(format!("leading {dim} of {full} rows"));
    }
    MultimodeKlyshko { matrix, report, full_dimension: full, carry_pairs }
}

/// Sample means and covariance of per-sample feature vectors.
#[derive(Debug, Clone)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    /// Unbiased covariance, row-major.
    pub cov: Vec<f64>,
    pub m: usize,
}

impl FeatureStats {
    /// Accumulates over distinct sample rows, so cost scales with the number of distinct outcomes.
    pub fn from_samples(samples: &SampleSet, nf: usize, phi: impl Fn(&[u32], &mut [f64])) -> Result<Self> {
        let m = samples.m();
        if m < 2 {
            return Err(Error::param("empirical witnesses need at least 2 samples"));
        }
        let hist = samples.histogram();
        let mut feats = Vec::with_capacity(hist.len());
        let mut mean = vec![0.0; nf];
        for (row, count) in &hist {
            let mut f = vec![0.0; nf];
            phi(row, &mut f);
            for (a, b) in mean.iter_mut().zip(&f) {
                *a += *count as f64 * b;
            }
            feats.push((f, *count as f64));
        }
        mean.iter_mut().for_each(|a| *a /= m as f64);
        let mut cov = vec![0.0; nf * nf];
        for (f, w) in &feats {
            for i in 0..nf {
                let di = f[i] - mean[i];
                if di == 0.0 {
                    continue;
                }
                for j in 0..nf {
                    cov[i * nf + j] += w * di * (f[j] - mean[j]);
                }
            }
        }
        cov.iter_mut().for_each(|c| *c /= (m - 1) as f64);
        Ok(Self { mean, cov, m })
    }

    /// Value of `f` at the means and its delta-method standard error.
    pub fn delta(&self, f: impl Fn(&[f64]) -> f64) -> (f64, f64) {
        let nf = self.mean.len();
        let value = f(&self.mean);
        let mut grad = vec![0.0; nf];
        let mut x = self.mean.clone();
        for i in 0..nf {
            if self.cov[i * nf + i] == 0.0 {
                continue;
            }
            let h = 1e-6 * self.mean[i].abs().max(1.0);
            x[i] = self.mean[i] + h;
            let up = f(&x);
            x[i] = self.mean[i] - h;
            let down = f(&x);
            x[i] = self.mean[i];
            grad[i] = (up - down) / (2.0 * h);
        }
        let mut var = 0.0;
        for i in 0..nf {
            for j in 0..nf {
                var += grad[i] * self.cov[i * nf + j] * grad[j];
            }
        }
        let stderr = (var.max(0.0) / self.m as f64).sqrt();
        (value, if stderr.is_finite() { stderr } else { 0.0 })
    }
}

fn powers(row: &[u32], out: &mut [f64]) {
    let x = row[0] as f64;
    let mut p = 1.0;
    for o in out.iter_mut() {
        p *= x;
        *o = p;
    }
}

fn indicators(row: &[u32], out: &mut [f64]) {
    if let Some(o) = out.get_mut(row[0] as usize) {
        *o = 1.0;
    }
}

/// Named witnesses selectable on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    MandelQ,
    Q3,
    Klyshko,
    /// Smaller of the integer and half-integer minimal eigenvalues.
    GenKlyshko,
    GenKlyshkoInt,
    GenKlyshkoHalf,
    Qb,
    Qb3,
    MomentMatrix,
}

impl WitnessKind {
    pub const ALL: [WitnessKind; 9] = [
        WitnessKind::MandelQ,
        WitnessKind::Q3,
        WitnessKind::Klyshko,
        WitnessKind::GenKlyshko,
        WitnessKind::GenKlyshkoInt,
        WitnessKind::GenKlyshkoHalf,
        WitnessKind::Qb,
        WitnessKind::Qb3,
        WitnessKind::MomentMatrix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WitnessKind::MandelQ => "mandel_q",
            WitnessKind::Q3 => "q3",
            WitnessKind::Klyshko => "klyshko",
            WitnessKind::GenKlyshko => "gen_klyshko",
            WitnessKind::GenKlyshkoInt => "gen_klyshko_int",
            WitnessKind::GenKlyshkoHalf => "gen_klyshko_half",
            WitnessKind::Qb => "qb",
            WitnessKind::Qb3 => "qb3",
            WitnessKind::MomentMatrix => "moment_matrix",
        }
    }

    pub fn is_applicable(self, ctx: &WitnessContext) -> bool {
        use WitnessKind::*;
        match (ctx.d_x, ctx.click_bins) {
            (1, None) => matches!(self, MandelQ | Q3 | Klyshko | GenKlyshko | GenKlyshkoInt | GenKlyshkoHalf),
            (1, Some(n)) => match self {
                Qb => n >= 2,
                Qb3 => n >= 3,
                GenKlyshko | GenKlyshkoInt | GenKlyshkoHalf => true,
                _ => false,
            },
            (_, _) => matches!(self, MomentMatrix | GenKlyshko | GenKlyshkoInt | GenKlyshkoHalf),
        }
    }

    pub fn applicable(ctx: &WitnessContext) -> Vec<WitnessKind> {
        Self::ALL.into_iter().filter(|w| w.is_applicable(ctx)).collect()
    }

    fn check(self, ctx: &WitnessContext) -> Result<()> {
        if self.is_applicable(ctx) {
            return Ok(());
        }
        let valid: Vec<&str> = Self::applicable(ctx).iter().map(|w| w.name()).collect();
        Err(Error::NotApplicable(format!(
            "witness '{}' does not apply to {}; valid witnesses: {}",
            self.name(),
            ctx.describe(),
            valid.join(", ")
        )))
    }
}

impl fmt::Display for WitnessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WitnessKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|w| w.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|w| w.name()).collect();
            Error::Parse(format!("unknown witness '{s}'; expected one of {}", names.join(", ")))
        })
    }
}

/// What the detector tells a witness about the outcome alphabet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessContext {
    pub d_x: usize,
    /// Number of per-mode outcomes; for photon counting the last one is an overflow bin.
    pub outcomes: usize,
    /// Some(N) for multiplexed click detection.
    pub click_bins: Option<usize>,
    pub dimension_cap: usize,
}

impl WitnessContext {
    pub fn new(d_x: usize, detector: &DetectorModel) -> Self {
        let click_bins = match detector {
            DetectorModel::ClickMultiplex { bins, .. } => Some(*bins),
            _ => None,
        };
        Self { d_x, outcomes: detector.outcome_count(), click_bins, dimension_cap: DEFAULT_DIMENSION_CAP }
    }

    fn describe(&self) -> String {
        match (self.d_x, self.click_bins) {
            (1, None) => "single-mode photon-counting data".into(),
            (1, Some(n)) => format!("single-mode click data with N = {n}"),
            (d, _) => format!("{d}-mode data"),
        }
    }

    /// Retained photon-number probabilities p_0..p_C (overflow bin dropped for counting detectors).
    fn retained(&self) -> usize {
        match self.click_bins {
            Some(n) => n + 1,
            None => self.outcomes.saturating_sub(1).max(2),
        }
    }
}

fn gen_klyshko_kinds(w: WitnessKind) -> &'static [IndexKind] {
    match w {
        WitnessKind::GenKlyshkoInt => &[IndexKind::Integer],
        WitnessKind::GenKlyshkoHalf => &[IndexKind::HalfInteger],
        _ => &[IndexKind::Integer, IndexKind::HalfInteger],
    }
}

fn renamed(mut r: WitnessReport, w: WitnessKind) -> WitnessReport {
    r.name = w.name().into();
    r
}

fn min_report(reports: Vec<WitnessReport>, w: WitnessKind) -> WitnessReport {
    let best = reports
        .into_iter()
        .min_by(|a, b| (a.value + a.margin).total_cmp(&(b.value + b.margin)))
        .expect("at least one index kind");
    renamed(best, w)
}

/// Exact witness value from a single-mode outcome distribution.
pub fn evaluate_exact(w: WitnessKind, ctx: &WitnessContext, probs: &[f64]) -> Result<WitnessReport> {
    w.check(ctx)?;
    if ctx.d_x != 1 {
        return Err(Error::param("use evaluate_exact_joint for multimode data"));
    }
    let moment = |k: i32| probs.iter().enumerate().map(|(o, p)| (o as f64).powi(k) * p).sum::<f64>();
    let retained = &probs[..ctx.retained().min(probs.len())];
    Ok(match w {
        WitnessKind::MandelQ => mandel_q_from(moment(1), moment(2)),
        WitnessKind::Q3 => WitnessReport::scalar("q3", q3_from_raw(moment(1), moment(2), moment(3)), 0.0),
        WitnessKind::Klyshko => klyshko_min(retained).0,
        WitnessKind::Qb => qb(&[moment(1), moment(2)], ctx.click_bins.unwrap_or(0))?,
        WitnessKind::Qb3 => qb3(&[moment(1), moment(2), moment(3)], ctx.click_bins.unwrap_or(0))?,
        WitnessKind::GenKlyshko | WitnessKind::GenKlyshkoInt | WitnessKind::GenKlyshkoHalf => {
            let reports = gen_klyshko_kinds(w)
                .iter()
                .map(|&kind| match ctx.click_bins {
                    Some(n) => generalized_klyshko_click(probs, n, kind).map(|r| r.1),
                    None => generalized_klyshko_pnr(retained, kind).map(|r| r.1),
                })
                .collect::<Result<Vec<_>>>()?;
            min_report(reports, w)
        }
        WitnessKind::MomentMatrix => unreachable!("rejected by applicability check"),
    })
}

/// Exact witness value from a multimode joint outcome table.
pub fn evaluate_exact_joint(w: WitnessKind, ctx: &WitnessContext, joint: &JointDistribution) -> Result<WitnessReport> {
    w.check(ctx)?;
    match w {
        WitnessKind::MomentMatrix => Ok(multimode_moment_matrix(joint).1),
        _ if ctx.d_x == 1 => {
            let mut probs = vec![0.0; ctx.outcomes];
            for (k, p) in &joint.entries {
                probs[k[0] as usize] += p;
            }
            evaluate_exact(w, ctx, &probs)
        }
        _ => {
            let reports = gen_klyshko_kinds(w)
                .iter()
                .map(|&kind| {
                    let opts = MultimodeKlyshkoOptions {
                        dimension_cap: ctx.dimension_cap,
                        ..MultimodeKlyshkoOptions::new(ctx.retained(), kind)
                    };
                    multimode_generalized_klyshko(joint, &opts).map(|r| r.report)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(min_report(reports, w))
        }
    }
}

/// Witness estimated from samples, with a delta-method standard error.
pub fn evaluate_empirical(w: WitnessKind, ctx: &WitnessContext, samples: &SampleSet) -> Result<WitnessReport> {
    w.check(ctx)?;
    if samples.d_x() != ctx.d_x {
        return Err(Error::dim(format!("samples have {} modes, context {}", samples.d_x(), ctx.d_x)));
    }
    let stats_powers = |k: usize| FeatureStats::from_samples(samples, k, powers);
    let outcomes = ctx.outcomes.max(samples.max_value() as usize + 1);
    let report = match w {
        WitnessKind::MandelQ => {
            let st = stats_powers(2)?;
            let base = mandel_q_from(st.mean[0], st.mean[1]);
            if !base.applicable {
                return Ok(base);
            }
            let (v, se) = st.delta(|m| (m[1] - m[0] * m[0]) / m[0] - 1.0);
            WitnessReport { value: v, ..base }.with_stderr(se)
        }
        WitnessKind::Q3 => {
            let (v, se) = stats_powers(3)?.delta(|m| q3_from_raw(m[0], m[1], m[2]));
            WitnessReport::scalar("q3", v, 0.0).with_stderr(se)
        }
        WitnessKind::Qb | WitnessKind::Qb3 => {
            let n = ctx.click_bins.unwrap_or(0);
            let st = stats_powers(3)?;
            let (v, se) = if w == WitnessKind::Qb {
                st.delta(|m| qb_value(m, n))
            } else {
                st.delta(|m| qb3_value(m, n))
            };
            WitnessReport::scalar(w.name(), v, 0.0).with_stderr(se)
        }
        WitnessKind::Klyshko => {
            let st = FeatureStats::from_samples(samples, outcomes, indicators)?;
            let top = ctx.retained().min(outcomes);
            // observed outcomes only; k with the most significant violation
            let best = (1..top.saturating_sub(1))
                .filter(|&k| st.mean[k - 1] > 0.0 && st.mean[k] > 0.0 && st.mean[k + 1] > 0.0)
                .map(|k| {
                    let (v, se) = st.delta(|p| klyshko_ratio(p, k).unwrap_or(f64::INFINITY));
                    let score = if se > 0.0 {
                        (v - 1.0) / se
                    } else if v < 1.0 {
                        f64::NEG_INFINITY
                    } else {
                        f64::INFINITY
                    };
                    (score, v, se)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0));
            match best {
                Some((_, v, se)) => WitnessReport::scalar("klyshko", v, 1.0).with_stderr(se),
                None => WitnessReport::not_applicable("klyshko", 1.0, "no k with three observed outcomes"),
            }
        }
        WitnessKind::GenKlyshko | WitnessKind::GenKlyshkoInt | WitnessKind::GenKlyshkoHalf if ctx.d_x == 1 => {
            let st = FeatureStats::from_samples(samples, outcomes, indicators)?;
            let retained = ctx.retained();
            let reports = gen_klyshko_kinds(w)
                .iter()
                .map(|&kind| {
                    let eval = |p: &[f64]| -> f64 {
                        let r = match ctx.click_bins {
                            Some(n) => generalized_klyshko_click(&p[..=n], n, kind),
                            None => generalized_klyshko_pnr(&p[..retained], kind),
                        };
                        r.map(|r| r.1.value).unwrap_or(f64::NAN)
                    };
                    let (v, se) = st.delta(eval);
                    WitnessReport::eigen(kind.witness_name("gen_klyshko"), v).with_stderr(se)
                })
                .collect();
            min_report(reports, w)
        }
        WitnessKind::MomentMatrix => {
            let d = ctx.d_x;
            let st = FeatureStats::from_samples(samples, second_order_feature_count(d), second_order_features)?;
            let (v, se) = st.delta(|f| jacobi_eigen(&moment_matrix_from_features(d, f)).min().0);
            WitnessReport::eigen("moment_matrix", v).with_stderr(se)
        }
        _ => {
            let reports = gen_klyshko_kinds(w)
                .iter()
                .map(|&kind| {
                    let opts = MultimodeKlyshkoOptions {
                        dimension_cap: ctx.dimension_cap,
                        ..MultimodeKlyshkoOptions::new(ctx.retained(), kind)
                    };
                    let (full, dim, s_max) = multimode_layout(ctx.d_x, &opts)?;
                    let phi = |row: &[u32], out: &mut [f64]| {
                        if let Some(c) = superindex(row, opts.base) {
                            if c <= s_max {
                                out[c] = 1.0;
                            }
                        }
                    };
                    let st = FeatureStats::from_samples(samples, s_max + 1, phi)?;
                    let (v, se) = st.delta(|p| assemble_multimode(p, full, dim, &opts).report.value);
                    let mut r = assemble_multimode(&st.mean, full, dim, &opts).report;
                    r.value = v;
                    Ok(r.with_stderr(se))
                })
                .collect::<Result<Vec<_>>>()?;
            min_report(reports, w)
        }
    };
    Ok(renamed(report, w))
}

/// Classical/nonclassical accuracies of the biased witness over a labeled set, per bias.
pub fn sweep_bias(name: &str, reports: &[(WitnessReport, Label)], biases: &[f64]) -> Result<TradeoffCurve> {
    if biases.is_empty() {
        return Err(Error::Empty("bias grid".into()));
    }
    let labels: Vec<Label> = reports.iter().map(|r| r.1).collect();
    let mut points = Vec::with_capacity(biases.len());
    for &b in biases {
        let preds: Vec<Label> = reports
            .iter()
            .map(|(r, _)| if r.verdict_at_bias(b) { Label::Nonclassical } else { Label::Classical })
            .collect();
        let acc = accuracy_report(&preds, &labels)?;
        let (Some(cl), Some(ncl)) = (acc.classical, acc.nonclassical) else {
            return Err(Error::SingleClass("bias sweep needs both classes".into()));
        };
        points.push(CurvePoint::new(b, cl, ncl, acc.total, labels.len()));
    }
    Ok(TradeoffCurve { method: name.into(), points })
}

/// Label-wise counts of flagged states; handy for quick summaries.
pub fn flagged_counts(reports: &[(WitnessReport, Label)], bias: f64) -> HashMap<Label, (usize, usize)> {
    let mut out: HashMap<Label, (usize, usize)> = HashMap::new();
    for (r, l) in reports {
        let e = out.entry(*l).or_default();
        e.1 += 1;
        if r.verdict_at_bias(bias) {
            e.0 += 1;
        }
    }
    out
}
