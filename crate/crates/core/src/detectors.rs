//! Detector models mapping true photon statistics to observed outcomes, and seeded sampling.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockstats::{poisson_pmf, Label, PhotonDistribution, PhotonStatistics, MOMENT_TAIL_LIMIT};
use crate::special::{binomial, ln_factorial};

/// Alternating sums in [`click_distribution`] lose precision beyond this many bins.
pub const MAX_CLICK_BINS: usize = 64;
/// Tolerance on POVM column sums and outcome normalization.
pub const POVM_TOL: f64 = 1e-9;

/// POVM as an outcome × photon-number matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovmMatrix {
    pub outcomes: usize,
    pub cutoff: usize,
    /// `matrix[o][m]` = p(outcome o | m photons), m = 0..=cutoff.
    pub matrix: Vec<Vec<f64>>,
}

impl PovmMatrix {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let outcomes = matrix.len();
        if outcomes == 0 {
            return Err(Error::Empty("POVM matrix".into()));
        }
        let cols = matrix[0].len();
        if cols == 0 {
            return Err(Error::Empty("POVM matrix columns".into()));
        }
        let povm = Self { outcomes, cutoff: cols - 1, matrix };
        povm.validate()?;
        Ok(povm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.matrix.len() != self.outcomes {
            return Err(Error::dim(format!(
                "POVM declares {} outcomes but has {} rows",
                self.outcomes,
                self.matrix.len()
            )));
        }
        for (o, row) in self.matrix.iter().enumerate() {
            if row.len() != self.cutoff + 1 {
                return Err(Error::dim(format!(
                    "POVM row {o} has {} columns, expected {}",
                    row.len(),
                    self.cutoff + 1
                )));
            }
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::param(format!("POVM row {o} has invalid entry {v}")));
            }
        }
        for m in 0..=self.cutoff {
            let s: f64 = self.matrix.iter().map(|row| row[m]).sum();
            if (s - 1.0).abs() > POVM_TOL {
                return Err(Error::param(format!("POVM column {m} sums to {s}, expected 1")));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let povm: PovmMatrix = serde_json::from_str(&text)?;
        povm.validate()?;
        Ok(povm)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        self.matrix.iter().map(|row| row[m]).collect()
    }
}

/// How photons become observed outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorModel {
    /// Exact photon counting; outcome `cutoff` absorbs everything above.
    IdealPnr { cutoff: usize },
    /// Binomial loss, Poisson dark counts, then binning by lower edges. The last bin is open.
    BinnedPnr { efficiency: f64, dark_rate: f64, bin_edges: Vec<usize> },
    /// `bins` threshold detectors behind a balanced splitter; outcome = number of clicks.
    ClickMultiplex { bins: usize, efficiency: f64, dark_rate: f64 },
    /// Externally supplied POVM.
    Povm(PovmMatrix),
}

impl DetectorModel {
    /// Resolution 0, 1, 2, 3, 4+ with the given efficiency and dark rate.
    pub fn binned(efficiency: f64, dark_rate: f64) -> Self {
        DetectorModel::BinnedPnr { efficiency, dark_rate, bin_edges: vec![0, 1, 2, 3, 4] }
    }

    pub fn outcome_count(&self) -> usize {
        match self {
            DetectorModel::IdealPnr { cutoff } => cutoff + 1,
            DetectorModel::BinnedPnr { bin_edges, .. } => bin_edges.len(),
            DetectorModel::ClickMultiplex { bins, .. } => bins + 1,
            DetectorModel::Povm(p) => p.outcomes,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DetectorModel::IdealPnr { .. } => "ideal_pnr",
            DetectorModel::BinnedPnr { .. } => "binned_pnr",
            DetectorModel::ClickMultiplex { .. } => "click_multiplex",
            DetectorModel::Povm(_) => "povm",
        }
    }

    pub fn is_click(&self) -> bool {
        matches!(self, DetectorModel::ClickMultiplex { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let check_eta_nu = |eta: f64, nu: f64| {
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::param(format!("efficiency must lie in [0, 1], got {eta}")));
            }
            if !(nu >= 0.0 && nu.is_finite()) {
                return Err(Error::param(format!("dark rate must be >= 0, got {nu}")));
            }
            Ok(())
        };
        match self {
            DetectorModel::IdealPnr { .. } => Ok(()),
            DetectorModel::BinnedPnr { efficiency, dark_rate, bin_edges } => {
                check_eta_nu(*efficiency, *dark_rate)?;
                if bin_edges.first() != Some(&0) {
                    return Err(Error::param("bin edges must start at 0"));
                }
                if bin_edges.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::param("bin edges must be strictly increasing"));
                }
                Ok(())
            }
            DetectorModel::ClickMultiplex { bins, efficiency, dark_rate } => {
                check_eta_nu(*efficiency, *dark_rate)?;
                if *bins < 1 || *bins > MAX_CLICK_BINS {
                    return Err(Error::param(format!(
                        "click bins must lie in 1..={MAX_CLICK_BINS}, got {bins}"
                    )));
                }
                Ok(())
            }
            DetectorModel::Povm(p) => p.validate(),
        }
    }

    /// Outcome distribution for exactly `m` incident photons.
    pub fn column(&self, m: usize) -> Result<Vec<f64>> {
        let dist = PhotonDistribution::point_mass(m);
        Ok(respond(&dist, self)?.probs)
    }

    /// Tabulated POVM for photon numbers 0..=cutoff.
    pub fn povm_matrix(&self, cutoff: usize) -> Result<PovmMatrix> {
        let cols: Vec<Vec<f64>> = (0..=cutoff).map(|m| self.column(m)).collect::<Result<_>>()?;
        let outcomes = self.outcome_count();
        let matrix = (0..outcomes).map(|o| cols.iter().map(|c| c[o]).collect()).collect();
        Ok(PovmMatrix { outcomes, cutoff, matrix })
    }
}

/// Probabilities over observed outcomes 0..outcome_count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub probs: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("outcome distribution".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::param("outcome probabilities must be finite and >= 0"));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > POVM_TOL {
            return Err(Error::param(format!("outcome probabilities sum to {s}")));
        }
        Ok(Self { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// ⟨o^k⟩ for k = 1..=order.
    pub fn raw_moments(&self, order: usize) -> Vec<f64> {
        (1..=order)
            .map(|k| self.probs.iter().enumerate().map(|(o, p)| (o as f64).powi(k as i32) * p).sum())
            .collect()
    }

    pub fn total_variation(&self, other: &OutcomeDistribution) -> f64 {
        let n = self.len().max(other.len());
        0.5 * (0..n)
            .map(|i| {
                let a = self.probs.get(i).copied().unwrap_or(0.0);
                let b = other.probs.get(i).copied().unwrap_or(0.0);
                (a - b).abs()
            })
            .sum::<f64>()
    }
}

/// Joint probabilities over per-mode outcome tuples, sorted by superindex
/// (mode 0 least significant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    pub d_x: usize,
    pub entries: Vec<(Vec<u32>, f64)>,
}

impl JointDistribution {
    pub fn from_map(d_x: usize, map: HashMap<Vec<u32>, f64>) -> Self {
        let mut entries: Vec<(Vec<u32>, f64)> = map.into_iter().filter(|(_, p)| *p > 0.0).collect();
        entries.sort_by(|a, b| a.0.iter().rev().cmp(b.0.iter().rev()));
        Self { d_x, entries }
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    pub fn normalized(mut self) -> Self {
        let t = self.total();
        if t > 0.0 {
            for e in &mut self.entries {
                e.1 /= t;
            }
        }
        self
    }

    pub fn probability(&self, tuple: &[u32]) -> f64 {
        self.entries
            .binary_search_by(|(k, _)| k.iter().rev().cmp(tuple.iter().rev()))
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    /// Single-mode marginal over 0..=max outcome.
    pub fn marginal(&self, mode: usize) -> Vec<f64> {
        let max = self.entries.iter().map(|(k, _)| k[mode]).max().unwrap_or(0) as usize;
        let mut out = vec![0.0; max + 1];
        for (k, p) in &self.entries {
            out[k[mode] as usize] += p;
        }
        out
    }

    /// E[Π_i n_i^{e_i}] for an exponent per mode.
    pub fn expectation(&self, f: impl Fn(&[u32]) -> f64) -> f64 {
        self.entries.iter().map(|(k, p)| f(k) * p).sum()
    }

    pub fn total_variation(&self, other: &JointDistribution) -> f64 {
        let mut map: HashMap<&[u32], f64> = HashMap::new();
        for (k, p) in &self.entries {
            *map.entry(k.as_slice()).or_default() += p;
        }
        for (k, p) in &other.entries {
            *map.entry(k.as_slice()).or_default() -= p;
        }
        0.5 * map.values().map(|v| v.abs()).sum::<f64>()
    }
}

/// M × d_x matrix of observed outcomes for one labeled state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    d_x: usize,
    /// Row-major, sample α occupies `data[α·d_x .. (α+1)·d_x]`.
    data: Vec<u32>,
    pub label: Label,
    pub seed: u64,
}

impl SampleSet {
    pub fn new(d_x: usize, data: Vec<u32>, label: Label, seed: u64) -> Result<Self> {
        if d_x == 0 {
            return Err(Error::param("d_x must be >= 1"));
        }
        if !data.len().is_multiple_of(d_x) {
            return Err(Error::dim(format!("{} entries do not fill rows of width {d_x}", data.len())));
        }
        Ok(Self { d_x, data, label, seed })
    }

    pub fn from_rows(rows: &[Vec<u32>], label: Label) -> Result<Self> {
        let d_x = rows.first().map(|r| r.len()).ok_or_else(|| Error::Empty("sample rows".into()))?;
        if rows.iter().any(|r| r.len() != d_x) {
            return Err(Error::dim("ragged sample rows"));
        }
        Self::new(d_x, rows.concat(), label, 0)
    }

    pub fn single_mode(values: Vec<u32>) -> Self {
        Self { d_x: 1, data: values, label: Label::Classical, seed: 0 }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    /// Number of samples M.
    pub fn m(&self) -> usize {
        self.data.len() / self.d_x
    }

    pub fn row(&self, alpha: usize) -> &[u32] {
        &self.data[alpha * self.d_x..(alpha + 1) * self.d_x]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.data.chunks_exact(self.d_x)
    }

    pub fn column(&self, mode: usize) -> impl Iterator<Item = u32> + '_ {
        self.data.iter().skip(mode).step_by(self.d_x).copied()
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    pub fn max_value(&self) -> u32 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Distinct rows with multiplicities in lexicographic order. Summing over this
    /// makes sample statistics independent of sample order.
    pub fn histogram(&self) -> Vec<(Vec<u32>, usize)> {
        let mut map: std::collections::BTreeMap<&[u32], usize> = std::collections::BTreeMap::new();
        for r in self.rows() {
            *map.entry(r).or_default() += 1;
        }
        map.into_iter().map(|(k, v)| (k.to_vec(), v)).collect()
    }

    /// Relative frequencies of one mode's outcomes over 0..outcomes.
    pub fn frequencies(&self, mode: usize, outcomes: usize) -> Vec<f64> {
        let mut counts = vec![0.0; outcomes.max(self.max_value() as usize + 1)];
        for v in self.column(mode) {
            counts[v as usize] += 1.0;
        }
        let m = self.m() as f64;
        counts.iter_mut().for_each(|c| *c /= m);
        counts
    }
}

fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Inverse-CDF sampler over a finite probability vector.
struct InverseCdf {
    cdf: Vec<f64>,
    last_nonzero: usize,
}

impl InverseCdf {
    fn new(probs: impl Iterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        let mut last_nonzero = 0;
        let cdf: Vec<f64> = probs
            .enumerate()
            .map(|(i, p)| {
                if p > 0.0 {
                    last_nonzero = i;
                }
                acc += p;
                acc
            })
            .collect();
        Self { cdf, last_nonzero }
    }

    fn draw(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cdf.last().unwrap_or(&1.0);
        let u: f64 = rng.random::<f64>() * total;
        let i = self.cdf.partition_point(|&c| c <= u);
        i.min(self.last_nonzero)
    }
}

/// M i.i.d. draws from a single-mode outcome distribution.
pub fn sample(outcomes: &OutcomeDistribution, m: usize, seed: u64) -> SampleSet {
    let sampler = InverseCdf::new(outcomes.probs.iter().copied());
    let mut rng = rng_from_seed(seed);
    let data = (0..m).map(|_| sampler.draw(&mut rng) as u32).collect();
    SampleSet { d_x: 1, data, label: Label::Classical, seed }
}

/// M i.i.d. draws of outcome tuples from a joint table.
pub fn sample_joint(joint: &JointDistribution, m: usize, seed: u64) -> SampleSet {
    let sampler = InverseCdf::new(joint.entries.iter().map(|(_, p)| *p));
    let mut rng = rng_from_seed(seed);
    let mut data = Vec::with_capacity(m * joint.d_x);
    for _ in 0..m {
        let i = sampler.draw(&mut rng);
        data.extend_from_slice(&joint.entries[i].0);
    }
    SampleSet { d_x: joint.d_x, data, label: Label::Classical, seed }
}

/// M i.i.d. tuples from independent per-mode outcome distributions.
pub fn sample_product(marginals: &[OutcomeDistribution], m: usize, seed: u64) -> SampleSet {
    let samplers: Vec<InverseCdf> = marginals.iter().map(|d| InverseCdf::new(d.probs.iter().copied())).collect();
    let mut rng = rng_from_seed(seed);
    let mut data = Vec::with_capacity(m * marginals.len());
    for _ in 0..m {
        for s in &samplers {
            data.push(s.draw(&mut rng) as u32);
        }
    }
    SampleSet { d_x: marginals.len(), data, label: Label::Classical, seed }
}

fn check_tail(dist: &PhotonDistribution) -> Result<()> {
    if dist.tail_mass >= MOMENT_TAIL_LIMIT {
        return Err(Error::Truncation { tail: dist.tail_mass, limit: MOMENT_TAIL_LIMIT });
    }
    Ok(())
}

/// Click-count distribution of an N-bin multiplexed threshold detector.
pub fn click_distribution(
    dist: &PhotonDistribution,
    bins: usize,
    efficiency: f64,
    dark_rate: f64,
) -> Result<OutcomeDistribution> {
    check_tail(dist)?;
    click_distribution_from(dist, bins, efficiency, dark_rate)
}

/// Click distribution from any source of normal-ordered exponentials,
/// c_k = C(N,k) Σ_l C(k,l) (−1)^l ⟨:e^{−(N−k+l)Γ̂}:⟩ with Γ̂ = η n̂ / N + ν.
pub fn click_distribution_from(
    stats: &impl PhotonStatistics,
    bins: usize,
    efficiency: f64,
    dark_rate: f64,
) -> Result<OutcomeDistribution> {
    DetectorModel::ClickMultiplex { bins, efficiency, dark_rate }.validate()?;
    let n = bins;
    let exp_gamma = |s: usize| -> Result<f64> {
        let x = s as f64 * efficiency / n as f64;
        if x > 1.0 + 1e-15 {
            return Err(Error::param(format!("s·η/N = {x} exceeds 1")));
        }
        Ok((-(s as f64) * dark_rate).exp() * stats.normal_ordered_exp(x))
    };
    let e: Vec<f64> = (0..=n).map(exp_gamma).collect::<Result<_>>()?;
    let mut probs = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let mut acc = 0.0;
        for l in 0..=k {
            let term = binomial(k as u64, l as u64) * e[n - k + l];
            if l % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        let c = binomial(n as u64, k as u64) * acc;
        // cancellation noise
        probs.push(if c < 0.0 && c > -1e-9 { 0.0 } else { c });
    }
    Ok(OutcomeDistribution { probs })
}

fn binomial_pmf(m: usize, j: usize, p: f64) -> f64 {
    if j > m {
        return 0.0;
    }
    if p == 0.0 {
        return if j == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if j == m { 1.0 } else { 0.0 };
    }
    (ln_factorial(m as u64) - ln_factorial(j as u64) - ln_factorial((m - j) as u64)
        + j as f64 * p.ln()
        + (m - j) as f64 * (1.0 - p).ln())
    .exp()
}

/// Observed distribution for photon-number-resolving detectors (ideal, binned or POVM).
/// Click models are routed to [`click_distribution`].
pub fn pnr_response(dist: &PhotonDistribution, model: &DetectorModel) -> Result<OutcomeDistribution> {
    model.validate()?;
    match model {
        DetectorModel::IdealPnr { cutoff } => {
            let c = *cutoff;
            let mut probs = vec![0.0; c + 1];
            for (m, &p) in dist.probs.iter().enumerate() {
                probs[m.min(c)] += p;
            }
            probs[c] += dist.tail_mass;
            Ok(OutcomeDistribution { probs })
        }
        DetectorModel::BinnedPnr { efficiency, dark_rate, bin_edges } => {
            let top = *bin_edges.last().expect("validated");
            // detected counts below the open top bin
            let mut thinned = vec![0.0; top];
            for (m, &p) in dist.probs.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (j, t) in thinned.iter_mut().enumerate().take(m.min(top.saturating_sub(1)) + 1) {
                    *t += p * binomial_pmf(m, j, *efficiency);
                }
            }
            let dark: Vec<f64> = (0..top).map(|k| poisson_pmf(*dark_rate, k)).collect();
            let detected: Vec<f64> = (0..top)
                .map(|k| (0..=k).map(|j| thinned[j] * dark[k - j]).sum())
                .collect();
            let mut probs = vec![0.0; bin_edges.len()];
            for (i, w) in bin_edges.windows(2).enumerate() {
                probs[i] = detected[w[0]..w[1]].iter().sum();
            }
            let lower: f64 = probs.iter().sum();
            *probs.last_mut().expect("nonempty") = (1.0 - lower).max(0.0);
            Ok(OutcomeDistribution { probs })
        }
        DetectorModel::ClickMultiplex { bins, efficiency, dark_rate } => {
            click_distribution(dist, *bins, *efficiency, *dark_rate)
        }
        DetectorModel::Povm(povm) => {
            if dist.cutoff() > povm.cutoff {
                return Err(Error::dim(format!(
                    "distribution cutoff {} exceeds POVM cutoff {}",
                    dist.cutoff(),
                    povm.cutoff
                )));
            }
            if dist.tail_mass > POVM_TOL {
                return Err(Error::Truncation { tail: dist.tail_mass, limit: POVM_TOL });
            }
            let probs = povm
                .matrix
                .iter()
                .map(|row| row.iter().zip(&dist.probs).map(|(a, p)| a * p).sum())
                .collect();
            Ok(OutcomeDistribution { probs })
        }
    }
}

/// Any detector applied to a truncated distribution.
pub fn respond(dist: &PhotonDistribution, model: &DetectorModel) -> Result<OutcomeDistribution> {
    pnr_response(dist, model)
}

/// Applies a per-mode detector independently to a joint photon-number table.
pub fn detect_joint(photons: &JointDistribution, model: &DetectorModel) -> Result<JointDistribution> {
    model.validate()?;
    let max_n = photons.entries.iter().flat_map(|(k, _)| k.iter()).copied().max().unwrap_or(0) as usize;
    let columns: Vec<Vec<(u32, f64)>> = (0..=max_n)
        .map(|m| {
            model.column(m).map(|col| {
                col.into_iter()
                    .enumerate()
                    .filter(|(_, p)| *p > 0.0)
                    .map(|(o, p)| (o as u32, p))
                    .collect()
            })
        })
        .collect::<Result<_>>()?;
    let mut current: HashMap<Vec<u32>, f64> = HashMap::new();
    for (k, p) in &photons.entries {
        *current.entry(k.clone()).or_default() += p;
    }
    for mode in 0..photons.d_x {
        let mut next: HashMap<Vec<u32>, f64> = HashMap::with_capacity(current.len());
        for (k, p) in current {
            for &(o, q) in &columns[k[mode] as usize] {
                let mut key = k.clone();
                key[mode] = o;
                *next.entry(key).or_default() += p * q;
            }
        }
        current = next;
    }
    Ok(JointDistribution::from_map(photons.d_x, current))
}

/// Normal-ordered click-operator moments ⟨:π̂^k:⟩ from click moments ⟨ĉ^k⟩, k = 1..=3.
pub fn normal_ordered_pi_moments(click_moments: &[f64], bins: usize) -> Result<Vec<f64>> {
    let n = bins as f64;
    let order = click_moments.len();
    if order == 0 || order > 3 {
        return Err(Error::param("between one and three click moments are required"));
    }
    if bins < order {
        return Err(Error::param(format!("order-{order} click moments need N >= {order}, got N = {bins}")));
    }
    let c = click_moments;
    let mut out = vec![c[0] / n];
    if order >= 2 {
        out.push((c[1] - c[0]) / (n * (n - 1.0)));
    }
    if order >= 3 {
        out.push((c[2] - 3.0 * c[1] + 2.0 * c[0]) / (n * (n - 1.0) * (n - 2.0)));
    }
    Ok(out)
}
