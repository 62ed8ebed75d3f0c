//! Photon-number distributions of the single-mode state families and their moments.

use serde::{Deserialize, Serialize};

use crate::detectors::SampleSet;
use crate::error::{Error, Result};
use crate::special::{falling_factorial, ln_factorial};

/// Largest cutoff chosen by [`default_cutoff`].
pub const MAX_AUTO_CUTOFF: usize = 200;
/// Tail mass targeted by [`default_cutoff`].
pub const AUTO_TAIL_TARGET: f64 = 1e-10;
/// Moments refuse distributions whose truncated tail exceeds this.
pub const MOMENT_TAIL_LIMIT: f64 = 1e-8;

/// Classical (0) or nonclassical (1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Classical,
    Nonclassical,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Classical => 0.0,
            Label::Nonclassical => 1.0,
        }
    }

    pub fn as_u8(self) -> u8 {
        self.as_f64() as u8
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Classical),
            1 => Ok(Label::Nonclassical),
            _ => Err(Error::param(format!("label must be 0 or 1, got {v}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Coherent,
    MixedCoherent,
    Thermal,
    SqueezedVacuum,
    Spats,
    LossyFock,
}

impl Family {
    pub fn label(self) -> Label {
        match self {
            Family::Coherent | Family::MixedCoherent | Family::Thermal => Label::Classical,
            Family::SqueezedVacuum | Family::Spats | Family::LossyFock => Label::Nonclassical,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Coherent => "coherent",
            Family::MixedCoherent => "mixed_coherent",
            Family::Thermal => "thermal",
            Family::SqueezedVacuum => "squeezed_vacuum",
            Family::Spats => "spats",
            Family::LossyFock => "lossy_fock",
        }
    }
}

/// A single-mode input state with its family parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum StateSpec {
    Coherent { alpha: f64 },
    /// Equal mixture of two coherent states.
    MixedCoherent { alpha1: f64, alpha2: f64 },
    Thermal { nbar: f64 },
    SqueezedVacuum { r: f64 },
    /// Single-photon-added thermal state.
    Spats { nbar: f64 },
    /// (1 − p_loss)|n⟩⟨n| + p_loss|n−1⟩⟨n−1|.
    LossyFock { n: u32, p_loss: f64 },
}

impl StateSpec {
    pub fn family(&self) -> Family {
        match self {
            StateSpec::Coherent { .. } => Family::Coherent,
            StateSpec::MixedCoherent { .. } => Family::MixedCoherent,
            StateSpec::Thermal { .. } => Family::Thermal,
            StateSpec::SqueezedVacuum { .. } => Family::SqueezedVacuum,
            StateSpec::Spats { .. } => Family::Spats,
            StateSpec::LossyFock { .. } => Family::LossyFock,
        }
    }

    pub fn label(&self) -> Label {
        self.family().label()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be finite, got {v}")))
            }
        };
        let nonneg = |name: &str, v: f64| {
            finite(name, v)?;
            if v >= 0.0 {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be >= 0, got {v}")))
            }
        };
        match *self {
            StateSpec::Coherent { alpha } => finite("alpha", alpha),
            StateSpec::MixedCoherent { alpha1, alpha2 } => {
                finite("alpha1", alpha1)?;
                finite("alpha2", alpha2)
            }
            StateSpec::Thermal { nbar } | StateSpec::Spats { nbar } => nonneg("nbar", nbar),
            StateSpec::SqueezedVacuum { r } => finite("r", r),
            StateSpec::LossyFock { n, p_loss } => {
                if n < 1 {
                    return Err(Error::param("lossy Fock state needs n >= 1"));
                }
                finite("p_loss", p_loss)?;
                if !(0.0..=1.0).contains(&p_loss) {
                    return Err(Error::param(format!("p_loss must lie in [0, 1], got {p_loss}")));
                }
                Ok(())
            }
        }
    }

    /// Mean photon number in closed form.
    pub fn mean_photons(&self) -> f64 {
        match *self {
            StateSpec::Coherent { alpha } => alpha * alpha,
            StateSpec::MixedCoherent { alpha1, alpha2 } => 0.5 * (alpha1 * alpha1 + alpha2 * alpha2),
            StateSpec::Thermal { nbar } => nbar,
            StateSpec::SqueezedVacuum { r } => r.sinh().powi(2),
            StateSpec::Spats { nbar } => 2.0 * nbar + 1.0,
            StateSpec::LossyFock { n, p_loss } => n as f64 - p_loss,
        }
    }

    /// Probability of `m` photons.
    pub fn probability(&self, m: usize) -> f64 {
        let mf = m as f64;
        match *self {
            StateSpec::Coherent { alpha } => poisson_pmf(alpha * alpha, m),
            StateSpec::MixedCoherent { alpha1, alpha2 } => {
                0.5 * (poisson_pmf(alpha1 * alpha1, m) + poisson_pmf(alpha2 * alpha2, m))
            }
            StateSpec::Thermal { nbar } => {
                if nbar == 0.0 {
                    return if m == 0 { 1.0 } else { 0.0 };
                }
                (mf * nbar.ln() - (mf + 1.0) * (1.0 + nbar).ln()).exp()
            }
            StateSpec::SqueezedVacuum { r } => {
                if m % 2 == 1 {
                    return 0.0;
                }
                let r = r.abs();
                if r == 0.0 {
                    return if m == 0 { 1.0 } else { 0.0 };
                }
                let n = (m / 2) as u64;
                let nf = n as f64;
                (2.0 * nf * r.tanh().ln() + ln_factorial(2 * n)
                    - 2.0 * nf * std::f64::consts::LN_2
                    - 2.0 * ln_factorial(n)
                    - r.cosh().ln())
                .exp()
            }
            StateSpec::Spats { nbar } => {
                if m == 0 {
                    return 0.0;
                }
                if nbar == 0.0 {
                    return if m == 1 { 1.0 } else { 0.0 };
                }
                mf * ((mf - 1.0) * nbar.ln() - (mf + 1.0) * (1.0 + nbar).ln()).exp()
            }
            StateSpec::LossyFock { n, p_loss } => {
                let n = n as usize;
                if m == n {
                    1.0 - p_loss
                } else if m + 1 == n {
                    p_loss
                } else {
                    0.0
                }
            }
        }
    }
}

/// Poisson weight e^{−μ} μ^m / m!, evaluated in log space.
pub fn poisson_pmf(mu: f64, m: usize) -> f64 {
    if mu == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    (-mu + m as f64 * mu.ln() - ln_factorial(m as u64)).exp()
}

/// Anything with a photon-number generating function G(z) = Σ p_m z^m.
///
/// The normal-ordered exponential ⟨:e^{−x n̂}:⟩ equals G(1 − x).
pub trait PhotonStatistics {
    fn generating_function(&self, z: f64) -> f64;

    fn normal_ordered_exp(&self, x: f64) -> f64 {
        self.generating_function(1.0 - x)
    }
}

impl PhotonStatistics for StateSpec {
    fn generating_function(&self, z: f64) -> f64 {
        match *self {
            StateSpec::Coherent { alpha } => (alpha * alpha * (z - 1.0)).exp(),
            StateSpec::MixedCoherent { alpha1, alpha2 } => {
                0.5 * ((alpha1 * alpha1 * (z - 1.0)).exp() + (alpha2 * alpha2 * (z - 1.0)).exp())
            }
            StateSpec::Thermal { nbar } => 1.0 / (1.0 + nbar * (1.0 - z)),
            StateSpec::SqueezedVacuum { r } => {
                1.0 / (r.cosh().powi(2) - z * z * r.sinh().powi(2)).sqrt()
            }
            StateSpec::Spats { nbar } => z / (1.0 + nbar * (1.0 - z)).powi(2),
            StateSpec::LossyFock { n, p_loss } => {
                (1.0 - p_loss) * z.powi(n as i32) + p_loss * z.powi(n as i32 - 1)
            }
        }
    }
}

/// Photon-number probabilities for m = 0..=cutoff plus the mass beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonDistribution {
    pub probs: Vec<f64>,
    pub tail_mass: f64,
}

impl PhotonDistribution {
    /// Builds a distribution from explicit probabilities; the tail is whatever is missing.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("probability vector".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::param(format!("probabilities must be finite and >= 0, got {p}")));
        }
        let total: f64 = probs.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::param(format!("probabilities sum to {total} > 1")));
        }
        Ok(Self { probs, tail_mass: (1.0 - total).max(0.0) })
    }

    pub fn point_mass(m: usize) -> Self {
        let mut probs = vec![0.0; m + 1];
        probs[m] = 1.0;
        Self { probs, tail_mass: 0.0 }
    }

    pub fn cutoff(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.tail_mass
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(m, p)| m as f64 * p).sum()
    }
}

impl PhotonStatistics for PhotonDistribution {
    fn generating_function(&self, z: f64) -> f64 {
        // Horner from the top
        self.probs.iter().rev().fold(0.0, |acc, p| acc * z + p)
    }
}

/// Exact distribution of `spec` truncated at `cutoff`.
pub fn photon_distribution(spec: &StateSpec, cutoff: usize) -> Result<PhotonDistribution> {
    spec.validate()?;
    let probs: Vec<f64> = (0..=cutoff).map(|m| spec.probability(m)).collect();
    let total: f64 = probs.iter().sum();
    Ok(PhotonDistribution { probs, tail_mass: (1.0 - total).max(0.0) })
}

/// Smallest cutoff with tail below 1e-10, capped at 200.
pub fn default_cutoff(spec: &StateSpec) -> Result<usize> {
    spec.validate()?;
    let mut acc = 0.0;
    for m in 0..=MAX_AUTO_CUTOFF {
        acc += spec.probability(m);
        if 1.0 - acc < AUTO_TAIL_TARGET {
            return Ok(m);
        }
    }
    Ok(MAX_AUTO_CUTOFF)
}

/// Distribution at the adaptive default cutoff.
pub fn photon_distribution_auto(spec: &StateSpec) -> Result<PhotonDistribution> {
    photon_distribution(spec, default_cutoff(spec)?)
}

/// Raw moments ⟨n̂^k⟩ and normal-ordered moments ⟨:n̂^k:⟩ for k = 1..=order,
/// optionally with standard errors when estimated from samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub raw: Vec<f64>,
    pub normal_ordered: Vec<f64>,
    pub raw_stderr: Option<Vec<f64>>,
    pub normal_ordered_stderr: Option<Vec<f64>>,
}

impl MomentVector {
    pub fn order(&self) -> usize {
        self.raw.len()
    }

    /// ⟨n̂^k⟩, k ≥ 1.
    pub fn raw(&self, k: usize) -> f64 {
        self.raw[k - 1]
    }

    /// ⟨:n̂^k:⟩, k ≥ 1.
    pub fn normal(&self, k: usize) -> f64 {
        self.normal_ordered[k - 1]
    }

    /// Exact moments of a point mass; handy for building Fock-state inputs.
    pub fn fock(n: u32, order: usize) -> Self {
        let nf = n as f64;
        Self {
            raw: (1..=order).map(|k| nf.powi(k as i32)).collect(),
            normal_ordered: (1..=order).map(|k| falling_factorial(nf, k as u32)).collect(),
            raw_stderr: None,
            normal_ordered_stderr: None,
        }
    }
}

/// Exact moments of a truncated distribution.
pub fn moments(dist: &PhotonDistribution, order: usize) -> Result<MomentVector> {
    if order < 1 {
        return Err(Error::param("moment order must be >= 1"));
    }
    if dist.tail_mass >= MOMENT_TAIL_LIMIT {
        return Err(Error::Truncation { tail: dist.tail_mass, limit: MOMENT_TAIL_LIMIT });
    }
    Ok(moments_of_probs(&dist.probs, order))
}

/// Moments of an outcome probability vector, ignoring any truncation.
pub fn moments_of_probs(probs: &[f64], order: usize) -> MomentVector {
    let mut raw = vec![0.0; order];
    let mut normal = vec![0.0; order];
    for (m, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let mf = m as f64;
        let mut pw = 1.0;
        for k in 0..order {
            pw *= mf;
            raw[k] += pw * p;
            normal[k] += falling_factorial(mf, k as u32 + 1) * p;
        }
    }
    MomentVector { raw, normal_ordered: normal, raw_stderr: None, normal_ordered_stderr: None }
}

/// Sample moments of one mode with standard errors sqrt(s² / M).
pub fn empirical_moments(samples: &SampleSet, mode: usize, order: usize) -> Result<MomentVector> {
    if samples.m() == 0 {
        return Err(Error::Empty("sample set".into()));
    }
    if samples.m() < 2 {
        return Err(Error::param("empirical moments need at least 2 samples"));
    }
    if mode >= samples.d_x() {
        return Err(Error::dim(format!("mode {mode} out of range for d_x = {}", samples.d_x())));
    }
    if order < 1 {
        return Err(Error::param("moment order must be >= 1"));
    }
    let column: Vec<f64> = samples.column(mode).map(|v| v as f64).collect();
    let stats = |f: &dyn Fn(f64) -> f64| {
        let (mean, var) = mean_and_variance(column.iter().map(|&x| f(x)));
        (mean, (var / column.len() as f64).sqrt())
    };
    let mut raw = Vec::with_capacity(order);
    let mut raw_se = Vec::with_capacity(order);
    let mut normal = Vec::with_capacity(order);
    let mut normal_se = Vec::with_capacity(order);
    for k in 1..=order {
        let (m, se) = stats(&|x| x.powi(k as i32));
        raw.push(m);
        raw_se.push(se);
        let (m, se) = stats(&|x| falling_factorial(x, k as u32));
        normal.push(m);
        normal_se.push(se);
    }
    Ok(MomentVector {
        raw,
        normal_ordered: normal,
        raw_stderr: Some(raw_se),
        normal_ordered_stderr: Some(normal_se),
    })
}

/// Mean and unbiased variance (Welford).
pub fn mean_and_variance(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let mut n = 0.0;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for v in values {
        n += 1.0;
        let delta = v - mean;
        mean += delta / n;
        m2 += delta * (v - mean);
    }
    let var = if n > 1.0 { m2 / (n - 1.0) } else { 0.0 };
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_coherent() {
        let d = photon_distribution(&StateSpec::Coherent { alpha: 0.0 }, 5).unwrap();
        assert_eq!(d.probs, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.tail_mass, 0.0);
    }

    #[test]
    fn squeezed_odd_entries_vanish() {
        let d = photon_distribution(&StateSpec::SqueezedVacuum { r: 0.5 }, 40).unwrap();
        for m in (1..=40).step_by(2) {
            assert_eq!(d.probs[m], 0.0);
        }
        // p0 = 1 / cosh r
        assert!((d.probs[0] - 1.0 / 0.5f64.cosh()).abs() < 1e-15);
    }

    #[test]
    fn thermal_cutoff_zero() {
        let d = photon_distribution(&StateSpec::Thermal { nbar: 1.0 }, 0).unwrap();
        assert!((d.probs[0] - 0.5).abs() < 1e-15);
        assert!((d.tail_mass - 0.5).abs() < 1e-15);
        // brute-force normalization of the geometric series to 200
        let brute: f64 = (0..=200).map(|m| 0.5f64.powi(m + 1)).sum();
        let d200 = photon_distribution(&StateSpec::Thermal { nbar: 1.0 }, 200).unwrap();
        assert!((d200.probs.iter().sum::<f64>() - brute).abs() < 1e-14);
    }

    #[test]
    fn spats_has_no_vacuum() {
        let d = photon_distribution(&StateSpec::Spats { nbar: 0.7 }, 10).unwrap();
        assert_eq!(d.probs[0], 0.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(photon_distribution(&StateSpec::Thermal { nbar: -0.1 }, 5).is_err());
        assert!(photon_distribution(&StateSpec::LossyFock { n: 2, p_loss: 1.5 }, 5).is_err());
        assert!(photon_distribution(&StateSpec::LossyFock { n: 0, p_loss: 0.1 }, 5).is_err());
        assert!(photon_distribution(&StateSpec::Coherent { alpha: f64::NAN }, 5).is_err());
    }

    #[test]
    fn lossy_fock_two_point() {
        let d = photon_distribution(&StateSpec::LossyFock { n: 3, p_loss: 0.2 }, 5).unwrap();
        assert_eq!(d.probs, vec![0.0, 0.0, 0.2, 0.8, 0.0, 0.0]);
    }

    #[test]
    fn coherent_moments() {
        let d = photon_distribution(&StateSpec::Coherent { alpha: 2f64.sqrt() }, 200).unwrap();
        let m = moments(&d, 3).unwrap();
        // direct summation oracle
        let direct = |k: i32| (0..=200).map(|n| (n as f64).powi(k) * poisson_pmf(2.0, n)).sum::<f64>();
        assert!((m.raw(1) - 2.0).abs() < 1e-12);
        assert!((m.raw(2) - 6.0).abs() < 1e-12);
        assert!((m.raw(3) - direct(3)).abs() < 1e-10);
    }

    #[test]
    fn fock_moments_and_thermal_normal_order() {
        let d = PhotonDistribution::from_probs(vec![0.0, 1.0]).unwrap();
        let m = moments(&d, 4).unwrap();
        assert!(m.raw.iter().all(|&v| v == 1.0));
        let th = photon_distribution(&StateSpec::Thermal { nbar: 1.0 }, 400).unwrap();
        let brute: f64 = (0..=400).map(|n| (n as f64) * (n as f64 - 1.0) * 0.5f64.powi(n + 1)).sum();
        let m = moments(&th, 2).unwrap();
        assert!((m.normal(2) - 2.0).abs() < 1e-12);
        assert!((m.normal(2) - brute).abs() < 1e-12);
    }

    #[test]
    fn truncation_error() {
        let d = photon_distribution(&StateSpec::Thermal { nbar: 5.0 }, 3).unwrap();
        match moments(&d, 2) {
            Err(Error::Truncation { tail, .. }) => assert!(tail > 0.1),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn generating_functions_match_sums() {
        let specs = [
            StateSpec::Coherent { alpha: 1.3 },
            StateSpec::MixedCoherent { alpha1: 0.4, alpha2: 2.0 },
            StateSpec::Thermal { nbar: 0.8 },
            StateSpec::SqueezedVacuum { r: 0.7 },
            StateSpec::Spats { nbar: 0.6 },
            StateSpec::LossyFock { n: 4, p_loss: 0.1 },
        ];
        for spec in specs {
            let d = photon_distribution_auto(&spec).unwrap();
            for &z in &[0.0, 0.3, 0.77, 1.0] {
                let a = spec.generating_function(z);
                let b = d.generating_function(z);
                assert!((a - b).abs() < 1e-9, "{spec:?} z={z}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn empirical_examples() {
        let s = SampleSet::single_mode(vec![2, 2, 2]);
        let m = empirical_moments(&s, 0, 2).unwrap();
        assert_eq!(m.raw, vec![2.0, 4.0]);
        assert_eq!(m.raw_stderr.unwrap(), vec![0.0, 0.0]);

        let s = SampleSet::single_mode(vec![0, 2]);
        let m = empirical_moments(&s, 0, 1).unwrap();
        assert_eq!(m.raw(1), 1.0);
        assert!((m.raw_stderr.unwrap()[0] - 1.0).abs() < 1e-15);

        assert!(empirical_moments(&SampleSet::single_mode(vec![]), 0, 1).is_err());
    }
}
