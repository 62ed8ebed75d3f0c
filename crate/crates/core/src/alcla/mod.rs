//! Algebraic classifier: moment encoder, polynomial decoder with an amplified sigmoid,
//! regularized loss with exact gradients, Adam training and decision-rule extraction.

pub mod basis;
pub mod checkpoint;
pub mod encoder;
pub mod rule;
pub mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use basis::{decoder_term_count, parameter_bound, DecoderBasis, Monomial, Var};
pub use checkpoint::Checkpoint;
pub use encoder::{encode_direct, encode_tensors, MomentTensors};
pub use rule::DecisionRule;
pub use train::{train, train_tensors, EpochRecord, Schedule, TrainOutcome};

use crate::detectors::SampleSet;
use crate::error::{Error, Result};
use crate::fockstats::Label;

/// BCE inputs are clamped to [Y_CLAMP, 1 − Y_CLAMP].
pub const Y_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipRanges {
    pub k: (f64, f64),
    pub theta: (f64, f64),
    pub theta_amplify: (f64, f64),
}

impl Default for ClipRanges {
    fn default() -> Self {
        Self { k: (-10.0, 10.0), theta: (-10.0, 10.0), theta_amplify: (1.0, 50.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-2, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlClaConfig {
    pub d_x: usize,
    /// Total polynomial order; L − 1 encoding layers.
    pub l: usize,
    pub lambda: f64,
    pub lambda_k: f64,
    pub clip: ClipRanges,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub schedule: Schedule,
    pub upper_triangular_k: bool,
    /// Divide encoder sums by the sample count.
    pub normalize_by_samples: bool,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for AlClaConfig {
    fn default() -> Self {
        Self {
            d_x: 1,
            l: 2,
            lambda: 0.0,
            lambda_k: 0.0,
            clip: ClipRanges::default(),
            adam: AdamConfig::default(),
            epochs: 900,
            schedule: Schedule::default(),
            upper_triangular_k: false,
            normalize_by_samples: true,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl AlClaConfig {
    pub fn new(d_x: usize, l: usize) -> Self {
        Self { d_x, l, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_x < 1 {
            return Err(Error::param("d_x must be >= 1"));
        }
        if self.l < 1 {
            return Err(Error::param("L must be >= 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda_k >= 0.0) {
            return Err(Error::param("lambda and lambda_k must be >= 0"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::param("train_fraction must lie in (0, 1]"));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::param("learning rate must be > 0"));
        }
        Ok(())
    }
}

/// Learnable parameters. `k[l − 2]` is K^(l) in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlClaParams {
    pub d_x: usize,
    pub k: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    pub theta_amplify: f64,
}

impl AlClaParams {
    pub fn zeros(d_x: usize, l: usize) -> Self {
        Self {
            d_x,
            k: vec![vec![0.0; d_x * d_x]; l - 1],
            theta: vec![0.0; decoder_term_count(d_x, l)],
            theta_amplify: 1.0,
        }
    }

    /// K ~ U(−0.5, 0.5), θ ~ U(−0.1, 0.1), θ_amplify = 1.
    pub fn init(config: &AlClaConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(config.d_x, config.l);
        for kk in &mut p.k {
            kk.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
        p.theta.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        if config.upper_triangular_k {
            p.mask_lower();
        }
        p
    }

    pub fn l(&self) -> usize {
        self.k.len() + 1
    }

    pub fn mask_lower(&mut self) {
        let d = self.d_x;
        for kk in &mut self.k {
            for i in 0..d {
                for j in 0..i {
                    kk[i * d + j] = 0.0;
                }
            }
        }
    }

    pub fn clip(&mut self, c: &ClipRanges) {
        for kk in &mut self.k {
            kk.iter_mut().for_each(|v| *v = v.clamp(c.k.0, c.k.1));
        }
        self.theta.iter_mut().for_each(|v| *v = v.clamp(c.theta.0, c.theta.1));
        self.theta_amplify = self.theta_amplify.clamp(c.theta_amplify.0, c.theta_amplify.1);
    }

    pub fn within(&self, c: &ClipRanges) -> bool {
        let inside = |v: f64, r: (f64, f64)| v >= r.0 && v <= r.1;
        self.k.iter().flatten().all(|&v| inside(v, c.k))
            && self.theta.iter().all(|&v| inside(v, c.theta))
            && inside(self.theta_amplify, c.theta_amplify)
    }

    pub fn l1_k(&self) -> f64 {
        self.k.iter().flatten().map(|v| v.abs()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.k.iter().flatten().copied().collect();
        v.extend_from_slice(&self.theta);
        v.push(self.theta_amplify);
        v
    }

    pub fn assign(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for kk in &mut self.k {
            kk.iter_mut().for_each(|v| *v = it.next().expect("length"));
        }
        self.theta.iter_mut().for_each(|v| *v = it.next().expect("length"));
        self.theta_amplify = it.next().expect("length");
    }

    fn check(&self, basis: &DecoderBasis) -> Result<()> {
        if self.theta.len() != basis.len() || self.l() != basis.l || self.d_x != basis.d_x {
            return Err(Error::dim(format!(
                "params (d_x {}, L {}, {} coefficients) do not match basis (d_x {}, L {}, {} terms)",
                self.d_x,
                self.l(),
                self.theta.len(),
                basis.d_x,
                basis.l,
                basis.len()
            )));
        }
        if self.k.iter().any(|kk| kk.len() != self.d_x * self.d_x) {
            return Err(Error::dim("encoder matrices must be d_x × d_x"));
        }
        Ok(())
    }
}

/// Logistic function that saturates instead of overflowing.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Pre-sigmoid value f and output y = 1 − σ(θ_amplify f) for one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub f: f64,
    pub y: f64,
}

impl Prediction {
    /// y > 0.5 ⇔ f < 0; ties are classical.
    pub fn label(&self) -> Label {
        if self.f < 0.0 {
            Label::Nonclassical
        } else {
            Label::Classical
        }
    }
}

pub fn forward_tensors(t: &MomentTensors, params: &AlClaParams, basis: &DecoderBasis) -> Prediction {
    let x = encode_tensors(t, &params.k);
    let f = basis.eval(&params.theta, &x);
    Prediction { f, y: 1.0 - sigmoid(params.theta_amplify * f) }
}

pub fn forward(samples: &SampleSet, params: &AlClaParams, basis: &DecoderBasis) -> Result<Prediction> {
    params.check(basis)?;
    if samples.d_x() != params.d_x {
        return Err(Error::dim(format!("samples have {} modes, model {}", samples.d_x(), params.d_x)));
    }
    let t = MomentTensors::from_samples(samples, basis.l, true)?;
    Ok(forward_tensors(&t, params, basis))
}

/// Per-state loss without the encoder penalty.
pub fn state_loss(y: f64, target: f64, lambda: f64) -> f64 {
    let yc = y.clamp(Y_CLAMP, 1.0 - Y_CLAMP);
    -target * yc.ln() - (1.0 - target) * (1.0 - yc).ln() + lambda * (1.0 - target) * (target - y).abs()
}

/// BCE with false-positive penalty plus λ_K Σ‖K‖₁.
pub fn loss(y: f64, target: f64, params: &AlClaParams, config: &AlClaConfig) -> f64 {
    state_loss(y, target, config.lambda) + config.lambda_k * params.l1_k()
}

/// Gradient in the shape of [`AlClaParams`].
pub type Gradient = AlClaParams;

/// Mean batch loss and its gradient, exact wherever y lies inside the clamp range.
pub fn loss_and_gradient(
    data: &[&MomentTensors],
    params: &AlClaParams,
    basis: &DecoderBasis,
    config: &AlClaConfig,
) -> (f64, Gradient) {
    let d = params.d_x;
    let n = data.len().max(1) as f64;
    let mut grad = AlClaParams {
        d_x: d,
        k: vec![vec![0.0; d * d]; params.k.len()],
        theta: vec![0.0; params.theta.len()],
        theta_amplify: 0.0,
    };
    let mut total = 0.0;
    for t in data {
        let x = encode_tensors(t, &params.k);
        let f = basis.eval(&params.theta, &x);
        let sig = sigmoid(params.theta_amplify * f);
        let y = 1.0 - sig;
        let target = t.label.as_f64();
        total += state_loss(y, target, config.lambda);

        // z = θ_amplify f and y = σ(−z): the cross entropy contributes ỹ − y in logit space,
        // which stays informative when y saturates
        let mut dl_dz = target - y;
        let diff = y - target;
        if diff != 0.0 {
            dl_dz -= config.lambda * (1.0 - target) * diff.signum() * sig * (1.0 - sig);
        }
        let dl_dz = dl_dz / n;
        grad.theta_amplify += dl_dz * f;
        let dl_df = dl_dz * params.theta_amplify;
        if dl_df == 0.0 {
            continue;
        }
        let mut gx: Vec<Vec<f64>> = x.iter().map(|v| vec![0.0; v.len()]).collect();
        for ((term, th), g) in basis.terms.iter().zip(&params.theta).zip(grad.theta.iter_mut()) {
            *g += dl_df * term.eval(&x);
            term.accumulate_grad(&x, dl_df * th, &mut gx);
        }
        encoder::encode_backward(t, &params.k, &gx, &mut grad.k);
    }
    let penalty = config.lambda_k * params.l1_k();
    for (gk, kk) in grad.k.iter_mut().zip(&params.k) {
        for (g, v) in gk.iter_mut().zip(kk) {
            if *v != 0.0 {
                *g += config.lambda_k * v.signum();
            }
        }
    }
    if config.upper_triangular_k {
        grad.mask_lower();
    }
    (total / n + penalty, grad)
}
