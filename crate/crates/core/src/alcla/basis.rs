//! Decoder monomials over encoder outputs x^(m)_ν.

use serde::{Deserialize, Serialize};

/// Euler–Mascheroni constant as used in the parameter bound.
pub const EULER_GAMMA: f64 = 0.5772156649;
/// Monomials combine at most this many distinct encoder outputs.
pub const MAX_FACTORS: usize = 3;

/// Encoder output x^(order)_mode; orders start at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Var {
    pub mode: usize,
    pub order: usize,
}

/// Product of powers of distinct encoder outputs; empty for the constant term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Monomial {
    pub factors: Vec<(Var, u32)>,
}

impl Monomial {
    pub fn constant() -> Self {
        Self { factors: Vec::new() }
    }

    pub fn is_constant(&self) -> bool {
        self.factors.is_empty()
    }

    /// Σ exponent · order, the photon-number degree of the term.
    pub fn weight(&self) -> usize {
        self.factors.iter().map(|(v, j)| v.order * *j as usize).sum()
    }

    /// `x` indexed as x[order − 1][mode].
    pub fn eval(&self, x: &[Vec<f64>]) -> f64 {
        self.factors.iter().map(|(v, j)| x[v.order - 1][v.mode].powi(*j as i32)).product()
    }

    /// ∂/∂x^(order)_mode of this monomial, accumulated into `grad` scaled by `scale`.
    pub fn accumulate_grad(&self, x: &[Vec<f64>], scale: f64, grad: &mut [Vec<f64>]) {
        for (i, (v, j)) in self.factors.iter().enumerate() {
            let mut g = *j as f64 * x[v.order - 1][v.mode].powi(*j as i32 - 1);
            for (k, (w, e)) in self.factors.iter().enumerate() {
                if k != i {
                    g *= x[w.order - 1][w.mode].powi(*e as i32);
                }
            }
            grad[v.order - 1][v.mode] += scale * g;
        }
    }

    pub fn describe(&self) -> String {
        if self.is_constant() {
            return "1".into();
        }
        self.factors
            .iter()
            .map(|(v, j)| {
                let base = format!("x{}[{}]", v.order, v.mode);
                if *j == 1 {
                    base
                } else {
                    format!("{base}^{j}")
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Ordered decoder terms: singles, doubles, triples, then the constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderBasis {
    pub d_x: usize,
    pub l: usize,
    pub terms: Vec<Monomial>,
}

impl DecoderBasis {
    pub fn new(d_x: usize, l: usize) -> Self {
        let vars: Vec<Var> = (0..d_x)
            .flat_map(|mode| (1..=l).map(move |order| Var { mode, order }))
            .collect();
        let mut terms = Vec::new();
        for n_factors in 1..=MAX_FACTORS {
            let mut chosen = Vec::with_capacity(n_factors);
            choose(&vars, 0, n_factors, l, &mut chosen, &mut terms);
        }
        terms.push(Monomial::constant());
        Self { d_x, l, terms }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// f = Σ θ_t · term_t(x).
    pub fn eval(&self, theta: &[f64], x: &[Vec<f64>]) -> f64 {
        self.terms.iter().zip(theta).map(|(t, th)| th * t.eval(x)).sum()
    }
}

/// Distinct variables in increasing order, then exponents lexicographically.
fn choose(vars: &[Var], start: usize, left: usize, budget: usize, chosen: &mut Vec<Var>, out: &mut Vec<Monomial>) {
    if left == 0 {
        let mut exps = vec![1u32; chosen.len()];
        exponents(chosen, 0, budget, &mut exps, out);
        return;
    }
    for i in start..vars.len() {
        chosen.push(vars[i]);
        choose(vars, i + 1, left - 1, budget, chosen, out);
        chosen.pop();
    }
}

fn exponents(vars: &[Var], pos: usize, budget: usize, exps: &mut Vec<u32>, out: &mut Vec<Monomial>) {
    if pos == vars.len() {
        let m = Monomial { factors: vars.iter().copied().zip(exps.iter().copied()).collect() };
        if m.weight() <= budget {
            out.push(m);
        }
        return;
    }
    // remaining factors need at least their order once
    let rest: usize = vars[pos + 1..].iter().map(|v| v.order).sum();
    let mut j = 1;
    while vars[pos].order * j as usize + rest <= budget {
        exps[pos] = j;
        exponents(vars, pos + 1, budget, exps, out);
        j += 1;
    }
}

/// Number of decoder coefficients for (d_x, L), constant included.
pub fn decoder_term_count(d_x: usize, l: usize) -> usize {
    DecoderBasis::new(d_x, l).len()
}

/// 1 + (d_x L̃/36)(35 + d_x² L̃²) with L̃ = L ln L + Lγ.
pub fn parameter_bound(d_x: usize, l: usize) -> f64 {
    let d = d_x as f64;
    let lt = l as f64 * (l as f64).ln() + l as f64 * EULER_GAMMA;
    1.0 + d * lt / 36.0 * (35.0 + d * d * lt * lt)
}
