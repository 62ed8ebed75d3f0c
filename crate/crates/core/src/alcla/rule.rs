//! Symbolic expansion of a trained model into a polynomial over photon-number moments.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AlClaParams, DecoderBasis};
use crate::detectors::SampleSet;
use crate::error::{Error, Result};

/// ⟨n_{m1} n_{m2} …⟩ as the sorted multiset of mode indices.
pub type Moment = Vec<usize>;
/// Product of moments, sorted; empty for the constant.
pub type MomentProduct = Vec<Moment>;

type Poly = BTreeMap<MomentProduct, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub d_x: usize,
    /// Full-precision coefficients, printed order.
    pub terms: Vec<(MomentProduct, f64)>,
}

fn degree(p: &MomentProduct) -> usize {
    p.iter().map(|m| m.len()).sum()
}

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (ka, ca) in a {
        for (kb, cb) in b {
            let mut key: MomentProduct = ka.iter().chain(kb).cloned().collect();
            key.sort();
            *out.entry(key).or_insert(0.0) += ca * cb;
        }
    }
    out
}

/// Encoder outputs as linear forms over moments: out[i−1][ν].
fn symbolic_encoder(params: &AlClaParams) -> Vec<Vec<Poly>> {
    let d = params.d_x;
    let mut s: Vec<BTreeMap<Moment, f64>> = (0..d).map(|nu| BTreeMap::from([(vec![nu], 1.0)])).collect();
    let wrap = |layer: &[BTreeMap<Moment, f64>]| -> Vec<Poly> {
        layer.iter().map(|lin| lin.iter().map(|(m, c)| (vec![m.clone()], *c)).collect()).collect()
    };
    let mut out = vec![wrap(&s)];
    for k in &params.k {
        let next: Vec<BTreeMap<Moment, f64>> = (0..d)
            .map(|nu| {
                let mut lin = BTreeMap::new();
                for (eta, prev) in s.iter().enumerate() {
                    let w = k[nu * d + eta];
                    if w == 0.0 {
                        continue;
                    }
                    for (m, c) in prev {
                        let mut key = m.clone();
                        key.push(nu);
                        key.sort_unstable();
                        *lin.entry(key).or_insert(0.0) += w * c;
                    }
                }
                lin
            })
            .collect();
        out.push(wrap(&next));
        s = next;
    }
    out
}

impl DecisionRule {
    pub fn extract(params: &AlClaParams, basis: &DecoderBasis) -> Self {
        let x = symbolic_encoder(params);
        let mut total = Poly::new();
        for (term, theta) in basis.terms.iter().zip(&params.theta) {
            if *theta == 0.0 {
                continue;
            }
            let mut p: Poly = BTreeMap::from([(Vec::new(), *theta)]);
            for (v, j) in &term.factors {
                for _ in 0..*j {
                    p = poly_mul(&p, &x[v.order - 1][v.mode]);
                }
            }
            for (k, c) in p {
                *total.entry(k).or_insert(0.0) += c;
            }
        }
        Self::from_terms(params.d_x, total.into_iter().collect())
    }

    /// Drops exact zeros and orders by degree descending, then fewer factors.
    pub fn from_terms(d_x: usize, terms: Vec<(MomentProduct, f64)>) -> Self {
        let mut merged = Poly::new();
        for (mut k, c) in terms {
            k.iter_mut().for_each(|m| m.sort_unstable());
            k.sort();
            *merged.entry(k).or_insert(0.0) += c;
        }
        let mut terms: Vec<(MomentProduct, f64)> = merged.into_iter().filter(|(_, c)| *c != 0.0).collect();
        terms.sort_by(|a, b| {
            degree(&b.0).cmp(&degree(&a.0)).then(a.0.len().cmp(&b.0.len())).then(a.0.cmp(&b.0))
        });
        Self { d_x, terms }
    }

    pub fn coefficient(&self, product: &[Moment]) -> f64 {
        self.terms.iter().find(|(k, _)| k.as_slice() == product).map_or(0.0, |t| t.1)
    }

    /// Evaluates with `moment(modes)` supplying ⟨Π n_m⟩.
    pub fn evaluate(&self, moment: impl Fn(&[usize]) -> f64) -> f64 {
        self.terms.iter().map(|(k, c)| c * k.iter().map(|m| moment(m)).product::<f64>()).sum()
    }

    /// Evaluates on sample means.
    pub fn evaluate_samples(&self, samples: &SampleSet) -> f64 {
        let hist = samples.histogram();
        let m = samples.m() as f64;
        let mut cache: BTreeMap<&Moment, f64> = BTreeMap::new();
        for (k, _) in &self.terms {
            for mo in k {
                cache.entry(mo).or_insert_with(|| {
                    hist.iter()
                        .map(|(row, n)| *n as f64 * mo.iter().map(|&i| row[i] as f64).product::<f64>())
                        .sum::<f64>()
                        / m
                });
            }
        }
        self.evaluate(|mo| cache.get(&mo.to_vec()).copied().unwrap_or(0.0))
    }

    fn moment_name(&self, m: &Moment) -> String {
        let mut parts = Vec::new();
        let mut i = 0;
        while i < m.len() {
            let mode = m[i];
            let run = m[i..].iter().take_while(|&&v| v == mode).count();
            let base = if self.d_x == 1 { "n".to_string() } else { format!("n{mode}") };
            parts.push(if run == 1 { base } else { format!("{base}^{run}") });
            i += run;
        }
        format!("<{}>", parts.join(" "))
    }

    fn product_name(&self, p: &MomentProduct) -> String {
        let mut parts = Vec::new();
        let mut i = 0;
        while i < p.len() {
            let run = p[i..].iter().take_while(|m| **m == p[i]).count();
            let name = self.moment_name(&p[i]);
            parts.push(if run == 1 { name } else { format!("{name}^{run}") });
            i += run;
        }
        parts.join(" ")
    }
}

impl fmt::Display for DecisionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0.0000");
        }
        for (i, (k, c)) in self.terms.iter().enumerate() {
            let sign = if *c < 0.0 { "-" } else { "+" };
            if i == 0 {
                if *c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            write!(f, "{:.4}", c.abs())?;
            if !k.is_empty() {
                write!(f, " {}", self.product_name(k))?;
            }
        }
        Ok(())
    }
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err(&self, what: &str) -> Error {
        Error::Parse(format!("{what} at byte {}", self.pos))
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_digit() || matches!(self.s[self.pos], b'.' | b'e' | b'E'))
        {
            // exponent sign
            if matches!(self.s[self.pos], b'e' | b'E') && matches!(self.s.get(self.pos + 1), Some(b'-' | b'+')) {
                self.pos += 1;
            }
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err("expected number"))
    }

    fn integer(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err("expected integer"))
    }

    fn power(&mut self) -> Result<usize> {
        if self.eat(b'^') {
            self.integer()
        } else {
            Ok(1)
        }
    }

    fn moment(&mut self) -> Result<Moment> {
        let mut m = Vec::new();
        loop {
            if self.eat(b'>') {
                break;
            }
            if !self.eat(b'n') {
                return Err(self.err("expected 'n'"));
            }
            let mode = match self.s.get(self.pos) {
                Some(c) if c.is_ascii_digit() => self.integer()?,
                _ => 0,
            };
            let p = self.power()?;
            m.extend(std::iter::repeat_n(mode, p));
        }
        if m.is_empty() {
            return Err(self.err("empty moment"));
        }
        m.sort_unstable();
        Ok(m)
    }
}

impl FromStr for DecisionRule {
    type Err = Error;

    /// Parses the printed form; d_x is the largest mode index plus one.
    fn from_str(s: &str) -> Result<Self> {
        let mut c = Cursor { s: s.as_bytes(), pos: 0 };
        let mut terms = Vec::new();
        let mut first = true;
        while c.peek().is_some() {
            let sign = if c.eat(b'-') {
                -1.0
            } else if c.eat(b'+') || first {
                1.0
            } else {
                return Err(c.err("expected '+' or '-'"));
            };
            first = false;
            let coef = sign * c.number()?;
            let mut prod = Vec::new();
            while c.eat(b'<') {
                let m = c.moment()?;
                let p = c.power()?;
                prod.extend(std::iter::repeat_n(m, p));
            }
            terms.push((prod, coef));
        }
        if first {
            return Err(Error::Parse("empty rule".into()));
        }
        let d_x = terms.iter().flat_map(|(p, _)| p.iter().flatten()).max().map_or(1, |m| m + 1);
        Ok(Self::from_terms(d_x, terms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alcla::{forward_tensors, MomentTensors};
    use crate::fockstats::Label;

    #[test]
    fn single_mode_expansion() {
        let basis = DecoderBasis::new(1, 2);
        let (a, b, d, e, c) = (0.3, -0.7, 1.1, -0.2, 2.0);
        let p = AlClaParams { d_x: 1, k: vec![vec![c]], theta: vec![a, b, d, e], theta_amplify: 1.0 };
        let r = DecisionRule::extract(&p, &basis);
        assert_eq!(r.coefficient(&[vec![0]]), a);
        assert_eq!(r.coefficient(&[vec![0], vec![0]]), b);
        assert_eq!(r.coefficient(&[vec![0, 0]]), d * c);
        assert_eq!(r.coefficient(&[]), e);
    }

    #[test]
    fn printed_form_and_round_trip() {
        let text = "0.6377 <n^2> - 0.5947 <n>^2 - 0.5754 <n> - 0.3801";
        let r: DecisionRule = text.parse().unwrap();
        assert_eq!(r.to_string(), text);
        let f = r.evaluate(|m| if m.len() == 2 { 6.0 } else { 2.0 });
        assert!((f - (0.6377 * 6.0 - 0.5947 * 4.0 - 0.5754 * 2.0 - 0.3801)).abs() < 1e-12);
    }

    #[test]
    fn transcribed_rule_matches_forward() {
        let basis = DecoderBasis::new(1, 2);
        let p = AlClaParams {
            d_x: 1,
            k: vec![vec![1.0]],
            theta: vec![-0.5754, -0.5947, 0.6377, -0.3801],
            theta_amplify: 1.0,
        };
        let t = MomentTensors { d_x: 1, tensors: vec![vec![2.0], vec![6.0]], label: Label::Classical };
        let f = forward_tensors(&t, &p, &basis).f;
        let r: DecisionRule = "0.6377 <n^2> - 0.5947 <n>^2 - 0.5754 <n> - 0.3801".parse().unwrap();
        let g = r.evaluate(|m| if m.len() == 2 { 6.0 } else { 2.0 });
        assert!((f - g).abs() < 1e-9);
        assert!((f + 0.0835).abs() < 1e-12);
    }

    #[test]
    fn zero_params_print_zero() {
        let basis = DecoderBasis::new(2, 3);
        let p = AlClaParams::zeros(2, 3);
        assert_eq!(DecisionRule::extract(&p, &basis).to_string(), "0.0000");
    }

    #[test]
    fn multimode_names() {
        let r = DecisionRule::from_terms(4, vec![(vec![vec![3, 0, 0]], 1.5), (vec![vec![1], vec![2]], -0.25)]);
        assert_eq!(r.to_string(), "1.5000 <n0^2 n3> - 0.2500 <n1> <n2>");
        let back: DecisionRule = r.to_string().parse().unwrap();
        assert_eq!(back.terms, r.terms);
    }

    #[test]
    fn rule_matches_forward_on_samples() {
        let s = SampleSet::from_rows(&[vec![1, 2, 0], vec![3, 0, 1], vec![2, 2, 2], vec![0, 1, 4]], Label::Classical)
            .unwrap();
        let basis = DecoderBasis::new(3, 3);
        let mut p = AlClaParams::zeros(3, 3);
        for (i, v) in p.k.iter_mut().flatten().enumerate() {
            *v = ((i * 5) % 7) as f64 * 0.2 - 0.6;
        }
        for (i, v) in p.theta.iter_mut().enumerate() {
            *v = ((i * 3) % 11) as f64 * 0.1 - 0.5;
        }
        let f = crate::alcla::forward(&s, &p, &basis).unwrap().f;
        let g = DecisionRule::extract(&p, &basis).evaluate_samples(&s);
        assert!((f - g).abs() < 1e-9 * (1.0 + f.abs()), "{f} vs {g}");
    }
}
