//! Log-gamma and real-argument binomial coefficients.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of |Γ(x)| via the Lanczos approximation (g = 7, 9 terms).
///
/// Uses the reflection formula below 0.5. Poles return `+inf`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let s = (PI * x).sin();
        if s == 0.0 {
            return f64::INFINITY;
        }
        return (PI / s.abs()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// ln(n!) for integer n.
pub fn ln_factorial(n: u64) -> f64 {
    // exact table for small n keeps the common cases free of approximation error
    if n < 2 {
        return 0.0;
    }
    if n <= 20 {
        let mut f: u64 = 1;
        for k in 2..=n {
            f *= k;
        }
        return (f as f64).ln();
    }
    ln_gamma(n as f64 + 1.0)
}

/// Binomial coefficient with real arguments, Γ(n+1) / (Γ(k+1) Γ(n−k+1)).
pub fn binomial_real(n: f64, k: f64) -> f64 {
    if n.fract() == 0.0 && k.fract() == 0.0 && n >= 0.0 && k >= 0.0 && n < 60.0 {
        return binomial(n as u64, k as u64);
    }
    (ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)).exp()
}

/// Integer binomial coefficient as f64 (exact up to 2^53).
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0_f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Falling factorial n (n−1) ⋯ (n−k+1).
pub fn falling_factorial(n: f64, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i as f64))
}
