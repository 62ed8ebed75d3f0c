//! Hierarchical moment encoder.
//!
//! Since s^(i)_ν = x_ν Σ_η K^(i)_{νη} s^(i−1)_η, every encoder output is a linear
//! combination of sample-mean products: x^(i)_{p_i} = Σ_{p_1..p_{i−1}} Π_l K^(l)_{p_l p_{l−1}} T_i[p_1..p_i]
//! with T_i[p] = mean_α Π_l x^α_{p_l}. The tensors are computed once per state, which makes
//! training cost independent of the sample count.

use serde::{Deserialize, Serialize};

use crate::detectors::SampleSet;
use crate::error::{Error, Result};
use crate::fockstats::Label;

/// Sample-mean product tensors T_1..T_L of one state. T_i is flat, index p_1 + d·p_2 + … .
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTensors {
    pub d_x: usize,
    pub tensors: Vec<Vec<f64>>,
    pub label: Label,
}

impl MomentTensors {
    /// `normalize` divides by M; otherwise sums are left unnormalized.
    pub fn from_samples(samples: &SampleSet, l: usize, normalize: bool) -> Result<Self> {
        let d = samples.d_x();
        if samples.m() == 0 {
            return Err(Error::Empty("sample set".into()));
        }
        if l == 0 {
            return Err(Error::param("L must be >= 1"));
        }
        let m = samples.m() as f64;
        let mut tensors: Vec<Vec<f64>> = (1..=l).map(|i| vec![0.0; d.pow(i as u32)]).collect();
        // sorted distinct rows give a summation order independent of sample order
        for (row, count) in samples.histogram() {
            let w = if normalize { count as f64 / m } else { count as f64 };
            let x: Vec<f64> = row.iter().map(|&v| v as f64).collect();
            let mut prev = vec![w];
            for (i, t) in tensors.iter_mut().enumerate() {
                let stride = d.pow(i as u32);
                let mut cur = vec![0.0; stride * d];
                for (p_last, &xv) in x.iter().enumerate() {
                    for (idx, pv) in prev.iter().enumerate() {
                        cur[idx + stride * p_last] = pv * xv;
                    }
                }
                t.iter_mut().zip(&cur).for_each(|(a, b)| *a += b);
                prev = cur;
            }
        }
        Ok(Self { d_x: d, tensors, label: samples.label })
    }

    pub fn order(&self) -> usize {
        self.tensors.len()
    }
}

/// Calls `f(path, tensor index)` for every index tuple of length `len`; `path[0]` is p_1.
fn for_each_path(d: usize, len: usize, mut f: impl FnMut(&[usize], usize)) {
    let total = d.pow(len as u32);
    let mut path = vec![0usize; len];
    for idx in 0..total {
        let mut r = idx;
        for p in path.iter_mut() {
            *p = r % d;
            r /= d;
        }
        f(&path, idx);
    }
}

/// Encoder outputs x[i−1][ν] = x^(i)_ν for i = 1..=L. `k[l−2]` is K^(l), row-major d×d.
pub fn encode_tensors(t: &MomentTensors, k: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = t.d_x;
    let mut out = Vec::with_capacity(t.order());
    for (i, ti) in t.tensors.iter().enumerate() {
        let len = i + 1;
        let mut x = vec![0.0; d];
        for_each_path(d, len, |path, idx| {
            let mut w = ti[idx];
            if w == 0.0 {
                return;
            }
            for l in 1..len {
                w *= k[l - 1][path[l] * d + path[l - 1]];
            }
            x[path[len - 1]] += w;
        });
        out.push(x);
    }
    out
}

/// Backpropagates ∂/∂x (same layout as the encoder output) into ∂/∂K, accumulated into `gk`.
pub fn encode_backward(t: &MomentTensors, k: &[Vec<f64>], gx: &[Vec<f64>], gk: &mut [Vec<f64>]) {
    let d = t.d_x;
    for (i, ti) in t.tensors.iter().enumerate().skip(1) {
        let len = i + 1;
        let mut factors = vec![0.0; len - 1];
        let mut prefix = vec![1.0; len];
        let mut suffix = vec![1.0; len];
        for_each_path(d, len, |path, idx| {
            let g = gx[i][path[len - 1]];
            if g == 0.0 || ti[idx] == 0.0 {
                return;
            }
            for l in 1..len {
                factors[l - 1] = k[l - 1][path[l] * d + path[l - 1]];
            }
            let n = factors.len();
            for a in 0..n {
                prefix[a + 1] = prefix[a] * factors[a];
            }
            suffix[n] = 1.0;
            for a in (0..n).rev() {
                suffix[a] = suffix[a + 1] * factors[a];
            }
            let w = g * ti[idx];
            for l in 1..len {
                gk[l - 1][path[l] * d + path[l - 1]] += w * prefix[l - 1] * suffix[l];
            }
        });
    }
}

/// Direct recursion over individual samples; used as the reference implementation.
pub fn encode_direct(samples: &SampleSet, k: &[Vec<f64>], l: usize) -> Vec<Vec<f64>> {
    let d = samples.d_x();
    let m = samples.m() as f64;
    let mut out = vec![vec![0.0; d]; l];
    for row in samples.rows() {
        let x: Vec<f64> = row.iter().map(|&v| v as f64).collect();
        let mut s = x.clone();
        out[0].iter_mut().zip(&s).for_each(|(a, b)| *a += b / m);
        for i in 2..=l {
            let kk = &k[i - 2];
            let next: Vec<f64> = (0..d)
                .map(|nu| x[nu] * (0..d).map(|eta| kk[nu * d + eta] * s[eta]).sum::<f64>())
                .collect();
            out[i - 1].iter_mut().zip(&next).for_each(|(a, b)| *a += b / m);
            s = next;
        }
    }
    out
}
