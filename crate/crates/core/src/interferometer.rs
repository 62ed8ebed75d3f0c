//! Passive linear-optical networks: triangular mesh decomposition of a unitary and
//! evolution of truncated multimode Fock states through the mesh.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::JointDistribution;
use crate::error::{Error, Result};
use crate::fockstats::poisson_pmf;
use crate::special::{binomial, ln_factorial};

/// Max-norm deviation from unitarity accepted without re-orthonormalization.
pub const UNITARY_TOL: f64 = 1e-10;
/// Largest deviation that re-orthonormalization is allowed to repair.
pub const ORTHONORMALIZE_TOL: f64 = 0.05;
pub const DEFAULT_N_MAX: usize = 12;
pub const DEFAULT_BASIS_CAP: usize = 1_000_000;

/// Real orthogonal 6 × 6 matrix used for the six-mode dataset, as printed to two decimals.
pub const DATASET_UNITARY_6: [[f64; 6]; 6] = [
    [-0.14, -0.59, 0.25, -0.64, 0.23, -0.32],
    [0.28, 0.10, -0.80, -0.33, 0.40, -0.00],
    [0.46, 0.31, 0.15, -0.58, -0.57, 0.09],
    [-0.59, 0.40, 0.12, -0.38, 0.24, 0.53],
    [-0.17, 0.60, 0.10, -0.04, 0.14, -0.76],
    [-0.56, -0.15, -0.50, -0.07, -0.62, -0.17],
];

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        Self { n, data }
    }

    pub fn from_real(rows: &[Vec<f64>]) -> Result<Self> {
        let zeros: Vec<Vec<f64>> = rows.iter().map(|r| vec![0.0; r.len()]).collect();
        Self::from_parts(rows, &zeros)
    }

    pub fn from_parts(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<Self> {
        let n = re.len();
        if im.len() != n || re.iter().chain(im).any(|r| r.len() != n) {
            return Err(Error::dim("unitary must be square with matching re/im parts"));
        }
        let data = (0..n * n)
            .map(|k| Complex64::new(re[k / n][k % n], im[k / n][k % n]))
            .collect();
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] = v;
    }

    pub fn adjoint(&self) -> Self {
        let n = self.n;
        let data = (0..n * n).map(|k| self.data[(k % n) * n + k / n].conj()).collect();
        Self { n, data }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                for j in 0..n {
                    data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        Self { n, data }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// max |U†U − I|.
    pub fn unitarity_deviation(&self) -> f64 {
        self.adjoint().matmul(self).max_abs_diff(&Self::identity(self.n))
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum()).collect()
    }

    pub fn real_parts(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j).re).collect()).collect()
    }

    pub fn imag_parts(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j).im).collect()).collect()
    }

    /// Two passes of modified Gram–Schmidt over the columns.
    fn gram_schmidt_columns(&self) -> Result<Self> {
        let n = self.n;
        let mut cols: Vec<Vec<Complex64>> = (0..n).map(|j| (0..n).map(|i| self.get(i, j)).collect()).collect();
        for _ in 0..2 {
            for j in 0..n {
                for k in 0..j {
                    let (done, rest) = cols.split_at_mut(j);
                    let proj: Complex64 = done[k].iter().zip(&rest[0]).map(|(a, b)| a.conj() * b).sum();
                    for (x, q) in rest[0].iter_mut().zip(&done[k]) {
                        *x -= proj * q;
                    }
                }
                let norm = cols[j].iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                if norm < 1e-12 {
                    return Err(Error::NotUnitary { deviation: self.unitarity_deviation() });
                }
                cols[j].iter_mut().for_each(|x| *x /= norm);
            }
        }
        let mut out = self.clone();
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                out.set(i, j, *v);
            }
        }
        Ok(out)
    }
}

#[derive(Deserialize, Serialize)]
struct UnitaryFile {
    dim: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

/// A d × d unitary, unitary to [`UNITARY_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct UnitarySpec {
    matrix: CMatrix,
    /// Max-norm change applied by re-orthonormalization (0 when none was needed).
    pub adjustment: f64,
}

impl UnitarySpec {
    /// Accepts `matrix` as is when unitary; otherwise re-orthonormalizes it if the
    /// deviation is below [`ORTHONORMALIZE_TOL`].
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.dim() == 0 {
            return Err(Error::param("unitary dimension must be >= 1"));
        }
        let deviation = matrix.unitarity_deviation();
        if deviation < UNITARY_TOL {
            return Ok(Self { matrix, adjustment: 0.0 });
        }
        if deviation > ORTHONORMALIZE_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        let fixed = matrix.gram_schmidt_columns()?;
        let adjustment = fixed.max_abs_diff(&matrix);
        let residual = fixed.unitarity_deviation();
        if residual >= UNITARY_TOL {
            return Err(Error::NotUnitary { deviation: residual });
        }
        Ok(Self { matrix: fixed, adjustment })
    }

    pub fn identity(d: usize) -> Self {
        Self { matrix: CMatrix::identity(d), adjustment: 0.0 }
    }

    pub fn from_real(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(CMatrix::from_real(rows)?)
    }

    /// The six-mode dataset matrix after re-orthonormalization.
    pub fn dataset_unitary() -> Self {
        let rows: Vec<Vec<f64>> = DATASET_UNITARY_6.iter().map(|r| r.to_vec()).collect();
        Self::from_real(&rows).expect("printed matrix is within re-orthonormalization tolerance")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: UnitaryFile = serde_json::from_str(text)?;
        if file.re.len() != file.dim {
            return Err(Error::dim(format!("declared dim {} but {} rows", file.dim, file.re.len())));
        }
        Self::new(CMatrix::from_parts(&file.re, &file.im)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = UnitaryFile { dim: self.dim(), re: self.matrix.real_parts(), im: self.matrix.imag_parts() };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshElement {
    /// Mixes adjacent modes with [[e^{iφ}cosθ, −sinθ], [e^{iφ}sinθ, cosθ]].
    BeamSplitter { mode_a: usize, mode_b: usize, theta: f64, phi: f64 },
    PhaseShifter { mode: usize, phase: f64 },
}

impl MeshElement {
    /// 2 × 2 block (t00, t01, t10, t11) for a beamsplitter.
    fn block(theta: f64, phi: f64) -> [Complex64; 4] {
        let e = Complex64::from_polar(1.0, phi);
        [e * theta.cos(), Complex64::new(-theta.sin(), 0.0), e * theta.sin(), Complex64::new(theta.cos(), 0.0)]
    }

    pub fn matrix(&self, d: usize) -> CMatrix {
        let mut m = CMatrix::identity(d);
        match *self {
            MeshElement::BeamSplitter { mode_a, mode_b, theta, phi } => {
                let [t00, t01, t10, t11] = Self::block(theta, phi);
                m.set(mode_a, mode_a, t00);
                m.set(mode_a, mode_b, t01);
                m.set(mode_b, mode_a, t10);
                m.set(mode_b, mode_b, t11);
            }
            MeshElement::PhaseShifter { mode, phase } => m.set(mode, mode, Complex64::from_polar(1.0, phase)),
        }
        m
    }
}

/// Elements in application order: the realized unitary is E_K ⋯ E_1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshPlan {
    pub d: usize,
    pub elements: Vec<MeshElement>,
}

impl MeshPlan {
    pub fn reconstruct(&self) -> CMatrix {
        self.elements.iter().fold(CMatrix::identity(self.d), |acc, e| e.matrix(self.d).matmul(&acc))
    }

    pub fn beamsplitter_count(&self) -> usize {
        self.elements.iter().filter(|e| matches!(e, MeshElement::BeamSplitter { .. })).count()
    }
}

/// Triangular decomposition U = D · T_K ⋯ T_1 with nearest-neighbour beamsplitters.
pub fn decompose(u: &UnitarySpec) -> Result<MeshPlan> {
    let d = u.dim();
    let mut w = u.matrix().clone();
    let mut elements = Vec::with_capacity(d * (d - 1) / 2 + d);
    for i in (1..d).rev() {
        for j in 0..i {
            let a = w.get(i, j);
            let b = w.get(i, j + 1);
            let (theta, phi) = if a.norm() == 0.0 && b.norm() == 0.0 {
                (0.0, 0.0)
            } else if b.norm() == 0.0 {
                (std::f64::consts::FRAC_PI_2, a.arg())
            } else {
                (a.norm().atan2(b.norm()), a.arg() - b.arg())
            };
            let el = MeshElement::BeamSplitter { mode_a: j, mode_b: j + 1, theta, phi };
            // W ← W · T†
            let [t00, t01, t10, t11] = MeshElement::block(theta, phi);
            for r in 0..d {
                let x = w.get(r, j);
                let y = w.get(r, j + 1);
                w.set(r, j, x * t00.conj() + y * t01.conj());
                w.set(r, j + 1, x * t10.conj() + y * t11.conj());
            }
            w.set(i, j, Complex64::new(0.0, 0.0));
            elements.push(el);
        }
    }
    for m in 0..d {
        let phase = w.get(m, m).arg();
        if phase != 0.0 {
            elements.push(MeshElement::PhaseShifter { mode: m, phase });
        }
    }
    let plan = MeshPlan { d, elements };
    let err = plan.reconstruct().max_abs_diff(u.matrix());
    if err > UNITARY_TOL {
        return Err(Error::NotUnitary { deviation: err });
    }
    Ok(plan)
}

fn composition_count(m: usize, parts: usize) -> usize {
    if parts == 0 {
        return usize::from(m == 0);
    }
    binomial((m + parts - 1) as u64, (parts - 1) as u64) as usize
}

/// All occupation tuples of `d` modes with exactly `n` photons, in lexicographic order.
#[derive(Debug, Clone)]
pub struct Sector {
    pub d: usize,
    pub n: usize,
    states: Vec<u8>,
    /// offs[(i·(n+1) + rem)·(n+1) + x] = number of tuples preceding first deviation at mode i.
    offs: Vec<usize>,
}

impl Sector {
    pub fn new(d: usize, n: usize) -> Self {
        let np = n + 1;
        let mut offs = vec![0; d * np * np];
        for i in 0..d {
            for rem in 0..=n {
                let mut acc = 0;
                for x in 0..=n {
                    offs[(i * np + rem) * np + x] = acc;
                    if x <= rem {
                        acc += composition_count(rem - x, d - 1 - i);
                    }
                }
            }
        }
        let mut states = Vec::with_capacity(composition_count(n, d) * d);
        let mut cur = vec![0u8; d];
        fn fill(i: usize, rem: usize, cur: &mut Vec<u8>, out: &mut Vec<u8>) {
            let d = cur.len();
            if i + 1 == d {
                cur[i] = rem as u8;
                out.extend_from_slice(cur);
                return;
            }
            for v in 0..=rem {
                cur[i] = v as u8;
                fill(i + 1, rem - v, cur, out);
            }
        }
        if d > 0 {
            fill(0, n, &mut cur, &mut states);
        }
        Self { d, n, states, offs }
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.d.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &[u8] {
        &self.states[i * self.d..(i + 1) * self.d]
    }

    pub fn rank(&self, occ: &[u8]) -> usize {
        let np = self.n + 1;
        let mut rem = self.n;
        let mut r = 0;
        for (i, &x) in occ.iter().enumerate().take(self.d - 1) {
            r += self.offs[(i * np + rem) * np + x as usize];
            rem -= x as usize;
        }
        r
    }
}

/// One pure component: amplitudes per total-photon-number sector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureComponent {
    pub weight: f64,
    pub sectors: BTreeMap<usize, Vec<Complex64>>,
}

impl PureComponent {
    pub fn norm_sqr(&self) -> f64 {
        self.sectors.values().flatten().map(|a| a.norm_sqr()).sum()
    }
}

/// Mixture of pure multimode Fock-space states with total photon number ≤ `n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodeState {
    pub d_x: usize,
    pub n_max: usize,
    pub components: Vec<PureComponent>,
    /// Weighted probability discarded by truncation.
    pub truncation_loss: f64,
}

impl MultimodeState {
    fn from_amplitudes(d_x: usize, n_max: usize, weighted: Vec<(f64, HashMap<Vec<u8>, Complex64>)>) -> Self {
        let mut bases: HashMap<usize, Sector> = HashMap::new();
        let mut components = Vec::with_capacity(weighted.len());
        let mut loss = 0.0;
        for (weight, amps) in weighted {
            let mut sectors: BTreeMap<usize, Vec<Complex64>> = BTreeMap::new();
            for (occ, a) in amps {
                let n: usize = occ.iter().map(|&x| x as usize).sum();
                let basis = bases.entry(n).or_insert_with(|| Sector::new(d_x, n));
                let v = sectors.entry(n).or_insert_with(|| vec![Complex64::new(0.0, 0.0); basis.len()]);
                v[basis.rank(&occ)] += a;
            }
            let c = PureComponent { weight, sectors };
            loss += weight * (1.0 - c.norm_sqr()).max(0.0);
            components.push(c);
        }
        Self { d_x, n_max, components, truncation_loss: loss }
    }

    pub fn vacuum(d_x: usize) -> Self {
        Self::fock_product(&vec![0; d_x])
    }

    pub fn fock_product(ns: &[u32]) -> Self {
        let n_max = ns.iter().sum::<u32>() as usize;
        let occ: Vec<u8> = ns.iter().map(|&n| n as u8).collect();
        let amps = HashMap::from([(occ, Complex64::new(1.0, 0.0))]);
        Self::from_amplitudes(ns.len(), n_max, vec![(1.0, amps)])
    }

    /// Mixture of Fock products; weights are renormalized to sum to 1.
    pub fn fock_mixture(terms: &[(f64, Vec<u32>)]) -> Result<Self> {
        let d_x = terms.first().map(|t| t.1.len()).ok_or_else(|| Error::Empty("mixture terms".into()))?;
        if terms.iter().any(|t| t.1.len() != d_x) {
            return Err(Error::dim("mixture terms have different mode counts"));
        }
        if terms.iter().any(|t| !(t.0 >= 0.0 && t.0.is_finite())) {
            return Err(Error::param("mixture weights must be finite and >= 0"));
        }
        if terms.iter().flat_map(|t| t.1.iter()).any(|&n| n > u8::MAX as u32) {
            return Err(Error::param("per-mode photon number must be <= 255"));
        }
        let total: f64 = terms.iter().map(|t| t.0).sum();
        if total <= 0.0 {
            return Err(Error::param("mixture weights sum to zero"));
        }
        let n_max = terms.iter().map(|t| t.1.iter().sum::<u32>()).max().unwrap_or(0) as usize;
        let weighted = terms
            .iter()
            .map(|(w, ns)| {
                let occ: Vec<u8> = ns.iter().map(|&n| n as u8).collect();
                (w / total, HashMap::from([(occ, Complex64::new(1.0, 0.0))]))
            })
            .collect();
        Ok(Self::from_amplitudes(d_x, n_max, weighted))
    }

    /// `main`·|n⃗⟩ plus `per_loss`·|n⃗ − e_σ⟩ for every occupied mode σ, renormalized.
    pub fn single_loss_fock(ns: &[u32], main: f64, per_loss: f64) -> Result<Self> {
        let mut terms = vec![(main, ns.to_vec())];
        for (sigma, &n) in ns.iter().enumerate() {
            if n > 0 {
                let mut lost = ns.to_vec();
                lost[sigma] -= 1;
                terms.push((per_loss, lost));
            }
        }
        Self::fock_mixture(&terms)
    }

    fn product_state(
        d_x: usize,
        n_max: usize,
        local: &[Vec<Complex64>],
    ) -> HashMap<Vec<u8>, Complex64> {
        let mut out: HashMap<Vec<u8>, Complex64> = HashMap::from([(Vec::new(), Complex64::new(1.0, 0.0))]);
        for amps in local.iter().take(d_x) {
            let mut next = HashMap::new();
            for (occ, a) in &out {
                let used: usize = occ.iter().map(|&x| x as usize).sum();
                for (k, b) in amps.iter().enumerate() {
                    if used + k > n_max || b.norm_sqr() == 0.0 {
                        continue;
                    }
                    let mut o = occ.clone();
                    o.push(k as u8);
                    next.insert(o, a * b);
                }
            }
            out = next;
        }
        out
    }

    /// Product of single-mode squeezed vacua, each truncated at `local_cutoff`,
    /// keeping total photon number ≤ `n_max`.
    pub fn squeezed_product(rs: &[f64], local_cutoff: usize, n_max: usize) -> Result<Self> {
        if rs.iter().any(|r| !r.is_finite()) {
            return Err(Error::param("squeezing parameters must be finite"));
        }
        let local: Vec<Vec<Complex64>> = rs
            .iter()
            .map(|&r| {
                let t = r.tanh();
                (0..=local_cutoff)
                    .map(|m| {
                        if m % 2 == 1 {
                            return Complex64::new(0.0, 0.0);
                        }
                        let k = (m / 2) as u64;
                        let mag = if k == 0 {
                            1.0
                        } else {
                            (k as f64 * t.abs().ln() + 0.5 * ln_factorial(2 * k)
                                - k as f64 * std::f64::consts::LN_2
                                - ln_factorial(k))
                            .exp()
                        };
                        // (−tanh r)^k
                        let sign = if k % 2 == 1 && t > 0.0 { -1.0 } else { 1.0 };
                        Complex64::new(sign * mag / r.cosh().sqrt(), 0.0)
                    })
                    .collect()
            })
            .collect();
        let amps = Self::product_state(rs.len(), n_max, &local);
        Ok(Self::from_amplitudes(rs.len(), n_max, vec![(1.0, amps)]))
    }

    /// Product of coherent states truncated at total photon number `n_max`.
    pub fn coherent_product(alphas: &[Complex64], n_max: usize) -> Self {
        let local: Vec<Vec<Complex64>> = alphas
            .iter()
            .map(|&a| {
                (0..=n_max)
                    .map(|m| {
                        let mag = poisson_pmf(a.norm_sqr(), m).sqrt();
                        Complex64::from_polar(mag, m as f64 * a.arg())
                    })
                    .collect()
            })
            .collect();
        let amps = Self::product_state(alphas.len(), n_max, &local);
        Self::from_amplitudes(alphas.len(), n_max, vec![(1.0, amps)])
    }

    pub fn weight_total(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Norm of each total-photon-number sector, weighted over components.
    pub fn sector_norms(&self) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for c in &self.components {
            for (n, v) in &c.sectors {
                *out.entry(*n).or_insert(0.0) += c.weight * v.iter().map(|a| a.norm_sqr()).sum::<f64>();
            }
        }
        out
    }

    fn occupied_sectors(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.components.iter().flat_map(|c| c.sectors.keys().copied()).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// Fock-space matrix of a beamsplitter within the two-mode sector of `s` photons:
/// B[m][k] = ⟨m, s−m| T |k, s−k⟩.
fn beamsplitter_sector(block: [Complex64; 4], s: usize) -> Vec<Complex64> {
    let [t00, t01, t10, t11] = block;
    let pow = |z: Complex64, e: usize| z.powu(e as u32);
    let mut out = vec![Complex64::new(0.0, 0.0); (s + 1) * (s + 1)];
    for k in 0..=s {
        for p in 0..=k {
            let left = binomial(k as u64, p as u64) * pow(t00, p) * pow(t10, k - p);
            for q in 0..=(s - k) {
                let right = binomial((s - k) as u64, q as u64) * pow(t01, q) * pow(t11, s - k - q);
                out[(p + q) * (s + 1) + k] += left * right;
            }
        }
        for m in 0..=s {
            let scale = (0.5
                * (ln_factorial(m as u64) + ln_factorial((s - m) as u64)
                    - ln_factorial(k as u64)
                    - ln_factorial((s - k) as u64)))
                .exp();
            out[m * (s + 1) + k] *= scale;
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    /// Largest single-sector basis allowed.
    pub basis_cap: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { basis_cap: DEFAULT_BASIS_CAP }
    }
}

/// Pushes every pure component through the mesh. Photon-number sectors evolve independently.
pub fn evolve(state: &MultimodeState, plan: &MeshPlan) -> Result<MultimodeState> {
    evolve_with(state, plan, EvolveOptions::default())
}

pub fn evolve_with(state: &MultimodeState, plan: &MeshPlan, opts: EvolveOptions) -> Result<MultimodeState> {
    if state.d_x != plan.d {
        return Err(Error::dim(format!("state has {} modes, plan has {}", state.d_x, plan.d)));
    }
    for e in &plan.elements {
        let ok = match *e {
            MeshElement::BeamSplitter { mode_a, mode_b, .. } => mode_a < plan.d && mode_b < plan.d && mode_a != mode_b,
            MeshElement::PhaseShifter { mode, .. } => mode < plan.d,
        };
        if !ok {
            return Err(Error::dim(format!("mesh element {e:?} has invalid modes")));
        }
    }
    let sectors = state.occupied_sectors();
    let mut bases: HashMap<usize, Sector> = HashMap::new();
    for &n in &sectors {
        let size = composition_count(n, state.d_x);
        if size > opts.basis_cap {
            return Err(Error::BasisOverflow { size, cap: opts.basis_cap });
        }
        bases.insert(n, Sector::new(state.d_x, n));
    }
    let s_max = sectors.last().copied().unwrap_or(0);
    // element matrices for every two-mode sector that can occur
    let cache: Vec<Vec<Vec<Complex64>>> = plan
        .elements
        .iter()
        .map(|e| match *e {
            MeshElement::BeamSplitter { theta, phi, .. } => {
                let block = MeshElement::block(theta, phi);
                (0..=s_max).map(|s| beamsplitter_sector(block, s)).collect()
            }
            MeshElement::PhaseShifter { .. } => Vec::new(),
        })
        .collect();

    let components = state
        .components
        .par_iter()
        .map(|c| {
            let sectors = c
                .sectors
                .iter()
                .map(|(&n, amps)| {
                    let basis = &bases[&n];
                    let mut v = amps.clone();
                    for (e, mats) in plan.elements.iter().zip(&cache) {
                        apply_element(basis, e, mats, &mut v);
                    }
                    (n, v)
                })
                .collect();
            PureComponent { weight: c.weight, sectors }
        })
        .collect();
    Ok(MultimodeState { components, ..state.clone() })
}

fn apply_element(basis: &Sector, e: &MeshElement, mats: &[Vec<Complex64>], v: &mut [Complex64]) {
    match *e {
        MeshElement::PhaseShifter { mode, phase } => {
            for (i, a) in v.iter_mut().enumerate() {
                let n = basis.state(i)[mode];
                if n > 0 {
                    *a *= Complex64::from_polar(1.0, phase * n as f64);
                }
            }
        }
        MeshElement::BeamSplitter { mode_a, mode_b, .. } => {
            let mut occ = vec![0u8; basis.d];
            let mut idx = Vec::with_capacity(basis.n + 1);
            let mut input = Vec::with_capacity(basis.n + 1);
            for i in 0..basis.len() {
                let st = basis.state(i);
                if st[mode_a] != 0 {
                    continue;
                }
                let s = st[mode_b] as usize;
                occ.copy_from_slice(st);
                idx.clear();
                input.clear();
                for k in 0..=s {
                    occ[mode_a] = k as u8;
                    occ[mode_b] = (s - k) as u8;
                    let r = basis.rank(&occ);
                    idx.push(r);
                    input.push(v[r]);
                }
                if input.iter().all(|a| a.norm_sqr() == 0.0) {
                    continue;
                }
                let m = &mats[s];
                for (row, &r) in idx.iter().enumerate() {
                    v[r] = (0..=s).map(|k| m[row * (s + 1) + k] * input[k]).sum();
                }
            }
        }
    }
}

/// Joint photon-number table Σ_c w_c |ψ_c(n⃗)|². Sums to 1 − truncation loss.
pub fn output_distribution(state: &MultimodeState) -> JointDistribution {
    let mut map: HashMap<Vec<u32>, f64> = HashMap::new();
    for c in &state.components {
        for (&n, amps) in &c.sectors {
            let basis = Sector::new(state.d_x, n);
            for (i, a) in amps.iter().enumerate() {
                let p = c.weight * a.norm_sqr();
                if p > 0.0 {
                    let key: Vec<u32> = basis.state(i).iter().map(|&x| x as u32).collect();
                    *map.entry(key).or_default() += p;
                }
            }
        }
    }
    JointDistribution::from_map(state.d_x, map)
}

/// Coherent inputs stay coherent: output amplitudes U α, independent Poisson modes.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentOutput {
    pub alphas: Vec<Complex64>,
}

impl CoherentOutput {
    pub fn means(&self) -> Vec<f64> {
        self.alphas.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Joint table over tuples with total photon number ≤ n_max.
    pub fn joint(&self, n_max: usize) -> JointDistribution {
        let means = self.means();
        let mut map: HashMap<Vec<u32>, f64> = HashMap::from([(Vec::new(), 1.0)]);
        for &mu in &means {
            let mut next = HashMap::new();
            for (k, p) in &map {
                let used: u32 = k.iter().sum();
                for m in 0..=(n_max - used as usize) {
                    let q = poisson_pmf(mu, m);
                    if q == 0.0 {
                        continue;
                    }
                    let mut key = k.clone();
                    key.push(m as u32);
                    next.insert(key, p * q);
                }
            }
            map = next;
        }
        JointDistribution::from_map(means.len(), map)
    }
}

pub fn coherent_shortcut(alphas: &[Complex64], u: &UnitarySpec) -> Result<CoherentOutput> {
    if alphas.len() != u.dim() {
        return Err(Error::dim(format!("{} amplitudes for a {}-mode unitary", alphas.len(), u.dim())));
    }
    Ok(CoherentOutput { alphas: u.matrix().apply(alphas) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn bs50() -> MeshPlan {
        MeshPlan {
            d: 2,
            elements: vec![MeshElement::BeamSplitter { mode_a: 0, mode_b: 1, theta: FRAC_PI_4, phi: 0.0 }],
        }
    }

    #[test]
    fn sector_ranks_are_positions() {
        for (d, n) in [(1, 4), (2, 5), (3, 4), (6, 5)] {
            let s = Sector::new(d, n);
            assert_eq!(s.len(), composition_count(n, d));
            for i in 0..s.len() {
                assert_eq!(s.rank(s.state(i)), i);
            }
        }
    }

    #[test]
    fn identity_decomposes_trivially() {
        let plan = decompose(&UnitarySpec::identity(4)).unwrap();
        for e in &plan.elements {
            if let MeshElement::BeamSplitter { theta, .. } = e {
                assert_eq!(*theta, 0.0);
            }
        }
        assert!(plan.reconstruct().max_abs_diff(&CMatrix::identity(4)) < 1e-15);
    }

    #[test]
    fn dataset_unitary_round_trip() {
        let u = UnitarySpec::dataset_unitary();
        assert!(u.adjustment > 0.0 && u.adjustment < 0.02);
        assert!(u.matrix().unitarity_deviation() < 1e-12);
        let plan = decompose(&u).unwrap();
        assert_eq!(plan.beamsplitter_count(), 15);
        assert!(plan.reconstruct().max_abs_diff(u.matrix()) < 1e-10);
    }

    #[test]
    fn rejects_far_from_unitary() {
        let rows = vec![vec![1.0, 0.5], vec![0.0, 1.0]];
        assert!(matches!(UnitarySpec::from_real(&rows), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn single_photon_splits() {
        let out = output_distribution(&evolve(&MultimodeState::fock_product(&[1, 0]), &bs50()).unwrap());
        assert!((out.probability(&[1, 0]) - 0.5).abs() < 1e-14);
        assert!((out.probability(&[0, 1]) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn hong_ou_mandel() {
        let out = output_distribution(&evolve(&MultimodeState::fock_product(&[1, 1]), &bs50()).unwrap());
        assert!(out.probability(&[1, 1]) < 1e-12);
        assert!((out.probability(&[2, 0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn coherent_through_beamsplitter() {
        let alpha = c(1.0);
        let state = MultimodeState::coherent_product(&[alpha, c(0.0)], 14);
        let fock = output_distribution(&evolve(&state, &bs50()).unwrap());
        let u = UnitarySpec::new(bs50().reconstruct()).unwrap();
        let shortcut = coherent_shortcut(&[alpha, c(0.0)], &u).unwrap();
        for m in shortcut.means() {
            assert!((m - 0.5).abs() < 1e-12);
        }
        let exact = shortcut.joint(14);
        for (k, p) in &exact.entries {
            assert!((fock.probability(k) - p).abs() < 1e-9, "{k:?}");
        }
    }

    #[test]
    fn sector_norms_preserved() {
        let u = UnitarySpec::dataset_unitary();
        let plan = decompose(&u).unwrap();
        let state = MultimodeState::squeezed_product(&[0.3, 0.0, 0.2, 0.0, 0.0, 0.4], 10, 8).unwrap();
        let before = state.sector_norms();
        let after = evolve(&state, &plan).unwrap().sector_norms();
        for (n, v) in before {
            assert!((after[&n] - v).abs() < 1e-10);
        }
    }

    #[test]
    fn single_photon_follows_column() {
        let u = UnitarySpec::dataset_unitary();
        let plan = decompose(&u).unwrap();
        let out = output_distribution(&evolve(&MultimodeState::fock_product(&[1, 0, 0, 0, 0, 0]), &plan).unwrap());
        for i in 0..6 {
            let mut key = vec![0; 6];
            key[i] = 1;
            assert!((out.probability(&key) - u.matrix().get(i, 0).norm_sqr()).abs() < 1e-12);
        }
    }

    #[test]
    fn basis_cap_enforced() {
        let state = MultimodeState::fock_product(&[5, 5, 5, 5, 5, 5]);
        let plan = decompose(&UnitarySpec::identity(6)).unwrap();
        let err = evolve_with(&state, &plan, EvolveOptions { basis_cap: 1000 });
        assert!(matches!(err, Err(Error::BasisOverflow { .. })));
    }

    #[test]
    fn single_loss_weights_renormalize() {
        let s = MultimodeState::single_loss_fock(&[0, 0, 0, 2, 2, 2], 0.95, 0.0167).unwrap();
        assert_eq!(s.components.len(), 4);
        assert!((s.weight_total() - 1.0).abs() < 1e-12);
        assert!((s.components[0].weight - 0.95 / 1.0001).abs() < 1e-12);
    }

    #[test]
    fn squeezed_single_mode_matches_distribution() {
        let s = MultimodeState::squeezed_product(&[0.5], 40, 40).unwrap();
        let out = output_distribution(&s);
        let spec = crate::fockstats::StateSpec::SqueezedVacuum { r: 0.5 };
        for m in 0..10u32 {
            assert!((out.probability(&[m]) - spec.probability(m as usize)).abs() < 1e-14);
        }
    }
}
