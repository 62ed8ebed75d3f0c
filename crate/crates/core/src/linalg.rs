//! Dense symmetric matrices and the cyclic Jacobi eigenvalue method.

use serde::{Deserialize, Serialize};

/// Row-major square matrix of f64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        Self::from_fn(n, |i, j| rows[i][j])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Leading principal submatrix of size `k`.
    pub fn leading(&self, k: usize) -> Self {
        let k = k.min(self.n);
        Self::from_fn(k, |i, j| self[(i, j)])
    }

    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                acc += v[i] * self[(i, j)] * v[j];
            }
        }
        acc
    }
}

impl std::ops::Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Eigen-decomposition A = Q Λ Qᵀ with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Columns are eigenvectors.
    pub vectors: SquareMatrix,
    pub sweeps: usize,
}

impl SymmetricEigen {
    pub fn min(&self) -> (f64, Vec<f64>) {
        let n = self.values.len();
        if n == 0 {
            return (f64::INFINITY, Vec::new());
        }
        let v = (0..n).map(|i| self.vectors[(i, 0)]).collect();
        (self.values[0], v)
    }

    pub fn reconstruct(&self) -> SquareMatrix {
        let n = self.values.len();
        SquareMatrix::from_fn(n, |i, j| {
            (0..n).map(|k| self.vectors[(i, k)] * self.values[k] * self.vectors[(j, k)]).sum()
        })
    }
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi rotations on a symmetric matrix.
///
/// Only the upper triangle is read. Sweeps continue until the off-diagonal
/// Frobenius norm drops below `1e-15 · ‖A‖_F` or no rotation is applied.
pub fn jacobi_eigen(a: &SquareMatrix) -> SymmetricEigen {
    let n = a.dim();
    let mut m = SquareMatrix::from_fn(n, |i, j| if i <= j { a[(i, j)] } else { a[(j, i)] });
    let mut q = SquareMatrix::identity(n);
    let scale = m.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut sweeps = 0;

    while sweeps < MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = m[(p, r)];
                if apr.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = m[(p, p)];
                let arr = m[(r, r)];
                // skip rotations that cannot change the diagonal in floating point
                if sweeps > 4 && app.abs() + 100.0 * apr.abs() == app.abs()
                    && arr.abs() + 100.0 * apr.abs() == arr.abs()
                {
                    m[(p, r)] = 0.0;
                    m[(r, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (arr - app) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkr = m[(k, r)];
                    m[(k, p)] = c * mkp - s * mkr;
                    m[(k, r)] = s * mkp + c * mkr;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mrk = m[(r, k)];
                    m[(p, k)] = c * mpk - s * mrk;
                    m[(r, k)] = s * mpk + c * mrk;
                }
                m[(p, r)] = 0.0;
                m[(r, p)] = 0.0;
                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkr = q[(k, r)];
                    q[(k, p)] = c * qkp - s * qkr;
                    q[(k, r)] = s * qkp + c * qkr;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = SquareMatrix::from_fn(n, |i, k| q[(i, order[k])]);
    SymmetricEigen { values, vectors, sweeps }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &SquareMatrix) -> f64 {
    jacobi_eigen(a).min().0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> SquareMatrix {
        let mut a = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = rng.random_range(-1.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }

    #[test]
    fn reconstructs_random_symmetric_up_to_64() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &n in &[1, 2, 3, 7, 16, 33, 64] {
            let a = random_symmetric(n, &mut rng);
            let eig = jacobi_eigen(&a);
            assert!(eig.reconstruct().max_abs_diff(&a) < 1e-9, "n = {n}");
            let qtq = eig.vectors.transpose().matmul(&eig.vectors);
            assert!(qtq.max_abs_diff(&SquareMatrix::identity(n)) < 1e-9);
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn known_spectrum() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3
        let a = SquareMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let eig = jacobi_eigen(&a);
        assert!((eig.values[0] - 1.0).abs() < 1e-14);
        assert!((eig.values[1] - 3.0).abs() < 1e-14);
        let (lmin, v) = eig.min();
        assert!((a.quadratic_form(&v) - lmin).abs() < 1e-14);
    }

    #[test]
    fn diagonal_and_empty() {
        let a = SquareMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -1.0]]);
        assert_eq!(min_eigenvalue(&a), -1.0);
        assert_eq!(min_eigenvalue(&SquareMatrix::zeros(0)), f64::INFINITY);
    }
}
