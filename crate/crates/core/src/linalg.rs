//! Dense complex factorizations used by the forward and inverse solvers.
//!
//! The forward model needs solves with both `A` and `A^T` against one
//! factorization (fields and adjoint fields), plus a cheap condition estimate,
//! so the LU lives here rather than behind a general-purpose crate.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = Array2<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `P A = L U` with unit lower-triangular `L`, stored packed and row-major.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
    norm1: f64,
}

impl LuFactors {
    /// Factor with partial (row) pivoting.
    pub fn factor(a: &CMatrix) -> Result<Self> {
        let (n, m) = a.dim();
        if n != m {
            return Err(Error::Dimension(format!("LU of non-square {n}x{m} matrix")));
        }
        let norm1 = norm1(a);
        let mut lu: Vec<Complex64> = a.iter().copied().collect();
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..n {
            let (pivot_row, pivot_mag) = (k..n)
                .map(|i| (i, lu[i * n + k].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_mag == 0.0 || !pivot_mag.is_finite() {
                return Err(Error::Singular { pivot: k });
            }
            if pivot_row != k {
                for j in 0..n {
                    lu.swap(k * n + j, pivot_row * n + j);
                }
                perm.swap(k, pivot_row);
            }
            let (head, tail) = lu.split_at_mut((k + 1) * n);
            let pivot_slice = &head[k * n..];
            let inv_pivot = pivot_slice[k].inv();
            for row in tail.chunks_exact_mut(n) {
                let factor = row[k] * inv_pivot;
                row[k] = factor;
                if factor == ZERO {
                    continue;
                }
                for (r, p) in row[k + 1..].iter_mut().zip(&pivot_slice[k + 1..]) {
                    *r -= factor * p;
                }
            }
        }
        Ok(LuFactors { n, lu, perm, norm1 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        assert_eq!(b.len(), n, "rhs length");
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: Complex64 = row.iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n..(i + 1) * n];
            let s: Complex64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves `A^T x = b` (plain transpose, no conjugation).
    pub fn solve_transpose(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        assert_eq!(b.len(), n, "rhs length");
        // U^T z = b
        let mut z = b.to_vec();
        for j in 0..n {
            let row = &self.lu[j * n..(j + 1) * n];
            z[j] /= row[j];
            let zj = z[j];
            for (zi, u) in z[j + 1..].iter_mut().zip(&row[j + 1..]) {
                *zi -= u * zj;
            }
        }
        // L^T w = z
        for j in (0..n).rev() {
            let row = &self.lu[j * n..j * n + j];
            let wj = z[j];
            for (zi, l) in z[..j].iter_mut().zip(row) {
                *zi -= l * wj;
            }
        }
        let mut x = vec![ZERO; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }

    /// Solves `A^H x = b`.
    pub fn solve_adjoint(&self, b: &[Complex64]) -> Vec<Complex64> {
        let conj: Vec<Complex64> = b.iter().map(|v| v.conj()).collect();
        self.solve_transpose(&conj).into_iter().map(|v| v.conj()).collect()
    }

    /// Hager-Higham estimate of `||A^-1||_1`.
    pub fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 0.0;
        }
        let mut x = vec![Complex64::new(1.0 / n as f64, 0.0); n];
        let mut estimate = 0.0;
        for iteration in 0..5 {
            let y = self.solve(&x);
            let norm: f64 = y.iter().map(|v| v.norm()).sum();
            if iteration > 0 && norm <= estimate {
                break;
            }
            estimate = norm;
            let signs: Vec<Complex64> = y
                .iter()
                .map(|v| {
                    let m = v.norm();
                    if m == 0.0 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        v / m
                    }
                })
                .collect();
            let z = self.solve_adjoint(&signs);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if iteration > 0 && zmax <= ztx {
                break;
            }
            x = vec![ZERO; n];
            x[j] = Complex64::new(1.0, 0.0);
        }
        estimate
    }

    /// Estimated 1-norm condition number of the factored matrix.
    pub fn condition_estimate(&self) -> f64 {
        self.norm1 * self.inverse_norm1_estimate()
    }
}

/// Maximum absolute column sum.
pub fn norm1(a: &CMatrix) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Cholesky factor `L L^H` of a Hermitian positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<Complex64>,
}

impl Cholesky {
    /// Returns `None` when a pivot is not strictly positive. Only the lower
    /// triangle of `a` is read.
    pub fn factor(a: &CMatrix) -> Option<Self> {
        let (n, m) = a.dim();
        if n != m {
            return None;
        }
        let mut l = vec![ZERO; n * n];
        for j in 0..n {
            let mut d = a[[j, j]].re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[j * n + j] = Complex64::new(djj, 0.0);
            for i in j + 1..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / djj;
            }
        }
        Some(Cholesky { n, l })
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        assert_eq!(b.len(), n, "rhs length");
        let mut y = b.to_vec();
        for i in 0..n {
            let s: Complex64 = (0..i).map(|k| self.l[i * n + k] * y[k]).sum();
            y[i] = (y[i] - s) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let s: Complex64 = (i + 1..n).map(|k| self.l[k * n + i].conj() * y[k]).sum();
            y[i] = (y[i] - s) / self.l[i * n + i];
        }
        y
    }
}

/// `A^H A` for a tall matrix.
pub fn gram(a: &CMatrix) -> CMatrix {
    let ah = a.t().mapv(|v| v.conj());
    ah.dot(a)
}

pub fn matvec(a: &CMatrix, x: &[Complex64]) -> Vec<Complex64> {
    a.rows()
        .into_iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// `A^H x`.
pub fn adjoint_matvec(a: &CMatrix, x: &[Complex64]) -> Vec<Complex64> {
    let (rows, cols) = a.dim();
    assert_eq!(rows, x.len(), "rhs length");
    let mut out = vec![ZERO; cols];
    for (row, xi) in a.rows().into_iter().zip(x) {
        for (o, v) in out.iter_mut().zip(row.iter()) {
            *o += v.conj() * xi;
        }
    }
    out
}

pub fn norm2(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}
