//! Small dense complex matrices.
//!
//! Everything here operates on matrices of at most a few dozen rows (codeword
//! blocks, 4×4 distance matrices, per-block equivalent channels), so a plain
//! row-major `Vec` is all that is needed.

use std::ops::{Index, IndexMut};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{czero, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![czero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    /// Builds a matrix from row slices. Panics on ragged input.
    pub fn from_rows<R: AsRef<[Complex<T>]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[Complex<T>] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                for c in 0..other.cols {
                    out[(r, c)] = out[(r, c)] + a * other[(k, c)];
                }
            }
        }
        Ok(out)
    }

    /// `selfᴴ · self`.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let ai = row[i].conj();
                for j in i..n {
                    g[(i, j)] = g[(i, j)] + ai * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g[(i, j)] = g[(j, i)].conj();
            }
        }
        g
    }

    pub fn frobenius_sq(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, z| acc.max(z.norm()))
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.rows.min(self.cols)).fold(czero(), |acc, i| acc + self[(i, i)])
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// Determinant by LU decomposition with partial pivoting.
    pub fn det(&self) -> Complex<T> {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = Complex::new(T::one(), T::zero());
        for k in 0..n {
            let (piv, mag) = (k..n)
                .map(|r| (r, a[r * n + k].norm()))
                .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if mag == T::zero() {
                return czero();
            }
            if piv != k {
                for c in 0..n {
                    a.swap(k * n + c, piv * n + c);
                }
                det = -det;
            }
            let p = a[k * n + k];
            det = det * p;
            for r in (k + 1)..n {
                let f = a[r * n + k] / p;
                if f.re == T::zero() && f.im == T::zero() {
                    continue;
                }
                for c in k..n {
                    let v = a[k * n + c];
                    a[r * n + c] = a[r * n + c] - f * v;
                }
            }
        }
        det
    }

    /// Inverse by Gauss–Jordan elimination; `None` when singular.
    pub fn inverse(&self) -> Option<Self> {
        assert_eq!(self.rows, self.cols, "inverse of a non-square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        let scale = self.max_abs();
        if scale == T::zero() {
            return None;
        }
        let tiny = scale * T::epsilon() * T::lit(64.0);
        for k in 0..n {
            let piv = (k..n).max_by(|&x, &y| {
                a[(x, k)]
                    .norm()
                    .partial_cmp(&a[(y, k)].norm())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })?;
            if a[(piv, k)].norm() <= tiny {
                return None;
            }
            if piv != k {
                for c in 0..n {
                    a.data.swap(k * n + c, piv * n + c);
                    inv.data.swap(k * n + c, piv * n + c);
                }
            }
            let p = a[(k, k)].inv();
            for c in 0..n {
                a[(k, c)] = a[(k, c)] * p;
                inv[(k, c)] = inv[(k, c)] * p;
            }
            for r in 0..n {
                if r == k {
                    continue;
                }
                let f = a[(r, k)];
                if f.re == T::zero() && f.im == T::zero() {
                    continue;
                }
                for c in 0..n {
                    let (ak, ik) = (a[(k, c)], inv[(k, c)]);
                    a[(r, c)] = a[(r, c)] - f * ak;
                    inv[(r, c)] = inv[(r, c)] - f * ik;
                }
            }
        }
        Some(inv)
    }

    /// Eigenvalues of a Hermitian matrix in ascending order.
    ///
    /// The n×n Hermitian matrix is embedded in the 2n×2n real symmetric matrix
    /// `[[Re, -Im], [Im, Re]]`, whose spectrum is that of the original with
    /// every eigenvalue doubled; cyclic Jacobi sweeps diagonalise it.
    pub fn hermitian_eigenvalues(&self) -> Vec<T> {
        assert_eq!(self.rows, self.cols, "eigenvalues of a non-square matrix");
        let n = self.rows;
        let m = 2 * n;
        let mut s = vec![T::zero(); m * m];
        for i in 0..n {
            for j in 0..n {
                // symmetrise against round-off in the input
                let z = (self[(i, j)] + self[(j, i)].conj()) * T::lit(0.5);
                s[i * m + j] = z.re;
                s[(i + n) * m + (j + n)] = z.re;
                s[(i + n) * m + j] = z.im;
                s[i * m + (j + n)] = -z.im;
            }
        }
        jacobi_symmetric(&mut s, m);
        let mut ev: Vec<T> = (0..m).map(|i| s[i * m + i]).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        ev.chunks(2).map(|p| (p[0] + p[1]) * T::lit(0.5)).collect()
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<T> {
        let mut sv: Vec<T> = self
            .gram()
            .hermitian_eigenvalues()
            .into_iter()
            .map(|l| l.max(T::zero()).sqrt())
            .collect();
        sv.reverse();
        sv
    }

    /// Numerical rank: singular values at or below `rel_tol` times the
    /// largest one count as zero.
    pub fn rank(&self, rel_tol: T) -> usize {
        let sv = self.singular_values();
        let Some(&top) = sv.first() else { return 0 };
        if top == T::zero() {
            return 0;
        }
        sv.iter().filter(|&&s| s > rel_tol * top).count()
    }
}

fn jacobi_symmetric<T: Real>(a: &mut [T], n: usize) {
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off = off + a[i * n + j] * a[i * n + j];
                } else {
                    diag = diag + a[i * n + j] * a[i * n + j];
                }
            }
        }
        if off <= T::epsilon() * T::epsilon() * diag.max(T::min_positive_value()) {
            return;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
}

impl<T> Index<(usize, usize)> for CMatrix<T> {
    type Output = Complex<T>;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex<T> {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for CMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[r * self.cols + c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn det_of_diagonal_and_singular() {
        let mut m = CMatrix::<f64>::identity(3);
        m[(1, 1)] = c(2.0, 0.0);
        m[(2, 2)] = c(0.0, 3.0);
        let d = m.det();
        assert!((d - c(0.0, 6.0)).norm() < 1e-14);

        let s = CMatrix::from_rows(&[[c(1.0, 1.0), c(2.0, 2.0)], [c(1.0, 0.0), c(2.0, 0.0)]]);
        assert!(s.det().norm() < 1e-14);
    }

    #[test]
    fn inverse_round_trip() {
        let m = CMatrix::from_rows(&[
            [c(2.0, 0.5), c(0.0, 1.0), c(1.0, 0.0)],
            [c(-1.0, 0.0), c(3.0, 0.0), c(0.0, -2.0)],
            [c(0.5, 0.5), c(1.0, 1.0), c(4.0, 0.0)],
        ]);
        let inv = m.inverse().unwrap();
        let p = m.try_mul(&inv).unwrap();
        let i = CMatrix::identity(3);
        assert!(p.try_sub(&i).unwrap().max_abs() < 1e-12);
        assert!(CMatrix::<f64>::zeros(2, 2).inverse().is_none());
    }

    #[test]
    fn hermitian_eigenvalues_of_known_matrix() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3
        let h = CMatrix::from_rows(&[[c(2.0, 0.0), c(0.0, 1.0)], [c(0.0, -1.0), c(2.0, 0.0)]]);
        let ev = h.hermitian_eigenvalues();
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rank_counts_relative_singular_values() {
        let m = CMatrix::from_rows(&[
            [c(1.0, 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(1e-12, 0.0)],
        ]);
        assert_eq!(m.rank(1e-9), 1);
        assert_eq!(m.rank(1e-15), 2);
        assert_eq!(CMatrix::<f64>::zeros(3, 3).rank(1e-9), 0);
    }

    #[test]
    fn shape_errors() {
        let a = CMatrix::<f64>::zeros(2, 3);
        let b = CMatrix::<f64>::zeros(3, 2);
        assert!(a.try_sub(&b).is_err());
        assert!(a.try_mul(&a).is_err());
        assert_eq!(a.try_mul(&b).unwrap().shape(), (2, 2));
    }
}
