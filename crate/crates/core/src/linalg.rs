//! Small dense linear algebra for the mixture machinery.
//!
//! Every matrix in this crate is tiny (dimension ≤ a few dozen), so a
//! hand-rolled row-major `Mat` with Cholesky and Jacobi eigendecomposition
//! keeps the whole stack generic over the scalar type without pulling in a
//! LAPACK binding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Mixture("ragged matrix rows".into()));
        }
        Ok(Mat {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn diag(values: &[T]) -> Self {
        let mut m = Mat::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn scaled_eye(n: usize, s: T) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = s;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// y = A x
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| dot(self.row(i), x))
            .collect()
    }

    /// y = Aᵀ x
    pub fn tr_matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            for j in 0..self.cols {
                y[j] = y[j] + self[(i, j)] * xi;
            }
        }
        y
    }

    /// C = A B
    pub fn matmul(&self, other: &Mat<T>) -> Mat<T> {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// self + s·other
    pub fn add_scaled(&self, other: &Mat<T>, s: T) -> Mat<T> {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (o, &v) in out.data.iter_mut().zip(other.data.iter()) {
            *o = *o + s * v;
        }
        out
    }

    pub fn scale(&self, s: T) -> Mat<T> {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v = *v * s;
        }
        out
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// (self + selfᵀ)/2
    pub fn symmetrized(&self) -> Mat<T> {
        debug_assert_eq!(self.rows, self.cols);
        let half = cast::<T>(0.5);
        let mut out = Mat::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in 0..self.rows {
                out[(i, j)] = (self[(i, j)] + self[(j, i)]) * half;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                let d = (self[(i, j)] - self[(j, i)]).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    /// xᵀ A y
    pub fn quad_form(&self, x: &[T], y: &[T]) -> T {
        dot(x, &self.matvec(y))
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn add<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn scale<T: Scalar>(a: &[T], s: T) -> Vec<T> {
    a.iter().map(|&x| x * s).collect()
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T = f64> {
    l: Mat<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn new(a: &Mat<T>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::dimension("cholesky", n, a.cols()));
        }
        let mut l = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if !(s > T::zero()) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite(format!(
                            "pivot {i} is {s:?} during factorization"
                        )));
                    }
                    l[(i, j)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn lower(&self) -> &Mat<T> {
        &self.l
    }

    /// Solves (L Lᵀ) x = b.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        // forward: L y = b
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s = s - self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// log det of the factored matrix.
    pub fn log_det(&self) -> T {
        let two = cast::<T>(2.0);
        (0..self.dim())
            .map(|i| self.l[(i, i)].ln())
            .sum::<T>()
            * two
    }

    /// Mahalanobis quadratic form (x−m)ᵀ A⁻¹ (x−m) via one triangular solve.
    pub fn mahalanobis_sq(&self, diff: &[T]) -> T {
        let n = self.dim();
        let mut y = diff.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        dot(&y, &y)
    }

    /// mean + L z for a standard-normal z: a sample of N(mean, A).
    pub fn affine_sample(&self, mean: &[T], z: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x = mean.to_vec();
        for i in 0..n {
            let mut s = T::zero();
            for k in 0..=i {
                s = s + self.l[(i, k)] * z[k];
            }
            x[i] = x[i] + s;
        }
        x
    }
}

/// Symmetric eigendecomposition via cyclic Jacobi rotations.
///
/// Returns eigenvalues (ascending) and the matrix whose columns are the
/// corresponding eigenvectors.
pub fn sym_eigen<T: Scalar>(a: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::dimension("sym_eigen", n, a.cols()));
    }
    let mut m = a.symmetrized();
    let mut v = Mat::<T>::eye(n);
    let tol = T::epsilon() * cast::<T>(64.0);
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off = off + m[(i, j)] * m[(i, j)];
            }
        }
        let scale: T = (0..n).map(|i| m[(i, i)].abs()).sum::<T>() + T::one();
        if off.sqrt() <= tol * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (cast::<T>(2.0) * apq);
                let t = {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(usize, T)> = (0..n).map(|i| (i, m[(i, i)])).collect();
    pairs.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite eigenvalues"));
    let eigvals: Vec<T> = pairs.iter().map(|&(_, e)| e).collect();
    let mut eigvecs = Mat::zeros(n, n);
    for (dst, &(src, _)) in pairs.iter().enumerate() {
        for k in 0..n {
            eigvecs[(k, dst)] = v[(k, src)];
        }
    }
    Ok((eigvals, eigvecs))
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn sym_max_abs_eig<T: Scalar>(a: &Mat<T>) -> Result<T> {
    let (vals, _) = sym_eigen(a)?;
    Ok(vals
        .iter()
        .fold(T::zero(), |acc, &v| acc.max(v.abs())))
}

/// A factor F with F Fᵀ = A for a symmetric positive *semi*-definite A,
/// usable for sampling when Cholesky fails on a singular matrix.
pub fn psd_sqrt<T: Scalar>(a: &Mat<T>) -> Result<Mat<T>> {
    match Cholesky::new(a) {
        Ok(c) => Ok(c.lower().clone()),
        Err(_) => {
            let (vals, vecs) = sym_eigen(a)?;
            let n = a.rows();
            // guard tiny negative eigenvalues from roundoff
            let floor = -cast::<T>(1e-10) * (T::one() + vals[n - 1].abs());
            let mut f = vecs;
            for j in 0..n {
                let lam = vals[j];
                if lam < floor {
                    return Err(Error::NotPositiveDefinite(format!(
                        "eigenvalue {lam:?} below PSD tolerance"
                    )));
                }
                let s = lam.max(T::zero()).sqrt();
                for i in 0..n {
                    f[(i, j)] = f[(i, j)] * s;
                }
            }
            Ok(f)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spd3() -> Mat<f64> {
        Mat::from_rows(vec![
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, -0.2],
            vec![0.5, -0.2, 2.0],
        ])
        .unwrap()
    }

    #[test]
    fn cholesky_solve_roundtrip() {
        let a = spd3();
        let chol = Cholesky::new(&a).unwrap();
        let b = vec![1.0, -2.0, 0.5];
        let x = chol.solve(&b);
        let back = a.matvec(&x);
        for (bi, bb) in back.iter().zip(&b) {
            assert_relative_eq!(bi, bb, max_relative = 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Mat::from_rows(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            Cholesky::new(&a),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn log_det_matches_direct_2x2() {
        let a = Mat::from_rows(vec![vec![2.0, 0.3], vec![0.3, 1.5]]).unwrap();
        let chol = Cholesky::new(&a).unwrap();
        let det: f64 = 2.0 * 1.5 - 0.3 * 0.3;
        assert_relative_eq!(chol.log_det(), det.ln(), max_relative = 1e-14);
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let a = spd3();
        let (vals, vecs) = sym_eigen(&a).unwrap();
        // A = V diag(vals) Vᵀ
        let d = Mat::diag(&vals);
        let rec = vecs.matmul(&d).matmul(&vecs.transpose());
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(rec[(i, j)], a[(i, j)], epsilon = 1e-10);
            }
        }
        assert!(vals.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn psd_sqrt_handles_singular() {
        // rank-1 matrix v vᵀ
        let a = Mat::from_rows(vec![vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let f = psd_sqrt(&a).unwrap();
        let rec = f.matmul(&f.transpose());
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(rec[(i, j)], a[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn matvec_and_transpose_agree() {
        let a = Mat::from_rows(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let x = vec![1.0, -1.0, 2.0];
        let y = a.matvec(&x);
        assert_eq!(y, vec![5.0, 11.0]);
        let z = a.tr_matvec(&vec![1.0, 1.0]);
        assert_eq!(z, vec![5.0, 7.0, 9.0]);
    }
}
