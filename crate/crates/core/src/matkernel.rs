//! Dense real linear algebra for the small matrices (order up to a dozen or
//! so) that appear in the synthesis conditions.
//!
//! [`Matrix`] is a plain row-major array. [`SymMatrix`] wraps a square
//! matrix that is exactly symmetric: construction replaces `A` with
//! `(A + Aᵀ)/2`, so `s[(i, j)] == s[(j, i)]` holds bit-for-bit.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Self {
            rows,
            cols,
            data: data.to_vec(),
        }
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::input("ragged rows in matrix literal"));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.concat(),
        })
    }

    pub fn column(values: &[f64]) -> Self {
        Self::from_row_slice(values.len(), 1, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Matrix) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::input(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(self.mul_unchecked(rhs))
    }

    fn mul_unchecked(&self, rhs: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rrow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, r) in orow.iter_mut().zip(rrow) {
                    *o += a * r;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matrix-vector shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Frobenius inner product `Σ a_ij b_ij`.
    pub fn dot(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "inner product shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Induced infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Copies `block` into `self` with its top-left corner at `(r, c)`.
    pub fn set_block(&mut self, r: usize, c: usize, block: &Matrix) {
        assert!(r + block.rows <= self.rows && c + block.cols <= self.cols);
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r + i, c + j)] = block[(i, j)];
            }
        }
    }

    pub fn block(&self, r: usize, c: usize, rows: usize, cols: usize) -> Matrix {
        assert!(r + rows <= self.rows && c + cols <= self.cols);
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = self[(r + i, c + j)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &Matrix {
    type Output = Matrix;

    fn add(self, rhs: &Matrix) -> Matrix {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &Matrix {
    type Output = Matrix;

    fn sub(self, rhs: &Matrix) -> Matrix {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Neg for &Matrix {
    type Output = Matrix;

    fn neg(self) -> Matrix {
        self.scale(-1.0)
    }
}

/// Panics on shape mismatch; use [`Matrix::matmul`] for fallible products.
impl Mul for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matrix product shape mismatch");
        self.mul_unchecked(rhs)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

/// Square matrix, exactly symmetric by construction.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Symmetrizes `m` as `(m + mᵀ)/2`.
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() || m.rows() == 0 {
            return Err(Error::input(format!(
                "symmetric matrix must be square of order >= 1, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let n = m.rows();
        let mut s = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        Ok(Self(s))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Matrix::zeros(n, n))
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        Self(Matrix::from_diag(diag))
    }

    pub fn order(&self) -> usize {
        self.0.rows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.diag().iter().sum()
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.order();
        (0..n).all(|i| (0..n).all(|j| i == j || self.0[(i, j)] == 0.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }

    /// `self + s * I`.
    pub fn shift(&self, s: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..self.order() {
            m[(i, i)] += s;
        }
        Self(m)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let pv = self.0.mul_vec(v);
        pv.iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sym{:?}", self.0)
    }
}

impl TryFrom<Matrix> for SymMatrix {
    type Error = Error;

    fn try_from(m: Matrix) -> Result<Self> {
        SymMatrix::new(m)
    }
}

impl From<SymMatrix> for Matrix {
    fn from(s: SymMatrix) -> Self {
        s.0
    }
}

fn check_finite(m: &Matrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::input("matrix has non-finite entries"))
    }
}

/// Eigenvalues (ascending) and the matching orthonormal eigenvectors, stored
/// as the columns of the returned matrix. Cyclic Jacobi rotations.
pub fn sym_eigen(s: &SymMatrix) -> Result<(Vec<f64>, Matrix)> {
    check_finite(s.as_matrix())?;
    let n = s.order();
    let mut a = s.as_matrix().clone();
    let mut v = Matrix::identity(n);
    let total = a.norm_fro();
    let threshold = tol::JACOBI_REL_OFFDIAG * total;

    for _ in 0..tol::JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                // rotation angle annihilating a[p][q]
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, col)] = v[(k, i)];
        }
    }
    Ok((values, vectors))
}

/// All eigenvalues of `s`, ascending.
pub fn sym_eigenvalues(s: &SymMatrix) -> Result<Vec<f64>> {
    sym_eigen(s).map(|(values, _)| values)
}

pub fn lambda_min(s: &SymMatrix) -> Result<f64> {
    Ok(sym_eigenvalues(s)?[0])
}

pub fn lambda_max(s: &SymMatrix) -> Result<f64> {
    Ok(*sym_eigenvalues(s)?.last().expect("order >= 1"))
}

/// Lower-triangular Cholesky factor `L` with `S = L Lᵀ`.
pub fn cholesky(s: &SymMatrix) -> Result<Matrix> {
    check_finite(s.as_matrix())?;
    let n = s.order();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ X = rhs` given the Cholesky factor.
pub(crate) fn cholesky_solve(l: &Matrix, rhs: &Matrix) -> Matrix {
    let n = l.rows();
    let mut x = rhs.clone();
    for c in 0..rhs.cols() {
        for i in 0..n {
            let mut v = x[(i, c)];
            for k in 0..i {
                v -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = v / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut v = x[(i, c)];
            for k in (i + 1)..n {
                v -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = v / l[(i, i)];
        }
    }
    x
}

/// Inverse of a lower-triangular matrix.
pub(crate) fn lower_inverse(l: &Matrix) -> Matrix {
    let n = l.rows();
    let mut inv = Matrix::zeros(n, n);
    for c in 0..n {
        for i in c..n {
            let mut v = if i == c { 1.0 } else { 0.0 };
            for k in c..i {
                v -= l[(i, k)] * inv[(k, c)];
            }
            inv[(i, c)] = v / l[(i, i)];
        }
    }
    inv
}

/// `λ_min(S) > margin`, decided by attempting a Cholesky factorization of
/// `S - margin·I`.
pub fn is_positive_definite(s: &SymMatrix, margin: f64) -> Result<bool> {
    match cholesky(&s.shift(-margin)) {
        Ok(_) => Ok(true),
        Err(Error::NotPositiveDefinite) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Solves `S X = rhs` for positive definite `S`.
pub fn solve_spd(s: &SymMatrix, rhs: &Matrix) -> Result<Matrix> {
    if rhs.rows() != s.order() {
        return Err(Error::input(format!(
            "right-hand side has {} rows, expected {}",
            rhs.rows(),
            s.order()
        )));
    }
    check_finite(rhs)?;
    let l = cholesky(s)?;
    Ok(cholesky_solve(&l, rhs))
}

pub fn inverse_spd(s: &SymMatrix) -> Result<SymMatrix> {
    let x = solve_spd(s, &Matrix::identity(s.order()))?;
    SymMatrix::new(x)
}

/// Congruence transform `Tᵀ S T`.
pub fn congruence(s: &SymMatrix, t: &Matrix) -> Result<SymMatrix> {
    if t.rows() != s.order() {
        return Err(Error::input(format!(
            "congruence factor has {} rows, expected {}",
            t.rows(),
            s.order()
        )));
    }
    let st = s.as_matrix() * t;
    SymMatrix::new(&t.transpose() * &st)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(rows: &[&[f64]]) -> SymMatrix {
        SymMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn construction_symmetrizes() {
        let s = sym(&[&[1.0, 2.0], &[4.0, 3.0]]);
        assert_eq!(s[(0, 1)], 3.0);
        assert_eq!(s[(1, 0)], 3.0);
        assert!(SymMatrix::new(Matrix::zeros(2, 3)).is_err());
        assert!(SymMatrix::new(Matrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn eigenvalues_of_simple_matrices() {
        assert_eq!(sym_eigenvalues(&SymMatrix::identity(3)).unwrap(), vec![1.0; 3]);
        assert_eq!(sym_eigenvalues(&SymMatrix::from_diag(&[2.0, -1.0])).unwrap(), vec![-1.0, 2.0]);
        let ev = sym_eigenvalues(&sym(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvectors_diagonalize() {
        let s = sym(&[&[4.0, 1.0, -2.0], &[1.0, 0.5, 0.3], &[-2.0, 0.3, 7.0]]);
        let (vals, vecs) = sym_eigen(&s).unwrap();
        let d = congruence(&s, &vecs).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { vals[i] } else { 0.0 };
                assert!((d[(i, j)] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn non_finite_is_rejected() {
        let s = SymMatrix::from_diag(&[1.0, f64::NAN]);
        assert!(matches!(sym_eigenvalues(&s), Err(Error::InvalidInput(_))));
        assert!(matches!(is_positive_definite(&s, 0.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn definiteness() {
        assert!(is_positive_definite(&SymMatrix::identity(2), 0.5).unwrap());
        assert!(!is_positive_definite(&SymMatrix::identity(2), 1.0).unwrap());
        assert!(!is_positive_definite(&SymMatrix::zeros(3), 0.0).unwrap());
        assert!(!is_positive_definite(&sym(&[&[1.0, 2.0], &[2.0, 1.0]]), 0.0).unwrap());
    }

    #[test]
    fn spd_solves() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(solve_spd(&SymMatrix::identity(2), &m).unwrap(), m);

        let x = solve_spd(&SymMatrix::from_diag(&[2.0, 4.0]), &Matrix::column(&[2.0, 4.0])).unwrap();
        assert!(x.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-15));

        let s = sym(&[&[4.0, 1.0], &[1.0, 3.0]]);
        let inv = solve_spd(&s, &Matrix::identity(2)).unwrap();
        let prod = s.as_matrix() * &inv;
        assert!((&prod - &Matrix::identity(2)).max_abs() < 1e-9);

        let bad = sym(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(matches!(solve_spd(&bad, &Matrix::identity(2)), Err(Error::NotPositiveDefinite)));
        assert!(solve_spd(&s, &Matrix::identity(3)).is_err());
    }

    #[test]
    fn congruence_basics() {
        let s = sym(&[&[3.0, 1.0], &[1.0, 2.0]]);
        assert_eq!(congruence(&s, &Matrix::identity(2)).unwrap(), s);
        let d = congruence(&SymMatrix::identity(2), &Matrix::from_diag(&[2.0, 3.0])).unwrap();
        assert_eq!(d, SymMatrix::from_diag(&[4.0, 9.0]));
        assert!(congruence(&s, &Matrix::identity(3)).is_err());
    }

    #[test]
    fn lower_inverse_inverts() {
        let s = sym(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, 0.2], &[0.5, 0.2, 2.0]]);
        let l = cholesky(&s).unwrap();
        let li = lower_inverse(&l);
        assert!((&(&li * &l) - &Matrix::identity(3)).max_abs() < 1e-12);
    }

    #[test]
    fn serde_as_nested_arrays() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, "[[1.0,2.0],[3.0,4.0]]");
        let back: Matrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<Matrix>("[[1.0],[2.0,3.0]]").is_err());
    }
}
