//! Dense matrix/vector arithmetic, infinity norms, the Jacobi split and a
//! direct elimination solver. Everything else in the crate builds on this.
//!
//! Instances here are small (a few hundred unknowns at most), so all storage
//! is dense row-major `f64`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    /// The Jacobi split is undefined when a diagonal entry vanishes.
    #[error("zero diagonal entry at row {0}")]
    ZeroDiagonal(usize),
    /// Elimination found no usable pivot.
    #[error("matrix is singular (pivot below tolerance in column {0})")]
    Singular(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Cholesky failed: the matrix is not symmetric positive semidefinite.
    #[error("matrix is not symmetric positive semidefinite")]
    NotPsd,
}

/// Square dense matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &x) in d.iter().enumerate() {
            m.set(i, i, x);
        }
        m
    }

    /// Build from row slices. Panics if the rows are not square or contain
    /// non-finite entries.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "matrix rows must be square");
            data.extend_from_slice(row);
        }
        assert!(data.iter().all(|x| x.is_finite()), "matrix entries must be finite");
        Matrix { n, data }
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        assert!(data.iter().all(|x| x.is_finite()), "matrix entries must be finite");
        Matrix { n, data }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &Vector) -> Vector {
        assert_eq!(self.n, x.len(), "matrix/vector dimension mismatch");
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = 0.0;
            let row = self.row(i);
            for j in 0..self.n {
                acc += row[j] * x[j];
            }
            out[i] = acc;
        }
        Vector::new(out)
    }

    pub fn mul_mat(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n, "matrix dimension mismatch");
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { n: self.n, data }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { n: self.n, data }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { n: self.n, data: self.data.iter().map(|x| x * s).collect() }
    }

    /// (M + Mᵀ)/2, used to kill floating-point asymmetry in covariances.
    pub fn symmetrized(&self) -> Matrix {
        let t = self.transpose();
        self.add(&t).scale(0.5)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Dense real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        assert!(data.iter().all(|x| x.is_finite()), "vector entries must be finite");
        Vector(data)
    }

    pub fn zeros(n: usize) -> Self {
        Vector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        assert_eq!(self.len(), other.len());
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &Vector) -> Vector {
        assert_eq!(self.len(), other.len());
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector(self.0.iter().map(|x| x * s).collect())
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// The Jacobi split of a system matrix W: the fixed point of
/// `u = A v + B u` solves `W u = v`.
#[derive(Debug, Clone)]
pub struct JacobiSplit {
    /// Diagonal matrix `diag(W)⁻¹`.
    pub a: Matrix,
    /// `I − diag(W)⁻¹ W`; zero on the diagonal.
    pub b: Matrix,
    /// Cached `‖A‖∞`.
    pub norm_a: f64,
    /// Cached `‖B‖∞`; the contraction factor when W is normalized
    /// diagonally dominant.
    pub norm_b: f64,
}

/// `max_i |x_i|`.
pub fn inf_norm_vec(x: &Vector) -> f64 {
    x.as_slice().iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Induced infinity norm: maximum absolute row sum.
pub fn inf_norm_mat(m: &Matrix) -> f64 {
    (0..m.n())
        .map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Split W into `A = diag(W)⁻¹` and `B = I − diag(W)⁻¹W`.
///
/// Off-diagonal entries of B are computed as `-(w_ij / w_ii)` so that
/// node-local weight tables can reproduce them bit-for-bit.
pub fn jacobi_split(w: &Matrix) -> Result<JacobiSplit, LinalgError> {
    let n = w.n();
    for i in 0..n {
        if w.get(i, i) == 0.0 {
            return Err(LinalgError::ZeroDiagonal(i));
        }
    }
    let mut a = Matrix::zeros(n);
    let mut b = Matrix::zeros(n);
    for i in 0..n {
        let d = w.get(i, i);
        a.set(i, i, 1.0 / d);
        for j in 0..n {
            if j != i {
                b.set(i, j, -(w.get(i, j) / d));
            }
        }
    }
    let norm_a = inf_norm_mat(&a);
    let norm_b = inf_norm_mat(&b);
    Ok(JacobiSplit { a, b, norm_a, norm_b })
}

/// Every row must satisfy both `|w_ii| > Σ_{j≠i} |w_ij|` (strict dominance)
/// and `|w_ii| ≥ 1`.
pub fn is_normalized_diag_dominant(w: &Matrix) -> bool {
    let n = w.n();
    (0..n).all(|i| {
        let d = w.get(i, i).abs();
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w.get(i, j).abs()).sum();
        d > off && d >= 1.0
    })
}

const PIVOT_REL_TOL: f64 = 1e-12;

/// LU factorization with partial pivoting, packed in place.
struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

fn lu_factor(w: &Matrix) -> Result<Lu, LinalgError> {
    let n = w.n();
    let tol = PIVOT_REL_TOL * inf_norm_mat(w);
    let mut lu = w.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, lu.get(r, col).abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs <= tol {
            return Err(LinalgError::Singular(col));
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = lu.get(col, j);
                lu.set(col, j, lu.get(pivot_row, j));
                lu.set(pivot_row, j, tmp);
            }
            perm.swap(col, pivot_row);
        }
        let pivot = lu.get(col, col);
        for r in col + 1..n {
            let factor = lu.get(r, col) / pivot;
            lu.set(r, col, factor);
            for j in col + 1..n {
                lu.set(r, j, lu.get(r, j) - factor * lu.get(col, j));
            }
        }
    }
    Ok(Lu { lu, perm })
}

impl Lu {
    fn solve(&self, v: &Vector) -> Vector {
        let n = self.lu.n();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = v[self.perm[i]];
            for j in 0..i {
                acc -= self.lu.get(i, j) * y[j];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..n {
                acc -= self.lu.get(i, j) * y[j];
            }
            y[i] = acc / self.lu.get(i, i);
        }
        Vector::new(y)
    }
}

/// Direct solution of `W u = v` by elimination with partial pivoting.
pub fn solve_exact(w: &Matrix, v: &Vector) -> Result<Vector, LinalgError> {
    if w.n() != v.len() {
        return Err(LinalgError::Dimension(format!(
            "matrix is {}x{} but vector has length {}",
            w.n(),
            w.n(),
            v.len()
        )));
    }
    Ok(lu_factor(w)?.solve(v))
}

/// Inverse via one factorization and n triangular solves.
pub fn mat_inverse(w: &Matrix) -> Result<Matrix, LinalgError> {
    let n = w.n();
    let lu = lu_factor(w)?;
    let mut inv = Matrix::zeros(n);
    for col in 0..n {
        let mut e = Vector::zeros(n);
        e[col] = 1.0;
        let x = lu.solve(&e);
        for row in 0..n {
            inv.set(row, col, x[row]);
        }
    }
    Ok(inv)
}

/// Lower Cholesky factor of a symmetric PSD matrix.
///
/// Tolerates semidefiniteness: a pivot within `tol` of zero zeroes out its
/// column. Fails with `NotPsd` if a pivot is negative beyond the tolerance
/// or the matrix is asymmetric beyond 1e-10.
pub fn cholesky_psd(m: &Matrix) -> Result<Matrix, LinalgError> {
    let n = m.n();
    let scale = inf_norm_mat(m).max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (m.get(i, j) - m.get(j, i)).abs() > 1e-10 * scale {
                return Err(LinalgError::NotPsd);
            }
        }
    }
    let tol = 1e-10 * scale;
    let mut l = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = m.get(i, j);
            for k in 0..j {
                acc -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if acc < -tol {
                    return Err(LinalgError::NotPsd);
                }
                l.set(i, i, acc.max(0.0).sqrt());
            } else {
                let d = l.get(j, j);
                l.set(i, j, if d > 0.0 { acc / d } else { 0.0 });
            }
        }
    }
    Ok(l)
}
