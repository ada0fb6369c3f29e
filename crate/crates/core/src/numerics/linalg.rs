//! Small dense linear algebra: row-major matrices, Cholesky solves and a
//! cyclic Jacobi symmetric eigensolver.
//!
//! Every matrix handled here is at most a few dozen rows on a side (design
//! widths and information matrices), so the kernels favour clarity and
//! accuracy over blocking.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use super::NumericsError;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
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
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    /// Builds a matrix from a flat row-major buffer.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(NumericsError::DimensionMismatch { expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
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
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        if self.cols != other.rows {
            return Err(NumericsError::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if self.cols != v.len() {
            return Err(NumericsError::DimensionMismatch { expected: self.cols, found: v.len() });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// Copies the sub-block of rows `r` and columns `c`.
    pub fn block(&self, r: std::ops::Range<usize>, c: std::ops::Range<usize>) -> Matrix {
        let mut out = Matrix::zeros(r.len(), c.len());
        for (oi, i) in r.clone().enumerate() {
            for (oj, j) in c.clone().enumerate() {
                out[(oi, oj)] = self[(i, j)];
            }
        }
        out
    }

    /// Appends the columns of `other` to the right of `self`.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        if self.rows != other.rows {
            return Err(NumericsError::DimensionMismatch { expected: self.rows, found: other.rows });
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Matrix { rows: self.rows, cols, data })
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Square symmetric matrix. Symmetry is enforced exactly on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Accepts `m` if it is square and symmetric up to rounding
    /// (`|a_ij - a_ji| <= 1e-12 * max|a|`); the stored copy is averaged so
    /// that `a_ij == a_ji` holds bit for bit.
    pub fn new(m: Matrix) -> Result<Self, NumericsError> {
        if m.rows != m.cols || m.rows == 0 {
            return Err(NumericsError::NotSquare { rows: m.rows, cols: m.cols });
        }
        let tol = 1e-12 * m.max_abs();
        let mut m = m;
        for i in 0..m.rows {
            for j in (i + 1)..m.cols {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if (a - b).abs() > tol {
                    return Err(NumericsError::NotSymmetric { row: i, col: j });
                }
                let avg = 0.5 * (a + b);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n))
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        Self(Matrix::from_diag(diag))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)]).sum()
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix(self.0.scale(s))
    }

    /// Principal sub-block over the index range.
    pub fn principal_block(&self, r: std::ops::Range<usize>) -> SymMatrix {
        SymMatrix(self.0.block(r.clone(), r))
    }

    /// Inverse of a symmetric positive definite matrix via Cholesky.
    pub fn inverse_spd(&self) -> Result<SymMatrix, NumericsError> {
        let chol = Cholesky::factor(self)?;
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = chol.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        // Round-off can leave the two triangles a few ulps apart.
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = avg;
                inv[(j, i)] = avg;
            }
        }
        Ok(SymMatrix(inv))
    }

    /// Symmetric square root of a positive semidefinite matrix.
    pub fn sqrt_psd(&self) -> Result<SymMatrix, NumericsError> {
        let eig = eig_sym(self)?;
        let n = self.dim();
        let mut out = Matrix::zeros(n, n);
        for (k, &lambda) in eig.values.iter().enumerate() {
            if lambda < -1e-10 * eig.values[0].abs().max(f64::MIN_POSITIVE) {
                return Err(NumericsError::NotPositiveDefinite { pivot: k });
            }
            let s = lambda.max(0.0).sqrt();
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += s * eig.vectors[(i, k)] * eig.vectors[(j, k)];
                }
            }
        }
        SymMatrix::new(out)
    }

    /// `Mᵀ A M` for a conformable `M`.
    pub fn congruence(&self, m: &Matrix) -> Result<SymMatrix, NumericsError> {
        let am = self.0.matmul(m)?;
        SymMatrix::new(m.transpose().matmul(&am)?)
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

impl TryFrom<Matrix> for SymMatrix {
    type Error = NumericsError;

    fn try_from(m: Matrix) -> Result<Self, Self::Error> {
        SymMatrix::new(m)
    }
}

impl From<SymMatrix> for Matrix {
    fn from(s: SymMatrix) -> Matrix {
        s.0
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    /// Pivots at or below `1e-12 * max_i a_ii` are rejected, which is how
    /// collinear designs surface.
    pub fn factor(a: &SymMatrix) -> Result<Self, NumericsError> {
        let n = a.dim();
        let max_diag = (0..n).fold(0.0_f64, |m, i| m.max(a[(i, i)]));
        let tol = 1e-12 * max_diag;
        if max_diag <= 0.0 {
            return Err(NumericsError::NotPositiveDefinite { pivot: 0 });
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            // also rejects NaN
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(d > tol) {
                return Err(NumericsError::NotPositiveDefinite { pivot: j });
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn factor_matrix(&self) -> &Matrix {
        &self.l
    }

    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.l.rows()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn solve_spd(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if b.len() != a.dim() {
        return Err(NumericsError::DimensionMismatch { expected: a.dim(), found: b.len() });
    }
    Ok(Cholesky::factor(a)?.solve(b))
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors
/// stored column-wise.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEigen {
    /// `Q Λ Qᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.values.len();
        let mut out = Matrix::zeros(n, n);
        for (k, &lambda) in self.values.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += lambda * self.vectors[(i, k)] * self.vectors[(j, k)];
                }
            }
        }
        out
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn eig_sym(a: &SymMatrix) -> Result<SymEigen, NumericsError> {
    let n = a.dim();
    let mut m = a.as_matrix().clone();
    let mut v = Matrix::identity(n);
    let scale = m.max_abs();
    if scale == 0.0 || n == 1 {
        let values = (0..n).map(|i| m[(i, i)]).collect();
        return Ok(SymEigen { values, vectors: v });
    }

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
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
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(NumericsError::NoConvergence { iterations: JACOBI_MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymEigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn random_spd(seed: u64, n: usize) -> SymMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = Matrix::from_row_major(n, n, (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let mut a = m.matmul(&m.transpose()).unwrap();
        for i in 0..n {
            a[(i, i)] += 0.1;
        }
        SymMatrix::new(a).unwrap()
    }

    #[test]
    fn solve_identity() {
        let x = solve_spd(&SymMatrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn solve_diagonal() {
        let a = SymMatrix::from_diag(&[4.0, 9.0]);
        let x = solve_spd(&a, &[8.0, 9.0]).unwrap();
        assert_abs_diff_eq!(x[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn solve_random_spd_residual() {
        for seed in 0..20 {
            let a = random_spd(seed, 5);
            let b = [1.0, -2.0, 0.5, 3.0, -1.5];
            let x = solve_spd(&a, &b).unwrap();
            let ax = a.as_matrix().matvec(&x).unwrap();
            let r: Vec<f64> = ax.iter().zip(&b).map(|(u, v)| u - v).collect();
            assert!(norm2(&r) / norm2(&b) <= 1e-10, "seed {seed}");
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(solve_spd(&a, &[1.0, 1.0]), Err(NumericsError::NotPositiveDefinite { pivot: 1 })));
        let neg = SymMatrix::from_diag(&[1.0, -1.0]);
        assert!(Cholesky::factor(&neg).is_err());
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.5, 1.0]]).unwrap();
        assert!(matches!(SymMatrix::new(m), Err(NumericsError::NotSymmetric { .. })));
    }

    #[test]
    fn eig_identity() {
        let e = eig_sym(&SymMatrix::identity(4)).unwrap();
        assert_eq!(e.values, vec![1.0; 4]);
    }

    #[test]
    fn eig_two_by_two() {
        let a = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = eig_sym(&a).unwrap();
        assert_abs_diff_eq!(e.values[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eig_diagonal_sorted_descending() {
        let e = eig_sym(&SymMatrix::from_diag(&[5.0, -2.0, 0.0])).unwrap();
        assert_eq!(e.values, vec![5.0, 0.0, -2.0]);
    }

    #[test]
    fn inverse_and_sqrt() {
        let a = random_spd(7, 4);
        let inv = a.inverse_spd().unwrap();
        let prod = a.as_matrix().matmul(inv.as_matrix()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(prod[(i, j)], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-10);
            }
        }
        let r = a.sqrt_psd().unwrap();
        let rr = r.as_matrix().matmul(r.as_matrix()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(rr[(i, j)], a[(i, j)], epsilon = 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn eig_reconstructs_and_preserves_trace(entries in proptest::collection::vec(-10.0f64..10.0, 21)) {
            // 6x6 symmetric from the 21 upper-triangular entries
            let n = 6;
            let mut m = Matrix::zeros(n, n);
            let mut it = entries.into_iter();
            for i in 0..n {
                for j in i..n {
                    let v = it.next().unwrap();
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            let a = SymMatrix::new(m).unwrap();
            let e = eig_sym(&a).unwrap();
            let norm = a.as_matrix().max_abs();
            let rec = e.reconstruct();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((rec[(i, j)] - a[(i, j)]).abs() <= 1e-9 * norm);
                }
            }
            let sum: f64 = e.values.iter().sum();
            prop_assert!((sum - a.trace()).abs() <= 1e-9 * norm.max(a.trace().abs()));
            prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            let qtq = e.vectors.transpose().matmul(&e.vectors).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((qtq[(i, j)] - expected).abs() < 1e-12);
                }
            }
        }
    }
}
