//! Minimal dense linear algebra: row-major matrix/vector storage, products,
//! Frobenius norms, and the minimum-singular-value computation used by the
//! landscape diagnostics.
//!
//! σ_min is computed through the Gram matrix (`A·Aᵀ` when rows ≤ cols, else
//! `Aᵀ·A`) followed by a cyclic Jacobi eigensolve. The squared condition
//! number of the Gram route is acceptable here: σ_min is only compared
//! against coarse thresholds, never reported to high precision.

use std::ops::{Index, IndexMut};

use thiserror::Error;

/// Relative off-diagonal residual at which the Jacobi sweep is converged.
pub const EIGEN_TOL: f64 = 1e-10;

/// Hard cap on Jacobi sweeps; converts a silent hang into a diagnosable error.
pub const EIGEN_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: cannot multiply {left_rows}x{left_cols} by {right_rows}x{right_cols}")]
    DimensionMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("matrix must be non-empty, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("eigensolver did not converge after {sweeps} sweeps (last relative residual {residual:e})")]
    NonConvergence { sweeps: usize, residual: f64 },
}

/// Dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
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

    /// Builds a matrix from a row-major buffer.
    ///
    /// Panics if `data.len() != rows * cols`; shape and buffer always travel
    /// together in this crate.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "row-major buffer length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Standard matrix product.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch {
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        // i-k-j order keeps the inner loop contiguous in both `other` and `out`.
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a_ik) in a_row.iter().enumerate() {
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a_ik * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &DenseVector) -> Result<DenseVector, LinalgError> {
        if self.cols != v.len() {
            return Err(LinalgError::DimensionMismatch {
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: v.len(),
                right_cols: 1,
            });
        }
        let out = (0..self.rows)
            .map(|i| dot(self.row(i), v.data()))
            .collect();
        Ok(DenseVector::new(out))
    }

    /// √(Σ aᵢⱼ²).
    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Smallest singular value, via the smaller Gram matrix and a cyclic
    /// Jacobi eigensolve. Round-off can push the smallest Gram eigenvalue
    /// slightly negative; it is clamped to 0 before the square root.
    pub fn min_singular_value(&self) -> Result<f64, LinalgError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(LinalgError::EmptyMatrix {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let gram = if self.rows <= self.cols {
            gram_aat(self)
        } else {
            gram_ata(self)
        };
        let eigs = symmetric_eigenvalues(&gram, EIGEN_TOL, EIGEN_MAX_SWEEPS)?;
        let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(min.max(0.0).sqrt())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dense vector of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseVector {
    pub fn new(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn zeros(len: usize) -> Self {
        Self { data: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A·Aᵀ (rows x rows), exploiting symmetry.
fn gram_aat(a: &DenseMatrix) -> DenseMatrix {
    let n = a.rows();
    let mut g = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = dot(a.row(i), a.row(j));
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Aᵀ·A (cols x cols), exploiting symmetry.
fn gram_ata(a: &DenseMatrix) -> DenseMatrix {
    let m = a.cols();
    let mut g = DenseMatrix::zeros(m, m);
    for row in 0..a.rows() {
        let r = a.row(row);
        for i in 0..m {
            let ri = r[i];
            if ri == 0.0 {
                continue;
            }
            let g_row = &mut g.data[i * m..(i + 1) * m];
            for j in i..m {
                g_row[j] += ri * r[j];
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    g
}

fn off_diagonal_sq(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi sweeps, unsorted sign
/// but returned ascending. Convergence is declared when the off-diagonal
/// Frobenius mass falls below `tol` relative to the full Frobenius norm.
pub fn symmetric_eigenvalues(
    a: &DenseMatrix,
    tol: f64,
    max_sweeps: usize,
) -> Result<Vec<f64>, LinalgError> {
    assert_eq!(a.rows(), a.cols(), "eigensolver needs a square matrix");
    let n = a.rows();
    let mut m = a.clone();
    let total = m.fro_norm();
    if total == 0.0 {
        return Ok(vec![0.0; n]);
    }

    let mut residual = off_diagonal_sq(&m).sqrt() / total;
    for _sweep in 0..max_sweeps {
        if residual <= tol {
            let mut eigs: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
            eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
            return Ok(eigs);
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Rotate rows and columns p, q in place.
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
            }
        }
        residual = off_diagonal_sq(&m).sqrt() / total;
    }

    Err(LinalgError::NonConvergence {
        sweeps: max_sweeps,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn splitmix(state: &mut u64) -> f64 {
        *state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z = z ^ (z >> 31);
        (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut state = seed;
        let data = (0..rows * cols).map(|_| splitmix(&mut state)).collect();
        DenseMatrix::from_vec(rows, cols, data)
    }

    /// Naive triple-loop product, the reference for matmul.
    fn matmul_oracle(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    /// Smallest eigenvalue of a symmetric matrix by inertia bisection:
    /// count eigenvalues below t via the signs of the LDLᵀ pivots of A - tI.
    /// Fully independent of the Jacobi path.
    fn min_eig_bisection_oracle(a: &DenseMatrix) -> f64 {
        let n = a.rows();
        let count_below = |t: f64| -> usize {
            // LDLᵀ without pivoting; a tiny shift dodges zero pivots.
            let mut m = a.clone();
            for i in 0..n {
                m[(i, i)] -= t;
            }
            let mut l = DenseMatrix::identity(n);
            let mut d = vec![0.0; n];
            for j in 0..n {
                let mut dj = m[(j, j)];
                for k in 0..j {
                    dj -= l[(j, k)] * l[(j, k)] * d[k];
                }
                if dj == 0.0 {
                    dj = 1e-300;
                }
                d[j] = dj;
                for i in (j + 1)..n {
                    let mut v = m[(i, j)];
                    for k in 0..j {
                        v -= l[(i, k)] * l[(j, k)] * d[k];
                    }
                    l[(i, j)] = v / dj;
                }
            }
            d.iter().filter(|&&x| x < 0.0).count()
        };

        let bound = a.fro_norm() + 1.0;
        let (mut lo, mut hi) = (-bound, bound);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if count_below(mid) >= 1 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn sigma_min_oracle(a: &DenseMatrix) -> f64 {
        let gram = if a.rows() <= a.cols() {
            a.matmul(&a.transpose()).unwrap()
        } else {
            a.transpose().matmul(a).unwrap()
        };
        min_eig_bisection_oracle(&gram).max(0.0).sqrt()
    }

    #[test]
    fn matmul_identity() {
        let a = random_matrix(3, 3, 7);
        let got = DenseMatrix::identity(3).matmul(&a).unwrap();
        assert_eq!(got, a);
    }

    #[test]
    fn matmul_hand_example() {
        let a = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = DenseMatrix::from_vec(2, 1, vec![1.0, 1.0]);
        let got = a.matmul(&b).unwrap();
        assert_eq!(got.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let a = random_matrix(4, 5, 11);
        let b = random_matrix(5, 3, 13);
        let got = a.matmul(&b).unwrap();
        let want = matmul_oracle(&a, &b);
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() <= 1e-14 * (1.0 + w.abs()));
        }
    }

    #[test]
    fn matmul_dimension_mismatch_names_both_shapes() {
        let a = random_matrix(2, 3, 17);
        let b = random_matrix(4, 2, 19);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("4x2"), "{msg}");
    }

    #[test]
    fn fro_norm_examples() {
        assert_eq!(DenseMatrix::zeros(3, 4).fro_norm(), 0.0);
        let a = DenseMatrix::from_vec(1, 2, vec![3.0, 4.0]);
        assert_eq!(a.fro_norm(), 5.0);

        let a = random_matrix(6, 6, 23);
        let want = a.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((a.fro_norm() - want).abs() <= 1e-14 * want);
    }

    #[test]
    fn min_singular_value_identity_and_diagonal() {
        assert!((DenseMatrix::identity(4).min_singular_value().unwrap() - 1.0).abs() < 1e-12);
        let a = DenseMatrix::from_vec(2, 3, vec![3.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        assert!((a.min_singular_value().unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn min_singular_value_matches_bisection_oracle() {
        let a = random_matrix(5, 8, 31);
        let got = a.min_singular_value().unwrap();
        let want = sigma_min_oracle(&a);
        assert!(
            (got - want).abs() <= 1e-8 * want.max(1e-30),
            "got {got}, oracle {want}"
        );
    }

    #[test]
    fn min_singular_value_invariant_under_permutation() {
        let a = random_matrix(5, 7, 37);
        let base = a.min_singular_value().unwrap();

        // Swap two rows.
        let mut rows: Vec<Vec<f64>> = (0..a.rows()).map(|i| a.row(i).to_vec()).collect();
        rows.swap(1, 3);
        let swapped = DenseMatrix::from_rows(&rows);
        let got = swapped.min_singular_value().unwrap();
        assert!((got - base).abs() <= 1e-10 * base);

        // Swap two columns.
        let mut t = a.clone();
        for i in 0..t.rows() {
            let tmp = t[(i, 0)];
            t[(i, 0)] = t[(i, 5)];
            t[(i, 5)] = tmp;
        }
        let got = t.min_singular_value().unwrap();
        assert!((got - base).abs() <= 1e-10 * base);
    }

    #[test]
    fn min_singular_value_scales_with_matrix() {
        let a = random_matrix(4, 6, 41);
        let base = a.min_singular_value().unwrap();
        for c in [-3.0, 0.5, 7.25] {
            let scaled = DenseMatrix::from_vec(
                a.rows(),
                a.cols(),
                a.data().iter().map(|x| c * x).collect(),
            );
            let got = scaled.min_singular_value().unwrap();
            let want = c.abs() * base;
            assert!((got - want).abs() <= 1e-10 * want.max(1e-30));
        }
    }

    #[test]
    fn fro_norm_squared_is_sum_of_squared_singular_values() {
        let a = random_matrix(6, 8, 43);
        let gram = a.matmul(&a.transpose()).unwrap();
        let eigs = symmetric_eigenvalues(&gram, EIGEN_TOL, EIGEN_MAX_SWEEPS).unwrap();
        let sum_sq: f64 = eigs.iter().map(|l| l.max(0.0)).sum();
        let want = a.fro_norm().powi(2);
        assert!((sum_sq - want).abs() <= 1e-10 * want);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        let a = DenseMatrix::zeros(0, 3);
        assert!(matches!(
            a.min_singular_value(),
            Err(LinalgError::EmptyMatrix { .. })
        ));
    }
}
