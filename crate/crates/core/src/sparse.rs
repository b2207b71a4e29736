//! Thin helpers over `sprs` matrices plus a reusable sparse LU factorization from `faer`.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use sprs::{CsMat, TriMat};
use std::ops::Range;
use thiserror::Error;

pub type Csr = CsMat<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("matrix is not square: {rows}×{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("matrix is numerically singular: probe residual {residual:e}")]
    Singular { residual: f64 },
}

/// CSR matrix from (row, col, value) triplets; duplicates are summed in a fixed order.
pub fn from_triplets(rows: usize, cols: usize, entries: &[(usize, usize, f64)]) -> Csr {
    let mut sorted = entries.to_vec();
    sorted.sort_by_key(|a| (a.0, a.1));
    let mut tri = TriMat::new((rows, cols));
    let mut iter = sorted.into_iter().peekable();
    while let Some((r, c, mut v)) = iter.next() {
        while let Some(&(r2, c2, v2)) = iter.peek() {
            if (r2, c2) != (r, c) {
                break;
            }
            v += v2;
            iter.next();
        }
        tri.add_triplet(r, c, v);
    }
    tri.to_csr()
}

/// Entries of `m` as triplets in row-major order.
pub fn to_triplets(m: &Csr) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(m.nnz());
    for (r, row) in m.outer_iterator().enumerate() {
        for (c, &v) in row.iter() {
            out.push((r, c, v));
        }
    }
    out
}

/// ½(M + Mᵀ).
pub fn symmetrize(m: &Csr) -> Csr {
    let mut entries = Vec::with_capacity(2 * m.nnz());
    for (r, c, v) in to_triplets(m) {
        entries.push((r, c, 0.5 * v));
        entries.push((c, r, 0.5 * v));
    }
    from_triplets(m.cols(), m.rows(), &entries)
}

pub fn transpose(m: &Csr) -> Csr {
    let entries: Vec<_> = to_triplets(m).into_iter().map(|(r, c, v)| (c, r, v)).collect();
    from_triplets(m.cols(), m.rows(), &entries)
}

/// Sub-block `m[rows, cols]` with indices shifted to start at zero.
pub fn block(m: &Csr, rows: Range<usize>, cols: Range<usize>) -> Csr {
    let mut entries = Vec::new();
    for r in rows.clone() {
        if let Some(row) = m.outer_view(r) {
            for (c, &v) in row.iter() {
                if cols.contains(&c) {
                    entries.push((r - rows.start, c - cols.start, v));
                }
            }
        }
    }
    from_triplets(rows.len(), cols.len(), &entries)
}

/// Sub-matrix on arbitrary row and column index lists.
pub fn select(m: &Csr, rows: &[usize], cols: &[usize]) -> Csr {
    let mut col_pos = vec![usize::MAX; m.cols()];
    for (k, &c) in cols.iter().enumerate() {
        col_pos[c] = k;
    }
    let mut entries = Vec::new();
    for (k, &r) in rows.iter().enumerate() {
        if let Some(row) = m.outer_view(r) {
            for (c, &v) in row.iter() {
                if col_pos[c] != usize::MAX {
                    entries.push((k, col_pos[c], v));
                }
            }
        }
    }
    from_triplets(rows.len(), cols.len(), &entries)
}

/// Integer incidence matrix as floating point.
pub fn to_f64(m: &CsMat<i32>) -> Csr {
    m.map(|&v| f64::from(v))
}

pub fn add(a: &Csr, b: &Csr) -> Csr {
    a + b
}

pub fn sub(a: &Csr, b: &Csr) -> Csr {
    a - b
}

pub fn mul(a: &Csr, b: &Csr) -> Csr {
    a * b
}

/// y = A x, accumulated in column order within each row.
pub fn spmv(a: &Csr, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.cols(), x.len(), "spmv dimension mismatch");
    a.outer_iterator().map(|row| row.iter().map(|(c, &v)| v * x[c]).sum()).collect()
}

/// y += A x.
pub fn spmv_add(a: &Csr, x: &[f64], y: &mut [f64]) {
    assert_eq!(a.cols(), x.len(), "spmv dimension mismatch");
    for (yi, row) in y.iter_mut().zip(a.outer_iterator()) {
        *yi += row.iter().map(|(c, &v)| v * x[c]).sum::<f64>();
    }
}

/// Largest absolute entry of A − B (dimensions must agree).
pub fn max_abs_diff(a: &Csr, b: &Csr) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).data().iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn max_abs(a: &Csr) -> f64 {
    a.data().iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Dense copy, for small diagnostic problems.
pub fn to_dense(a: &Csr) -> nalgebra::DMatrix<f64> {
    let mut d = nalgebra::DMatrix::zeros(a.rows(), a.cols());
    for (r, c, v) in to_triplets(a) {
        d[(r, c)] += v;
    }
    d
}

/// Sparse LU with partial pivoting, factorized once and reused.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu").field("n", &self.n).finish_non_exhaustive()
    }
}

impl SparseLu {
    /// Factorizes `a` and probes the factorization with a fixed right-hand side.
    pub fn new(a: &Csr) -> Result<Self, SparseError> {
        let (rows, cols) = a.shape();
        if rows != cols {
            return Err(SparseError::NotSquare { rows, cols });
        }
        let triplets: Vec<Triplet<usize, usize, f64>> =
            to_triplets(a).into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(rows, cols, &triplets)
            .map_err(|e| SparseError::Factorization(format!("{e:?}")))?;
        let lu = mat.sp_lu().map_err(|e| SparseError::Factorization(format!("{e:?}")))?;
        let this = Self { n: rows, lu };
        if rows > 0 {
            // A generic right-hand side is outside the range of a singular matrix, so the
            // backward residual exposes zero pivots.
            let rhs: Vec<f64> = (0..rows).map(|i| 1.0 + (i % 7) as f64 / 7.0).collect();
            let x = this.solve(&rhs);
            let ax = spmv(a, &x);
            let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let residual = if x.iter().all(|v| v.is_finite()) {
                ax.iter().zip(&rhs).fold(0.0f64, |m, (p, q)| m.max((p - q).abs())) / scale
            } else {
                f64::INFINITY
            };
            if !(residual < 1e-6) {
                return Err(SparseError::Singular { residual });
            }
        }
        Ok(this)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n, "rhs dimension mismatch");
        let b = Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}
