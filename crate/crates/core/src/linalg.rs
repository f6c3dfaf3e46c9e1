//! Sparse symmetric matrices and the two linear solvers used by the pipeline:
//! a sparse Cholesky factorization (direct) and Jacobi-preconditioned conjugate
//! gradients (iterative). Keeping both lets results be cross-checked by two
//! independent routes.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Symmetric matrix in full compressed-row storage (both triangles stored).
#[derive(Clone, Debug)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag_pos: Vec<usize>,
}

impl SparseSym {
    /// Assembles from `(row, col, value)` entries; duplicates are summed and every
    /// diagonal slot is created even when absent from the input.
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for i in 0..n {
            rows[i].push((i, 0.0));
        }
        for &(i, j, v) in entries {
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag_pos = vec![0; n];
        row_ptr.push(0);
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    if j == i {
                        diag_pos[i] = cols.len();
                    }
                    cols.push(j);
                    vals.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
            diag_pos,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.diag_pos.iter().map(|&p| self.vals[p]).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `self + diag(d)` with an unchanged sparsity pattern.
    pub fn add_diagonal(&self, d: &[f64]) -> Self {
        let mut out = self.clone();
        for (i, &p) in self.diag_pos.iter().enumerate() {
            out.vals[p] += d[i];
        }
        out
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let triplets: Vec<Triplet<usize, usize, f64>> = (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| Triplet::new(i, j, v)))
            .collect();
        SparseColMat::try_new_from_triplets(self.n, self.n, &triplets)
            .map_err(|e| Error::SingularSystem(format!("{e:?}")))
    }

    /// Dense copy, for small-matrix diagnostics.
    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Sparse Cholesky with a reusable symbolic analysis.
#[derive(Clone, Debug)]
pub struct CholeskyPattern {
    symbolic: SymbolicLlt<usize>,
}

impl CholeskyPattern {
    pub fn analyze(matrix: &SparseSym) -> Result<Self> {
        let m = matrix.to_faer()?;
        let symbolic = SymbolicLlt::try_new(m.symbolic(), Side::Lower)
            .map_err(|e| Error::SingularSystem(format!("{e:?}")))?;
        Ok(Self { symbolic })
    }

    /// Factors a matrix sharing the analysed pattern; fails unless it is positive definite.
    pub fn factor(&self, matrix: &SparseSym) -> Result<CholeskyFactor> {
        let m = matrix.to_faer()?;
        let llt = Llt::try_new_with_symbolic(self.symbolic.clone(), m.as_ref(), Side::Lower)
            .map_err(|e| Error::SingularSystem(format!("{e:?}")))?;
        Ok(CholeskyFactor { llt, n: matrix.n })
    }
}

pub struct CholeskyFactor {
    llt: Llt<usize, f64>,
    n: usize,
}

impl CholeskyFactor {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.llt.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// One-shot direct solve of an SPD system.
pub fn cholesky_solve(matrix: &SparseSym, rhs: &[f64]) -> Result<Vec<f64>> {
    let factor = CholeskyPattern::analyze(matrix)?.factor(matrix)?;
    let x = factor.solve(rhs);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("non-finite solution".into()));
    }
    Ok(x)
}

/// Jacobi-preconditioned conjugate gradients for an SPD matrix.
///
/// Stops when `‖b - A x‖₂ <= rel_tol · ‖b‖₂`.
pub fn conjugate_gradient(
    matrix: &SparseSym,
    rhs: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = matrix.dim();
    let inv_diag: Vec<f64> = matrix
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let norm_b = dot(rhs, rhs).sqrt();
    let mut x = vec![0.0; n];
    if norm_b == 0.0 {
        return Ok(x);
    }
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let ap = matrix.matvec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SingularSystem(
                "conjugate gradients met a non-positive curvature direction".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= rel_tol * norm_b {
            // one explicit residual refresh guards against recurrence drift
            let true_r: Vec<f64> = rhs
                .iter()
                .zip(matrix.matvec(&x))
                .map(|(b, ax)| b - ax)
                .collect();
            if dot(&true_r, &true_r).sqrt() <= 10.0 * rel_tol * norm_b {
                return Ok(x);
            }
            r = true_r;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SingularSystem(format!(
        "conjugate gradients did not reach {rel_tol:e} in {max_iter} iterations"
    )))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize, shift: f64) -> SparseSym {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseSym::from_triplets(n, &t)
    }

    #[test]
    fn direct_and_iterative_agree() {
        let a = path_laplacian(200, 0.1);
        let b: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin()).collect();
        let x1 = cholesky_solve(&a, &b).unwrap();
        let x2 = conjugate_gradient(&a, &b, 1e-14, 10_000).unwrap();
        let diff = x1.iter().zip(&x2).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff}");
        let r = a.matvec(&x1);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicates_are_summed() {
        let a = SparseSym::from_triplets(2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 3.0)]);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(0, 0), 0.0);
        assert_eq!(a.nnz(), 4);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = path_laplacian(10, -3.0);
        assert!(cholesky_solve(&a, &[1.0; 10]).is_err());
    }
}
