//! Small dense linear-algebra helpers shared by the stages.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

/// Complex dense matrix.
pub type CMatrix = DMatrix<Complex64>;

/// `(S + Sᵀ) / 2`.
pub fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

/// `(S + Sᴴ) / 2`.
pub fn hermitize(s: &CMatrix) -> CMatrix {
    (s + s.adjoint()).scale(0.5)
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted descending.
pub fn sorted_eigen(s: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(s));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn sym_eigenvalues(s: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = symmetrize(s).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    symmetrize(s)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Eigenvalues of a Hermitian matrix (real, ascending order not guaranteed).
pub fn herm_eigenvalues(s: &CMatrix) -> Vec<f64> {
    SymmetricEigen::new(hermitize(s))
        .eigenvalues
        .iter()
        .copied()
        .collect()
}

/// Count of values above `rel_tol` times the largest magnitude.
pub fn numerical_rank(values: &[f64], rel_tol: f64) -> usize {
    let top = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if top == 0.0 {
        return 0;
    }
    values.iter().filter(|v| v.abs() > rel_tol * top).count()
}

/// Numerical rank from singular values.
pub fn matrix_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv: Vec<f64> = m.singular_values().iter().copied().collect();
    numerical_rank(&sv, rel_tol)
}

/// Singular values sorted descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Hermitian positive semidefinite square root (negative eigenvalues clipped).
pub fn herm_sqrt(s: &CMatrix) -> CMatrix {
    let eig = SymmetricEigen::new(hermitize(s));
    let mut u = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let r = lam.max(0.0).sqrt();
        u.column_mut(j).scale_mut(r);
    }
    // U diag(sqrt) Uᴴ
    &u * eig.eigenvectors.adjoint()
}

/// Function of a symmetric matrix applied through its eigenvalues.
pub fn sym_map(s: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(s));
    let mut scaled = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(f(lam));
    }
    symmetrize(&(&scaled * eig.eigenvectors.transpose()))
}

/// Copy of block `(i, j)` of size `rows x cols`.
pub fn block(m: &DMatrix<f64>, i: usize, j: usize, rows: usize, cols: usize) -> DMatrix<f64> {
    m.view((i * rows, j * cols), (rows, cols)).into_owned()
}

/// Frobenius inner product.
pub fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Real matrix to complex.
pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Row-major nested vectors.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Matrix from row-major nested vectors; `None` if ragged.
pub fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Option<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
