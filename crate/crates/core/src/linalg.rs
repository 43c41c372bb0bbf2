//! Small dense linear-algebra helpers shared by the Gaussian code paths.

use nalgebra::{DMatrix, SymmetricEigen};

/// Relative eigenvalue threshold below which a symmetric matrix is treated as
/// rank deficient (and above whose negative it still counts as PSD).
pub const PSD_REL_TOL: f64 = 1e-10;

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// PSD test with eigenvalues allowed down to `-PSD_REL_TOL * scale`.
pub fn is_psd_with_scale(m: &DMatrix<f64>, scale: f64) -> bool {
    min_eigenvalue(m) >= -PSD_REL_TOL * scale.abs()
}

pub fn is_psd(m: &DMatrix<f64>) -> bool {
    let ev = sym_eigenvalues(m);
    match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) => lo >= -PSD_REL_TOL * hi.abs().max(lo.abs()),
        _ => true,
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Rows `rows` and columns `cols` of `m`.
pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Natural log-determinant of a symmetric positive definite matrix, `None` if
/// the Cholesky factorization fails.
pub fn logdet_spd(m: &DMatrix<f64>) -> Option<f64> {
    if m.nrows() == 0 {
        return Some(0.0);
    }
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    Some((0..m.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum())
}

/// Log of the product of eigenvalues above `PSD_REL_TOL * λ_max`, together
/// with the number of eigenvalues kept.
pub fn rank_reduced_logdet(m: &DMatrix<f64>) -> (f64, usize) {
    let ev = sym_eigenvalues(m);
    let top = ev.last().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return (0.0, 0);
    }
    let kept: Vec<f64> = ev.into_iter().filter(|&v| v > PSD_REL_TOL * top).collect();
    (kept.iter().map(|v| v.ln()).sum(), kept.len())
}

/// Orthonormal basis (as columns) of the numerical range of a symmetric PSD matrix.
pub fn range_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(m.clone());
    let top = eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let keep: Vec<usize> = (0..n)
        .filter(|&i| top > 0.0 && eig.eigenvalues[i] > PSD_REL_TOL * top)
        .collect();
    DMatrix::from_fn(n, keep.len(), |i, j| eig.eigenvectors[(i, keep[j])])
}

/// Inverse of a symmetric positive definite matrix via Cholesky, falling back
/// to LU when Cholesky fails.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    match m.clone().cholesky() {
        Some(c) => Some(c.inverse()),
        None => m.clone().try_inverse(),
    }
}

/// Conditional cross-covariance `S_PQ - S_PG S_GG^{-1} S_GQ`.
pub fn conditional_cross_cov(
    s: &DMatrix<f64>,
    p: &[usize],
    q: &[usize],
    g: &[usize],
) -> Option<DMatrix<f64>> {
    let spq = submatrix(s, p, q);
    if g.is_empty() {
        return Some(spq);
    }
    let sgg_inv = spd_inverse(&submatrix(s, g, g))?;
    let spg = submatrix(s, p, g);
    let sgq = submatrix(s, g, q);
    Some(spq - spg * sgg_inv * sgq)
}

/// Factor `F` with `F Fᵀ = m` for a symmetric PSD `m`: Cholesky when it
/// succeeds on a well-conditioned matrix, otherwise the symmetric square root
/// with eigenvalues below `PSD_REL_TOL * λ_max` clipped to zero.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let ev = sym_eigenvalues(m);
    let (lo, hi) = (ev[0], ev[n - 1]);
    if lo > PSD_REL_TOL * hi {
        if let Some(c) = m.clone().cholesky() {
            return c.l();
        }
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut f = eig.eigenvectors.clone();
    for j in 0..n {
        let v = eig.eigenvalues[j];
        let s = if v > PSD_REL_TOL * hi { v.sqrt() } else { 0.0 };
        for i in 0..n {
            f[(i, j)] *= s;
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_reproduces_singular_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.5, 1.0, 1.0, 0.5, 0.5, 0.5, 1.0]);
        let f = psd_factor(&m);
        let back = &f * f.transpose();
        assert!((back - &m).abs().max() < 1e-12);
    }

    #[test]
    fn rank_reduced_logdet_drops_null_space() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]);
        let (ld, rank) = rank_reduced_logdet(&m);
        assert_eq!(rank, 1);
        assert!((ld - 4.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn conditional_cross_cov_of_markov_chain_vanishes() {
        // X1 - X2 - X3 with unit variances and ρ = 0.6, 0.7.
        let s = DMatrix::from_row_slice(3, 3, &[1.0, 0.6, 0.42, 0.6, 1.0, 0.7, 0.42, 0.7, 1.0]);
        let r = conditional_cross_cov(&s, &[0], &[2], &[1]).unwrap();
        assert!(r[(0, 0)].abs() < 1e-14);
    }
}
