//! Dense linear-algebra and FFT helpers built on `faer` and `rustfft`.

use faer::{Mat, Side};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{DemixError, Result};

pub type CMat = Mat<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
///
/// Only the lower triangle is read.
pub fn hermitian_eig(h: &CMat) -> Result<(Vec<f64>, CMat)> {
    let e = h.self_adjoint_eigen(Side::Lower).map_err(|_| DemixError::Eigen)?;
    let s = e.S().column_vector();
    let vals = (0..h.nrows()).map(|i| s[i].re).collect::<Vec<_>>();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(DemixError::NonFinite("eigendecomposition"));
    }
    Ok((vals, e.U().to_owned()))
}

/// `(H + H^*) / 2`.
pub fn symmetrize(h: &CMat) -> CMat {
    let n = h.nrows();
    Mat::from_fn(n, n, |i, j| (h[(i, j)] + h[(j, i)].conj()) * 0.5)
}

/// Nearest positive semidefinite matrix in Frobenius norm.
pub fn psd_project(h: &CMat) -> Result<CMat> {
    let sym = symmetrize(h);
    let (vals, vecs) = hermitian_eig(&sym)?;
    Ok(recompose_positive(&vals, &vecs))
}

/// `V max(Λ, 0) V^*`, built from the positive part only.
pub(crate) fn recompose_positive(vals: &[f64], vecs: &CMat) -> CMat {
    let n = vecs.nrows();
    let pos: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 0.0).collect();
    let w = Mat::from_fn(n, pos.len(), |i, j| vecs[(i, pos[j])] * vals[pos[j]].sqrt());
    let out = &w * w.adjoint();
    // Exact Hermitian symmetry.
    symmetrize(&out)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.norm_l2()
}

/// Least-squares solution of `A x ≈ b` through a thin SVD.
///
/// Returns the solution and the 2-norm condition number of `A`. Matrices
/// whose condition number exceeds `max_condition` are rejected.
pub fn lstsq(a: &CMat, b: &[Complex64], max_condition: f64) -> Result<(Vec<Complex64>, f64)> {
    let (rows, cols) = (a.nrows(), a.ncols());
    if b.len() != rows {
        return Err(DemixError::DimensionMismatch {
            expected: rows,
            got: b.len(),
        });
    }
    if cols == 0 {
        return Ok((Vec::new(), 1.0));
    }
    if cols > rows {
        return Err(DemixError::RankDeficient {
            condition: f64::INFINITY,
        });
    }
    let svd = a.thin_svd().map_err(|_| DemixError::Eigen)?;
    let s = svd.S().column_vector();
    let smax = s[0].re;
    let smin = s[cols - 1].re;
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= max_condition) {
        return Err(DemixError::RankDeficient { condition });
    }
    let (u, v) = (svd.U(), svd.V());
    let mut coef = vec![ZERO; cols];
    for (k, ck) in coef.iter_mut().enumerate() {
        let mut acc = ZERO;
        for i in 0..rows {
            acc += u[(i, k)].conj() * b[i];
        }
        *ck = acc / s[k].re;
    }
    let x = (0..cols)
        .map(|j| (0..cols).map(|k| v[(j, k)] * coef[k]).sum())
        .collect();
    Ok((x, condition))
}

/// Smallest singular value of a square matrix.
pub fn sigma_min(a: &CMat) -> Result<f64> {
    let s = a.singular_values().map_err(|_| DemixError::Eigen)?;
    Ok(s.into_iter().fold(f64::INFINITY, f64::min))
}

/// Solve the square system `A x = b` by LU with partial pivoting.
pub fn solve(a: &CMat, b: &[Complex64]) -> Vec<Complex64> {
    let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let lu = a.partial_piv_lu();
    let x = faer::linalg::solvers::Solve::solve(&lu, &rhs);
    (0..b.len()).map(|i| x[(i, 0)]).collect()
}

pub fn matvec(a: &CMat, x: &[Complex64]) -> Vec<Complex64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum())
        .collect()
}

/// `sum_{l=1}^{n} v_l exp(-i 2π l k / grid)` for `k = 0..grid`.
///
/// Evaluates `(F_n^* v)(f)` on the equispaced grid `f = k / grid`.
pub fn adjoint_on_grid(v: &[Complex64], grid: usize) -> Vec<Complex64> {
    assert!(grid >= v.len(), "grid must be at least the vector length");
    let mut buf = vec![ZERO; grid];
    // Place v_l at position l mod grid so the FFT kernel carries the l = 1 offset.
    for (i, &x) in v.iter().enumerate() {
        buf[(i + 1) % grid] += x;
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(grid).process(&mut buf);
    buf
}

/// Same as [`adjoint_on_grid`] for coefficients indexed `-m..=m`.
///
/// `c[p]` is the coefficient of `exp(-i 2π (p - m) f)`.
pub fn centered_adjoint_on_grid(c: &[Complex64], grid: usize) -> Vec<Complex64> {
    let m = (c.len() - 1) / 2;
    assert!(grid >= c.len());
    let mut buf = vec![ZERO; grid];
    for (p, &x) in c.iter().enumerate() {
        let idx = (p as i64 - m as i64).rem_euclid(grid as i64) as usize;
        buf[idx] += x;
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(grid).process(&mut buf);
    buf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trig::cis_turns;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn psd_clips_negative_eigenvalues() {
        let mut h = CMat::zeros(2, 2);
        h[(0, 0)] = c(1.0, 0.0);
        h[(1, 1)] = c(-2.0, 0.0);
        let p = psd_project(&h).unwrap();
        assert!((p[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(p[(1, 1)].norm() < 1e-15);
        assert!(p[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn lstsq_recovers_exact_solution() {
        let a = CMat::from_fn(5, 2, |i, j| cis_turns(0.1 * (i * (j + 1)) as f64));
        let x = [c(1.0, -2.0), c(0.5, 0.25)];
        let b = matvec(&a, &x);
        let (xh, cond) = lstsq(&a, &b, 1e12).unwrap();
        assert!(cond >= 1.0);
        for (u, v) in xh.iter().zip(&x) {
            assert!((u - v).norm() < 1e-13);
        }
    }

    #[test]
    fn lstsq_flags_rank_deficiency() {
        let a = CMat::from_fn(4, 2, |i, _| c(i as f64, 0.0));
        let b = vec![c(1.0, 0.0); 4];
        assert!(matches!(
            lstsq(&a, &b, 1e10),
            Err(DemixError::RankDeficient { .. })
        ));
    }

    #[test]
    fn grid_adjoint_matches_direct_sum() {
        let v: Vec<Complex64> = (0..7).map(|i| c(i as f64 * 0.3, 1.0 - i as f64)).collect();
        let grid = 32;
        let fast = adjoint_on_grid(&v, grid);
        for (k, fk) in fast.iter().enumerate() {
            let f = k as f64 / grid as f64;
            let direct: Complex64 = v
                .iter()
                .enumerate()
                .map(|(i, &x)| x * cis_turns(-f * (i + 1) as f64))
                .sum();
            assert!((fk - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn centered_grid_adjoint_matches_direct_sum() {
        let q: Vec<Complex64> = (0..9).map(|i| c(1.0 / (i + 1) as f64, i as f64 * 0.1)).collect();
        let grid = 40;
        let fast = centered_adjoint_on_grid(&q, grid);
        for (k, fk) in fast.iter().enumerate() {
            let f = k as f64 / grid as f64;
            let direct: Complex64 = q
                .iter()
                .enumerate()
                .map(|(p, &x)| x * cis_turns(-f * (p as f64 - 4.0)))
                .sum();
            assert!((fk - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn square_solve() {
        let a = CMat::from_fn(3, 3, |i, j| if i == j { c(2.0, 1.0) } else { c(0.1 * (i + j) as f64, 0.0) });
        let x = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 2.0)];
        let b = matvec(&a, &x);
        let xh = solve(&a, &b);
        for (u, v) in xh.iter().zip(&x) {
            assert!((u - v).norm() < 1e-13);
        }
        assert!(sigma_min(&a).unwrap() > 0.5);
    }
}
