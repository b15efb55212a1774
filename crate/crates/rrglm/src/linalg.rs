//! Dense decompositions used by the solvers: thin SVD, symmetric
//! eigendecomposition, spectral norm, numerical rank, and SPD solves.
//!
//! All routines are deterministic. Factor signs are normalized so repeated
//! runs and alternative code paths produce identical factors, not just
//! identical products.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Thin singular value decomposition `A = U diag(s) Vᵀ` with
/// `k = min(n, m)` columns in both factor matrices and `s` sorted in
/// descending order. The first entry of each column of `u` that is
/// nonzero (relative to the column's largest entry) is nonnegative.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// Left singular vectors, `n x k`.
    pub u: Array2<f64>,
    /// Singular values, descending, length `k`.
    pub s: Array1<f64>,
    /// Right singular vectors, `m x k` (columns pair with `u`'s).
    pub v: Array2<f64>,
}

impl ThinSvd {
    /// Rebuilds `U diag(s) Vᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let us = &self.u * &self.s.view().insert_axis(ndarray::Axis(0));
        us.dot(&self.v.t())
    }

    /// Count of singular values exceeding `rel_tol` times the largest.
    pub fn rank(&self, rel_tol: f64) -> usize {
        numerical_rank(self.s.view(), rel_tol)
    }
}

/// Symmetric eigendecomposition `S = Q diag(w) Qᵀ` with `w` sorted in
/// descending order and the same sign convention as [`ThinSvd`].
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Orthonormal eigenvectors, one per column.
    pub vectors: Array2<f64>,
    /// Eigenvalues, descending.
    pub values: Array1<f64>,
}

pub(crate) fn to_na(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn check_finite(a: ArrayView2<f64>, what: &str) -> Result<()> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::input(format!("{what} contains a non-finite entry")));
    }
    Ok(())
}

fn check_nonempty(a: ArrayView2<f64>, what: &str) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::input(format!(
            "{what} must be non-empty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Flips factor column pairs so the first significantly nonzero entry of
/// each `u` column is nonnegative. Zero columns are left untouched.
fn normalize_signs(u: &mut Array2<f64>, v: &mut Array2<f64>) {
    let k = u.ncols();
    for j in 0..k {
        let col_max = u.column(j).iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if col_max == 0.0 {
            continue;
        }
        let lead = u
            .column(j)
            .iter()
            .find(|x| x.abs() > 1e-12 * col_max)
            .copied()
            .unwrap_or(0.0);
        if lead < 0.0 {
            u.column_mut(j).mapv_inplace(|x| -x);
            v.column_mut(j).mapv_inplace(|x| -x);
        }
    }
}

/// Orthogonalizes the columns of `work` by cyclic Jacobi rotations,
/// accumulating the rotations into `v`. On return the columns of `work`
/// are pairwise orthogonal relative to their sizes; their norms are the
/// singular values of the original matrix.
fn jacobi_orthogonalize(work: &mut Array2<f64>, v: &mut Array2<f64>) -> Result<()> {
    let rows = work.nrows();
    let cols = work.ncols();
    let tol = 1e-13;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for i in 0..cols.saturating_sub(1) {
            for j in (i + 1)..cols {
                let mut aii = 0.0;
                let mut ajj = 0.0;
                let mut aij = 0.0;
                for r in 0..rows {
                    let wi = work[[r, i]];
                    let wj = work[[r, j]];
                    aii += wi * wi;
                    ajj += wj * wj;
                    aij += wi * wj;
                }
                if aij == 0.0 || aij.abs() <= tol * (aii * ajj).sqrt() {
                    continue;
                }
                let zeta = (ajj - aii) / (2.0 * aij);
                // Smaller root of t^2 + 2*zeta*t - 1 = 0: the rotation
                // angle stays below 45 degrees, which keeps the cyclic
                // sweep convergent.
                let t = if zeta.is_finite() {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                } else {
                    // The required angle underflows; nothing representable
                    // would change.
                    continue;
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                if s == 0.0 {
                    continue;
                }
                rotated = true;
                for r in 0..rows {
                    let wi = work[[r, i]];
                    let wj = work[[r, j]];
                    work[[r, i]] = c * wi - s * wj;
                    work[[r, j]] = s * wi + c * wj;
                }
                for r in 0..cols {
                    let vi = v[[r, i]];
                    let vj = v[[r, j]];
                    v[[r, i]] = c * vi - s * vj;
                    v[[r, j]] = s * vi + c * vj;
                }
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::numerical(
        "singular value iteration did not settle within 60 sweeps".to_string(),
    ))
}

/// Replaces exactly-zero columns of an otherwise orthonormal `u` with a
/// deterministic orthonormal completion built from standard basis
/// vectors (largest residual wins, earliest index on ties).
fn complete_zero_columns(u: &mut Array2<f64>) {
    let (n, k) = u.dim();
    for j in 0..k {
        if u.column(j).iter().any(|&x| x != 0.0) {
            continue;
        }
        let mut best = (f64::NEG_INFINITY, 0);
        for cand in 0..n {
            // Residual norm of e_cand against the nonzero columns; their
            // orthonormality turns the projection into a row sum.
            let mut proj = 0.0;
            for c in 0..k {
                if c != j {
                    proj += u[[cand, c]] * u[[cand, c]];
                }
            }
            let res = 1.0 - proj;
            if res > best.0 {
                best = (res, cand);
            }
        }
        let cand = best.1;
        let mut col = Array1::<f64>::zeros(n);
        col[cand] = 1.0;
        // Two Gram-Schmidt passes make the completion orthogonal to
        // working precision.
        for _ in 0..2 {
            for c in 0..k {
                if c == j {
                    continue;
                }
                let dot = u.column(c).dot(&col);
                let uc = u.column(c).to_owned();
                col.scaled_add(-dot, &uc);
            }
        }
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col.mapv_inplace(|x| x / norm);
        }
        u.column_mut(j).assign(&col);
    }
}

/// Jacobi factorization of a tall matrix (`nrows >= ncols`), without the
/// sign convention applied: `a = u diag(s) vᵀ`, `s` descending.
fn jacobi_factor(a: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let (n, k) = a.dim();
    let mut work = a.to_owned();
    let mut v_acc = Array2::<f64>::eye(k);
    jacobi_orthogonalize(&mut work, &mut v_acc)?;

    let norms: Vec<f64> = (0..k)
        .map(|j| work.column(j).dot(&work.column(j)).sqrt())
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let mut u = Array2::zeros((n, k));
    let mut v = Array2::zeros((k, k));
    let mut s = Array1::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = norms[src];
        if norms[src] > 0.0 {
            let scaled = work.column(src).mapv(|x| x / norms[src]);
            u.column_mut(dst).assign(&scaled);
        }
        v.column_mut(dst).assign(&v_acc.column(src));
    }
    complete_zero_columns(&mut u);
    Ok((u, s, v))
}

/// Thin SVD of a dense matrix. Fails on empty or non-finite input.
pub fn thin_svd(a: ArrayView2<f64>) -> Result<ThinSvd> {
    check_nonempty(a, "svd input")?;
    check_finite(a, "svd input")?;
    let (mut u, s, mut v) = if a.nrows() >= a.ncols() {
        jacobi_factor(a)?
    } else {
        let (ut, st, vt) = jacobi_factor(a.t())?;
        (vt, st, ut)
    };
    normalize_signs(&mut u, &mut v);
    Ok(ThinSvd { u, s, v })
}

/// Symmetric eigendecomposition. Rejects input whose asymmetry exceeds
/// `1e-8` times its largest entry; the symmetric part is decomposed.
pub fn sym_eig(s: ArrayView2<f64>) -> Result<SymEig> {
    check_nonempty(s, "eigendecomposition input")?;
    check_finite(s, "eigendecomposition input")?;
    if s.nrows() != s.ncols() {
        return Err(Error::input(format!(
            "eigendecomposition input must be square, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let max_abs = s.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let asym = (&s - &s.t()).iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if asym > 1e-8 * max_abs.max(1e-300) {
        return Err(Error::input(format!(
            "matrix is not symmetric: max |S - St| = {asym:.3e} vs max |S| = {max_abs:.3e}"
        )));
    }
    let sym = (&s + &s.t()) * 0.5;
    let eig = to_na(sym.view()).symmetric_eigen();
    let n = s.nrows();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());

    let mut vectors = Array2::zeros((n, n));
    let mut values = Array1::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        for i in 0..n {
            vectors[[i, dst]] = eig.eigenvectors[(i, src)];
        }
    }
    let mut dummy = vectors.clone();
    normalize_signs(&mut vectors, &mut dummy);
    Ok(SymEig { vectors, values })
}

/// Largest singular value. Small matrices go through the thin SVD (exact
/// to machine precision); larger ones use power iteration on `AᵀA` until
/// the relative change drops below `tol`, with an SVD fallback on stall.
pub fn spectral_norm(a: ArrayView2<f64>, tol: f64) -> Result<f64> {
    check_nonempty(a, "spectral norm input")?;
    check_finite(a, "spectral norm input")?;
    if a.nrows().min(a.ncols()) <= 512 {
        return Ok(thin_svd(a)?.s[0]);
    }
    let m = a.ncols();
    let mut v = Array1::from_elem(m, 1.0 / (m as f64).sqrt());
    let mut sigma_prev = -1.0;
    for _ in 0..10_000 {
        let w = a.t().dot(&a.dot(&v));
        let norm = w.dot(&w).sqrt();
        if norm < 1e-300 {
            break;
        }
        v = w / norm;
        let av = a.dot(&v);
        let sigma = av.dot(&av).sqrt();
        if (sigma - sigma_prev).abs() <= tol * sigma.max(1.0) {
            return Ok(sigma);
        }
        sigma_prev = sigma;
    }
    Ok(thin_svd(a)?.s[0])
}

/// Count of entries of a descending nonnegative spectrum exceeding
/// `rel_tol` times the largest entry. An all-zero spectrum has rank 0.
pub fn numerical_rank(s: ArrayView1<f64>, rel_tol: f64) -> usize {
    if s.is_empty() {
        return 0;
    }
    let top = s[0];
    if top <= 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * top).count()
}

/// Solves `A X = B` for symmetric positive definite `A` via Cholesky.
pub fn solve_spd(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::input(format!(
            "solve dimensions mismatch: A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    check_finite(a, "solve lhs")?;
    check_finite(b, "solve rhs")?;
    let chol = to_na(a).cholesky().ok_or_else(|| {
        Error::numerical("matrix is not positive definite (rank-deficient or ill-conditioned)")
    })?;
    let mut rhs = to_na(b);
    chol.solve_mut(&mut rhs);
    Ok(from_na(&rhs))
}

/// Frobenius norm.
pub fn frob(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest absolute entry.
pub fn max_abs(a: ArrayView2<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn eye(n: usize) -> Array2<f64> {
        Array2::eye(n)
    }

    #[test]
    fn svd_of_diag_3_1_has_descending_values() {
        let a = array![[3.0, 0.0], [0.0, 1.0]];
        let svd = thin_svd(a.view()).unwrap();
        assert!((svd.s[0] - 3.0).abs() < 1e-12);
        assert!((svd.s[1] - 1.0).abs() < 1e-12);
        let diff = &svd.reconstruct() - &a;
        assert!(max_abs(diff.view()) < 1e-12);
    }

    #[test]
    fn svd_factors_are_orthonormal_and_reconstruct() {
        // Fixed rectangular matrices, both orientations.
        let a = array![
            [0.9, -1.4, 0.3],
            [2.0, 0.1, -0.5],
            [-0.7, 0.8, 1.2],
            [0.4, 0.4, -2.2],
            [1.1, -0.6, 0.0]
        ];
        for mat in [a.clone(), a.t().to_owned()] {
            let svd = thin_svd(mat.view()).unwrap();
            let k = svd.s.len();
            assert_eq!(k, 3);
            let utu = svd.u.t().dot(&svd.u);
            let vtv = svd.v.t().dot(&svd.v);
            assert!(max_abs((&utu - &eye(k)).view()) < 1e-10, "UtU not identity");
            assert!(max_abs((&vtv - &eye(k)).view()) < 1e-10, "VtV not identity");
            let diff = &svd.reconstruct() - &mat;
            assert!(frob(diff.view()) <= 1e-8 * frob(mat.view()).max(1.0));
            for i in 1..k {
                assert!(svd.s[i - 1] >= svd.s[i]);
                assert!(svd.s[i] >= 0.0);
            }
        }
    }

    #[test]
    fn svd_sign_convention_leading_entry_nonnegative() {
        let a = array![[-2.0, 0.0], [0.0, -3.0], [0.0, 0.0]];
        let svd = thin_svd(a.view()).unwrap();
        for j in 0..svd.s.len() {
            let col = svd.u.column(j);
            let lead = col.iter().find(|x| x.abs() > 1e-12).unwrap();
            assert!(*lead > 0.0);
        }
        let diff = &svd.reconstruct() - &a;
        assert!(max_abs(diff.view()) < 1e-12);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let a = array![[1.0, f64::NAN], [0.0, 1.0]];
        assert!(matches!(thin_svd(a.view()), Err(Error::Input(_))));
    }

    #[test]
    fn svd_handles_extreme_rank_deficiency() {
        // Rank-1 matrices with a huge leading value: the factor pairing
        // must survive the gap between the top value and the noise floor.
        let mut left = Array2::<f64>::zeros((50, 1));
        let mut right = Array2::<f64>::zeros((1, 6));
        for i in 0..50 {
            left[[i, 0]] = ((i as f64) * 0.37).sin() + 0.1;
        }
        for j in 0..6 {
            right[[0, j]] = ((j as f64) * 1.3).cos() * 40.0;
        }
        let a = left.dot(&right);
        let svd = thin_svd(a.view()).unwrap();
        let rel = frob((&svd.reconstruct() - &a).view()) / frob(a.view());
        assert!(rel < 1e-12, "reconstruction error {rel}");
        assert!(svd.s[1] <= 1e-10 * svd.s[0], "rank-1 spectrum, got {:?}", svd.s);
        // All factor columns stay orthonormal, including the ones paired
        // with zero singular values.
        let utu = svd.u.t().dot(&svd.u);
        let vtv = svd.v.t().dot(&svd.v);
        assert!(max_abs((&utu - &eye(6)).view()) < 1e-10);
        assert!(max_abs((&vtv - &eye(6)).view()) < 1e-10);
    }

    #[test]
    fn svd_completes_zero_columns_orthonormally() {
        // Exact zero columns force the deterministic basis completion.
        let mut a = Array2::<f64>::zeros((5, 3));
        a[[2, 1]] = 4.0;
        let svd = thin_svd(a.view()).unwrap();
        assert!((svd.s[0] - 4.0).abs() < 1e-12);
        assert_eq!(svd.s[1], 0.0);
        assert_eq!(svd.s[2], 0.0);
        let utu = svd.u.t().dot(&svd.u);
        assert!(max_abs((&utu - &eye(3)).view()) < 1e-12);
        assert!(max_abs((&svd.reconstruct() - &a).view()) < 1e-12);
        // Zero matrix: rank 0, factors still orthonormal.
        let z = Array2::<f64>::zeros((4, 2));
        let zsvd = thin_svd(z.view()).unwrap();
        assert_eq!(numerical_rank(zsvd.s.view(), 0.0), 0);
        let utu = zsvd.u.t().dot(&zsvd.u);
        assert!(max_abs((&utu - &eye(2)).view()) < 1e-12);
    }

    #[test]
    fn svd_agrees_with_gram_eigenvalues_on_random_input() {
        // Cross-check singular values against eigenvalues of AᵀA from the
        // independent symmetric eigensolver.
        let mut a = Array2::<f64>::zeros((12, 5));
        let mut state = 11_u64;
        for v in a.iter_mut() {
            // Small deterministic LCG; quality is irrelevant here.
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = ((state >> 33) as f64) / (2.0_f64.powi(31)) - 1.0;
        }
        let svd = thin_svd(a.view()).unwrap();
        let gram = a.t().dot(&a);
        let eig = sym_eig(gram.view()).unwrap();
        for i in 0..5 {
            let expect = eig.values[i].max(0.0).sqrt();
            assert!(
                (svd.s[i] - expect).abs() <= 1e-8 * expect.max(1.0),
                "sigma {i}: {} vs {}",
                svd.s[i],
                expect
            );
        }
    }

    #[test]
    fn sym_eig_known_2x2() {
        // [[4,1],[1,3]] has eigenvalues (7 ± sqrt(5)) / 2.
        let s = array![[4.0, 1.0], [1.0, 3.0]];
        let eig = sym_eig(s.view()).unwrap();
        let hi = (7.0 + 5.0_f64.sqrt()) / 2.0;
        let lo = (7.0 - 5.0_f64.sqrt()) / 2.0;
        assert!((eig.values[0] - hi).abs() < 1e-12);
        assert!((eig.values[1] - lo).abs() < 1e-12);
        let q = &eig.vectors;
        let recon = q.dot(&Array2::from_diag(&eig.values)).dot(&q.t());
        assert!(max_abs((&recon - &s).view()) < 1e-12);
    }

    #[test]
    fn sym_eig_rejects_asymmetric() {
        let s = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(matches!(sym_eig(s.view()), Err(Error::Input(_))));
    }

    #[test]
    fn spectral_norm_matches_largest_singular_value() {
        let a = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let via_svd = thin_svd(a.view()).unwrap().s[0];
        let via_norm = spectral_norm(a.view(), 1e-10).unwrap();
        assert!((via_svd - via_norm).abs() < 1e-10);
        // Rank-1 matrix: spectral norm equals Frobenius norm.
        let r1 = array![[2.0], [1.0]].dot(&array![[1.0, -2.0, 2.0]]);
        let sn = spectral_norm(r1.view(), 1e-10).unwrap();
        assert!((sn - frob(r1.view())).abs() < 1e-10);
    }

    #[test]
    fn numerical_rank_counts_above_threshold() {
        let s = array![3.0, 1.0, 3.0e-11, 0.0];
        assert_eq!(numerical_rank(s.view(), 1e-10), 2);
        assert_eq!(numerical_rank(s.view(), 1e-12), 3);
        let z = array![0.0, 0.0];
        assert_eq!(numerical_rank(z.view(), 1e-10), 0);
    }

    #[test]
    fn solve_spd_roundtrip() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let b = array![[1.0], [2.0]];
        let x = solve_spd(a.view(), b.view()).unwrap();
        let diff = &a.dot(&x) - &b;
        assert!(max_abs(diff.view()) < 1e-12);
    }

    #[test]
    fn solve_spd_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        let b = array![[1.0], [1.0]];
        assert!(solve_spd(a.view(), b.view()).is_err());
    }
}
