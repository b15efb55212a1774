//! Regularization grids, K-fold projective cross-validation, and BIC
//! correction for rank selection.
//!
//! Projective cross-validation fits the expensive low-rank path once on
//! the whole dataset; the folds only refit cheap ridge GLMs on each
//! candidate's extracted feature space. All candidates share one fold
//! partition, so scores are comparable across the grid.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::glm::{deviance_from_eta, DataSet};
use crate::linalg::spectral_norm;
use crate::solve::{ridge_glm_fit, SolutionPath};
use crate::threshold::ThresholdRule;

/// Geometric penalty grid, descending from the smallest value that keeps
/// the slope block of the scaled problem at zero. `k0` must be the
/// scaling constant of the fits the grid is meant for.
pub fn lambda_grid(data: &DataSet, l: usize, ratio: f64, k0: f64) -> Result<Vec<f64>> {
    if l < 1 {
        return Err(Error::input("grid needs at least one value".to_string()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::input(format!(
            "grid ratio {ratio} must lie strictly between 0 and 1"
        )));
    }
    if !(k0.is_finite() && k0 >= 1.0) {
        return Err(Error::input(format!("scaling constant k0 = {k0} must be >= 1")));
    }
    let resid = &data.y() - &data.intercept_only_mean();
    let grad = data.x_slope().t().dot(&resid);
    let lambda_max = spectral_norm(grad.view(), 1e-12)? / k0;
    if l == 1 {
        return Ok(vec![lambda_max]);
    }
    let mut grid = Vec::with_capacity(l);
    for i in 0..l {
        grid.push(lambda_max * ratio.powf(i as f64 / (l - 1) as f64));
    }
    Ok(grid)
}

/// Corrected selection score: held-out deviance plus `ln(n)` times the
/// parameter count of a rank-`r` coefficient matrix with intercepts,
/// `r (p + m - r) + m`.
pub fn bic_correction(cv_deviance: f64, n: usize, r: usize, p: usize, m: usize) -> f64 {
    let df = (r * (p + m - r) + m) as f64;
    cv_deviance + (n as f64).ln() * df
}

/// One entry of the tuning grid after cross-validation.
#[derive(Debug, Clone)]
pub struct PcvCandidate {
    pub rule: ThresholdRule,
    /// Numerical rank of the whole-data estimate (0 for a failed fit).
    pub rank: usize,
    /// Held-out deviance summed over folds; infinite when flagged.
    pub cv_deviance: f64,
    /// Selection score: the deviance, BIC-corrected on request.
    pub score: f64,
    /// Folds whose ridge refit failed or did not converge.
    pub fold_failures: usize,
}

/// Cross-validated scores for a solution path and the selected entry.
#[derive(Debug, Clone)]
pub struct PcvReport {
    /// One candidate per path entry, in grid order.
    pub candidates: Vec<PcvCandidate>,
    /// Index of the selected candidate.
    pub selected: usize,
    pub folds: usize,
    pub seed: u64,
    pub used_bic: bool,
}

impl PcvReport {
    pub fn selected_candidate(&self) -> &PcvCandidate {
        &self.candidates[self.selected]
    }
}

/// Shuffles row indices with the seeded generator and cuts them into `k`
/// contiguous blocks whose sizes differ by at most one.
fn fold_blocks(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    (0..k)
        .map(|b| idx[(b * n) / k..((b + 1) * n) / k].to_vec())
        .collect()
}

fn take_rows(a: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), a.ncols()));
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).assign(&a.row(src));
    }
    out
}

/// K-fold projective cross-validation of a solution path. Each
/// candidate's features come from its whole-data estimate (scaled design
/// times the estimate's left singular directions, intercept column
/// carried along); the per-fold refits are ridge GLMs with the given
/// `eta`, reducing to maximum likelihood at zero. A candidate whose path
/// fit failed, or with any failed fold, gets an infinite score instead
/// of aborting the report. Selection minimizes the score, breaking ties
/// toward smaller rank, then earlier grid position.
pub fn pcv(
    data: &DataSet,
    path: &SolutionPath,
    k: usize,
    eta: f64,
    use_bic: bool,
    seed: u64,
) -> Result<PcvReport> {
    let n = data.n();
    if path.entries.is_empty() {
        return Err(Error::input("cannot cross-validate an empty path".to_string()));
    }
    if k < 2 || k > n {
        return Err(Error::input(format!(
            "fold count {k} must lie in 2..={n} for {n} samples"
        )));
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::input(format!("ridge shrinkage eta = {eta} is out of range")));
    }

    let folds = fold_blocks(n, k, seed);
    let mut candidates = Vec::with_capacity(path.entries.len());

    for entry in &path.entries {
        let est = match &entry.result {
            Ok(est) => est,
            Err(_) => {
                candidates.push(PcvCandidate {
                    rule: entry.rule.clone(),
                    rank: 0,
                    cv_deviance: f64::INFINITY,
                    score: f64::INFINITY,
                    fold_failures: k,
                });
                continue;
            }
        };
        let r = est.rank;

        // Candidate feature matrix on the scaled problem: intercept
        // column (when present) plus the estimate's left singular
        // directions applied to the scaled slope design. Rank zero keeps
        // only the intercept part.
        let width = usize::from(data.has_intercept()) + r;
        let mut z = Array2::zeros((n, width.max(1)));
        if data.has_intercept() {
            z.column_mut(0).fill(1.0 / est.k0);
        }
        if r > 0 {
            let u_r = est.svd_slope.u.slice(ndarray::s![.., ..r]);
            let feats = data.x_slope().mapv(|v| v / est.k0).dot(&u_r);
            z.slice_mut(ndarray::s![.., usize::from(data.has_intercept())..])
                .assign(&feats);
        }
        if width == 0 {
            // No intercept and rank zero: nothing is fitted, so every
            // fold's held-out deviance comes from the zero predictor and
            // the sum is the whole-data deviance with zero parameters.
            let eta_lin = Array2::zeros((n, data.m()));
            let dev = deviance_from_eta(data.family(), data.y(), eta_lin.view());
            candidates.push(PcvCandidate {
                rule: entry.rule.clone(),
                rank: 0,
                cv_deviance: dev,
                score: dev,
                fold_failures: 0,
            });
            continue;
        }

        let mut cv_deviance = 0.0;
        let mut fold_failures = 0;
        for test_rows in &folds {
            let mut train_rows: Vec<usize> = Vec::with_capacity(n - test_rows.len());
            let in_test: std::collections::HashSet<usize> = test_rows.iter().copied().collect();
            for i in 0..n {
                if !in_test.contains(&i) {
                    train_rows.push(i);
                }
            }
            let z_train = take_rows(&z, &train_rows);
            let y_train = take_rows(&data.y().to_owned(), &train_rows);
            let fit = ridge_glm_fit(
                z_train.view(),
                y_train.view(),
                data.family(),
                eta,
                data.has_intercept(),
            );
            match fit {
                Ok(f) if f.converged => {
                    let z_test = take_rows(&z, test_rows);
                    let y_test = take_rows(&data.y().to_owned(), test_rows);
                    let eta_test = z_test.dot(&f.c);
                    cv_deviance +=
                        deviance_from_eta(data.family(), y_test.view(), eta_test.view());
                }
                _ => fold_failures += 1,
            }
        }

        let (cv_deviance, score) = if fold_failures > 0 {
            (f64::INFINITY, f64::INFINITY)
        } else {
            let score = if use_bic {
                bic_correction(cv_deviance, n, r, data.p(), data.m())
            } else {
                cv_deviance
            };
            (cv_deviance, score)
        };
        candidates.push(PcvCandidate {
            rule: entry.rule.clone(),
            rank: r,
            cv_deviance,
            score,
            fold_failures,
        });
    }

    let mut selected = 0;
    for (i, c) in candidates.iter().enumerate().skip(1) {
        let best = &candidates[selected];
        let better = c.score < best.score
            || (c.score == best.score && c.rank < best.rank);
        if better {
            selected = i;
        }
    }

    Ok(PcvReport {
        candidates,
        selected,
        folds: k,
        seed,
        used_bic: use_bic,
    })
}
