//! Coefficient estimation: singular-value thresholding iterations for
//! penalized and rank-constrained vector GLMs, the Gaussian reduced-rank
//! closed form, and an unstructured ridge GLM solver used for projected
//! refits.
//!
//! All iterations run on an internally rescaled design (divided by a
//! per-problem constant `k0 >= 1`) so the quadratic surrogate majorizes
//! the likelihood and every update decreases the objective. Returned
//! coefficients are on the caller's scale; the recorded objective is the
//! scaled problem's, the one the penalty parameters refer to.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::glm::{
    mean_matrix, nll_from_eta, scale_factor, scale_factor_constrained, Family, DataSet,
};
use crate::linalg::{frob, numerical_rank, solve_spd, sym_eig, thin_svd, ThinSvd};
use crate::threshold::{apply_matrix, apply_spectrum, ThresholdRule};

/// Iteration controls shared by the thresholding solvers.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Update cap; hitting it returns the last iterate unflagged as
    /// converged rather than failing.
    pub max_iter: usize,
    /// Relative coefficient-change tolerance that stops the iteration.
    pub tol: f64,
    /// Starting coefficients on the caller's scale (zero when absent).
    pub init: Option<Array2<f64>>,
    /// Relative cutoff used when counting the estimate's rank.
    pub rel_rank_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 5000,
            tol: 1e-9,
            init: None,
            rel_rank_tol: 1e-10,
        }
    }
}

/// A fitted coefficient matrix with its convergence record. The first
/// row of `b` is the intercept row when the dataset has one; the
/// remaining rows form the penalized slope block.
#[derive(Debug, Clone)]
pub struct CoefficientEstimate {
    /// Coefficients on the caller's scale, `(p + intercept) x m`.
    pub b: Array2<f64>,
    /// Whether row 0 of `b` is an intercept row.
    pub intercept: bool,
    /// Design scaling constant the fit ran under.
    pub k0: f64,
    /// Thin SVD of the slope block of `b`.
    pub svd_slope: ThinSvd,
    /// Numerical rank of the slope block.
    pub rank: usize,
    /// Final objective of the scaled problem.
    pub objective: f64,
    /// Objective after the start and after every update, in order.
    pub objective_trace: Vec<f64>,
    /// Exact rank of each update's thresholded spectrum.
    pub iterate_ranks: Vec<usize>,
    /// Updates performed.
    pub iterations: usize,
    /// Whether the relative-change tolerance was met.
    pub converged: bool,
    /// Fixed-point residual of the final iterate on the scaled problem.
    pub fixed_point_residual: f64,
}

impl CoefficientEstimate {
    /// Intercept row, when the model has one.
    pub fn intercept_row(&self) -> Option<ArrayView1<'_, f64>> {
        self.intercept.then(|| self.b.row(0))
    }

    /// Slope block (everything below the intercept row).
    pub fn slope_block(&self) -> ArrayView2<'_, f64> {
        if self.intercept {
            self.b.slice(ndarray::s![1.., ..])
        } else {
            self.b.view()
        }
    }

    /// Coefficients of the scaled problem the solver actually ran on.
    pub fn scaled_b(&self) -> Array2<f64> {
        self.b.mapv(|v| v * self.k0)
    }

    /// Linear predictors for a design shaped like the training one.
    pub fn linear_predictor(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.b.nrows() {
            return Err(Error::input(format!(
                "design has {} columns, coefficients expect {}",
                x.ncols(),
                self.b.nrows()
            )));
        }
        Ok(x.dot(&self.b))
    }
}

/// Rule parameters colliding with the spectrum of a hard-family
/// threshold argument are nudged up by one part in 1e12 so boundary
/// values resolve to the zero side instead of oscillating.
fn guard_rule(rule: &ThresholdRule, s: ArrayView1<f64>) -> ThresholdRule {
    let bump = |lambda: f64| {
        if lambda > 0.0 && s.iter().any(|&sv| (sv - lambda).abs() <= 1e-12 * lambda) {
            lambda * (1.0 + 1e-12)
        } else {
            lambda
        }
    };
    match *rule {
        ThresholdRule::Hard { lambda } => ThresholdRule::Hard { lambda: bump(lambda) },
        ThresholdRule::HardRidge { lambda, eta } => ThresholdRule::HardRidge {
            lambda: bump(lambda),
            eta,
        },
        ref other => other.clone(),
    }
}

/// Objective penalty for a thresholded spectrum: the rule's implied
/// penalty summed over singular values, or the ridge term under a rank
/// constraint.
fn spectrum_penalty(rule: &ThresholdRule, theta: ArrayView1<f64>) -> Result<f64> {
    match *rule {
        ThresholdRule::Quantile { eta, .. } => {
            Ok(0.5 * eta * theta.iter().map(|t| t * t).sum::<f64>())
        }
        ref scalar_rule => {
            let mut total = 0.0;
            for &t in theta.iter() {
                total += scalar_rule.penalty_scalar(t)?;
            }
            Ok(total)
        }
    }
}

struct TispOutcome {
    b_scaled: Array2<f64>,
    objective_trace: Vec<f64>,
    iterate_ranks: Vec<usize>,
    iterations: usize,
    converged: bool,
}

/// The thresholding iteration on a pre-scaled design. Row 0 of the
/// coefficient matrix follows the unpenalized intercept update when
/// `intercept` is set; the remaining rows pass through the rule applied
/// to their singular values.
fn tisp_core(
    x_scaled: &Array2<f64>,
    y: ArrayView2<f64>,
    family: Family,
    rule: &ThresholdRule,
    intercept: bool,
    init_scaled: Array2<f64>,
    opts: &FitOptions,
) -> Result<TispOutcome> {
    let d = x_scaled.ncols();
    let m = y.ncols();
    if init_scaled.dim() != (d, m) {
        return Err(Error::input(format!(
            "initial coefficients are {}x{}, expected {d}x{m}",
            init_scaled.nrows(),
            init_scaled.ncols()
        )));
    }
    let slope_rows = ndarray::s![usize::from(intercept).., ..];

    let mut b = init_scaled;
    let mut eta = x_scaled.dot(&b);
    let init_s = thin_svd(b.slice(slope_rows))?.s;
    let mut objective_trace = vec![nll_from_eta(family, y, eta.view())
        + spectrum_penalty(rule, init_s.view())?];
    let mut iterate_ranks = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=opts.max_iter {
        let mu = eta.mapv(|t| family.mean(t));
        let resid = &y - &mu;
        let grad = x_scaled.t().dot(&resid);

        let arg = &b.slice(slope_rows) + &grad.slice(slope_rows);
        let svd = thin_svd(arg.view())?;
        let stepped = guard_rule(rule, svd.s.view());
        let theta = apply_spectrum(&stepped, svd.s.view())?;
        let rank = theta.iter().filter(|&&t| t != 0.0).count();
        let us = &svd.u * &theta.view().insert_axis(Axis(0));
        let new_slope = us.dot(&svd.v.t());

        let mut b_new = Array2::zeros((d, m));
        if intercept {
            let new_row0 = &b.row(0) + &grad.row(0);
            b_new.row_mut(0).assign(&new_row0);
        }
        b_new.slice_mut(slope_rows).assign(&new_slope);

        let eta_new = x_scaled.dot(&b_new);
        let objective = nll_from_eta(family, y, eta_new.view())
            + spectrum_penalty(rule, theta.view())?;
        if !objective.is_finite() {
            return Err(Error::numerical(format!(
                "objective became non-finite at iteration {iter}"
            )));
        }
        let prev = *objective_trace.last().expect("trace is never empty");
        if objective > prev + 1e-12 {
            return Err(Error::numerical(format!(
                "objective increased at iteration {iter}: {prev:.17e} -> {objective:.17e}"
            )));
        }
        objective_trace.push(objective);
        iterate_ranks.push(rank);

        let delta = frob((&b_new - &b).view());
        let denom = frob(b.view()).max(1.0);
        b = b_new;
        eta = eta_new;
        iterations = iter;
        if delta <= opts.tol * denom {
            converged = true;
            break;
        }
    }

    Ok(TispOutcome {
        b_scaled: b,
        objective_trace,
        iterate_ranks,
        iterations,
        converged,
    })
}

fn finalize(
    data: &DataSet,
    rule: &ThresholdRule,
    k0: f64,
    out: TispOutcome,
    opts: &FitOptions,
) -> Result<CoefficientEstimate> {
    let b = out.b_scaled.mapv(|v| v / k0);
    let slope = if data.has_intercept() {
        b.slice(ndarray::s![1.., ..])
    } else {
        b.view()
    };
    let svd_slope = thin_svd(slope)?;
    let rank = numerical_rank(svd_slope.s.view(), opts.rel_rank_tol);
    let fixed_point = fixed_point_residual(data, b.view(), rule, k0)?;
    let objective = *out.objective_trace.last().expect("trace is never empty");
    Ok(CoefficientEstimate {
        b,
        intercept: data.has_intercept(),
        k0,
        svd_slope,
        rank,
        objective,
        objective_trace: out.objective_trace,
        iterate_ranks: out.iterate_ranks,
        iterations: out.iterations,
        converged: out.converged,
        fixed_point_residual: fixed_point,
    })
}

fn init_scaled_from(opts: &FitOptions, d: usize, m: usize, k0: f64) -> Result<Array2<f64>> {
    match &opts.init {
        Some(b0) => {
            if b0.dim() != (d, m) {
                return Err(Error::input(format!(
                    "initial coefficients are {}x{}, expected {d}x{m}",
                    b0.nrows(),
                    b0.ncols()
                )));
            }
            Ok(b0.mapv(|v| v * k0))
        }
        None => Ok(Array2::zeros((d, m))),
    }
}

/// Fits a singular-value-penalized GLM by thresholding iterations.
pub fn penalized_fit(
    data: &DataSet,
    rule: &ThresholdRule,
    opts: &FitOptions,
) -> Result<CoefficientEstimate> {
    rule.validate()?;
    if rule.is_quantile() {
        return Err(Error::input(
            "the quantile rule encodes a rank constraint; use constrained_fit".to_string(),
        ));
    }
    let k0 = scale_factor(data.family(), data.x(), rule)?;
    let x_scaled = data.x().mapv(|v| v / k0);
    let init = init_scaled_from(opts, x_scaled.ncols(), data.m(), k0)?;
    let out = tisp_core(
        &x_scaled,
        data.y(),
        data.family(),
        rule,
        data.has_intercept(),
        init,
        opts,
    )?;
    finalize(data, rule, k0, out, opts)
}

/// Fits a rank-constrained GLM (rank at most `r`, optional ridge
/// shrinkage `eta`) by quantile thresholding iterations.
pub fn constrained_fit(
    data: &DataSet,
    r: usize,
    eta: f64,
    opts: &FitOptions,
) -> Result<CoefficientEstimate> {
    let cap = data.p().min(data.m());
    if r < 1 || r > cap {
        return Err(Error::input(format!(
            "rank bound r = {r} must lie in 1..={cap} for a {}x{} slope block",
            data.p(),
            data.m()
        )));
    }
    let rule = ThresholdRule::Quantile { r, eta };
    rule.validate()?;
    let k0 = scale_factor_constrained(data.family(), data.x())?;
    let x_scaled = data.x().mapv(|v| v / k0);
    let mut init = init_scaled_from(opts, x_scaled.ncols(), data.m(), k0)?;
    // Descent is only guaranteed from a feasible point, so a start
    // exceeding the rank bound is projected onto the constraint set
    // (its spectrum truncated to the r largest values).
    if opts.init.is_some() {
        let slope_rows = ndarray::s![usize::from(data.has_intercept()).., ..];
        let svd = thin_svd(init.slice(slope_rows))?;
        if numerical_rank(svd.s.view(), 0.0) > r {
            let mut s_cut = svd.s.clone();
            for i in r..s_cut.len() {
                s_cut[i] = 0.0;
            }
            let us = &svd.u * &s_cut.view().insert_axis(Axis(0));
            let truncated = us.dot(&svd.v.t());
            init.slice_mut(slope_rows).assign(&truncated);
        }
    }
    let out = tisp_core(
        &x_scaled,
        data.y(),
        data.family(),
        &rule,
        data.has_intercept(),
        init,
        opts,
    )?;
    finalize(data, &rule, k0, out, opts)
}

/// Dispatches on the rule kind: quantile rules run the constrained
/// solver, everything else the penalized one.
pub fn fit_rule(
    data: &DataSet,
    rule: &ThresholdRule,
    opts: &FitOptions,
) -> Result<CoefficientEstimate> {
    match *rule {
        ThresholdRule::Quantile { r, eta } => constrained_fit(data, r, eta, opts),
        _ => penalized_fit(data, rule, opts),
    }
}

/// Distance of coefficients (caller scale) from being a fixed point of
/// the scaled thresholding update: slope-block displacement in
/// Frobenius norm plus the intercept gradient's Euclidean norm.
pub fn fixed_point_residual(
    data: &DataSet,
    b: ArrayView2<f64>,
    rule: &ThresholdRule,
    k0: f64,
) -> Result<f64> {
    rule.validate()?;
    if !(k0.is_finite() && k0 >= 1.0) {
        return Err(Error::input(format!("scaling constant k0 = {k0} must be >= 1")));
    }
    let d = data.x().ncols();
    if b.dim() != (d, data.m()) {
        return Err(Error::input(format!(
            "coefficients are {}x{}, expected {d}x{}",
            b.nrows(),
            b.ncols(),
            data.m()
        )));
    }
    let x_scaled = data.x().mapv(|v| v / k0);
    let b_scaled = b.mapv(|v| v * k0);
    let eta = x_scaled.dot(&b_scaled);
    let mu = eta.mapv(|t| data.family().mean(t));
    let resid = &data.y() - &mu;
    let grad = x_scaled.t().dot(&resid);
    let slope_rows = ndarray::s![usize::from(data.has_intercept()).., ..];

    let arg = &b_scaled.slice(slope_rows) + &grad.slice(slope_rows);
    let stepped = apply_matrix(rule, arg.view())?;
    let mut residual = frob((&stepped - &b_scaled.slice(slope_rows)).view());
    if data.has_intercept() {
        residual += grad.row(0).dot(&grad.row(0)).sqrt();
    }
    Ok(residual)
}

/// Selector for the Gaussian reduced-rank closed form: rank picked by a
/// singular-value cutoff or given outright.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RrrSelector {
    /// Keep components whose projected singular value is at least this.
    Cutoff(f64),
    /// Keep exactly this many components (0 gives the zero matrix).
    Rank(usize),
}

/// The Gaussian reduced-rank closed form.
#[derive(Debug, Clone)]
pub struct RrrFit {
    /// Coefficients, `p x m`.
    pub b: Array2<f64>,
    /// Singular values of the fitted-value matrix (descending).
    pub d: Array1<f64>,
    /// Rank kept.
    pub rank: usize,
}

/// Closed-form reduced-rank Gaussian regression: least squares followed
/// by projection onto the leading response-side eigenvectors of the
/// fitted second-moment matrix. Requires a full-column-rank design.
pub fn rrr_closed_form(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    selector: RrrSelector,
) -> Result<RrrFit> {
    if x.nrows() != y.nrows() {
        return Err(Error::input(format!(
            "design has {} rows but response has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let m = y.ncols();
    if let RrrSelector::Rank(r) = selector {
        if r > m {
            return Err(Error::input(format!(
                "requested rank {r} exceeds the response count {m}"
            )));
        }
    }
    let xtx = x.t().dot(&x);
    let xty = x.t().dot(&y);
    let b_ols = solve_spd(xtx.view(), xty.view()).map_err(|_| {
        Error::input("design matrix is rank-deficient; the closed form needs full column rank"
            .to_string())
    })?;
    // Y' H Y with H the hat matrix, computed as (X'Y)' B_ols and
    // symmetrized against roundoff.
    let g = xty.t().dot(&b_ols);
    let g = (&g + &g.t()) * 0.5;
    let eig = sym_eig(g.view())?;
    let d = eig.values.mapv(|v| v.max(0.0).sqrt());
    let rank = match selector {
        RrrSelector::Cutoff(lambda) => {
            if !(lambda.is_finite() && lambda >= 0.0) {
                return Err(Error::input(format!("cutoff {lambda} must be nonnegative")));
            }
            d.iter().filter(|&&dv| dv >= lambda).count()
        }
        RrrSelector::Rank(r) => r,
    };
    let b = if rank == 0 {
        Array2::zeros(b_ols.dim())
    } else {
        let vr = eig.vectors.slice(ndarray::s![.., ..rank]);
        b_ols.dot(&vr).dot(&vr.t())
    };
    Ok(RrrFit { b, d, rank })
}

/// An unstructured (full-rank) ridge GLM fit on extracted features.
#[derive(Debug, Clone)]
pub struct RidgeGlmFit {
    /// Coefficients, one column per response.
    pub c: Array2<f64>,
    /// Whether every column met the gradient tolerance.
    pub converged: bool,
    /// Largest absolute entry of the penalized-likelihood gradient.
    pub kkt_residual: f64,
    /// Newton iterations over all columns (1 for the Gaussian solve).
    pub iterations: usize,
}

const RIDGE_GRAD_TOL: f64 = 1e-8;
const RIDGE_MAX_ITER: usize = 100;

/// Fits each response by ridge-penalized maximum likelihood on the
/// feature matrix `z`. When `intercept` is set, column 0 of `z` is the
/// intercept column and its coefficient is unpenalized. `eta = 0` gives
/// plain maximum likelihood and requires full-column-rank features.
pub fn ridge_glm_fit(
    z: ArrayView2<f64>,
    y: ArrayView2<f64>,
    family: Family,
    eta: f64,
    intercept: bool,
) -> Result<RidgeGlmFit> {
    if z.nrows() != y.nrows() {
        return Err(Error::input(format!(
            "features have {} rows but response has {}",
            z.nrows(),
            y.nrows()
        )));
    }
    if z.ncols() == 0 || y.ncols() == 0 {
        return Err(Error::input("features and responses must be non-empty".to_string()));
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::input(format!("ridge shrinkage eta = {eta} is out of range")));
    }
    let d = z.ncols();
    // Penalty selector: zero on the intercept coordinate, identity
    // elsewhere.
    let mut j_diag = Array1::ones(d);
    if intercept {
        j_diag[0] = 0.0;
    }

    match family {
        Family::Gaussian => {
            let mut a = z.t().dot(&z);
            for i in 0..d {
                a[[i, i]] += eta * j_diag[i];
            }
            let rhs = z.t().dot(&y);
            let mut c = solve_spd(a.view(), rhs.view()).map_err(|_| {
                Error::input(
                    "features are rank-deficient; increase eta or drop collinear columns"
                        .to_string(),
                )
            })?;
            // One round of iterative refinement tightens the gradient.
            let resid = &rhs - &a.dot(&c);
            if let Ok(corr) = solve_spd(a.view(), resid.view()) {
                c = &c + &corr;
            }
            let grad = gradient_ridge(z, y, family, eta, &j_diag, c.view());
            Ok(RidgeGlmFit {
                c,
                converged: true,
                kkt_residual: crate::linalg::max_abs(grad.view()),
                iterations: 1,
            })
        }
        Family::BernoulliLogit => {
            let m = y.ncols();
            let mut c = Array2::zeros((d, m));
            let mut converged = true;
            let mut iterations = 0;
            for k in 0..m {
                let yk = y.column(k);
                let (ck, ok, iters) = newton_logistic(z, yk, eta, &j_diag)?;
                converged &= ok;
                iterations += iters;
                c.column_mut(k).assign(&ck);
            }
            let grad = gradient_ridge(z, y, family, eta, &j_diag, c.view());
            Ok(RidgeGlmFit {
                c,
                converged,
                kkt_residual: crate::linalg::max_abs(grad.view()),
                iterations,
            })
        }
    }
}

fn gradient_ridge(
    z: ArrayView2<f64>,
    y: ArrayView2<f64>,
    family: Family,
    eta: f64,
    j_diag: &Array1<f64>,
    c: ArrayView2<f64>,
) -> Array2<f64> {
    let mu = mean_matrix(family, z, c);
    let mut grad = z.t().dot(&(&mu - &y));
    for (i, &ji) in j_diag.iter().enumerate() {
        if ji != 0.0 {
            let scaled = &grad.row(i) + &(&c.row(i) * (eta * ji));
            grad.row_mut(i).assign(&scaled);
        }
    }
    grad
}

/// Damped Newton for one ridge-penalized logistic regression. Stops on
/// a small gradient; an indefinite or stalled step marks the column
/// unconverged instead of failing.
fn newton_logistic(
    z: ArrayView2<f64>,
    y: ArrayView1<f64>,
    eta: f64,
    j_diag: &Array1<f64>,
) -> Result<(Array1<f64>, bool, usize)> {
    let d = z.ncols();
    let mut c = Array1::zeros(d);
    let objective = |c: &Array1<f64>| -> f64 {
        let lin = z.dot(c);
        let mut nll = 0.0;
        for (&yv, &ev) in y.iter().zip(lin.iter()) {
            nll += crate::glm::log1p_exp(ev) - yv * ev;
        }
        let pen: f64 = c
            .iter()
            .zip(j_diag.iter())
            .map(|(&ci, &ji)| 0.5 * eta * ji * ci * ci)
            .sum();
        nll + pen
    };

    for iter in 1..=RIDGE_MAX_ITER {
        let lin = z.dot(&c);
        let mu = lin.mapv(crate::glm::sigmoid);
        let mut grad = z.t().dot(&(&mu - &y));
        for i in 0..d {
            grad[i] += eta * j_diag[i] * c[i];
        }
        if grad.iter().all(|g| g.abs() <= RIDGE_GRAD_TOL) {
            // Unpenalized fits whose margins have run off to saturation
            // sit on a separated dataset: the gradient vanishes but the
            // maximum likelihood estimate is not finite.
            let separated =
                eta == 0.0 && lin.iter().fold(0.0_f64, |m, v| m.max(v.abs())) >= 30.0;
            return Ok((c, !separated, iter - 1));
        }
        let w = mu.mapv(|m| m * (1.0 - m));
        // H = Zᵀ W Z + eta J
        let zw = &z.t().to_owned() * &w.view().insert_axis(Axis(0));
        let mut h = zw.dot(&z);
        for i in 0..d {
            h[[i, i]] += eta * j_diag[i];
        }
        let rhs = grad.view().insert_axis(Axis(1)).to_owned();
        let step = match solve_spd(h.view(), rhs.view()) {
            Ok(s) => s.index_axis(Axis(1), 0).to_owned(),
            Err(_) => return Ok((c, false, iter)),
        };
        let f0 = objective(&c);
        let mut t = 1.0;
        let mut accepted = false;
        while t >= 1e-12 {
            let trial = &c - &(&step * t);
            if objective(&trial) <= f0 + 1e-12 {
                c = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Ok((c, false, iter));
        }
    }
    Ok((c, false, RIDGE_MAX_ITER))
}

/// One point of a solution path: the rule it was fitted under and the
/// outcome. Failed entries carry the error text instead of aborting the
/// rest of the path.
#[derive(Debug, Clone)]
pub struct PathEntry {
    pub rule: ThresholdRule,
    pub result: std::result::Result<CoefficientEstimate, String>,
}

/// An ordered sweep of fits over a rule grid.
#[derive(Debug, Clone)]
pub struct SolutionPath {
    pub entries: Vec<PathEntry>,
}

impl SolutionPath {
    /// Indices and estimates of the successful entries, in grid order.
    pub fn successes(&self) -> impl Iterator<Item = (usize, &CoefficientEstimate)> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.result.as_ref().ok().map(|est| (i, est)))
    }
}

/// Fits a grid of rules in order. Convex rules warm-start each fit from
/// the previous success; non-convex rules always start from zero (or
/// the caller's `init`) and may fan out over `jobs` worker threads.
pub fn fit_path(
    data: &DataSet,
    rules: &[ThresholdRule],
    opts: &FitOptions,
    jobs: usize,
) -> Result<SolutionPath> {
    for rule in rules {
        rule.validate()?;
    }
    let warm = rules.iter().all(|r| r.is_convex());
    let mut entries = Vec::with_capacity(rules.len());
    if warm {
        let mut carry = opts.init.clone();
        for rule in rules {
            let mut local = opts.clone();
            local.init = carry.clone();
            let result = fit_rule(data, rule, &local).map_err(|e| e.to_string());
            if let Ok(est) = &result {
                carry = Some(est.b.clone());
            }
            entries.push(PathEntry {
                rule: rule.clone(),
                result,
            });
        }
    } else if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::numerical(format!("could not start worker pool: {e}")))?;
        let results: Vec<PathEntry> = pool.install(|| {
            use rayon::prelude::*;
            rules
                .par_iter()
                .map(|rule| PathEntry {
                    rule: rule.clone(),
                    result: fit_rule(data, rule, opts).map_err(|e| e.to_string()),
                })
                .collect()
        });
        entries = results;
    } else {
        for rule in rules {
            entries.push(PathEntry {
                rule: rule.clone(),
                result: fit_rule(data, rule, opts).map_err(|e| e.to_string()),
            });
        }
    }
    Ok(SolutionPath { entries })
}
