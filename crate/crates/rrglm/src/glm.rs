//! Response families, datasets, likelihood evaluation, and the design
//! scaling constants that keep the thresholding iterations contractive.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::threshold::ThresholdRule;

/// Exponential-family response types with canonical links.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Identity link, unit dispersion.
    Gaussian,
    /// Logit link, binary responses.
    BernoulliLogit,
}

impl Family {
    /// Cumulant value at one natural parameter.
    pub fn cumulant(&self, theta: f64) -> f64 {
        match self {
            Family::Gaussian => 0.5 * theta * theta,
            Family::BernoulliLogit => log1p_exp(theta),
        }
    }

    /// Mean response at one natural parameter (inverse link).
    pub fn mean(&self, theta: f64) -> f64 {
        match self {
            Family::Gaussian => theta,
            Family::BernoulliLogit => sigmoid(theta),
        }
    }

    /// Variance function at one natural parameter. Bounded by 1/4 for
    /// the Bernoulli family, constant 1 for the Gaussian.
    pub fn variance(&self, theta: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::BernoulliLogit => {
                let mu = sigmoid(theta);
                mu * (1.0 - mu)
            }
        }
    }

    /// Uniform upper bound on the variance function.
    pub fn variance_bound(&self) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::BernoulliLogit => 0.25,
        }
    }

    /// Checks one response value for membership in the family's support.
    fn check_response(&self, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::input(format!("response value {y} is not finite")));
        }
        if *self == Family::BernoulliLogit && y != 0.0 && y != 1.0 {
            return Err(Error::input(format!(
                "bernoulli responses must be 0 or 1, got {y}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Gaussian => f.write_str("gaussian"),
            Family::BernoulliLogit => f.write_str("bernoulli"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Family::Gaussian),
            "bernoulli" => Ok(Family::BernoulliLogit),
            other => Err(Error::input(format!(
                "unknown family '{other}' (expected gaussian or bernoulli)"
            ))),
        }
    }
}

/// `log(1 + exp(t))` without overflow.
pub fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Logistic function without overflow.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Neumaier compensated summation; keeps likelihood evaluations accurate
/// enough that recorded objective sequences reflect true monotonicity.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// A regression dataset: design matrix (with the intercept column built
/// in when requested), response matrix, and response family.
#[derive(Debug, Clone)]
pub struct DataSet {
    x: Array2<f64>,
    y: Array2<f64>,
    family: Family,
    intercept: bool,
}

impl DataSet {
    /// Builds a dataset from predictors without an intercept column;
    /// prepends a column of ones when `intercept` is set.
    pub fn new(
        predictors: Array2<f64>,
        y: Array2<f64>,
        family: Family,
        intercept: bool,
    ) -> Result<Self> {
        let x = if intercept {
            let n = predictors.nrows();
            let mut full = Array2::ones((n, predictors.ncols() + 1));
            full.slice_mut(ndarray::s![.., 1..]).assign(&predictors);
            full
        } else {
            predictors
        };
        Self::from_design(x, y, family, intercept)
    }

    /// Builds a dataset from a complete design matrix. When `intercept`
    /// is set, column 0 is treated as the unpenalized intercept column.
    pub fn from_design(
        x: Array2<f64>,
        y: Array2<f64>,
        family: Family,
        intercept: bool,
    ) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::input("design matrix has no rows".to_string()));
        }
        if y.nrows() != n {
            return Err(Error::input(format!(
                "design has {n} rows but response has {}",
                y.nrows()
            )));
        }
        if y.ncols() == 0 {
            return Err(Error::input("response matrix has no columns".to_string()));
        }
        let slope_cols = x.ncols() - usize::from(intercept);
        if slope_cols == 0 {
            return Err(Error::input("design matrix has no predictor columns".to_string()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("design matrix contains a non-finite entry".to_string()));
        }
        for &v in y.iter() {
            family.check_response(v)?;
        }
        Ok(DataSet { x, y, family, intercept })
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    /// Observation count.
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Predictor count, excluding the intercept column.
    pub fn p(&self) -> usize {
        self.x.ncols() - usize::from(self.intercept)
    }

    /// Response count.
    pub fn m(&self) -> usize {
        self.y.ncols()
    }

    /// The design without its intercept column.
    pub fn x_slope(&self) -> ArrayView2<'_, f64> {
        if self.intercept {
            self.x.slice(ndarray::s![.., 1..])
        } else {
            self.x.view()
        }
    }

    /// Mean matrix of the intercept-only model: columnwise response
    /// means with an intercept, the zero-coefficient means without one.
    pub fn intercept_only_mean(&self) -> Array2<f64> {
        let (n, m) = (self.n(), self.m());
        if self.intercept {
            let means = self.y.mean_axis(Axis(0)).expect("non-empty response");
            let mut mu = Array2::zeros((n, m));
            for mut row in mu.rows_mut() {
                row.assign(&means);
            }
            mu
        } else {
            Array2::from_elem((n, m), self.family.mean(0.0))
        }
    }
}

fn check_coef_shape(x: ArrayView2<f64>, y: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<()> {
    if b.nrows() != x.ncols() || b.ncols() != y.ncols() {
        return Err(Error::input(format!(
            "coefficient matrix is {}x{}, expected {}x{}",
            b.nrows(),
            b.ncols(),
            x.ncols(),
            y.ncols()
        )));
    }
    Ok(())
}

/// Mean responses `g^{-1}(X B)` entry by entry.
pub fn mean_matrix(family: Family, x: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    x.dot(&b).mapv(|theta| family.mean(theta))
}

/// Negative log-likelihood, in the convention where the saturated model
/// scores zero: squared error over two for the Gaussian family, the
/// full Bernoulli log-loss for the logit family.
pub fn neg_log_likelihood(
    family: Family,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    b: ArrayView2<f64>,
) -> Result<f64> {
    check_coef_shape(x, y, b)?;
    let eta = x.dot(&b);
    Ok(nll_from_eta(family, y, eta.view()))
}

/// Negative log-likelihood from precomputed linear predictors.
pub fn nll_from_eta(family: Family, y: ArrayView2<f64>, eta: ArrayView2<f64>) -> f64 {
    let mut acc = Accumulator::default();
    match family {
        Family::Gaussian => {
            for (&yv, &ev) in y.iter().zip(eta.iter()) {
                let d = yv - ev;
                acc.add(0.5 * d * d);
            }
        }
        Family::BernoulliLogit => {
            for (&yv, &ev) in y.iter().zip(eta.iter()) {
                acc.add(log1p_exp(ev) - yv * ev);
            }
        }
    }
    acc.value()
}

/// Deviance from linear predictors: twice the gap to the saturated
/// model, which is twice [`nll_from_eta`] under these conventions.
pub fn deviance_from_eta(family: Family, y: ArrayView2<f64>, eta: ArrayView2<f64>) -> f64 {
    2.0 * nll_from_eta(family, y, eta)
}

/// Likelihood gradient with respect to the coefficient matrix:
/// `Xᵀ (mu(B) - Y)`.
pub fn nll_gradient(
    family: Family,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    b: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    check_coef_shape(x, y, b)?;
    let mu = mean_matrix(family, x, b);
    Ok(x.t().dot(&(&mu - &y)))
}

/// Upper bound on the curvature of the likelihood surrogate: the squared
/// spectral norm of the design, damped by the family's variance bound.
pub fn rho_upper_bound(family: Family, x: ArrayView2<f64>) -> Result<f64> {
    let norm = spectral_norm(x, 1e-10)?;
    Ok(norm * norm * family.variance_bound())
}

/// Design scaling constant for penalized fits: dividing the design by
/// this keeps the surrogate curvature within `2 - L` for the rule's
/// curvature `L`, floored at one so well-scaled designs pass through.
pub fn scale_factor(family: Family, x: ArrayView2<f64>, rule: &ThresholdRule) -> Result<f64> {
    let rho = rho_upper_bound(family, x)?;
    let denom = 2.0 - rule.curvature();
    Ok((rho / denom).sqrt().max(1.0))
}

/// Design scaling constant for rank-constrained fits, which need the
/// surrogate curvature within one.
pub fn scale_factor_constrained(family: Family, x: ArrayView2<f64>) -> Result<f64> {
    let rho = rho_upper_bound(family, x)?;
    Ok(rho.sqrt().max(1.0))
}

/// Columnwise mean and population standard deviation, for optional
/// predictor standardization. Constant columns are rejected.
pub fn column_standardization(x: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::input("cannot standardize an empty matrix".to_string()));
    }
    let means = x.mean_axis(Axis(0)).expect("non-empty");
    let mut sds = Array1::zeros(x.ncols());
    for (j, col) in x.axis_iter(Axis(1)).enumerate() {
        let mut acc = Accumulator::default();
        for &v in col.iter() {
            let d = v - means[j];
            acc.add(d * d);
        }
        let var = acc.value() / n as f64;
        if var <= 0.0 {
            return Err(Error::input(format!(
                "predictor column {j} is constant and cannot be standardized"
            )));
        }
        sds[j] = var.sqrt();
    }
    Ok((means, sds))
}
