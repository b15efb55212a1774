//! Thresholding rules applied to scalars, to vectors by magnitude rank,
//! and to matrices through their singular values, together with the
//! penalty each rule implicitly optimizes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::thin_svd;
use crate::textfmt::fmt_f64;

/// A thresholding rule. Scalar rules (everything except `Quantile`) are
/// odd, shrinking, and nondecreasing functions of the argument; the
/// quantile rule keeps the `r` largest entries by magnitude and zeroes
/// the rest, so it only acts on vectors or spectra.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdRule {
    Soft { lambda: f64 },
    Hard { lambda: f64 },
    Ridge { lambda: f64 },
    HardRidge { lambda: f64, eta: f64 },
    Berhu { lambda: f64, m: f64 },
    Quantile { r: usize, eta: f64 },
}

impl ThresholdRule {
    /// Checks parameter ranges: thresholds and shrinkage nonnegative and
    /// finite, `M` strictly positive, `r` at least 1.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::input(format!(
                "threshold rule parameter {what} = {v} is out of range"
            )))
        };
        match *self {
            ThresholdRule::Soft { lambda }
            | ThresholdRule::Hard { lambda }
            | ThresholdRule::Ridge { lambda } => {
                if !(lambda.is_finite() && lambda >= 0.0) {
                    return bad("lambda", lambda);
                }
            }
            ThresholdRule::HardRidge { lambda, eta } => {
                if !(lambda.is_finite() && lambda >= 0.0) {
                    return bad("lambda", lambda);
                }
                if !(eta.is_finite() && eta >= 0.0) {
                    return bad("eta", eta);
                }
            }
            ThresholdRule::Berhu { lambda, m } => {
                if !(lambda.is_finite() && lambda >= 0.0) {
                    return bad("lambda", lambda);
                }
                if !(m.is_finite() && m > 0.0) {
                    return bad("M", m);
                }
            }
            ThresholdRule::Quantile { r, eta } => {
                if r < 1 {
                    return Err(Error::input("quantile rule needs r >= 1".to_string()));
                }
                if !(eta.is_finite() && eta >= 0.0) {
                    return bad("eta", eta);
                }
            }
        }
        Ok(())
    }

    /// Worst-case concavity of the implied penalty: 0 for the convex
    /// rules (soft, ridge, berhu), 1 for the discontinuous ones (hard,
    /// hard-ridge, quantile).
    pub fn curvature(&self) -> f64 {
        match self {
            ThresholdRule::Soft { .. }
            | ThresholdRule::Ridge { .. }
            | ThresholdRule::Berhu { .. } => 0.0,
            ThresholdRule::Hard { .. }
            | ThresholdRule::HardRidge { .. }
            | ThresholdRule::Quantile { .. } => 1.0,
        }
    }

    /// True for rules whose implied penalty is convex; solution paths may
    /// warm-start these from the previous grid point.
    pub fn is_convex(&self) -> bool {
        self.curvature() == 0.0
    }

    /// True for the rank-constraint rule.
    pub fn is_quantile(&self) -> bool {
        matches!(self, ThresholdRule::Quantile { .. })
    }

    /// Applies the rule to one scalar. The quantile rule has no scalar
    /// form and returns an input error.
    pub fn apply_scalar(&self, t: f64) -> Result<f64> {
        self.validate()?;
        if !t.is_finite() {
            return Err(Error::input(format!("threshold argument {t} is not finite")));
        }
        let a = t.abs();
        Ok(match *self {
            ThresholdRule::Soft { lambda } => {
                if a > lambda {
                    t - t.signum() * lambda
                } else {
                    0.0
                }
            }
            ThresholdRule::Hard { lambda } => {
                if a > lambda {
                    t
                } else {
                    0.0
                }
            }
            ThresholdRule::Ridge { lambda } => t / (1.0 + lambda),
            ThresholdRule::HardRidge { lambda, eta } => {
                if a < lambda {
                    0.0
                } else {
                    t / (1.0 + eta)
                }
            }
            ThresholdRule::Berhu { lambda, m } => {
                if a <= lambda {
                    0.0
                } else if a < lambda + m {
                    t - t.signum() * lambda
                } else {
                    t / (1.0 + lambda / m)
                }
            }
            ThresholdRule::Quantile { .. } => {
                return Err(Error::input(
                    "quantile rule applies to vectors or spectra, not scalars".to_string(),
                ))
            }
        })
    }

    /// Penalty the rule implicitly optimizes, normalized so the penalty
    /// of zero is zero. The quantile rule is a constraint and has no
    /// finite penalty value.
    pub fn penalty_scalar(&self, theta: f64) -> Result<f64> {
        self.validate()?;
        if !theta.is_finite() {
            return Err(Error::input(format!("penalty argument {theta} is not finite")));
        }
        let a = theta.abs();
        Ok(match *self {
            ThresholdRule::Soft { lambda } => lambda * a,
            ThresholdRule::Ridge { lambda } => lambda * theta * theta / 2.0,
            ThresholdRule::Hard { lambda } => {
                if a < lambda {
                    -theta * theta / 2.0 + lambda * a
                } else {
                    lambda * lambda / 2.0
                }
            }
            ThresholdRule::HardRidge { lambda, eta } => {
                let jump = if theta != 0.0 {
                    lambda * lambda / (2.0 * (1.0 + eta))
                } else {
                    0.0
                };
                eta * theta * theta / 2.0 + jump
            }
            ThresholdRule::Berhu { lambda, m } => {
                if a <= m {
                    lambda * a
                } else {
                    lambda * (theta * theta + m * m) / (2.0 * m)
                }
            }
            ThresholdRule::Quantile { .. } => {
                return Err(Error::input(
                    "the quantile rule encodes a rank constraint; it has no penalty value"
                        .to_string(),
                ))
            }
        })
    }

    /// The same rule at a different penalty level; grid sweeps hold
    /// every other parameter fixed. The quantile rule has no penalty
    /// level and is rejected.
    pub fn with_lambda(&self, lambda: f64) -> Result<ThresholdRule> {
        let swapped = match *self {
            ThresholdRule::Soft { .. } => ThresholdRule::Soft { lambda },
            ThresholdRule::Hard { .. } => ThresholdRule::Hard { lambda },
            ThresholdRule::Ridge { .. } => ThresholdRule::Ridge { lambda },
            ThresholdRule::HardRidge { eta, .. } => ThresholdRule::HardRidge { lambda, eta },
            ThresholdRule::Berhu { m, .. } => ThresholdRule::Berhu { lambda, m },
            ThresholdRule::Quantile { .. } => {
                return Err(Error::input(
                    "the quantile rule has no penalty level to sweep".to_string(),
                ))
            }
        };
        swapped.validate()?;
        Ok(swapped)
    }

    /// A canonical spec string (`kind:key=value,...`) that parses back to
    /// this rule exactly.
    pub fn spec_string(&self) -> String {
        match *self {
            ThresholdRule::Soft { lambda } => format!("soft:lambda={}", fmt_f64(lambda)),
            ThresholdRule::Hard { lambda } => format!("hard:lambda={}", fmt_f64(lambda)),
            ThresholdRule::Ridge { lambda } => format!("ridge:lambda={}", fmt_f64(lambda)),
            ThresholdRule::HardRidge { lambda, eta } => {
                format!("hardridge:lambda={},eta={}", fmt_f64(lambda), fmt_f64(eta))
            }
            ThresholdRule::Berhu { lambda, m } => {
                format!("berhu:lambda={},M={}", fmt_f64(lambda), fmt_f64(m))
            }
            ThresholdRule::Quantile { r, eta } => {
                format!("quantile:r={},eta={}", r, fmt_f64(eta))
            }
        }
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.spec_string())
    }
}

impl FromStr for ThresholdRule {
    type Err = Error;

    /// Parses `kind:key=value,key=value`. Kinds: `soft`, `hard`, `ridge`,
    /// `hardridge`, `berhu`, `quantile`. Unknown or duplicate keys are
    /// rejected, as are missing required keys.
    fn from_str(s: &str) -> Result<Self> {
        let err = |msg: String| Error::input(format!("bad rule spec '{s}': {msg}"));
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k.trim(), r.trim()),
            None => (s.trim(), ""),
        };
        let mut pairs: Vec<(String, String)> = Vec::new();
        if !rest.is_empty() {
            for part in rest.split(',') {
                let (k, v) = part
                    .split_once('=')
                    .ok_or_else(|| err(format!("expected key=value, got '{part}'")))?;
                let key = k.trim().to_string();
                if pairs.iter().any(|(existing, _)| existing == &key) {
                    return Err(err(format!("duplicate key '{key}'")));
                }
                pairs.push((key, v.trim().to_string()));
            }
        }
        fn take_f64(
            pairs: &mut Vec<(String, String)>,
            name: &str,
            alias: Option<&str>,
            err: &impl Fn(String) -> Error,
        ) -> Result<f64> {
            let pos = pairs
                .iter()
                .position(|(k, _)| k == name || alias.is_some_and(|a| k == a))
                .ok_or_else(|| err(format!("missing key '{name}'")))?;
            let (_, v) = pairs.remove(pos);
            v.parse::<f64>()
                .map_err(|_| err(format!("value '{v}' for '{name}' is not a number")))
        }
        let rule = match kind {
            "soft" => ThresholdRule::Soft {
                lambda: take_f64(&mut pairs, "lambda", None, &err)?,
            },
            "hard" => ThresholdRule::Hard {
                lambda: take_f64(&mut pairs, "lambda", None, &err)?,
            },
            "ridge" => ThresholdRule::Ridge {
                lambda: take_f64(&mut pairs, "lambda", None, &err)?,
            },
            "hardridge" => ThresholdRule::HardRidge {
                lambda: take_f64(&mut pairs, "lambda", None, &err)?,
                eta: take_f64(&mut pairs, "eta", None, &err)?,
            },
            "berhu" => ThresholdRule::Berhu {
                lambda: take_f64(&mut pairs, "lambda", None, &err)?,
                m: take_f64(&mut pairs, "M", Some("m"), &err)?,
            },
            "quantile" => {
                let pos = pairs
                    .iter()
                    .position(|(k, _)| k == "r")
                    .ok_or_else(|| err("missing key 'r'".to_string()))?;
                let (_, v) = pairs.remove(pos);
                let r = v
                    .parse::<usize>()
                    .map_err(|_| err(format!("value '{v}' for 'r' is not a positive integer")))?;
                ThresholdRule::Quantile {
                    r,
                    eta: take_f64(&mut pairs, "eta", None, &err)?,
                }
            }
            other => return Err(err(format!("unknown rule kind '{other}'"))),
        };
        if let Some((k, _)) = pairs.first() {
            return Err(err(format!("unknown key '{k}' for rule '{kind}'")));
        }
        rule.validate()?;
        Ok(rule)
    }
}

/// Keeps the `r` entries of `a` largest in magnitude (ties keep the
/// smaller index), shrinks them by `1/(1+eta)`, and zeroes the rest.
pub fn apply_quantile(a: ArrayView1<f64>, r: usize, eta: f64) -> Result<Array1<f64>> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("quantile argument contains a non-finite entry".to_string()));
    }
    if r < 1 || r > a.len() {
        return Err(Error::input(format!(
            "quantile rank r = {r} must lie in 1..={}",
            a.len()
        )));
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::input(format!("quantile eta = {eta} is out of range")));
    }
    let mut order: Vec<usize> = (0..a.len()).collect();
    // Stable descending sort by magnitude keeps the smaller index first
    // among exact ties.
    order.sort_by(|&i, &j| a[j].abs().partial_cmp(&a[i].abs()).unwrap());
    let mut out = Array1::zeros(a.len());
    for &idx in order.iter().take(r) {
        out[idx] = a[idx] / (1.0 + eta);
    }
    Ok(out)
}

/// Applies a rule to a spectrum of singular values: scalar rules map
/// entrywise, the quantile rule acts on the whole vector with its rank
/// clamped to the spectrum length.
pub fn apply_spectrum(rule: &ThresholdRule, s: ArrayView1<f64>) -> Result<Array1<f64>> {
    rule.validate()?;
    match *rule {
        ThresholdRule::Quantile { r, eta } => {
            let r_eff = r.min(s.len());
            apply_quantile(s, r_eff, eta)
        }
        _ => {
            let mut out = Array1::zeros(s.len());
            for (o, &sv) in out.iter_mut().zip(s.iter()) {
                *o = rule.apply_scalar(sv)?;
            }
            Ok(out)
        }
    }
}

/// Applies a rule to a matrix through its singular values: thin SVD,
/// [`apply_spectrum`], then reconstruction.
pub fn apply_matrix(rule: &ThresholdRule, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    let svd = thin_svd(b)?;
    let theta = apply_spectrum(rule, svd.s.view())?;
    let us = &svd.u * &theta.view().insert_axis(ndarray::Axis(0));
    Ok(us.dot(&svd.v.t()))
}

/// Sum of the scalar penalty over the singular values of `b`. Input
/// error for the quantile rule, which is a constraint.
///
/// Singular values at or below 1e-12 of the largest are treated as
/// exact zeros: a reconstructed low-rank matrix carries a noise floor
/// of spurious tiny values, and rules whose penalty jumps at zero must
/// not charge for them.
pub fn penalty_matrix(rule: &ThresholdRule, b: ArrayView2<f64>) -> Result<f64> {
    rule.validate()?;
    if rule.is_quantile() {
        return Err(Error::input(
            "the quantile rule encodes a rank constraint; it has no penalty value".to_string(),
        ));
    }
    let svd = thin_svd(b)?;
    let floor = 1e-12 * svd.s.first().copied().unwrap_or(0.0);
    let mut total = 0.0;
    for &s in svd.s.iter() {
        if s > floor {
            total += rule.penalty_scalar(s)?;
        }
    }
    Ok(total)
}
