use statrs::function::gamma::{digamma, ln_gamma};

use super::Design;
use crate::error::GlmError;
use crate::par;

/// Counts above this use gamma-function identities instead of explicit sums.
const DIRECT_SUM_LIMIT: f64 = 10_000.0;

/// `ln Γ(y + 1/κ) − ln Γ(1/κ) + y ln κ`, i.e. `Σ_{j<y} ln(1 + κj)`.
fn log_rising(y: f64, kappa: f64) -> f64 {
    if kappa == 0.0 || y == 0.0 {
        return 0.0;
    }
    if y <= DIRECT_SUM_LIMIT {
        let mut acc = par::KahanSum::new();
        for j in 0..y as u64 {
            acc.add((kappa * j as f64).ln_1p());
        }
        acc.value()
    } else {
        let theta = 1.0 / kappa;
        ln_gamma(y + theta) - ln_gamma(theta) + y * kappa.ln()
    }
}

/// Log-probability of count `y` under NB with mean `mu` and `Var = μ + κμ²`.
/// `kappa = 0` gives the Poisson log-probability.
pub fn nb_logpmf(y: f64, mu: f64, kappa: f64) -> f64 {
    let tail = if kappa == 0.0 {
        -mu
    } else {
        -(y + 1.0 / kappa) * (kappa * mu).ln_1p()
    };
    let ylogmu = if y == 0.0 { 0.0 } else { y * mu.ln() };
    log_rising(y, kappa) + ylogmu + tail - ln_factorial(y)
}

fn ln_factorial(y: f64) -> f64 {
    if y < 2.0 {
        0.0
    } else {
        ln_gamma(y + 1.0)
    }
}

/// Log-likelihood at `(beta, kappa)` for the design's counts and offsets.
pub fn nb_loglik(beta: &[f64], kappa: f64, design: &Design) -> Result<f64, GlmError> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(GlmError::NegativeKappa);
    }
    if beta.len() != design.p || beta.iter().any(|b| !b.is_finite()) {
        return Err(GlmError::NonFinite("beta".into()));
    }
    Ok(loglik_unchecked(beta, kappa, design))
}

pub(crate) fn loglik_unchecked(beta: &[f64], kappa: f64, design: &Design) -> f64 {
    par::sum(design.n, |i| nb_logpmf(design.y[i], design.mean(i, beta), kappa))
}

/// Unit deviance contribution of one observation.
pub fn nb_deviance_term(y: f64, mu: f64, kappa: f64) -> f64 {
    let ylog = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
    if kappa == 0.0 {
        2.0 * (ylog - (y - mu))
    } else {
        let d = (kappa * y).ln_1p() - (kappa * mu).ln_1p();
        2.0 * (ylog - (y + 1.0 / kappa) * d)
    }
}

/// `(ln(1+x) − x/(1+x)) / x²`, stable near zero.
fn h(x: f64) -> f64 {
    if x < 1e-3 {
        0.5 - x * (2.0 / 3.0 - x * (0.75 - x * (0.8 - x * 5.0 / 6.0)))
    } else {
        (x.ln_1p() - x / (1.0 + x)) / (x * x)
    }
}

/// `Σ_{j<y} j / (1 + κj)`.
fn rising_score(y: f64, kappa: f64) -> f64 {
    if y <= DIRECT_SUM_LIMIT || kappa == 0.0 {
        let mut acc = 0.0;
        for j in 1..y as u64 {
            let j = j as f64;
            acc += j / (1.0 + kappa * j);
        }
        acc
    } else {
        let theta = 1.0 / kappa;
        y / kappa - (digamma(theta + y) - digamma(theta)) / (kappa * kappa)
    }
}

/// Derivative of one observation's log-probability with respect to κ.
pub(crate) fn kappa_score_term(y: f64, mu: f64, kappa: f64) -> f64 {
    let x = kappa * mu;
    rising_score(y, kappa) + mu * mu * h(x) - y * mu / (1.0 + x)
}
