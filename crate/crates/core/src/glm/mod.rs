//! Count regression with a log link and a log-exposure offset.
//!
//! The mean for row `i` is `μᵢ = exp(offsetᵢ + xᵢᵀβ)`. Two families are
//! supported: Poisson (`Var = μ`) and negative binomial with quadratic
//! variance `Var = μ + κμ²`, where `κ → 0` recovers Poisson.

mod design;
mod inference;
mod irls;
mod loglik;
mod negbin;

pub use design::{build_design, Design, HbeTransform, ModelSpec, Predictor, HBE_LOG_FLOOR};
pub use inference::{significance_code, wald_inference, CoefRow, InferenceTable};
pub use irls::{fit_poisson, fit_with_fixed_kappa};
pub use loglik::{nb_deviance_term, nb_logpmf, nb_loglik};
pub use negbin::{dispersion_check, fit_negbin, profile_kappa, OVERDISPERSION_RATIO};

use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Poisson,
    NegBin,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Poisson => "poisson",
            Family::NegBin => "negbin",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Relative deviance (IRLS) or log-likelihood (outer NB loop) change.
    pub tol: f64,
    pub max_iter: usize,
    pub kappa_min: f64,
    pub kappa_max: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            kappa_min: 1e-8,
            kappa_max: 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub family: Family,
    pub names: Vec<String>,
    /// Intercept first.
    pub beta: Vec<f64>,
    /// Inverse Fisher information at the optimum.
    pub covariance: DMatrix<f64>,
    /// Overdispersion; 0 for Poisson.
    pub kappa: f64,
    pub log_likelihood: f64,
    pub deviance: f64,
    pub pearson_chi2: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n: usize,
    pub p: usize,
    /// Ridge added to the information matrix, if Cholesky needed one.
    pub jitter: Option<f64>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|j| self.beta[j])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.covariance[(j, j)].max(0.0).sqrt())
    }

    pub fn pearson_ratio(&self) -> f64 {
        self.pearson_chi2 / (self.n as f64 - self.p as f64)
    }
}
