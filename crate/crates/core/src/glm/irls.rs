use nalgebra::{DMatrix, DVector};

use super::loglik::{loglik_unchecked, nb_deviance_term};
use super::{Design, Family, FitOptions, FitResult};
use crate::error::GlmError;
use crate::par;

/// Relative pivot tolerance of the rank check.
const RANK_TOL: f64 = 1e-10;
/// Initial ridge, relative to the mean diagonal, when Cholesky fails.
const RIDGE: f64 = 1e-10;

pub(crate) struct Irls {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Column-pivoted QR of X; the first pivot whose magnitude drops below
/// `RANK_TOL` × the leading pivot names the collinear column.
pub(crate) fn check_rank(design: &Design) -> Result<(), GlmError> {
    let (n, p) = (design.n, design.p);
    if n <= p {
        return Err(GlmError::TooFewRows { n, p });
    }
    let x = DMatrix::from_fn(n, p, |i, j| design.row(i)[j]);
    let qr = x.col_piv_qr();
    let r = qr.r();
    let mut order = DMatrix::from_fn(1, p, |_, j| j as f64);
    qr.p().permute_columns(&mut order);
    let lead = r[(0, 0)].abs();
    for k in 0..p {
        if !(r[(k, k)].abs() > RANK_TOL * lead) {
            let col = order[(0, k)] as usize;
            return Err(GlmError::RankDeficient {
                column: design.names[col].clone(),
            });
        }
    }
    Ok(())
}

/// Working weight `μ / (1 + κμ)`.
#[inline]
fn weight(mu: f64, kappa: f64) -> f64 {
    mu / (1.0 + kappa * mu)
}

/// Packed upper triangle of XᵀWX followed by XᵀWz.
fn normal_equations(design: &Design, beta: &[f64], kappa: f64) -> (DMatrix<f64>, DVector<f64>) {
    let p = design.p;
    let tri = p * (p + 1) / 2;
    let sums = par::sum_vec(design.n, tri + p, |i, out| {
        let x = design.row(i);
        let eta = design.linear_predictor(i, beta);
        let mu = eta.min(700.0).exp();
        let w = weight(mu, kappa);
        let z = eta - design.offset[i] + (design.y[i] - mu) / mu;
        let mut k = 0;
        for a in 0..p {
            let wa = w * x[a];
            for b in a..p {
                out[k] = wa * x[b];
                k += 1;
            }
            out[tri + a] = wa * z;
        }
    });
    let mut info = DMatrix::zeros(p, p);
    let mut k = 0;
    for a in 0..p {
        for b in a..p {
            info[(a, b)] = sums[k];
            info[(b, a)] = sums[k];
            k += 1;
        }
    }
    (info, DVector::from_column_slice(&sums[tri..]))
}

/// Cholesky factorization, adding a growing ridge if needed.
fn factor(info: &DMatrix<f64>) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, Option<f64>), GlmError> {
    if let Some(c) = info.clone().cholesky() {
        return Ok((c, None));
    }
    let p = info.nrows();
    let scale = (info.trace() / p as f64).abs().max(f64::MIN_POSITIVE);
    let mut ridge = RIDGE * scale;
    for _ in 0..8 {
        let mut m = info.clone();
        for j in 0..p {
            m[(j, j)] += ridge;
        }
        if let Some(c) = m.cholesky() {
            return Ok((c, Some(ridge)));
        }
        ridge *= 100.0;
    }
    Err(GlmError::RankDeficient {
        column: "(information matrix)".into(),
    })
}

pub(crate) fn deviance(design: &Design, beta: &[f64], kappa: f64) -> f64 {
    par::sum(design.n, |i| nb_deviance_term(design.y[i], design.mean(i, beta), kappa))
}

fn pearson(design: &Design, beta: &[f64], kappa: f64) -> f64 {
    par::sum(design.n, |i| {
        let mu = design.mean(i, beta);
        let r = design.y[i] - mu;
        r * r / (mu + kappa * mu * mu)
    })
}

/// `β = 0` except the intercept, set to `ln((Σy + 0.5) / Σ exposure)`.
pub(crate) fn start_beta(design: &Design) -> Vec<f64> {
    let total_y: f64 = par::sum(design.n, |i| design.y[i]);
    let total_exposure: f64 = par::sum(design.n, |i| design.offset[i].exp());
    let mut beta = vec![0.0; design.p];
    beta[0] = ((total_y + 0.5) / total_exposure).ln();
    beta
}

/// Fisher scoring for β at fixed κ (κ = 0 is Poisson).
pub(crate) fn irls(design: &Design, kappa: f64, start: &[f64], opts: &FitOptions) -> Result<Irls, GlmError> {
    let mut beta = start.to_vec();
    let mut dev = deviance(design, &beta, kappa);
    for iter in 1..=opts.max_iter {
        let (info, rhs) = normal_equations(design, &beta, kappa);
        let (chol, _) = factor(&info)?;
        let proposal: Vec<f64> = chol.solve(&rhs).iter().copied().collect();
        if proposal.iter().any(|b| !b.is_finite()) {
            return Err(GlmError::NonFinite("IRLS step".into()));
        }

        let mut step = 1.0;
        let mut next = proposal.clone();
        let mut next_dev = deviance(design, &next, kappa);
        let mut halvings = 0;
        while !(next_dev.is_finite() && next_dev <= dev * (1.0 + 1e-12) + 1e-12) && halvings < 30 {
            step *= 0.5;
            next = beta.iter().zip(&proposal).map(|(b, p)| b + step * (p - b)).collect();
            next_dev = deviance(design, &next, kappa);
            halvings += 1;
        }

        let rel = (next_dev - dev).abs() / (next_dev.abs() + 0.1);
        let moved = beta
            .iter()
            .zip(&next)
            .any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + b.abs()));
        beta = next;
        dev = next_dev;
        if rel < opts.tol && (!moved || halvings >= 30) {
            return Ok(Irls {
                beta,
                iterations: iter,
                converged: true,
            });
        }
    }
    Ok(Irls {
        beta,
        iterations: opts.max_iter,
        converged: false,
    })
}

/// Assemble a [`FitResult`] at `(beta, kappa)`.
pub(crate) fn finalize(
    design: &Design,
    family: Family,
    beta: Vec<f64>,
    kappa: f64,
    iterations: usize,
    converged: bool,
    mut warnings: Vec<String>,
) -> Result<FitResult, GlmError> {
    let (info, _) = normal_equations(design, &beta, kappa);
    let (chol, jitter) = factor(&info)?;
    if let Some(r) = jitter {
        warnings.push(format!("information matrix needed ridge {r:e}"));
    }
    let inv = chol.inverse();
    let covariance = (&inv + inv.transpose()) * 0.5;
    Ok(FitResult {
        family,
        names: design.names.clone(),
        log_likelihood: loglik_unchecked(&beta, kappa, design),
        deviance: deviance(design, &beta, kappa),
        pearson_chi2: pearson(design, &beta, kappa),
        beta,
        covariance,
        kappa,
        iterations,
        converged,
        n: design.n,
        p: design.p,
        jitter,
        warnings,
    })
}

/// Poisson maximum likelihood by IRLS.
pub fn fit_poisson(design: &Design, opts: &FitOptions) -> Result<FitResult, GlmError> {
    check_rank(design)?;
    let start = start_beta(design);
    let out = irls(design, 0.0, &start, opts)?;
    let mut warnings = design.warnings.clone();
    if !out.converged {
        warnings.push(format!("IRLS did not converge in {} iterations", opts.max_iter));
    }
    finalize(design, Family::Poisson, out.beta, 0.0, out.iterations, out.converged, warnings)
}

/// Negative binomial fit for β with κ held fixed.
pub fn fit_with_fixed_kappa(design: &Design, kappa: f64, opts: &FitOptions) -> Result<FitResult, GlmError> {
    if !(kappa >= 0.0) {
        return Err(GlmError::NegativeKappa);
    }
    check_rank(design)?;
    let start = start_beta(design);
    let out = irls(design, kappa, &start, opts)?;
    finalize(
        design,
        Family::NegBin,
        out.beta,
        kappa,
        out.iterations,
        out.converged,
        design.warnings.clone(),
    )
}
