use super::irls::{check_rank, finalize, irls, start_beta};
use super::loglik::{kappa_score_term, loglik_unchecked};
use super::{fit_poisson, Design, Family, FitOptions, FitResult};
use crate::error::GlmError;
use crate::par;

/// Pearson χ²/(n − p) above which a Poisson fit is called overdispersed.
pub const OVERDISPERSION_RATIO: f64 = 1.5;

fn kappa_score(design: &Design, mu: &[f64], kappa: f64) -> f64 {
    par::sum(design.n, |i| kappa_score_term(design.y[i], mu[i], kappa))
}

/// Maximize the NB log-likelihood over κ ∈ `[kappa_min, kappa_max]` with β
/// fixed. Works on `ln κ`; the root of the score is bracketed and refined by
/// Brent's method (bisection safeguarding secant/inverse quadratic steps).
pub fn profile_kappa(design: &Design, beta: &[f64], opts: &FitOptions) -> f64 {
    let mu = design.means(beta);
    let score = |u: f64| kappa_score(design, &mu, u.exp());
    let (lo, hi) = (opts.kappa_min.ln(), opts.kappa_max.ln());
    let f_lo = score(lo);
    if f_lo <= 0.0 {
        return opts.kappa_min;
    }
    let f_hi = score(hi);
    if f_hi >= 0.0 {
        return opts.kappa_max;
    }
    brent_root(score, lo, hi, f_lo, f_hi, 1e-12).exp()
}

fn brent_root(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, tol: f64) -> f64 {
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut bisected = true;
    for _ in 0..200 {
        if fb == 0.0 || (b - a).abs() < tol {
            break;
        }
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc)) + b * fa * fc / ((fb - fa) * (fb - fc)) + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let outside = !((s > lo.min(b)) && (s < lo.max(b)));
        let slow = if bisected {
            (s - b).abs() >= (b - c).abs() / 2.0 || (b - c).abs() < tol
        } else {
            (s - b).abs() >= (c - d).abs() / 2.0 || (c - d).abs() < tol
        };
        if outside || slow {
            s = 0.5 * (a + b);
            bisected = true;
        } else {
            bisected = false;
        }
        let fs = f(s);
        d = c;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    b
}

/// Method-of-moments κ from a Poisson fit: `Σ((y − μ)² − μ) / Σμ²`.
fn moment_kappa(design: &Design, pois: &FitResult) -> f64 {
    let mu = design.means(&pois.beta);
    let num = par::sum(design.n, |i| (design.y[i] - mu[i]).powi(2) - mu[i]);
    let den = par::sum(design.n, |i| mu[i] * mu[i]);
    (num / den).clamp(1e-4, 1e2)
}

/// Negative binomial maximum likelihood for `(β, κ)`.
///
/// Alternates IRLS for β at fixed κ with a one-dimensional profile step in κ
/// until the joint log-likelihood settles.
pub fn fit_negbin(design: &Design, opts: &FitOptions) -> Result<FitResult, GlmError> {
    check_rank(design)?;
    let pois = fit_poisson(design, opts)?;
    let mut kappa = moment_kappa(design, &pois);
    let mut beta = start_beta(design);
    let mut ll_old = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    for outer in 1..=opts.max_iter {
        let step = irls(design, kappa, &beta, opts)?;
        iterations += step.iterations;
        beta = step.beta;
        let new_kappa = profile_kappa(design, &beta, opts);
        let ll = loglik_unchecked(&beta, new_kappa, design);
        let kappa_moved = (new_kappa.ln() - kappa.ln()).abs() > 1e-6;
        kappa = new_kappa;
        if outer > 1 && (ll - ll_old).abs() / ll.abs().max(1e-300) < opts.tol && !kappa_moved && step.converged {
            converged = true;
            break;
        }
        ll_old = ll;
    }

    // β consistent with the final κ.
    let last = irls(design, kappa, &beta, opts)?;
    iterations += last.iterations;
    converged &= last.converged;

    let mut warnings = design.warnings.clone();
    if kappa <= opts.kappa_min {
        warnings.push("kappa at lower bound: data effectively Poisson".into());
    }
    if kappa >= opts.kappa_max {
        warnings.push("kappa at upper bound: severe overdispersion".into());
    }
    if !converged {
        warnings.push("negative binomial fit did not converge".into());
    }
    finalize(design, Family::NegBin, last.beta, kappa, iterations, converged, warnings)
}

/// Pearson χ²/(n − p) of a Poisson fit and whether it exceeds [`OVERDISPERSION_RATIO`].
pub fn dispersion_check(fit: &FitResult, n: usize, p: usize) -> Result<(f64, bool), GlmError> {
    if n <= p {
        return Err(GlmError::TooFewRows { n, p });
    }
    let ratio = fit.pearson_chi2 / (n - p) as f64;
    Ok((ratio, ratio > OVERDISPERSION_RATIO))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_simple_roots() {
        let r = brent_root(|x| 2.0 - x, 0.0, 10.0, 2.0, -8.0, 1e-14);
        assert!((r - 2.0).abs() < 1e-12);
        let r = brent_root(|x: f64| x.cos() - x, 0.0, 1.0, 1.0, 1f64.cos() - 1.0, 1e-14);
        assert!((r - 0.739_085_133_215_160_6).abs() < 1e-12);
    }

    #[test]
    fn dispersion_requires_residual_degrees_of_freedom() {
        let d = Design::from_rows(
            vec!["c".into()],
            &[vec![1.0], vec![1.0], vec![1.0]],
            vec![1.0, 2.0, 3.0],
            vec![0.0; 3],
        )
        .unwrap();
        let fit = fit_poisson(&d, &FitOptions::default()).unwrap();
        assert!(dispersion_check(&fit, 3, 3).is_err());
        let (ratio, over) = dispersion_check(&fit, 3, 1).unwrap();
        // μ = 2: (1 + 0 + 1) / 2 / 2
        assert!((ratio - 0.5).abs() < 1e-9);
        assert!(!over);
    }
}
