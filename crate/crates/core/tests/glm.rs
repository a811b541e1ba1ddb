mod common;

use common::{grid_argmax, micro_datasets, ref_loglik, simulated_rows, small_config};
use hbe_core::glm::{
    build_design, dispersion_check, fit_negbin, fit_poisson, fit_with_fixed_kappa, nb_logpmf, nb_loglik,
    wald_inference, Design, FitOptions, ModelSpec,
};
use hbe_core::synth::Stream;
use hbe_core::GlmError;
use nalgebra::SymmetricEigen;

fn opts() -> FitOptions {
    FitOptions::default()
}

fn box_for(p: usize) -> (Vec<f64>, Vec<f64>) {
    (vec![-6.0; p], vec![6.0; p])
}

#[test]
fn poisson_matches_grid_search_on_micro_datasets() {
    for m in micro_datasets() {
        let fit = fit_poisson(&m.design(), &opts()).unwrap();
        let (lo, hi) = box_for(m.p());
        let f = |b: &[f64]| ref_loglik(&m, b, 0.0);
        let (best, best_ll) = grid_argmax(&f, &lo, &hi, &vec![f64::NEG_INFINITY; m.p()], 0.5, 1e-3);
        for k in 0..m.p() {
            assert!(
                (fit.beta[k] - best[k]).abs() <= 2e-3,
                "{} {}: fit {} grid {}",
                m.name,
                m.names[k],
                fit.beta[k],
                best[k]
            );
        }
        assert!(fit.log_likelihood >= best_ll - 1e-9, "{}", m.name);
        assert!((fit.log_likelihood - ref_loglik(&m, &fit.beta, 0.0)).abs() < 1e-9);
    }
}

#[test]
fn negbin_matches_grid_search_on_micro_datasets() {
    for m in micro_datasets() {
        let fit = fit_negbin(&m.design(), &opts()).unwrap();
        let p = m.p();
        let (mut lo, mut hi) = box_for(p);
        lo.push(0.0);
        hi.push(5.0);
        let mut lower = vec![f64::NEG_INFINITY; p];
        lower.push(0.0);
        let f = |v: &[f64]| ref_loglik(&m, &v[..p], v[p]);
        let (best, best_ll) = grid_argmax(&f, &lo, &hi, &lower, 0.5, 1e-3);
        for k in 0..p {
            assert!(
                (fit.beta[k] - best[k]).abs() <= 5e-3,
                "{} {}: fit {} grid {}",
                m.name,
                m.names[k],
                fit.beta[k],
                best[k]
            );
        }
        assert!((fit.kappa - best[p]).abs() <= 5e-3, "{} kappa: fit {} grid {}", m.name, fit.kappa, best[p]);
        assert!(fit.log_likelihood >= best_ll - 1e-9, "{}", m.name);
        // the shape-form reference loses precision as 1/κ grows; near the
        // Poisson boundary compare against the Poisson value instead
        let reference = if fit.kappa < 1e-6 {
            ref_loglik(&m, &fit.beta, 0.0)
        } else {
            ref_loglik(&m, &fit.beta, fit.kappa)
        };
        assert!((fit.log_likelihood - reference).abs() < 1e-6, "{}", m.name);
    }
}

#[test]
fn micro_datasets_include_interior_dispersion() {
    let interior = micro_datasets()
        .iter()
        .filter(|m| fit_negbin(&m.design(), &opts()).unwrap().kappa > 0.05)
        .count();
    assert!(interior >= 3);
}

#[test]
fn intercept_only_poisson_is_log_rate() {
    let m = &micro_datasets()[0];
    let fit = fit_poisson(&m.design(), &opts()).unwrap();
    let expected = (m.y.iter().sum::<f64>() / m.exposure.iter().sum::<f64>()).ln();
    assert!((fit.beta[0] - expected).abs() < 1e-10);
    // Poisson information: Var(β0) = 1 / Σμ = 1 / Σy
    let var = 1.0 / m.y.iter().sum::<f64>();
    assert!((fit.covariance[(0, 0)] - var).abs() < 1e-9);
}

#[test]
fn logpmf_reference_points() {
    assert_eq!(nb_logpmf(0.0, 1.0, 0.0), -1.0);
    assert_eq!(nb_logpmf(1.0, 1.0, 0.0), -1.0);
    assert!((nb_logpmf(0.0, 1.0, 1.0) - 0.5f64.ln()).abs() < 1e-15);
}

fn simulated_design(n: usize, seed: u64, kappa: f64) -> Design {
    let cfg = small_config(n, seed, kappa);
    build_design(&simulated_rows(&cfg), &ModelSpec::default()).unwrap()
}

#[test]
fn scaling_exposure_moves_only_the_intercept() {
    let d = simulated_design(4000, 3, 0.5);
    let scaled = d.scale_exposure(1e3);
    for (a, b) in [
        (fit_poisson(&d, &opts()).unwrap(), fit_poisson(&scaled, &opts()).unwrap()),
        (fit_negbin(&d, &opts()).unwrap(), fit_negbin(&scaled, &opts()).unwrap()),
    ] {
        assert!((b.beta[0] - a.beta[0] + 1e3f64.ln()).abs() < 1e-6, "{} intercept", a.family);
        for k in 1..a.p {
            assert!((b.beta[k] - a.beta[k]).abs() < 1e-6, "{} {}", a.family, a.names[k]);
        }
        assert!((a.kappa - b.kappa).abs() < 1e-6);
    }
}

#[test]
fn poisson_score_vanishes_at_convergence() {
    let d = simulated_design(5000, 11, 0.0);
    let fit = fit_poisson(&d, &opts()).unwrap();
    assert!(fit.converged);
    let mu = d.means(&fit.beta);
    let total: f64 = d.y.iter().sum();
    for j in 0..d.p {
        let score: f64 = (0..d.n).map(|i| d.row(i)[j] * (d.y[i] - mu[i])).sum();
        assert!(score.abs() < 1e-6 * total, "{}: {score}", d.names[j]);
    }
}

#[test]
fn permuting_columns_permutes_coefficients() {
    let d = simulated_design(3000, 5, 0.5);
    let order = [0, 4, 2, 3, 1, 8, 6, 7, 5];
    let pd = d.permute_columns(&order);
    for (a, b) in [
        (fit_poisson(&d, &opts()).unwrap(), fit_poisson(&pd, &opts()).unwrap()),
        (fit_negbin(&d, &opts()).unwrap(), fit_negbin(&pd, &opts()).unwrap()),
    ] {
        for (k, &j) in order.iter().enumerate() {
            assert!((b.beta[k] - a.beta[j]).abs() < 1e-7 * (1.0 + a.beta[j].abs()));
            assert_eq!(b.names[k], a.names[j]);
        }
        let (ma, mb) = (d.means(&a.beta), pd.means(&b.beta));
        for (x, y) in ma.iter().zip(&mb) {
            assert!((x - y).abs() <= 1e-10 * x.max(1.0), "{x} vs {y}");
        }
    }
}

#[test]
fn zero_kappa_negbin_equals_poisson() {
    for d in [simulated_design(2000, 8, 0.3), micro_datasets()[2].design()] {
        let p = fit_poisson(&d, &opts()).unwrap();
        let nb = fit_with_fixed_kappa(&d, 0.0, &opts()).unwrap();
        for (a, b) in p.beta.iter().zip(&nb.beta) {
            assert!((a - b).abs() < 1e-9);
        }
        // and the κ → 0 limit is continuous
        let tiny = fit_with_fixed_kappa(&d, 1e-12, &opts()).unwrap();
        for (a, b) in p.beta.iter().zip(&tiny.beta) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn covariance_is_symmetric_psd() {
    let d = simulated_design(3000, 21, 0.5);
    for fit in [fit_poisson(&d, &opts()).unwrap(), fit_negbin(&d, &opts()).unwrap()] {
        let c = &fit.covariance;
        assert_eq!(c, &c.transpose());
        let trace: f64 = c.diagonal().iter().sum();
        let eig = SymmetricEigen::new(c.clone());
        assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-8 * trace));
    }
}

#[test]
fn fitted_point_beats_random_perturbations() {
    let d = simulated_design(2000, 13, 0.7);
    let fit = fit_negbin(&d, &opts()).unwrap();
    let at = nb_loglik(&fit.beta, fit.kappa, &d).unwrap();
    let mut r = Stream::new(1, 7, 0);
    for _ in 0..100 {
        let beta: Vec<f64> = fit
            .beta
            .iter()
            .zip(fit.covariance.diagonal().iter())
            .map(|(b, v)| b + 0.5 * v.sqrt() * r.normal())
            .collect();
        let kappa = (fit.kappa * (1.0 + 0.1 * r.normal())).max(0.0);
        assert!(nb_loglik(&beta, kappa, &d).unwrap() <= at);
    }
}

#[test]
fn dispersion_check_separates_poisson_from_negbin_data() {
    let pois = fit_poisson(&simulated_design(10_000, 31, 0.0), &opts()).unwrap();
    let (ratio, over) = dispersion_check(&pois, pois.n, pois.p).unwrap();
    assert!((0.85..=1.15).contains(&ratio), "{ratio}");
    assert!(!over);

    let nb_data = fit_poisson(&simulated_design(10_000, 31, 0.5), &opts()).unwrap();
    let (ratio, over) = dispersion_check(&nb_data, nb_data.n, nb_data.p).unwrap();
    assert!(ratio > 1.5, "{ratio}");
    assert!(over);
}

#[test]
fn kappa_is_recovered_at_scale() {
    let fit = fit_negbin(&simulated_design(50_000, 2024, 0.5), &opts()).unwrap();
    assert!(fit.converged);
    assert!((0.45..=0.55).contains(&fit.kappa), "{}", fit.kappa);
    let table = wald_inference(&fit).unwrap();
    let hbe = table.get("hbe_rate").unwrap();
    assert!(hbe.estimate > 0.0 && hbe.p_value < 1e-3);
}

#[test]
fn structural_errors() {
    let names = vec!["(Intercept)".to_string(), "a".to_string(), "b".to_string()];
    let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64, 2.0 * i as f64]).collect();
    let d = Design::from_rows(names, &rows, vec![1.0; 6], vec![0.0; 6]).unwrap();
    assert!(matches!(fit_poisson(&d, &opts()), Err(GlmError::RankDeficient { .. })));
    assert_eq!(build_design(&[], &ModelSpec::default()).unwrap_err(), GlmError::Empty);
    assert_eq!(
        fit_with_fixed_kappa(&micro_datasets()[0].design(), -1.0, &opts()).unwrap_err(),
        GlmError::NegativeKappa
    );
}
