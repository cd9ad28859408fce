mod support;

use mqi::glmm::{fit_model, ClusteredData, FitOptions, FitStatus, LaplaceObjective, ModelForm, Term};
use support::{glm_loglik, grid_search_glm, nested_quadrature_loglik, offsets, tiny_instance};

/// Parameter point for the oracle comparisons: the generator's fixed effects
/// and the baseline scenario's unexplained variances (σ_u² = σ_v² = 0.125).
fn theta_for(obj: &LaplaceObjective, seed: u64) -> Vec<f64> {
    let s = seed as f64;
    let mut theta: Vec<f64> = obj
        .terms()
        .iter()
        .map(|t| match t {
            Term::Intercept => -0.4 + 0.05 * (s % 3.0),
            Term::RiskFactor => 0.9 + 0.1 * (s % 2.0),
            Term::Volume => -0.05,
            Term::RegionCovariate => 0.3,
        })
        .collect();
    theta.push(0.125_f64.ln());
    if obj.dim() > obj.terms().len() + 1 {
        theta.push(0.125_f64.ln());
    }
    theta
}

#[test]
fn laplace_matches_quadrature_on_tiny_instances() {
    for seed in 0..20u64 {
        let data = tiny_instance(seed, 2, 2, 5);
        for form in [ModelForm::MqiFull, ModelForm::MqiNoRegion, ModelForm::RandomIntercept] {
            let obj = LaplaceObjective::new(&data, form).unwrap();
            let theta = theta_for(&obj, seed);
            let p = obj.terms().len();
            let laplace = obj.value(&theta);
            let off = offsets(&data, obj.terms(), &theta[..p]);
            let var_v = (form == ModelForm::MqiFull).then(|| theta[p + 1].exp());
            let quad = nested_quadrature_loglik(&data, &off, theta[p].exp(), var_v, 15);
            let rel = ((laplace - quad) / quad).abs();
            assert!(rel < 1e-3, "seed {seed} {form:?}: laplace {laplace} quadrature {quad} rel {rel}");
        }
    }
}

#[test]
fn laplace_gradient_matches_central_differences() {
    for seed in 0..12u64 {
        let data = tiny_instance(100 + seed, 3, 3, 4 + seed as usize % 3);
        for form in [ModelForm::MqiFull, ModelForm::MqiNoRegion, ModelForm::RandomIntercept] {
            let obj = LaplaceObjective::new(&data, form).unwrap();
            let theta = theta_for(&obj, seed);
            let (_, grad) = obj.value_and_gradient(&theta);
            for j in 0..theta.len() {
                let step = 1e-5;
                let mut up = theta.clone();
                up[j] += step;
                let mut down = theta.clone();
                down[j] -= step;
                let fd = (obj.value(&up) - obj.value(&down)) / (2.0 * step);
                let err = (grad[j] - fd).abs() / fd.abs().max(1.0);
                assert!(err < 1e-4, "seed {seed} {form:?} component {j}: analytic {} fd {fd}", grad[j]);
            }
        }
    }
}

#[test]
fn glm_matches_grid_search() {
    let data = tiny_instance(7, 5, 2, 5);
    assert_eq!(data.y.len(), 50);
    let fit = fit_model(&data, ModelForm::GlmPatient, &FitOptions::default()).unwrap();
    assert_eq!(fit.status, FitStatus::Converged);
    let (b0, b1) = grid_search_glm(&data.y, &data.x);
    assert!((fit.intercept() - b0).abs() < 1e-4, "{} vs {b0}", fit.intercept());
    assert!((fit.coefficient(Term::RiskFactor) - b1).abs() < 1e-4);
    assert!((fit.log_likelihood - glm_loglik(&data.y, &data.x, b0, b1)).abs() < 1e-8);
}

#[test]
fn fitted_models_have_small_gradients() {
    for seed in 0..5u64 {
        let data = tiny_instance(300 + seed, 6, 5, 12);
        for form in [ModelForm::MqiFull, ModelForm::MqiNoRegion, ModelForm::RandomIntercept] {
            let opts = FitOptions::default();
            let fit = fit_model(&data, form, &opts).unwrap();
            assert!(fit.is_usable(), "seed {seed} {form:?}: {:?}", fit.status);
            assert!(fit.gradient_norm <= opts.stall_grad_tol, "{form:?} gradient {}", fit.gradient_norm);
            assert!(fit.hospital_variance.unwrap() >= 0.0);
            assert!(fit.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9), "objective must not decrease");
        }
    }
}

#[test]
fn fitting_is_deterministic() {
    let data = tiny_instance(42, 4, 4, 8);
    let a = fit_model(&data, ModelForm::MqiFull, &FitOptions::default()).unwrap();
    let b = fit_model(&data, ModelForm::MqiFull, &FitOptions::default()).unwrap();
    assert_eq!(a, b);
}

/// Data with no hospital or region heterogeneity: the variance components go
/// to the boundary and the fixed effects reduce to the plain logistic fit.
#[test]
fn degenerate_variance_collapses_to_glm() {
    let mut data: ClusteredData = tiny_instance(5, 10, 10, 40);
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    for i in 0..data.y.len() {
        let h = data.patient_hospital[i];
        let eta = -0.5 + data.x[i] - 0.05 * data.hospital_volume[h];
        data.y[i] = rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp());
    }
    // same covariates, no random effects: a GLM on (1, x, n^h)
    let mut plain = data.clone();
    plain.hospital_region = (0..plain.hospital_region.len()).map(|_| 0).collect();
    let glm_like = fit_model(&data, ModelForm::MqiNoRegion, &FitOptions::default()).unwrap();
    if glm_like.status == FitStatus::Boundary {
        assert!(glm_like.hospital_effects.iter().all(|u| *u == 0.0));
    }
    assert!(glm_like.hospital_variance.unwrap() < 0.02);
}
