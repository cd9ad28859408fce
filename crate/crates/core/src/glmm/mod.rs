//! Estimation of the four outcome models behind the indicators.
//!
//! * [`ModelForm::GlmPatient`]: `logit p = b0 + b1 x`, fitted by IRLS.
//! * [`ModelForm::RandomIntercept`]: `logit p = a^h + b x` with
//!   `a^h ~ N(ā, σ_a²)`.
//! * [`ModelForm::MqiFull`]: risk factor, hospital volume and hospital random
//!   intercept, region covariate and region random intercept.
//! * [`ModelForm::MqiNoRegion`]: the same without the region terms.
//!
//! Random-effects forms maximize the Laplace approximation of the marginal
//! likelihood over fixed effects and log variance components with BFGS,
//! started from the GLM fit of the same design. Empirical-Bayes predictions
//! are the posterior modes at the optimum.

mod bfgs;
mod data;
mod glm;
mod laplace;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dgp::Dataset;
use crate::error::FitError;
use crate::stats::inv_logit;

pub use data::ClusteredData;

use bfgs::{minimize, BfgsSettings};
use data::ModelData;
use laplace::{LaplaceModel, Modes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelForm {
    GlmPatient,
    RandomIntercept,
    MqiFull,
    MqiNoRegion,
}

impl ModelForm {
    pub const ALL: [ModelForm; 4] =
        [ModelForm::GlmPatient, ModelForm::RandomIntercept, ModelForm::MqiFull, ModelForm::MqiNoRegion];

    pub fn name(self) -> &'static str {
        match self {
            ModelForm::GlmPatient => "glm",
            ModelForm::RandomIntercept => "random_intercept",
            ModelForm::MqiFull => "mqi_full",
            ModelForm::MqiNoRegion => "mqi_noregion",
        }
    }

    pub fn terms(self) -> &'static [Term] {
        match self {
            ModelForm::GlmPatient | ModelForm::RandomIntercept => &[Term::Intercept, Term::RiskFactor],
            ModelForm::MqiFull => &[Term::Intercept, Term::RiskFactor, Term::Volume, Term::RegionCovariate],
            ModelForm::MqiNoRegion => &[Term::Intercept, Term::RiskFactor, Term::Volume],
        }
    }

    pub fn has_hospital_effects(self) -> bool {
        self != ModelForm::GlmPatient
    }

    pub fn has_region_effects(self) -> bool {
        self == ModelForm::MqiFull
    }
}

/// Fixed-effect terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    /// Patient risk factor `x`.
    RiskFactor,
    /// Hospital volume `n^h`, untransformed.
    Volume,
    /// Binary region covariate `w_r`.
    RegionCovariate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FitStatus {
    Converged,
    /// Converged with at least one variance component below the boundary
    /// threshold; the corresponding effects are reported as zero.
    Boundary,
    NotConverged,
    /// All outcomes equal or coefficients diverging.
    Separation,
}

impl FitStatus {
    pub fn is_usable(self) -> bool {
        matches!(self, FitStatus::Converged | FitStatus::Boundary)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub rel_tol: f64,
    pub grad_tol: f64,
    /// Upper bound on the gradient when stopping on the relative-change rule.
    /// Both gradient tolerances apply to the per-patient gradient.
    pub stall_grad_tol: f64,
    pub separation_bound: f64,
    pub boundary_variance: f64,
    pub initial_variance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 100,
            rel_tol: 1e-10,
            grad_tol: 1e-8,
            stall_grad_tol: 1e-6,
            separation_bound: 30.0,
            boundary_variance: 1e-10,
            initial_variance: 0.25,
        }
    }
}

const LOG_VARIANCE_MIN: f64 = -32.0;
const LOG_VARIANCE_MAX: f64 = 9.0;
/// Log of a variance too small to affect any fitted quantity (1e-6).
const NEGLIGIBLE_LOG_VARIANCE: f64 = -13.815510557964274;

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub form: ModelForm,
    pub terms: Vec<Term>,
    pub coefficients: Vec<f64>,
    /// Terms dropped because their column was constant.
    pub dropped: Vec<Term>,
    pub hospital_variance: Option<f64>,
    pub region_variance: Option<f64>,
    /// Posterior modes `û^h` (deviations from the fixed part).
    pub hospital_effects: Vec<f64>,
    pub region_effects: Vec<f64>,
    pub hospital_boundary: bool,
    pub region_boundary: bool,
    pub status: FitStatus,
    /// Final (Laplace-approximated, for random-effects forms) log-likelihood.
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Infinity norm of the objective gradient divided by the number of
    /// patients, in the internal (standardized design) parametrization.
    pub gradient_norm: f64,
    pub trace: Vec<f64>,
    hospital_volume: Vec<f64>,
    region_covariate: Vec<f64>,
}

impl FitResult {
    /// Coefficient of `term`, zero when the term is absent or dropped.
    pub fn coefficient(&self, term: Term) -> f64 {
        self.terms.iter().position(|t| *t == term).map_or(0.0, |j| self.coefficients[j])
    }

    pub fn intercept(&self) -> f64 {
        self.coefficient(Term::Intercept)
    }

    pub fn is_usable(&self) -> bool {
        self.status.is_usable()
    }

    pub fn hospitals(&self) -> usize {
        self.hospital_volume.len()
    }

    pub fn regions(&self) -> usize {
        self.region_covariate.len()
    }

    /// Estimated hospital term on the logit scale: `γ̂ n^h + û^h` for the MQI
    /// forms and `û^h = â^h - â̄` for the random-intercept form.
    pub fn hospital_term(&self, h: usize) -> Result<f64, FitError> {
        if h >= self.hospitals() {
            return Err(FitError::UnknownId { kind: "hospital", id: h });
        }
        let u = self.hospital_effects.get(h).copied().unwrap_or(0.0);
        Ok(self.coefficient(Term::Volume) * self.hospital_volume[h] + u)
    }

    /// Estimated region term: `δ̂ w_r + v̂_r`.
    pub fn region_term(&self, r: usize) -> Result<f64, FitError> {
        if r >= self.regions() {
            return Err(FitError::UnknownId { kind: "region", id: r });
        }
        let v = self.region_effects.get(r).copied().unwrap_or(0.0);
        Ok(self.coefficient(Term::RegionCovariate) * self.region_covariate[r] + v)
    }

    /// Patient part of the linear predictor: intercept plus `b x`.
    pub fn patient_term(&self, x: f64) -> f64 {
        self.intercept() + self.coefficient(Term::RiskFactor) * x
    }

    /// Builds a fit from given parameters, for evaluating indicators on
    /// hand-specified models.
    pub fn from_parts(form: ModelForm, parts: FitParts) -> Self {
        let terms = form.terms().to_vec();
        let coefficients = terms
            .iter()
            .map(|t| match t {
                Term::Intercept => parts.intercept,
                Term::RiskFactor => parts.risk_factor,
                Term::Volume => parts.volume,
                Term::RegionCovariate => parts.region_covariate,
            })
            .collect();
        FitResult {
            form,
            terms,
            coefficients,
            dropped: Vec::new(),
            hospital_variance: form.has_hospital_effects().then_some(parts.hospital_variance),
            region_variance: form.has_region_effects().then_some(parts.region_variance),
            hospital_effects: parts.hospital_effects,
            region_effects: parts.region_effects,
            hospital_boundary: false,
            region_boundary: false,
            status: FitStatus::Converged,
            log_likelihood: f64::NAN,
            iterations: 0,
            gradient_norm: 0.0,
            trace: Vec::new(),
            hospital_volume: parts.hospital_volume,
            region_covariate: parts.region_covariate_values,
        }
    }
}

/// Parameters for [`FitResult::from_parts`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitParts {
    pub intercept: f64,
    pub risk_factor: f64,
    pub volume: f64,
    pub region_covariate: f64,
    pub hospital_variance: f64,
    pub region_variance: f64,
    pub hospital_effects: Vec<f64>,
    pub region_effects: Vec<f64>,
    pub hospital_volume: Vec<f64>,
    pub region_covariate_values: Vec<f64>,
}

/// Predicted outcome probability for a patient with risk factor `x`. The
/// hospital and region terms are included exactly when their ids are given.
pub fn predict_probability(
    fit: &FitResult,
    x: f64,
    hospital: Option<usize>,
    region: Option<usize>,
) -> Result<f64, FitError> {
    let mut eta = fit.patient_term(x);
    if let Some(h) = hospital {
        eta += fit.hospital_term(h)?;
    }
    if let Some(r) = region {
        eta += fit.region_term(r)?;
    }
    Ok(inv_logit(eta))
}

/// Logistic regression of outcome on the patient risk factor.
pub fn fit_glm(ds: &Dataset) -> Result<FitResult, FitError> {
    fit_model(&ClusteredData::from_dataset(ds), ModelForm::GlmPatient, &FitOptions::default())
}

/// Fits one of the random-effects forms.
pub fn fit_glmm(ds: &Dataset, form: ModelForm) -> Result<FitResult, FitError> {
    if !form.has_hospital_effects() {
        return Err(FitError::NotRandomEffects(form));
    }
    fit_model(&ClusteredData::from_dataset(ds), form, &FitOptions::default())
}

/// Fits any model form to clustered data.
pub fn fit_model(data: &ClusteredData, form: ModelForm, opts: &FitOptions) -> Result<FitResult, FitError> {
    let md = ModelData::build(data, form, true)?;
    let init = glm::irls(&md, opts);
    let base = FitResult {
        form,
        terms: md.terms.clone(),
        coefficients: md.unstandardize(&init.beta),
        dropped: md.dropped.clone(),
        hospital_variance: None,
        region_variance: None,
        hospital_effects: Vec::new(),
        region_effects: Vec::new(),
        hospital_boundary: false,
        region_boundary: false,
        status: init.status,
        log_likelihood: init.loglik,
        iterations: init.iterations,
        gradient_norm: init.gradient_norm,
        trace: init.trace.clone(),
        hospital_volume: data.hospital_volume.clone(),
        region_covariate: data.region_covariate.clone(),
    };
    if !form.has_hospital_effects() {
        return Ok(base);
    }
    let region_effects = form.has_region_effects();
    if init.status == FitStatus::Separation {
        return Ok(FitResult {
            hospital_variance: Some(0.0),
            region_variance: region_effects.then_some(0.0),
            hospital_effects: vec![0.0; data.hospitals()],
            region_effects: if region_effects { vec![0.0; data.regions()] } else { Vec::new() },
            ..base
        });
    }

    let model = LaplaceModel { data: &md, region_effects };
    let p = md.p();
    let dim = model.dim();
    let mut theta0 = init.beta.clone();
    theta0.push(opts.initial_variance.ln());
    if region_effects {
        theta0.push(opts.initial_variance.ln());
    }

    let mut inv_h0 = DMatrix::zeros(dim, dim);
    let info_inv = init.information.clone().try_inverse().unwrap_or_else(|| DMatrix::identity(p, p));
    inv_h0.view_mut((0, 0), (p, p)).copy_from(&info_inv);
    inv_h0[(p, p)] = 2.0 / data.hospitals() as f64;
    if region_effects {
        inv_h0[(p + 1, p + 1)] = 2.0 / data.regions().max(1) as f64;
    }

    let mut lower = vec![f64::NEG_INFINITY; p];
    let mut upper = vec![f64::INFINITY; p];
    for _ in p..dim {
        lower.push(LOG_VARIANCE_MIN);
        upper.push(LOG_VARIANCE_MAX);
    }
    let settings = BfgsSettings {
        max_iterations: opts.max_iterations,
        grad_tol: opts.grad_tol,
        rel_tol: opts.rel_tol,
        stall_grad_tol: opts.stall_grad_tol,
        gradient_scale: data.patients() as f64,
        lower,
        upper,
    };

    let mut modes = Modes::zeros(data.hospitals(), data.regions());
    let outcome = minimize(
        |theta| {
            let e = model.evaluate(theta, &mut modes, true);
            (-e.value, e.gradient.iter().map(|g| -g).collect())
        },
        theta0,
        inv_h0,
        &settings,
    );
    let mut x = outcome.x.clone();
    let mut last = model.evaluate(&x, &mut modes, false);
    // The likelihood is flat in a vanishing log variance; move it onto the
    // lower bound when that costs nothing.
    for k in p..dim {
        if x[k] < NEGLIGIBLE_LOG_VARIANCE {
            let mut trial = x.clone();
            trial[k] = LOG_VARIANCE_MIN;
            let mut trial_modes = modes.clone();
            let e = model.evaluate(&trial, &mut trial_modes, false);
            if e.value >= last.value - opts.rel_tol * last.value.abs() {
                x = trial;
                modes = trial_modes;
                last = e;
            }
        }
    }

    let beta = md.unstandardize(&x[..p]);
    let var_u = x[p].exp();
    let var_v = region_effects.then(|| x[p + 1].exp());
    let hospital_boundary = var_u < opts.boundary_variance;
    let region_boundary = var_v.is_some_and(|v| v < opts.boundary_variance);
    let mut u = modes.u;
    if hospital_boundary {
        u.iter_mut().for_each(|x| *x = 0.0);
    }
    let mut v = if region_effects { modes.v } else { Vec::new() };
    if region_boundary {
        v.iter_mut().for_each(|x| *x = 0.0);
    }

    let status = if beta.iter().any(|b| b.abs() > opts.separation_bound) {
        FitStatus::Separation
    } else if !outcome.converged {
        FitStatus::NotConverged
    } else if hospital_boundary || region_boundary {
        FitStatus::Boundary
    } else {
        FitStatus::Converged
    };

    Ok(FitResult {
        coefficients: beta,
        hospital_variance: Some(if hospital_boundary { 0.0 } else { var_u }),
        region_variance: var_v.map(|v| if region_boundary { 0.0 } else { v }),
        hospital_effects: u,
        region_effects: v,
        hospital_boundary,
        region_boundary,
        status,
        log_likelihood: last.value,
        iterations: outcome.iterations,
        gradient_norm: outcome.gradient.iter().fold(0.0_f64, |m, g| m.max(g.abs())) / data.patients() as f64,
        trace: outcome.trace.iter().map(|f| -f).collect(),
        ..base
    })
}

/// The Laplace-approximated marginal log-likelihood of a random-effects form
/// as a function of `(β, log σ_u², [log σ_v²])`, with β over
/// [`LaplaceObjective::terms`].
pub struct LaplaceObjective {
    data: ModelData,
    form: ModelForm,
}

impl LaplaceObjective {
    pub fn new(data: &ClusteredData, form: ModelForm) -> Result<Self, FitError> {
        if !form.has_hospital_effects() {
            return Err(FitError::NotRandomEffects(form));
        }
        Ok(LaplaceObjective { data: ModelData::build(data, form, false)?, form })
    }

    pub fn terms(&self) -> &[Term] {
        &self.data.terms
    }

    pub fn dim(&self) -> usize {
        self.model().dim()
    }

    fn model(&self) -> LaplaceModel<'_> {
        LaplaceModel { data: &self.data, region_effects: self.form.has_region_effects() }
    }

    fn modes(&self) -> Modes {
        Modes::zeros(self.data.hospital_patients.len(), self.data.region_hospitals.len())
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        self.model().evaluate(theta, &mut self.modes(), false).value
    }

    pub fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let e = self.model().evaluate(theta, &mut self.modes(), true);
        (e.value, e.gradient)
    }

    /// Posterior modes `(û, v̂)` at `theta`.
    pub fn modes_at(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut m = self.modes();
        self.model().evaluate(theta, &mut m, false);
        (m.u, m.v)
    }
}
