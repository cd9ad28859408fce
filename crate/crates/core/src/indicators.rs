//! Hospital- and region-level quality indicators computed from a dataset and
//! the fitted outcome models.
//!
//! Conventional indicators: raw rate, SMR (observed over GLM-expected), RSMR
//! (random-intercept predicted over expected) and regional SMR. Multilevel
//! indicators: SHOR (hospital effect applied to every patient of the
//! population), its patient-share weighted regional mean RSHOR, and RSPOR
//! (region effect and each treating hospital's effect applied to every
//! patient, weighted by where the region's residents were treated).

use std::io::Write;

use crate::dgp::{Dataset, HospitalRegionId, Patient, PatientRegionId};
use crate::error::{Error, FitError, Result};
use crate::format::sig6;
use crate::glmm::{FitResult, ModelForm};
use crate::stats::{inv_logit, running_mean};

/// Denominators below this make a ratio indicator invalid.
pub const MIN_EXPECTED: f64 = 1e-12;

/// The four fits of one replication; `None` when a fit was not attempted.
#[derive(Debug, Clone, Default)]
pub struct ModelFits {
    pub glm: Option<FitResult>,
    pub random_intercept: Option<FitResult>,
    pub full: Option<FitResult>,
    pub no_region: Option<FitResult>,
}

impl ModelFits {
    pub fn get(&self, form: ModelForm) -> Option<&FitResult> {
        match form {
            ModelForm::GlmPatient => self.glm.as_ref(),
            ModelForm::RandomIntercept => self.random_intercept.as_ref(),
            ModelForm::MqiFull => self.full.as_ref(),
            ModelForm::MqiNoRegion => self.no_region.as_ref(),
        }
    }

    /// The fit of `form` if it exists and is usable.
    pub fn usable(&self, form: ModelForm) -> Option<&FitResult> {
        self.get(form).filter(|f| f.is_usable())
    }
}

/// Per-hospital indicators; `None` marks an invalid or unavailable value.
#[derive(Debug, Clone, PartialEq)]
pub struct HospitalIndicators {
    pub raw: Vec<f64>,
    pub smr: Vec<Option<f64>>,
    pub rsmr: Vec<Option<f64>>,
    pub shor: Vec<Option<f64>>,
    pub shor_noregion: Vec<Option<f64>>,
}

/// `p̄_r^h` for one hospital that treated residents of the region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypotheticalRate {
    pub hospital: usize,
    /// Residents of the region treated at the hospital, `n_r^h`.
    pub patients: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionIndicators {
    /// Indexed by hospital region.
    pub rshor: Vec<Option<f64>>,
    /// Indexed by patient region.
    pub rspor: Vec<Option<f64>>,
    /// Indexed by patient region.
    pub smr: Vec<Option<f64>>,
    /// Per patient region, the hospitals with `n_r^h > 0`.
    pub hypothetical: Vec<Vec<HypotheticalRate>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rspor {
    pub values: Vec<Option<f64>>,
    pub hypothetical: Vec<Vec<HypotheticalRate>>,
}

fn check(ds: &Dataset, fit: &FitResult, expected: ModelForm) -> Result<(), FitError> {
    if fit.form != expected {
        return Err(FitError::WrongForm { expected, found: fit.form });
    }
    if !fit.is_usable() {
        return Err(FitError::Unusable(fit.status));
    }
    if fit.hospitals() != ds.hospitals.len() {
        return Err(FitError::SizeMismatch { kind: "hospital", fit: fit.hospitals(), data: ds.hospitals.len() });
    }
    if fit.regions() != ds.regions.len() {
        return Err(FitError::SizeMismatch { kind: "region", fit: fit.regions(), data: ds.regions.len() });
    }
    Ok(())
}

fn ratio(observed: f64, expected: f64) -> Option<f64> {
    (expected >= MIN_EXPECTED).then(|| observed / expected)
}

fn rate(patients: &[Patient]) -> f64 {
    patients.iter().filter(|p| p.y).count() as f64 / patients.len() as f64
}

/// Observed over expected, as the ratio of the observed rate to the mean
/// prediction.
fn observed_over_expected(patients: &[Patient], predict: impl Fn(&Patient) -> f64) -> Option<f64> {
    let expected = running_mean(patients.iter().map(predict));
    (expected * patients.len() as f64 >= MIN_EXPECTED).then(|| rate(patients) / expected)
}

/// Observed outcome rate per hospital.
pub fn raw_rate(ds: &Dataset) -> Vec<f64> {
    (0..ds.hospitals.len()).map(|h| rate(ds.hospital_patients(h))).collect()
}

/// Observed over expected outcomes per hospital, expectations from the
/// patient-level GLM.
pub fn smr(ds: &Dataset, glm: &FitResult) -> Result<Vec<Option<f64>>, FitError> {
    check(ds, glm, ModelForm::GlmPatient)?;
    Ok((0..ds.hospitals.len())
        .map(|h| observed_over_expected(ds.hospital_patients(h), |p| inv_logit(glm.patient_term(p.x))))
        .collect())
}

/// Predicted over expected outcomes per hospital from the random-intercept
/// fit: the hospital's own intercept against the mean intercept, both over
/// the hospital's own patients.
pub fn rsmr(ds: &Dataset, ri: &FitResult) -> Result<Vec<Option<f64>>, FitError> {
    check(ds, ri, ModelForm::RandomIntercept)?;
    (0..ds.hospitals.len())
        .map(|h| {
            let effect = ri.hospital_term(h)?;
            let (mut predicted, mut expected) = (0.0, 0.0);
            for p in ds.hospital_patients(h) {
                let base = ri.patient_term(p.x);
                predicted += inv_logit(base + effect);
                expected += inv_logit(base);
            }
            Ok(ratio(predicted, expected))
        })
        .collect()
}

/// SHOR per hospital. `include_region` selects the full model (region terms
/// of each patient's home region enter the average) over the region-free one.
pub fn shor(ds: &Dataset, fit: &FitResult, include_region: bool) -> Result<Vec<f64>, FitError> {
    let form = if include_region { ModelForm::MqiFull } else { ModelForm::MqiNoRegion };
    check(ds, fit, form)?;
    let base = ds
        .patients
        .iter()
        .map(|p| {
            let region = if include_region { fit.region_term(p.region.0)? } else { 0.0 };
            Ok(fit.patient_term(p.x) + region)
        })
        .collect::<Result<Vec<f64>, FitError>>()?;
    let n = base.len() as f64;
    (0..ds.hospitals.len())
        .map(|h| {
            let effect = fit.hospital_term(h)?;
            Ok(base.iter().map(|t| inv_logit(t + effect)).sum::<f64>() / n)
        })
        .collect()
}

/// Patient-share weighted mean of the SHORs of the hospitals located in
/// each region. A region is invalid when it has no patients or any of its
/// hospitals lacks a SHOR.
pub fn rshor(ds: &Dataset, shor: &[Option<f64>]) -> Vec<Option<f64>> {
    (0..ds.regions.len())
        .map(|s| {
            let mut total = 0.0;
            let mut weighted = 0.0;
            for h in ds.hospitals_in(HospitalRegionId(s)) {
                let value = shor.get(h.id).copied().flatten()?;
                total += h.volume as f64;
                weighted += h.volume as f64 * value;
            }
            (total > 0.0).then(|| weighted / total)
        })
        .collect()
}

/// RSPOR per patient region together with the hypothetical rates it
/// averages.
pub fn rspor(ds: &Dataset, fit: &FitResult) -> Result<Rspor, FitError> {
    check(ds, fit, ModelForm::MqiFull)?;
    let base: Vec<f64> = ds.patients.iter().map(|p| fit.patient_term(p.x)).collect();
    let n = base.len() as f64;
    let mut values = Vec::with_capacity(ds.regions.len());
    let mut hypothetical = Vec::with_capacity(ds.regions.len());
    for r in 0..ds.regions.len() {
        let region = fit.region_term(r)?;
        let treating = ds.hospitals_treating(PatientRegionId(r));
        let residents: usize = treating.iter().map(|&(_, c)| c).sum();
        let rates = treating
            .iter()
            .map(|&(h, patients)| {
                let shift = region + fit.hospital_term(h)?;
                let rate = base.iter().map(|t| inv_logit(t + shift)).sum::<f64>() / n;
                Ok(HypotheticalRate { hospital: h, patients, rate })
            })
            .collect::<Result<Vec<_>, FitError>>()?;
        values.push((residents > 0).then(|| rates.iter().map(|q| q.patients as f64 / residents as f64 * q.rate).sum()));
        hypothetical.push(rates);
    }
    Ok(Rspor { values, hypothetical })
}

/// Observed over GLM-expected outcomes among each region's residents.
pub fn regional_smr(ds: &Dataset, glm: &FitResult) -> Result<Vec<Option<f64>>, FitError> {
    check(ds, glm, ModelForm::GlmPatient)?;
    let mut residents = vec![Vec::new(); ds.regions.len()];
    for p in &ds.patients {
        residents[p.region.0].push(*p);
    }
    Ok(residents
        .iter()
        .map(
            |list| {
                if list.is_empty() {
                    None
                } else {
                    observed_over_expected(list, |p| inv_logit(glm.patient_term(p.x)))
                }
            },
        )
        .collect())
}

/// Every indicator that the available usable fits allow.
pub fn compute(ds: &Dataset, fits: &ModelFits) -> Result<(HospitalIndicators, RegionIndicators), FitError> {
    let hospitals = ds.hospitals.len();
    let regions = ds.regions.len();
    let none = |k: usize| vec![None; k];

    let (smr_h, smr_r) = match fits.usable(ModelForm::GlmPatient) {
        Some(glm) => (smr(ds, glm)?, regional_smr(ds, glm)?),
        None => (none(hospitals), none(regions)),
    };
    let rsmr_h = match fits.usable(ModelForm::RandomIntercept) {
        Some(ri) => rsmr(ds, ri)?,
        None => none(hospitals),
    };
    let (shor_h, rspor_r) = match fits.usable(ModelForm::MqiFull) {
        Some(full) => (shor(ds, full, true)?.into_iter().map(Some).collect(), rspor(ds, full)?),
        None => (none(hospitals), Rspor { values: none(regions), hypothetical: vec![Vec::new(); regions] }),
    };
    let shor_nr = match fits.usable(ModelForm::MqiNoRegion) {
        Some(fit) => shor(ds, fit, false)?.into_iter().map(Some).collect(),
        None => none(hospitals),
    };
    let rshor_s = rshor(ds, &shor_h);

    Ok((
        HospitalIndicators { raw: raw_rate(ds), smr: smr_h, rsmr: rsmr_h, shor: shor_h, shor_noregion: shor_nr },
        RegionIndicators { rshor: rshor_s, rspor: rspor_r.values, smr: smr_r, hypothetical: rspor_r.hypothetical },
    ))
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), sig6)
}

fn io(e: std::io::Error) -> Error {
    Error::io("writing indicator table", e)
}

/// Hospital table: `h,region,n_h,theta_true,raw,smr,rsmr,shor,shor_noregion`.
pub fn write_hospital_csv<W: Write>(ds: &Dataset, ind: &HospitalIndicators, mut out: W) -> Result<()> {
    writeln!(out, "h,region,n_h,theta_true,raw,smr,rsmr,shor,shor_noregion").map_err(io)?;
    for (h, hosp) in ds.hospitals.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            h,
            hosp.region.0,
            hosp.volume,
            sig6(hosp.theta),
            sig6(ind.raw[h]),
            cell(ind.smr[h]),
            cell(ind.rsmr[h]),
            cell(ind.shor[h]),
            cell(ind.shor_noregion[h]),
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Region table: `r,eta_true,rshor,rspor,smr_r`.
pub fn write_region_csv<W: Write>(ds: &Dataset, ind: &RegionIndicators, mut out: W) -> Result<()> {
    writeln!(out, "r,eta_true,rshor,rspor,smr_r").map_err(io)?;
    for (r, region) in ds.regions.iter().enumerate() {
        writeln!(out, "{},{},{},{},{}", r, sig6(region.eta), cell(ind.rshor[r]), cell(ind.rspor[r]), cell(ind.smr[r]),)
            .map_err(io)?;
    }
    Ok(())
}
