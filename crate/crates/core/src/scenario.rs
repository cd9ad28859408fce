//! Simulation scenarios and the closed-form constants of the data generation
//! process.
//!
//! A [`Scenario`] carries the twelve free parameters of a simulation point.
//! [`derive_parameters`] turns a validated scenario into every constant the
//! samplers in [`crate::dgp`] need: regression coefficients chosen so that
//! the observed covariates explain a fixed share of the region and hospital
//! variance, the volume bounds per region type, the case-mix slope, and the
//! intercept calibrated to the target outcome rate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;

/// Mean of the binary region covariate `w_r ~ Ber(0.5)`.
pub const REGION_COVARIATE_MEAN: f64 = 0.5;
/// Variance of the binary region covariate.
pub const REGION_COVARIATE_VARIANCE: f64 = 0.25;

/// Free parameters of one simulation point.
///
/// Field names follow their role; the serialized keys are the ASCII
/// spellings used in configuration files (`R`, `H_bar`, `n_bar`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    #[serde(rename = "R")]
    pub regions: u32,
    #[serde(rename = "H_bar")]
    pub hospitals_per_region: u32,
    #[serde(rename = "n_bar")]
    pub mean_volume: u32,
    #[serde(rename = "p_y_bar")]
    pub target_rate: f64,
    #[serde(rename = "delta_n")]
    pub volume_gap: i32,
    #[serde(rename = "rho")]
    pub casemix_volume_corr: f64,
    #[serde(rename = "xi_w_eta")]
    pub region_explained_share: f64,
    #[serde(rename = "xi_n_theta")]
    pub hospital_explained_share: f64,
    #[serde(rename = "xi_theta_mux")]
    pub casemix_variance_ratio: f64,
    #[serde(rename = "sigma_eta")]
    pub sd_region: f64,
    #[serde(rename = "sigma_theta")]
    pub sd_hospital: f64,
    #[serde(rename = "sigma_x")]
    pub sd_patient: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::baseline()
    }
}

impl Scenario {
    /// The baseline point: 20 regions of 10 hospitals with mean volume 10.
    pub fn baseline() -> Self {
        Scenario {
            regions: 20,
            hospitals_per_region: 10,
            mean_volume: 10,
            target_rate: 0.3,
            volume_gap: 0,
            casemix_volume_corr: 0.0,
            region_explained_share: 0.5,
            hospital_explained_share: 0.5,
            casemix_variance_ratio: 1.0,
            sd_region: 0.5,
            sd_hospital: 0.5,
            sd_patient: 0.2,
        }
    }

    pub fn hospital_count(&self) -> usize {
        self.regions as usize * self.hospitals_per_region as usize
    }

    /// Expected number of patients, `n̄·H`.
    pub fn expected_patients(&self) -> f64 {
        self.mean_volume as f64 * self.hospital_count() as f64
    }

    pub fn get(&self, param: ScenarioParam) -> f64 {
        match param {
            ScenarioParam::Regions => self.regions as f64,
            ScenarioParam::HospitalsPerRegion => self.hospitals_per_region as f64,
            ScenarioParam::MeanVolume => self.mean_volume as f64,
            ScenarioParam::TargetRate => self.target_rate,
            ScenarioParam::VolumeGap => self.volume_gap as f64,
            ScenarioParam::CasemixVolumeCorr => self.casemix_volume_corr,
            ScenarioParam::RegionExplainedShare => self.region_explained_share,
            ScenarioParam::HospitalExplainedShare => self.hospital_explained_share,
            ScenarioParam::CasemixVarianceRatio => self.casemix_variance_ratio,
            ScenarioParam::SdRegion => self.sd_region,
            ScenarioParam::SdHospital => self.sd_hospital,
            ScenarioParam::SdPatient => self.sd_patient,
        }
    }

    /// Returns a copy with one parameter replaced. Integer-valued parameters
    /// reject non-integral values.
    pub fn with(&self, param: ScenarioParam, value: f64) -> Result<Scenario, ScenarioError> {
        let mut s = *self;
        let as_int = |v: f64| -> Result<i64, ScenarioError> {
            if v.fract() != 0.0 || !v.is_finite() {
                return Err(ScenarioError::NotInteger { param: param.key(), value: v });
            }
            Ok(v as i64)
        };
        let as_count = |v: f64| -> Result<u32, ScenarioError> {
            let i = as_int(v)?;
            u32::try_from(i).map_err(|_| ScenarioError::OutOfRange {
                param: param.key(),
                value: v,
                bound: "a non-negative 32-bit count",
            })
        };
        match param {
            ScenarioParam::Regions => s.regions = as_count(value)?,
            ScenarioParam::HospitalsPerRegion => s.hospitals_per_region = as_count(value)?,
            ScenarioParam::MeanVolume => s.mean_volume = as_count(value)?,
            ScenarioParam::TargetRate => s.target_rate = value,
            ScenarioParam::VolumeGap => {
                s.volume_gap = i32::try_from(as_int(value)?).map_err(|_| ScenarioError::OutOfRange {
                    param: param.key(),
                    value,
                    bound: "a 32-bit integer",
                })?
            }
            ScenarioParam::CasemixVolumeCorr => s.casemix_volume_corr = value,
            ScenarioParam::RegionExplainedShare => s.region_explained_share = value,
            ScenarioParam::HospitalExplainedShare => s.hospital_explained_share = value,
            ScenarioParam::CasemixVarianceRatio => s.casemix_variance_ratio = value,
            ScenarioParam::SdRegion => s.sd_region = value,
            ScenarioParam::SdHospital => s.sd_hospital = value,
            ScenarioParam::SdPatient => s.sd_patient = value,
        }
        Ok(s)
    }

    /// Checks every bound on the free parameters.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        use ScenarioParam as P;
        let count = |param: P, v: u32, min: u32, bound: &'static str| {
            if v < min {
                Err(ScenarioError::OutOfRange { param: param.key(), value: v as f64, bound })
            } else {
                Ok(())
            }
        };
        count(P::Regions, self.regions, 1, ">= 1")?;
        count(P::HospitalsPerRegion, self.hospitals_per_region, 1, ">= 1")?;
        count(P::MeanVolume, self.mean_volume, 2, ">= 2")?;

        let real = |param: P, v: f64, ok: bool, bound: &'static str| {
            if ok && v.is_finite() {
                Ok(())
            } else {
                Err(ScenarioError::OutOfRange { param: param.key(), value: v, bound })
            }
        };
        let p = self.target_rate;
        real(P::TargetRate, p, p > 0.0 && p < 1.0, "strictly inside (0, 1)")?;
        let rho = self.casemix_volume_corr;
        real(P::CasemixVolumeCorr, rho, rho > -1.0 && rho < 1.0, "strictly inside (-1, 1)")?;
        let xw = self.region_explained_share;
        real(P::RegionExplainedShare, xw, (0.0..1.0).contains(&xw), "in [0, 1)")?;
        let xn = self.hospital_explained_share;
        real(P::HospitalExplainedShare, xn, (0.0..1.0).contains(&xn), "in [0, 1)")?;
        let xm = self.casemix_variance_ratio;
        real(P::CasemixVarianceRatio, xm, xm >= 0.0, ">= 0")?;
        real(P::SdRegion, self.sd_region, self.sd_region >= 0.0, ">= 0")?;
        real(P::SdHospital, self.sd_hospital, self.sd_hospital > 0.0, "> 0")?;
        real(P::SdPatient, self.sd_patient, self.sd_patient >= 0.0, ">= 0")?;

        if self.volume_gap % 2 != 0 {
            return Err(ScenarioError::OddVolumeGap(self.volume_gap));
        }
        let limit = 4 * (self.mean_volume as i64 - 1);
        if (self.volume_gap as i64).abs() > limit {
            return Err(ScenarioError::VolumeGapTooLarge { gap: self.volume_gap, limit });
        }
        Ok(())
    }
}

/// Returns the scenario unchanged when all bounds hold.
pub fn validate_scenario(s: Scenario) -> Result<Scenario, ScenarioError> {
    s.validate()?;
    Ok(s)
}

/// Names of the free scenario parameters, as spelled in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioParam {
    #[serde(rename = "R")]
    Regions,
    #[serde(rename = "H_bar")]
    HospitalsPerRegion,
    #[serde(rename = "n_bar")]
    MeanVolume,
    #[serde(rename = "p_y_bar")]
    TargetRate,
    #[serde(rename = "delta_n")]
    VolumeGap,
    #[serde(rename = "rho")]
    CasemixVolumeCorr,
    #[serde(rename = "xi_w_eta")]
    RegionExplainedShare,
    #[serde(rename = "xi_n_theta")]
    HospitalExplainedShare,
    #[serde(rename = "xi_theta_mux")]
    CasemixVarianceRatio,
    #[serde(rename = "sigma_eta")]
    SdRegion,
    #[serde(rename = "sigma_theta")]
    SdHospital,
    #[serde(rename = "sigma_x")]
    SdPatient,
}

impl ScenarioParam {
    pub const ALL: [ScenarioParam; 12] = [
        ScenarioParam::Regions,
        ScenarioParam::HospitalsPerRegion,
        ScenarioParam::MeanVolume,
        ScenarioParam::TargetRate,
        ScenarioParam::VolumeGap,
        ScenarioParam::CasemixVolumeCorr,
        ScenarioParam::RegionExplainedShare,
        ScenarioParam::HospitalExplainedShare,
        ScenarioParam::CasemixVarianceRatio,
        ScenarioParam::SdRegion,
        ScenarioParam::SdHospital,
        ScenarioParam::SdPatient,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ScenarioParam::Regions => "R",
            ScenarioParam::HospitalsPerRegion => "H_bar",
            ScenarioParam::MeanVolume => "n_bar",
            ScenarioParam::TargetRate => "p_y_bar",
            ScenarioParam::VolumeGap => "delta_n",
            ScenarioParam::CasemixVolumeCorr => "rho",
            ScenarioParam::RegionExplainedShare => "xi_w_eta",
            ScenarioParam::HospitalExplainedShare => "xi_n_theta",
            ScenarioParam::CasemixVarianceRatio => "xi_theta_mux",
            ScenarioParam::SdRegion => "sigma_eta",
            ScenarioParam::SdHospital => "sigma_theta",
            ScenarioParam::SdPatient => "sigma_x",
        }
    }

    /// The published sweep grid for this parameter, if one exists.
    pub fn preset_grid(self) -> Option<Vec<f64>> {
        let grid: &[f64] = match self {
            ScenarioParam::CasemixVolumeCorr => &[-0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8],
            ScenarioParam::CasemixVarianceRatio => &[0.2, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 5.0, 7.5, 10.0],
            ScenarioParam::HospitalExplainedShare => &[0.01, 0.1, 0.2, 0.4, 0.5, 0.6, 0.8, 0.9, 0.99],
            ScenarioParam::VolumeGap => &[-16.0, -10.0, -6.0, -2.0, 0.0, 2.0, 6.0, 10.0, 16.0],
            ScenarioParam::TargetRate => &[0.03, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5],
            ScenarioParam::SdRegion => &[0.0, 0.1, 0.25, 0.5, 0.75, 1.0, 2.0],
            _ => return None,
        };
        Some(grid.to_vec())
    }
}

impl fmt::Display for ScenarioParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ScenarioParam {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioParam::ALL
            .into_iter()
            .find(|p| p.key() == s)
            .ok_or_else(|| ScenarioError::UnknownParameter(s.to_string()))
    }
}

/// Constants of the data generation process implied by a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    /// Coefficient of the binary region covariate (δ ≥ 0).
    pub region_coef: f64,
    /// Variance of the unexplained region effect (σ_v²).
    pub region_resid_var: f64,
    /// Coefficient of hospital volume (γ ≤ 0).
    pub volume_coef: f64,
    /// Variance of the unexplained hospital effect (σ_u²).
    pub hospital_resid_var: f64,
    /// Maximum hospital volume in regions with `w_r = 0`.
    pub max_volume_w0: u32,
    /// Maximum hospital volume in regions with `w_r = 1`.
    pub max_volume_w1: u32,
    /// Hospital-level variance of the volume (σ_n²).
    pub volume_var: f64,
    /// Slope of the hospital case-mix mean on volume (χ).
    pub casemix_slope: f64,
    /// Residual variance of the hospital case-mix mean (σ_ε²).
    pub casemix_resid_var: f64,
    /// Patient-level probability of living in a `w_r = 1` region (ζ).
    pub patient_share_w1: f64,
    /// Patient-level (size-biased) expectation of hospital volume.
    pub patient_mean_volume: f64,
    /// Intercept calibrated to the target rate by first-order expansion (α).
    pub intercept: f64,
    pub covariate_mean: f64,
    pub covariate_var: f64,
}

impl DerivedParams {
    pub fn max_volume(&self, w: bool) -> u32 {
        if w {
            self.max_volume_w1
        } else {
            self.max_volume_w0
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Computes every derived constant of the data generation process.
pub fn derive_parameters(s: &Scenario) -> Result<DerivedParams, ScenarioError> {
    s.validate()?;
    let sd_w = REGION_COVARIATE_VARIANCE.sqrt();

    // Region level. A zero total region variance would send the ratio below
    // through 0/0 only if the share were 1, which validate() excludes.
    let xi_w = s.region_explained_share;
    let region_resid_var = (1.0 - xi_w) * s.sd_region * s.sd_region;
    let region_coef =
        if s.sd_region == 0.0 { 0.0 } else { (region_resid_var.sqrt() / sd_w) * (xi_w / (1.0 - xi_w)).sqrt() };

    let n_bar = s.mean_volume as f64;
    let half_gap = s.volume_gap as f64 / 2.0;
    let lambda0 = 2.0 * n_bar - 1.0 - half_gap;
    let lambda1 = 2.0 * n_bar - 1.0 + half_gap;
    let volume_var =
        (lambda1 * lambda1 + lambda0 * lambda0 - 2.0) / 24.0 + (lambda1 - lambda0) * (lambda1 - lambda0) / 16.0;

    let xi_n = s.hospital_explained_share;
    let hospital_resid_var = (1.0 - xi_n) * s.sd_hospital * s.sd_hospital;
    let volume_coef = -(hospital_resid_var.sqrt() / volume_var.sqrt()) * (xi_n / (1.0 - xi_n)).sqrt();

    let rho = s.casemix_volume_corr;
    let casemix_resid_var = s.casemix_variance_ratio * (1.0 - rho * rho) * s.sd_hospital * s.sd_hospital;
    let casemix_slope =
        sign(rho) * (casemix_resid_var.sqrt() / volume_var.sqrt()) * (rho * rho / (1.0 - rho * rho)).sqrt();

    let patient_share_w1 = (lambda1 + 1.0) / (lambda0 + lambda1 + 2.0);
    let patient_mean_volume =
        (patient_share_w1 * (2.0 * lambda1 + 1.0) + (1.0 - patient_share_w1) * (2.0 * lambda0 + 1.0)) / 3.0;

    let intercept =
        logit(s.target_rate) - (casemix_slope + volume_coef) * patient_mean_volume - patient_share_w1 * region_coef;

    Ok(DerivedParams {
        region_coef,
        region_resid_var,
        volume_coef,
        hospital_resid_var,
        max_volume_w0: lambda0 as u32,
        max_volume_w1: lambda1 as u32,
        volume_var,
        casemix_slope,
        casemix_resid_var,
        patient_share_w1,
        patient_mean_volume,
        intercept,
        covariate_mean: REGION_COVARIATE_MEAN,
        covariate_var: REGION_COVARIATE_VARIANCE,
    })
}
