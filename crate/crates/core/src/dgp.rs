//! Synthetic datasets: regions, hospitals nested in regions, and patients
//! treated at hospitals in their own region of residence.

use std::io::Write;
use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::format::sig6;
use crate::rng::StreamSeed;
use crate::scenario::{derive_parameters, DerivedParams, Scenario};
use crate::stats::inv_logit;

/// Index of a hospital region `s` (where a hospital is located).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HospitalRegionId(pub usize);

/// Index of a patient region `r` (where a patient lives).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatientRegionId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub id: usize,
    pub w: bool,
    pub v: f64,
    pub eta: f64,
}

impl Region {
    pub fn covariate(&self) -> f64 {
        if self.w {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hospital {
    pub id: usize,
    pub region: HospitalRegionId,
    pub volume: u32,
    pub u: f64,
    pub theta: f64,
    pub epsilon: f64,
    pub mu_x: f64,
    /// Index of this hospital's first patient in [`Dataset::patients`].
    pub first_patient: usize,
}

impl Hospital {
    pub fn patient_range(&self) -> Range<usize> {
        self.first_patient..self.first_patient + self.volume as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patient {
    pub region: PatientRegionId,
    pub hospital: usize,
    /// Position within the hospital, `0..n^h`.
    pub index: u32,
    pub x: f64,
    pub p_y: f64,
    pub y: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scenario: Scenario,
    pub derived: DerivedParams,
    pub regions: Vec<Region>,
    /// Hospitals ordered by region, `hospitals_per_region` consecutive
    /// entries per region.
    pub hospitals: Vec<Hospital>,
    /// Patients ordered by hospital.
    pub patients: Vec<Patient>,
    pub seed: StreamSeed,
}

impl Dataset {
    pub fn patient_count(&self) -> usize {
        self.patients.len()
    }

    pub fn hospital_patients(&self, h: usize) -> &[Patient] {
        &self.patients[self.hospitals[h].patient_range()]
    }

    /// Hospitals located in hospital region `s`.
    pub fn hospitals_in(&self, s: HospitalRegionId) -> impl Iterator<Item = &Hospital> {
        self.hospitals.iter().filter(move |h| h.region == s)
    }

    /// Hospitals that treated residents of patient region `r`, with the
    /// number of such residents each treated.
    pub fn hospitals_treating(&self, r: PatientRegionId) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for hosp in &self.hospitals {
            let count = self.hospital_patients(hosp.id).iter().filter(|p| p.region == r).count();
            if count > 0 {
                out.push((hosp.id, count));
            }
        }
        out
    }

    pub fn outcome_mean(&self) -> f64 {
        self.patients.iter().filter(|p| p.y).count() as f64 / self.patients.len() as f64
    }

    /// Writes the flat patient-level dump, one row per patient.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("writing dataset csv", e);
        writeln!(out, "replication,region,w_r,v_r,eta_r,hospital,n_h,u_h,theta_h,mu_x_h,patient,x,p_y,y")
            .map_err(io)?;
        for p in &self.patients {
            let h = &self.hospitals[p.hospital];
            let r = &self.regions[p.region.0];
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.seed.replication,
                r.id,
                r.w as u8,
                sig6(r.v),
                sig6(r.eta),
                h.id,
                h.volume,
                sig6(h.u),
                sig6(h.theta),
                sig6(h.mu_x),
                p.index,
                sig6(p.x),
                sig6(p.p_y),
                p.y as u8
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sd * z
}

/// Draws `R` regions with `w_r ~ Ber(0.5)` and `v_r ~ N(0, σ_v²)`.
pub fn generate_regions<R: Rng + ?Sized>(s: &Scenario, d: &DerivedParams, rng: &mut R) -> Vec<Region> {
    let sd_v = d.region_resid_var.sqrt();
    (0..s.regions as usize)
        .map(|id| {
            let w = rng.random::<f64>() < d.covariate_mean;
            let v = normal(rng, sd_v);
            let eta = d.region_coef * if w { 1.0 } else { 0.0 } + v;
            Region { id, w, v, eta }
        })
        .collect()
}

/// Inverse-transform draw from the discrete uniform on `1..=max`.
pub fn draw_volume<R: Rng + ?Sized>(rng: &mut R, max: u32) -> u32 {
    let u: f64 = rng.random();
    ((u * max as f64).floor() as u32 + 1).min(max)
}

/// Draws `H̄` hospitals per region. `first_patient` offsets assume patients
/// are laid out hospital by hospital.
pub fn generate_hospitals<R: Rng + ?Sized>(
    s: &Scenario,
    d: &DerivedParams,
    regions: &[Region],
    rng: &mut R,
) -> Vec<Hospital> {
    let sd_u = d.hospital_resid_var.sqrt();
    let sd_eps = d.casemix_resid_var.sqrt();
    let mut hospitals = Vec::with_capacity(regions.len() * s.hospitals_per_region as usize);
    let mut first_patient = 0;
    for region in regions {
        let max = d.max_volume(region.w);
        for _ in 0..s.hospitals_per_region {
            let volume = draw_volume(rng, max);
            let u = normal(rng, sd_u);
            let epsilon = normal(rng, sd_eps);
            let n = volume as f64;
            hospitals.push(Hospital {
                id: hospitals.len(),
                region: HospitalRegionId(region.id),
                volume,
                u,
                theta: d.volume_coef * n + u,
                epsilon,
                mu_x: d.casemix_slope * n + epsilon,
                first_patient,
            });
            first_patient += volume as usize;
        }
    }
    hospitals
}

/// Linear predictor of the outcome model used by the generator.
pub fn true_linear_predictor(intercept: f64, x: f64, theta: f64, eta: f64) -> f64 {
    intercept + x + theta + eta
}

/// Draws `n^h` patients per hospital with `x ~ N(μ_x^h, σ_x²)` and
/// `y ~ Ber(logit⁻¹(α + x + θ^h + η_r))`.
pub fn generate_patients<R: Rng + ?Sized>(
    s: &Scenario,
    d: &DerivedParams,
    hospitals: &[Hospital],
    regions: &[Region],
    rng: &mut R,
) -> Vec<Patient> {
    let total: usize = hospitals.iter().map(|h| h.volume as usize).sum();
    let mut patients = Vec::with_capacity(total);
    for hosp in hospitals {
        debug_assert_eq!(hosp.first_patient, patients.len());
        // all residents are treated in their home region
        let region = &regions[hosp.region.0];
        for index in 0..hosp.volume {
            let x = hosp.mu_x + normal(rng, s.sd_patient);
            let p_y = inv_logit(true_linear_predictor(d.intercept, x, hosp.theta, region.eta));
            let y = rng.random::<f64>() < p_y;
            patients.push(Patient { region: PatientRegionId(region.id), hospital: hosp.id, index, x, p_y, y });
        }
    }
    patients
}

/// Generates a complete dataset; a pure function of `(scenario, seed)`.
pub fn generate_dataset(s: &Scenario, seed: StreamSeed) -> Result<Dataset> {
    let derived = derive_parameters(s)?;
    let mut rng = seed.rng();
    let regions = generate_regions(s, &derived, &mut rng);
    let hospitals = generate_hospitals(s, &derived, &regions, &mut rng);
    let patients = generate_patients(s, &derived, &hospitals, &regions, &mut rng);
    Ok(Dataset { scenario: *s, derived, regions, hospitals, patients, seed })
}
