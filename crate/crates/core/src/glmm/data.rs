use crate::dgp::Dataset;
use crate::error::FitError;

use super::{ModelForm, Term};

/// Patients clustered in hospitals clustered in regions, reduced to what the
/// estimators need. Hospital `h` lies in region `hospital_region[h]` and all
/// of its patients are assumed to live there.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredData {
    pub y: Vec<bool>,
    pub x: Vec<f64>,
    pub patient_hospital: Vec<usize>,
    pub hospital_region: Vec<usize>,
    pub hospital_volume: Vec<f64>,
    pub region_covariate: Vec<f64>,
}

impl ClusteredData {
    pub fn from_dataset(ds: &Dataset) -> Self {
        ClusteredData {
            y: ds.patients.iter().map(|p| p.y).collect(),
            x: ds.patients.iter().map(|p| p.x).collect(),
            patient_hospital: ds.patients.iter().map(|p| p.hospital).collect(),
            hospital_region: ds.hospitals.iter().map(|h| h.region.0).collect(),
            hospital_volume: ds.hospitals.iter().map(|h| h.volume as f64).collect(),
            region_covariate: ds.regions.iter().map(|r| r.covariate()).collect(),
        }
    }

    pub fn patients(&self) -> usize {
        self.y.len()
    }

    pub fn hospitals(&self) -> usize {
        self.hospital_region.len()
    }

    pub fn regions(&self) -> usize {
        self.region_covariate.len()
    }

    fn check(&self) -> Result<(), FitError> {
        let n = self.y.len();
        if n == 0 {
            return Err(FitError::Empty);
        }
        if self.x.len() != n || self.patient_hospital.len() != n {
            return Err(FitError::Inconsistent("patient vectors differ in length".into()));
        }
        if self.hospital_volume.len() != self.hospital_region.len() {
            return Err(FitError::Inconsistent("hospital vectors differ in length".into()));
        }
        if let Some(&h) = self.patient_hospital.iter().find(|&&h| h >= self.hospitals()) {
            return Err(FitError::Inconsistent(format!("patient assigned to missing hospital {h}")));
        }
        if let Some(&r) = self.hospital_region.iter().find(|&&r| r >= self.regions()) {
            return Err(FitError::Inconsistent(format!("hospital assigned to missing region {r}")));
        }
        Ok(())
    }
}

/// Design matrix and cluster indices for one model form.
#[derive(Debug, Clone)]
pub(crate) struct ModelData {
    pub terms: Vec<Term>,
    pub dropped: Vec<Term>,
    /// Per-term centre and scale applied to the design columns.
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    /// Row-major `n × terms.len()`.
    pub design: Vec<f64>,
    pub y: Vec<bool>,
    pub hospital_region: Vec<usize>,
    pub hospital_patients: Vec<Vec<usize>>,
    pub region_hospitals: Vec<Vec<usize>>,
}

impl ModelData {
    /// With `standardize`, non-intercept columns are centred and scaled to unit
    /// standard deviation.
    pub fn build(data: &ClusteredData, form: ModelForm, standardize: bool) -> Result<Self, FitError> {
        data.check()?;
        let n = data.patients();
        let candidates = form.terms();
        let column = |term: Term, i: usize| -> f64 {
            let h = data.patient_hospital[i];
            match term {
                Term::Intercept => 1.0,
                Term::RiskFactor => data.x[i],
                Term::Volume => data.hospital_volume[h],
                Term::RegionCovariate => data.region_covariate[data.hospital_region[h]],
            }
        };
        let mut terms = Vec::new();
        let mut dropped = Vec::new();
        for &term in candidates {
            let first = column(term, 0);
            let constant = (1..n).all(|i| column(term, i) == first);
            if term != Term::Intercept && constant {
                dropped.push(term);
            } else {
                terms.push(term);
            }
        }
        let mut center = vec![0.0; terms.len()];
        let mut scale = vec![1.0; terms.len()];
        if standardize {
            for (j, &t) in terms.iter().enumerate().filter(|(_, t)| **t != Term::Intercept) {
                let values: Vec<f64> = (0..n).map(|i| column(t, i)).collect();
                center[j] = crate::stats::mean(&values);
                let var = values.iter().map(|v| (v - center[j]).powi(2)).sum::<f64>() / n as f64;
                scale[j] = var.sqrt();
            }
        }
        let mut design = Vec::with_capacity(n * terms.len());
        for i in 0..n {
            for (j, &t) in terms.iter().enumerate() {
                design.push((column(t, i) - center[j]) / scale[j]);
            }
        }
        let mut hospital_patients = vec![Vec::new(); data.hospitals()];
        for (i, &h) in data.patient_hospital.iter().enumerate() {
            hospital_patients[h].push(i);
        }
        let mut region_hospitals = vec![Vec::new(); data.regions()];
        for (h, &r) in data.hospital_region.iter().enumerate() {
            region_hospitals[r].push(h);
        }
        Ok(ModelData {
            terms,
            dropped,
            center,
            scale,
            design,
            y: data.y.clone(),
            hospital_region: data.hospital_region.clone(),
            hospital_patients,
            region_hospitals,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.terms.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.design[i * p..(i + 1) * p]
    }

    /// Maps coefficients of the transformed design back to the raw columns.
    pub fn unstandardize(&self, beta: &[f64]) -> Vec<f64> {
        let mut raw: Vec<f64> = beta.iter().zip(&self.scale).map(|(b, s)| b / s).collect();
        let shift: f64 = raw.iter().zip(&self.center).map(|(b, c)| b * c).sum();
        if let Some(j) = self.terms.iter().position(|t| *t == Term::Intercept) {
            raw[j] -= shift;
        }
        raw
    }

    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum()).collect()
    }
}
