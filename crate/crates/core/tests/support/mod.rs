//! Independent reference routines used by the integration and acceptance
//! tests. Nothing here calls into the estimation code it is compared with.

#![allow(dead_code)]

use mqi::dgp::Dataset;
use mqi::glmm::{ClusteredData, FitParts};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn log_sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        -(-eta).exp().ln_1p()
    } else {
        eta - eta.exp().ln_1p()
    }
}

fn loglik(y: bool, eta: f64) -> f64 {
    if y {
        log_sigmoid(eta)
    } else {
        log_sigmoid(-eta)
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Gauss-Hermite nodes and weights for the weight `exp(-t²)` via
/// Golub-Welsch.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 1..n {
        let off = (k as f64 / 2.0).sqrt();
        jacobi[(k, k - 1)] = off;
        jacobi[(k - 1, k)] = off;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// `log ∫ exp(f(z)) dz` by adaptive Gauss-Hermite quadrature centred at
/// the mode of `f` and scaled by its curvature. `f` must be unimodal.
pub fn adaptive_gh<F: Fn(f64) -> f64>(f: F, nodes: &(Vec<f64>, Vec<f64>)) -> f64 {
    // golden-section search for the mode
    let (mut lo, mut hi) = (-15.0_f64, 15.0_f64);
    let g = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    let mode = 0.5 * (lo + hi);
    let h = 1e-3;
    let curv = -(f(mode + h) - 2.0 * f(mode) + f(mode - h)) / (h * h);
    let scale = (2.0 / curv).sqrt();
    let terms: Vec<f64> = nodes.0.iter().zip(&nodes.1).map(|(t, w)| w.ln() + t * t + f(mode + scale * t)).collect();
    scale.ln() + log_sum_exp(&terms)
}

fn log_normal_pdf(z: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * z * z / var
}

/// Marginal log-likelihood of a logistic model with linear predictor
/// `offset_i + u_h + v_r` by nested adaptive quadrature: hospital effects are
/// integrated for each value of the region effect, which is integrated last.
/// `var_v = None` removes the region effect.
pub fn nested_quadrature_loglik(
    data: &ClusteredData,
    offsets: &[f64],
    var_u: f64,
    var_v: Option<f64>,
    n_nodes: usize,
) -> f64 {
    let nodes = gauss_hermite(n_nodes);
    let hospital_members: Vec<Vec<usize>> = (0..data.hospital_region.len())
        .map(|h| (0..data.y.len()).filter(|&i| data.patient_hospital[i] == h).collect())
        .collect();
    let hospital_log_marginal = |h: usize, v: f64| -> f64 {
        let members = &hospital_members[h];
        adaptive_gh(
            |u| log_normal_pdf(u, var_u) + members.iter().map(|&i| loglik(data.y[i], offsets[i] + u + v)).sum::<f64>(),
            &nodes,
        )
    };
    let mut total = 0.0;
    for r in 0..data.region_covariate.len() {
        let hs: Vec<usize> = (0..data.hospital_region.len()).filter(|&h| data.hospital_region[h] == r).collect();
        match var_v {
            Some(sv) => {
                total += adaptive_gh(
                    |v| log_normal_pdf(v, sv) + hs.iter().map(|&h| hospital_log_marginal(h, v)).sum::<f64>(),
                    &nodes,
                );
            }
            None => total += hs.iter().map(|&h| hospital_log_marginal(h, 0.0)).sum::<f64>(),
        }
    }
    total
}

/// Logistic log-likelihood of `b0 + b1 x`.
pub fn glm_loglik(y: &[bool], x: &[f64], b0: f64, b1: f64) -> f64 {
    y.iter().zip(x).map(|(&yi, &xi)| loglik(yi, b0 + b1 * xi)).sum()
}

/// Maximizes the logistic log-likelihood by repeated grid refinement.
pub fn grid_search_glm(y: &[bool], x: &[f64]) -> (f64, f64) {
    let mut center = (0.0, 0.0);
    let mut half = 8.0;
    for _ in 0..45 {
        let mut best = (f64::NEG_INFINITY, center);
        for i in -10..=10 {
            for j in -10..=10 {
                let b = (center.0 + half * i as f64 / 10.0, center.1 + half * j as f64 / 10.0);
                let ll = glm_loglik(y, x, b.0, b.1);
                if ll > best.0 {
                    best = (ll, b);
                }
            }
        }
        center = best.1;
        half *= 0.25;
    }
    center
}

/// A random tiny clustered instance: `regions × hospitals_per_region`
/// hospitals with `patients_per_hospital` patients each.
pub fn tiny_instance(
    seed: u64,
    regions: usize,
    hospitals_per_region: usize,
    patients_per_hospital: usize,
) -> ClusteredData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hospitals = regions * hospitals_per_region;
    let hospital_region: Vec<usize> = (0..hospitals).map(|h| h / hospitals_per_region).collect();
    let hospital_volume: Vec<f64> = (0..hospitals).map(|_| rng.random_range(1..=12) as f64).collect();
    let mut region_covariate: Vec<f64> = (0..regions).map(|r| (r % 2) as f64).collect();
    if regions == 1 {
        region_covariate[0] = 1.0;
    }
    let sd = 0.125_f64.sqrt();
    let v: Vec<f64> = (0..regions).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    let u: Vec<f64> = (0..hospitals).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut patient_hospital = Vec::new();
    for h in 0..hospitals {
        for _ in 0..patients_per_hospital {
            let xi = 0.7 * rng.sample::<f64, _>(StandardNormal);
            let eta = -0.4 + xi - 0.05 * hospital_volume[h]
                + 0.3 * region_covariate[hospital_region[h]]
                + u[h]
                + v[hospital_region[h]];
            let p = 1.0 / (1.0 + (-eta).exp());
            y.push(rng.random::<f64>() < p);
            x.push(xi);
            patient_hospital.push(h);
        }
    }
    ClusteredData { y, x, patient_hospital, hospital_region, hospital_volume, region_covariate }
}

/// Offsets `X β` for the given terms, computed directly from the raw data.
pub fn offsets(data: &ClusteredData, terms: &[mqi::glmm::Term], beta: &[f64]) -> Vec<f64> {
    use mqi::glmm::Term;
    (0..data.y.len())
        .map(|i| {
            let h = data.patient_hospital[i];
            terms
                .iter()
                .zip(beta)
                .map(|(t, b)| {
                    b * match t {
                        Term::Intercept => 1.0,
                        Term::RiskFactor => data.x[i],
                        Term::Volume => data.hospital_volume[h],
                        Term::RegionCovariate => data.region_covariate[data.hospital_region[h]],
                    }
                })
                .sum()
        })
        .collect()
}

pub fn expit(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// SHOR of hospital `h` by an explicit loop over every patient.
pub fn shor_oracle(ds: &Dataset, p: &FitParts, h: usize, include_region: bool) -> f64 {
    let mut sum = 0.0;
    for patient in &ds.patients {
        let mut t = p.intercept + p.risk_factor * patient.x;
        t += p.volume * ds.hospitals[h].volume as f64 + p.hospital_effects[h];
        if include_region {
            let r = patient.region.0;
            let w = if ds.regions[r].w { 1.0 } else { 0.0 };
            t += p.region_covariate * w + p.region_effects[r];
        }
        sum += expit(t);
    }
    sum / ds.patients.len() as f64
}

/// RSPOR of region `r` by an explicit double loop over hospitals and
/// patients.
pub fn rspor_oracle(ds: &Dataset, p: &FitParts, r: usize) -> f64 {
    let mut residents = 0usize;
    let mut total = 0.0;
    for (h, hosp) in ds.hospitals.iter().enumerate() {
        let n_rh = ds.patients.iter().filter(|q| q.hospital == h && q.region.0 == r).count();
        if n_rh == 0 {
            continue;
        }
        residents += n_rh;
        let w = if ds.regions[r].w { 1.0 } else { 0.0 };
        let mut rate = 0.0;
        for q in &ds.patients {
            rate += expit(
                p.intercept
                    + p.risk_factor * q.x
                    + p.volume * hosp.volume as f64
                    + p.hospital_effects[h]
                    + p.region_covariate * w
                    + p.region_effects[r],
            );
        }
        total += n_rh as f64 * rate / ds.patients.len() as f64;
    }
    total / residents as f64
}
