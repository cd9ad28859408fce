//! Laplace-approximated marginal likelihood for logistic models with a
//! hospital random intercept and an optional region random intercept.
//!
//! Parameters are `θ = (β, log σ_u², [log σ_v²])`. For fixed `θ` the joint
//! log density is maximized over the random effects. Patients only touch the
//! effects of their own hospital and region, so the negative Hessian is block
//! diagonal by region; within a region block it is an arrow matrix
//!
//! ```text
//! [ diag(a_h)  b ]     a_h = W_h + 1/σ_u²,  b_h = W_h
//! [ b'         c ]     c   = Σ_h W_h + 1/σ_v²
//! ```
//!
//! where `W_h` sums `μ(1-μ)` over the hospital's patients. Every solve,
//! inverse entry and determinant reduces to the Schur complement
//! `S = c - Σ b_h²/a_h`.
//!
//! The gradient is the total derivative of the Laplace value: the explicit
//! partials of the joint density (the mode condition removes the implicit
//! part there) minus half the derivative of `log det H`, which does depend on
//! the mode through the weights; `dû/dθ` comes from the implicit function
//! theorem.

use crate::stats::{bernoulli_loglik, inv_logit};

use super::data::ModelData;

pub(crate) const INNER_MAX_ITERATIONS: usize = 100;
const INNER_STEP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Modes {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl Modes {
    pub fn zeros(hospitals: usize, regions: usize) -> Self {
        Modes { u: vec![0.0; hospitals], v: vec![0.0; regions] }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LaplaceEval {
    pub value: f64,
    pub gradient: Vec<f64>,
}

pub(crate) struct LaplaceModel<'a> {
    pub data: &'a ModelData,
    pub region_effects: bool,
}

struct BlockState {
    f: f64,
    grad_u: Vec<f64>,
    weight: Vec<f64>,
    grad_v: f64,
}

/// Solution of the arrow system for one region block.
struct Arrow<'s> {
    a: Vec<f64>,
    b: &'s [f64],
    schur: Option<f64>,
}

impl<'s> Arrow<'s> {
    fn new(weight: &'s [f64], var_u: f64, var_v: Option<f64>) -> Self {
        let a: Vec<f64> = weight.iter().map(|w| w + 1.0 / var_u).collect();
        let schur = var_v.map(|sv| {
            let c: f64 = weight.iter().sum::<f64>() + 1.0 / sv;
            c - weight.iter().zip(&a).map(|(b, a)| b * b / a).sum::<f64>()
        });
        Arrow { a, b: weight, schur }
    }

    fn solve(&self, rhs_u: &[f64], rhs_v: f64) -> (Vec<f64>, f64) {
        match self.schur {
            Some(s) => {
                let coupled: f64 = self.b.iter().zip(rhs_u).zip(&self.a).map(|((b, r), a)| b * r / a).sum();
                let dv = (rhs_v - coupled) / s;
                let du = rhs_u.iter().zip(self.b).zip(&self.a).map(|((r, b), a)| (r - b * dv) / a).collect();
                (du, dv)
            }
            None => (rhs_u.iter().zip(&self.a).map(|(r, a)| r / a).collect(), 0.0),
        }
    }

    /// `Z_i' H⁻¹ Z_i` for a patient of the k-th hospital of the block.
    fn leverage(&self, k: usize) -> f64 {
        let a = self.a[k];
        match self.schur {
            Some(s) => 1.0 / a + (1.0 - self.b[k] / a).powi(2) / s,
            None => 1.0 / a,
        }
    }

    /// Diagonal entry of `H⁻¹` for the k-th hospital effect.
    fn inverse_diag_u(&self, k: usize) -> f64 {
        let a = self.a[k];
        match self.schur {
            Some(s) => 1.0 / a + (self.b[k] / a).powi(2) / s,
            None => 1.0 / a,
        }
    }
}

impl<'a> LaplaceModel<'a> {
    pub fn dim(&self) -> usize {
        self.data.p() + 1 + self.region_effects as usize
    }

    fn variances(&self, theta: &[f64]) -> (f64, Option<f64>) {
        let p = self.data.p();
        let var_u = theta[p].exp();
        let var_v = self.region_effects.then(|| theta[p + 1].exp());
        (var_u, var_v)
    }

    fn block_state(
        &self,
        region: usize,
        offsets: &[f64],
        u: &[f64],
        v: f64,
        var_u: f64,
        var_v: Option<f64>,
    ) -> BlockState {
        let hospitals = &self.data.region_hospitals[region];
        let mut f = 0.0;
        let mut grad_u = Vec::with_capacity(hospitals.len());
        let mut weight = Vec::with_capacity(hospitals.len());
        let mut resid_total = 0.0;
        for (k, &h) in hospitals.iter().enumerate() {
            let mut resid = 0.0;
            let mut w = 0.0;
            for &i in &self.data.hospital_patients[h] {
                let eta = offsets[i] + u[k] + v;
                let mu = inv_logit(eta);
                f += bernoulli_loglik(self.data.y[i], eta);
                resid += self.data.y[i] as u8 as f64 - mu;
                w += mu * (1.0 - mu);
            }
            f -= 0.5 * u[k] * u[k] / var_u;
            grad_u.push(resid - u[k] / var_u);
            weight.push(w);
            resid_total += resid;
        }
        let grad_v = match var_v {
            Some(sv) => {
                f -= 0.5 * v * v / sv;
                resid_total - v / sv
            }
            None => 0.0,
        };
        BlockState { f, grad_u, weight, grad_v }
    }

    /// Newton's method on one region block.
    fn solve_block(&self, region: usize, offsets: &[f64], modes: &mut Modes, var_u: f64, var_v: Option<f64>) {
        let hospitals = &self.data.region_hospitals[region];
        let mut u: Vec<f64> = hospitals.iter().map(|&h| modes.u[h]).collect();
        let mut v = if var_v.is_some() { modes.v[region] } else { 0.0 };
        let mut state = self.block_state(region, offsets, &u, v, var_u, var_v);
        let mut iterations = 0;
        while iterations < INNER_MAX_ITERATIONS {
            iterations += 1;
            let arrow = Arrow::new(&state.weight, var_u, var_v);
            let (du, dv) = arrow.solve(&state.grad_u, state.grad_v);
            let mut scale = 1.0;
            let (next_u, next_v, next) = loop {
                let cu: Vec<f64> = u.iter().zip(&du).map(|(a, d)| a + scale * d).collect();
                let cv = v + scale * dv;
                let cand = self.block_state(region, offsets, &cu, cv, var_u, var_v);
                if cand.f >= state.f - 1e-13 * state.f.abs().max(1.0) || scale < 1e-8 {
                    break (cu, cv, cand);
                }
                scale *= 0.5;
            };
            let step = du.iter().map(|d| (scale * d).abs()).fold((scale * dv).abs(), f64::max);
            u = next_u;
            v = next_v;
            state = next;
            if step < INNER_STEP_TOL {
                break;
            }
        }
        for (k, &h) in hospitals.iter().enumerate() {
            modes.u[h] = u[k];
        }
        if var_v.is_some() {
            modes.v[region] = v;
        }
    }

    /// Laplace value and (optionally) its gradient at `theta`. `modes` is
    /// used as the starting point of the inner optimization and receives
    /// the posterior modes.
    pub fn evaluate(&self, theta: &[f64], modes: &mut Modes, with_gradient: bool) -> LaplaceEval {
        let data = self.data;
        let p = data.p();
        let beta = &theta[..p];
        let (var_u, var_v) = self.variances(theta);
        let offsets = data.linear_predictor(beta);
        if var_v.is_none() {
            modes.v.iter_mut().for_each(|v| *v = 0.0);
        }

        for r in 0..data.region_hospitals.len() {
            self.solve_block(r, &offsets, modes, var_u, var_v);
        }

        // Per-hospital sums at the modes.
        let hospitals = data.hospital_patients.len();
        let mut weight = vec![0.0; hospitals];
        let mut weight_deriv = vec![0.0; hospitals];
        let mut weight_x = vec![0.0; hospitals * p];
        let mut weight_deriv_x = vec![0.0; hospitals * p];
        let mut score = vec![0.0; p];
        let mut loglik = 0.0;
        for (h, members) in data.hospital_patients.iter().enumerate() {
            let region_effect = if var_v.is_some() { modes.v[data.hospital_region[h]] } else { 0.0 };
            for &i in members {
                let eta = offsets[i] + modes.u[h] + region_effect;
                let mu = inv_logit(eta);
                let w = mu * (1.0 - mu);
                let wd = w * (1.0 - 2.0 * mu);
                loglik += bernoulli_loglik(data.y[i], eta);
                weight[h] += w;
                weight_deriv[h] += wd;
                let resid = data.y[i] as u8 as f64 - mu;
                let row = data.row(i);
                for j in 0..p {
                    weight_x[h * p + j] += w * row[j];
                    weight_deriv_x[h * p + j] += wd * row[j];
                    score[j] += resid * row[j];
                }
            }
        }

        let mut value = loglik;
        value -= 0.5 * modes.u.iter().map(|u| u * u).sum::<f64>() / var_u;
        value -= 0.5 * weight.iter().map(|w| (var_u * w).ln_1p()).sum::<f64>();
        if let Some(sv) = var_v {
            value -= 0.5 * modes.v.iter().map(|v| v * v).sum::<f64>() / sv;
            for block in &data.region_hospitals {
                let shrunk: f64 = block.iter().map(|&h| weight[h] / (1.0 + var_u * weight[h])).sum();
                value -= 0.5 * (sv * shrunk).ln_1p();
            }
        }

        let mut gradient = Vec::new();
        if with_gradient {
            let dim = self.dim();
            // Explicit partials of the joint log density.
            gradient = vec![0.0; dim];
            gradient[..p].copy_from_slice(&score);
            let sum_u2: f64 = modes.u.iter().map(|u| u * u).sum();
            gradient[p] = 0.5 * sum_u2 / var_u - 0.5 * hospitals as f64;
            if let Some(sv) = var_v {
                let sum_v2: f64 = modes.v.iter().map(|v| v * v).sum();
                gradient[p + 1] = 0.5 * sum_v2 / sv - 0.5 * data.region_hospitals.len() as f64;
            }

            // d log det H / dθ_j, accumulated block by block.
            let mut trace = vec![0.0; dim];
            for (r, block) in data.region_hospitals.iter().enumerate() {
                let w_block: Vec<f64> = block.iter().map(|&h| weight[h]).collect();
                let arrow = Arrow::new(&w_block, var_u, var_v);
                let leverage: Vec<f64> = (0..block.len()).map(|k| arrow.leverage(k)).collect();
                let mut rhs_u = vec![0.0; block.len()];
                for j in 0..dim {
                    let rhs_v;
                    if j < p {
                        for (k, &h) in block.iter().enumerate() {
                            rhs_u[k] = -weight_x[h * p + j];
                        }
                        rhs_v = rhs_u.iter().sum();
                    } else if j == p {
                        for (k, &h) in block.iter().enumerate() {
                            rhs_u[k] = modes.u[h] / var_u;
                        }
                        rhs_v = 0.0;
                    } else {
                        rhs_u.iter_mut().for_each(|x| *x = 0.0);
                        rhs_v = modes.v[r] / var_v.expect("region variance present");
                    }
                    let (du, dv) = arrow.solve(&rhs_u, rhs_v);
                    let mut t = 0.0;
                    for (k, &h) in block.iter().enumerate() {
                        let direct = if j < p { weight_deriv_x[h * p + j] } else { 0.0 };
                        t += leverage[k] * (direct + (du[k] + dv) * weight_deriv[h]);
                    }
                    if j == p {
                        t -= (0..block.len()).map(|k| arrow.inverse_diag_u(k)).sum::<f64>() / var_u;
                    } else if j == p + 1 {
                        let sv = var_v.expect("region variance present");
                        t -= 1.0 / (arrow.schur.expect("arrow has region row") * sv);
                    }
                    trace[j] += t;
                }
            }
            for j in 0..dim {
                gradient[j] -= 0.5 * trace[j];
            }
        }

        LaplaceEval { value, gradient }
    }
}
