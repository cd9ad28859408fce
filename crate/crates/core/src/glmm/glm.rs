//! Logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};

use crate::stats::{bernoulli_loglik, inv_logit};

use super::data::ModelData;
use super::{FitOptions, FitStatus};

#[derive(Debug, Clone)]
pub(crate) struct IrlsOutcome {
    pub beta: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub status: FitStatus,
    /// Infinity norm of the score divided by the number of patients.
    pub gradient_norm: f64,
    /// Fisher information `X'WX` at the final estimate.
    pub information: DMatrix<f64>,
    pub trace: Vec<f64>,
}

struct Pass {
    loglik: f64,
    score: DVector<f64>,
    information: DMatrix<f64>,
}

fn pass(data: &ModelData, beta: &[f64]) -> Pass {
    let p = data.p();
    let mut score = DVector::zeros(p);
    let mut information = DMatrix::zeros(p, p);
    let mut loglik = 0.0;
    for i in 0..data.n() {
        let row = data.row(i);
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let mu = inv_logit(eta);
        let w = mu * (1.0 - mu);
        let resid = data.y[i] as u8 as f64 - mu;
        loglik += bernoulli_loglik(data.y[i], eta);
        for j in 0..p {
            score[j] += resid * row[j];
            for k in 0..=j {
                information[(j, k)] += w * row[j] * row[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            information[(k, j)] = information[(j, k)];
        }
    }
    Pass { loglik, score, information }
}

/// Maximum-likelihood fit of `logit P(y=1) = X β`.
pub(crate) fn irls(data: &ModelData, opts: &FitOptions) -> IrlsOutcome {
    let p = data.p();
    let events = data.y.iter().filter(|&&y| y).count();
    let mut beta = vec![0.0; p];
    if events == 0 || events == data.n() {
        let current = pass(data, &beta);
        return IrlsOutcome {
            beta,
            loglik: current.loglik,
            iterations: 0,
            status: FitStatus::Separation,
            gradient_norm: current.score.amax() / data.n() as f64,
            information: current.information,
            trace: vec![current.loglik],
        };
    }
    let rate = events as f64 / data.n() as f64;
    if let Some(j) = data.terms.iter().position(|t| *t == super::Term::Intercept) {
        beta[j] = (rate / (1.0 - rate)).ln();
    }

    let mut current = pass(data, &beta);
    let mut trace = vec![current.loglik];
    let mut status = FitStatus::NotConverged;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let Some(chol) = current.information.clone().cholesky() else {
            status = FitStatus::Separation;
            break;
        };
        let step = chol.solve(&current.score);
        let mut scale = 1.0;
        let mut next_beta;
        let mut next;
        loop {
            next_beta = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect::<Vec<_>>();
            next = pass(data, &next_beta);
            if next.loglik >= current.loglik - 1e-12 * current.loglik.abs() || scale < 1e-10 {
                break;
            }
            scale *= 0.5;
        }
        let change = (next.loglik - current.loglik).abs() / current.loglik.abs().max(1e-300);
        beta = next_beta;
        current = next;
        trace.push(current.loglik);
        if beta.iter().any(|b| b.abs() > opts.separation_bound) {
            status = FitStatus::Separation;
            break;
        }
        if change < opts.rel_tol || current.score.amax() / data.n() as f64 <= opts.grad_tol {
            status = FitStatus::Converged;
            break;
        }
    }
    IrlsOutcome {
        beta,
        loglik: current.loglik,
        iterations,
        status,
        gradient_norm: current.score.amax() / data.n() as f64,
        information: current.information,
        trace,
    }
}
