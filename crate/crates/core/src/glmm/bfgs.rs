//! Dense BFGS minimizer with backtracking Armijo line search and box clamps.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct BfgsSettings {
    pub max_iterations: usize,
    pub grad_tol: f64,
    pub rel_tol: f64,
    /// Gradient bound that must also hold when stopping on a small
    /// relative change of the objective.
    pub stall_grad_tol: f64,
    /// Gradients are divided by this before comparison with the tolerances.
    pub gradient_scale: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct BfgsOutcome {
    pub x: Vec<f64>,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

/// Minimizes `f`, which returns the value and gradient at a point.
pub(crate) fn minimize<F>(mut f: F, x0: Vec<f64>, inv_hessian0: DMatrix<f64>, cfg: &BfgsSettings) -> BfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let clamp = |x: &mut DVector<f64>| {
        for i in 0..x.len() {
            x[i] = x[i].clamp(cfg.lower[i], cfg.upper[i]);
        }
    };
    let mut x = DVector::from_vec(x0);
    clamp(&mut x);
    let (mut fx, g) = f(x.as_slice());
    let mut g = DVector::from_vec(g);
    let mut h = inv_hessian0.clone();
    let mut trace = vec![fx];
    let scaled = |g: &DVector<f64>| inf_norm(g) / cfg.gradient_scale;
    let mut converged = scaled(&g) <= cfg.grad_tol;
    let mut iterations = 0;

    while !converged && iterations < cfg.max_iterations {
        iterations += 1;
        let mut d = -(&h * &g);
        if d.dot(&g) >= 0.0 {
            h = inv_hessian0.clone();
            d = -(&h * &g);
        }
        let longest = inf_norm(&d);
        let mut alpha = if longest > 10.0 { 10.0 / longest } else { 1.0 };

        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = &x + alpha * &d;
            clamp(&mut trial);
            let step = &trial - &x;
            let decrease = g.dot(&step);
            if decrease < 0.0 {
                let (ft, gt) = f(trial.as_slice());
                if ft.is_finite() && ft <= fx + 1e-4 * decrease {
                    accepted = Some((trial, step, ft, DVector::from_vec(gt)));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((trial, step, ft, gt)) = accepted else {
            // No descent left along the search direction.
            converged = scaled(&g) <= cfg.stall_grad_tol;
            break;
        };

        let change = (fx - ft).abs() / fx.abs().max(1.0);
        let yv = &gt - &g;
        let sy = step.dot(&yv);
        if sy > 1e-12 * step.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let n = step.len();
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - rho * &step * yv.transpose();
            let right = &eye - rho * &yv * step.transpose();
            h = &left * &h * &right + rho * &step * step.transpose();
        }
        x = trial;
        fx = ft;
        g = gt;
        trace.push(fx);
        let gnorm = scaled(&g);
        if gnorm <= cfg.grad_tol || (change < cfg.rel_tol && gnorm <= cfg.stall_grad_tol) {
            converged = true;
        }
    }

    BfgsOutcome { x: x.as_slice().to_vec(), gradient: g.as_slice().to_vec(), iterations, converged, trace }
}
