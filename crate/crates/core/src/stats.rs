//! Small numeric helpers shared across modules.

/// Numerically stable logistic function.
pub fn inv_logit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^eta)` without overflow.
pub fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood contribution of one observation on the logit scale.
pub fn bernoulli_loglik(y: bool, eta: f64) -> f64 {
    if y {
        eta - log1p_exp(eta)
    } else {
        -log1p_exp(eta)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean by running updates; exact when all values are equal.
pub fn running_mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut m = 0.0;
    for (k, x) in xs.into_iter().enumerate() {
        m += (x - m) / (k + 1) as f64;
    }
    m
}

/// Sample variance (denominator `n - 1`).
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Pearson correlation; `None` when either input has zero spread.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let ma = mean(a);
    let mb = mean(b);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}
