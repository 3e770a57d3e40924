use crate::error::{dim_err, Result};
use crate::nn::{bce_value, kl_value};

/// Reconstruction, regularization and combined loss of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub bce: f64,
    pub kl: f64,
    pub total: f64,
}

/// Summed binary cross-entropy `Σ −x log x̂ − (1−x) log(1−x̂)` (natural log),
/// with `x̂` clamped to `[1e-7, 1 − 1e-7]`.
pub fn loss_bce(x: &[f64], xhat: &[f64]) -> Result<f64> {
    if x.len() != xhat.len() {
        return Err(dim_err!("target has {} values, reconstruction {}", x.len(), xhat.len()));
    }
    Ok(bce_value(x, xhat))
}

/// KL divergence of `N(mu, exp(logvar))` from `N(0, I)`:
/// `½ Σ (μ² + σ² − log σ²) − d/2`.
pub fn loss_kl(mu: &[f64], logvar: &[f64]) -> Result<f64> {
    if mu.len() != logvar.len() {
        return Err(dim_err!("mu has {} entries, logvar {}", mu.len(), logvar.len()));
    }
    Ok(kl_value(mu, logvar))
}

/// `L = Lˣ + α·Lᶻ`.
pub fn combine(bce: f64, kl: f64, alpha: f64) -> f64 {
    bce + alpha * kl
}

pub fn loss_total(x: &[f64], xhat: &[f64], mu: &[f64], logvar: &[f64], alpha: f64) -> Result<LossParts> {
    let bce = loss_bce(x, xhat)?;
    let kl = loss_kl(mu, logvar)?;
    Ok(LossParts {
        bce,
        kl,
        total: combine(bce, kl, alpha),
    })
}
