//! Gaussian composition, the central-limit approximation for DP-SGD and
//! noise calibration.

use crate::error::{Error, Result};
use crate::gdp::GdpGuarantee;
use crate::normal;
use serde::{Deserialize, Serialize};

/// Below this noise multiplier `h(σ)` grows like `e^{1/(2σ²)}` and the
/// asymptotic guarantee is not meaningful.
pub const CLT_MIN_SIGMA: f64 = 0.5;

/// Composition of `G_{mu_i}` is `G_mu` with `mu = sqrt(Σ mu_i²)`.
pub fn compose_gaussian(mus: &[f64]) -> Result<GdpGuarantee> {
    if let Some(bad) = mus.iter().find(|m| !(**m >= 0.0) || !m.is_finite()) {
        return Err(Error::domain(format!(
            "mu must be finite and >= 0, got {bad}"
        )));
    }
    // hypot-style accumulation avoids overflow for huge inputs.
    let mu = mus.iter().fold(0.0f64, |acc, m| acc.hypot(*m));
    GdpGuarantee::new(mu)
}

/// `h(σ) = sqrt(2 (e^{σ^-2} Φ(1.5/σ) + 3 Φ(-0.5/σ) - 2))`.
pub fn h_of_sigma(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!("sigma must be > 0, got {sigma}")));
    }
    let s = 1.0 / sigma;
    let inner = (s * s).exp() * normal::cdf(1.5 * s) + 3.0 * normal::cdf(-0.5 * s) - 2.0;
    Ok((2.0 * inner).max(0.0).sqrt())
}

/// DP-SGD hyperparameters that determine the accounted guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanInput {
    /// Data set size N.
    #[serde(rename = "N")]
    pub n: u64,
    /// Batch size m.
    pub m: u64,
    /// Epochs E.
    #[serde(rename = "E")]
    pub epochs: f64,
    pub sigma: f64,
}

impl PlanInput {
    pub fn new(n: u64, m: u64, epochs: f64, sigma: f64) -> Result<Self> {
        let p = PlanInput {
            n,
            m,
            epochs,
            sigma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::domain("N and m must be positive"));
        }
        if self.m > self.n {
            return Err(Error::domain(format!(
                "m = {} exceeds N = {}",
                self.m, self.n
            )));
        }
        if !(self.epochs > 0.0) || !self.epochs.is_finite() {
            return Err(Error::domain("E must be positive"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::domain("sigma must be positive"));
        }
        Ok(())
    }

    pub fn sampling_rate(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    /// Total rounds `T = (N/m) E`.
    pub fn rounds(&self) -> f64 {
        self.n as f64 / self.m as f64 * self.epochs
    }
}

/// Asymptotic Gaussian-DP parameter from the central-limit approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltEstimate {
    pub mu: f64,
    /// `c = sqrt(mE/N)`, equivalently `p sqrt(T)`.
    pub c: f64,
    pub h: f64,
}

impl CltEstimate {
    pub fn guarantee(&self) -> GdpGuarantee {
        GdpGuarantee { mu: self.mu }
    }
}

/// `mu = sqrt(mE/N) h(σ)`; valid for large N and E only.
pub fn clt_mu(plan: &PlanInput) -> Result<CltEstimate> {
    plan.validate()?;
    clt_mu_from_rate(plan.sampling_rate(), plan.rounds(), plan.sigma)
}

/// Same as [`clt_mu`] from `(p, T, σ)` directly: `mu = p sqrt(T) h(σ)`.
pub fn clt_mu_from_rate(p: f64, rounds: f64, sigma: f64) -> Result<CltEstimate> {
    if sigma < CLT_MIN_SIGMA {
        return Err(Error::domain(format!(
            "CLT approximation refused for sigma = {sigma} < {CLT_MIN_SIGMA}"
        )));
    }
    let h = h_of_sigma(sigma)?;
    let c = p * rounds.sqrt();
    Ok(CltEstimate { mu: c * h, c, h })
}

/// Noise multiplier from the calibration rule and whether the round count
/// lies inside the range where the rule is claimed to hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaPlan {
    pub sigma: f64,
    /// `ε (N/m)² / 2`.
    pub max_rounds: f64,
    /// `T <= max_rounds`.
    pub certified: bool,
}

/// `σ = sqrt(2 (ε + ln(1/δ)) / ε)`, certified for `T <= ε (N/m)² / 2`.
pub fn sigma_for_budget(eps: f64, delta: f64, n: u64, m: u64, rounds: f64) -> Result<SigmaPlan> {
    if !(eps > 0.0) {
        return Err(Error::domain(format!("eps must be > 0, got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    if n == 0 || m == 0 || m > n {
        return Err(Error::domain("need 0 < m <= N"));
    }
    let sigma = if eps.is_infinite() {
        std::f64::consts::SQRT_2
    } else {
        (2.0 * (eps + (1.0 / delta).ln()) / eps).sqrt()
    };
    let ratio = n as f64 / m as f64;
    let max_rounds = eps * ratio * ratio / 2.0;
    Ok(SigmaPlan {
        sigma,
        max_rounds,
        certified: rounds <= max_rounds,
    })
}
