//! Per-round DP-SGD primitives: clipping, batch sampling, gradients, noise
//! and server aggregation.

use super::data::Sample;
use crate::error::{Error, Result};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub type ModelVec = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Exactly `m` distinct indices per round; noise std `2Cσ`.
    #[default]
    Fixed,
    /// Each index independently with probability `m/N`; noise std `Cσ`.
    Poisson,
}

impl SamplingMode {
    /// Sensitivity multiplier κ: noise std is `κ C σ`.
    pub fn kappa(self) -> f64 {
        match self {
            SamplingMode::Fixed => 2.0,
            SamplingMode::Poisson => 1.0,
        }
    }
}

/// A noised round update as transmitted to the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundUpdate {
    pub u_bar_over_m: ModelVec,
    /// Round index within the epoch (0-based).
    pub b: u64,
    /// Epoch index (0-based).
    pub e: u64,
    pub client_id: usize,
    /// Step size the client used for its own local update.
    pub eta: f64,
}

/// Everything a round produced, including the unnoised sum.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutput {
    pub update: RoundUpdate,
    /// `U = Σ [a_h]_C`.
    pub u: ModelVec,
    /// `Ū = U + noise`.
    pub u_bar: ModelVec,
    /// Norms of the clipped per-sample gradients.
    pub clipped_norms: Vec<f64>,
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `[x]_C = x / max{1, ‖x‖/C}`.
pub fn clip(x: &[f64], c: f64) -> Vec<f64> {
    let n = norm(x);
    if n <= c || !c.is_finite() {
        return x.to_vec();
    }
    let s = c / n;
    x.iter().map(|v| v * s).collect()
}

/// Batch indices out of `0..n`.
pub fn sample<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    mode: SamplingMode,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return Err(Error::domain(format!(
            "need 0 < m <= N, got m = {m}, N = {n}"
        )));
    }
    Ok(match mode {
        SamplingMode::Fixed => {
            let mut v = index::sample(rng, n, m).into_vec();
            v.sort_unstable();
            v
        }
        SamplingMode::Poisson => {
            let q = m as f64 / n as f64;
            (0..n).filter(|_| rng.random_bool(q)).collect()
        }
    })
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Gradient of the logistic loss: `(s - y) x` with `s = logistic(w·x)`.
pub fn grad_logistic(w: &[f64], xi: &Sample) -> Vec<f64> {
    let s = logistic(dot(w, &xi.x));
    xi.x.iter().map(|v| (s - xi.y) * v).collect()
}

/// `-[y log s + (1-y) log(1-s)]`, computed stably.
pub fn loss_logistic(w: &[f64], xi: &Sample) -> f64 {
    let t = dot(w, &xi.x);
    // log(1 + e^t) - y t
    let softplus = if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    };
    softplus - xi.y * t
}

pub fn predict(w: &[f64], x: &[f64]) -> f64 {
    if dot(w, x) >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Noise parameters of one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub c: f64,
    pub sigma: f64,
    pub mode: SamplingMode,
    /// `a` of the arsinh shaping, when enabled.
    pub shaping: Option<f64>,
}

/// One DP-SGD round at a single model snapshot.
pub fn local_round<R: Rng + ?Sized>(
    w: &[f64],
    batch: &[&Sample],
    nominal_m: usize,
    noise: NoiseSpec,
    rng: &mut R,
) -> Result<RoundOutput> {
    local_round_switching(w, None, batch, nominal_m, noise, rng)
}

/// Like [`local_round`], except that gradients from index `switch.1` on use
/// the model `switch.0` delivered mid-round.
pub fn local_round_switching<R: Rng + ?Sized>(
    w: &[f64],
    switch: Option<(&[f64], usize)>,
    batch: &[&Sample],
    nominal_m: usize,
    noise: NoiseSpec,
    rng: &mut R,
) -> Result<RoundOutput> {
    if nominal_m == 0 {
        return Err(Error::domain("nominal batch size must be >= 1"));
    }
    if noise.sigma > 0.0 && !noise.c.is_finite() {
        return Err(Error::config(
            "clip",
            "noise needs a finite clipping constant",
        ));
    }
    let d = w.len();
    let mut u = vec![0.0; d];
    let mut clipped_norms = Vec::with_capacity(batch.len());
    for (h, xi) in batch.iter().enumerate() {
        let model = match switch {
            Some((w2, at)) if h >= at => w2,
            _ => w,
        };
        let a = clip(&grad_logistic(model, xi), noise.c);
        clipped_norms.push(norm(&a));
        for (acc, v) in u.iter_mut().zip(&a) {
            *acc += v;
        }
    }
    let std = noise.mode.kappa() * noise.c * noise.sigma;
    let u_bar: Vec<f64> = if noise.sigma > 0.0 {
        u.iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(rng);
                let n = z * std;
                v + noise.shaping.map_or(n, |a| arsinh_shape_one(n, a))
            })
            .collect()
    } else {
        u.clone()
    };
    let m = nominal_m as f64;
    Ok(RoundOutput {
        update: RoundUpdate {
            u_bar_over_m: u_bar.iter().map(|v| v / m).collect(),
            b: 0,
            e: 0,
            client_id: 0,
            eta: 0.0,
        },
        u,
        u_bar,
        clipped_norms,
    })
}

/// `‖U - U'‖` for two batches evaluated at the same model.
pub fn neighbor_sensitivity(a: &[&Sample], b: &[&Sample], w: &[f64], c: f64) -> f64 {
    let sum = |batch: &[&Sample]| {
        let mut u = vec![0.0; w.len()];
        for xi in batch {
            for (acc, v) in u.iter_mut().zip(clip(&grad_logistic(w, xi), c)) {
                *acc += v;
            }
        }
        u
    };
    let (ua, ub) = (sum(a), sum(b));
    norm(&ua.iter().zip(&ub).map(|(x, y)| x - y).collect::<Vec<_>>())
}

/// Sensitivity bound of one round: `2C` (replace-one) or `C` (add/remove-one).
pub fn sensitivity_bound(mode: SamplingMode, c: f64) -> f64 {
    match mode {
        SamplingMode::Fixed => 2.0 * c,
        SamplingMode::Poisson => c,
    }
}

/// `ŵ - η Σ_i weight_i (Ū/m)_i`.
pub fn server_apply(
    w_hat: &[f64],
    updates: &[RoundUpdate],
    eta: f64,
    weights: &[f64],
) -> Result<ModelVec> {
    if updates.len() != weights.len() {
        return Err(Error::domain("one weight per update required"));
    }
    let mut out = w_hat.to_vec();
    for (u, wt) in updates.iter().zip(weights) {
        if u.u_bar_over_m.len() != out.len() {
            return Err(Error::domain("update dimension mismatch"));
        }
        for (o, v) in out.iter_mut().zip(&u.u_bar_over_m) {
            *o -= eta * wt * v;
        }
    }
    Ok(out)
}

fn arsinh_shape_one(x: f64, a: f64) -> f64 {
    a * (x / a).asinh()
}

/// `a · arsinh(x / a)` elementwise. Shaped noise is not covered by the
/// accountant.
pub fn arsinh_shape(noise: &[f64], a: f64) -> Result<Vec<f64>> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::domain(format!(
            "shaping parameter must be > 0, got {a}"
        )));
    }
    Ok(noise.iter().map(|&x| arsinh_shape_one(x, a)).collect())
}
