//! Oracle suites that cross-check the accountant and the simulator against
//! independent computations.

use crate::compose::h_of_sigma;
use crate::error::Result;
use crate::gdp::{delta_of_eps, gaussian_curve, group_curve};
use crate::pld::{pld_delta, RoundSpec};
use crate::sim::{grad_logistic, loss_logistic, Sample};
use crate::subsample::{cp_operator, np_mixture_oracle};
use crate::tradeoff::sup_distance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Quadrature nodes for the Neyman–Pearson oracle.
pub const ORACLE_GRID: usize = 200_001;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SelfCheckOptions {
    /// Added to `h(σ)` before the CLT check. Test hook only.
    pub h_perturbation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed error.
    pub error: f64,
    pub tolerance: f64,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCheckSummary {
    pub checks: Vec<CheckResult>,
}

impl SelfCheckSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn timed(name: &str, tolerance: f64, f: impl FnOnce() -> Result<(f64, String)>) -> CheckResult {
    let start = Instant::now();
    let (error, detail) = match f() {
        Ok(v) => v,
        Err(e) => (f64::INFINITY, e.to_string()),
    };
    CheckResult {
        name: name.to_string(),
        passed: error <= tolerance,
        error,
        tolerance,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_selfcheck(opts: SelfCheckOptions) -> SelfCheckSummary {
    SelfCheckSummary {
        checks: vec![
            check_subsampling_oracle(),
            check_pld_closed_form(),
            check_group(),
            check_gradients(),
            check_clt(opts.h_perturbation),
        ],
    }
}

/// `C_p(G_{1/σ})` against the symmetrized mixture oracle.
pub fn check_subsampling_oracle() -> CheckResult {
    timed("subsampling_oracle", 1e-4, || {
        let mut worst = (0.0, String::new());
        for p in [0.01, 0.1, 0.5] {
            for sigma in [1.0, 2.0, 4.0] {
                let d = subsampling_gap(p, sigma, ORACLE_GRID)?;
                if d >= worst.0 {
                    worst = (d, format!("worst at p={p} sigma={sigma}"));
                }
            }
        }
        Ok(worst)
    })
}

/// Sup-norm gap between `C_p(G_{1/σ})` and the symmetrized oracle.
pub fn subsampling_gap(p: f64, sigma: f64, grid: usize) -> Result<f64> {
    let cp = cp_operator(&gaussian_curve(1.0 / sigma)?, p)?;
    let oracle = np_mixture_oracle(p, sigma, grid)?.symmetrize();
    Ok(sup_distance(&cp, &oracle))
}

/// Numeric composition with `p = 1` against `G_1`.
pub fn check_pld_closed_form() -> CheckResult {
    timed("pld_closed_form", 1e-6, || {
        let eps: Vec<f64> = (0..20).map(|i| 5.0 * i as f64 / 19.0).collect();
        let got = pld_delta(&[RoundSpec::new(1.0, 2.0, 4)?], &eps)?;
        let mut worst = 0.0f64;
        for (e, d) in eps.iter().zip(&got) {
            worst = worst.max((d - delta_of_eps(1.0, *e)?).abs());
        }
        Ok((worst, "p=1 sigma=2 T=4 vs mu=1 at 20 eps".into()))
    })
}

/// Group curves of `G_μ` against `G_{gμ}`.
pub fn check_group() -> CheckResult {
    timed("group_privacy", 1e-3, || {
        let mut worst = (0.0, String::new());
        for mu in [0.25, 0.5, 1.0] {
            for g in [2u32, 4, 8] {
                let got = group_curve(&gaussian_curve(mu)?, g)?;
                let d = sup_distance(&got, &gaussian_curve(g as f64 * mu)?);
                if d >= worst.0 {
                    worst = (d, format!("worst at mu={mu} g={g}"));
                }
            }
        }
        Ok(worst)
    })
}

/// Largest relative error of `grad_logistic` against central differences
/// over `points` random `(w, x, y)`.
pub fn gradient_error(points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let d = rng.random_range(1..=6usize);
        let w: Vec<f64> = (0..=d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        x.push(1.0);
        let xi = Sample {
            x,
            y: if rng.random_bool(0.5) { 1.0 } else { 0.0 },
        };
        let g = grad_logistic(&w, &xi);
        let h = 1e-5;
        let mut num = vec![0.0; w.len()];
        for j in 0..w.len() {
            let (mut a, mut b) = (w.clone(), w.clone());
            a[j] += h;
            b[j] -= h;
            num[j] = (loss_logistic(&a, &xi) - loss_logistic(&b, &xi)) / (2.0 * h);
        }
        let diff: f64 = g
            .iter()
            .zip(&num)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-3);
        worst = worst.max(diff / scale);
    }
    worst
}

pub fn check_gradients() -> CheckResult {
    timed("gradient", 1e-6, || {
        Ok((
            gradient_error(100, 17),
            "100 random points, central differences".into(),
        ))
    })
}

/// Standard deviation of the per-round privacy loss divided by `p`, from
/// quadrature of the symmetrized subsampled-Gaussian loss.
pub fn loss_spread(p: f64, sigma: f64) -> f64 {
    let mu = 1.0 / sigma;
    let ell = |z: f64| (p * (mu * z - 0.5 * mu * mu).exp_m1()).ln_1p();
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let (lo, hi) = (0.5 * mu, mu + 12.0);
    let n = 20_000;
    let step = (hi - lo) / n as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for i in 0..=n {
        let z = lo + i as f64 * step;
        let wt = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        } * step
            / 3.0;
        let l = ell(z);
        let alt = (1.0 - p) * phi(z) + p * phi(z - mu);
        let null = phi(z);
        // Loss ℓ under the mixture tail, -ℓ under the null tail; the
        // remaining mass sits at zero.
        m1 += wt * l * (alt - null);
        m2 += wt * l * l * (alt + null);
    }
    (m2 - m1 * m1).max(0.0).sqrt() / p
}

/// `h(σ)` from loss moments, Richardson-extrapolated to `p → 0`.
pub fn h_from_moments(sigma: f64) -> f64 {
    2.0 * loss_spread(5e-4, sigma) - loss_spread(1e-3, sigma)
}

pub fn check_clt(perturbation: f64) -> CheckResult {
    timed("clt_h", 1e-3, || {
        let mut worst = (0.0, String::new());
        for sigma in [1.0, 2.0, 5.0] {
            let h = h_of_sigma(sigma)? + perturbation;
            let rel = (h - h_from_moments(sigma)).abs() / h_from_moments(sigma);
            if rel >= worst.0 {
                worst = (rel, format!("worst relative gap at sigma={sigma}"));
            }
        }
        Ok(worst)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h_matches_moments() {
        let c = check_clt(0.0);
        assert!(c.passed, "{c:?}");
    }

    #[test]
    fn perturbed_h_is_caught() {
        for d in [1e-2, -1e-2] {
            let c = check_clt(d);
            assert!(!c.passed);
            assert_eq!(c.name, "clt_h");
        }
    }

    #[test]
    fn gradients_agree() {
        assert!(gradient_error(100, 3) <= 1e-6);
    }

    #[test]
    fn spread_at_moderate_rate() {
        // Oracle: scipy quad of the same moments, p = 1e-3, sigma = 2.
        assert!((loss_spread(1e-3, 2.0) - 0.6273067681602461).abs() < 1e-8);
    }
}
