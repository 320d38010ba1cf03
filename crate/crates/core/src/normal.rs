//! Standard normal distribution primitives.
//!
//! `cdf` and `sf` go through the complementary error function so that both
//! tails keep full relative precision; `quantile` starts from a rational
//! approximation and is polished with Newton/Halley steps against `cdf`.

use crate::error::{Error, Result};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Density φ(x).
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Φ(x) = P[Z ≤ x].
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Survival function 1 − Φ(x), accurate for large positive x.
pub fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// ln Φ(x); finite as long as Φ(x) does not underflow.
fn ln_cdf(x: f64) -> f64 {
    cdf(x).ln()
}

/// Φ^{-1}(q) for q in (0, 1).
pub fn quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!(
            "normal quantile needs q in (0,1), got {q}"
        )));
    }
    if q > 0.5 {
        // 1 - q is exact for q >= 0.5.
        return Ok(-lower_quantile(1.0 - q));
    }
    Ok(lower_quantile(q))
}

/// Φ^{-1}(q) for q in (0, 0.5].
fn lower_quantile(q: f64) -> f64 {
    let mut x = acklam(q);
    if q < f64::MIN_POSITIVE {
        return x;
    }
    if x < -1.0 {
        // Newton on ln Φ(x) - ln q keeps the residual well scaled in the tail.
        let ln_q = q.ln();
        for _ in 0..4 {
            let lc = ln_cdf(x);
            let ratio = (lc - (-0.5 * x * x - LN_SQRT_2PI)).exp(); // Φ/φ
            let step = (lc - ln_q) * ratio;
            x -= step;
            if step.abs() <= 1e-15 * x.abs() {
                break;
            }
        }
    } else {
        for _ in 0..3 {
            let e = cdf(x) - q;
            let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
            let step = u / (1.0 + 0.5 * x * u);
            x -= step;
            if step.abs() <= 1e-16 {
                break;
            }
        }
    }
    x
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.max(f64::MIN_POSITIVE * f64::EPSILON).ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// erf by its Maclaurin series, summed until terms vanish; only used for
    /// moderate |x| where the series converges quickly.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x * x / n;
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add.abs() < 1e-18 {
                break;
            }
        }
        2.0 / PI.sqrt() * sum
    }

    #[test]
    fn cdf_at_zero_is_half() {
        assert_eq!(cdf(0.0), 0.5);
        assert_eq!(quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn cdf_matches_series_oracle() {
        let oracle = 0.5 * (1.0 + erf_series(1.96 / 2f64.sqrt()));
        assert!((cdf(1.96) - oracle).abs() < 1e-14);
        assert!((cdf(1.96) - 0.975_002).abs() < 1e-6);
        for &x in &[-2.5, -1.0, -0.3, 0.7, 1.5, 2.2] {
            let o = 0.5 * (1.0 + erf_series(x / 2f64.sqrt()));
            assert!((cdf(x) - o).abs() < 1e-14, "x={x}");
        }
    }

    #[test]
    fn deep_tail_relative_accuracy() {
        // Φ(-20) = 2.7536241186062336e-89 (Mills-ratio asymptotic series).
        let x = 20.0f64;
        let mut series = 1.0;
        let mut t = 1.0;
        for k in 1..12 {
            t *= -((2 * k - 1) as f64) / (x * x);
            series += t;
        }
        let oracle = pdf(x) / x * series;
        assert!(((sf(20.0) - oracle) / oracle).abs() < 1e-13);
        assert!((cdf(-20.0) / oracle - 1.0).abs() < 1e-13);
    }

    #[test]
    fn quantile_rejects_endpoints() {
        assert!(quantile(0.0).is_err());
        assert!(quantile(1.0).is_err());
        assert!(quantile(f64::NAN).is_err());
    }

    #[test]
    fn roundtrip_over_decades() {
        let mut qs = vec![];
        for k in 1..=8 {
            let v = 10f64.powi(-k);
            qs.push(v);
            qs.push(1.0 - v);
        }
        qs.extend([0.2, 0.3, 0.45, 0.5, 0.55, 0.8]);
        for q in qs {
            let x = quantile(q).unwrap();
            assert!((cdf(x) - q).abs() <= 1e-10 * q.clamp(1e-300, 1.0), "q={q}");
            let rel = ((cdf(x) - q) / q).abs();
            assert!(rel < 1e-12, "q={q} rel={rel}");
        }
        for &q in &[1e-30, 1e-100, 1e-300] {
            let x = quantile(q).unwrap();
            assert!(((cdf(x) - q) / q).abs() < 1e-12, "q={q}");
        }
    }

    #[test]
    fn cdf_is_monotone() {
        let mut prev = 0.0;
        for i in -4000..=4000 {
            let v = cdf(i as f64 * 0.01);
            assert!(v >= prev);
            prev = v;
        }
    }
}
