//! Subsampling amplification `C_p` and a brute-force Neyman–Pearson oracle
//! for the subsampled Gaussian mechanism.

use crate::error::{Error, Result};
use crate::tradeoff::{Knot, PiecewiseLinear, TradeoffCurve, DEFAULT_KNOTS};

fn check_p(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "sampling rate must lie in [0,1], got {p}"
        )))
    }
}

/// `C_p(f) = min{f_p, f_p^{-1}}^{**}` with `f_p = p f + (1 - p)(1 - alpha)`.
///
/// `f` is symmetrized first. Analytic inputs are discretized with
/// [`DEFAULT_KNOTS`] knots.
pub fn cp_operator(f: &TradeoffCurve, p: f64) -> Result<TradeoffCurve> {
    cp_operator_with_knots(f, p, DEFAULT_KNOTS)
}

pub fn cp_operator_with_knots(f: &TradeoffCurve, p: f64, knots: usize) -> Result<TradeoffCurve> {
    check_p(p)?;
    if !f.validate().is_empty() {
        return Err(Error::InvalidCurve(
            "cp_operator input fails validation".into(),
        ));
    }
    if p == 0.0 {
        return Ok(TradeoffCurve::Perfect);
    }
    let sym = f.symmetrize();
    if p == 1.0 || matches!(sym, TradeoffCurve::Perfect) {
        return Ok(sym);
    }
    let fp = mix_with_identity(&sym.discretize(knots), p);
    Ok(TradeoffCurve::PiecewiseLinear(fp).symmetrize())
}

/// `p f + (1 - p)(1 - alpha)` on the knots of `f` (exact for piecewise-linear f).
pub fn mix_with_identity(f: &PiecewiseLinear, p: f64) -> PiecewiseLinear {
    f.map_beta(|a, b| p * b + (1.0 - p) * (1.0 - a))
}

/// Optimal trade-off between `N(0, σ²)` and `(1-p) N(0, σ²) + p N(1, σ²)`,
/// found by sweeping likelihood-ratio thresholds.
///
/// The likelihood ratio is increasing in the observation, so every optimal
/// test rejects above a threshold `t`. Type I and type II errors are the
/// tail integrals of the two densities, accumulated with composite Simpson
/// quadrature on `grid` nodes over `[-20σ, 1 + 20σ]`; only `exp` is used, no
/// normal CDF. The result is the one-sided `f_p`; symmetrize it to compare
/// against [`cp_operator`].
pub fn np_mixture_oracle(p: f64, sigma: f64, grid: usize) -> Result<TradeoffCurve> {
    check_p(p)?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!("sigma must be > 0, got {sigma}")));
    }
    // Odd node count so Simpson panels tile the range.
    let nodes = grid.max(101) | 1;
    let lo = -20.0 * sigma;
    let hi = 1.0 + 20.0 * sigma;
    let h = (hi - lo) / (nodes - 1) as f64;
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let dens0 = |x: f64| norm * (-0.5 * (x / sigma).powi(2)).exp();
    let dens1 = |x: f64| norm * (-0.5 * ((x - 1.0) / sigma).powi(2)).exp();

    let panels = (nodes - 1) / 2;
    // Simpson mass of each panel [x_{2k}, x_{2k+2}].
    let mut m0 = Vec::with_capacity(panels);
    let mut m1 = Vec::with_capacity(panels);
    for k in 0..panels {
        let x0 = lo + (2 * k) as f64 * h;
        let (xa, xb) = (x0 + h, x0 + 2.0 * h);
        m0.push(h / 3.0 * (dens0(x0) + 4.0 * dens0(xa) + dens0(xb)));
        m1.push(h / 3.0 * (dens1(x0) + 4.0 * dens1(xa) + dens1(xb)));
    }
    // alpha(t) = P0(X > t) accumulated from the right; beta(t) = Q(X <= t)
    // accumulated from the left, each keeping small tails precise.
    let mut alpha_right = vec![0.0; panels + 1];
    for k in (0..panels).rev() {
        alpha_right[k] = alpha_right[k + 1] + m0[k];
    }
    let mut knots = Vec::with_capacity(panels + 3);
    knots.push(Knot::new(0.0, 1.0));
    let mut b0 = 0.0; // P0(X <= t)
    let mut b1 = 0.0; // P1(X <= t)
    let mut left = Vec::with_capacity(panels + 1);
    left.push((0.0, 0.0));
    for k in 0..panels {
        b0 += m0[k];
        b1 += m1[k];
        left.push((b0, b1));
    }
    for k in (0..=panels).rev() {
        let a = alpha_right[k].min(1.0);
        let (c0, c1) = left[k];
        let beta = ((1.0 - p) * c0 + p * c1).clamp(0.0, 1.0 - a);
        if a <= 0.0 || a >= 1.0 {
            continue;
        }
        if knots.last().is_some_and(|l: &Knot| l.alpha >= a) {
            continue;
        }
        knots.push(Knot::new(a, beta));
    }
    knots.push(Knot::new(1.0, 0.0));
    Ok(TradeoffCurve::PiecewiseLinear(PiecewiseLinear::from_knots(
        knots,
    )))
}
