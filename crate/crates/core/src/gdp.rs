//! Gaussian-DP and (ε, δ)-DP families, conversions between privacy measures,
//! and group privacy.

use crate::error::{Error, Result};
use crate::normal;
use crate::tradeoff::{Knot, PiecewiseLinear, TradeoffCurve};
use serde::{Deserialize, Serialize};

/// Grid size used when iterating `1 - f` for group privacy.
pub const GROUP_GRID: usize = 16385;
const GROUP_Z_RANGE: (f64, f64) = (-10.0, 38.0);
const GROUP_Z_STEP: f64 = 0.01;

/// μ-Gaussian differential privacy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdpGuarantee {
    pub mu: f64,
}

impl GdpGuarantee {
    pub fn new(mu: f64) -> Result<Self> {
        check_mu(mu)?;
        Ok(GdpGuarantee { mu })
    }

    pub fn curve(&self) -> TradeoffCurve {
        TradeoffCurve::gaussian(self.mu).expect("validated mu")
    }
}

/// (ε, δ)-DP; `vacuous` marks a failure probability that reached 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsDeltaGuarantee {
    pub eps: f64,
    pub delta: f64,
    pub vacuous: bool,
}

/// ρ-zCDP together with the (ω, τ)-RDP point it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceGuarantee {
    pub rho: f64,
    pub omega: f64,
    pub tau: f64,
}

fn check_mu(mu: f64) -> Result<()> {
    if mu >= 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "mu must be finite and >= 0, got {mu}"
        )))
    }
}

/// `G_mu`; `mu = 0` gives [`TradeoffCurve::Perfect`].
pub fn gaussian_curve(mu: f64) -> Result<TradeoffCurve> {
    TradeoffCurve::gaussian(mu)
}

/// `f_{eps,delta}` (the pointwise max of its linear pieces and zero).
pub fn epsdelta_curve(eps: f64, delta: f64) -> Result<TradeoffCurve> {
    TradeoffCurve::eps_delta(eps, delta)
}

/// δ(ε) of a μ-GDP mechanism:
/// `Φ(-ε/μ + μ/2) - e^ε Φ(-ε/μ - μ/2)`.
pub fn delta_of_eps(mu: f64, eps: f64) -> Result<f64> {
    check_mu(mu)?;
    if !(eps >= 0.0) {
        return Err(Error::domain(format!("eps must be >= 0, got {eps}")));
    }
    if mu == 0.0 {
        return Ok(0.0);
    }
    if eps.is_infinite() {
        return Ok(0.0);
    }
    let a = normal::cdf(-eps / mu + mu / 2.0);
    let b = normal::cdf(-eps / mu - mu / 2.0);
    let second = if b > 0.0 { (eps + b.ln()).exp() } else { 0.0 };
    Ok((a - second).clamp(0.0, 1.0))
}

/// Smallest ε ≥ 0 with `delta_of_eps(mu, ε) <= delta`, by bisection.
pub fn eps_of_delta(mu: f64, delta: f64) -> Result<f64> {
    check_mu(mu)?;
    if !(delta > 0.0 && delta <= 1.0) {
        if delta == 0.0 && mu > 0.0 {
            return Err(Error::Unreachable(
                "delta(eps) > 0 for every eps when mu > 0".into(),
            ));
        }
        if delta != 0.0 {
            return Err(Error::domain(format!(
                "delta must lie in (0,1], got {delta}"
            )));
        }
    }
    if mu == 0.0 || delta_of_eps(mu, 0.0)? <= delta {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = mu * mu / 2.0 + mu * (2.0 * (1.0 / delta).ln()).sqrt() + 1.0;
    while delta_of_eps(mu, hi)? > delta {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if delta_of_eps(mu, mid)? > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// zCDP / RDP implied by `G_{g·mu}`: `rho = (g mu)^2 / 2`, `tau = rho omega`.
pub fn divergence_of_gdp(mu: f64, omega: f64, group: u32) -> Result<DivergenceGuarantee> {
    check_mu(mu)?;
    if !(omega > 1.0) {
        return Err(Error::domain(format!(
            "Renyi order must exceed 1, got {omega}"
        )));
    }
    if group == 0 {
        return Err(Error::domain("group size must be >= 1"));
    }
    let gm = group as f64 * mu;
    let rho = gm * gm / 2.0;
    Ok(DivergenceGuarantee {
        rho,
        omega,
        tau: rho * omega,
    })
}

/// `1 - (1 - f)^{∘g}` for groups of size `g`.
pub fn group_curve(f: &TradeoffCurve, g: u32) -> Result<TradeoffCurve> {
    Ok(group_curve_with_gap(f, g, GROUP_GRID)?.0)
}

/// Group curve on an `n`-point uniform grid refined near `alpha = 0`, together with the sup-norm
/// distance between the iterated points and their convex envelope.
pub fn group_curve_with_gap(f: &TradeoffCurve, g: u32, n: usize) -> Result<(TradeoffCurve, f64)> {
    if g == 0 {
        return Err(Error::domain("group size must be >= 1"));
    }
    if g == 1 || matches!(f, TradeoffCurve::Perfect) {
        return Ok((f.clone(), 0.0));
    }
    let n = n.max(2);
    let step = 1.0 / (n - 1) as f64;
    // Uniform in alpha, plus uniform in z = Φ^{-1}(1 - alpha) to follow
    // the steep part near alpha = 0.
    let mut alphas: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
    alphas[n - 1] = 1.0;
    let mut z = GROUP_Z_RANGE.0;
    while z <= GROUP_Z_RANGE.1 {
        let a = normal::sf(z);
        if a > 0.0 && a < 1.0 {
            alphas.push(a);
        }
        z += GROUP_Z_STEP;
    }
    alphas.sort_by(|a, b| a.total_cmp(b));
    alphas.dedup();
    let mut pts: Vec<Knot> = Vec::with_capacity(alphas.len());
    for alpha in alphas {
        let mut y = alpha;
        for _ in 0..g {
            y = f.complement(y).clamp(0.0, 1.0);
        }
        let beta = (1.0 - y).clamp(0.0, 1.0 - alpha);
        pts.push(Knot::new(alpha, beta));
    }
    let raw = PiecewiseLinear::from_knots(pts);
    let hull = raw.convex_envelope();
    let gap = raw
        .knots()
        .iter()
        .map(|k| (k.beta - hull.eval(k.alpha)).abs())
        .fold(0.0, f64::max);
    Ok((TradeoffCurve::PiecewiseLinear(hull), gap))
}

/// Tightest curve implied by a family of `(ε, δ)` guarantees: the pointwise
/// max of the `f_{ε,δ}`, built exactly as the upper envelope of their lines.
pub fn epsdelta_envelope(points: &[(f64, f64)]) -> Result<TradeoffCurve> {
    // Lines beta = c + s alpha.
    let mut lines: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    for &(eps, delta) in points {
        if !(eps >= 0.0) || !eps.is_finite() || !(0.0..=1.0).contains(&delta) {
            return Err(Error::domain(format!(
                "invalid (eps, delta) = ({eps}, {delta})"
            )));
        }
        let e = eps.exp();
        lines.push((-e, 1.0 - delta));
        lines.push((-1.0 / e, (1.0 - delta) / e));
    }
    let value = |l: &(f64, f64), a: f64| l.1 + l.0 * a;
    // Start with the line that is highest at 0, steepest ascent among ties.
    let mut cur = lines
        .iter()
        .copied()
        .max_by(|x, y| x.1.total_cmp(&y.1).then(x.0.total_cmp(&y.0)))
        .expect("non-empty");
    let mut alpha = 0.0;
    let mut knots = vec![Knot::new(0.0, value(&cur, 0.0).clamp(0.0, 1.0))];
    loop {
        let mut next: Option<(f64, (f64, f64))> = None;
        for l in &lines {
            if l.0 <= cur.0 {
                continue;
            }
            let x = (l.1 - cur.1) / (cur.0 - l.0);
            if !(x >= alpha) {
                continue;
            }
            let better = match next {
                None => true,
                Some((bx, bl)) => x < bx || (x == bx && l.0 > bl.0),
            };
            if better {
                next = Some((x, *l));
            }
        }
        match next {
            Some((x, l)) if x < 1.0 => {
                if x > alpha {
                    knots.push(Knot::new(x, value(&cur, x).clamp(0.0, 1.0 - x)));
                }
                alpha = x;
                cur = l;
            }
            _ => break,
        }
    }
    knots.push(Knot::new(1.0, 0.0));
    let pl = PiecewiseLinear::from_knots(knots);
    Ok(TradeoffCurve::PiecewiseLinear(pl))
}

/// Smallest ε with `f >= f_{ε,δ}` everywhere.
///
/// Exact for piecewise-linear curves: on each segment the ratios involved
/// are monotone, so only knots need checking.
pub fn curve_eps_at_delta(f: &TradeoffCurve, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::domain(format!(
            "delta must lie in (0,1], got {delta}"
        )));
    }
    let pl = match f {
        TradeoffCurve::Perfect => return Ok(0.0),
        TradeoffCurve::Gaussian { mu } => return eps_of_delta(*mu, delta),
        other => other.to_piecewise(),
    };
    let mut ratio: f64 = 1.0;
    for k in pl.knots() {
        let slack = 1.0 - delta - k.alpha;
        if k.alpha > 0.0 {
            ratio = ratio.max((1.0 - delta - k.beta) / k.alpha);
        } else if k.beta < 1.0 - delta {
            return Err(Error::Unreachable(format!(
                "f(0) = {} is below 1 - delta",
                k.beta
            )));
        }
        if slack > 0.0 {
            if k.beta <= 0.0 {
                return Err(Error::Unreachable(format!(
                    "f vanishes at alpha = {} < 1 - delta",
                    k.alpha
                )));
            }
            ratio = ratio.max(slack / k.beta);
        }
    }
    Ok(ratio.ln().max(0.0))
}

/// k-fold advanced composition of (ε, δ')-DP mechanisms with slack δ.
pub fn advanced_composition(
    eps: f64,
    delta_prime: f64,
    delta: f64,
    k: u64,
) -> Result<EpsDeltaGuarantee> {
    if !(eps >= 0.0) || !(0.0..=1.0).contains(&delta_prime) || !(0.0..=1.0).contains(&delta) {
        return Err(Error::domain(
            "eps >= 0 and delta', delta in [0,1] required",
        ));
    }
    if delta == 0.0 {
        return Err(Error::domain(
            "advanced composition needs delta > 0 (ln(1/delta))",
        ));
    }
    if k == 0 {
        return Err(Error::domain("k must be >= 1"));
    }
    let kf = k as f64;
    let e = (2.0 * kf * (1.0 / delta).ln()).sqrt() * eps + kf * eps * eps.exp_m1() / 2.0;
    let d = kf * delta_prime + delta;
    Ok(EpsDeltaGuarantee {
        eps: e,
        delta: d.min(1.0),
        vacuous: d >= 1.0,
    })
}

/// Group privacy for (ε, δ)-DP: `(g ε, g e^{g-1} δ)`.
pub fn epsdelta_group(eps: f64, delta: f64, g: u32) -> Result<EpsDeltaGuarantee> {
    if !(eps >= 0.0) || !(0.0..=1.0).contains(&delta) {
        return Err(Error::domain("eps >= 0 and delta in [0,1] required"));
    }
    if g == 0 {
        return Err(Error::domain("group size must be >= 1"));
    }
    let gf = g as f64;
    let d = gf * (gf - 1.0).exp() * delta;
    Ok(EpsDeltaGuarantee {
        eps: gf * eps,
        delta: d.min(1.0),
        vacuous: d >= 1.0,
    })
}
