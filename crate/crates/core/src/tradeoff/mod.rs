//! Trade-off functions: representation, evaluation, inverse, symmetrization
//! and validation.
//!
//! A trade-off function maps a type I error `alpha` to the smallest type II
//! error any test can achieve. Analytic families (`Perfect`, `Gaussian`,
//! `EpsDelta`) are evaluated in closed form; everything produced by the
//! operator algebra (subsampling, group privacy, envelopes) is piecewise
//! linear.

mod io;
mod piecewise;

pub use io::{read_csv, write_csv, CurveJson};
pub use piecewise::{Knot, PiecewiseLinear};

use crate::error::{Error, Result};
use crate::normal;
use std::fmt;

/// Tolerance used when checking the trade-off axioms on numerically built
/// curves.
pub const AXIOM_TOLERANCE: f64 = 1e-12;

/// Default number of knots when a curve is discretized.
pub const DEFAULT_KNOTS: usize = 4097;

/// Extra geometrically spaced points near each end of an α grid.
pub const TAIL_KNOTS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum TradeoffCurve {
    /// `1 - alpha`: the two hypotheses are indistinguishable.
    Perfect,
    /// `G_mu(alpha) = Φ(Φ^{-1}(1 - alpha) - mu)`.
    Gaussian {
        mu: f64,
    },
    /// `max{0, 1 - delta - e^eps alpha, (1 - delta - alpha) e^{-eps}}`.
    EpsDelta {
        eps: f64,
        delta: f64,
    },
    PiecewiseLinear(PiecewiseLinear),
}

impl TradeoffCurve {
    pub fn gaussian(mu: f64) -> Result<Self> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::domain(format!(
                "Gaussian mu must be finite and >= 0, got {mu}"
            )));
        }
        Ok(if mu == 0.0 {
            TradeoffCurve::Perfect
        } else {
            TradeoffCurve::Gaussian { mu }
        })
    }

    pub fn eps_delta(eps: f64, delta: f64) -> Result<Self> {
        if !(eps >= 0.0) || eps.is_nan() {
            return Err(Error::domain(format!("eps must be >= 0, got {eps}")));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::domain(format!(
                "delta must lie in [0,1], got {delta}"
            )));
        }
        Ok(if eps == 0.0 && delta == 0.0 {
            TradeoffCurve::Perfect
        } else {
            TradeoffCurve::EpsDelta { eps, delta }
        })
    }

    /// Builds a piecewise-linear curve and rejects it if any axiom fails.
    pub fn piecewise(knots: Vec<Knot>) -> Result<Self> {
        let c = TradeoffCurve::PiecewiseLinear(PiecewiseLinear::from_knots(knots));
        let v = c.validate();
        if v.is_empty() {
            Ok(c)
        } else {
            Err(Error::InvalidCurve(
                v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            ))
        }
    }

    /// `f(alpha)`.
    pub fn evaluate(&self, alpha: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::domain(format!(
                "alpha must lie in [0,1], got {alpha}"
            )));
        }
        Ok(self.eval_unchecked(alpha))
    }

    pub(crate) fn eval_unchecked(&self, alpha: f64) -> f64 {
        match self {
            TradeoffCurve::Perfect => 1.0 - alpha,
            TradeoffCurve::Gaussian { mu } => gaussian_tradeoff(*mu, alpha),
            TradeoffCurve::EpsDelta { eps, delta } => {
                let e = eps.exp();
                let a = 1.0 - delta - e * alpha;
                let b = (1.0 - delta - alpha) / e;
                a.max(b).max(0.0)
            }
            TradeoffCurve::PiecewiseLinear(pl) => pl.eval(alpha),
        }
    }

    /// `h^{-1}(alpha) = inf { t in [0,1] : h(t) <= alpha }`.
    pub fn inverse(&self) -> TradeoffCurve {
        match self {
            // All analytic families here are symmetric.
            TradeoffCurve::Perfect
            | TradeoffCurve::Gaussian { .. }
            | TradeoffCurve::EpsDelta { .. } => self.clone(),
            TradeoffCurve::PiecewiseLinear(pl) => TradeoffCurve::PiecewiseLinear(pl.inverse()),
        }
    }

    /// Greatest convex function below `min{f, f^{-1}}`.
    pub fn symmetrize(&self) -> TradeoffCurve {
        match self {
            TradeoffCurve::PiecewiseLinear(pl) => {
                let m = pl.pointwise_min(&pl.inverse());
                TradeoffCurve::PiecewiseLinear(m.convex_envelope())
            }
            _ => self.clone(),
        }
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, TradeoffCurve::PiecewiseLinear(_))
    }

    /// Piecewise-linear version with `n` knots (analytic families) or a clone.
    ///
    /// Gaussian knots are placed at equal quantiles of `N(mu, 2)` in the
    /// `z = Φ^{-1}(1 - alpha)` parametrization, which equidistributes the
    /// chord error `(Δα)² f''/8` across the curve.
    pub fn discretize(&self, n: usize) -> PiecewiseLinear {
        let n = n.max(3);
        match self {
            TradeoffCurve::Perfect => PiecewiseLinear::from_pairs(&[(0.0, 1.0), (1.0, 0.0)]),
            TradeoffCurve::Gaussian { mu } => {
                let mut knots = Vec::with_capacity(n);
                knots.push(Knot::new(0.0, 1.0));
                let last = (n - 1) as f64;
                // k = n-2 .. 1 gives ascending alpha.
                for k in (1..n - 1).rev() {
                    let q = k as f64 / last;
                    let z = mu + std::f64::consts::SQRT_2 * normal::quantile(q).unwrap_or(0.0);
                    let a = normal::sf(z);
                    if a <= 0.0 || a >= 1.0 {
                        continue;
                    }
                    if knots.last().is_some_and(|p: &Knot| p.alpha >= a) {
                        continue;
                    }
                    knots.push(Knot::new(a, normal::cdf(z - mu)));
                }
                knots.push(Knot::new(1.0, 0.0));
                PiecewiseLinear::from_knots(knots)
            }
            TradeoffCurve::EpsDelta { eps, delta } => {
                let e = eps.exp();
                // Kink where both linear pieces meet: alpha* = (1-delta)/(1+e^eps).
                let kink = (1.0 - delta) / (1.0 + e);
                let zero = 1.0 - delta;
                let mut pts = vec![(0.0, 1.0 - delta)];
                if kink > 0.0 && kink < 1.0 {
                    pts.push((kink, self.eval_unchecked(kink)));
                }
                if zero > kink && zero < 1.0 {
                    pts.push((zero, 0.0));
                }
                pts.push((1.0, 0.0));
                PiecewiseLinear::from_pairs(&pts)
            }
            TradeoffCurve::PiecewiseLinear(pl) => pl.clone(),
        }
    }

    /// Knots of the piecewise-linear form (discretizing analytic variants).
    pub fn to_piecewise(&self) -> PiecewiseLinear {
        self.discretize(DEFAULT_KNOTS)
    }

    /// Checks the trade-off axioms. Empty iff the curve is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        match self {
            TradeoffCurve::Perfect => {}
            TradeoffCurve::Gaussian { mu } => {
                if !(*mu >= 0.0) || !mu.is_finite() {
                    out.push(Violation::new(Axiom::Parameter, None, format!("mu = {mu}")));
                }
            }
            TradeoffCurve::EpsDelta { eps, delta } => {
                if !(*eps >= 0.0) || eps.is_nan() {
                    out.push(Violation::new(
                        Axiom::Parameter,
                        None,
                        format!("eps = {eps}"),
                    ));
                }
                if !(0.0..=1.0).contains(delta) {
                    out.push(Violation::new(
                        Axiom::Parameter,
                        None,
                        format!("delta = {delta}"),
                    ));
                }
            }
            TradeoffCurve::PiecewiseLinear(pl) => validate_knots(pl.knots(), &mut out),
        }
        out
    }
}

/// `1 - f(alpha)`, without cancellation for the Gaussian family.
impl TradeoffCurve {
    pub(crate) fn complement(&self, alpha: f64) -> f64 {
        match self {
            TradeoffCurve::Gaussian { mu } if alpha > 0.0 && alpha < 1.0 => {
                let z = -normal::quantile(alpha).expect("alpha in (0,1)");
                normal::sf(z - mu)
            }
            _ => 1.0 - self.eval_unchecked(alpha),
        }
    }
}

/// `G_mu(alpha)` computed as `Φ(-Φ^{-1}(alpha) - mu)`, which keeps precision
/// for small alpha.
pub(crate) fn gaussian_tradeoff(mu: f64, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        return 1.0;
    }
    if alpha >= 1.0 {
        return 0.0;
    }
    let z = -normal::quantile(alpha).expect("alpha in (0,1)");
    normal::cdf(z - mu)
}

fn validate_knots(k: &[Knot], out: &mut Vec<Violation>) {
    let tol = AXIOM_TOLERANCE;
    if k.len() < 2 {
        out.push(Violation::new(
            Axiom::Endpoints,
            None,
            "fewer than two knots".into(),
        ));
        return;
    }
    if k[0].alpha != 0.0 {
        out.push(Violation::new(
            Axiom::Endpoints,
            Some(0),
            format!("first alpha = {}", k[0].alpha),
        ));
    }
    let last = k.len() - 1;
    if k[last].alpha != 1.0 {
        out.push(Violation::new(
            Axiom::Endpoints,
            Some(last),
            format!("last alpha = {}", k[last].alpha),
        ));
    }
    for (i, p) in k.iter().enumerate() {
        if !p.alpha.is_finite() || !p.beta.is_finite() {
            out.push(Violation::new(
                Axiom::Range,
                Some(i),
                "non-finite knot".into(),
            ));
            continue;
        }
        if p.beta < -tol || p.beta > 1.0 - p.alpha + tol || p.alpha < 0.0 || p.alpha > 1.0 {
            out.push(Violation::new(
                Axiom::Range,
                Some(i),
                format!("({}, {}) outside 0 <= beta <= 1 - alpha", p.alpha, p.beta),
            ));
        }
    }
    for i in 1..k.len() {
        if !(k[i].alpha > k[i - 1].alpha) {
            out.push(Violation::new(
                Axiom::Ordering,
                Some(i),
                "alpha not strictly increasing".into(),
            ));
        }
        if k[i].beta > k[i - 1].beta + tol {
            out.push(Violation::new(
                Axiom::Monotone,
                Some(i),
                "beta increases".into(),
            ));
        }
    }
    for i in 1..last {
        let (l, m, r) = (k[i - 1], k[i], k[i + 1]);
        let w = r.alpha - l.alpha;
        if w <= 0.0 {
            continue;
        }
        let chord = l.beta + (m.alpha - l.alpha) / w * (r.beta - l.beta);
        if m.beta > chord + tol {
            out.push(Violation::new(
                Axiom::Convexity,
                Some(i),
                format!("beta {} above neighbour chord {}", m.beta, chord),
            ));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axiom {
    Parameter,
    Endpoints,
    Ordering,
    Range,
    Monotone,
    Convexity,
}

/// A failed trade-off axiom, with the offending knot when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub axiom: Axiom,
    pub knot: Option<usize>,
    pub detail: String,
}

impl Violation {
    fn new(axiom: Axiom, knot: Option<usize>, detail: String) -> Self {
        Violation {
            axiom,
            knot,
            detail,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.knot {
            Some(i) => write!(f, "{:?} at knot {}: {}", self.axiom, i, self.detail),
            None => write!(f, "{:?}: {}", self.axiom, self.detail),
        }
    }
}

/// Uniform grid of `n` points on [0,1] plus [`TAIL_KNOTS`] geometrically
/// spaced points near each end.
pub fn alpha_grid(n: usize) -> Vec<f64> {
    let n = n.max(2);
    let step = 1.0 / (n - 1) as f64;
    let mut g: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
    let lo: f64 = 1e-15;
    let ratio = (step / lo).powf(1.0 / TAIL_KNOTS as f64);
    let mut t = lo;
    for _ in 0..TAIL_KNOTS {
        if t < step {
            g.push(t);
            g.push(1.0 - t);
        }
        t *= ratio;
    }
    g.sort_by(|a, b| a.total_cmp(b));
    g.dedup();
    g
}

/// Largest vertical distance between two curves.
///
/// Exact when both are piecewise linear (the maximum sits on a knot of one of
/// them); otherwise measured on the union of knots and a dense α grid.
pub fn sup_distance(f: &TradeoffCurve, g: &TradeoffCurve) -> f64 {
    let mut xs: Vec<f64> = Vec::new();
    for c in [f, g] {
        if let TradeoffCurve::PiecewiseLinear(pl) = c {
            xs.extend(pl.knots().iter().map(|k| k.alpha));
        }
    }
    if f.is_analytic() || g.is_analytic() {
        xs.extend(alpha_grid(16385));
    }
    xs.iter()
        .filter(|a| (0.0..=1.0).contains(*a))
        .map(|&a| (f.eval_unchecked(a) - g.eval_unchecked(a)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pl(pairs: &[(f64, f64)]) -> TradeoffCurve {
        TradeoffCurve::PiecewiseLinear(PiecewiseLinear::from_pairs(pairs))
    }

    #[test]
    fn evaluate_examples() {
        assert!((TradeoffCurve::Perfect.evaluate(0.3).unwrap() - 0.7).abs() < 1e-15);
        let g = TradeoffCurve::gaussian(1.0).unwrap();
        assert!((g.evaluate(0.5).unwrap() - 0.158_655_253_931_457).abs() < 1e-12);
        let ed = TradeoffCurve::EpsDelta {
            eps: 0.0,
            delta: 0.0,
        };
        assert!((ed.evaluate(0.2).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn evaluate_rejects_out_of_range() {
        assert!(TradeoffCurve::Perfect.evaluate(-0.1).is_err());
        assert!(TradeoffCurve::Perfect.evaluate(1.5).is_err());
    }

    #[test]
    fn inverse_examples() {
        let g = TradeoffCurve::gaussian(1.3).unwrap();
        assert_eq!(g.inverse(), g);
        assert_eq!(TradeoffCurve::Perfect.inverse(), TradeoffCurve::Perfect);
        let f = pl(&[(0.0, 0.5), (0.5, 0.0), (1.0, 0.0)]);
        assert!((f.inverse().evaluate(0.2).unwrap() - 0.3).abs() < 1e-15);
        assert!(f.inverse().validate().is_empty());
    }

    #[test]
    fn validate_examples() {
        assert!(TradeoffCurve::Perfect.validate().is_empty());
        let bad = pl(&[(0.0, 1.0), (0.5, 0.9), (1.0, 0.0)]);
        let v = bad.validate();
        assert!(v
            .iter()
            .any(|x| x.axiom == Axiom::Convexity && x.knot == Some(1)));
        let range = pl(&[(0.0, 1.2), (1.0, 0.0)]);
        assert!(range
            .validate()
            .iter()
            .any(|x| x.axiom == Axiom::Range && x.knot == Some(0)));
        let unordered = pl(&[(0.0, 1.0), (0.6, 0.2), (0.4, 0.3), (1.0, 0.0)]);
        assert!(unordered
            .validate()
            .iter()
            .any(|x| x.axiom == Axiom::Ordering));
        assert!(TradeoffCurve::piecewise(vec![Knot::new(0.0, 1.2), Knot::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn constructors_check_domain() {
        assert!(TradeoffCurve::gaussian(-1.0).is_err());
        assert_eq!(
            TradeoffCurve::gaussian(0.0).unwrap(),
            TradeoffCurve::Perfect
        );
        assert!(TradeoffCurve::eps_delta(1.0, 1.5).is_err());
        assert_eq!(
            TradeoffCurve::eps_delta(0.0, 0.0).unwrap(),
            TradeoffCurve::Perfect
        );
    }

    #[test]
    fn gaussian_discretization_is_accurate() {
        let grid = alpha_grid(200_001);
        for &mu in &[0.5, 1.0, 3.0, 6.0] {
            let g = TradeoffCurve::Gaussian { mu };
            let d = TradeoffCurve::PiecewiseLinear(g.discretize(DEFAULT_KNOTS));
            assert!(d.validate().is_empty(), "mu={mu}");
            let err = grid
                .iter()
                .map(|&a| (d.eval_unchecked(a) - g.eval_unchecked(a)).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-6, "mu={mu} err={err}");
        }
    }

    #[test]
    fn epsdelta_discretization_is_exact() {
        let c = TradeoffCurve::EpsDelta {
            eps: 0.7,
            delta: 0.05,
        };
        let d = TradeoffCurve::PiecewiseLinear(c.discretize(10));
        assert!(d.validate().is_empty());
        for a in alpha_grid(1001) {
            assert!((d.eval_unchecked(a) - c.eval_unchecked(a)).abs() < 1e-14);
        }
    }

    #[test]
    fn symmetrize_analytic_is_identity() {
        let g = TradeoffCurve::Gaussian { mu: 0.8 };
        assert_eq!(g.symmetrize(), g);
        assert_eq!(TradeoffCurve::Perfect.symmetrize(), TradeoffCurve::Perfect);
    }

    #[test]
    fn alpha_grid_has_tails() {
        let g = alpha_grid(4097);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(g[1] < 1e-14);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
