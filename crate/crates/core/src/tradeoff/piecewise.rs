//! Piecewise-linear trade-off curves and the geometric primitives the
//! operator algebra is built on (inverse, pointwise minimum, lower hull).

use serde::{Deserialize, Serialize};

/// One knot `(alpha, beta)` of a piecewise-linear curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub alpha: f64,
    pub beta: f64,
}

impl Knot {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Knot { alpha, beta }
    }
}

/// A trade-off curve given by linear interpolation between knots.
///
/// Knots are kept sorted by strictly increasing `alpha`; the first knot sits
/// at `alpha = 0` and the last at `alpha = 1`. Use
/// [`TradeoffCurve::validate`](super::TradeoffCurve::validate) to check the
/// remaining axioms.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<Knot>,
}

impl PiecewiseLinear {
    /// Wraps knots as given. Callers are expected to validate.
    pub fn from_knots(knots: Vec<Knot>) -> Self {
        PiecewiseLinear { knots }
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self::from_knots(pairs.iter().map(|&(a, b)| Knot::new(a, b)).collect())
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Linear interpolation; `alpha` is clamped to the knot range.
    pub fn eval(&self, alpha: f64) -> f64 {
        interpolate(&self.knots, alpha)
    }

    /// `h^{-1}(y) = inf { t : h(t) <= y }`, the leftmost crossing on flat runs.
    pub fn inverse(&self) -> PiecewiseLinear {
        let k = &self.knots;
        let mut out: Vec<Knot> = Vec::with_capacity(k.len() + 1);
        // Walk right-to-left so beta ascends; equal betas collapse onto the
        // leftmost alpha, which is the last one seen.
        for knot in k.iter().rev() {
            match out.last_mut() {
                Some(last) if last.alpha == knot.beta => last.beta = knot.alpha,
                _ => out.push(Knot::new(knot.beta, knot.alpha)),
            }
        }
        if let Some(first) = out.first() {
            if first.alpha > 0.0 {
                // f never reaches levels below its minimum; the infimum over
                // an empty set is taken as 1 there.
                out.insert(0, Knot::new(0.0, 1.0));
            }
        }
        if let Some(last) = out.last() {
            if last.alpha < 1.0 {
                out.push(Knot::new(1.0, 0.0));
            }
        }
        PiecewiseLinear { knots: out }
    }

    /// Pointwise minimum of two curves, with crossing points inserted so the
    /// result is exact.
    pub fn pointwise_min(&self, other: &PiecewiseLinear) -> PiecewiseLinear {
        let alphas = merged_alphas(&self.knots, &other.knots);
        let mut out: Vec<Knot> = Vec::with_capacity(alphas.len() * 2);
        let mut prev: Option<(f64, f64, f64)> = None;
        for &a in &alphas {
            let (u, v) = (self.eval(a), other.eval(a));
            if let Some((pa, pu, pv)) = prev {
                let d0 = pu - pv;
                let d1 = u - v;
                if (d0 < 0.0 && d1 > 0.0) || (d0 > 0.0 && d1 < 0.0) {
                    let t = d0 / (d0 - d1);
                    let x = pa + t * (a - pa);
                    if x > pa && x < a {
                        let y = pu + t * (u - pu);
                        out.push(Knot::new(x, y));
                    }
                }
            }
            out.push(Knot::new(a, u.min(v)));
            prev = Some((a, u, v));
        }
        PiecewiseLinear { knots: out }
    }

    /// Greatest convex function below the curve (its biconjugate on [0, 1]).
    pub fn convex_envelope(&self) -> PiecewiseLinear {
        PiecewiseLinear {
            knots: lower_hull(&self.knots),
        }
    }

    /// Maps every knot through `f(alpha, beta) -> beta'`.
    pub fn map_beta(&self, f: impl Fn(f64, f64) -> f64) -> PiecewiseLinear {
        PiecewiseLinear {
            knots: self
                .knots
                .iter()
                .map(|k| Knot::new(k.alpha, f(k.alpha, k.beta)))
                .collect(),
        }
    }
}

/// Interpolates sorted knots at `x`, clamping outside the range.
pub(crate) fn interpolate(knots: &[Knot], x: f64) -> f64 {
    let n = knots.len();
    if n == 0 {
        return f64::NAN;
    }
    if x <= knots[0].alpha {
        return knots[0].beta;
    }
    if x >= knots[n - 1].alpha {
        return knots[n - 1].beta;
    }
    let i = knots.partition_point(|k| k.alpha <= x);
    let (l, r) = (knots[i - 1], knots[i]);
    if r.alpha == l.alpha {
        return l.beta.min(r.beta);
    }
    let t = (x - l.alpha) / (r.alpha - l.alpha);
    l.beta + t * (r.beta - l.beta)
}

fn merged_alphas(a: &[Knot], b: &[Knot]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x.alpha <= y.alpha => {
                i += 1;
                x.alpha
            }
            (Some(_), Some(y)) => {
                j += 1;
                y.alpha
            }
            (Some(x), None) => {
                i += 1;
                x.alpha
            }
            (None, Some(y)) => {
                j += 1;
                y.alpha
            }
            (None, None) => unreachable!(),
        };
        if out.last() != Some(&next) {
            out.push(next);
        }
    }
    out
}

/// Lower convex hull (monotone chain) of points sorted by `alpha`.
pub(crate) fn lower_hull(points: &[Knot]) -> Vec<Knot> {
    let mut hull: Vec<Knot> = Vec::with_capacity(points.len());
    for &p in points {
        if let Some(last) = hull.last_mut() {
            if last.alpha == p.alpha {
                last.beta = last.beta.min(p.beta);
                // The lowered point may now break convexity behind it.
                let q = *last;
                hull.pop();
                push_hull(&mut hull, q);
                continue;
            }
        }
        push_hull(&mut hull, p);
    }
    hull
}

fn push_hull(hull: &mut Vec<Knot>, p: Knot) {
    while hull.len() >= 2 {
        let o = hull[hull.len() - 2];
        let a = hull[hull.len() - 1];
        let cross =
            (a.alpha - o.alpha) * (p.beta - o.beta) - (a.beta - o.beta) * (p.alpha - o.alpha);
        if cross <= 0.0 {
            hull.pop();
        } else {
            break;
        }
    }
    hull.push(p);
}
