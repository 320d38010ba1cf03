//! Numeric composition of subsampled-Gaussian rounds through the privacy
//! loss distribution.
//!
//! The loss is stored on a grid of multiples of [`PldOptions::loss_step`]
//! under the alternative hypothesis, with a separate mass at `+inf`.
//! Rounds compose by FFT convolution; `δ(ε) = E[(1 - e^{ε-L})_+]`.

use crate::error::{Error, Result};
use crate::normal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

/// Smallest δ a resolution check is measured against.
pub const MIN_TARGET_DELTA: f64 = 1e-10;

/// A run of `count` identical subsampled-Gaussian rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundSpec {
    pub p: f64,
    pub sigma: f64,
    pub count: u64,
}

impl RoundSpec {
    pub fn new(p: f64, sigma: f64, count: u64) -> Result<Self> {
        let s = RoundSpec { p, sigma, count };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::domain(format!(
                "p must lie in [0,1], got {}",
                self.p
            )));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::domain(format!(
                "sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if self.count == 0 {
            return Err(Error::domain("round count must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PldOptions {
    /// Loss grid spacing.
    pub loss_step: f64,
    /// Per-round cut in the observation: `z <= mu + z_span`.
    pub z_span: f64,
    /// Mass dropped from each side after every convolution.
    pub tail_mass: f64,
}

impl Default for PldOptions {
    fn default() -> Self {
        PldOptions {
            loss_step: 1e-4,
            z_span: 12.0,
            tail_mass: 1e-15,
        }
    }
}

/// A discretized privacy loss distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Pld {
    pmf: Vec<f64>,
    /// Grid index of `pmf[0]`.
    offset: i64,
    /// Mass at `+inf`, including everything truncated from the top.
    inf_mass: f64,
    step: f64,
}

impl Pld {
    fn identity(step: f64) -> Self {
        Pld {
            pmf: vec![1.0],
            offset: 0,
            inf_mass: 0.0,
            step,
        }
    }

    /// Loss distribution of one round, for the subsampled pair and its mirror.
    ///
    /// With `mu = 1/σ` and `ℓ(z) = ln(1 - p + p e^{mu z - mu²/2})` the three
    /// pieces are: `z >= mu/2` under the mixture at loss `ℓ(z)`; the mixture's
    /// excess `(1-p)(Φ(mu/2) - Φ(-mu/2))` at loss 0; and `z >= mu/2` under
    /// `N(0,1)` at loss `-ℓ(z)`.
    pub fn round(p: f64, sigma: f64, opts: &PldOptions) -> Result<Self> {
        RoundSpec::new(p, sigma, 1)?;
        let step = opts.loss_step;
        if p == 0.0 {
            return Ok(Pld::identity(step));
        }
        let mu = 1.0 / sigma;
        let half = mu / 2.0;
        let loss = |z: f64| (p * (mu * z - mu * mu / 2.0).exp_m1()).ln_1p();
        let z_max = mu + opts.z_span;
        let kmax = ((loss(z_max) / step).ceil() as usize).max(1);
        // Observation at which the loss crosses k·step.
        let z_at = |k: usize| -> f64 {
            if k == 0 {
                return half;
            }
            let l = k as f64 * step;
            (((l.exp_m1() + p) / p).ln() + mu * mu / 2.0) / mu
        };
        let q_sf = |z: f64| (1.0 - p) * normal::sf(z) + p * normal::sf(z - mu);
        let p_sf = normal::sf;

        let mut pos = vec![0.0; kmax + 1];
        let mut neg = vec![0.0; kmax + 1];
        let e_step = (-step).exp();
        let denom = -(-step).exp_m1();
        let z0 = z_at(0);
        let (mut q0, mut p0) = (q_sf(z0), p_sf(z0));
        for k in 0..kmax {
            let z1 = z_at(k + 1);
            let (q1, p1) = (q_sf(z1), p_sf(z1));
            let (wq, wp) = ((q0 - q1).max(0.0), (p0 - p1).max(0.0));
            let a = k as f64 * step;
            // Split each interval's mass between its end points so that both
            // the mass and its e^{-L} moment are preserved.
            // Upper branch: mass wq, moment wp.
            let lo_share = ((wp * a.exp() - wq * e_step) / denom).clamp(0.0, wq);
            pos[k] += lo_share;
            pos[k + 1] += wq - lo_share;
            // Mirror branch on [-(a+step), -a]: mass wp, moment wq.
            let low_share = mirror_split(wp, wq, a, step);
            neg[k + 1] += low_share;
            neg[k] += wp - low_share;
            q0 = q1;
            p0 = p1;
        }
        // Beyond z_max: upper branch to +inf, mirror branch to the lowest bin.
        let inf_mass = q0;
        neg[kmax] += p0;

        let mut pmf = Vec::with_capacity(2 * kmax + 1);
        pmf.extend(neg[1..].iter().rev());
        pmf.push(neg[0] + pos[0] + (1.0 - p) * (normal::cdf(half) - normal::cdf(-half)));
        pmf.extend_from_slice(&pos[1..]);
        Ok(truncate(
            pmf,
            -(kmax as i64),
            inf_mass,
            step,
            opts.tail_mass,
        ))
    }

    /// Composition of every spec, in order.
    pub fn compose(specs: &[RoundSpec], opts: &PldOptions) -> Result<Self> {
        let mut fft = Convolver::new();
        let mut acc = Pld::identity(opts.loss_step);
        for s in specs {
            s.validate()?;
            let one = Pld::round(s.p, s.sigma, opts)?;
            let many = fft.power(&one, s.count, opts.tail_mass);
            acc = fft.convolve(&acc, &many, opts.tail_mass);
        }
        Ok(acc)
    }

    pub fn inf_mass(&self) -> f64 {
        self.inf_mass
    }

    pub fn len(&self) -> usize {
        self.pmf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmf.is_empty()
    }

    /// Finite support `(loss, mass)`.
    pub fn support(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.pmf
            .iter()
            .enumerate()
            .map(move |(i, &w)| ((i as i64 + self.offset) as f64 * self.step, w))
    }

    /// Refuses when the mass at `+inf` exceeds a tenth of the target δ.
    pub fn check_target(&self, delta: f64) -> Result<()> {
        let limit = 0.1 * delta.max(MIN_TARGET_DELTA);
        if self.inf_mass > limit {
            return Err(Error::Resolution {
                truncated: self.inf_mass,
                limit,
            });
        }
        Ok(())
    }

    /// `δ(ε) = inf_mass + Σ w (1 - e^{ε-L})_+`.
    pub fn delta(&self, eps: f64) -> f64 {
        let finite: f64 = self
            .support()
            .filter(|(l, _)| *l > eps)
            .map(|(l, w)| -w * (eps - l).exp_m1())
            .sum();
        (self.inf_mass + finite).min(1.0)
    }

    /// Smallest ε ≥ 0 with `δ(ε) <= delta`.
    pub fn eps_at_delta(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::domain(format!(
                "delta must lie in (0,1], got {delta}"
            )));
        }
        if self.inf_mass >= delta {
            return Err(Error::Unreachable(format!(
                "mass {:e} at infinite loss exceeds delta {delta:e}",
                self.inf_mass
            )));
        }
        if self.delta(0.0) <= delta {
            return Ok(0.0);
        }
        let top = (self.pmf.len() as i64 + self.offset) as f64 * self.step;
        let (mut lo, mut hi) = (0.0, top.max(self.step));
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.delta(mid) > delta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }
}

/// Share of a mirror interval `[-(a+step), -a]` assigned to its lower end,
/// given mass `w` and moment `v = ∫ e^{-L}`.
fn mirror_split(w: f64, v: f64, a: f64, step: f64) -> f64 {
    // Lower end -b, upper end -a: w_lo e^{b} + (w - w_lo) e^{a} = v.
    let b = a + step;
    let num = v * (-a).exp() - w;
    let den = (b - a).exp_m1();
    (num / den).clamp(0.0, w)
}

struct Convolver {
    planner: FftPlanner<f64>,
}

impl Convolver {
    fn new() -> Self {
        Convolver {
            planner: FftPlanner::new(),
        }
    }

    fn convolve(&mut self, a: &Pld, b: &Pld, tail: f64) -> Pld {
        let n = a.pmf.len() + b.pmf.len() - 1;
        let pmf = if a.pmf.len().min(b.pmf.len()) <= 32 {
            direct(&a.pmf, &b.pmf)
        } else {
            let size = n.next_power_of_two();
            let fwd = self.planner.plan_fft_forward(size);
            let inv = self.planner.plan_fft_inverse(size);
            let load = |v: &[f64]| {
                let mut buf = vec![Complex::new(0.0, 0.0); size];
                for (d, s) in buf.iter_mut().zip(v) {
                    d.re = *s;
                }
                buf
            };
            let mut fa = load(&a.pmf);
            fwd.process(&mut fa);
            if std::ptr::eq(a, b) {
                for x in fa.iter_mut() {
                    *x = *x * *x;
                }
            } else {
                let mut fb = load(&b.pmf);
                fwd.process(&mut fb);
                for (x, y) in fa.iter_mut().zip(&fb) {
                    *x *= *y;
                }
            }
            inv.process(&mut fa);
            let scale = 1.0 / size as f64;
            fa[..n].iter().map(|c| (c.re * scale).max(0.0)).collect()
        };
        let inf = 1.0 - (1.0 - a.inf_mass) * (1.0 - b.inf_mass);
        truncate(pmf, a.offset + b.offset, inf, a.step, tail)
    }

    fn power(&mut self, base: &Pld, mut n: u64, tail: f64) -> Pld {
        let mut out: Option<Pld> = None;
        let mut sq = base.clone();
        loop {
            if n & 1 == 1 {
                out = Some(match out {
                    None => sq.clone(),
                    Some(o) => self.convolve(&o, &sq, tail),
                });
            }
            n >>= 1;
            if n == 0 {
                break;
            }
            sq = self.convolve(&sq, &sq, tail);
        }
        out.unwrap_or_else(|| Pld::identity(base.step))
    }
}

fn direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Drops at most `tail` mass from each end: the lower tail moves onto the
/// lowest kept bin, the upper tail goes to `+inf`.
fn truncate(pmf: Vec<f64>, offset: i64, inf: f64, step: f64, tail: f64) -> Pld {
    let mut lo = 0;
    let mut low_mass = 0.0;
    while lo + 1 < pmf.len() && low_mass + pmf[lo] < tail {
        low_mass += pmf[lo];
        lo += 1;
    }
    let mut hi = pmf.len();
    let mut high_mass = 0.0;
    while hi > lo + 1 && high_mass + pmf[hi - 1] < tail {
        high_mass += pmf[hi - 1];
        hi -= 1;
    }
    let mut kept = pmf[lo..hi].to_vec();
    kept[0] += low_mass;
    Pld {
        pmf: kept,
        offset: offset + lo as i64,
        inf_mass: (inf + high_mass).min(1.0),
        step,
    }
}

/// `δ(ε)` for each ε of the composed rounds.
///
/// Refuses when the mass pushed to `+inf` exceeds a tenth of the smallest
/// positive δ requested (floored at [`MIN_TARGET_DELTA`]).
pub fn pld_delta(specs: &[RoundSpec], eps_grid: &[f64]) -> Result<Vec<f64>> {
    pld_delta_with(specs, eps_grid, &PldOptions::default())
}

pub fn pld_delta_with(
    specs: &[RoundSpec],
    eps_grid: &[f64],
    opts: &PldOptions,
) -> Result<Vec<f64>> {
    if let Some(e) = eps_grid.iter().find(|e| !(**e >= 0.0)) {
        return Err(Error::domain(format!("eps must be >= 0, got {e}")));
    }
    let pld = Pld::compose(specs, opts)?;
    let deltas: Vec<f64> = eps_grid.iter().map(|&e| pld.delta(e)).collect();
    check_resolution(&pld, &deltas)?;
    Ok(deltas)
}

pub(crate) fn check_resolution(pld: &Pld, deltas: &[f64]) -> Result<()> {
    let floor = deltas
        .iter()
        .map(|d| d - pld.inf_mass)
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min)
        .clamp(MIN_TARGET_DELTA, 1.0);
    let limit = 0.1 * floor;
    if pld.inf_mass > limit {
        return Err(Error::Resolution {
            truncated: pld.inf_mass,
            limit,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gdp::delta_of_eps;

    fn total(p: &Pld) -> f64 {
        p.pmf.iter().sum::<f64>() + p.inf_mass
    }

    #[test]
    fn round_is_a_distribution() {
        let opts = PldOptions::default();
        for &(p, s) in &[(0.01, 2.0), (0.3, 1.0), (1.0, 0.7)] {
            let r = Pld::round(p, s, &opts).unwrap();
            assert!((total(&r) - 1.0).abs() < 1e-12, "p={p} s={s}");
            // E_Q[e^{-L}] = 1 for a loss distribution without mass at infinity.
            let m: f64 = r.support().map(|(l, w)| w * (-l).exp()).sum();
            assert!((m - 1.0).abs() < 1e-7, "p={p} s={s} {m}");
        }
    }

    #[test]
    fn single_gaussian_round() {
        let specs = [RoundSpec::new(1.0, 2.0, 1).unwrap()];
        let d = pld_delta(&specs, &[0.5]).unwrap();
        assert!((d[0] - delta_of_eps(0.5, 0.5).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn four_rounds_compose_to_mu_one() {
        let specs = [RoundSpec::new(1.0, 2.0, 4).unwrap()];
        let eps: Vec<f64> = (0..20).map(|i| i as f64 * 5.0 / 19.0).collect();
        let d = pld_delta(&specs, &eps).unwrap();
        for (e, got) in eps.iter().zip(&d) {
            let want = delta_of_eps(1.0, *e).unwrap();
            assert!(*got >= want - 1e-9, "eps={e}");
            assert!((got - want).abs() < 1e-6, "eps={e} got={got} want={want}");
        }
    }

    #[test]
    fn heterogeneous_gaussian_rounds() {
        let specs = [
            RoundSpec::new(1.0, 2.0, 3).unwrap(),
            RoundSpec::new(1.0, 1.0, 1).unwrap(),
            RoundSpec::new(1.0, 4.0, 5).unwrap(),
        ];
        let mu = (3.0 / 4.0 + 1.0 + 5.0 / 16.0f64).sqrt();
        let eps: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let d = pld_delta(&specs, &eps).unwrap();
        for (e, got) in eps.iter().zip(&d) {
            assert!(
                (got - delta_of_eps(mu, *e).unwrap()).abs() < 1e-6,
                "eps={e}"
            );
        }
    }

    #[test]
    fn zero_rate_is_perfectly_private() {
        let specs = [RoundSpec::new(0.0, 1.0, 500).unwrap()];
        let d = pld_delta(&specs, &[0.0, 0.1, 3.0]).unwrap();
        assert!(d.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn eps_inversion() {
        let specs = [RoundSpec::new(1.0, 1.0, 1).unwrap()];
        let pld = Pld::compose(&specs, &PldOptions::default()).unwrap();
        let eps = pld.eps_at_delta(1e-5).unwrap();
        let want = crate::gdp::eps_of_delta(1.0, 1e-5).unwrap();
        assert!((eps - want).abs() < 1e-3, "{eps} vs {want}");
        assert!(pld.delta(eps) <= 1e-5);
        assert_eq!(pld.eps_at_delta(0.9).unwrap(), 0.0);
    }

    #[test]
    fn coarse_cut_is_refused() {
        let opts = PldOptions {
            z_span: 1.0,
            ..PldOptions::default()
        };
        let specs = [RoundSpec::new(0.5, 1.0, 10).unwrap()];
        match pld_delta_with(&specs, &[1.0, 2.0], &opts) {
            Err(Error::Resolution { truncated, limit }) => assert!(truncated > limit),
            other => panic!("expected resolution error, got {other:?}"),
        }
    }

    #[test]
    fn more_rounds_more_loss() {
        let opts = PldOptions::default();
        let a = Pld::compose(&[RoundSpec::new(0.1, 1.5, 10).unwrap()], &opts).unwrap();
        let b = Pld::compose(&[RoundSpec::new(0.1, 1.5, 20).unwrap()], &opts).unwrap();
        for &e in &[0.0, 0.5, 1.0, 2.0] {
            assert!(b.delta(e) >= a.delta(e));
        }
    }
}
