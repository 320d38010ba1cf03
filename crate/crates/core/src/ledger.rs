//! Per-client privacy ledger and the report derived from it.

use crate::compose::{clt_mu_from_rate, CLT_MIN_SIGMA};
use crate::error::{Error, Result};
use crate::gdp::{curve_eps_at_delta, delta_of_eps, eps_of_delta, epsdelta_envelope, group_curve};
use crate::pld::{check_resolution, Pld, PldOptions, RoundSpec};
use crate::tradeoff::TradeoffCurve;
use serde::{Deserialize, Serialize};

/// ε points used to build the (ε, δ) envelope for group reports.
const ENVELOPE_POINTS: usize = 400;

/// Rounds consumed by one client and its budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountLedger {
    pub rounds: Vec<RoundSpec>,
    pub target_delta: f64,
    #[serde(default)]
    pub budget_eps: Option<f64>,
}

impl AccountLedger {
    pub fn new(target_delta: f64, budget_eps: Option<f64>) -> Result<Self> {
        let l = AccountLedger {
            rounds: Vec::new(),
            target_delta,
            budget_eps,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_delta > 0.0 && self.target_delta < 1.0) {
            return Err(Error::config(
                "target_delta",
                format!("must lie in (0,1), got {}", self.target_delta),
            ));
        }
        if let Some(b) = self.budget_eps {
            if !(b >= 0.0) {
                return Err(Error::config(
                    "budget_eps",
                    format!("must be >= 0, got {b}"),
                ));
            }
        }
        for (i, r) in self.rounds.iter().enumerate() {
            r.validate()
                .map_err(|e| Error::config(format!("rounds[{i}]"), e.to_string()))?;
        }
        Ok(())
    }

    /// Appends rounds; a run with the same `(p, σ)` as the last one is merged.
    pub fn append(&mut self, spec: RoundSpec) -> Result<()> {
        spec.validate()?;
        match self.rounds.last_mut() {
            Some(last) if last.p == spec.p && last.sigma == spec.sigma => {
                last.count += spec.count;
            }
            _ => self.rounds.push(spec),
        }
        Ok(())
    }

    pub fn total_rounds(&self) -> u64 {
        self.rounds.iter().map(|r| r.count).sum()
    }

    /// Shared `(p, σ)` when every run uses the same pair.
    pub fn homogeneous(&self) -> Option<(f64, f64)> {
        let first = self.rounds.first()?;
        self.rounds
            .iter()
            .all(|r| r.p == first.p && r.sigma == first.sigma)
            .then_some((first.p, first.sigma))
    }

    /// `sqrt(Σ T / σ²)` when every round has `p` of 0 or 1, i.e. exact Gaussian DP.
    fn exact_mu(&self) -> Option<f64> {
        self.rounds
            .iter()
            .all(|r| r.p == 0.0 || r.p == 1.0)
            .then(|| {
                self.rounds
                    .iter()
                    .filter(|r| r.p == 1.0)
                    .map(|r| r.count as f64 / (r.sigma * r.sigma))
                    .sum::<f64>()
                    .sqrt()
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Clt,
    Pld,
}

/// Guarantee of a ledger through one accounting path, scaled for `group`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    /// Exact μ for Gaussian rounds; asymptotic μ on the CLT path; on the PLD
    /// path otherwise, the μ whose `G_μ` has the same ε at `delta`.
    pub mu: Option<f64>,
    pub eps_at_delta: Option<f64>,
    pub delta: f64,
    pub zcdp_rho: Option<f64>,
    pub group: u32,
    #[serde(rename = "T")]
    pub rounds: u64,
    pub p: Option<f64>,
    pub sigma: Option<f64>,
    pub method: Method,
    pub vacuous: bool,
    /// Derived from a discretized curve rather than in closed form.
    #[serde(default)]
    pub grid_approximate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub reports: Vec<PrivacyReport>,
    /// Why the CLT path was skipped, if it was.
    pub clt_note: Option<String>,
    pub budget_eps: Option<f64>,
    /// Numeric δ at the budget ε (group size 1 only).
    pub delta_at_budget: Option<f64>,
    pub budget_exceeded: bool,
}

impl LedgerReport {
    pub fn get(&self, method: Method) -> Option<&PrivacyReport> {
        self.reports.iter().find(|r| r.method == method)
    }
}

/// Largest μ with `delta_of_eps(μ, eps) <= delta`.
fn matched_mu(eps: f64, delta: f64) -> Result<f64> {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while delta_of_eps(hi, eps)? <= delta {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Ok(f64::INFINITY);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if delta_of_eps(mid, eps)? <= delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(lo)
}

fn rho(mu: Option<f64>) -> Option<f64> {
    mu.filter(|m| m.is_finite()).map(|m| m * m / 2.0)
}

/// Trade-off curve of a composed loss distribution: the envelope of its
/// `(ε, δ(ε))` pairs on a uniform ε grid reaching down to `δ·1e-3`.
pub fn pld_curve(pld: &Pld, delta: f64) -> Result<TradeoffCurve> {
    let floor = (delta * 1e-3).max(pld.inf_mass() * 2.0).max(1e-300);
    let top = pld.eps_at_delta(floor.min(1.0))?.max(1e-3);
    let pts: Vec<(f64, f64)> = (0..ENVELOPE_POINTS)
        .map(|i| {
            let e = top * i as f64 / (ENVELOPE_POINTS - 1) as f64;
            (e, pld.delta(e))
        })
        .collect();
    epsdelta_envelope(&pts)
}

/// Reports the ledger's guarantee through the numeric (PLD) path and, when
/// all rounds share `(p, σ)` with `σ >= 0.5`, the asymptotic (CLT) path.
pub fn ledger_report(ledger: &AccountLedger, group: u32) -> Result<LedgerReport> {
    ledger_report_with(ledger, group, &PldOptions::default())
}

pub fn ledger_report_with(
    ledger: &AccountLedger,
    group: u32,
    opts: &PldOptions,
) -> Result<LedgerReport> {
    ledger.validate()?;
    if ledger.rounds.is_empty() {
        return Err(Error::config("rounds", "ledger has no rounds"));
    }
    if group == 0 {
        return Err(Error::config("group", "must be >= 1"));
    }
    let delta = ledger.target_delta;
    let g = group as f64;
    let t = ledger.total_rounds();
    let (p, sigma) = ledger.homogeneous().unzip();
    let exact = ledger.exact_mu();

    let pld = Pld::compose(&ledger.rounds, opts)?;
    let mut grid_approximate = false;
    let (pld_mu, pld_eps) = if let Some(mu) = exact {
        // Gaussian rounds compose exactly; the numeric path only confirms it.
        let eps = pld.eps_at_delta(delta).ok();
        check_resolution(&pld, &[pld.delta(eps.unwrap_or(0.0))])?;
        let gm = g * mu;
        (Some(gm), eps_of_delta(gm, delta).ok())
    } else if group == 1 {
        let eps = pld.eps_at_delta(delta).ok();
        if let Some(e) = eps {
            check_resolution(&pld, &[pld.delta(e)])?;
        }
        let mu = eps.map(|e| matched_mu(e, delta)).transpose()?;
        (mu, eps)
    } else {
        grid_approximate = true;
        let env = pld_curve(&pld, delta)?;
        let grp = group_curve(&env, group)?;
        let eps = curve_eps_at_delta(&grp, delta).ok();
        let mu = eps.map(|e| matched_mu(e, delta)).transpose()?;
        (mu, eps)
    };
    let pld_report = PrivacyReport {
        mu: pld_mu,
        eps_at_delta: pld_eps,
        delta,
        zcdp_rho: rho(pld_mu),
        group,
        rounds: t,
        p,
        sigma,
        method: Method::Pld,
        vacuous: pld_eps.is_none(),
        grid_approximate,
    };

    let mut reports = Vec::with_capacity(2);
    let mut clt_note = None;
    match (p, sigma) {
        (Some(p), Some(s)) => {
            let mu = if let Some(mu) = exact {
                Ok(mu)
            } else {
                clt_mu_from_rate(p, t as f64, s).map(|c| c.mu)
            };
            match mu {
                Ok(mu) => {
                    let gm = g * mu;
                    let eps = eps_of_delta(gm, delta).ok();
                    reports.push(PrivacyReport {
                        mu: Some(gm),
                        eps_at_delta: eps,
                        delta,
                        zcdp_rho: rho(Some(gm)),
                        group,
                        rounds: t,
                        p: Some(p),
                        sigma: Some(s),
                        method: Method::Clt,
                        vacuous: eps.is_none(),
                        grid_approximate: false,
                    });
                }
                Err(_) => {
                    clt_note = Some(format!(
                        "CLT approximation refused: sigma = {s} < {CLT_MIN_SIGMA}"
                    ))
                }
            }
        }
        _ => clt_note = Some("CLT approximation needs a single (p, sigma)".into()),
    }
    reports.insert(0, pld_report);

    let budget_eps = ledger.budget_eps;
    let delta_at_budget = budget_eps.filter(|_| group == 1).map(|b| pld.delta(b));
    let budget_exceeded = match budget_eps {
        None => false,
        Some(b) => pld_eps.is_none_or(|e| e > b),
    };
    Ok(LedgerReport {
        reports,
        clt_note,
        budget_eps,
        delta_at_budget,
        budget_exceeded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ledger(specs: &[(f64, f64, u64)]) -> AccountLedger {
        let mut l = AccountLedger::new(1e-5, None).unwrap();
        for &(p, s, c) in specs {
            l.append(RoundSpec::new(p, s, c).unwrap()).unwrap();
        }
        l
    }

    #[test]
    fn single_gaussian_round() {
        let r = ledger_report(&ledger(&[(1.0, 2.0, 1)]), 1).unwrap();
        let pld = r.get(Method::Pld).unwrap();
        let clt = r.get(Method::Clt).unwrap();
        assert_eq!(pld.mu, Some(0.5));
        assert_eq!(clt.mu, Some(0.5));
        let want = eps_of_delta(0.5, 1e-5).unwrap();
        assert!((pld.eps_at_delta.unwrap() - want).abs() < 1e-12);
        assert!((clt.eps_at_delta.unwrap() - want).abs() < 1e-12);
        assert_eq!(pld.zcdp_rho, Some(0.125));
    }

    #[test]
    fn group_doubles_mu() {
        let l = ledger(&[(0.01, 2.0, 1000)]);
        let one = ledger_report(&l, 1).unwrap();
        let two = ledger_report(&l, 2).unwrap();
        let (a, b) = (
            one.get(Method::Clt).unwrap().mu.unwrap(),
            two.get(Method::Clt).unwrap().mu.unwrap(),
        );
        assert!((b - 2.0 * a).abs() < 1e-15);
        assert_eq!(two.get(Method::Clt).unwrap().zcdp_rho, Some(b * b / 2.0));
        let e1 = one.get(Method::Pld).unwrap().eps_at_delta.unwrap();
        let e2 = two.get(Method::Pld).unwrap().eps_at_delta.unwrap();
        assert!(e2 > e1);
        assert!(two.get(Method::Pld).unwrap().grid_approximate);
    }

    #[test]
    fn append_merges_runs() {
        let mut a = AccountLedger::new(1e-5, None).unwrap();
        a.append(RoundSpec::new(0.1, 1.0, 2).unwrap()).unwrap();
        let mut b = AccountLedger::new(1e-5, None).unwrap();
        b.append(RoundSpec::new(0.1, 1.0, 1).unwrap()).unwrap();
        b.append(RoundSpec::new(0.1, 1.0, 1).unwrap()).unwrap();
        assert_eq!(a, b);
        b.append(RoundSpec::new(0.2, 1.0, 1).unwrap()).unwrap();
        assert_eq!(b.rounds.len(), 2);
        assert!(b.homogeneous().is_none());
    }

    #[test]
    fn clt_refused_for_small_sigma() {
        let r = ledger_report(&ledger(&[(0.01, 0.3, 10)]), 1).unwrap();
        assert!(r.get(Method::Clt).is_none());
        assert!(r.clt_note.is_some());
        assert!(r.get(Method::Pld).unwrap().eps_at_delta.is_some());
    }

    #[test]
    fn budget_flag() {
        let mut l = ledger(&[(1.0, 6.0, 1)]);
        l.budget_eps = Some(1.0);
        assert!(!ledger_report(&l, 1).unwrap().budget_exceeded);
        l.append(RoundSpec::new(1.0, 6.0, 20).unwrap()).unwrap();
        assert!(ledger_report(&l, 1).unwrap().budget_exceeded);
    }

    #[test]
    fn appending_never_decreases_eps() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let mut l = AccountLedger::new(1e-5, None).unwrap();
            let mut prev = 0.0;
            for _ in 0..3 {
                let spec = RoundSpec::new(
                    rng.random_range(0.01..0.3),
                    rng.random_range(1.0..4.0),
                    rng.random_range(1..20),
                )
                .unwrap();
                l.append(spec).unwrap();
                let e = ledger_report(&l, 1).unwrap().reports[0]
                    .eps_at_delta
                    .unwrap();
                assert!(e >= prev - 1e-9, "{e} < {prev} after {spec:?}");
                prev = e;
            }
        }
    }

    #[test]
    fn report_json_shape() {
        let r = ledger_report(&ledger(&[(1.0, 2.0, 1)]), 1).unwrap();
        let v = serde_json::to_value(&r.reports[0]).unwrap();
        for key in [
            "mu",
            "eps_at_delta",
            "delta",
            "zcdp_rho",
            "group",
            "T",
            "p",
            "sigma",
            "method",
            "vacuous",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["method"], "pld");
    }
}
