use crate::output::{write_atomic, write_json};
use crate::{
    AccountArgs, CurveArgs, Family, PlanArgs, SelfcheckArgs, SimulateArgs, EXIT_BUDGET,
    EXIT_SELFCHECK,
};
use anyhow::{anyhow, bail, Context, Result};
use fdpsgd_core::sim::ClientDiagnostics;
use fdpsgd_core::tradeoff::write_csv;
use fdpsgd_core::{
    cp_operator, gaussian_curve, group_curve, ledger_report, pld_curve, run_selfcheck,
    run_simulation, sigma_for_budget, AccountLedger, LedgerReport, Method, Pld, PldOptions,
    RoundSpec, SelfCheckOptions, SimConfig, TradeoffCurve,
};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Relative gap between CLT and PLD ε above which `plan` warns.
const CLT_WARN_GAP: f64 = 0.1;

fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| anyhow!("missing required flag --{flag}"))
}

/// `(p, T)` from `N`, `m` and either `E` or `T`.
fn rate_and_rounds(
    n: Option<u64>,
    m: Option<u64>,
    epochs: Option<f64>,
    rounds: Option<u64>,
) -> Result<(u64, u64, f64, u64)> {
    let n = need(n, "N")?;
    let m = need(m, "m")?;
    if m == 0 || m > n {
        bail!("need 0 < m <= N, got m = {m}, N = {n}");
    }
    let t = match (epochs, rounds) {
        (_, Some(t)) => t,
        (Some(e), None) => {
            if !(e > 0.0) || !e.is_finite() {
                bail!("--E must be > 0");
            }
            (e * n as f64 / m as f64).round() as u64
        }
        (None, None) => bail!("missing required flag --E or --T"),
    };
    if t == 0 {
        bail!("need at least one round");
    }
    Ok((n, m, m as f64 / n as f64, t))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

fn print_reports(r: &LedgerReport) {
    println!("{:<8}{:>14}{:>14}{:>14}", "method", "mu", "eps", "rho");
    for rep in &r.reports {
        let name = match rep.method {
            Method::Clt => "clt",
            Method::Pld => "pld",
        };
        println!(
            "{:<8}{:>14}{:>14}{:>14}{}",
            name,
            fmt_opt(rep.mu),
            fmt_opt(rep.eps_at_delta),
            fmt_opt(rep.zcdp_rho),
            if rep.grid_approximate { "  (grid)" } else { "" }
        );
    }
    if let Some(note) = &r.clt_note {
        println!("note: {note}");
    }
}

#[derive(Serialize)]
struct ForwardPlan {
    mode: &'static str,
    #[serde(rename = "N")]
    n: u64,
    m: u64,
    #[serde(rename = "T")]
    rounds: u64,
    p: f64,
    sigma: f64,
    delta: f64,
    report: LedgerReport,
    warning: Option<String>,
}

#[derive(Serialize)]
struct InversePlan {
    mode: &'static str,
    eps: f64,
    delta: f64,
    sigma: f64,
    #[serde(rename = "N")]
    n: u64,
    m: u64,
    #[serde(rename = "T")]
    rounds: u64,
    max_rounds: f64,
    certified: bool,
    /// δ(ε) of `T` rounds at the chosen σ, from numeric composition.
    pld_delta: f64,
}

pub fn plan(a: &PlanArgs, out_dir: &Path) -> Result<u8> {
    let out = a.out.clone().unwrap_or_else(|| out_dir.join("plan.json"));
    match (a.sigma, a.eps) {
        (Some(sigma), None) => {
            let (n, m, p, t) = rate_and_rounds(a.n, a.m, a.epochs, a.rounds)?;
            let ledger = AccountLedger {
                rounds: vec![RoundSpec::new(p, sigma, t)?],
                target_delta: a.delta,
                budget_eps: None,
            };
            let report = ledger_report(&ledger, 1)?;
            println!("N={n} m={m} T={t} p={p} sigma={sigma} delta={}", a.delta);
            print_reports(&report);
            let eps = |m| report.get(m).and_then(|r| r.eps_at_delta);
            let warning = match (eps(Method::Clt), eps(Method::Pld)) {
                (Some(c), Some(p)) if (c - p).abs() > CLT_WARN_GAP * p => Some(format!(
                    "CLT is asymptotic: its eps differs from the numeric value by {:.1}%",
                    100.0 * (c - p).abs() / p
                )),
                _ => None,
            };
            if let Some(w) = &warning {
                println!("warning: {w}");
            }
            write_json(
                &out,
                &ForwardPlan {
                    mode: "forward",
                    n,
                    m,
                    rounds: t,
                    p,
                    sigma,
                    delta: a.delta,
                    report,
                    warning,
                },
            )?;
        }
        (None, Some(eps)) => {
            let (n, m, p, t) = rate_and_rounds(a.n, a.m, a.epochs, a.rounds)?;
            let plan = sigma_for_budget(eps, a.delta, n, m, t as f64)?;
            let pld = Pld::compose(&[RoundSpec::new(p, plan.sigma, t)?], &PldOptions::default())?;
            pld.check_target(a.delta)?;
            let d = pld.delta(eps);
            println!("sigma = {:.4}", plan.sigma);
            println!(
                "certified = {} (T = {t}, bound eps (N/m)^2 / 2 = {})",
                plan.certified, plan.max_rounds
            );
            println!("numeric delta({eps}) = {d:.3e} (target {})", a.delta);
            write_json(
                &out,
                &InversePlan {
                    mode: "inverse",
                    eps,
                    delta: a.delta,
                    sigma: plan.sigma,
                    n,
                    m,
                    rounds: t,
                    max_rounds: plan.max_rounds,
                    certified: plan.certified,
                    pld_delta: d,
                },
            )?;
        }
        _ => bail!("give exactly one of --sigma or --eps"),
    }
    println!("wrote {}", out.display());
    Ok(0)
}

fn build_curve(a: &CurveArgs) -> Result<TradeoffCurve> {
    let base = || -> Result<TradeoffCurve> {
        match (a.mu, a.eps) {
            (Some(mu), None) => Ok(gaussian_curve(mu)?),
            (None, Some(eps)) => Ok(TradeoffCurve::eps_delta(eps, need(a.delta, "delta")?)?),
            _ => bail!("give exactly one of --mu or --eps"),
        }
    };
    Ok(match a.family {
        Family::Gaussian => gaussian_curve(need(a.mu, "mu")?)?,
        Family::Epsdelta => TradeoffCurve::eps_delta(need(a.eps, "eps")?, need(a.delta, "delta")?)?,
        Family::Subsampled => {
            let sigma = need(a.sigma, "sigma")?;
            if !(sigma > 0.0) {
                bail!("--sigma must be > 0");
            }
            cp_operator(&gaussian_curve(1.0 / sigma)?, need(a.p, "p")?)?
        }
        Family::Group => group_curve(&base()?, need(a.g, "g")?)?,
        Family::Dpsgd => {
            let (_, _, p, t) = rate_and_rounds(a.n, a.m, a.epochs, a.rounds)?;
            let sigma = need(a.sigma, "sigma")?;
            let pld = Pld::compose(&[RoundSpec::new(p, sigma, t)?], &PldOptions::default())?;
            pld_curve(&pld, a.delta.unwrap_or(1e-5))?
        }
    })
}

pub fn curve(a: &CurveArgs, out_dir: &Path) -> Result<u8> {
    let f = build_curve(a)?;
    let pl = f.discretize(a.knots);
    let name = format!("curve_{:?}.csv", a.family).to_lowercase();
    let out = a.out.clone().unwrap_or_else(|| out_dir.join(name));
    write_atomic(&out, write_csv(pl.knots()).as_bytes())?;
    println!("wrote {} ({} rows)", out.display(), pl.len());
    Ok(0)
}

pub fn account(a: &AccountArgs) -> Result<u8> {
    let mut ledger = if a.ledger.exists() {
        let text = std::fs::read_to_string(&a.ledger)
            .with_context(|| format!("reading {}", a.ledger.display()))?;
        let l: AccountLedger = serde_json::from_str(&text)
            .with_context(|| format!("corrupt ledger {}", a.ledger.display()))?;
        l.validate()
            .with_context(|| format!("corrupt ledger {}", a.ledger.display()))?;
        l
    } else {
        AccountLedger::new(a.delta.unwrap_or(1e-5), a.budget)?
    };
    if let Some(d) = a.delta {
        ledger.target_delta = d;
    }
    if a.budget.is_some() {
        ledger.budget_eps = a.budget;
    }
    ledger.validate()?;
    if let (Some(p), Some(sigma)) = (a.p, a.sigma) {
        ledger.append(RoundSpec::new(p, sigma, a.rounds)?)?;
    }
    if ledger.rounds.is_empty() {
        bail!("ledger is empty; append rounds with --p and --sigma");
    }
    let report = ledger_report(&ledger, a.g)?;
    write_json(&a.ledger, &ledger)?;
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    println!("T={} delta={}", ledger.total_rounds(), ledger.target_delta);
    print_reports(&report);
    if report.budget_exceeded {
        println!(
            "budget exceeded: eps {} > {}",
            fmt_opt(report.get(Method::Pld).and_then(|r| r.eps_at_delta)),
            report.budget_eps.unwrap_or(f64::NAN)
        );
        return Ok(EXIT_BUDGET);
    }
    Ok(0)
}

#[derive(Serialize)]
struct ClientReport {
    client: usize,
    ledger: Option<AccountLedger>,
    privacy: Option<LedgerReport>,
    diagnostics: ClientDiagnostics,
}

#[derive(Serialize)]
struct SimReport {
    seed: u64,
    /// Some client shaped its noise; its privacy entry does not cover it.
    unaccounted: bool,
    clients: Vec<ClientReport>,
    server_model: Vec<f64>,
}

pub fn simulate(a: &SimulateArgs, out_dir: &Path) -> Result<u8> {
    let text = std::fs::read_to_string(&a.config)
        .with_context(|| format!("reading {}", a.config.display()))?;
    let mut cfg: SimConfig = serde_json::from_str(&text)
        .with_context(|| format!("invalid config {}", a.config.display()))?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let out = a.out.clone().unwrap_or_else(|| out_dir.to_path_buf());
    let result = run_simulation(&cfg)?;
    let mut clients = Vec::with_capacity(cfg.clients.len());
    for (i, (ledger, diag)) in result.ledgers.iter().zip(&result.diagnostics).enumerate() {
        let privacy = ledger.as_ref().map(|l| ledger_report(l, 1)).transpose()?;
        clients.push(ClientReport {
            client: i,
            ledger: ledger.clone(),
            privacy,
            diagnostics: diag.clone(),
        });
    }
    let metrics: PathBuf = out.join("metrics.csv");
    let report: PathBuf = out.join("report.json");
    write_atomic(&metrics, result.metrics_csv().as_bytes())?;
    write_json(
        &report,
        &SimReport {
            seed: cfg.seed,
            unaccounted: result.unaccounted,
            clients,
            server_model: result.server_model.clone(),
        },
    )?;
    for client in 0..cfg.clients.len() {
        if let Some(r) = result.metrics.iter().rfind(|r| r.client == client) {
            println!(
                "client {client}: epoch {} train_acc {:.4} test_acc {:.4} loss {:.5}",
                r.epoch, r.train_acc, r.test_acc, r.train_loss
            );
        }
    }
    if result.unaccounted {
        println!("warning: noise shaping is enabled; privacy reports do not cover shaped clients");
    }
    println!("wrote {} and {}", metrics.display(), report.display());
    Ok(0)
}

pub fn selfcheck(a: &SelfcheckArgs) -> Result<u8> {
    let summary = run_selfcheck(SelfCheckOptions {
        h_perturbation: a.perturb_h,
    });
    if a.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        for c in &summary.checks {
            println!(
                "{} {:<20} error {:.3e} (tolerance {:.0e}, {:.2}s) {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.error,
                c.tolerance,
                c.seconds,
                c.detail
            );
        }
    }
    if summary.passed() {
        Ok(0)
    } else {
        let names: Vec<&str> = summary.failures().map(|c| c.name.as_str()).collect();
        eprintln!("self-check failed: {}", names.join(", "));
        Ok(EXIT_SELFCHECK)
    }
}
