//! Acceptance suite: ten criteria, one PASS/FAIL line each.
//!
//! Lines go straight to stdout so they show up without `--nocapture`.

use fdpsgd_core::compose::PlanInput;
use fdpsgd_core::selfcheck::{gradient_error, subsampling_gap, ORACLE_GRID};
use fdpsgd_core::sim::{
    neighbor_sensitivity, run_simulation, sensitivity_bound, ClientConfig, ClipSchedule,
    DatasetSpec, IsrMode, Sample, SamplingMode, ServerConfig, SimConfig,
};
use fdpsgd_core::tradeoff::sup_distance;
use fdpsgd_core::{
    clt_mu, compose_gaussian, delta_of_eps, divergence_of_gdp, eps_of_delta, gaussian_curve,
    group_curve, ledger_report, sigma_for_budget, Method, Pld, PldOptions, RoundSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::time::Instant;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn report(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let line = format!(
        "acceptance {id:>2} {} {name}: {} [{:.2}s]\n",
        if o.passed { "PASS" } else { "FAIL" },
        o.detail,
        start.elapsed().as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    o.passed
}

// Independent closed form through libm: δ_μ(ε) = Φ(-ε/μ + μ/2) - e^ε Φ(-ε/μ - μ/2).
fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn gdp_delta(mu: f64, eps: f64) -> f64 {
    phi(-eps / mu + mu / 2.0) - eps.exp() * phi(-eps / mu - mu / 2.0)
}

fn blobs(n: usize, seed: u64) -> DatasetSpec {
    DatasetSpec {
        d: 2,
        margin: 2.0,
        scale: 0.5,
        n,
        n_test: 1024,
        label_flip: 0.0,
        seed,
    }
}

fn client(
    m: usize,
    epochs: u64,
    clip: ClipSchedule,
    sigma: f64,
    sampling: SamplingMode,
) -> ClientConfig {
    ClientConfig {
        m,
        epochs,
        clip,
        sigma,
        sampling,
        staleness_bound: None,
        isr_mode: IsrMode::Immediate,
        seed: None,
        noise_shaping: None,
        target_delta: 1e-5,
        budget_eps: None,
    }
}

fn sim(seed: u64, clients: Vec<ClientConfig>, data: Vec<DatasetSpec>) -> SimConfig {
    SimConfig {
        seed,
        clients,
        server: ServerConfig::default(),
        data,
        log_rounds: false,
    }
}

fn c1_gaussian_composition() -> Outcome {
    let start = Instant::now();
    let mu = compose_gaussian(&[1.0, 1.0]).unwrap().mu;
    let exact = (mu - std::f64::consts::SQRT_2).abs() < 1e-15;
    let eps: Vec<f64> = (0..20).map(|i| 5.0 * i as f64 / 19.0).collect();
    let pld = Pld::compose(
        &[RoundSpec::new(1.0, 2.0, 4).unwrap()],
        &PldOptions::default(),
    )
    .unwrap();
    let worst = eps
        .iter()
        .map(|&e| (pld.delta(e) - gdp_delta(1.0, e)).abs())
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        exact && worst <= 1e-6 && secs < 5.0,
        format!("compose([1,1]) = {mu:.16}, PLD max |dδ| = {worst:.2e} over 20 ε"),
    )
}

fn c2_subsampling_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst: (f64, f64, f64) = (0.0, 0.0, 0.0);
    for p in [0.01, 0.1, 0.5] {
        for sigma in [1.0, 2.0, 4.0] {
            let d = subsampling_gap(p, sigma, ORACLE_GRID).unwrap();
            if d >= worst.0 {
                worst = (d, p, sigma);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst.0 <= 1e-4 && secs < 30.0,
        format!(
            "max sup-norm {:.2e} at p={} σ={}",
            worst.0, worst.1, worst.2
        ),
    )
}

fn c3_clt_vs_pld() -> Outcome {
    let start = Instant::now();
    let plan = PlanInput::new(10_000, 100, 10.0, 2.0).unwrap();
    let mu = clt_mu(&plan).unwrap().mu;
    let pld = Pld::compose(
        &[RoundSpec::new(0.01, 2.0, 1000).unwrap()],
        &PldOptions::default(),
    )
    .unwrap();
    let mut worst = (0.0f64, 0.0);
    for i in 0..100 {
        let e = 0.05 + (5.0 - 0.05) * i as f64 / 99.0;
        let d = (pld.delta(e) - gdp_delta(mu, e)).abs();
        if d > worst.0 {
            worst = (d, e);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        (mu - 0.19845).abs() < 5e-6 && worst.0 <= 5e-3 && secs < 60.0,
        format!(
            "clt μ = {mu:.5}, max |δ_pld - δ_clt| = {:.2e} at ε = {:.2}",
            worst.0, worst.1
        ),
    )
}

fn c4_calibration() -> Outcome {
    let sigma = sigma_for_budget(2.0, 1e-5, 10_000, 100, 10_000.0).unwrap();
    let mut ok = (sigma.sigma - 3.6760).abs() < 5e-5 && sigma.certified;
    let mut notes = vec![format!("σ(2, 1e-5) = {:.4}", sigma.sigma)];
    // (ε, δ, N, m) with T at the certified maximum.
    let points = [
        (2.0, 1e-5, 10_000u64, 100u64),
        (1.0, 1e-5, 10_000, 100),
        (0.5, 1e-6, 10_000, 100),
        (4.0, 1e-5, 10_000, 200),
        (2.0, 1e-3, 4_096, 64),
    ];
    let mut worst_ratio = 0.0f64;
    for (eps, delta, n, m) in points {
        let t = (eps * (n as f64 / m as f64).powi(2) / 2.0).floor();
        let plan = sigma_for_budget(eps, delta, n, m, t).unwrap();
        let spec = RoundSpec::new(m as f64 / n as f64, plan.sigma, t as u64).unwrap();
        let pld = Pld::compose(&[spec], &PldOptions::default()).unwrap();
        let d = match pld.check_target(delta) {
            Ok(()) => pld.delta(eps),
            Err(_) => f64::INFINITY,
        };
        ok &= plan.certified && d <= delta;
        worst_ratio = worst_ratio.max(d / delta);
    }
    notes.push(format!("max δ_pld/δ over 5 points = {worst_ratio:.2e}"));
    outcome(ok, notes.join(", "))
}

fn c5_group() -> Outcome {
    let mut worst = (0.0f64, 0.0, 0);
    for mu in [0.25, 0.5, 1.0] {
        for g in 1..=8u32 {
            let got = group_curve(&gaussian_curve(mu).unwrap(), g).unwrap();
            let d = sup_distance(&got, &gaussian_curve(g as f64 * mu).unwrap());
            if d >= worst.0 {
                worst = (d, mu, g);
            }
        }
    }
    outcome(
        worst.0 <= 1e-3,
        format!(
            "max sup-norm {:.2e} at μ={} g={}",
            worst.0, worst.1, worst.2
        ),
    )
}

fn c6_conversions() -> Outcome {
    let d = delta_of_eps(1.0, 0.0).unwrap();
    // 2Φ(1/2) - 1 = erf(1/(2√2)).
    let oracle = libm::erf(0.5 / std::f64::consts::SQRT_2);
    let mut ok = (d - 0.382925).abs() <= 1e-6 && (d - oracle).abs() < 1e-14;
    let mut worst = 0.0f64;
    for mu in [0.25, 0.5, 1.0, 2.0, 4.0] {
        for eps in [0.0, 0.1, 0.5, 1.0, 2.0, 3.0] {
            let delta = delta_of_eps(mu, eps).unwrap();
            if delta < 1e-12 {
                continue;
            }
            worst = worst.max((eps_of_delta(mu, delta).unwrap() - eps).abs());
        }
    }
    ok &= worst <= 1e-9;
    let mut rho_ok = true;
    for mu in [0.3, 0.5, 1.0, 1.7] {
        let base = divergence_of_gdp(mu, 2.0, 1).unwrap().rho;
        for g in 1..=8u32 {
            let r = divergence_of_gdp(mu, 2.0, g).unwrap().rho;
            let want = (g * g) as f64 * base;
            // Exact up to the rounding of the two products.
            rho_ok &= (r - want).abs() <= 4.0 * f64::EPSILON * want;
        }
    }
    ok &= rho_ok;
    outcome(
        ok,
        format!("δ(1,0) = {d:.7}, roundtrip max |dε| = {worst:.1e}, ρ(gμ) = g²ρ(μ): {rho_ok}"),
    )
}

fn c7_sensitivity() -> Outcome {
    let (train, _) = blobs(512, 3).generate().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = [0.0f64; 2];
    let mut ok = true;
    for trial in 0..1000 {
        let c = rng.random_range(0.05..3.0);
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        let m = rng.random_range(1..32usize);
        let batch: Vec<&Sample> = (0..m)
            .map(|_| &train[rng.random_range(0..train.len())])
            .collect();
        // Arbitrary replacement record, possibly far outside the data.
        let scale = rng.random_range(0.1..100.0);
        let outsider = Sample {
            x: vec![
                rng.random_range(-scale..scale),
                rng.random_range(-scale..scale),
                1.0,
            ],
            y: if rng.random_bool(0.5) { 1.0 } else { 0.0 },
        };
        let fixed = trial % 2 == 0;
        let (neighbor, mode) = if fixed {
            let mut b = batch.clone();
            let k = rng.random_range(0..m);
            b[k] = &outsider;
            (b, SamplingMode::Fixed)
        } else if rng.random_bool(0.5) {
            let mut b = batch.clone();
            b.push(&outsider);
            (b, SamplingMode::Poisson)
        } else {
            let mut b = batch.clone();
            b.remove(rng.random_range(0..m));
            (b, SamplingMode::Poisson)
        };
        let s = neighbor_sensitivity(&batch, &neighbor, &w, c);
        let bound = sensitivity_bound(mode, c);
        ok &= s <= bound * (1.0 + 1e-12);
        let slot = if fixed { 0 } else { 1 };
        worst[slot] = worst[slot].max(s / bound);
    }

    // Every logged gradient of a full run respects its round's C_b.
    let mut cfg = sim(
        5,
        vec![
            client(
                32,
                3,
                ClipSchedule::Linear {
                    start: 2.0,
                    end: 0.1,
                },
                1.0,
                SamplingMode::Fixed,
            ),
            client(
                16,
                3,
                ClipSchedule::Constant { c: 0.5 },
                1.5,
                SamplingMode::Poisson,
            ),
        ],
        vec![blobs(1024, 4)],
    );
    cfg.log_rounds = true;
    let out = run_simulation(&cfg).unwrap();
    let mut logged = 0usize;
    let mut violations = 0usize;
    for r in &out.records {
        for n in &r.clipped_norms {
            logged += 1;
            if *n > r.clip * (1.0 + 1e-12) {
                violations += 1;
            }
        }
    }
    ok &= violations == 0 && logged > 0;
    outcome(
        ok,
        format!(
            "max ‖U-U'‖/bound fixed {:.3} poisson {:.3}; {logged} logged gradients, {violations} over C_b",
            worst[0], worst[1]
        ),
    )
}

fn c8_simulator() -> Outcome {
    let start = Instant::now();
    let base = sim(
        21,
        vec![client(
            16,
            30,
            ClipSchedule::Disabled,
            0.0,
            SamplingMode::Fixed,
        )],
        vec![blobs(4096, 8)],
    );
    let out = run_simulation(&base).unwrap();
    let last = out.metrics.last().unwrap();
    let mut ok = last.train_acc >= 0.99;

    let dp = sim(
        21,
        vec![client(
            16,
            30,
            ClipSchedule::Constant { c: 1.0 },
            2.0,
            SamplingMode::Fixed,
        )],
        vec![blobs(4096, 8)],
    );
    let out_dp = run_simulation(&dp).unwrap();
    let ledger = out_dp.ledgers[0].as_ref().unwrap();
    let reported = ledger_report(ledger, 1).unwrap();
    let mu = reported
        .get(Method::Clt)
        .and_then(|r| r.mu)
        .unwrap_or(f64::NAN);
    let want = clt_mu(&PlanInput::new(4096, 16, 30.0, 2.0).unwrap())
        .unwrap()
        .mu;
    ok &= (mu - want).abs() <= 1e-12 * want;
    let diag = &out_dp.diagnostics[0];
    let std = diag.noise_std.unwrap_or(f64::NAN);
    let rel = (std - 4.0).abs() / 4.0;
    ok &= rel <= 0.02;
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 120.0;
    outcome(
        ok,
        format!(
            "baseline train acc {:.4}; DP ledger μ {mu:.5} vs clt_mu {want:.5}; noise std {std:.4} vs 2Cσ = 4 ({:.2}%)",
            last.train_acc,
            100.0 * rel
        ),
    )
}

fn c9_gradients() -> Outcome {
    let err = gradient_error(100, 2024);
    outcome(
        err <= 1e-6,
        format!("max relative error {err:.2e} at 100 points"),
    )
}

fn c10_determinism() -> Outcome {
    let mut c = client(
        16,
        2,
        ClipSchedule::Constant { c: 1.0 },
        1.0,
        SamplingMode::Poisson,
    );
    c.staleness_bound = Some(2);
    let mut cfg = sim(
        99,
        vec![
            c.clone(),
            client(
                32,
                2,
                ClipSchedule::Constant { c: 0.5 },
                2.0,
                SamplingMode::Fixed,
            ),
        ],
        vec![blobs(512, 1), blobs(512, 2)],
    );
    cfg.server.drop_prob = 0.2;
    cfg.server.broadcast_period = 2;
    let bytes = |cfg: &SimConfig| {
        let out = run_simulation(cfg).unwrap();
        let mut b = out.metrics_csv().into_bytes();
        b.extend(serde_json::to_vec(&out.ledgers).unwrap());
        b.extend(serde_json::to_vec(&out.diagnostics).unwrap());
        b.extend(serde_json::to_vec(&out.server_model).unwrap());
        b
    };
    let a = bytes(&cfg);
    let b = bytes(&cfg);
    cfg.seed = 100;
    let other = bytes(&cfg);
    outcome(
        a == b && a != other,
        format!(
            "{} output bytes identical across runs; other seed differs: {}",
            a.len(),
            a != other
        ),
    )
}

#[test]
fn acceptance() {
    let results = [
        report(1, "gaussian composition", c1_gaussian_composition),
        report(2, "subsampling oracle", c2_subsampling_oracle),
        report(3, "numeric vs asymptotic composition", c3_clt_vs_pld),
        report(4, "noise calibration", c4_calibration),
        report(5, "group privacy", c5_group),
        report(6, "conversions", c6_conversions),
        report(7, "sensitivity bounds", c7_sensitivity),
        report(8, "simulator sanity", c8_simulator),
        report(9, "gradient check", c9_gradients),
        report(10, "determinism", c10_determinism),
    ];
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
