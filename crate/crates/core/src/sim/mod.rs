//! Deterministic federated DP-SGD on synthetic logistic regression.
//!
//! Time advances in slots. In every slot each active client runs one round
//! (one gradient per batch element, in order), transmits `Ū/m` and updates
//! its local model. At the end of a slot the server applies the updates of
//! a completed aggregation window and, on broadcast slots, sends its model.
//! A broadcast arrives in the next slot after `delivery_offset` of the
//! round has elapsed; with [`IsrMode::Immediate`] the client switches model
//! at that point, with [`IsrMode::RoundBoundary`] it holds the delivery
//! back to the round boundary and starts the round on the new model.

mod data;
mod dpsgd;
mod schedule;

pub use data::{DatasetSpec, Sample};
pub use dpsgd::{
    arsinh_shape, clip, grad_logistic, local_round, local_round_switching, loss_logistic,
    neighbor_sensitivity, norm, predict, sample, sensitivity_bound, server_apply, ModelVec,
    NoiseSpec, RoundOutput, RoundUpdate, SamplingMode,
};
pub use schedule::{ClipSchedule, StepSchedule, StepState};

use crate::error::{Error, Result};
use crate::ledger::AccountLedger;
use crate::pld::RoundSpec;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const METRICS_HEADER: &str =
    "epoch,client,train_acc,test_acc,train_loss,grad_norm_mean,rounds,gradients";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsrMode {
    #[default]
    Immediate,
    RoundBoundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    /// Batch size m.
    pub m: usize,
    /// Epochs E.
    #[serde(rename = "E")]
    pub epochs: u64,
    pub clip: ClipSchedule,
    /// Noise multiplier; 0 disables noise.
    pub sigma: f64,
    #[serde(default)]
    pub sampling: SamplingMode,
    /// Slots a held global model may age before the client waits; `None`
    /// never waits.
    #[serde(default)]
    pub staleness_bound: Option<u64>,
    #[serde(default)]
    pub isr_mode: IsrMode,
    /// Overrides the run seed for this client's streams.
    #[serde(default)]
    pub seed: Option<u64>,
    /// `a` of the arsinh noise shaping; shaped runs are unaccounted.
    #[serde(default)]
    pub noise_shaping: Option<f64>,
    #[serde(default = "default_delta")]
    pub target_delta: f64,
    #[serde(default)]
    pub budget_eps: Option<f64>,
}

fn default_delta() -> f64 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    #[serde(default)]
    pub step_schedule: StepSchedule,
    /// Slots per aggregation window.
    #[serde(default = "one")]
    pub window_length: u64,
    /// Slots between broadcasts.
    #[serde(default = "one")]
    pub broadcast_period: u64,
    #[serde(default)]
    pub drop_prob: f64,
    /// Fraction of a round after which a broadcast arrives.
    #[serde(default = "half")]
    pub delivery_offset: f64,
    /// Aggregation weights; uniform when absent.
    #[serde(default)]
    pub client_weights: Option<Vec<f64>>,
}

fn one() -> u64 {
    1
}

fn half() -> f64 {
    0.5
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            step_schedule: StepSchedule::default(),
            window_length: 1,
            broadcast_period: 1,
            drop_prob: 0.0,
            delivery_offset: 0.5,
            client_weights: None,
        }
    }
}

/// Full run description, as read from a JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub clients: Vec<ClientConfig>,
    pub server: ServerConfig,
    /// One dataset per client, or a single one shared by all.
    pub data: Vec<DatasetSpec>,
    /// Keep per-round records (U, Ū, clipped norms).
    #[serde(default)]
    pub log_rounds: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients.is_empty() {
            return Err(Error::config("clients", "at least one client required"));
        }
        if self.data.len() != 1 && self.data.len() != self.clients.len() {
            return Err(Error::config(
                "data",
                format!(
                    "expected 1 or {} datasets, got {}",
                    self.clients.len(),
                    self.data.len()
                ),
            ));
        }
        for (i, d) in self.data.iter().enumerate() {
            d.validate().map_err(|e| prefix(&format!("data[{i}]"), e))?;
        }
        let dim = self.data[0].d;
        if self.data.iter().any(|d| d.d != dim) {
            return Err(Error::config("data", "all datasets must share d"));
        }
        for (i, c) in self.clients.iter().enumerate() {
            let f = |name: &str| format!("clients[{i}].{name}");
            let n = self.dataset(i).n;
            if c.m == 0 || c.m > n {
                return Err(Error::config(f("m"), format!("need 0 < m <= N = {n}")));
            }
            if c.epochs == 0 {
                return Err(Error::config(f("E"), "must be >= 1"));
            }
            c.clip.validate().map_err(|e| prefix(&f("clip"), e))?;
            if !(c.sigma >= 0.0) || !c.sigma.is_finite() {
                return Err(Error::config(f("sigma"), "must be finite and >= 0"));
            }
            if c.sigma > 0.0 && matches!(c.clip, ClipSchedule::Disabled) {
                return Err(Error::config(f("clip"), "noise requires clipping"));
            }
            if let Some(a) = c.noise_shaping {
                if !(a > 0.0) || !a.is_finite() {
                    return Err(Error::config(f("noise_shaping"), "must be > 0"));
                }
            }
            if !(c.target_delta > 0.0 && c.target_delta < 1.0) {
                return Err(Error::config(f("target_delta"), "must lie in (0,1)"));
            }
        }
        let s = &self.server;
        s.step_schedule.validate()?;
        if s.window_length == 0 {
            return Err(Error::config("server.window_length", "must be >= 1"));
        }
        if s.broadcast_period == 0 {
            return Err(Error::config("server.broadcast_period", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&s.drop_prob) {
            return Err(Error::config("server.drop_prob", "must lie in [0,1]"));
        }
        if !(0.0..1.0).contains(&s.delivery_offset) {
            return Err(Error::config("server.delivery_offset", "must lie in [0,1)"));
        }
        if let Some(w) = &s.client_weights {
            if w.len() != self.clients.len() {
                return Err(Error::config(
                    "server.client_weights",
                    "one weight per client required",
                ));
            }
            if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::config(
                    "server.client_weights",
                    "must be >= 0 and sum to 1",
                ));
            }
        }
        Ok(())
    }

    fn dataset(&self, client: usize) -> &DatasetSpec {
        if self.data.len() == 1 {
            &self.data[0]
        } else {
            &self.data[client]
        }
    }
}

fn prefix(field: &str, e: Error) -> Error {
    match e {
        Error::Config { field: f, message } => Error::config(format!("{field}.{f}"), message),
        other => Error::config(field, other.to_string()),
    }
}

/// One metrics row, emitted when a client finishes an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub epoch: u64,
    pub client: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    pub train_loss: f64,
    /// Mean per-sample gradient norm, an estimate of `c(w*)`.
    pub grad_norm_mean: f64,
    /// Rounds completed so far.
    pub rounds: u64,
    /// Gradients computed so far.
    pub gradients: u64,
}

/// Logged round, present when [`SimConfig::log_rounds`] is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub client: usize,
    pub round: u64,
    pub clip: f64,
    pub u: Vec<f64>,
    pub u_bar: Vec<f64>,
    pub clipped_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDiagnostics {
    pub client: usize,
    /// Per-coordinate std of `Ū - U` over all rounds.
    pub noise_std: Option<f64>,
    /// `κ C σ` for a constant clipping constant.
    pub expected_noise_std: Option<f64>,
    /// Clipped gradients checked against `C_b`.
    pub clip_checked: u64,
    pub clip_violations: u64,
    /// Slots spent waiting for a fresher global model.
    pub waits: u64,
    /// Broadcasts lost in transit.
    pub dropped: u64,
    /// Distance from the final local model to the ridge-regularized optimum
    /// on the client's training data.
    pub dist_to_reference: f64,
    pub final_model: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub metrics: Vec<MetricRow>,
    /// `None` for clients without noise.
    pub ledgers: Vec<Option<AccountLedger>>,
    pub diagnostics: Vec<ClientDiagnostics>,
    pub server_model: Vec<f64>,
    pub records: Vec<RoundRecord>,
    /// Some client shaped its noise; its ledger does not cover the run.
    pub unaccounted: bool,
}

impl SimOutput {
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for r in &self.metrics {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.epoch,
                r.client,
                r.train_acc,
                r.test_acc,
                r.train_loss,
                r.grad_norm_mean,
                r.rounds,
                r.gradients
            );
        }
        s
    }
}

// Stream labels for per-client random streams.
const STREAM_SAMPLE: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_DROP: u64 = 2;
const STREAMS_PER_CLIENT: u64 = 8;

fn stream(seed: u64, client: usize, purpose: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(client as u64 * STREAMS_PER_CLIENT + purpose);
    r
}

struct Client<'a> {
    id: usize,
    cfg: &'a ClientConfig,
    train: Vec<Sample>,
    test: Vec<Sample>,
    w: Vec<f64>,
    /// Slot at which the held global model was produced.
    model_slot: u64,
    steps: StepState,
    round: u64,
    total_rounds: u64,
    rounds_per_epoch: u64,
    gradients: u64,
    sampler: ChaCha8Rng,
    noiser: ChaCha8Rng,
    dropper: ChaCha8Rng,
    ledger: Option<AccountLedger>,
    noise_sq: f64,
    noise_count: u64,
    clip_checked: u64,
    clip_violations: u64,
    waits: u64,
    dropped: u64,
}

impl Client<'_> {
    fn done(&self) -> bool {
        self.round >= self.total_rounds
    }

    fn evaluate(&self, epoch: u64) -> Result<MetricRow> {
        let n = self.train.len() as f64;
        let mut loss = 0.0;
        let mut correct = 0.0;
        let mut gnorm = 0.0;
        for xi in &self.train {
            loss += loss_logistic(&self.w, xi);
            correct += (predict(&self.w, &xi.x) == xi.y) as u8 as f64;
            gnorm += norm(&grad_logistic(&self.w, xi));
        }
        let test_acc = if self.test.is_empty() {
            f64::NAN
        } else {
            self.test
                .iter()
                .filter(|xi| predict(&self.w, &xi.x) == xi.y)
                .count() as f64
                / self.test.len() as f64
        };
        let loss = loss / n;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                client: self.id,
                epoch: epoch as usize,
                message: format!("training loss is {loss}"),
            });
        }
        Ok(MetricRow {
            epoch,
            client: self.id,
            train_acc: correct / n,
            test_acc,
            train_loss: loss,
            grad_norm_mean: gnorm / n,
            rounds: self.round,
            gradients: self.gradients,
        })
    }

    fn test_loss(&self) -> f64 {
        let set = if self.test.is_empty() {
            &self.train
        } else {
            &self.test
        };
        set.iter().map(|xi| loss_logistic(&self.w, xi)).sum::<f64>() / set.len() as f64
    }
}

struct Broadcast {
    model: Vec<f64>,
    produced: u64,
    arrives: u64,
}

/// Runs every client to completion.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let k = cfg.clients.len();
    let dim = cfg.data[0].d + 1;
    let weights = cfg
        .server
        .client_weights
        .clone()
        .unwrap_or_else(|| vec![1.0 / k as f64; k]);

    let mut clients = Vec::with_capacity(k);
    for (id, c) in cfg.clients.iter().enumerate() {
        let spec = cfg.dataset(id);
        let (train, test) = spec.generate()?;
        let seed = c.seed.unwrap_or(cfg.seed);
        let rpe = (spec.n / c.m).max(1) as u64;
        let ledger = if c.sigma > 0.0 {
            Some(AccountLedger::new(c.target_delta, c.budget_eps)?)
        } else {
            None
        };
        clients.push(Client {
            id,
            cfg: c,
            train,
            test,
            w: vec![0.0; dim],
            model_slot: 0,
            steps: StepState::new(cfg.server.step_schedule.clone()),
            round: 0,
            total_rounds: rpe * c.epochs,
            rounds_per_epoch: rpe,
            gradients: 0,
            sampler: stream(seed, id, STREAM_SAMPLE),
            noiser: stream(seed, id, STREAM_NOISE),
            dropper: stream(seed, id, STREAM_DROP),
            ledger,
            noise_sq: 0.0,
            noise_count: 0,
            clip_checked: 0,
            clip_violations: 0,
            waits: 0,
            dropped: 0,
        });
    }

    let mut w_hat = vec![0.0; dim];
    let mut pending: Vec<RoundUpdate> = Vec::new();
    let mut inbox: Vec<Vec<Broadcast>> = (0..k).map(|_| Vec::new()).collect();
    let mut metrics = Vec::new();
    let mut records = Vec::new();
    let work: u64 = clients.iter().map(|c| c.total_rounds).sum();
    let max_slots = 100 * work + 1000;
    let mut slot: u64 = 0;

    while clients.iter().any(|c| !c.done()) {
        if slot >= max_slots {
            return Err(Error::config(
                "server",
                "clients stalled waiting for broadcasts (check drop_prob and staleness_bound)",
            ));
        }
        for c in clients.iter_mut() {
            if c.done() {
                inbox[c.id].clear();
                continue;
            }
            // Latest broadcast arriving in this slot.
            let arrival = inbox[c.id]
                .iter()
                .position(|b| b.arrives == slot)
                .map(|i| inbox[c.id].swap_remove(i));
            inbox[c.id].retain(|b| b.arrives > slot);
            let mut arrival = arrival;
            if c.cfg.isr_mode == IsrMode::RoundBoundary {
                if let Some(b) = arrival.take() {
                    c.w = b.model;
                    c.model_slot = b.produced;
                }
            }
            if let Some(bound) = c.cfg.staleness_bound {
                if slot.saturating_sub(c.model_slot) > bound {
                    match arrival.take() {
                        Some(b) => {
                            c.w = b.model;
                            c.model_slot = b.produced;
                        }
                        None => {
                            c.waits += 1;
                            continue;
                        }
                    }
                }
            }

            let spec = cfg.dataset(c.id);
            let idx = sample(spec.n, c.cfg.m, c.cfg.sampling, &mut c.sampler)?;
            let batch: Vec<&Sample> = idx.iter().map(|&i| &c.train[i]).collect();
            let clip_c = c.cfg.clip.at(c.round, c.total_rounds);
            let noise = NoiseSpec {
                c: clip_c,
                sigma: c.cfg.sigma,
                mode: c.cfg.sampling,
                shaping: c.cfg.noise_shaping,
            };
            let switch_at = ((cfg.server.delivery_offset * batch.len() as f64).ceil() as usize)
                .min(batch.len());
            let out = match &arrival {
                Some(b) => local_round_switching(
                    &c.w,
                    Some((&b.model, switch_at)),
                    &batch,
                    c.cfg.m,
                    noise,
                    &mut c.noiser,
                )?,
                None => local_round(&c.w, &batch, c.cfg.m, noise, &mut c.noiser)?,
            };
            if let Some(b) = arrival {
                c.w = b.model;
                c.model_slot = b.produced;
            }

            // Audit: every clipped contribution respects C_b and sums to U.
            for n in &out.clipped_norms {
                c.clip_checked += 1;
                if *n > clip_c * (1.0 + 1e-12) {
                    c.clip_violations += 1;
                }
            }
            if c.cfg.sigma > 0.0 {
                for (ub, u) in out.u_bar.iter().zip(&out.u) {
                    c.noise_sq += (ub - u).powi(2);
                    c.noise_count += 1;
                }
            }

            let eta = c.steps.eta(c.round);
            for (wi, v) in c.w.iter_mut().zip(&out.update.u_bar_over_m) {
                *wi -= eta * v;
            }
            let mut update = out.update;
            update.b = c.round % c.rounds_per_epoch;
            update.e = c.round / c.rounds_per_epoch;
            update.client_id = c.id;
            update.eta = eta;
            pending.push(update);
            if cfg.log_rounds {
                records.push(RoundRecord {
                    client: c.id,
                    round: c.round,
                    clip: clip_c,
                    u: out.u,
                    u_bar: out.u_bar,
                    clipped_norms: out.clipped_norms,
                });
            }
            if let Some(l) = c.ledger.as_mut() {
                let p = c.cfg.m as f64 / spec.n as f64;
                l.append(RoundSpec::new(p, c.cfg.sigma, 1)?)?;
            }
            c.gradients += batch.len() as u64;
            c.round += 1;
            if c.round % c.rounds_per_epoch == 0 {
                let epoch = c.round / c.rounds_per_epoch;
                let row = c.evaluate(epoch)?;
                metrics.push(row);
                let tl = c.test_loss();
                c.steps.end_epoch(tl);
            }
        }

        // Server side at the end of the slot.
        if (slot + 1).is_multiple_of(cfg.server.window_length) && !pending.is_empty() {
            for u in pending.drain(..) {
                let wt = weights[u.client_id];
                w_hat = server_apply(&w_hat, std::slice::from_ref(&u), u.eta, &[wt])?;
            }
            if w_hat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    client: 0,
                    epoch: 0,
                    message: "server model became non-finite".into(),
                });
            }
        }
        if (slot + 1).is_multiple_of(cfg.server.broadcast_period) {
            for c in clients.iter_mut() {
                if c.done() {
                    continue;
                }
                if cfg.server.drop_prob > 0.0 && c.dropper.random_bool(cfg.server.drop_prob) {
                    c.dropped += 1;
                    continue;
                }
                inbox[c.id].push(Broadcast {
                    model: w_hat.clone(),
                    produced: slot + 1,
                    arrives: slot + 1,
                });
            }
        }
        slot += 1;
    }

    let mut diagnostics = Vec::with_capacity(k);
    let mut ledgers = Vec::with_capacity(k);
    for c in clients {
        let reference = ridge_reference(&c.train, 1e-3);
        let dist = norm(
            &c.w.iter()
                .zip(&reference)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        let expected = match c.cfg.clip {
            ClipSchedule::Constant { c: cc }
                if c.cfg.sigma > 0.0 && c.cfg.noise_shaping.is_none() =>
            {
                Some(c.cfg.sampling.kappa() * cc * c.cfg.sigma)
            }
            _ => None,
        };
        diagnostics.push(ClientDiagnostics {
            client: c.id,
            noise_std: (c.noise_count > 0).then(|| (c.noise_sq / c.noise_count as f64).sqrt()),
            expected_noise_std: expected,
            clip_checked: c.clip_checked,
            clip_violations: c.clip_violations,
            waits: c.waits,
            dropped: c.dropped,
            dist_to_reference: dist,
            final_model: c.w.clone(),
        });
        ledgers.push(c.ledger);
    }
    Ok(SimOutput {
        metrics,
        ledgers,
        diagnostics,
        server_model: w_hat,
        records,
        unaccounted: cfg.clients.iter().any(|c| c.noise_shaping.is_some()),
    })
}

/// Minimizer of the mean logistic loss plus `lambda/2 ‖w‖²`, by Newton's method.
#[allow(clippy::needless_range_loop)]
pub fn ridge_reference(data: &[Sample], lambda: f64) -> Vec<f64> {
    let d = data.first().map_or(0, |s| s.x.len());
    let n = data.len().max(1) as f64;
    let mut w = vec![0.0; d];
    for _ in 0..50 {
        let mut g: Vec<f64> = w.iter().map(|v| lambda * v).collect();
        let mut h = vec![vec![0.0; d]; d];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = lambda;
        }
        for xi in data {
            let t: f64 = w.iter().zip(&xi.x).map(|(a, b)| a * b).sum();
            let s = 1.0 / (1.0 + (-t).exp());
            let r = s * (1.0 - s) / n;
            for i in 0..d {
                g[i] += (s - xi.y) * xi.x[i] / n;
                for j in 0..d {
                    h[i][j] += r * xi.x[i] * xi.x[j];
                }
            }
        }
        let step = solve_spd(h, g);
        let mut moved = 0.0;
        for (wi, s) in w.iter_mut().zip(&step) {
            *wi -= s;
            moved += s * s;
        }
        if moved.sqrt() < 1e-12 {
            break;
        }
    }
    w
}

/// Solves `A x = b` for symmetric positive definite `A` (Cholesky).
#[allow(clippy::needless_range_loop)]
fn solve_spd(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for j in 0..n {
        let mut diag = a[j][j];
        for k in 0..j {
            diag -= a[j][k] * a[j][k];
        }
        let diag = diag.max(1e-300).sqrt();
        a[j][j] = diag;
        for i in j + 1..n {
            let mut v = a[i][j];
            for k in 0..j {
                v -= a[i][k] * a[j][k];
            }
            a[i][j] = v / diag;
        }
    }
    for i in 0..n {
        for k in 0..i {
            b[i] -= a[i][k] * b[k];
        }
        b[i] /= a[i][i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            b[i] -= a[k][i] * b[k];
        }
        b[i] /= a[i][i];
    }
    b
}
