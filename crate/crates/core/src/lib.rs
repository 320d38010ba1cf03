//! f-DP privacy accounting for subsampled-Gaussian training, and a
//! deterministic federated DP-SGD simulator on synthetic data.
//!
//! The accountant works with trade-off curves ([`TradeoffCurve`]): Gaussian
//! DP, (ε, δ) conversions, subsampling amplification, composition (exact,
//! numeric through the privacy loss distribution, and the central-limit
//! approximation) and group privacy. [`sim`] runs DP-SGD clients against an
//! aggregating server and records a privacy ledger per client.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compose;
pub mod error;
pub mod gdp;
pub mod ledger;
pub mod normal;
pub mod pld;
pub mod selfcheck;
pub mod sim;
pub mod subsample;
pub mod tradeoff;

pub use compose::{
    clt_mu, compose_gaussian, h_of_sigma, sigma_for_budget, CltEstimate, PlanInput, SigmaPlan,
};
pub use error::{Error, Result};
pub use gdp::{
    advanced_composition, curve_eps_at_delta, delta_of_eps, divergence_of_gdp, eps_of_delta,
    epsdelta_curve, epsdelta_envelope, epsdelta_group, gaussian_curve, group_curve,
    DivergenceGuarantee, EpsDeltaGuarantee, GdpGuarantee,
};
pub use ledger::{
    ledger_report, ledger_report_with, pld_curve, AccountLedger, LedgerReport, Method,
    PrivacyReport,
};
pub use pld::{pld_delta, Pld, PldOptions, RoundSpec};
pub use selfcheck::{run_selfcheck, CheckResult, SelfCheckOptions, SelfCheckSummary};
pub use sim::{run_simulation, ClientConfig, IsrMode, ServerConfig, SimConfig, SimOutput};
pub use subsample::{cp_operator, np_mixture_oracle};
pub use tradeoff::{Knot, PiecewiseLinear, TradeoffCurve, Violation};
