use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Step size rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant {
        eta: f64,
    },
    /// `eta0 / (1 + t)^gamma`.
    InversePower {
        eta0: f64,
        gamma: f64,
    },
    /// Multiplies the step by `factor` whenever the held-out loss has not
    /// improved for `patience` epochs.
    PlateauDecay {
        eta0: f64,
        #[serde(default = "default_factor")]
        factor: f64,
        #[serde(default = "default_patience")]
        patience: u32,
    },
}

fn default_factor() -> f64 {
    0.9
}

fn default_patience() -> u32 {
    1
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::PlateauDecay {
            eta0: 0.5,
            factor: default_factor(),
            patience: default_patience(),
        }
    }
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant { eta } => eta > 0.0 && eta.is_finite(),
            StepSchedule::InversePower { eta0, gamma } => {
                eta0 > 0.0 && eta0.is_finite() && gamma >= 0.0
            }
            StepSchedule::PlateauDecay {
                eta0,
                factor,
                patience,
            } => eta0 > 0.0 && eta0.is_finite() && factor > 0.0 && factor <= 1.0 && patience >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(
                "step_schedule",
                format!("invalid parameters {self:?}"),
            ))
        }
    }
}

/// Per-client state of a [`StepSchedule`].
#[derive(Debug, Clone)]
pub struct StepState {
    rule: StepSchedule,
    scale: f64,
    best: f64,
    stale: u32,
}

impl StepState {
    pub fn new(rule: StepSchedule) -> Self {
        StepState {
            rule,
            scale: 1.0,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    /// Step for global round index `t` (0-based).
    pub fn eta(&self, t: u64) -> f64 {
        match self.rule {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::InversePower { eta0, gamma } => eta0 / (1.0 + t as f64).powf(gamma),
            StepSchedule::PlateauDecay { eta0, .. } => eta0 * self.scale,
        }
    }

    /// Feeds the held-out loss at the end of an epoch.
    pub fn end_epoch(&mut self, test_loss: f64) {
        if let StepSchedule::PlateauDecay {
            factor, patience, ..
        } = self.rule
        {
            if test_loss < self.best {
                self.best = test_loss;
                self.stale = 0;
            } else {
                self.stale += 1;
                if self.stale >= patience {
                    self.scale *= factor;
                    self.stale = 0;
                }
            }
        }
    }
}

/// Clipping constant per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ClipSchedule {
    Constant {
        c: f64,
    },
    /// Linear from `start` at round 0 to `end` at the last round.
    Linear {
        start: f64,
        end: f64,
    },
    /// Explicit values; the last one repeats.
    List {
        values: Vec<f64>,
    },
    /// No clipping (`C = ∞`).
    Disabled,
}

impl ClipSchedule {
    pub fn validate(&self) -> Result<()> {
        let pos = |c: f64| c > 0.0 && c.is_finite();
        let ok = match self {
            ClipSchedule::Constant { c } => pos(*c),
            ClipSchedule::Linear { start, end } => pos(*start) && pos(*end),
            ClipSchedule::List { values } => !values.is_empty() && values.iter().all(|c| pos(*c)),
            ClipSchedule::Disabled => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(
                "clip",
                "clipping constants must be finite and > 0",
            ))
        }
    }

    /// `C_b` for round `t` of `total`.
    pub fn at(&self, t: u64, total: u64) -> f64 {
        match self {
            ClipSchedule::Constant { c } => *c,
            ClipSchedule::Linear { start, end } => {
                if total <= 1 {
                    *start
                } else {
                    let f = t.min(total - 1) as f64 / (total - 1) as f64;
                    start + (end - start) * f
                }
            }
            ClipSchedule::List { values } => values[(t as usize).min(values.len() - 1)],
            ClipSchedule::Disabled => f64::INFINITY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_decays_by_ten_percent() {
        let mut s = StepState::new(StepSchedule::PlateauDecay {
            eta0: 1.0,
            factor: 0.9,
            patience: 1,
        });
        s.end_epoch(1.0);
        assert_eq!(s.eta(0), 1.0);
        s.end_epoch(1.5);
        assert!((s.eta(0) - 0.9).abs() < 1e-15);
        s.end_epoch(0.5);
        assert!((s.eta(0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn inverse_power() {
        let s = StepState::new(StepSchedule::InversePower {
            eta0: 1.0,
            gamma: 0.5,
        });
        assert_eq!(s.eta(0), 1.0);
        assert!((s.eta(3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn clip_schedules() {
        let lin = ClipSchedule::Linear {
            start: 2.0,
            end: 1.0,
        };
        assert_eq!(lin.at(0, 11), 2.0);
        assert!((lin.at(5, 11) - 1.5).abs() < 1e-15);
        assert_eq!(lin.at(10, 11), 1.0);
        let list = ClipSchedule::List {
            values: vec![1.0, 3.0],
        };
        assert_eq!(list.at(7, 100), 3.0);
        assert!(ClipSchedule::Disabled.at(0, 1).is_infinite());
        assert!(ClipSchedule::Constant { c: 0.0 }.validate().is_err());
    }
}
