use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// One labelled example; `x` carries a trailing constant 1 for the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Two-class Gaussian blobs with means `±margin·e_1` and covariance `scale² I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub d: usize,
    pub margin: f64,
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// Training samples N.
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default = "default_test")]
    pub n_test: usize,
    #[serde(default)]
    pub label_flip: f64,
    pub seed: u64,
}

fn default_scale() -> f64 {
    0.5
}

fn default_test() -> usize {
    1024
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("d", "must be >= 1"));
        }
        if self.n == 0 {
            return Err(Error::config("N", "must be >= 1"));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::config("scale", "must be > 0"));
        }
        if !self.margin.is_finite() {
            return Err(Error::config("margin", "must be finite"));
        }
        if !(0.0..0.5).contains(&self.label_flip) {
            return Err(Error::config("label_flip", "must lie in [0, 0.5)"));
        }
        Ok(())
    }

    /// Training and test splits, balanced in expectation.
    pub fn generate(&self) -> Result<(Vec<Sample>, Vec<Sample>)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let train = self.draw(&mut rng, self.n);
        let test = self.draw(&mut rng, self.n_test);
        Ok((train, test))
    }

    fn draw(&self, rng: &mut ChaCha8Rng, count: usize) -> Vec<Sample> {
        (0..count)
            .map(|_| {
                let positive = rng.random_bool(0.5);
                let sign = if positive { 1.0 } else { -1.0 };
                let mut x: Vec<f64> = (0..self.d)
                    .map(|_| self.scale * Distribution::<f64>::sample(&StandardNormal, rng))
                    .collect();
                x[0] += sign * self.margin;
                x.push(1.0);
                let flip = self.label_flip > 0.0 && rng.random_bool(self.label_flip);
                let y = if positive != flip { 1.0 } else { 0.0 };
                Sample { x, y }
            })
            .collect()
    }
}
