//! Seeded white noise `N_o(t)` added to the lock-in coupling.
//!
//! The noise is a piecewise-constant function on a uniform grid of width
//! `interval`: sample `k` covers `[k·interval, (k+1)·interval)` and has value
//! `amplitude · z_k / sqrt(interval)` with `z_k ~ N(0, 1)`. Each `z_k` is drawn
//! from its own ChaCha stream keyed by `(seed, k)`, so the function is pure in
//! `t` and any evaluation order (serial, parallel, exact integration over a
//! free segment) sees the same realization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    GaussianWhite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Field units; the sample standard deviation is `amplitude / sqrt(interval)`.
    pub amplitude: f64,
    pub seed: u64,
    /// Grid width; `None` lets the sequence builder use its integrator step.
    pub interval: Option<f64>,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self { kind: NoiseKind::None, amplitude: 0.0, seed: 0, interval: None }
    }

    pub fn gaussian_white(amplitude: f64, seed: u64) -> Self {
        Self { kind: NoiseKind::GaussianWhite, amplitude, seed, interval: None }
    }

    pub fn is_active(&self) -> bool {
        self.kind != NoiseKind::None && self.amplitude != 0.0
    }

    pub fn with_interval(mut self, interval: f64) -> Self {
        self.interval = Some(interval);
        self
    }

    /// Fills in the grid width if none was configured.
    pub fn or_interval(mut self, interval: f64) -> Self {
        self.interval.get_or_insert(interval);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() || self.amplitude < 0.0 {
            return Err(Error::InvalidParameter(format!("noise amplitude {} must be >= 0", self.amplitude)));
        }
        if let Some(dt) = self.interval {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidParameter(format!("noise interval {dt} must be > 0")));
            }
        }
        Ok(())
    }

    fn grid(&self) -> f64 {
        self.interval.expect("active noise requires a sampling interval")
    }

    fn standard_sample(&self, index: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        StandardNormal.sample(&mut rng)
    }

    fn sample_value(&self, index: u64) -> f64 {
        let dt = self.grid();
        self.amplitude * self.standard_sample(index) / dt.sqrt()
    }

    /// `N_o(t)`; identically zero when inactive.
    pub fn value(&self, t: f64) -> f64 {
        if !self.is_active() {
            return 0.0;
        }
        let index = (t.max(0.0) / self.grid()).floor() as u64;
        self.sample_value(index)
    }

    /// `∫_a^b N_o(t) dt`, exact for the piecewise-constant realization.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if !self.is_active() || b <= a {
            return 0.0;
        }
        let dt = self.grid();
        let a = a.max(0.0);
        let first = (a / dt).floor() as u64;
        let last = (b / dt).floor() as u64;
        (first..=last)
            .map(|k| {
                let lo = (k as f64 * dt).max(a);
                let hi = ((k + 1) as f64 * dt).min(b);
                if hi > lo {
                    self.sample_value(k) * (hi - lo)
                } else {
                    0.0
                }
            })
            .sum()
    }
}
