use std::f64::consts::TAU;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{IngestError, Paced, ReadingBatch};
use crate::field::{Readings, SensorId, SensorSet};

/// `base + amplitude * sin(2*pi*t/period + phase_i) + U(-noise, noise)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    pub base: f64,
    pub amplitude: f64,
    pub period_s: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            base: 22.0,
            amplitude: 4.0,
            period_s: 60.0,
            noise: 0.2,
            seed: 42,
        }
    }
}

/// Endless seeded reading stream, one batch per `step`.
#[derive(Debug, Clone)]
pub struct SyntheticStream {
    params: SyntheticParams,
    ids: Vec<SensorId>,
    phases: Vec<f64>,
    step: Duration,
    tick: u64,
    rng: ChaCha8Rng,
}

impl SyntheticStream {
    pub fn new(sensors: &SensorSet, params: SyntheticParams, step: Duration) -> Result<Self, IngestError> {
        if !(params.period_s > 0.0 && params.period_s.is_finite()) {
            return Err(IngestError::InvalidArgument(format!(
                "period must be > 0, got {}",
                params.period_s
            )));
        }
        if !(params.noise >= 0.0 && params.amplitude.is_finite() && params.base.is_finite() && params.noise.is_finite())
        {
            return Err(IngestError::InvalidArgument(
                "base, amplitude and noise must be finite, noise >= 0".into(),
            ));
        }
        if step.is_zero() {
            return Err(IngestError::InvalidArgument("step must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let ids: Vec<SensorId> = sensors.sorted_by_id().iter().map(|s| s.id).collect();
        let phases = ids.iter().map(|_| rng.gen_range(0.0..TAU)).collect();
        Ok(SyntheticStream {
            params,
            ids,
            phases,
            step,
            tick: 0,
            rng,
        })
    }

    /// Phase of each sensor, in ascending id order.
    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn ids(&self) -> &[SensorId] {
        &self.ids
    }

    /// Noise-free value of sensor slot `i` at time `t_s` seconds.
    pub fn clean_value(&self, i: usize, t_s: f64) -> f64 {
        let p = &self.params;
        p.base + p.amplitude * (TAU * t_s / p.period_s + self.phases[i]).sin()
    }

    pub fn next_batch(&mut self) -> ReadingBatch {
        let tick = self.tick;
        self.tick += 1;
        let t_ms = tick.saturating_mul(self.step.as_millis() as u64);
        let t_s = tick as f64 * self.step.as_secs_f64();
        let noise = self.params.noise;
        let readings: Readings = (0..self.ids.len())
            .map(|i| {
                let jitter = if noise > 0.0 {
                    self.rng.gen_range(-noise..=noise)
                } else {
                    0.0
                };
                (self.ids[i], self.clean_value(i, t_s) + jitter)
            })
            .collect();
        ReadingBatch {
            tick,
            timestamp_ms: t_ms,
            readings,
        }
    }
}

impl Iterator for SyntheticStream {
    type Item = Paced;

    fn next(&mut self) -> Option<Paced> {
        let delay = if self.tick == 0 { Duration::ZERO } else { self.step };
        Some(Paced {
            delay,
            batch: self.next_batch(),
        })
    }
}
