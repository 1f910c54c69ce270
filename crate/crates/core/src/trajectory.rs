use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled multi-channel command (joint positions in degrees, or
/// velocities).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    sample_rate: f64,
    start_time: f64,
    channels: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(sample_rate: f64, start_time: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::Input(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if !start_time.is_finite() {
            return Err(Error::Input("start time must be finite".into()));
        }
        if channels.is_empty() {
            return Err(Error::Input("trajectory has no channels".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Input("trajectory channels differ in length".into()));
        }
        Ok(Self {
            sample_rate,
            start_time,
            channels,
        })
    }

    /// A rest-step-hold command: `from` until `step_time`, then `to` until
    /// `step_time + hold`. Sampling starts at `start_time`.
    pub fn step(
        from: &[f64],
        to: &[f64],
        sample_rate: f64,
        start_time: f64,
        step_time: f64,
        hold: f64,
    ) -> Result<Self> {
        if from.len() != to.len() {
            return Err(Error::Input("step endpoints differ in dimension".into()));
        }
        if step_time < start_time || hold < 0.0 {
            return Err(Error::Input("step must start inside the trajectory".into()));
        }
        let n = ((step_time + hold - start_time) * sample_rate).round() as usize + 1;
        let step_index = ((step_time - start_time) * sample_rate - 1e-9).ceil() as usize;
        let channels = from
            .iter()
            .zip(to)
            .map(|(&a, &b)| (0..n).map(|i| if i < step_index { a } else { b }).collect())
            .collect();
        Self::new(sample_rate, start_time, channels)
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Number of samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, index: usize) -> f64 {
        self.start_time + index as f64 / self.sample_rate
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    /// Last sample of every channel.
    pub fn final_values(&self) -> Vec<f64> {
        self.channels
            .iter()
            .map(|c| c.last().copied().unwrap_or(0.0))
            .collect()
    }

    /// Time at which the command reaches its final value for good, i.e. the
    /// instant of the last sample that differs from the previous one.
    pub fn settle_time(&self) -> f64 {
        let n = self.len();
        let last_change = (1..n)
            .rev()
            .find(|&i| self.channels.iter().any(|c| c[i] != c[i - 1]));
        match last_change {
            Some(i) => self.time(i),
            None => self.start_time,
        }
    }

    /// Channel-wise linear combination `sum_j w_j * channel_j`.
    pub fn weighted_sum(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (channel, &w) in self.channels.iter().zip(weights) {
            for (o, &x) in out.iter_mut().zip(channel) {
                *o += w * x;
            }
        }
        out
    }
}

/// Reads a sampled signal at fractional sample position `pos` using linear
/// interpolation, holding the first sample before the start and the last one
/// past the end.
pub(crate) fn sample_linear(samples: &[f64], pos: f64) -> f64 {
    let n = samples.len();
    if pos <= 0.0 {
        return samples[0];
    }
    let last = (n - 1) as f64;
    if pos >= last {
        return samples[n - 1];
    }
    let nearest = pos.round();
    if (pos - nearest).abs() < 1e-9 {
        return samples[nearest as usize];
    }
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    samples[i] + frac * (samples[i + 1] - samples[i])
}
