//! Impulse-sequence input shapers.
//!
//! A shaper is a short train of positive impulses with unit total area. The
//! shaped command is the convolution of the raw command with that train, so
//! the vibration each impulse excites is cancelled by its successors while the
//! rigid-body motion is preserved.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{sample_linear, Trajectory};

/// Impulses closer than this in time are merged into one.
pub const MERGE_TOLERANCE_S: f64 = 1e-9;

const UNITY_TOLERANCE: f64 = 1e-12;

/// The two tunables of a zero-vibration shaper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShaperParams {
    /// Delay between the impulses: half the vibration period, in seconds.
    pub t0: f64,
    /// Amplitude ratio of the vibration over one half period, in `(0, 1]`.
    pub k0: f64,
}

impl ShaperParams {
    pub fn new(t0: f64, k0: f64) -> Result<Self> {
        let params = Self { t0, k0 };
        params.validate()?;
        Ok(params)
    }

    /// Shaper tuned to a vibration at `frequency` Hz (delay = half period).
    pub fn from_frequency(frequency: f64, k0: f64) -> Result<Self> {
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "frequency must be positive, got {frequency}"
            )));
        }
        Self::new(0.5 / frequency, k0)
    }

    /// Frequency the shaper notches, `1 / (2 t0)`.
    pub fn notch_frequency(&self) -> f64 {
        0.5 / self.t0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "t0 must be positive, got {}",
                self.t0
            )));
        }
        if !(self.k0 > 0.0 && self.k0 <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "k0 must lie in (0, 1], got {}",
                self.k0
            )));
        }
        Ok(())
    }
}

/// Half-period amplitude ratio of a free oscillation with damping ratio `zeta`:
/// `exp(-zeta * pi / sqrt(1 - zeta^2))`.
pub fn k0_from_damping_ratio(zeta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&zeta) {
        return Err(Error::InvalidParameter(format!(
            "damping ratio must lie in [0, 1), got {zeta}"
        )));
    }
    Ok((-zeta * PI / (1.0 - zeta * zeta).sqrt()).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impulse {
    pub amplitude: f64,
    /// Seconds after the first impulse.
    pub time: f64,
}

/// Time-ordered impulse train with positive amplitudes summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Impulse>", into = "Vec<Impulse>")]
pub struct ImpulseSequence {
    impulses: Vec<Impulse>,
}

impl ImpulseSequence {
    pub fn new(impulses: Vec<Impulse>) -> Result<Self> {
        if impulses.is_empty() {
            return Err(Error::InvalidParameter("impulse sequence is empty".into()));
        }
        if impulses[0].time != 0.0 {
            return Err(Error::InvalidParameter(
                "first impulse must be at t = 0".into(),
            ));
        }
        if impulses.windows(2).any(|w| !(w[1].time > w[0].time)) {
            return Err(Error::InvalidParameter(
                "impulse times must be strictly increasing".into(),
            ));
        }
        if impulses
            .iter()
            .any(|i| !(i.amplitude.is_finite() && i.amplitude > 0.0) || !i.time.is_finite())
        {
            return Err(Error::InvalidParameter(
                "impulse amplitudes must be positive and finite".into(),
            ));
        }
        let sum: f64 = impulses.iter().map(|i| i.amplitude).sum();
        if (sum - 1.0).abs() > UNITY_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "impulse amplitudes must sum to 1, got {sum}"
            )));
        }
        Ok(Self { impulses })
    }

    /// The pass-through shaper: a single unit impulse at t = 0.
    pub fn identity() -> Self {
        Self {
            impulses: vec![Impulse {
                amplitude: 1.0,
                time: 0.0,
            }],
        }
    }

    /// Two-impulse zero-vibration shaper:
    /// `1/(1+k0)` at 0 and `k0/(1+k0)` at `t0`.
    pub fn zv(params: ShaperParams) -> Result<Self> {
        params.validate()?;
        let ShaperParams { t0, k0 } = params;
        Ok(Self {
            impulses: vec![
                Impulse {
                    amplitude: 1.0 / (1.0 + k0),
                    time: 0.0,
                },
                Impulse {
                    amplitude: k0 / (1.0 + k0),
                    time: t0,
                },
            ],
        })
    }

    pub fn impulses(&self) -> &[Impulse] {
        &self.impulses
    }

    pub fn len(&self) -> usize {
        self.impulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.impulses.is_empty()
    }

    /// Time of the last impulse: the delay the shaper adds to a motion.
    pub fn total_delay(&self) -> f64 {
        self.impulses.last().map_or(0.0, |i| i.time)
    }

    /// Convolution of two impulse trains. Coincident impulses (within
    /// [`MERGE_TOLERANCE_S`]) are merged by adding their amplitudes.
    pub fn cascade(&self, other: &ImpulseSequence) -> ImpulseSequence {
        let mut products: Vec<Impulse> = self
            .impulses
            .iter()
            .flat_map(|a| {
                other.impulses.iter().map(move |b| Impulse {
                    amplitude: a.amplitude * b.amplitude,
                    time: a.time + b.time,
                })
            })
            .collect();
        products.sort_by(|a, b| a.time.total_cmp(&b.time));

        let mut merged: Vec<Impulse> = Vec::with_capacity(products.len());
        // Clusters are anchored at their first member so merging does not chain.
        let mut anchor = f64::NEG_INFINITY;
        for p in products {
            match merged.last_mut() {
                Some(last) if p.time - anchor <= MERGE_TOLERANCE_S => {
                    last.amplitude += p.amplitude;
                }
                _ => {
                    anchor = p.time;
                    merged.push(p);
                }
            }
        }
        if let Some(first) = merged.first_mut() {
            first.time = 0.0;
        }
        ImpulseSequence { impulses: merged }
    }

    /// Cascade of several shapers, applied in the given order.
    pub fn cascade_all<'a, I>(sequences: I) -> ImpulseSequence
    where
        I: IntoIterator<Item = &'a ImpulseSequence>,
    {
        sequences
            .into_iter()
            .fold(ImpulseSequence::identity(), |acc, s| acc.cascade(s))
    }

    /// Complex response `H(f) = sum_j A_j exp(-i 2 pi f t_j)` as
    /// `(magnitude, phase in radians)`.
    pub fn frequency_response(&self, frequency: f64) -> (f64, f64) {
        let (re, im) = self.response_parts(frequency);
        (re.hypot(im), im.atan2(re))
    }

    fn response_parts(&self, frequency: f64) -> (f64, f64) {
        self.impulses.iter().fold((0.0, 0.0), |(re, im), imp| {
            let (s, c) = (2.0 * PI * frequency * imp.time).sin_cos();
            (re + imp.amplitude * c, im - imp.amplitude * s)
        })
    }

    /// Shapes every channel of `traj`: `y(t) = sum_j A_j x(t - t_j)`.
    ///
    /// Delays that fall between samples are read by linear interpolation, the
    /// input is held at its first sample before the trajectory starts, and the
    /// output is lengthened by [`total_delay`](Self::total_delay) (holding the
    /// last input sample) so the shaped motion is emitted in full.
    pub fn apply(&self, traj: &Trajectory) -> Result<Trajectory> {
        if traj.is_empty() {
            return Err(Error::Input("cannot shape an empty trajectory".into()));
        }
        let fs = traj.sample_rate();
        let extra = (self.total_delay() * fs - 1e-9).ceil().max(0.0) as usize;
        let out_len = traj.len() + extra;
        let offsets: Vec<(f64, f64)> = self
            .impulses
            .iter()
            .map(|i| (i.amplitude, i.time * fs))
            .collect();

        let channels = traj
            .channels()
            .iter()
            .map(|x| {
                (0..out_len)
                    .map(|n| {
                        offsets
                            .iter()
                            .map(|&(a, shift)| a * sample_linear(x, n as f64 - shift))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        Trajectory::new(fs, traj.start_time(), channels)
    }
}

impl TryFrom<Vec<Impulse>> for ImpulseSequence {
    type Error = Error;

    fn try_from(impulses: Vec<Impulse>) -> Result<Self> {
        Self::new(impulses)
    }
}

impl From<ImpulseSequence> for Vec<Impulse> {
    fn from(seq: ImpulseSequence) -> Self {
        seq.impulses
    }
}
