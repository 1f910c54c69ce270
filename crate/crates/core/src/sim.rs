//! Ground-truth plant: lightly damped vibration modes whose frequencies depend
//! on the arm pose.
//!
//! Each mode obeys `x'' + 2 zeta w x' + w^2 x = w^2 u(t)` where `u` is a
//! weighted sum of the joint commands and `w` is frozen at the command's end
//! pose. The command is held constant between samples and every section is
//! advanced with its exact transition matrix, so the simulator carries no
//! integration error.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq_map::{FrequencyMap, JointPose};
use crate::modal::AccelTrace;
use crate::trajectory::Trajectory;

/// Natural frequency of a mode as a function of the pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FreqFn {
    Constant {
        hz: f64,
    },
    /// `base_hz + sum_j slope_j * (q_j - anchor_j)`.
    Affine {
        base_hz: f64,
        anchor_deg: Vec<f64>,
        slopes_hz_per_deg: Vec<f64>,
    },
    /// Tabulated; poses outside the grid are extrapolated (one cell at most).
    Map {
        map: FrequencyMap,
        mode: usize,
    },
}

impl FreqFn {
    pub fn eval(&self, pose: &JointPose) -> Result<f64> {
        let f = match self {
            FreqFn::Constant { hz } => *hz,
            FreqFn::Affine {
                base_hz,
                anchor_deg,
                slopes_hz_per_deg,
            } => {
                if anchor_deg.len() != pose.dim() || slopes_hz_per_deg.len() != pose.dim() {
                    return Err(Error::Config(format!(
                        "affine frequency function expects {} joints, pose {pose} has {}",
                        anchor_deg.len(),
                        pose.dim()
                    )));
                }
                base_hz
                    + pose
                        .joints()
                        .iter()
                        .zip(anchor_deg)
                        .zip(slopes_hz_per_deg)
                        .map(|((q, a), s)| s * (q - a))
                        .sum::<f64>()
            }
            FreqFn::Map { map, mode } => map.extrapolate(pose, *mode)?.frequency,
        };
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::Config(format!(
                "mode frequency {f} Hz at pose {pose} is not positive"
            )));
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub freq: FreqFn,
    /// Damping ratio, `0 <= zeta < 0.2`.
    pub zeta: f64,
    /// Tip displacement per degree of modal input, mm/deg.
    pub gain: f64,
    /// Coupling of each joint command into the modal input. `None` means unit
    /// weight on every joint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub modes: Vec<ModeSpec>,
    pub sample_rate: f64,
    /// Standard deviation of the additive acceleration noise, mm/s^2.
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
    /// Rigid-body tip travel per degree of summed joint motion, mm/deg.
    #[serde(default = "default_rigid_gain")]
    pub rigid_gain: f64,
}

fn default_rigid_gain() -> f64 {
    1.0
}

impl SimConfig {
    /// The two-mode reference plant: the first mode is 1.9 Hz and the second
    /// 3.8 Hz at joints (45 deg, 60 deg), both varying affinely over the
    /// workspace, with 1 % damping and noise at 1 % of the peak acceleration of a
    /// (0, 0) -> (45, 45) step.
    pub fn reference_plant() -> Self {
        let mode = |scale: f64, gain: f64| ModeSpec {
            freq: FreqFn::Affine {
                base_hz: 1.9 * scale,
                anchor_deg: vec![45.0, 60.0],
                slopes_hz_per_deg: vec![0.004 * scale, -0.003 * scale],
            },
            zeta: 0.01,
            gain,
            weights: None,
        };
        let mut config = Self {
            modes: vec![mode(1.0, 1.2), mode(2.0, 0.5)],
            sample_rate: 100.0,
            noise_std: 0.0,
            seed: 0,
            rigid_gain: 1.0,
        };
        let reference = config
            .peak_step_acceleration(&JointPose::from([0.0, 0.0]), &JointPose::from([45.0, 45.0]))
            .expect("reference plant is well formed");
        config.noise_std = 0.01 * reference;
        config
    }

    /// A single mode with a pose-independent frequency.
    pub fn single_mode(hz: f64, zeta: f64, gain: f64, sample_rate: f64) -> Self {
        Self {
            modes: vec![ModeSpec {
                freq: FreqFn::Constant { hz },
                zeta,
                gain,
                weights: None,
            }],
            sample_rate,
            noise_std: 0.0,
            seed: 0,
            rigid_gain: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::Config("no modes configured".into()));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config("noise std must be non-negative".into()));
        }
        for (i, m) in self.modes.iter().enumerate() {
            if !(0.0..0.2).contains(&m.zeta) {
                return Err(Error::Config(format!(
                    "mode {i}: damping ratio {} outside [0, 0.2)",
                    m.zeta
                )));
            }
            if !(m.gain > 0.0 && m.gain.is_finite()) {
                return Err(Error::Config(format!("mode {i}: gain must be positive")));
            }
        }
        Ok(())
    }

    /// Natural frequencies of every mode at `pose`, checked against the
    /// sample rate.
    pub fn frequencies_at(&self, pose: &JointPose) -> Result<Vec<f64>> {
        self.validate()?;
        let freqs = self
            .modes
            .iter()
            .map(|m| m.freq.eval(pose))
            .collect::<Result<Vec<_>>>()?;
        for f in &freqs {
            if self.sample_rate < 10.0 * f {
                return Err(Error::Config(format!(
                    "sample rate {} Hz is below 10x the {f:.3} Hz mode at {pose}",
                    self.sample_rate
                )));
            }
        }
        Ok(freqs)
    }

    /// Largest tip acceleration right after an instantaneous step, summed
    /// over modes: `sum gain * w^2 * |du|`.
    pub fn peak_step_acceleration(&self, from: &JointPose, to: &JointPose) -> Result<f64> {
        let freqs = self.frequencies_at(to)?;
        Ok(self
            .modes
            .iter()
            .zip(freqs)
            .map(|(m, f)| {
                let w = 2.0 * PI * f;
                let du: f64 = coupling(m, to.dim())
                    .iter()
                    .zip(from.joints().iter().zip(to.joints()))
                    .map(|(c, (a, b))| c * (b - a))
                    .sum();
                m.gain * w * w * du.abs()
            })
            .sum())
    }
}

fn coupling(mode: &ModeSpec, joints: usize) -> Vec<f64> {
    mode.weights.clone().unwrap_or_else(|| vec![1.0; joints])
}

/// Traces produced by one simulated motion.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Single-channel tip displacement, mm.
    pub tip_displacement: Trajectory,
    /// Tip acceleration, mm/s^2, with `motion_end_time` at the command end.
    pub tip_acceleration: AccelTrace,
    /// Instant the command reached its final value.
    pub command_end_time: f64,
    /// Natural frequencies used for the motion (frozen at the end pose).
    pub mode_frequencies: Vec<f64>,
}

/// Exact free-response transition of a damped second-order section over `h`
/// seconds, acting on (deviation from input, velocity).
#[derive(Debug, Clone, Copy)]
struct Section {
    a11: f64,
    a12: f64,
    a21: f64,
    a22: f64,
    omega: f64,
    zeta: f64,
}

impl Section {
    fn new(freq: f64, zeta: f64, h: f64) -> Self {
        let omega = 2.0 * PI * freq;
        let sigma = zeta * omega;
        let wd = omega * (1.0 - zeta * zeta).sqrt();
        let decay = (-sigma * h).exp();
        let (s, c) = (wd * h).sin_cos();
        Self {
            a11: decay * (c + sigma / wd * s),
            a12: decay * s / wd,
            a21: -decay * omega * omega / wd * s,
            a22: decay * (c - sigma / wd * s),
            omega,
            zeta,
        }
    }

    fn step(&self, dev: f64, vel: f64) -> (f64, f64) {
        (
            self.a11 * dev + self.a12 * vel,
            self.a21 * dev + self.a22 * vel,
        )
    }

    fn accel(&self, dev: f64, vel: f64) -> f64 {
        -self.omega * self.omega * dev - 2.0 * self.zeta * self.omega * vel
    }
}

/// Simulates `command` with the configured seed.
pub fn simulate(config: &SimConfig, command: &Trajectory) -> Result<SimResult> {
    simulate_seeded(config, command, config.seed)
}

/// Simulates `command`, drawing measurement noise from `seed`.
pub fn simulate_seeded(config: &SimConfig, command: &Trajectory, seed: u64) -> Result<SimResult> {
    config.validate()?;
    if command.is_empty() {
        return Err(Error::Input("empty command".into()));
    }
    if (command.sample_rate() - config.sample_rate).abs() > 1e-9 * config.sample_rate {
        return Err(Error::Config(format!(
            "command is sampled at {} Hz, simulator at {} Hz",
            command.sample_rate(),
            config.sample_rate
        )));
    }
    let joints = command.num_channels();
    for (i, m) in config.modes.iter().enumerate() {
        if let Some(w) = &m.weights {
            if w.len() != joints {
                return Err(Error::Input(format!(
                    "mode {i} couples {} joints, command has {joints}",
                    w.len()
                )));
            }
        }
    }
    let end_pose = JointPose::new(command.final_values());
    let freqs = config.frequencies_at(&end_pose)?;
    let h = 1.0 / config.sample_rate;
    let n = command.len();

    let mut displacement = command.weighted_sum(&vec![config.rigid_gain; joints]);
    let mut acceleration = vec![0.0; n];
    for (mode, &f) in config.modes.iter().zip(&freqs) {
        let section = Section::new(f, mode.zeta, h);
        let input = command.weighted_sum(&coupling(mode, joints));
        // At rest at the initial command.
        let (mut x, mut v) = (input[0], 0.0);
        for (k, &u) in input.iter().enumerate() {
            let dev = x - u;
            displacement[k] += mode.gain * dev;
            acceleration[k] += mode.gain * section.accel(dev, v);
            let (d, vel) = section.step(dev, v);
            x = u + d;
            v = vel;
        }
    }
    if config.noise_std > 0.0 {
        let normal = Normal::new(0.0, config.noise_std)
            .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for a in &mut acceleration {
            *a += normal.sample(&mut rng);
        }
    }

    let command_end_time = command.settle_time();
    Ok(SimResult {
        tip_displacement: Trajectory::new(
            command.sample_rate(),
            command.start_time(),
            vec![displacement],
        )?,
        tip_acceleration: AccelTrace {
            sample_rate: command.sample_rate(),
            start_time: command.start_time(),
            samples: acceleration,
            motion_end_time: command_end_time,
        },
        command_end_time,
        mode_frequencies: freqs,
    })
}

/// Peak-to-peak tip displacement from `command_end_time + settle_guard` to
/// the end of the trace.
pub fn residual_amplitude(result: &SimResult, settle_guard: f64) -> Result<f64> {
    let disp = &result.tip_displacement;
    let start = result.command_end_time + settle_guard;
    let first = ((start - disp.start_time()) * disp.sample_rate() - 1e-9)
        .ceil()
        .max(0.0) as usize;
    let window = disp.channel(0).get(first..).unwrap_or(&[]);
    let span = window.len() as f64 / disp.sample_rate();
    let slowest = result
        .mode_frequencies
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let needed = if slowest.is_finite() { 3.0 / slowest } else { 0.0 };
    if window.len() < 2 || span + 1e-9 < needed {
        return Err(Error::InsufficientData(format!(
            "residual window of {span:.3} s is shorter than three periods ({needed:.3} s)"
        )));
    }
    let (lo, hi) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    Ok(hi - lo)
}

/// Residual amplitudes with and without shaping and the relative reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub amp_without: f64,
    pub amp_with: f64,
    /// Percent.
    pub reduction: f64,
}

impl Reduction {
    pub fn from_amplitudes(amp_without: f64, amp_with: f64) -> Result<Self> {
        if !(amp_without > 0.0) {
            return Err(Error::UndefinedReduction);
        }
        Ok(Self {
            amp_without,
            amp_with,
            reduction: 100.0 * (1.0 - amp_with / amp_without),
        })
    }
}

pub fn reduction_report(
    unshaped: &SimResult,
    shaped: &SimResult,
    settle_guard: f64,
) -> Result<Reduction> {
    Reduction::from_amplitudes(
        residual_amplitude(unshaped, settle_guard)?,
        residual_amplitude(shaped, settle_guard)?,
    )
}

/// Timing of a synthetic step measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepTiming {
    /// Rest before the step, s.
    pub lead: f64,
    /// Recording after the step, s.
    pub record: f64,
}

impl Default for StepTiming {
    fn default() -> Self {
        Self {
            lead: 1.0,
            record: 20.0,
        }
    }
}

impl StepTiming {
    /// Step command from `from` to `to`, starting at t = 0.
    pub fn command(&self, from: &JointPose, to: &JointPose, sample_rate: f64) -> Result<Trajectory> {
        Trajectory::step(
            from.joints(),
            to.joints(),
            sample_rate,
            0.0,
            self.lead,
            self.record,
        )
    }
}

/// Synthetic measurement campaign with default timing.
pub fn synth_campaign(
    config: &SimConfig,
    grid: &[JointPose],
    step_from: &JointPose,
) -> Result<Vec<(JointPose, AccelTrace)>> {
    synth_campaign_with(config, grid, step_from, StepTiming::default())
}

/// Unshaped step from `step_from` to every grid pose; returns the tip
/// acceleration of each, with the motion end marked. Pose `i` draws its noise
/// from `config.seed + i`.
pub fn synth_campaign_with(
    config: &SimConfig,
    grid: &[JointPose],
    step_from: &JointPose,
    timing: StepTiming,
) -> Result<Vec<(JointPose, AccelTrace)>> {
    grid.iter()
        .enumerate()
        .map(|(i, pose)| {
            if pose.dim() != step_from.dim() {
                return Err(Error::Input(format!(
                    "grid pose {pose} and start pose {step_from} differ in dimension"
                )));
            }
            let cmd = timing.command(step_from, pose, config.sample_rate)?;
            let seed = config.seed.wrapping_add(i as u64);
            let mut trace = simulate_seeded(config, &cmd, seed)?.tip_acceleration;
            // The motion ends at the step even when the pose does not change.
            trace.motion_end_time = timing.lead;
            Ok((pose.clone(), trace))
        })
        .collect()
}
