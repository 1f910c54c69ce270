//! Mode identification from residual tip acceleration.
//!
//! The residual window (after the commanded motion has ended) is detrended,
//! Hann-windowed, zero-padded and transformed; spectral peaks are picked by
//! prominence and refined by parabolic interpolation.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled acceleration record with a marker separating the
/// commanded motion from the residual vibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelTrace {
    pub sample_rate: f64,
    pub start_time: f64,
    pub samples: Vec<f64>,
    pub motion_end_time: f64,
}

impl AccelTrace {
    pub fn new(
        sample_rate: f64,
        start_time: f64,
        samples: Vec<f64>,
        motion_end_time: f64,
    ) -> Result<Self> {
        let trace = Self {
            sample_rate,
            start_time,
            samples,
            motion_end_time,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::Input(format!(
                "sample rate must be positive, got {}",
                self.sample_rate
            )));
        }
        if self.samples.len() < 2 {
            return Err(Error::Input("trace needs at least two samples".into()));
        }
        if !(self.motion_end_time >= self.start_time - 1e-9
            && self.motion_end_time <= self.end_time() + 1e-9)
        {
            return Err(Error::Input(format!(
                "motion end {} s lies outside the trace [{}, {}] s",
                self.motion_end_time,
                self.start_time,
                self.end_time()
            )));
        }
        if self.samples.len() - self.motion_end_index() < 2 {
            return Err(Error::InsufficientData(
                "fewer than two samples after the motion end".into(),
            ));
        }
        Ok(())
    }

    pub fn time(&self, index: usize) -> f64 {
        self.start_time + index as f64 / self.sample_rate
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.samples.len().saturating_sub(1))
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Index of the first sample at or after `motion_end_time`.
    pub fn motion_end_index(&self) -> usize {
        let idx = ((self.motion_end_time - self.start_time) * self.sample_rate - 1e-9).ceil();
        (idx.max(0.0) as usize).min(self.samples.len())
    }
}

/// Single-sided magnitude spectrum on a uniform grid from DC to Nyquist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySpectrum {
    pub frequencies: Vec<f64>,
    pub magnitudes: Vec<f64>,
    /// Bin spacing of the transform before zero padding.
    pub raw_bin_width: f64,
}

impl FrequencySpectrum {
    pub fn bin_width(&self) -> f64 {
        if self.frequencies.len() > 1 {
            self.frequencies[1] - self.frequencies[0]
        } else {
            self.raw_bin_width
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModePeak {
    pub frequency: f64,
    pub magnitude: f64,
    /// Zero-based ordinal in ascending frequency.
    pub mode_index: usize,
}

/// Tunables of the identification chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentOptions {
    pub zero_pad_factor: usize,
    pub max_modes: usize,
    /// Minimum peak prominence as a fraction of the largest spectral value.
    pub min_prominence_ratio: f64,
    /// Bins below this frequency are never reported as modes.
    pub low_cutoff_hz: f64,
    /// Shortest residual window accepted for analysis.
    pub min_residual_s: f64,
}

impl Default for IdentOptions {
    fn default() -> Self {
        Self {
            zero_pad_factor: 4,
            max_modes: 2,
            min_prominence_ratio: 0.2,
            low_cutoff_hz: 0.5,
            // two periods of a 1 Hz mode
            min_residual_s: 2.0,
        }
    }
}

/// The mean-removed part of `trace` from the motion end onwards.
pub fn residual_segment(trace: &AccelTrace, min_residual_s: f64) -> Result<AccelTrace> {
    trace.validate()?;
    let start = trace.motion_end_index();
    let tail = &trace.samples[start..];
    let duration = tail.len() as f64 / trace.sample_rate;
    if duration + 1e-9 < min_residual_s {
        return Err(Error::InsufficientData(format!(
            "residual window is {duration:.3} s, need at least {min_residual_s:.3} s"
        )));
    }
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let start_time = trace.time(start);
    Ok(AccelTrace {
        sample_rate: trace.sample_rate,
        start_time,
        samples: tail.iter().map(|v| v - mean).collect(),
        motion_end_time: start_time,
    })
}

/// Symmetric Hann window of length `n`.
fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Hann-windowed, zero-padded magnitude spectrum of a (detrended) segment.
///
/// Magnitudes are amplitude-calibrated: a sinusoid of amplitude `a` centred on
/// a bin reads `a`.
pub fn spectrum(segment: &AccelTrace, zero_pad_factor: usize) -> Result<FrequencySpectrum> {
    let n = segment.samples.len();
    if n == 0 {
        return Err(Error::Input("cannot transform an empty segment".into()));
    }
    if zero_pad_factor == 0 {
        return Err(Error::InvalidParameter("zero pad factor must be >= 1".into()));
    }
    let window = hann(n);
    let gain: f64 = window.iter().sum();
    let len = n * zero_pad_factor;
    let mut buf: Vec<Complex<f64>> = segment
        .samples
        .iter()
        .zip(&window)
        .map(|(x, w)| Complex::new(x * w, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);

    let bins = len / 2 + 1;
    let df = segment.sample_rate / len as f64;
    let scale = if gain > 0.0 { 2.0 / gain } else { 0.0 };
    Ok(FrequencySpectrum {
        frequencies: (0..bins).map(|k| k as f64 * df).collect(),
        magnitudes: buf[..bins].iter().map(|c| c.norm() * scale).collect(),
        raw_bin_width: segment.sample_rate / n as f64,
    })
}

/// Topographic prominence of the local maximum at `k`.
fn prominence(m: &[f64], k: usize) -> f64 {
    let peak = m[k];
    let mut left_min = peak;
    let mut j = k;
    while j > 0 {
        j -= 1;
        if m[j] > peak {
            break;
        }
        left_min = left_min.min(m[j]);
    }
    let mut right_min = peak;
    let mut j = k;
    while j + 1 < m.len() {
        j += 1;
        if m[j] > peak {
            break;
        }
        right_min = right_min.min(m[j]);
    }
    peak - left_min.max(right_min)
}

/// Picks up to `max_modes` prominent peaks above `low_cutoff_hz`, refines each
/// by a parabola through the peak bin and its neighbours, and returns them in
/// ascending frequency.
pub fn extract_peaks(
    spec: &FrequencySpectrum,
    max_modes: usize,
    min_prominence_ratio: f64,
    low_cutoff_hz: f64,
) -> Result<Vec<ModePeak>> {
    if max_modes == 0 {
        return Err(Error::InvalidParameter("max_modes must be >= 1".into()));
    }
    if !(min_prominence_ratio > 0.0 && min_prominence_ratio <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "prominence ratio must lie in (0, 1], got {min_prominence_ratio}"
        )));
    }
    let m = &spec.magnitudes;
    let f = &spec.frequencies;
    if m.len() < 3 {
        return Err(Error::NoModesFound);
    }
    let first = f
        .iter()
        .position(|&x| x > 0.0 && x >= low_cutoff_hz)
        .unwrap_or(m.len())
        .max(1);
    let global = m[first..].iter().copied().fold(0.0, f64::max);
    if !(global > 0.0) {
        return Err(Error::NoModesFound);
    }
    let threshold = min_prominence_ratio * global;

    let mut candidates: Vec<(usize, f64)> = (first..m.len() - 1)
        .filter(|&k| m[k] > m[k - 1] && m[k] >= m[k + 1])
        .map(|k| (k, prominence(m, k)))
        .filter(|&(_, p)| p >= threshold)
        .collect();
    if candidates.is_empty() {
        return Err(Error::NoModesFound);
    }
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    candidates.truncate(max_modes);
    candidates.sort_by_key(|&(k, _)| k);

    let df = spec.bin_width();
    Ok(candidates
        .into_iter()
        .enumerate()
        .map(|(mode_index, (k, _))| {
            let (a, b, c) = (m[k - 1], m[k], m[k + 1]);
            let denom = a - 2.0 * b + c;
            let delta = if denom < 0.0 {
                (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            ModePeak {
                frequency: f[k] + delta * df,
                magnitude: b - 0.25 * (a - c) * delta,
                mode_index,
            }
        })
        .collect())
}

/// Full identification of one trace: residual window, spectrum, peaks.
pub fn identify(trace: &AccelTrace, opts: &IdentOptions) -> Result<(Vec<ModePeak>, FrequencySpectrum)> {
    let segment = residual_segment(trace, opts.min_residual_s)?;
    let spec = spectrum(&segment, opts.zero_pad_factor)?;
    let peaks = extract_peaks(
        &spec,
        opts.max_modes,
        opts.min_prominence_ratio,
        opts.low_cutoff_hz,
    )?;
    Ok((peaks, spec))
}

/// Keeps the components within `[0.7 f, 1.3 f]` (both sidebands) and zeroes
/// the rest. The inner `[0.85 f, 1.15 f]` passes unchanged; the outer parts of
/// the band roll off with a raised cosine so the filter's time response stays
/// short. The signal is zero-padded to twice its length to keep circular
/// wrap-around away from the data.
fn band_pass(samples: &[f64], sample_rate: f64, centre: f64) -> Vec<f64> {
    let n = samples.len();
    let len = 2 * n;
    let mut buf: Vec<Complex<f64>> = samples
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    let df = sample_rate / len as f64;
    let (lo, inner_lo, inner_hi, hi) = (0.7 * centre, 0.85 * centre, 1.15 * centre, 1.3 * centre);
    let edge = 0.15 * centre;
    for (k, c) in buf.iter_mut().enumerate() {
        let freq = k.min(len - k) as f64 * df;
        let gain = if freq < lo || freq > hi {
            0.0
        } else if freq < inner_lo {
            0.5 - 0.5 * (PI * (freq - lo) / edge).cos()
        } else if freq > inner_hi {
            0.5 - 0.5 * (PI * (hi - freq) / edge).cos()
        } else {
            1.0
        };
        *c *= gain;
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf[..n].iter().map(|c| c.re / len as f64).collect()
}

/// Estimates the half-period amplitude ratio `k0` of the mode at `mode_freq`.
///
/// The mode is isolated with a +-30 % frequency-domain band-pass and one
/// extremum is located per half cycle. Extrema in the first three and last two
/// periods (filter edge effects) and those below 5 % of the largest remaining
/// one are dropped; the median ratio of successive extremum amplitudes, which
/// are half a period apart, is returned clamped to `(0, 1]`.
pub fn estimate_k0(segment: &AccelTrace, mode_freq: f64) -> Result<f64> {
    if !(mode_freq.is_finite() && mode_freq > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mode frequency must be positive, got {mode_freq}"
        )));
    }
    if segment.duration() * mode_freq < 4.0 {
        return Err(Error::InsufficientData(format!(
            "segment covers {:.2} periods of {mode_freq} Hz, need 4",
            segment.duration() * mode_freq
        )));
    }
    let fs = segment.sample_rate;
    let y = band_pass(&segment.samples, fs, mode_freq);
    let peak_abs = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(peak_abs > 0.0) {
        return Err(Error::Estimation("segment carries no energy near the mode".into()));
    }

    // One extremum per half cycle: the largest |y| between sign changes.
    let mut extrema: Vec<(f64, f64)> = Vec::new();
    let mut start = 0;
    for i in 1..=y.len() {
        let boundary = i == y.len() || (y[i] >= 0.0) != (y[i - 1] >= 0.0);
        if !boundary {
            continue;
        }
        if start > 0 && i < y.len() {
            let k = (start..i)
                .max_by(|&a, &b| y[a].abs().total_cmp(&y[b].abs()))
                .unwrap();
            let amp = if k > 0 && k + 1 < y.len() {
                let (a, b, c) = (y[k - 1].abs(), y[k].abs(), y[k + 1].abs());
                let denom = a - 2.0 * b + c;
                if denom < 0.0 {
                    let d = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
                    b - 0.25 * (a - c) * d
                } else {
                    b
                }
            } else {
                y[k].abs()
            };
            if amp > 1e-9 * peak_abs {
                extrema.push((k as f64 / fs, amp));
            }
        }
        start = i;
    }

    let period = 1.0 / mode_freq;
    let duration = segment.duration();
    let inner: Vec<f64> = extrema
        .iter()
        .filter(|(t, _)| *t >= 3.0 * period && *t <= duration - 2.0 * period)
        .map(|&(_, a)| a)
        .collect();
    let largest = inner.iter().copied().fold(0.0, f64::max);
    let kept: Vec<f64> = inner.into_iter().filter(|&a| a >= 0.05 * largest).collect();
    if kept.len() < 4 {
        return Err(Error::Estimation(format!(
            "found {} usable extrema, need at least 4",
            kept.len()
        )));
    }
    let mut ratios: Vec<f64> = kept.windows(2).map(|w| w[1] / w[0]).collect();
    ratios.sort_by(f64::total_cmp);
    let mid = ratios.len() / 2;
    let median = if ratios.len().is_multiple_of(2) {
        0.5 * (ratios[mid - 1] + ratios[mid])
    } else {
        ratios[mid]
    };
    if !(median > 0.0) {
        return Err(Error::Estimation("non-positive amplitude ratio".into()));
    }
    Ok(median.min(1.0))
}
