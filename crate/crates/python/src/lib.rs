//! Python bindings for `shapemap`.
//!
//! Samples travel as plain lists. Multi-joint signals are lists of channels
//! (`[[joint1...], [joint2...]]`). Mode indices are zero-based.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use shapemap::modal::{self, AccelTrace, IdentOptions};
use shapemap::pipeline::{self, CampaignSource, CampaignSpec, K0Source, VerifyOptions};
use shapemap::shaper::{self, Impulse, ImpulseSequence, ShaperParams};
use shapemap::sim::{self, SimConfig, SimResult, StepTiming};
use shapemap::{JointPose, Trajectory};

create_exception!(shapemap, ShapemapError, PyException);
create_exception!(shapemap, NoModesFoundError, ShapemapError);

fn err(e: shapemap::Error) -> PyErr {
    if e.is_no_result() {
        NoModesFoundError::new_err(e.to_string())
    } else {
        ShapemapError::new_err(e.to_string())
    }
}

fn pose(joints: Vec<f64>) -> JointPose {
    JointPose::new(joints)
}

/// Impulse sequence: a ZV shaper or a cascade of them.
#[pyclass(name = "Shaper", module = "shapemap", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyShaper {
    inner: ImpulseSequence,
}

#[pymethods]
impl PyShaper {
    /// ZV shaper with second impulse at `t0` seconds.
    #[staticmethod]
    #[pyo3(signature = (t0, k0 = 1.0))]
    fn zv(t0: f64, k0: f64) -> PyResult<Self> {
        let params = ShaperParams::new(t0, k0).map_err(err)?;
        Ok(Self {
            inner: ImpulseSequence::zv(params).map_err(err)?,
        })
    }

    /// ZV shaper whose first notch sits at `frequency` Hz.
    #[staticmethod]
    #[pyo3(signature = (frequency, k0 = 1.0))]
    fn from_frequency(frequency: f64, k0: f64) -> PyResult<Self> {
        let params = ShaperParams::from_frequency(frequency, k0).map_err(err)?;
        Ok(Self {
            inner: ImpulseSequence::zv(params).map_err(err)?,
        })
    }

    #[staticmethod]
    fn identity() -> Self {
        Self {
            inner: ImpulseSequence::identity(),
        }
    }

    /// From `(amplitude, time)` pairs.
    #[staticmethod]
    fn from_impulses(impulses: Vec<(f64, f64)>) -> PyResult<Self> {
        let impulses = impulses
            .into_iter()
            .map(|(amplitude, time)| Impulse { amplitude, time })
            .collect();
        Ok(Self {
            inner: ImpulseSequence::new(impulses).map_err(err)?,
        })
    }

    fn cascade(&self, other: PyRef<'_, PyShaper>) -> Self {
        Self {
            inner: self.inner.cascade(&other.inner),
        }
    }

    /// `(amplitude, time)` pairs.
    #[getter]
    fn impulses(&self) -> Vec<(f64, f64)> {
        self.inner
            .impulses()
            .iter()
            .map(|p| (p.amplitude, p.time))
            .collect()
    }

    #[getter]
    fn total_delay(&self) -> f64 {
        self.inner.total_delay()
    }

    /// `(magnitude, phase_rad)` at `frequency` Hz.
    fn frequency_response(&self, frequency: f64) -> (f64, f64) {
        self.inner.frequency_response(frequency)
    }

    /// Shapes sampled joint channels; the result is longer by the total delay.
    #[pyo3(signature = (channels, sample_rate, start_time = 0.0))]
    fn apply(&self, channels: Vec<Vec<f64>>, sample_rate: f64, start_time: f64) -> PyResult<Vec<Vec<f64>>> {
        let traj = Trajectory::new(sample_rate, start_time, channels).map_err(err)?;
        Ok(self.inner.apply(&traj).map_err(err)?.channels().to_vec())
    }

    /// `(frequency_hz, magnitude_db, phase_deg)` rows.
    #[pyo3(signature = (f_min = 0.1, f_max = 10.0, n_points = 1000, log = false))]
    fn bode(&self, f_min: f64, f_max: f64, n_points: usize, log: bool) -> PyResult<Vec<(f64, f64, f64)>> {
        let points = pipeline::bode(&self.inner, f_min, f_max, n_points, log).map_err(err)?;
        Ok(points
            .iter()
            .map(|p| (p.frequency, p.magnitude_db, p.phase_deg))
            .collect())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Shaper({} impulses, delay {:.6} s)",
            self.inner.len(),
            self.inner.total_delay()
        )
    }
}

/// Mode frequencies on a rectangular joint grid.
#[pyclass(name = "FrequencyMap", module = "shapemap", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFrequencyMap {
    inner: shapemap::FrequencyMap,
}

#[pymethods]
impl PyFrequencyMap {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: shapemap::FrequencyMap::from_json(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Self::from_json(&pipeline::read_text(&path).map_err(err)?)
    }

    /// Runs a simulated step campaign over the grid and identifies every node.
    /// With `traces`, reads `pose_<q1>_<q2>.csv` files from that directory
    /// instead of simulating.
    #[staticmethod]
    #[pyo3(signature = (
        axes = None,
        step_from = None,
        plant = None,
        traces = None,
        k0 = 1.0,
        estimate_k0 = false,
    ))]
    fn build(
        axes: Option<Vec<Vec<f64>>>,
        step_from: Option<Vec<f64>>,
        plant: Option<PyRef<'_, PyPlant>>,
        traces: Option<PathBuf>,
        k0: f64,
        estimate_k0: bool,
    ) -> PyResult<Self> {
        let source = match traces {
            Some(dir) => CampaignSource::Directory(dir),
            None => CampaignSource::Simulator(
                plant.map_or_else(SimConfig::reference_plant, |p| p.inner.clone()),
            ),
        };
        let spec = CampaignSpec {
            axes: axes.unwrap_or_else(|| vec![vec![0.0, 30.0, 60.0, 90.0]; 2]),
            step_from: pose(step_from.unwrap_or_else(|| vec![-30.0, -30.0])),
            source,
            ident: IdentOptions::default(),
            k0: if estimate_k0 {
                K0Source::Estimate
            } else {
                K0Source::Fixed(k0)
            },
            timing: StepTiming::default(),
        };
        Ok(Self {
            inner: pipeline::build_map(&spec).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        pipeline::write_text(&path, &self.to_json()?).map_err(err)
    }

    #[getter]
    fn axes(&self) -> Vec<Vec<f64>> {
        self.inner.axes().to_vec()
    }

    #[getter]
    fn modes(&self) -> usize {
        self.inner.modes()
    }

    #[getter]
    fn metadata(&self) -> BTreeMap<String, String> {
        self.inner.metadata().clone()
    }

    /// Node values of `mode`, row-major with the last joint fastest.
    fn values(&self, mode: usize) -> PyResult<Vec<f64>> {
        if mode >= self.inner.modes() {
            return Err(ShapemapError::new_err(format!("no mode {mode}")));
        }
        Ok(self.inner.values(mode).to_vec())
    }

    fn interpolate(&self, pose_deg: Vec<f64>, mode: usize) -> PyResult<f64> {
        self.inner.interpolate(&pose(pose_deg), mode).map_err(err)
    }

    /// `(frequency, extrapolated)`.
    fn extrapolate(&self, pose_deg: Vec<f64>, mode: usize) -> PyResult<(f64, bool)> {
        let q = self.inner.extrapolate(&pose(pose_deg), mode).map_err(err)?;
        Ok((q.frequency, q.extrapolated))
    }

    /// Cascade of ZV shapers for `modes` (all when omitted) at `pose_deg`.
    #[pyo3(signature = (pose_deg, modes = None, extrapolate = false))]
    fn shaper(&self, pose_deg: Vec<f64>, modes: Option<Vec<usize>>, extrapolate: bool) -> PyResult<PyShaper> {
        let modes = modes.unwrap_or_else(|| (0..self.inner.modes()).collect());
        let inner =
            pipeline::shaper_for_pose(&self.inner, &pose(pose_deg), &modes, extrapolate).map_err(err)?;
        Ok(PyShaper { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "FrequencyMap({} nodes, {} modes)",
            self.inner.node_count(),
            self.inner.modes()
        )
    }
}

/// One simulated motion.
#[pyclass(name = "SimResult", module = "shapemap", frozen, skip_from_py_object)]
struct PySimResult {
    inner: SimResult,
}

#[pymethods]
impl PySimResult {
    #[getter]
    fn tip_displacement(&self) -> Vec<f64> {
        self.inner.tip_displacement.channel(0).to_vec()
    }

    #[getter]
    fn tip_acceleration(&self) -> Vec<f64> {
        self.inner.tip_acceleration.samples.clone()
    }

    #[getter]
    fn sample_rate(&self) -> f64 {
        self.inner.tip_displacement.sample_rate()
    }

    #[getter]
    fn command_end_time(&self) -> f64 {
        self.inner.command_end_time
    }

    #[getter]
    fn mode_frequencies(&self) -> Vec<f64> {
        self.inner.mode_frequencies.clone()
    }

    /// Peak-to-peak tip displacement after the command ends.
    #[pyo3(signature = (settle_guard = 0.0))]
    fn residual_amplitude(&self, settle_guard: f64) -> PyResult<f64> {
        sim::residual_amplitude(&self.inner, settle_guard).map_err(err)
    }
}

/// `(label, pose, amplitude_without, amplitude_with, reduction_pct)`.
type ReportTuple = (String, Vec<f64>, f64, f64, f64);

/// Simulated flexible arm.
#[pyclass(name = "Plant", module = "shapemap", skip_from_py_object)]
#[derive(Clone)]
struct PyPlant {
    inner: SimConfig,
}

#[pymethods]
impl PyPlant {
    /// Two-mode plant with pose-dependent frequencies.
    #[staticmethod]
    fn reference() -> Self {
        Self {
            inner: SimConfig::reference_plant(),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (frequency, zeta, gain, sample_rate = 100.0))]
    fn single_mode(frequency: f64, zeta: f64, gain: f64, sample_rate: f64) -> PyResult<Self> {
        let inner = SimConfig::single_mode(frequency, zeta, gain, sample_rate);
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: shapemap::io::parse_sim_config(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        shapemap::io::write_sim_config(&self.inner).map_err(err)
    }

    #[getter]
    fn sample_rate(&self) -> f64 {
        self.inner.sample_rate
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn noise_std(&self) -> f64 {
        self.inner.noise_std
    }

    #[setter]
    fn set_noise_std(&mut self, noise_std: f64) {
        self.inner.noise_std = noise_std;
    }

    fn frequencies_at(&self, pose_deg: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.frequencies_at(&pose(pose_deg)).map_err(err)
    }

    /// Runs joint command channels sampled at the plant rate.
    #[pyo3(signature = (channels, start_time = 0.0))]
    fn simulate(&self, channels: Vec<Vec<f64>>, start_time: f64) -> PyResult<PySimResult> {
        let cmd = Trajectory::new(self.inner.sample_rate, start_time, channels).map_err(err)?;
        Ok(PySimResult {
            inner: sim::simulate(&self.inner, &cmd).map_err(err)?,
        })
    }

    /// Step from `start` to `end` after `lead` seconds, optionally shaped.
    #[pyo3(signature = (start, end, shaper = None, lead = 1.0, record = 20.0))]
    fn step(
        &self,
        start: Vec<f64>,
        end: Vec<f64>,
        shaper: Option<PyRef<'_, PyShaper>>,
        lead: f64,
        record: f64,
    ) -> PyResult<PySimResult> {
        let mut cmd = StepTiming { lead, record }
            .command(&pose(start), &pose(end), self.inner.sample_rate)
            .map_err(err)?;
        if let Some(s) = shaper {
            cmd = s.inner.apply(&cmd).map_err(err)?;
        }
        Ok(PySimResult {
            inner: sim::simulate(&self.inner, &cmd).map_err(err)?,
        })
    }

    /// Unshaped vs map-shaped steps to labelled positions. Each row is
    /// `(label, pose, amplitude_without, amplitude_with, reduction_pct)`.
    #[pyo3(signature = (map, positions, step_from = None, settle_guard = 0.0, extrapolate = false))]
    fn verify(
        &self,
        map: PyRef<'_, PyFrequencyMap>,
        positions: Vec<(String, Vec<f64>)>,
        step_from: Option<Vec<f64>>,
        settle_guard: f64,
        extrapolate: bool,
    ) -> PyResult<Vec<ReportTuple>> {
        let positions: Vec<(String, JointPose)> =
            positions.into_iter().map(|(l, p)| (l, pose(p))).collect();
        let opts = VerifyOptions {
            step_from: pose(step_from.unwrap_or_else(|| vec![0.0, 0.0])),
            settle_guard,
            allow_extrapolation: extrapolate,
            ..VerifyOptions::default()
        };
        let rows = pipeline::verify(&self.inner, &map.inner, &positions, &opts).map_err(err)?;
        Ok(rows
            .into_iter()
            .map(|r| (r.label, r.pose.0, r.amplitude_without, r.amplitude_with, r.reduction))
            .collect())
    }
}

/// Modes of the residual vibration after `motion_end_time`, as
/// `(frequency_hz, magnitude)` in ascending frequency.
#[pyfunction]
#[pyo3(signature = (
    samples,
    sample_rate,
    motion_end_time,
    start_time = 0.0,
    max_modes = 2,
    prominence = 0.2,
    zero_pad = 4,
    low_cutoff = 0.5,
    min_residual = 2.0,
))]
#[allow(clippy::too_many_arguments)]
fn identify(
    samples: Vec<f64>,
    sample_rate: f64,
    motion_end_time: f64,
    start_time: f64,
    max_modes: usize,
    prominence: f64,
    zero_pad: usize,
    low_cutoff: f64,
    min_residual: f64,
) -> PyResult<Vec<(f64, f64)>> {
    let trace = AccelTrace::new(sample_rate, start_time, samples, motion_end_time).map_err(err)?;
    let opts = IdentOptions {
        zero_pad_factor: zero_pad,
        max_modes,
        min_prominence_ratio: prominence,
        low_cutoff_hz: low_cutoff,
        min_residual_s: min_residual,
    };
    let (peaks, _) = modal::identify(&trace, &opts).map_err(err)?;
    Ok(peaks.iter().map(|p| (p.frequency, p.magnitude)).collect())
}

/// Per-period decay ratio of the mode near `frequency` in a free-vibration
/// record.
#[pyfunction]
fn estimate_k0(samples: Vec<f64>, sample_rate: f64, frequency: f64) -> PyResult<f64> {
    let segment = AccelTrace::new(sample_rate, 0.0, samples, 0.0).map_err(err)?;
    modal::estimate_k0(&segment, frequency).map_err(err)
}

#[pyfunction]
fn k0_from_damping_ratio(zeta: f64) -> PyResult<f64> {
    shaper::k0_from_damping_ratio(zeta).map_err(err)
}

#[pymodule]
#[pyo3(name = "shapemap")]
fn shapemap_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyShaper>()?;
    m.add_class::<PyFrequencyMap>()?;
    m.add_class::<PyPlant>()?;
    m.add_class::<PySimResult>()?;
    m.add_function(wrap_pyfunction!(identify, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_k0, m)?)?;
    m.add_function(wrap_pyfunction!(k0_from_damping_ratio, m)?)?;
    m.add("ShapemapError", m.py().get_type::<ShapemapError>())?;
    m.add("NoModesFoundError", m.py().get_type::<NoModesFoundError>())?;
    Ok(())
}
