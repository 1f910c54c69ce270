//! End-to-end tuning and verification: measurement campaign, map building,
//! trajectory shaping, reduction reports and shaper Bode data.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq_map::{FrequencyMap, JointPose, K0Policy};
use crate::io;
use crate::modal::{self, AccelTrace, IdentOptions, ModePeak};
use crate::shaper::{ImpulseSequence, ShaperParams};
use crate::sim::{self, SimConfig, StepTiming};
use crate::trajectory::Trajectory;

/// Where campaign traces come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignSource {
    Simulator(SimConfig),
    /// One trace CSV per grid pose, named by [`trace_file_name`].
    Directory(PathBuf),
}

/// How the map's `k0` values are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum K0Source {
    Fixed(f64),
    /// Estimate per node and mode from the residual decay; nodes where the
    /// estimate fails fall back to 1.
    Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    /// Grid angles per joint, degrees.
    pub axes: Vec<Vec<f64>>,
    pub step_from: JointPose,
    pub source: CampaignSource,
    pub ident: IdentOptions,
    pub k0: K0Source,
    #[serde(default)]
    pub timing: StepTiming,
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.iter().any(Vec::is_empty) {
            return Err(Error::Input("campaign grid is empty".into()));
        }
        if self.step_from.dim() != self.axes.len() {
            return Err(Error::Input(format!(
                "start pose {} does not match the {}-joint grid",
                self.step_from,
                self.axes.len()
            )));
        }
        if let CampaignSource::Directory(dir) = &self.source {
            if !dir.is_dir() {
                return Err(Error::Input(format!(
                    "trace directory {} does not exist",
                    dir.display()
                )));
            }
        }
        if let K0Source::Fixed(k) = self.k0 {
            ShaperParams::new(1.0, k)?;
        }
        Ok(())
    }

    /// Cartesian product of the axes, last joint fastest.
    pub fn grid(&self) -> Vec<JointPose> {
        grid_poses(&self.axes)
    }
}

pub fn grid_poses(axes: &[Vec<f64>]) -> Vec<JointPose> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<f64>| {
                axis.iter().map(move |&q| {
                    let mut p = prefix.clone();
                    p.push(q);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(JointPose::new).collect()
}

/// File name of the recorded trace for `pose`, e.g. `pose_45_60.csv`.
pub fn trace_file_name(pose: &JointPose) -> String {
    let parts: Vec<String> = pose.joints().iter().map(|q| q.to_string()).collect();
    format!("pose_{}.csv", parts.join("_"))
}

/// Collects one acceleration trace per grid pose.
pub fn campaign_traces(spec: &CampaignSpec) -> Result<Vec<(JointPose, AccelTrace)>> {
    spec.validate()?;
    let grid = spec.grid();
    match &spec.source {
        CampaignSource::Simulator(cfg) => {
            sim::synth_campaign_with(cfg, &grid, &spec.step_from, spec.timing)
        }
        CampaignSource::Directory(dir) => {
            let missing: Vec<JointPose> = grid
                .iter()
                .filter(|p| !dir.join(trace_file_name(p)).is_file())
                .cloned()
                .collect();
            if !missing.is_empty() {
                return Err(Error::Grid { missing });
            }
            grid.into_iter()
                .map(|pose| {
                    let path = dir.join(trace_file_name(&pose));
                    let trace = read_text(&path)
                        .and_then(|t| io::parse_trace_csv(&t, None))
                        .map_err(|e| Error::AtPose {
                            pose: pose.clone(),
                            source: Box::new(e),
                        })?;
                    Ok((pose, trace))
                })
                .collect()
        }
    }
}

/// Identifies the modes of every campaign trace.
pub fn identify_campaign(
    traces: &[(JointPose, AccelTrace)],
    opts: &IdentOptions,
) -> Result<Vec<(JointPose, Vec<ModePeak>)>> {
    traces
        .iter()
        .map(|(pose, trace)| {
            modal::identify(trace, opts)
                .map(|(peaks, _)| (pose.clone(), peaks))
                .map_err(|e| Error::AtPose {
                    pose: pose.clone(),
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Runs the campaign, identifies every node and assembles the map.
pub fn build_map(spec: &CampaignSpec) -> Result<FrequencyMap> {
    let traces = campaign_traces(spec)?;
    let measurements = identify_campaign(&traces, &spec.ident)?;
    let mut map = FrequencyMap::build(&measurements)?;

    let k0 = match spec.k0 {
        K0Source::Fixed(k) => K0Policy::Fixed(k),
        K0Source::Estimate => {
            let mut grids = vec![vec![1.0; map.node_count()]; map.modes()];
            for (pose, trace) in &traces {
                let node = node_of(&map, pose);
                let segment = modal::residual_segment(trace, spec.ident.min_residual_s)?;
                for (mode, grid) in grids.iter_mut().enumerate() {
                    let f = map.values(mode)[node];
                    grid[node] = modal::estimate_k0(&segment, f).unwrap_or(1.0);
                }
            }
            K0Policy::Grid(grids)
        }
    };
    map.set_k0_policy(k0)?;

    let meta = map.metadata_mut();
    let source = match &spec.source {
        CampaignSource::Simulator(cfg) => format!("simulator (seed {})", cfg.seed),
        CampaignSource::Directory(dir) => format!("traces from {}", dir.display()),
    };
    meta.insert("source".into(), source);
    meta.insert("step_from_deg".into(), spec.step_from.to_string());
    meta.insert(
        "k0_policy".into(),
        match spec.k0 {
            K0Source::Fixed(k) => format!("fixed {k}"),
            K0Source::Estimate => "estimated per node".into(),
        },
    );
    meta.insert(
        "identification".into(),
        format!(
            "hann window, zero pad x{}, max {} modes, prominence {}, cutoff {} Hz",
            spec.ident.zero_pad_factor,
            spec.ident.max_modes,
            spec.ident.min_prominence_ratio,
            spec.ident.low_cutoff_hz
        ),
    );
    Ok(map)
}

fn node_of(map: &FrequencyMap, pose: &JointPose) -> usize {
    let idx: Vec<usize> = pose
        .joints()
        .iter()
        .zip(map.axes())
        .map(|(&q, axis)| {
            axis.iter()
                .position(|&a| (a - q).abs() <= 1e-9)
                .expect("campaign pose lies on the map grid")
        })
        .collect();
    map.flat_index(&idx)
}

/// Cascade of one ZV shaper per requested mode (zero-based), tuned from the
/// map at `pose`, chained in ascending frequency.
pub fn shaper_for_pose(
    map: &FrequencyMap,
    pose: &JointPose,
    modes: &[usize],
    allow_extrapolation: bool,
) -> Result<ImpulseSequence> {
    let mut modes = modes.to_vec();
    modes.sort_unstable();
    modes.dedup();
    let mut params: Vec<ShaperParams> = modes
        .iter()
        .map(|&m| map.shaper_params_at(pose, m, map.k0_policy(), allow_extrapolation))
        .collect::<Result<_>>()?;
    params.sort_by(|a, b| b.t0.total_cmp(&a.t0));
    let shapers = params
        .into_iter()
        .map(ImpulseSequence::zv)
        .collect::<Result<Vec<_>>>()?;
    Ok(ImpulseSequence::cascade_all(&shapers))
}

/// Shapes `traj` for motion ending at `pose` (defaults to the trajectory's
/// final sample). Returns the shaped trajectory and the added delay.
pub fn shape_trajectory(
    map: &FrequencyMap,
    traj: &Trajectory,
    pose: Option<&JointPose>,
    modes: &[usize],
    allow_extrapolation: bool,
) -> Result<(Trajectory, f64)> {
    let end = JointPose::new(traj.final_values());
    let pose = pose.unwrap_or(&end);
    let seq = shaper_for_pose(map, pose, modes, allow_extrapolation)?;
    Ok((seq.apply(traj)?, seq.total_delay()))
}

/// One row of a reduction report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub pose: JointPose,
    /// Peak-to-peak residual without shaping, mm.
    pub amplitude_without: f64,
    pub amplitude_with: f64,
    /// Percent.
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub step_from: JointPose,
    pub timing: StepTiming,
    pub settle_guard: f64,
    /// Zero-based modes to suppress; empty means all map modes.
    pub modes: Vec<usize>,
    pub allow_extrapolation: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            step_from: JointPose::from([0.0, 0.0]),
            timing: StepTiming::default(),
            settle_guard: 0.0,
            modes: Vec::new(),
            allow_extrapolation: false,
        }
    }
}

/// Simulates an unshaped and a map-shaped step to every position and
/// reports the residual reduction.
pub fn verify(
    config: &SimConfig,
    map: &FrequencyMap,
    positions: &[(String, JointPose)],
    opts: &VerifyOptions,
) -> Result<Vec<ReportRow>> {
    let modes: Vec<usize> = if opts.modes.is_empty() {
        (0..map.modes()).collect()
    } else {
        opts.modes.clone()
    };
    positions
        .iter()
        .map(|(label, pose)| {
            let at_pose = |e: Error| Error::AtPose {
                pose: pose.clone(),
                source: Box::new(e),
            };
            let cmd = opts
                .timing
                .command(&opts.step_from, pose, config.sample_rate)
                .map_err(at_pose)?;
            let seq = shaper_for_pose(map, pose, &modes, opts.allow_extrapolation)
                .map_err(at_pose)?;
            let unshaped = sim::simulate(config, &cmd).map_err(at_pose)?;
            let shaped = sim::simulate(config, &seq.apply(&cmd)?).map_err(at_pose)?;
            let r = sim::reduction_report(&unshaped, &shaped, opts.settle_guard).map_err(at_pose)?;
            Ok(ReportRow {
                label: label.clone(),
                pose: pose.clone(),
                amplitude_without: r.amp_without,
                amplitude_with: r.amp_with,
                reduction: r.reduction,
            })
        })
        .collect()
}

/// Fixed-width text rendering of a report.
pub fn format_report(rows: &[ReportRow]) -> String {
    let mut out = format!(
        "{:<10} {:>16} {:>16} {:>16} {:>10}\n",
        "position", "pose_deg", "without_mm", "with_mm", "reduction"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:>16} {:>16.3} {:>16.3} {:>9.1}%\n",
            r.label,
            r.pose.to_string(),
            r.amplitude_without,
            r.amplitude_with,
            r.reduction
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodePoint {
    pub frequency: f64,
    pub magnitude_db: f64,
    pub phase_deg: f64,
}

/// Magnitudes are floored at this before conversion to decibels.
pub const BODE_FLOOR_DB: f64 = -400.0;

/// Frequency response of `seq` on `n_points` frequencies spanning
/// `[f_min, f_max]`, linearly or logarithmically spaced.
pub fn bode(
    seq: &ImpulseSequence,
    f_min: f64,
    f_max: f64,
    n_points: usize,
    log_spacing: bool,
) -> Result<Vec<BodePoint>> {
    if !(f_min >= 0.0 && f_max > f_min && f_max.is_finite()) || n_points < 2 {
        return Err(Error::InvalidParameter(format!(
            "bad frequency range [{f_min}, {f_max}] with {n_points} points"
        )));
    }
    if log_spacing && f_min <= 0.0 {
        return Err(Error::InvalidParameter(
            "logarithmic spacing needs f_min > 0".into(),
        ));
    }
    let last = (n_points - 1) as f64;
    Ok((0..n_points)
        .map(|i| {
            let s = i as f64 / last;
            let frequency = if log_spacing {
                f_min * (f_max / f_min).powf(s)
            } else {
                f_min + (f_max - f_min) * s
            };
            let (mag, phase) = seq.frequency_response(frequency);
            let db = if mag > 0.0 {
                (20.0 * mag.log10()).max(BODE_FLOOR_DB)
            } else {
                BODE_FLOOR_DB
            };
            BodePoint {
                frequency,
                magnitude_db: db,
                phase_deg: phase.to_degrees(),
            }
        })
        .collect())
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Writes every campaign trace into `dir` using [`trace_file_name`].
pub fn export_traces(dir: &Path, traces: &[(JointPose, AccelTrace)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (pose, trace) in traces {
        write_text(&dir.join(trace_file_name(pose)), &io::write_trace_csv(trace))?;
    }
    Ok(())
}

/// Summary table of node frequencies, one line per node.
pub fn format_map_summary(map: &FrequencyMap) -> String {
    let mut out = String::from("pose_deg");
    for m in 0..map.modes() {
        out.push_str(&format!(",mode{}_hz", m + 1));
    }
    out.push('\n');
    for (i, pose) in map.nodes().iter().enumerate() {
        out.push_str(&pose.to_string().replace(", ", " "));
        for m in 0..map.modes() {
            out.push_str(&format!(",{:.4}", map.values(m)[i]));
        }
        out.push('\n');
    }
    out
}

/// Parses a labelled position written as `A=45,45`.
pub fn parse_position(text: &str) -> Result<(String, JointPose)> {
    let (label, pose) = text
        .split_once('=')
        .ok_or_else(|| Error::Input(format!("position {text:?} must look like LABEL=q1,q2")))?;
    Ok((label.trim().to_string(), parse_pose(pose)?))
}

pub fn parse_pose(text: &str) -> Result<JointPose> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("bad joint angle {s:?} in {text:?}")))
        })
        .collect::<Result<Vec<_>>>()
        .map(JointPose::new)
}

/// Empty metadata map, for callers building maps by hand.
pub fn no_metadata() -> BTreeMap<String, String> {
    BTreeMap::new()
}
