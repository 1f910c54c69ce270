//! Joint-space maps of mode frequencies.
//!
//! Frequencies measured on an axis-aligned grid of joint angles are queried by
//! multilinear interpolation (bilinear for a two-joint arm). Queries just
//! outside the grid can be answered by continuing the boundary cell linearly.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modal::ModePeak;
use crate::shaper::ShaperParams;

pub const MAP_FORMAT_VERSION: u32 = 1;

/// Extrapolated frequencies never drop below this.
pub const EXTRAPOLATION_FLOOR_HZ: f64 = 0.1;

/// Grid angles closer than this are treated as the same node.
const AXIS_TOLERANCE_DEG: f64 = 1e-9;

/// Joint angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointPose(pub Vec<f64>);

impl JointPose {
    pub fn new(joints: Vec<f64>) -> Self {
        Self(joints)
    }

    pub fn joints(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl From<&[f64]> for JointPose {
    fn from(joints: &[f64]) -> Self {
        Self(joints.to_vec())
    }
}

impl<const N: usize> From<[f64; N]> for JointPose {
    fn from(joints: [f64; N]) -> Self {
        Self(joints.to_vec())
    }
}

impl fmt::Display for JointPose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, q) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{q}")?;
        }
        write!(f, ")")
    }
}

/// Where the `k0` of each shaper comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum K0Policy {
    Fixed(f64),
    /// Per-mode grids aligned with the frequency values, interpolated the same
    /// way.
    Grid(Vec<Vec<f64>>),
}

impl Default for K0Policy {
    fn default() -> Self {
        K0Policy::Fixed(1.0)
    }
}

/// Per-mode natural frequencies (Hz) on a rectangular grid of joint angles
/// (degrees). Values are stored per mode in row-major order, last joint
/// fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMap {
    version: u32,
    joint_axes: Vec<Vec<f64>>,
    modes: usize,
    values: Vec<Vec<f64>>,
    #[serde(default)]
    k0: K0Policy,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

/// Result of a query that may lie outside the measured grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapQuery {
    pub frequency: f64,
    pub extrapolated: bool,
}

impl FrequencyMap {
    pub fn new(
        joint_axes: Vec<Vec<f64>>,
        values: Vec<Vec<f64>>,
        k0: K0Policy,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        let map = Self {
            version: MAP_FORMAT_VERSION,
            modes: values.len(),
            joint_axes,
            values,
            k0,
            metadata,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MAP_FORMAT_VERSION {
            return Err(Error::Input(format!(
                "unsupported map version {}",
                self.version
            )));
        }
        if self.joint_axes.is_empty() {
            return Err(Error::Input("map has no joint axes".into()));
        }
        for (j, axis) in self.joint_axes.iter().enumerate() {
            if axis.len() < 2 {
                return Err(Error::Input(format!("axis {j} needs at least two points")));
            }
            if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Input(format!("axis {j} must be strictly increasing")));
            }
        }
        if self.modes == 0 || self.values.len() != self.modes {
            return Err(Error::Input(format!(
                "map declares {} modes but carries {} grids",
                self.modes,
                self.values.len()
            )));
        }
        let nodes = self.node_count();
        for (m, grid) in self.values.iter().enumerate() {
            if grid.len() != nodes {
                return Err(Error::Input(format!(
                    "mode {m} grid has {} values, expected {nodes}",
                    grid.len()
                )));
            }
            if grid.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
                return Err(Error::Input(format!("mode {m} has non-positive frequencies")));
            }
        }
        for pair in self.values.windows(2) {
            if pair[0].iter().zip(&pair[1]).any(|(lo, hi)| !(hi > lo)) {
                return Err(Error::Input(
                    "mode frequencies must increase with mode index at every node".into(),
                ));
            }
        }
        match &self.k0 {
            K0Policy::Fixed(k) => check_k0(*k)?,
            K0Policy::Grid(grids) => {
                if grids.len() != self.modes || grids.iter().any(|g| g.len() != nodes) {
                    return Err(Error::Input("k0 grid does not match the map shape".into()));
                }
                for k in grids.iter().flatten() {
                    check_k0(*k)?;
                }
            }
        }
        Ok(())
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.joint_axes
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dim(&self) -> usize {
        self.joint_axes.len()
    }

    pub fn values(&self, mode: usize) -> &[f64] {
        &self.values[mode]
    }

    pub fn k0_policy(&self) -> &K0Policy {
        &self.k0
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn set_k0_policy(&mut self, k0: K0Policy) -> Result<()> {
        let old = std::mem::replace(&mut self.k0, k0);
        if let Err(e) = self.validate() {
            self.k0 = old;
            return Err(e);
        }
        Ok(())
    }

    pub fn metadata_mut(&mut self) -> &mut BTreeMap<String, String> {
        &mut self.metadata
    }

    pub fn node_count(&self) -> usize {
        self.joint_axes.iter().map(Vec::len).product()
    }

    /// Row-major flat index of a grid node.
    pub fn flat_index(&self, node: &[usize]) -> usize {
        node.iter()
            .zip(&self.joint_axes)
            .fold(0, |acc, (&i, axis)| acc * axis.len() + i)
    }

    /// All grid nodes in storage order.
    pub fn nodes(&self) -> Vec<JointPose> {
        let mut out = vec![Vec::new()];
        for axis in &self.joint_axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&q| {
                        let mut p = prefix.clone();
                        p.push(q);
                        p
                    })
                })
                .collect();
        }
        out.into_iter().map(JointPose).collect()
    }

    /// Value stored at a grid node.
    pub fn node_value(&self, mode: usize, node: &[usize]) -> f64 {
        self.values[mode][self.flat_index(node)]
    }

    /// Builds a map from one identification result per grid node. Axes are the
    /// distinct angles per joint; modes are ordered by ascending frequency at
    /// every node.
    pub fn build(measurements: &[(JointPose, Vec<ModePeak>)]) -> Result<Self> {
        let Some((first_pose, first_peaks)) = measurements.first() else {
            return Err(Error::Input("no measurements".into()));
        };
        let dim = first_pose.dim();
        let modes = first_peaks.len();
        if dim == 0 || modes == 0 {
            return Err(Error::Input("measurements carry no joints or no modes".into()));
        }
        for (pose, peaks) in measurements {
            if pose.dim() != dim {
                return Err(Error::Input(format!("pose {pose} has the wrong dimension")));
            }
            if peaks.len() != modes {
                return Err(Error::Input(format!(
                    "pose {pose} has {} modes, expected {modes}",
                    peaks.len()
                )));
            }
            if pose.0.iter().any(|q| !q.is_finite()) {
                return Err(Error::Input(format!("pose {pose} is not finite")));
            }
        }

        let axes: Vec<Vec<f64>> = (0..dim)
            .map(|j| {
                let mut axis: Vec<f64> = measurements.iter().map(|(p, _)| p.0[j]).collect();
                axis.sort_by(f64::total_cmp);
                axis.dedup_by(|a, b| (*a - *b).abs() <= AXIS_TOLERANCE_DEG);
                axis
            })
            .collect();

        let nodes: usize = axes.iter().map(Vec::len).product();
        let mut filled: Vec<Option<Vec<f64>>> = vec![None; nodes];
        for (pose, peaks) in measurements {
            let idx = pose
                .0
                .iter()
                .zip(&axes)
                .fold(0, |acc, (&q, axis)| {
                    let i = axis
                        .iter()
                        .position(|&a| (a - q).abs() <= AXIS_TOLERANCE_DEG)
                        .expect("axis built from poses");
                    acc * axis.len() + i
                });
            if filled[idx].is_some() {
                return Err(Error::Input(format!("pose {pose} measured twice")));
            }
            let mut freqs: Vec<f64> = peaks.iter().map(|p| p.frequency).collect();
            freqs.sort_by(f64::total_cmp);
            filled[idx] = Some(freqs);
        }

        let mut scratch = Self {
            version: MAP_FORMAT_VERSION,
            joint_axes: axes,
            modes,
            values: Vec::new(),
            k0: K0Policy::default(),
            metadata: BTreeMap::new(),
        };
        let missing: Vec<JointPose> = scratch
            .nodes()
            .into_iter()
            .zip(&filled)
            .filter(|(_, f)| f.is_none())
            .map(|(p, _)| p)
            .collect();
        if !missing.is_empty() {
            return Err(Error::Grid { missing });
        }
        scratch.values = (0..modes)
            .map(|m| filled.iter().map(|f| f.as_ref().unwrap()[m]).collect())
            .collect();
        scratch.validate()?;
        Ok(scratch)
    }

    fn check_query(&self, pose: &JointPose, mode: usize) -> Result<()> {
        if mode >= self.modes {
            return Err(Error::Input(format!(
                "mode index {mode} out of range (map has {} modes)",
                self.modes
            )));
        }
        if pose.dim() != self.dim() {
            return Err(Error::Input(format!(
                "pose {pose} has {} joints, map has {}",
                pose.dim(),
                self.dim()
            )));
        }
        if pose.0.iter().any(|q| !q.is_finite()) {
            return Err(Error::Input(format!("pose {pose} is not finite")));
        }
        Ok(())
    }

    /// Per-axis (cell index, local weight) for `pose`. Weights outside
    /// `[0, 1]` mean the pose lies beyond the boundary cell.
    fn locate(&self, pose: &JointPose) -> Vec<(usize, f64)> {
        pose.0
            .iter()
            .zip(&self.joint_axes)
            .map(|(&q, axis)| {
                let cells = axis.len() - 1;
                let cell = match axis.iter().rposition(|&a| a <= q) {
                    None => 0,
                    Some(i) => i.min(cells - 1),
                };
                let (lo, hi) = (axis[cell], axis[cell + 1]);
                (cell, (q - lo) / (hi - lo))
            })
            .collect()
    }

    fn is_inside(&self, pose: &JointPose) -> bool {
        pose.0
            .iter()
            .zip(&self.joint_axes)
            .all(|(&q, axis)| q >= axis[0] && q <= axis[axis.len() - 1])
    }

    /// Tensor-product blend of the 2^d corners of the located cell.
    fn blend(&self, grid: &[f64], located: &[(usize, f64)]) -> f64 {
        let d = located.len();
        let mut node = vec![0usize; d];
        let mut total = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            for (j, &(cell, w)) in located.iter().enumerate() {
                let upper = (corner >> (d - 1 - j)) & 1 == 1;
                node[j] = cell + usize::from(upper);
                weight *= if upper { w } else { 1.0 - w };
            }
            total += weight * grid[self.flat_index(&node)];
        }
        total
    }

    /// Multilinear interpolation of mode `mode` at a pose inside the grid.
    pub fn interpolate(&self, pose: &JointPose, mode: usize) -> Result<f64> {
        self.check_query(pose, mode)?;
        if !self.is_inside(pose) {
            return Err(Error::OutOfDomain(format!(
                "pose {pose} lies outside the map {}",
                self.bounds_string()
            )));
        }
        Ok(self.blend(&self.values[mode], &self.locate(pose)))
    }

    /// Like [`interpolate`](Self::interpolate), but poses up to one cell width
    /// outside the grid are answered by linear continuation.
    pub fn extrapolate(&self, pose: &JointPose, mode: usize) -> Result<MapQuery> {
        self.extrapolate_within(pose, mode, 1.0)
    }

    /// Extrapolation with a custom limit, measured in boundary-cell widths.
    pub fn extrapolate_within(
        &self,
        pose: &JointPose,
        mode: usize,
        limit_cells: f64,
    ) -> Result<MapQuery> {
        self.check_query(pose, mode)?;
        let located = self.extrapolation_cells(pose, limit_cells)?;
        let extrapolated = !self.is_inside(pose);
        let mut frequency = self.blend(&self.values[mode], &located);
        if extrapolated {
            frequency = frequency.max(EXTRAPOLATION_FLOOR_HZ);
        }
        Ok(MapQuery {
            frequency,
            extrapolated,
        })
    }

    fn extrapolation_cells(&self, pose: &JointPose, limit_cells: f64) -> Result<Vec<(usize, f64)>> {
        let located = self.locate(pose);
        for (j, &(_, w)) in located.iter().enumerate() {
            if w < -limit_cells - 1e-12 || w > 1.0 + limit_cells + 1e-12 {
                return Err(Error::OutOfDomain(format!(
                    "pose {pose} is more than {limit_cells} cell widths outside axis {j} of {}",
                    self.bounds_string()
                )));
            }
        }
        Ok(located)
    }

    /// Shaper parameters for `mode` at `pose`: the delay is half the
    /// interpolated period and `k0` comes from `k0_policy`.
    pub fn shaper_params_at(
        &self,
        pose: &JointPose,
        mode: usize,
        k0_policy: &K0Policy,
        allow_extrapolation: bool,
    ) -> Result<ShaperParams> {
        let frequency = if allow_extrapolation {
            self.extrapolate(pose, mode)?.frequency
        } else {
            self.interpolate(pose, mode)?
        };
        let k0 = match k0_policy {
            K0Policy::Fixed(k) => *k,
            K0Policy::Grid(grids) => {
                if grids.len() != self.modes || grids[mode].len() != self.node_count() {
                    return Err(Error::Input("k0 grid does not match the map shape".into()));
                }
                let located = if allow_extrapolation {
                    self.extrapolation_cells(pose, 1.0)?
                } else {
                    self.locate(pose)
                };
                self.blend(&grids[mode], &located).clamp(f64::MIN_POSITIVE, 1.0)
            }
        };
        ShaperParams::from_frequency(frequency, k0)
    }

    fn bounds_string(&self) -> String {
        let parts: Vec<String> = self
            .joint_axes
            .iter()
            .map(|a| format!("[{}, {}]", a[0], a[a.len() - 1]))
            .collect();
        parts.join(" x ")
    }

    /// Pretty JSON document, newline-terminated.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: Self = serde_json::from_str(text)?;
        map.validate()?;
        Ok(map)
    }
}

fn check_k0(k: f64) -> Result<()> {
    if k > 0.0 && k <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("k0 must lie in (0, 1], got {k}")))
    }
}
