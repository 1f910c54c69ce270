//! Text file formats.
//!
//! * Trace CSV: optional `# motion_end_s=<v>` comment, header `time_s,accel`.
//! * Trajectory CSV: header `time_s,joint1_deg,joint2_deg,...`.
//! * Map files: JSON, see [`FrequencyMap::to_json`].
//!
//! Times must be uniformly spaced. Numbers are written in the shortest decimal
//! form that reads back to the same `f64`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::freq_map::FrequencyMap;
use crate::modal::{AccelTrace, FrequencySpectrum, ModePeak};
use crate::pipeline::{BodePoint, ReportRow};
use crate::sim::{SimConfig, SimResult};
use crate::trajectory::Trajectory;

const MOTION_END_KEY: &str = "motion_end_s=";

/// Relative tolerance on sample spacing.
const SPACING_TOLERANCE: f64 = 1e-6;

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
    comments: Vec<String>,
}

fn parse_table(text: &str) -> Result<Table> {
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    let mut comments = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match &header {
            None => header = Some(fields.iter().map(|s| s.to_string()).collect()),
            Some(h) => {
                if fields.len() != h.len() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected {} fields, found {}", h.len(), fields.len()),
                    });
                }
                let row = fields
                    .iter()
                    .map(|f| {
                        f.parse::<f64>().map_err(|_| Error::Parse {
                            line: line_no,
                            message: format!("not a number: {f:?}"),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "non-finite value".into(),
                    });
                }
                rows.push(row);
            }
        }
    }
    let header = header.ok_or(Error::Parse {
        line: 0,
        message: "missing header".into(),
    })?;
    Ok(Table {
        header,
        rows,
        comments,
    })
}

/// Recovers `(start_time, sample_rate)` from a uniformly spaced time column.
fn uniform_timing(times: &[f64]) -> Result<(f64, f64)> {
    if times.len() < 2 {
        return Err(Error::Parse {
            line: 0,
            message: "need at least two samples".into(),
        });
    }
    let n = times.len();
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::Parse {
            line: 0,
            message: "time column must increase".into(),
        });
    }
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > SPACING_TOLERANCE * dt.max(1e-3) {
            return Err(Error::Parse {
                // header is line 1, first data row line 2
                line: i + 3,
                message: format!("non-uniform time step {} (expected {dt})", w[1] - w[0]),
            });
        }
    }
    let mut rate = 1.0 / dt;
    let rounded = rate.round();
    if (rate - rounded).abs() < SPACING_TOLERANCE * rate {
        rate = rounded;
    }
    Ok((times[0], rate))
}

fn expect_header(table: &Table, expected_first: &str) -> Result<()> {
    if table.header.first().map(String::as_str) != Some(expected_first) {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must start with {expected_first:?}"),
        });
    }
    Ok(())
}

pub fn parse_trace_csv(text: &str, motion_end: Option<f64>) -> Result<AccelTrace> {
    let table = parse_table(text)?;
    if table.header != ["time_s", "accel"] {
        return Err(Error::Parse {
            line: 1,
            message: "trace header must be `time_s,accel`".into(),
        });
    }
    let from_comment = table
        .comments
        .iter()
        .find_map(|c| c.strip_prefix(MOTION_END_KEY))
        .map(|v| {
            v.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: 0,
                message: format!("bad motion end value {v:?}"),
            })
        })
        .transpose()?;
    let motion_end = motion_end.or(from_comment).ok_or_else(|| {
        Error::Input("motion end not given (use --motion-end or a `# motion_end_s=` line)".into())
    })?;
    let times: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
    let (start, rate) = uniform_timing(&times)?;
    AccelTrace::new(
        rate,
        start,
        table.rows.iter().map(|r| r[1]).collect(),
        motion_end,
    )
}

pub fn write_trace_csv(trace: &AccelTrace) -> String {
    let mut out = format!("# {MOTION_END_KEY}{}\ntime_s,accel\n", trace.motion_end_time);
    for (i, a) in trace.samples.iter().enumerate() {
        let _ = writeln!(out, "{},{}", trace.time(i), a);
    }
    out
}

pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory> {
    let table = parse_table(text)?;
    expect_header(&table, "time_s")?;
    let joints = table.header.len() - 1;
    if joints == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "trajectory has no joint columns".into(),
        });
    }
    let times: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
    let (start, rate) = uniform_timing(&times)?;
    let channels = (1..=joints)
        .map(|j| table.rows.iter().map(|r| r[j]).collect())
        .collect();
    Trajectory::new(rate, start, channels)
}

pub fn write_trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("time_s");
    for j in 1..=traj.num_channels() {
        let _ = write!(out, ",joint{j}_deg");
    }
    out.push('\n');
    for i in 0..traj.len() {
        let _ = write!(out, "{}", traj.time(i));
        for c in traj.channels() {
            let _ = write!(out, ",{}", c[i]);
        }
        out.push('\n');
    }
    out
}

pub fn write_spectrum_csv(spec: &FrequencySpectrum) -> String {
    let mut out = String::from("frequency_hz,magnitude\n");
    for (f, m) in spec.frequencies.iter().zip(&spec.magnitudes) {
        let _ = writeln!(out, "{f},{m}");
    }
    out
}

pub fn write_peaks_csv(peaks: &[ModePeak]) -> String {
    let mut out = String::from("mode,frequency_hz,magnitude\n");
    for p in peaks {
        let _ = writeln!(out, "{},{},{}", p.mode_index + 1, p.frequency, p.magnitude);
    }
    out
}

pub fn write_report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(
        "position,joint1_deg,joint2_deg,amplitude_without_mm,amplitude_with_mm,reduction_pct\n",
    );
    for r in rows {
        let joint = |j: usize| r.pose.joints().get(j).map_or(String::new(), |q| q.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.label,
            joint(0),
            joint(1),
            r.amplitude_without,
            r.amplitude_with,
            r.reduction
        );
    }
    out
}

pub fn write_bode_csv(points: &[BodePoint]) -> String {
    let mut out = String::from("frequency_hz,magnitude_db,phase_deg\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.frequency, p.magnitude_db, p.phase_deg);
    }
    out
}

pub fn write_sim_csv(result: &SimResult) -> String {
    let disp = &result.tip_displacement;
    let mut out = format!(
        "# command_end_s={}\ntime_s,tip_mm,accel\n",
        result.command_end_time
    );
    for i in 0..disp.len() {
        let _ = writeln!(
            out,
            "{},{},{}",
            disp.time(i),
            disp.channel(0)[i],
            result.tip_acceleration.samples[i]
        );
    }
    out
}

pub fn parse_map(text: &str) -> Result<FrequencyMap> {
    FrequencyMap::from_json(text)
}

pub fn parse_sim_config(text: &str) -> Result<SimConfig> {
    let cfg: SimConfig = serde_json::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_sim_config(cfg: &SimConfig) -> Result<String> {
    let mut s = serde_json::to_string_pretty(cfg)?;
    s.push('\n');
    Ok(s)
}
