use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use shapemap::io;
use shapemap::modal::{self, IdentOptions};
use shapemap::pipeline::{self, CampaignSource, CampaignSpec, K0Source, VerifyOptions};
use shapemap::shaper::{ImpulseSequence, ShaperParams};
use shapemap::sim::{self, SimConfig, StepTiming};
use shapemap::{FrequencyMap, JointPose};

#[derive(Parser)]
#[command(name = "shapemap", version, about = "Data-driven input shaping for flexible arms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Identify vibration modes in a residual acceleration trace.
    Identify(IdentifyArgs),
    /// Run a measurement campaign and build a frequency map.
    MapBuild(MapBuildArgs),
    /// Query a frequency map at a pose.
    MapQuery(MapQueryArgs),
    /// Shape a trajectory with shapers tuned from a map.
    Shape(ShapeArgs),
    /// Compare shaped and unshaped motions on the simulated plant.
    Verify(VerifyArgs),
    /// Frequency response of a shaper or cascade.
    Bode(BodeArgs),
    /// Run the simulated plant on a command.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Common {
    /// Noise seed (overrides the simulator configuration).
    #[arg(long)]
    seed: Option<u64>,
    /// Sample rate in Hz (overrides the simulator configuration).
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print results as CSV on standard output.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct IdentFlags {
    #[arg(long, default_value_t = 2)]
    max_modes: usize,
    /// Minimum peak prominence relative to the largest peak.
    #[arg(long, default_value_t = 0.2)]
    prominence: f64,
    #[arg(long, default_value_t = 4)]
    zero_pad: usize,
    /// Peaks below this frequency (Hz) are ignored.
    #[arg(long, default_value_t = 0.5)]
    low_cutoff: f64,
    /// Shortest accepted residual window, seconds.
    #[arg(long, default_value_t = 2.0)]
    min_residual: f64,
}

impl IdentFlags {
    fn options(&self) -> IdentOptions {
        IdentOptions {
            zero_pad_factor: self.zero_pad,
            max_modes: self.max_modes,
            min_prominence_ratio: self.prominence,
            low_cutoff_hz: self.low_cutoff,
            min_residual_s: self.min_residual,
        }
    }
}

#[derive(Args)]
struct IdentifyArgs {
    trace: PathBuf,
    /// Motion end time in seconds (otherwise read from the file).
    #[arg(long)]
    motion_end: Option<f64>,
    #[command(flatten)]
    ident: IdentFlags,
    /// Also write the magnitude spectrum as CSV.
    #[arg(long)]
    spectrum_out: Option<PathBuf>,
    /// Estimate the damping factor k0 of each mode.
    #[arg(long)]
    estimate_k0: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SimSource {
    /// Simulator configuration (JSON); the reference plant when omitted.
    #[arg(long)]
    sim_config: Option<PathBuf>,
}

impl SimSource {
    fn load(&self, common: &Common) -> Result<SimConfig> {
        let mut cfg = match &self.sim_config {
            Some(path) => io::parse_sim_config(&read(path)?)
                .with_context(|| format!("reading {}", path.display()))?,
            None => SimConfig::reference_plant(),
        };
        if let Some(seed) = common.seed {
            cfg.seed = seed;
        }
        if let Some(rate) = common.sample_rate {
            cfg.sample_rate = rate;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct MapBuildArgs {
    #[command(flatten)]
    sim: SimSource,
    /// Directory of recorded traces named pose_<q1>_<q2>.csv.
    #[arg(long, conflicts_with = "sim_config")]
    traces: Option<PathBuf>,
    /// Grid angles of one joint, comma separated; repeat once per joint.
    #[arg(long = "axis")]
    axes: Vec<String>,
    /// Pose every campaign step starts from.
    #[arg(long, default_value = "-30,-30", allow_hyphen_values = true)]
    step_from: String,
    /// Fixed damping factor for every shaper.
    #[arg(long, default_value_t = 1.0)]
    k0: f64,
    /// Estimate k0 per node instead of using a fixed value.
    #[arg(long)]
    estimate_k0: bool,
    /// Write the simulated campaign traces into this directory.
    #[arg(long)]
    export_traces: Option<PathBuf>,
    #[command(flatten)]
    ident: IdentFlags,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct MapQueryArgs {
    map: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pose: String,
    /// One-based mode; all modes when omitted.
    #[arg(long)]
    mode: Option<usize>,
    #[arg(long)]
    extrapolate: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ShapeArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    trajectory: PathBuf,
    /// Target pose; defaults to the final sample of the trajectory.
    #[arg(long, allow_hyphen_values = true)]
    pose: Option<String>,
    /// One-based modes to suppress (`1,2`), `all`, or `none`.
    #[arg(long, default_value = "all")]
    modes: String,
    #[arg(long)]
    extrapolate: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    sim: SimSource,
    #[arg(long)]
    map: PathBuf,
    /// Labelled target pose such as `A=45,45`; repeatable.
    #[arg(long = "position")]
    positions: Vec<String>,
    #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
    step_from: String,
    /// Seconds skipped after the command ends before measuring.
    #[arg(long, default_value_t = 0.0)]
    settle_guard: f64,
    #[arg(long, default_value = "all")]
    modes: String,
    #[arg(long)]
    extrapolate: bool,
    /// Recording time after the step, seconds.
    #[arg(long, default_value_t = 20.0)]
    record: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BodeArgs {
    /// Shaper delay in seconds (with --k0).
    #[arg(long, conflicts_with_all = ["freq", "map"])]
    t0: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    k0: f64,
    /// Notch frequency in Hz; repeat to cascade.
    #[arg(long, conflicts_with = "map")]
    freq: Vec<f64>,
    #[arg(long, requires = "pose")]
    map: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pose: Option<String>,
    #[arg(long, default_value = "all")]
    modes: String,
    #[arg(long, default_value_t = 0.1)]
    f_min: f64,
    #[arg(long, default_value_t = 10.0)]
    f_max: f64,
    #[arg(long, default_value_t = 1000)]
    n_points: usize,
    /// Logarithmic frequency spacing.
    #[arg(long)]
    log: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimSource,
    /// Command trajectory CSV.
    #[arg(long, conflicts_with = "step_to")]
    trajectory: Option<PathBuf>,
    /// Step target pose (instead of a trajectory file).
    #[arg(long, allow_hyphen_values = true)]
    step_to: Option<String>,
    #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
    step_from: String,
    #[arg(long, default_value_t = 1.0)]
    lead: f64,
    #[arg(long, default_value_t = 20.0)]
    record: f64,
    /// Write the tip acceleration as a trace CSV for `identify`.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

fn read(path: &Path) -> Result<String> {
    Ok(pipeline::read_text(path)?)
}

fn emit(common: &Common, csv: &str) -> Result<()> {
    if let Some(path) = &common.out {
        pipeline::write_text(path, csv)?;
    }
    if common.csv {
        print!("{csv}");
    }
    Ok(())
}

fn pose(text: &str) -> Result<JointPose> {
    Ok(pipeline::parse_pose(text)?)
}

/// `all` -> every map mode, `none` -> no mode, otherwise one-based indices.
fn parse_modes(text: &str, available: usize) -> Result<Vec<usize>> {
    match text.trim() {
        "all" => Ok((0..available).collect()),
        "none" | "" => Ok(Vec::new()),
        list => list
            .split(',')
            .map(|s| {
                let m: usize = s.trim().parse().with_context(|| format!("bad mode {s:?}"))?;
                if m == 0 || m > available {
                    bail!("mode {m} out of range 1..={available}");
                }
                Ok(m - 1)
            })
            .collect(),
    }
}

fn load_map(path: &Path) -> Result<FrequencyMap> {
    io::parse_map(&read(path)?).with_context(|| format!("reading map {}", path.display()))
}

fn identify(args: IdentifyArgs) -> Result<()> {
    let text = read(&args.trace)?;
    let trace = io::parse_trace_csv(&text, args.motion_end)
        .with_context(|| format!("parsing {}", args.trace.display()))?;
    let opts = args.ident.options();
    let (peaks, spectrum) = modal::identify(&trace, &opts)?;
    if let Some(path) = &args.spectrum_out {
        pipeline::write_text(path, &io::write_spectrum_csv(&spectrum))?;
    }
    let k0s = if args.estimate_k0 {
        let segment = modal::residual_segment(&trace, opts.min_residual_s)?;
        peaks
            .iter()
            .map(|p| modal::estimate_k0(&segment, p.frequency).ok())
            .collect()
    } else {
        vec![None; peaks.len()]
    };
    for (p, k0) in peaks.iter().zip(&k0s) {
        let mut line = format!(
            "mode {}: {:.3} Hz (magnitude {:.4})",
            p.mode_index + 1,
            p.frequency,
            p.magnitude
        );
        if let Some(k) = k0 {
            line.push_str(&format!(", k0 {k:.4}"));
        } else if args.estimate_k0 {
            line.push_str(", k0 unavailable (use 1)");
        }
        if !args.common.csv {
            println!("{line}");
        }
    }
    emit(&args.common, &io::write_peaks_csv(&peaks))
}

fn map_build(args: MapBuildArgs) -> Result<()> {
    let axes: Vec<Vec<f64>> = if args.axes.is_empty() {
        vec![vec![0.0, 30.0, 60.0, 90.0]; 2]
    } else {
        args.axes
            .iter()
            .map(|a| Ok(pose(a)?.0))
            .collect::<Result<_>>()?
    };
    let source = match &args.traces {
        Some(dir) => CampaignSource::Directory(dir.clone()),
        None => CampaignSource::Simulator(args.sim.load(&args.common)?),
    };
    let spec = CampaignSpec {
        axes,
        step_from: pose(&args.step_from)?,
        source,
        ident: args.ident.options(),
        k0: if args.estimate_k0 {
            K0Source::Estimate
        } else {
            K0Source::Fixed(args.k0)
        },
        timing: StepTiming::default(),
    };
    if let Some(dir) = &args.export_traces {
        pipeline::export_traces(dir, &pipeline::campaign_traces(&spec)?)?;
    }
    let map = pipeline::build_map(&spec)?;
    let summary = pipeline::format_map_summary(&map);
    if let Some(path) = &args.common.out {
        pipeline::write_text(path, &map.to_json()?)?;
    }
    if args.common.csv {
        print!("{summary}");
    } else {
        println!(
            "{} nodes, {} modes{}",
            map.node_count(),
            map.modes(),
            args.common
                .out
                .as_ref()
                .map(|p| format!(" -> {}", p.display()))
                .unwrap_or_default()
        );
        print!("{summary}");
    }
    Ok(())
}

fn map_query(args: MapQueryArgs) -> Result<()> {
    let map = load_map(&args.map)?;
    let target = pose(&args.pose)?;
    let modes: Vec<usize> = match args.mode {
        Some(m) => parse_modes(&m.to_string(), map.modes())?,
        None => (0..map.modes()).collect(),
    };
    let mut csv = String::from("mode,frequency_hz,t0_s,k0,extrapolated\n");
    for m in modes {
        let q = if args.extrapolate {
            map.extrapolate(&target, m)?
        } else {
            shapemap::freq_map::MapQuery {
                frequency: map.interpolate(&target, m)?,
                extrapolated: false,
            }
        };
        let params = map.shaper_params_at(&target, m, map.k0_policy(), args.extrapolate)?;
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            m + 1,
            q.frequency,
            params.t0,
            params.k0,
            q.extrapolated
        ));
        if !args.common.csv {
            println!(
                "mode {}: {:.4} Hz, t0 {:.4} s, k0 {:.4}{}",
                m + 1,
                q.frequency,
                params.t0,
                params.k0,
                if q.extrapolated { " (extrapolated)" } else { "" }
            );
        }
    }
    emit(&args.common, &csv)
}

fn shape(args: ShapeArgs) -> Result<()> {
    let map = load_map(&args.map)?;
    let traj = io::parse_trajectory_csv(&read(&args.trajectory)?)
        .with_context(|| format!("parsing {}", args.trajectory.display()))?;
    let target = args.pose.as_deref().map(pose).transpose()?;
    let modes = parse_modes(&args.modes, map.modes())?;
    let (shaped, delay) =
        pipeline::shape_trajectory(&map, &traj, target.as_ref(), &modes, args.extrapolate)?;
    if !args.common.csv {
        println!("total added delay: {delay:.6} s");
    }
    emit(&args.common, &io::write_trajectory_csv(&shaped))
}

fn verify(args: VerifyArgs) -> Result<()> {
    let cfg = args.sim.load(&args.common)?;
    let map = load_map(&args.map)?;
    let positions = args
        .positions
        .iter()
        .map(|p| Ok(pipeline::parse_position(p)?))
        .collect::<Result<Vec<_>>>()?;
    let opts = VerifyOptions {
        step_from: pose(&args.step_from)?,
        timing: StepTiming {
            lead: 1.0,
            record: args.record,
        },
        settle_guard: args.settle_guard,
        modes: parse_modes(&args.modes, map.modes())?,
        allow_extrapolation: args.extrapolate,
    };
    if opts.modes.is_empty() && args.modes.trim() == "none" {
        bail!("verify needs at least one mode to suppress");
    }
    let rows = pipeline::verify(&cfg, &map, &positions, &opts)?;
    if !args.common.csv {
        print!("{}", pipeline::format_report(&rows));
    }
    emit(&args.common, &io::write_report_csv(&rows))
}

fn bode(args: BodeArgs) -> Result<()> {
    let seq = if let Some(t0) = args.t0 {
        ImpulseSequence::zv(ShaperParams::new(t0, args.k0)?)?
    } else if let Some(path) = &args.map {
        let map = load_map(path)?;
        let target = pose(args.pose.as_deref().unwrap_or_default())?;
        let modes = parse_modes(&args.modes, map.modes())?;
        pipeline::shaper_for_pose(&map, &target, &modes, false)?
    } else {
        let mut freqs = args.freq.clone();
        freqs.sort_by(f64::total_cmp);
        let shapers = freqs
            .iter()
            .map(|&f| Ok(ImpulseSequence::zv(ShaperParams::from_frequency(f, args.k0)?)?))
            .collect::<Result<Vec<_>>>()?;
        ImpulseSequence::cascade_all(&shapers)
    };
    let points = pipeline::bode(&seq, args.f_min, args.f_max, args.n_points, args.log)?;
    let csv = io::write_bode_csv(&points);
    if args.common.out.is_none() && !args.common.csv {
        print!("{csv}");
        return Ok(());
    }
    emit(&args.common, &csv)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = args.sim.load(&args.common)?;
    let command = match (&args.trajectory, &args.step_to) {
        (Some(path), _) => io::parse_trajectory_csv(&read(path)?)
            .with_context(|| format!("parsing {}", path.display()))?,
        (None, Some(to)) => StepTiming {
            lead: args.lead,
            record: args.record,
        }
        .command(&pose(&args.step_from)?, &pose(to)?, cfg.sample_rate)?,
        (None, None) => bail!("give --trajectory or --step-to"),
    };
    let result = sim::simulate(&cfg, &command)?;
    if let Some(path) = &args.trace_out {
        pipeline::write_text(path, &io::write_trace_csv(&result.tip_acceleration))?;
    }
    if !args.common.csv {
        let freqs: Vec<String> = result
            .mode_frequencies
            .iter()
            .map(|f| format!("{f:.4} Hz"))
            .collect();
        println!(
            "{} samples, command ends at {:.4} s, modes {}",
            command.len(),
            result.command_end_time,
            freqs.join(", ")
        );
    }
    emit(&args.common, &io::write_sim_csv(&result))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Identify(a) => identify(a),
        Command::MapBuild(a) => map_build(a),
        Command::MapQuery(a) => map_query(a),
        Command::Shape(a) => shape(a),
        Command::Verify(a) => verify(a),
        Command::Bode(a) => bode(a),
        Command::Simulate(a) => simulate(a),
    }
}

fn main() -> ExitCode {
    // exit code 2 is reserved for "no result", so usage errors exit 1
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let no_result = e
                .chain()
                .any(|c| c.downcast_ref::<shapemap::Error>().is_some_and(|e| e.is_no_result()));
            ExitCode::from(if no_result { 2 } else { 1 })
        }
    }
}
