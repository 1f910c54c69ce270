//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line and then
//! asserts, so `cargo test --test acceptance -- --nocapture` gives a summary.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use shapemap::freq_map::{FrequencyMap, JointPose, K0Policy};
use shapemap::io;
use shapemap::modal::{self, AccelTrace, IdentOptions};
use shapemap::pipeline::{self, CampaignSource, CampaignSpec, K0Source, VerifyOptions};
use shapemap::shaper::{k0_from_damping_ratio, ImpulseSequence, ShaperParams};
use shapemap::sim::{self, SimConfig, StepTiming};
use shapemap::Trajectory;

fn verdict(id: u32, name: &str, pass: bool, detail: &str, elapsed: Duration) {
    println!(
        "[{}] criterion {id}: {name} | {detail} | {:.3} s",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    assert!(pass, "criterion {id} failed: {detail}");
}

fn zv_hz(f: f64, k0: f64) -> ImpulseSequence {
    ImpulseSequence::zv(ShaperParams::from_frequency(f, k0).unwrap()).unwrap()
}

#[test]
fn c01_notch_depth() {
    let start = Instant::now();
    let s = zv_hz(1.7, 1.0);
    let at_notch = s.frequency_response(1.7).0;
    let at_dc = s.frequency_response(0.0).0;
    let pass = at_notch < 1e-12 && (at_dc - 1.0).abs() < 1e-12;
    verdict(
        1,
        "notch depth",
        pass,
        &format!("|H(1.7)|={at_notch:.3e} (<1e-12), |H(0)|={at_dc} (1 +- 1e-12)"),
        start.elapsed(),
    );
}

#[test]
fn c02_harmonic_zeros() {
    let start = Instant::now();
    let s = zv_hz(1.7, 1.0);
    let zeros = [5.1, 8.5].map(|f| s.frequency_response(f).0);
    let ones = [3.4, 6.8].map(|f| s.frequency_response(f).0);
    let pass = zeros.iter().all(|&m| m < 1e-9) && ones.iter().all(|&m| (m - 1.0).abs() < 1e-9);
    verdict(
        2,
        "harmonic zeros",
        pass,
        &format!(
            "|H(5.1)|={:.2e} |H(8.5)|={:.2e} (<1e-9); |H(3.4)|={} |H(6.8)|={} (1 +- 1e-9)",
            zeros[0], zeros[1], ones[0], ones[1]
        ),
        start.elapsed(),
    );
}

/// Residual ratio shaped/unshaped for a unit step on a single-mode plant.
fn residual_ratio(cfg: &SimConfig, seq: &ImpulseSequence) -> f64 {
    let cmd = Trajectory::step(&[0.0], &[10.0], cfg.sample_rate, 0.0, 1.0, 20.0).unwrap();
    let raw = sim::simulate(cfg, &cmd).unwrap();
    let shaped = sim::simulate(cfg, &seq.apply(&cmd).unwrap()).unwrap();
    sim::residual_amplitude(&shaped, 0.0).unwrap() / sim::residual_amplitude(&raw, 0.0).unwrap()
}

#[test]
fn c03_exact_tuning_suppression() {
    let start = Instant::now();
    let (f_n, zeta) = (1.9, 0.01);
    let f_d = f_n * (1.0f64 - zeta * zeta).sqrt();
    // 1 kHz keeps the fractional-delay interpolation error well below 1e-4.
    let cfg = SimConfig::single_mode(f_n, zeta, 3.0, 1000.0);

    let with_unit_k0 = residual_ratio(&cfg, &zv_hz(f_d, 1.0));
    let reduction = 100.0 * (1.0 - with_unit_k0);
    let bound = (1.0 - (-zeta * PI).exp()) / 2.0;

    let k0 = k0_from_damping_ratio(zeta).unwrap();
    let with_exact_k0 = residual_ratio(&cfg, &zv_hz(f_d, k0));

    let pass = reduction >= 95.0 && with_exact_k0 < 1e-4 && start.elapsed().as_secs_f64() < 1.0;
    verdict(
        3,
        "exact-tuning suppression",
        pass,
        &format!(
            "k0=1 reduction {reduction:.3}% (>=95, analytic residual {:.3}%); exact k0 residual {:.2e} (<1e-4)",
            100.0 * bound,
            with_exact_k0
        ),
        start.elapsed(),
    );
}

#[test]
fn c04_sensitivity_curve() {
    let start = Instant::now();
    let f_a = 1.9;
    let cfg = SimConfig::single_mode(f_a, 0.0, 2.0, 100.0);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (r, expected) in [
        (0.8, 0.309),
        (0.9, 0.156),
        (1.0, 0.0),
        (1.1, 0.156),
        (1.2, 0.309),
    ] {
        let closed_form = (PI * r / 2.0).cos().abs();
        assert!((closed_form - expected).abs() < 5e-4);
        let measured = residual_ratio(&cfg, &zv_hz(f_a / r, 1.0));
        worst = worst.max((measured - closed_form).abs());
        parts.push(format!("r={r}: {measured:.4} vs {closed_form:.4}"));
    }
    let pass = worst <= 0.01 && start.elapsed().as_secs_f64() < 5.0;
    verdict(
        4,
        "sensitivity curve",
        pass,
        &format!("{}; max error {worst:.4} (<=0.01)", parts.join(", ")),
        start.elapsed(),
    );
}

#[test]
fn c05_two_mode_chained_suppression() {
    let start = Instant::now();
    let cfg = SimConfig::reference_plant();
    let from = JointPose::from([0.0, 0.0]);
    let to = JointPose::from([45.0, 60.0]);
    let freqs = cfg.frequencies_at(&to).unwrap();
    assert!((freqs[0] - 1.9).abs() < 1e-12 && (freqs[1] - 3.8).abs() < 1e-12);

    let seq = zv_hz(freqs[0], 1.0).cascade(&zv_hz(freqs[1], 1.0));
    let cmd = StepTiming::default().command(&from, &to, cfg.sample_rate).unwrap();
    let raw = sim::simulate(&cfg, &cmd).unwrap();
    let shaped = sim::simulate(&cfg, &seq.apply(&cmd).unwrap()).unwrap();
    let r = sim::reduction_report(&raw, &shaped, 0.0).unwrap();
    let pass = r.reduction >= 95.0 && start.elapsed().as_secs_f64() < 2.0;
    verdict(
        5,
        "two-mode chained suppression",
        pass,
        &format!(
            "{:.2} mm -> {:.2} mm, reduction {:.2}% (>=95)",
            r.amp_without, r.amp_with, r.reduction
        ),
        start.elapsed(),
    );
}

fn verify_positions() -> Vec<(String, JointPose)> {
    vec![
        ("A".into(), JointPose::from([45.0, 45.0])),
        ("B".into(), JointPose::from([15.0, 15.0])),
        ("C".into(), JointPose::from([75.0, 60.0])),
    ]
}

fn campaign(seed: u64) -> CampaignSpec {
    let cfg = SimConfig {
        seed,
        ..SimConfig::reference_plant()
    };
    CampaignSpec {
        axes: vec![vec![0.0, 30.0, 60.0, 90.0]; 2],
        step_from: JointPose::from([-30.0, -30.0]),
        source: CampaignSource::Simulator(cfg),
        ident: IdentOptions::default(),
        k0: K0Source::Fixed(1.0),
        timing: StepTiming::default(),
    }
}

#[test]
fn c06_end_to_end_pipeline() {
    let start = Instant::now();
    let spec = campaign(7);
    let CampaignSource::Simulator(cfg) = &spec.source else {
        unreachable!()
    };

    // campaign -> trace files -> identification -> map file
    let dir = tempfile::tempdir().unwrap();
    let traces = pipeline::campaign_traces(&spec).unwrap();
    assert_eq!(traces.len(), 16);
    pipeline::export_traces(dir.path(), &traces).unwrap();
    let from_files = CampaignSpec {
        source: CampaignSource::Directory(dir.path().to_path_buf()),
        ..spec.clone()
    };
    let map = pipeline::build_map(&from_files).unwrap();
    let map_path = dir.path().join("map.json");
    pipeline::write_text(&map_path, &map.to_json().unwrap()).unwrap();
    let map = io::parse_map(&pipeline::read_text(&map_path).unwrap()).unwrap();

    let anchor = JointPose::from([45.0, 60.0]);
    let f1 = map.interpolate(&anchor, 0).unwrap();
    let f2 = map.interpolate(&anchor, 1).unwrap();
    assert!((f1 - 1.9).abs() <= 0.05 && (f2 - 3.8).abs() <= 0.05, "{f1} {f2}");

    let rows = pipeline::verify(cfg, &map, &verify_positions(), &VerifyOptions::default()).unwrap();
    let mean = rows.iter().map(|r| r.reduction).sum::<f64>() / rows.len() as f64;
    let min = rows.iter().map(|r| r.reduction).fold(f64::INFINITY, f64::min);
    for r in &rows {
        let implied = 100.0 * (1.0 - r.amplitude_with / r.amplitude_without);
        assert!((implied - r.reduction).abs() < 0.1);
    }
    let detail = rows
        .iter()
        .map(|r| format!("{} {:.1}%", r.label, r.reduction))
        .collect::<Vec<_>>()
        .join(", ");
    let pass = rows.len() == 3 && min >= 83.3 && mean >= 90.0 && start.elapsed().as_secs_f64() < 30.0;
    verdict(
        6,
        "end-to-end pipeline",
        pass,
        &format!("{detail}; min {min:.1}% (>=83.3), mean {mean:.1}% (>=90); map f(45,60)={f1:.3}/{f2:.3} Hz"),
        start.elapsed(),
    );
}

#[test]
fn c07_identification_accuracy() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let fs = 100.0;
    let n = 2000;
    let opts = IdentOptions::default();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..50 {
        let f1 = rng.random_range(1.3..2.3);
        let f2 = rng.random_range(3.0..4.4);
        let a2 = rng.random_range(0.5..1.0);
        let (p1, p2) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
        let clean: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * PI * f1 * t + p1).sin() + a2 * (2.0 * PI * f2 * t + p2).sin()
            })
            .collect();
        let power = clean.iter().map(|v| v * v).sum::<f64>() / n as f64;
        // 20 dB SNR
        let noise = Normal::new(0.0, (power / 100.0).sqrt()).unwrap();
        let samples = clean.iter().map(|v| v + noise.sample(&mut rng)).collect();
        let trace = AccelTrace::new(fs, 0.0, samples, 0.0).unwrap();
        match modal::identify(&trace, &opts) {
            Ok((peaks, _)) if peaks.len() == 2 => {
                worst = worst
                    .max((peaks[0].frequency - f1).abs())
                    .max((peaks[1].frequency - f2).abs());
            }
            _ => failures += 1,
        }
    }
    let pass = failures == 0 && worst <= 0.05 && start.elapsed().as_secs_f64() < 30.0;
    verdict(
        7,
        "identification accuracy",
        pass,
        &format!("50 two-mode instances, {failures} failed, max error {worst:.4} Hz (<=0.05)"),
        start.elapsed(),
    );
}

#[test]
fn c08_interpolation_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (x0, y0) = (rng.random_range(-90.0..90.0), rng.random_range(-90.0..90.0));
        let (dx, dy) = (rng.random_range(1.0..60.0), rng.random_range(1.0..60.0));
        let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.5..6.0));
        let map = FrequencyMap::new(
            vec![vec![x0, x0 + dx], vec![y0, y0 + dy]],
            vec![c.to_vec()],
            K0Policy::default(),
            Default::default(),
        )
        .unwrap();
        let (u, v): (f64, f64) = (rng.random(), rng.random());
        let (px, py) = (x0 + u * dx, y0 + v * dy);
        let (wx, wy) = ((px - x0) / dx, (py - y0) / dy);
        let direct = (1.0 - wx) * (1.0 - wy) * c[0]
            + (1.0 - wx) * wy * c[1]
            + wx * (1.0 - wy) * c[2]
            + wx * wy * c[3];
        let got = map.interpolate(&JointPose::from([px, py]), 0).unwrap();
        worst = worst.max((got - direct).abs());
    }

    // node exactness on a 4x4, two-mode map
    let axis = [0.0, 30.0, 60.0, 90.0];
    let mut values = vec![Vec::new(), Vec::new()];
    for _ in 0..16 {
        let f: f64 = rng.random_range(1.3..2.3);
        values[0].push(f);
        values[1].push(2.0 * f + rng.random_range(0.01..0.5));
    }
    let map = FrequencyMap::new(
        vec![axis.to_vec(), axis.to_vec()],
        values,
        K0Policy::default(),
        Default::default(),
    )
    .unwrap();
    let nodes_exact = map.nodes().iter().enumerate().all(|(i, p)| {
        (0..2).all(|m| map.interpolate(p, m).unwrap().to_bits() == map.values(m)[i].to_bits())
    });
    let pass = worst <= 1e-12 && nodes_exact && start.elapsed().as_secs_f64() < 1.0;
    verdict(
        8,
        "interpolation oracle",
        pass,
        &format!("1000 cells, max deviation {worst:.2e} (<=1e-12); nodes bit-exact: {nodes_exact}"),
        start.elapsed(),
    );
}

#[test]
fn c09_shaper_algebra() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let random_zv =|rng: &mut ChaCha8Rng| {
        ImpulseSequence::zv(
            ShaperParams::new(rng.random_range(0.02..0.8), rng.random_range(0.3..=1.0)).unwrap(),
        )
        .unwrap()
    };
    let same = |x: &ImpulseSequence, y: &ImpulseSequence| {
        x.len() == y.len()
            && x.impulses().iter().zip(y.impulses()).all(|(p, q)| {
                (p.time - q.time).abs() <= 1e-9 && (p.amplitude - q.amplitude).abs() <= 1e-12
            })
    };
    let mut violations = Vec::new();
    for i in 0..200 {
        let (a, b, c) = (random_zv(&mut rng), random_zv(&mut rng), random_zv(&mut rng));
        // occasionally a nested cascade as an operand
        let a = if i % 4 == 0 { a.cascade(&random_zv(&mut rng)) } else { a };
        let ab = a.cascade(&b);
        if !same(&ab, &b.cascade(&a)) {
            violations.push(format!("{i}: commutativity"));
        }
        if !same(&ab.cascade(&c), &a.cascade(&b.cascade(&c))) {
            violations.push(format!("{i}: associativity"));
        }
        let abc = ab.cascade(&c);
        let delay = a.total_delay() + b.total_delay() + c.total_delay();
        if (abc.total_delay() - delay).abs() > 1e-12 {
            violations.push(format!("{i}: delay additivity"));
        }
        let sum: f64 = abc.impulses().iter().map(|p| p.amplitude).sum();
        if (sum - 1.0).abs() > 1e-12 {
            violations.push(format!("{i}: unity sum"));
        }
        for _ in 0..5 {
            let f = rng.random_range(0.0..20.0);
            let lhs = abc.frequency_response(f).0;
            let rhs =
                a.frequency_response(f).0 * b.frequency_response(f).0 * c.frequency_response(f).0;
            if (lhs - rhs).abs() > 1e-10 {
                violations.push(format!("{i}: |H| factorization at {f}"));
            }
        }
    }
    let pass = violations.is_empty() && start.elapsed().as_secs_f64() < 1.0;
    verdict(
        9,
        "shaper algebra",
        pass,
        &format!("200 triples, {} violations {:?}", violations.len(), violations.iter().take(3).collect::<Vec<_>>()),
        start.elapsed(),
    );
}

fn run_cli(args: &[&str], cwd: &Path) {
    let out = Command::new(env!("CARGO_BIN_EXE_shapemap"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "shapemap {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn c10_determinism() {
    let start = Instant::now();
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        run_cli(
            &["map-build", "--seed", "7", "--step-from", "-30,-30", "--out", "map.json"],
            dir.path(),
        );
        run_cli(
            &[
                "verify", "--map", "map.json", "--seed", "7", "--position", "A=45,45",
                "--position", "B=15,15", "--position", "C=75,60", "--out", "report.csv",
            ],
            dir.path(),
        );
        let map = std::fs::read(dir.path().join("map.json")).unwrap();
        let report = std::fs::read(dir.path().join("report.csv")).unwrap();
        outputs.push((map, report));
    }
    let map_same = outputs[0].0 == outputs[1].0;
    let report_same = outputs[0].1 == outputs[1].1;
    verdict(
        10,
        "determinism",
        map_same && report_same,
        &format!(
            "map files identical: {map_same} ({} bytes), reports identical: {report_same} ({} bytes)",
            outputs[0].0.len(),
            outputs[0].1.len()
        ),
        start.elapsed(),
    );
}
