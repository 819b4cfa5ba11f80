use std::fs::{self, File};
use std::io::BufWriter;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use franson_core::analysis::{
    fit_fringe, flatness_report, local_scan, scan_fringe, visibility_vs, write_curve_csv, FringeFit, FringePoint,
    FringeScan, ScanAxis,
};
use franson_core::oracle::run_oracles;
use franson_core::source::{generate_stream, StreamOptions};
use franson_core::timetag::tagfile::{read_tags_any, write_tags_path, TagFormat};
use franson_core::timetag::{
    count_coincidences, merge_sides, peak_areas, seconds_to_ps, select_central_peak, simulate_tags, sort_tags,
    split_sides, CoincidenceParams, PairCounts,
};
use franson_core::{ExperimentConfig, PhaseSettings};
use serde::Serialize;

use crate::manifest::{write_json, RunManifest, MANIFEST_NAME};
use crate::svg::{plot, Series};
use crate::{Command, FringeArgs, GlobalArgs, LocalArgs, ScanKind, VisibilityArgs};

/// Resolved inputs of one run.
struct RunContext {
    config: ExperimentConfig,
    settings: PhaseSettings,
    tau: f64,
    out: std::path::PathBuf,
}

/// Files written and warnings raised by a command.
#[derive(Default)]
struct Outputs {
    files: Vec<String>,
    warnings: Vec<String>,
}

impl Outputs {
    fn file(&mut self, name: &str) -> String {
        self.files.push(name.to_string());
        name.to_string()
    }
}

fn effective_config(global: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut config = match &global.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Some(mode) = global.mode {
        config.mode = mode;
    }
    if let Some(window) = global.window {
        config.window = window;
    }
    Ok(config)
}

/// Runs `command` and writes its outputs plus a manifest under `global.out`.
/// Returns the warnings recorded in the manifest.
pub fn run(global: GlobalArgs, command: Command) -> Result<Vec<String>> {
    let start = Instant::now();
    let (global, command, config) = match command {
        Command::Replay { manifest } => {
            let m = RunManifest::load(&manifest)?;
            let replayed = GlobalArgs { out: global.out, threads: global.threads, ..m.global };
            (replayed, m.command, m.config)
        }
        command => {
            let config = effective_config(&global)?;
            (global, command, config)
        }
    };

    let mut outputs = Outputs::default();
    for w in config.validate()? {
        outputs.warnings.push(w.to_string());
    }
    let ctx = RunContext {
        settings: config.settings(global.phi, global.psi),
        config,
        tau: global.tau,
        out: global.out.clone(),
    };
    fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;

    let subcommand = match &command {
        Command::Simulate { duration } => {
            simulate(&ctx, *duration, &mut outputs)?;
            "simulate"
        }
        Command::Coincide { tags, offset, bin_ps } => {
            coincide(&ctx, tags, *offset, *bin_ps, &mut outputs)?;
            "coincide"
        }
        Command::Scan(ScanKind::Fringe(args)) => {
            scan_fringe_cmd(&ctx, args, &mut outputs)?;
            "scan fringe"
        }
        Command::Scan(ScanKind::Local(args)) => {
            scan_local_cmd(&ctx, args, &mut outputs)?;
            "scan local"
        }
        Command::Visibility(args) => {
            visibility_cmd(&ctx, args, &mut outputs)?;
            "visibility"
        }
        Command::Oracle => {
            oracle_cmd(&ctx, &mut outputs)?;
            "oracle"
        }
        Command::Replay { .. } => bail!("a manifest cannot record a replay"),
    };

    outputs.files.push(MANIFEST_NAME.to_string());
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: subcommand.to_string(),
        argv: std::env::args().collect(),
        seed: ctx.config.seed,
        config: ctx.config.clone(),
        settings: ctx.settings,
        tau_ab: ctx.tau,
        global,
        command,
        outputs: outputs.files,
        warnings: outputs.warnings.clone(),
        duration_s: start.elapsed().as_secs_f64(),
    };
    manifest.write(&ctx.out)?;
    Ok(outputs.warnings)
}

fn simulate(ctx: &RunContext, duration: Option<f64>, outputs: &mut Outputs) -> Result<()> {
    let mut config = ctx.config.clone();
    if let Some(d) = duration {
        config.duration = d;
        config.validate()?;
    }
    let stream = generate_stream(&config, &StreamOptions::default())?;
    let tags = simulate_tags(&config, &ctx.settings, &stream);
    let merged = merge_sides(&tags.a, &tags.b);
    for format in [TagFormat::Binary, TagFormat::Csv] {
        let name = outputs.file(&format!("tags.{}", format.extension()));
        write_tags_path(ctx.out.join(&name), &merged, format)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CoincidenceReport {
    window: f64,
    offset: f64,
    delta_t: f64,
    tags_a: usize,
    tags_b: usize,
    /// All greedy matches inside the window.
    matched: PairCounts,
    /// Matches kept by post-selection on the central peak.
    central: PairCounts,
    /// Histogram areas of the peaks at -δT, 0 and +δT.
    peak_areas: [u64; 3],
    warnings: Vec<String>,
}

fn coincide(
    ctx: &RunContext,
    files: &[std::path::PathBuf],
    offset: f64,
    bin_ps: u64,
    outputs: &mut Outputs,
) -> Result<()> {
    let mut all = Vec::new();
    for path in files {
        all.extend(read_tags_any(path).with_context(|| format!("reading {}", path.display()))?);
    }
    sort_tags(&mut all);
    let (a, b) = split_sides(&all);
    let delta_t = ctx.config.delay();
    let params = CoincidenceParams {
        window: ctx.config.window,
        offset,
        bin_width_ps: bin_ps.max(1),
        range_ps: seconds_to_ps(2.0 * delta_t),
    };
    let result = count_coincidences(&a, &b, &params)?;
    let central = select_central_peak(&result.matches, ctx.config.window, Some(delta_t));
    outputs.warnings.extend(central.warnings.iter().cloned());
    let report = CoincidenceReport {
        window: ctx.config.window,
        offset,
        delta_t,
        tags_a: a.len(),
        tags_b: b.len(),
        matched: result.counts,
        central: central.counts,
        peak_areas: peak_areas(&result.histogram, seconds_to_ps(delta_t) as i64),
        warnings: central.warnings,
    };
    write_json(&ctx.out.join(outputs.file("counts.json")), &report)?;
    let name = outputs.file("histogram.csv");
    result.histogram.write_csv(BufWriter::new(File::create(ctx.out.join(name))?))?;
    Ok(())
}

fn write_curve(ctx: &RunContext, points: &[FringePoint], outputs: &mut Outputs) -> Result<()> {
    let name = outputs.file("curve.csv");
    write_curve_csv(BufWriter::new(File::create(ctx.out.join(name))?), points)?;
    write_json(&ctx.out.join(outputs.file("curve.json")), &points)?;
    Ok(())
}

fn write_svg(ctx: &RunContext, svg: String, outputs: &mut Outputs) -> Result<()> {
    fs::write(ctx.out.join(outputs.file("plot.svg")), svg)?;
    Ok(())
}

fn fit_curve(fit: &FringeFit, x0: f64, x1: f64) -> Vec<(f64, f64)> {
    (0..=200)
        .map(|i| {
            let x = x0 + (x1 - x0) * i as f64 / 200.0;
            (x, fit.amplitude * (1.0 + fit.visibility * (x + fit.phase).cos()))
        })
        .collect()
}

fn scan_fringe_cmd(ctx: &RunContext, args: &FringeArgs, outputs: &mut Outputs) -> Result<()> {
    let scan = FringeScan {
        pipeline: args.pipeline,
        axis: args.axis,
        det_a: args.det_a,
        det_b: args.det_b,
        grid: args.grid,
        phi: ctx.settings.phi,
        psi: ctx.settings.psi,
        tau_ab: ctx.tau,
        samples_per_point: args.samples,
    };
    let points = scan_fringe(&ctx.config, &scan)?;
    write_curve(ctx, &points, outputs)?;
    let fit = fit_fringe(&points)?;
    outputs.warnings.extend(fit.warnings.iter().cloned());
    write_json(&ctx.out.join(outputs.file("fit.json")), &fit)?;

    let (x0, x1) = (args.grid.start, args.grid.stop);
    let data = points.iter().map(|p| (p.x, p.value)).collect();
    let svg = plot(
        &format!("{}{} fringe, V = {:.4}", args.det_a, args.det_b, fit.visibility),
        &format!("{:?} phase (rad)", args.axis).to_lowercase(),
        "correlation",
        &[Series::markers("data", data), Series::line("fit", fit_curve(&fit, x0, x1))],
    );
    write_svg(ctx, svg, outputs)
}

#[derive(Serialize)]
struct LocalReport {
    axis: ScanAxis,
    photons_per_point: u64,
    max_abs_z: f64,
    pass: bool,
    z: Vec<Vec<f64>>,
}

fn scan_local_cmd(ctx: &RunContext, args: &LocalArgs, outputs: &mut Outputs) -> Result<()> {
    let scan = local_scan(&ctx.config, args.axis, &args.grid, ctx.settings.phi, ctx.settings.psi, args.samples);
    let report = flatness_report(&scan.counts);
    if !report.pass {
        outputs.warnings.push(format!("flatness FAIL: max |z| = {:.2}", report.max_abs_z));
    }

    let name = outputs.file("local.csv");
    let mut w = csv::Writer::from_path(ctx.out.join(name))?;
    w.write_record(["x", "D1", "D2", "D3", "D4"])?;
    for (i, x) in scan.x.iter().enumerate() {
        let mut row = vec![x.to_string()];
        row.extend(scan.counts.iter().map(|c| c[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    let local = LocalReport {
        axis: args.axis,
        photons_per_point: args.samples,
        max_abs_z: report.max_abs_z,
        pass: report.pass,
        z: report.z,
    };
    write_json(&ctx.out.join(outputs.file("flatness.json")), &local)?;

    let series: Vec<Series> = scan
        .counts
        .iter()
        .enumerate()
        .map(|(d, c)| {
            Series::markers(format!("D{}", d + 1), scan.x.iter().copied().zip(c.iter().map(|&v| v as f64)).collect())
        })
        .collect();
    let verdict = if local.pass { "PASS" } else { "FAIL" };
    let svg = plot(
        &format!("local counts, flatness {verdict} (max |z| = {:.2})", local.max_abs_z),
        &format!("{:?} (rad)", args.axis).to_lowercase(),
        "counts",
        &series,
    );
    write_svg(ctx, svg, outputs)
}

fn visibility_cmd(ctx: &RunContext, args: &VisibilityArgs, outputs: &mut Outputs) -> Result<()> {
    let scan = FringeScan {
        pipeline: args.pipeline,
        axis: ScanAxis::Joint,
        det_a: args.det_a,
        det_b: args.det_b,
        grid: args.phase_grid,
        phi: ctx.settings.phi,
        psi: ctx.settings.psi,
        tau_ab: ctx.tau,
        samples_per_point: args.samples,
    };
    let values = args.grid.inclusive();
    let curve = visibility_vs(&ctx.config, &scan, args.variable, &values)?;
    let points: Vec<FringePoint> =
        curve.points.iter().map(|p| FringePoint { x: p.x, value: p.visibility, error: p.error }).collect();
    let name = outputs.file("curve.csv");
    write_curve_csv(BufWriter::new(File::create(ctx.out.join(name))?), &points)?;
    write_json(&ctx.out.join(outputs.file("curve.json")), &curve)?;

    let data: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.value)).collect();
    let svg = plot(
        "fringe visibility",
        &format!("{:?}", args.variable).to_lowercase(),
        "V (fit)",
        &[Series::line("V", data.clone()), Series::markers("points", data)],
    );
    write_svg(ctx, svg, outputs)
}

fn oracle_cmd(ctx: &RunContext, outputs: &mut Outputs) -> Result<()> {
    let report = run_oracles(&ctx.config);
    for c in report.checks.iter().filter(|c| !c.pass) {
        outputs.warnings.push(format!(
            "oracle check {} failed: computed {} vs reference {} (tol {})",
            c.name, c.computed, c.reference, c.tolerance
        ));
    }
    write_json(&ctx.out.join(outputs.file("oracle.json")), &report)
}
