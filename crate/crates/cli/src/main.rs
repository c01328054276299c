//! `gainloss`: command-line front end for the gain-loss asymmetry analysis.
//!
//! Exit codes: 0 success, 2 input error, 3 convergence failure (some R-hat at
//! or above 1.2), 4 partial scan failure.

mod config;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gainloss::detrend::{detrend, threshold_from_std, DetrendConfig, FilteredSeries};
use gainloss::diagnostics::FitReport;
use gainloss::gbm::{ks_two_sample, ks_two_sample_critical, ks_validate, simulate_fht, CrossingCheck, Direction, GbmConfig};
use gainloss::inverse_stats::{hitting_times, HitConfig};
use gainloss::models::ModelKind;
use gainloss::pipeline::{
    correlation_matrix, dataset_row, fit_series, prepare, scan_filter, scan_rho, scan_window, DatasetRow, RhoMode, ScanOutcome,
};
use gainloss::plot::{posterior_svg, scan_svg};
use gainloss::series::{log_prices, parse_csv, PriceSeries};

use config::{resolve, BasisChoice, CommandDefaults, FileConfig, Resolved, RunArgs};

const RHAT_LIMIT: f64 = 1.2;
const FILTER_GRID: [usize; 8] = [150, 175, 200, 225, 250, 275, 300, 325];
const RHO_SCALE_GRID: [f64; 11] = [0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5];

#[derive(Parser)]
#[command(
    name = "gainloss",
    version,
    about = "Bayesian gain-loss asymmetry of price series via inverse statistics"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Dataset summary (counts, mean, std of raw and filtered log prices) and return correlations.
    Stats(StatsArgs),
    /// Subtract the trailing moving median from the log prices; writes `date,x`.
    Detrend(DetrendArgs),
    /// First-hitting times of a detrended `date,x` series; writes `side,tau`.
    Hittimes(HitArgs),
    /// Fit the hierarchical models and report the effect size.
    Fit(RunArgs),
    /// Refit over a grid of filter sizes with rho held fixed.
    ScanFilter(ScanFilterArgs),
    /// Refit over a grid of rho = scale * std.
    ScanRho(ScanRhoArgs),
    /// Refit over rolling calendar windows.
    ScanWindow(ScanWindowArgs),
    /// Simulate GBM first-hitting times and compare with the closed-form law.
    GbmValidate(GbmArgs),
    /// Render SVG plots from fit-report or scan JSON files.
    Plot(PlotArgs),
}

#[derive(Args)]
struct StatsArgs {
    inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 252)]
    filter_size: usize,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct DetrendArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 252)]
    filter_size: usize,
}

#[derive(Args)]
struct HitArgs {
    /// Detrended series as written by `detrend`.
    input: PathBuf,
    /// Crossing level; defaults to the sample std of the input.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, value_enum, default_value = "level")]
    basis: BasisChoice,
}

#[derive(Args)]
struct ScanFilterArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated filter sizes.
    #[arg(long, value_delimiter = ',')]
    filter_sizes: Option<Vec<usize>>,
}

#[derive(Args)]
struct ScanRhoArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated multiples of the sample std.
    #[arg(long, value_delimiter = ',')]
    rho_scales: Option<Vec<f64>>,
}

#[derive(Args)]
struct ScanWindowArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    window_years: Option<u32>,
    #[arg(long)]
    step_years: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionChoice {
    Up,
    Down,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum CrossingChoice {
    Grid,
    Bridge,
}

#[derive(Args)]
struct GbmArgs {
    #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
    lambda: f64,
    #[arg(long, default_value_t = 0.3)]
    sigma: f64,
    /// Barrier distance from the starting log price.
    #[arg(long, default_value_t = 0.3)]
    rho: f64,
    #[arg(long, default_value_t = 0.005)]
    dt: f64,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 1000.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "up")]
    direction: DirectionChoice,
    #[arg(long, value_enum, default_value = "bridge")]
    crossing: CrossingChoice,
    /// Where to write the tau samples (`fht_up.csv`, `fht_down.csv`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Fit-report or scan JSON files.
    inputs: Vec<PathBuf>,
    /// Defaults to the directory of each input.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// A non-error outcome that still maps to a nonzero exit status.
enum Status {
    Ok,
    NotConverged,
    PartialScan,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => ExitCode::from(3),
        Ok(Status::PartialScan) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Cmd) -> Result<Status> {
    match cmd {
        Cmd::Stats(a) => cmd_stats(a),
        Cmd::Detrend(a) => cmd_detrend(a),
        Cmd::Hittimes(a) => cmd_hittimes(a),
        Cmd::Fit(a) => cmd_fit(a),
        Cmd::ScanFilter(a) => cmd_scan_filter(a),
        Cmd::ScanRho(a) => cmd_scan_rho(a),
        Cmd::ScanWindow(a) => cmd_scan_window(a),
        Cmd::GbmValidate(a) => cmd_gbm(a),
        Cmd::Plot(a) => cmd_plot(a),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    if path.as_os_str() == "-" {
        std::io::stdin().read_to_end(&mut buf).context("reading standard input")?;
    } else {
        buf = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    }
    Ok(buf)
}

fn index_id(path: &Path) -> String {
    if path.as_os_str() == "-" {
        return "stdin".into();
    }
    path.file_stem()
        .map_or_else(|| "series".into(), |s| s.to_string_lossy().into_owned())
}

fn load_series(path: &Path) -> Result<PriceSeries> {
    let bytes = read_bytes(path)?;
    parse_csv(&bytes, &index_id(path)).with_context(|| format!("parsing {}", path.display()))
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<PriceSeries>> {
    paths.iter().map(|p| load_series(p)).collect()
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))
}

fn stdout(content: &str) -> Result<()> {
    match std::io::stdout().write_all(content.as_bytes()) {
        // A closed pipe (e.g. `| head`) is not an error.
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r.context("writing standard output"),
    }
}

fn cmd_stats(a: StatsArgs) -> Result<Status> {
    if a.inputs.is_empty() {
        bail!("no input files given");
    }
    let series = load_all(&a.inputs)?;
    let mut table = format!("{}\n", DatasetRow::csv_header());
    for (s, p) in series.iter().zip(&a.inputs) {
        let row = dataset_row(s, a.filter_size).with_context(|| format!("summarising {}", p.display()))?;
        table.push_str(&row.csv_row());
        table.push('\n');
    }
    let corr = if series.len() > 1 {
        Some(correlation_matrix(&series).context("correlating daily returns")?)
    } else {
        None
    };
    match &a.out_dir {
        Some(dir) => {
            write_file(dir, "stats.csv", &table)?;
            if let Some(c) = &corr {
                write_file(dir, "correlation.csv", c)?;
            }
        }
        None => {
            stdout(&table)?;
            if let Some(c) = &corr {
                stdout(&format!("\n{c}"))?;
            }
        }
    }
    Ok(Status::Ok)
}

fn cmd_detrend(a: DetrendArgs) -> Result<Status> {
    let s = load_series(&a.input)?;
    let f = detrend(&log_prices(&s), DetrendConfig::new(a.filter_size)?)
        .with_context(|| format!("detrending {}", a.input.display()))?;
    stdout(&f.to_csv())?;
    Ok(Status::Ok)
}

fn cmd_hittimes(a: HitArgs) -> Result<Status> {
    let bytes = read_bytes(&a.input)?;
    let f = FilteredSeries::parse_csv(&bytes, &index_id(&a.input)).with_context(|| format!("parsing {}", a.input.display()))?;
    let rho = match a.rho {
        Some(r) => r,
        None => threshold_from_std(&f, a.basis.into()).with_context(|| format!("calibrating rho on {}", a.input.display()))?,
    };
    let h = hitting_times(&f.x, HitConfig::new(rho)?).with_context(|| format!("hitting times of {}", a.input.display()))?;
    stdout(&h.to_csv())?;
    Ok(Status::Ok)
}

fn model_file(index: &str, model: ModelKind) -> String {
    format!("{index}_{model}")
}

fn cmd_fit(a: RunArgs) -> Result<Status> {
    let file = FileConfig::load(a.config.as_deref())?;
    let cfg = resolve(&a, &file, CommandDefaults::default())?;
    let series = load_all(&cfg.inputs)?;
    let mut tables: Vec<(ModelKind, String)> = cfg
        .analysis
        .models
        .iter()
        .map(|m| (*m, format!("{}\n", FitReport::csv_header())))
        .collect();
    let mut reports = Vec::new();
    for (s, path) in series.iter().zip(&cfg.inputs) {
        let fit = fit_series(s, &cfg.analysis).with_context(|| format!("preparing {}", path.display()))?;
        for (kind, r) in fit.fits {
            let m = r.with_context(|| format!("fitting {kind} on {}", path.display()))?;
            if let Some(dir) = &cfg.out_dir {
                let stem = model_file(&s.index_id, kind);
                write_file(dir, &format!("{stem}.json"), &m.report.to_json())?;
                write_file(dir, &format!("{stem}_trace.csv"), &m.trace.to_csv())?;
            }
            let t = &mut tables.iter_mut().find(|(k, _)| *k == kind).expect("model table").1;
            t.push_str(&m.report.csv_row());
            t.push('\n');
            reports.push(m.report);
        }
    }
    for (kind, t) in &tables {
        match &cfg.out_dir {
            Some(dir) => write_file(dir, &format!("fit_{kind}.csv"), t)?,
            None => stdout(&format!("# {kind}\n{t}"))?,
        }
    }
    convergence_status(&reports, cfg.allow_nonconverged)
}

fn convergence_status(reports: &[FitReport], allow: bool) -> Result<Status> {
    let bad: Vec<_> = reports.iter().filter(|r| !r.converged(RHAT_LIMIT)).collect();
    for r in &bad {
        eprintln!(
            "warning: {} {} not converged (max R-hat {:?}, R-hat of d {:?})",
            r.meta.index, r.meta.model, r.max_rhat, r.d_rhat
        );
    }
    Ok(if bad.is_empty() || allow {
        Status::Ok
    } else {
        Status::NotConverged
    })
}

fn finish_scan(kind: &str, scan: &ScanOutcome, cfg: &Resolved, series: &[PriceSeries]) -> Result<Status> {
    for n in &scan.notices {
        eprintln!("notice: {n}");
    }
    for r in &scan.rows {
        if let Err(e) = &r.result {
            eprintln!("failed: {} {}={} {}: {e}", r.index, kind, r.grid.label(), r.model);
        }
    }
    match &cfg.out_dir {
        Some(dir) => {
            write_file(dir, &format!("scan_{kind}.csv"), &scan.to_csv())?;
            write_file(
                dir,
                &format!("scan_{kind}.json"),
                &serde_json::to_string_pretty(scan).context("serialising scan")?,
            )?;
            for m in &cfg.analysis.models {
                write_file(dir, &format!("scan_{kind}_{m}.csv"), &scan.pivot(*m))?;
            }
            for s in series {
                if let Ok(svg) = scan_svg(scan, &s.index_id) {
                    write_file(dir, &format!("scan_{kind}_{}.svg", s.index_id), &svg)?;
                }
            }
        }
        None => {
            for m in &cfg.analysis.models {
                stdout(&format!("# {m}\n{}", scan.pivot(*m)))?;
            }
        }
    }
    Ok(if scan.failures() > 0 {
        Status::PartialScan
    } else {
        Status::Ok
    })
}

fn cmd_scan_filter(a: ScanFilterArgs) -> Result<Status> {
    let file = FileConfig::load(a.run.config.as_deref())?;
    let cfg = resolve(&a.run, &file, CommandDefaults::default())?;
    let filters = a.filter_sizes.or(file.filter_sizes).unwrap_or_else(|| FILTER_GRID.to_vec());
    let series = load_all(&cfg.inputs)?;
    // rho stays at the value calibrated at the base filter size.
    let rho = series
        .iter()
        .zip(&cfg.inputs)
        .map(|(s, p)| match cfg.analysis.rho {
            RhoMode::SampleStd => prepare(s, cfg.analysis.filter_size, RhoMode::SampleStd, cfg.analysis.basis)
                .map(|p| RhoMode::Explicit(p.rho))
                .with_context(|| format!("calibrating rho on {}", p.display())),
            other => Ok(other),
        })
        .collect::<Result<Vec<_>>>()?;
    let scan = scan_filter(&series, &filters, &rho, &cfg.analysis)?;
    finish_scan("filter", &scan, &cfg, &series)
}

fn cmd_scan_rho(a: ScanRhoArgs) -> Result<Status> {
    let file = FileConfig::load(a.run.config.as_deref())?;
    let cfg = resolve(&a.run, &file, CommandDefaults::default())?;
    if a.run.rho.is_some() {
        bail!("--rho conflicts with scan-rho; use --rho-scales");
    }
    let scales = a.rho_scales.or(file.rho_scales).unwrap_or_else(|| RHO_SCALE_GRID.to_vec());
    let series = load_all(&cfg.inputs)?;
    let scan = scan_rho(&series, &scales, &cfg.analysis)?;
    finish_scan("rho", &scan, &cfg, &series)
}

fn cmd_scan_window(a: ScanWindowArgs) -> Result<Status> {
    let file = FileConfig::load(a.run.config.as_deref())?;
    let cfg = resolve(
        &a.run,
        &file,
        CommandDefaults {
            filter_size: 100,
            rho: Some(0.028),
        },
    )?;
    let length = a.window_years.or(file.window_years).unwrap_or(5);
    let step = a.step_years.or(file.step_years).unwrap_or(1);
    let series = load_all(&cfg.inputs)?;
    let scan = scan_window(&series, length, step, &cfg.analysis)?;
    finish_scan("window", &scan, &cfg, &series)
}

fn cmd_gbm(a: GbmArgs) -> Result<Status> {
    let cfg = GbmConfig {
        lambda: a.lambda,
        sigma: a.sigma,
        r0: 0.0,
        rho: a.rho,
        dt: a.dt,
        n_paths: a.paths,
        horizon: a.horizon,
        seed: a.seed,
        crossing: match a.crossing {
            CrossingChoice::Grid => CrossingCheck::Grid,
            CrossingChoice::Bridge => CrossingCheck::BrownianBridge,
        },
    };
    cfg.validate()?;
    let dirs: &[Direction] = match a.direction {
        DirectionChoice::Up => &[Direction::Up],
        DirectionChoice::Down => &[Direction::Down],
        DirectionChoice::Both => &[Direction::Up, Direction::Down],
    };
    let mut samples = Vec::new();
    for &dir in dirs {
        let s = simulate_fht(&cfg, dir)?;
        let name = if dir == Direction::Up { "up" } else { "down" };
        match ks_validate(&s, &cfg, dir) {
            Ok(ks) => println!(
                "{name}: ks_statistic={:.6} n={} censored_fraction={:.6}",
                ks.statistic, ks.n, ks.censored_fraction
            ),
            // Heavy censoring (e.g. no drift toward the barrier) voids the
            // one-sample comparison but not the sample itself.
            Err(e @ (gainloss::Error::ExcessCensoring(_) | gainloss::Error::TooFewSamples { .. })) => println!(
                "{name}: ks_statistic=NA n={} censored_fraction={:.6} ({e})",
                s.tau.len(),
                s.censored_fraction()
            ),
            Err(e) => return Err(e).with_context(|| format!("validating the {name} sample")),
        }
        if let Some(dir) = &a.out_dir {
            write_file(dir, &format!("fht_{name}.csv"), &s.to_csv())?;
        }
        samples.push(s);
    }
    if let [up, down] = samples.as_slice() {
        let d = ks_two_sample(&up.tau, &down.tau);
        let crit = ks_two_sample_critical(up.tau.len(), down.tau.len(), 0.01);
        println!("two-sample: statistic={d:.6} critical_1pct={crit:.6} reject={}", d > crit);
    }
    Ok(Status::Ok)
}

fn cmd_plot(a: PlotArgs) -> Result<Status> {
    if a.inputs.is_empty() {
        bail!("no input files given");
    }
    for path in &a.inputs {
        let text = String::from_utf8(read_bytes(path)?).map_err(|_| anyhow!("{} is not UTF-8", path.display()))?;
        let dir = a
            .out_dir
            .clone()
            .unwrap_or_else(|| path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf));
        let stem = index_id(path);
        if let Ok(report) = FitReport::from_json(&text) {
            let svg = posterior_svg(&report).with_context(|| format!("plotting {}", path.display()))?;
            write_file(&dir, &format!("{stem}.svg"), &svg)?;
        } else if let Ok(scan) = serde_json::from_str::<ScanOutcome>(&text) {
            let mut indices: Vec<&str> = Vec::new();
            for r in &scan.rows {
                if !indices.contains(&r.index.as_str()) {
                    indices.push(&r.index);
                }
            }
            if indices.is_empty() {
                bail!("malformed report: {} holds no scan rows", path.display());
            }
            for idx in indices {
                let svg = scan_svg(&scan, idx).with_context(|| format!("plotting {}", path.display()))?;
                write_file(&dir, &format!("{stem}_{idx}.svg"), &svg)?;
            }
        } else {
            let e = FitReport::from_json(&text).unwrap_err();
            return Err(anyhow!(e)).with_context(|| format!("reading {}", path.display()));
        }
    }
    Ok(Status::Ok)
}
