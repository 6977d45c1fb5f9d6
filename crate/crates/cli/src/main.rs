use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::{json, Value};

use vitalwave_core::channel_fusion::reports_to_json;
use vitalwave_core::eval::{
    emit_reports, run_sweep, snr_spatial_map, verify_appendix_file, ScenarioGrid,
};
use vitalwave_core::pipeline::{run_pipeline, ProcessOptions};
use vitalwave_core::preprocess::{read_cube_file, write_cube_file};
use vitalwave_core::sim::{synthesize_cube, Coverage, Scenario};
use vitalwave_core::template::default_banks;
use vitalwave_core::{Error, ErrorKind, PipelineId};

/// Minimum fraction of successful sweep trials for a zero exit.
const SWEEP_SUCCESS_FLOOR: f64 = 0.9;

#[derive(Parser, Debug)]
#[command(name = "vitalwave", version, about = "FMCW radar vital-sign toolkit")]
struct Cli {
    /// Worker threads (defaults to logical cores)
    #[arg(long, global = true, env = "VITALWAVE_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a radar cube from a scenario file
    Simulate(SimulateArgs),
    /// Estimate respiration and heart rate from a cube
    Process(ProcessArgs),
    /// Run every method over a scenario grid and write reports
    Sweep(SweepArgs),
    /// Recompute the error cells of a transcribed results table
    VerifyFixture(VerifyArgs),
    /// Per-channel respiration/heart band SNR of a cube
    SnrMap(SnrMapArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario JSON; the default all-coverage scenario when omitted
    #[arg(long)]
    scenario: Option<PathBuf>,

    /// Output .rcube path
    #[arg(long)]
    out: PathBuf,

    /// Override the scenario RNG seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ProcessArgs {
    /// Input .rcube path
    #[arg(long = "in")]
    input: PathBuf,

    /// Processing method: ref1, ref2 or proposed
    #[arg(long, default_value = "proposed")]
    method: PipelineId,

    /// Directory for channel reports and fusion diagnostics
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Scenario grid JSON
    #[arg(long)]
    grid: PathBuf,

    /// Output directory for the report files
    #[arg(long)]
    out: PathBuf,

    /// Comma-separated methods
    #[arg(long, value_delimiter = ',', default_value = "ref1,ref2,proposed")]
    methods: Vec<PipelineId>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Fixture CSV
    #[arg(long)]
    fixture: PathBuf,
}

#[derive(Args, Debug)]
struct SnrMapArgs {
    /// Input .rcube path
    #[arg(long = "in")]
    input: PathBuf,
}

enum Failure {
    Core(Error),
    Sweep(f64),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Core(Error::Json(e))
    }
}

fn print_json(v: &Value) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(v)?) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

/// Prefix io errors with the offending path.
fn at_path(path: &Path) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Io(e) => Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))),
        other => other,
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    Ok(fs::read_to_string(path).map_err(|e| at_path(path)(Error::Io(e)))?)
}

/// Strongest-coupled scatterer region per channel.
fn channel_regions(sc: &Scenario) -> Vec<Value> {
    (0..sc.radar.num_channels())
        .map(|ch| {
            let best = (0..sc.scatterers.len()).max_by(|&a, &b| {
                let g = |k: usize| sc.coupling.gain(ch, k).norm() * sc.scatterers[k].rcs_gain;
                g(a).total_cmp(&g(b))
            });
            best.map_or(Value::Null, |k| json!(sc.scatterers[k].body_region))
        })
        .collect()
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let mut sc = match &args.scenario {
        Some(path) => Scenario::from_json_str(&read_text(path)?)?,
        None => Scenario::default_with(Coverage::All, 0),
    };
    if let Some(seed) = args.seed {
        sc.rng_seed = seed;
    }
    info!("synthesizing {} scatterers", sc.scatterers.len());
    let cube = synthesize_cube(&sc)?;
    write_cube_file(&args.out, &cube).map_err(at_path(&args.out))?;
    info!("wrote {}", args.out.display());
    print_json(&json!({
        "out": args.out,
        "rr_bpm_truth": sc.rr_bpm_truth,
        "hr_bpm_truth": sc.hr_bpm_truth,
        "rng_seed": sc.rng_seed,
        "num_channels": cube.num_channels(),
        "num_chirps": cube.num_chirps,
        "samples_per_chirp": cube.samples_per_chirp,
        "layout": {
            "num_scatterers": sc.scatterers.len(),
            "scatterers": sc.scatterers.iter().map(|s| json!({
                "rest_range_m": s.rest_range_m,
                "body_region": s.body_region,
            })).collect::<Vec<_>>(),
            "channel_regions": channel_regions(&sc),
        },
    }))
}

fn process(args: &ProcessArgs) -> Result<(), Failure> {
    let cube = read_cube_file(&args.input).map_err(at_path(&args.input))?;
    let out = run_pipeline(
        &cube,
        args.method,
        &ProcessOptions::default(),
        default_banks(),
    )?;
    if let Some(dir) = &args.report {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("channel_reports.json"),
            reports_to_json(&out.diagnostics.channel_reports)?,
        )?;
        fs::write(
            dir.join("fusion_diagnostics.json"),
            serde_json::to_string_pretty(&out.diagnostics)?,
        )?;
        info!("diagnostics written to {}", dir.display());
    }
    print_json(&serde_json::to_value(&out.estimate)?)
}

fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let grid: ScenarioGrid = serde_json::from_str(&read_text(&args.grid)?)?;
    let mut methods = args.methods.clone();
    methods.dedup();
    info!(
        "sweeping {} cells x {} methods",
        grid.num_cells(),
        methods.len()
    );
    let records = run_sweep(&grid, &methods, &ProcessOptions::default(), default_banks())?;
    let (summary, files) = emit_reports(&records, &args.out)?;
    print_json(&json!({
        "total_trials": summary.total_trials,
        "failed_trials": summary.failed_trials,
        "success_fraction": summary.success_fraction,
        "files": files,
    }))?;
    if summary.success_fraction < SWEEP_SUCCESS_FLOOR {
        return Err(Failure::Sweep(summary.success_fraction));
    }
    Ok(())
}

fn verify_fixture(args: &VerifyArgs) -> Result<(), Failure> {
    let report = verify_appendix_file(&args.fixture).map_err(at_path(&args.fixture))?;
    print_json(&serde_json::to_value(&report)?)
}

fn snr_map(args: &SnrMapArgs) -> Result<(), Failure> {
    let cube = read_cube_file(&args.input).map_err(at_path(&args.input))?;
    let map = snr_spatial_map(&cube, &ProcessOptions::default())?;
    let rows: Vec<Value> = map
        .iter()
        .enumerate()
        .map(|(ch, p)| json!({ "channel": ch, "snr_b_db": p.snr_b_db, "snr_h_db": p.snr_h_db }))
        .collect();
    print_json(&Value::Array(rows))
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Sweep(frac) => {
            eprintln!("error: only {:.1}% of trials succeeded", 100.0 * frac);
            5
        }
        Failure::Core(e) => match e.kind() {
            ErrorKind::Config => {
                eprintln!("error: {e}");
                2
            }
            ErrorKind::Io => {
                eprintln!("error: {e}");
                3
            }
            ErrorKind::Signal => {
                eprintln!("error in stage {}: {e}", e.stage().unwrap_or("unknown"));
                4
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            warn!("could not size thread pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Process(a) => process(a),
        Command::Sweep(a) => sweep(a),
        Command::VerifyFixture(a) => verify_fixture(a),
        Command::SnrMap(a) => snr_map(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => ExitCode::from(exit_code(&f)),
    }
}
