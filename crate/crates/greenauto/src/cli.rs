//! Command surface: space inspection, pool estimation, the search loop,
//! front selection and trace tooling. Every command is deterministic given
//! its inputs and seeds and writes plain CSV or JSON artifacts.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use crate::error::Error;
use crate::measure::{
    self, extract_energy, read_trace_csv, simulate_trace, trigger_capture, write_trace_csv,
    ClockModel, EvaluationBackend, ExternalBackend, InferenceWindow, TraceProfile,
};
use crate::mopt::{self, SearchWeights, SelectionWeights};
use crate::orchestrator::{
    build_pool, compute_estimates, run_search, write_estimates_csv, CarbonConfig, SearchConfig,
    SearchRun, StoppingCriteria,
};
use crate::proxies::{kendall_tau, PredictorCoefficients};
use crate::rng::keyed_stream;
use crate::space::{decode, enumerate, radix_bound, validate_arch, ArchId, SpaceDef};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

pub const SPACE_FILE_VERSION: u32 = 1;
pub const RUN_ROOT_ENV: &str = "GREENAUTO_RUN_ROOT";

#[derive(Parser)]
#[command(
    name = "greenauto",
    about = "Energy-aware architecture search: enumerate, estimate, search, select, measure",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect or enumerate a search space
    Space {
        #[command(subcommand)]
        action: SpaceAction,
    },
    /// Compute predicted-energy and training-free-score estimates
    Estimate(EstimateArgs),
    /// Run the full search loop against a measurement backend
    Search(SearchArgs),
    /// Pick the best model from a front file
    Select(SelectArgs),
    /// Generate or analyze power traces
    Measure {
        #[command(subcommand)]
        action: MeasureAction,
    },
}

/// Versioned space config file (TOML).
#[derive(Debug, Serialize, Deserialize)]
struct SpaceFile {
    version: u32,
    allowed_widths: Vec<u32>,
    allowed_kernel_sizes: Vec<u32>,
    allowed_strides: Vec<u32>,
    cells_per_stage: u32,
    input_shape: (u32, u32, u32),
}

fn load_space(path: Option<&Path>) -> Result<SpaceDef, Error> {
    let Some(path) = path else {
        return Ok(SpaceDef::desk());
    };
    let text = std::fs::read_to_string(path)?;
    let f: SpaceFile =
        toml::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    if f.version != SPACE_FILE_VERSION {
        return Err(Error::Data(format!(
            "space config version {} (expected {SPACE_FILE_VERSION})",
            f.version
        )));
    }
    let space = SpaceDef {
        allowed_widths: f.allowed_widths,
        allowed_kernel_sizes: f.allowed_kernel_sizes,
        allowed_strides: f.allowed_strides,
        cells_per_stage: f.cells_per_stage,
        input_shape: f.input_shape,
    };
    space.validate()?;
    Ok(space)
}

fn load_coeffs(path: Option<&Path>) -> Result<PredictorCoefficients, Error> {
    match path {
        Some(p) => PredictorCoefficients::load(p),
        None => Ok(PredictorCoefficients::default()),
    }
}

#[derive(Subcommand)]
enum SpaceAction {
    /// Print raw and valid model counts
    Count {
        #[arg(long)]
        space_config: Option<PathBuf>,
    },
    /// Write the valid-architecture index as CSV
    Enumerate {
        #[arg(long)]
        space_config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a single architecture id
    Validate {
        #[arg(long)]
        space_config: Option<PathBuf>,
        #[arg(long)]
        arch_id: u64,
    },
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    space_config: Option<PathBuf>,
    #[arg(long)]
    coeffs: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    naswot_batch: usize,
    /// Keep every n-th valid architecture
    #[arg(long, default_value_t = 1)]
    pool_stride: u64,
    /// Estimation worker threads (default: available parallelism)
    #[arg(long)]
    workers: Option<usize>,
    /// Print rank correlation between predicted and sim-measured energy
    /// over this many sampled architectures
    #[arg(long)]
    tau_check: Option<usize>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Sim,
    ExternalAdapter,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    space_config: Option<PathBuf>,
    #[arg(long)]
    coeffs: Option<PathBuf>,
    /// Run directory (default: <run root>/run_<seed>)
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Continue a previous run directory
    #[arg(long, default_value_t = false)]
    resume: bool,
    #[arg(long, value_enum, default_value_t = BackendKind::Sim)]
    backend: BackendKind,
    /// Command invoked as `<cmd> <model.json> <result.json>` when the
    /// external adapter backend is selected
    #[arg(long)]
    adapter_cmd: Option<String>,
    #[arg(long, default_value_t = 100)]
    init_count: usize,
    #[arg(long, default_value_t = 10)]
    per_iter_count: usize,
    /// Search weight on the energy objective
    #[arg(long, default_value_t = 3.0)]
    ws_energy: f64,
    /// Search weight on the accuracy objective
    #[arg(long, default_value_t = 1.0)]
    ws_accuracy: f64,
    #[arg(long, default_value_t = 1.0)]
    wd_energy: f64,
    #[arg(long, default_value_t = 1.0)]
    wd_accuracy: f64,
    /// Stop once a front member exceeds this measured accuracy...
    #[arg(long, default_value_t = 0.9)]
    stop_accuracy: f64,
    /// ...while measuring below this energy (mJ)
    #[arg(long, default_value_t = 7.0)]
    stop_energy_mj: f64,
    /// Iteration budget (default 100); on --resume this overrides the
    /// budget stored in the run's config snapshot
    #[arg(long)]
    max_iterations: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    pool_stride: u64,
    #[arg(long, default_value_t = 16)]
    naswot_batch: usize,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = 0.4)]
    grid_intensity: f64,
    #[arg(long, default_value_t = 0.0)]
    per_model_training_kwh: f64,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SelectMethod {
    Gd,
    Ws,
}

#[derive(Args)]
struct SelectArgs {
    /// Front CSV: arch_id,accuracy,energy_j,e_norm
    #[arg(long)]
    front: PathBuf,
    #[arg(long, value_enum)]
    method: SelectMethod,
    #[arg(long)]
    wd_energy: Option<f64>,
    #[arg(long)]
    wd_accuracy: Option<f64>,
}

#[derive(Subcommand)]
enum MeasureAction {
    /// Generate a synthetic power trace CSV
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4.0)]
        voltage: f64,
        #[arg(long)]
        active_current: f64,
        #[arg(long, default_value_t = 0.0)]
        idle_current: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_std: f64,
        #[arg(long)]
        window_start: f64,
        #[arg(long)]
        window_end: f64,
        #[arg(long)]
        duration: f64,
        #[arg(long, default_value_t = measure::DEFAULT_SAMPLE_RATE_HZ)]
        sample_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        clock_offset: f64,
        #[arg(long, default_value_t = 0.0)]
        clock_drift_ppm: f64,
        #[arg(long, default_value_t = 0.0)]
        jitter_std: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Extract energy from a trace CSV via trigger capture
    Extract {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        window_start: f64,
        #[arg(long)]
        window_end: f64,
        #[arg(long, default_value_t = 0.0)]
        clock_offset: f64,
        #[arg(long, default_value_t = 0.0)]
        clock_drift_ppm: f64,
        #[arg(long, default_value_t = 0.0)]
        jitter_std: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidSpace(_) | Error::Search(_) => 1,
        Error::Io(_)
        | Error::Data(_)
        | Error::Serde(_)
        | Error::StateVersion { .. }
        | Error::IdOutOfRange { .. }
        | Error::InvalidArch(_)
        | Error::MissingCoefficient(_) => 2,
        _ => 3,
    }
}

/// Parse argv and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // clap handles --help/--version via "errors" that exit 0.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Space { action } => cmd_space(action),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Search(args) => cmd_search(args),
        Command::Select(args) => cmd_select(args),
        Command::Measure { action } => cmd_measure(action),
    }
}

fn cmd_space(action: SpaceAction) -> Result<(), Error> {
    match action {
        SpaceAction::Count { space_config } => {
            let space = load_space(space_config.as_deref())?;
            let valid = enumerate(&space).count();
            println!("raw_count={}", space.raw_count());
            println!("id_bound={}", radix_bound(&space));
            println!("valid_count={valid}");
        }
        SpaceAction::Enumerate { space_config, out } => {
            let space = load_space(space_config.as_deref())?;
            let mut f = std::io::BufWriter::new(std::fs::File::create(&out)?);
            writeln!(f, "arch_id,width_c1,kernel_size,stride,edge_ops")?;
            let mut count = 0usize;
            for (id, a) in enumerate(&space) {
                let ops: Vec<String> =
                    a.topology.ops.iter().map(|o| o.digit().to_string()).collect();
                writeln!(
                    f,
                    "{},{},{},{},{}",
                    id.0,
                    a.config.width_c1,
                    a.config.kernel_size,
                    a.config.stride,
                    ops.join("")
                )?;
                count += 1;
            }
            println!("wrote {count} architectures to {}", out.display());
        }
        SpaceAction::Validate { space_config, arch_id } => {
            let space = load_space(space_config.as_deref())?;
            let a = decode(ArchId(arch_id), &space)?;
            let v = validate_arch(&a, &space);
            match v.reason {
                None => println!("arch {arch_id}: valid"),
                Some(reason) => println!("arch {arch_id}: invalid ({reason})"),
            }
        }
    }
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), Error> {
    let space = load_space(args.space_config.as_deref())?;
    let coeffs = load_coeffs(args.coeffs.as_deref())?;
    let mut cfg = SearchConfig {
        seed: args.seed,
        naswot_batch: args.naswot_batch,
        pool_stride: args.pool_stride,
        ..Default::default()
    };
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    let pool = build_pool(&space, cfg.pool_stride);
    let est = compute_estimates(&space, &coeffs, &pool, &cfg)?;
    write_estimates_csv(&args.out, &est)?;
    println!("wrote {} estimates to {}", est.rows.len(), args.out.display());
    if let Some(n) = args.tau_check {
        let mut backend = measure::sim_backend(space.clone(), coeffs, args.seed)?;
        let step = (est.rows.len() / n.max(1)).max(1);
        let sample: Vec<_> = est.rows.iter().step_by(step).take(n).collect();
        let mut pred = Vec::with_capacity(sample.len());
        let mut meas = Vec::with_capacity(sample.len());
        for r in &sample {
            let a = decode(r.arch_id, &space)?;
            pred.push(r.e_pred_j);
            meas.push(backend.measure_energy(r.arch_id, &a)?.energy_j);
        }
        let tau = kendall_tau(&pred, &meas)?;
        println!("tau_pred_vs_measured={tau:.4} (n={})", sample.len());
    }
    Ok(())
}

fn cmd_search(args: SearchArgs) -> Result<(), Error> {
    let run_dir = match &args.run_dir {
        Some(d) => d.clone(),
        None => {
            let root = std::env::var(RUN_ROOT_ENV).unwrap_or_else(|_| "runs".into());
            Path::new(&root).join(format!("run_{}", args.seed))
        }
    };
    if args.resume {
        let mut run = SearchRun::resume(&run_dir)?;
        if let Some(m) = args.max_iterations {
            run.config.max_iterations = m;
        }
        let coeffs = SearchRun::coeffs_from_snapshot(&run_dir)?;
        let mut backend =
            make_backend(&args, &run.space, &coeffs, run.config.seed, &run_dir)?;
        let report = run.run_to_completion(backend.as_mut())?;
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    let space = load_space(args.space_config.as_deref())?;
    let coeffs = load_coeffs(args.coeffs.as_deref())?;
    let mut config = SearchConfig {
        init_count: args.init_count,
        per_iter_count: args.per_iter_count,
        ws: SearchWeights::new(vec![args.ws_energy, args.ws_accuracy])?,
        wd: SelectionWeights::new(vec![args.wd_energy, args.wd_accuracy])?,
        stopping: StoppingCriteria {
            min_accuracy: args.stop_accuracy,
            max_energy_mj: args.stop_energy_mj,
        },
        max_iterations: args.max_iterations.unwrap_or(100),
        seed: args.seed,
        pool_stride: args.pool_stride,
        naswot_batch: args.naswot_batch,
        carbon: CarbonConfig {
            grid_intensity_kg_per_kwh: args.grid_intensity,
            per_model_training_kwh: args.per_model_training_kwh,
        },
        ..Default::default()
    };
    if let Some(w) = args.workers {
        config.workers = w;
    }
    config.validate()?;
    let mut backend = make_backend(&args, &space, &coeffs, args.seed, &run_dir)?;
    let report = run_search(&space, &coeffs, &config, backend.as_mut(), Some(&run_dir))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn make_backend(
    args: &SearchArgs,
    space: &SpaceDef,
    coeffs: &PredictorCoefficients,
    seed: u64,
    run_dir: &Path,
) -> Result<Box<dyn EvaluationBackend>, Error> {
    match args.backend {
        BackendKind::Sim => Ok(Box::new(measure::sim_backend(space.clone(), coeffs.clone(), seed)?)),
        BackendKind::ExternalAdapter => {
            let cmd = args
                .adapter_cmd
                .clone()
                .ok_or_else(|| Error::Config("--adapter-cmd is required with the external adapter backend".into()))?;
            Ok(Box::new(ExternalBackend::new(cmd, run_dir.join("adapter"), space.clone())?))
        }
    }
}

fn cmd_select(args: SelectArgs) -> Result<(), Error> {
    if args.wd_energy.is_none() || args.wd_accuracy.is_none() {
        eprintln!("notice: missing selection weights default to (1, 1)");
    }
    let wd_e = args.wd_energy.unwrap_or(1.0);
    let wd_a = args.wd_accuracy.unwrap_or(1.0);
    let rows = read_front_csv(&args.front)?;
    let chosen = match args.method {
        SelectMethod::Gd => {
            let front: Vec<mopt::FrontPoint> = rows
                .iter()
                .map(|r| (ArchId(r.0), vec![r.3, -r.1]))
                .collect();
            mopt::best_model_gd(&front, &SelectionWeights::new(vec![wd_e, wd_a])?)?
        }
        SelectMethod::Ws => {
            let entries: Vec<(ArchId, f64, f64)> =
                rows.iter().map(|r| (ArchId(r.0), r.3, r.1)).collect();
            mopt::best_model_ws(&entries, wd_e, wd_a)?
        }
    };
    let r = rows.iter().find(|r| r.0 == chosen.0).unwrap();
    println!("arch_id={} accuracy={} energy_j={}", r.0, r.1, r.2);
    Ok(())
}

/// (arch_id, accuracy, energy_j, e_norm) rows.
fn read_front_csv(path: &Path) -> Result<Vec<(u64, f64, f64, f64)>, Error> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if i == 0 {
            if line.trim() != "arch_id,accuracy,energy_j,e_norm" {
                return Err(Error::Data(format!("line {lineno}: bad front header")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Data(format!("line {lineno}: expected 4 fields")));
        }
        let bad = |what: &str| Error::Data(format!("line {lineno}: invalid {what}"));
        rows.push((
            fields[0].parse().map_err(|_| bad("arch_id"))?,
            fields[1].parse().map_err(|_| bad("accuracy"))?,
            fields[2].parse().map_err(|_| bad("energy_j"))?,
            fields[3].parse().map_err(|_| bad("e_norm"))?,
        ));
    }
    if rows.is_empty() {
        return Err(Error::Data("front file has no rows".into()));
    }
    Ok(rows)
}

fn cmd_measure(action: MeasureAction) -> Result<(), Error> {
    match action {
        MeasureAction::Gen {
            out,
            voltage,
            active_current,
            idle_current,
            noise_std,
            window_start,
            window_end,
            duration,
            sample_rate,
            clock_offset,
            clock_drift_ppm,
            jitter_std,
            seed,
        } => {
            let profile = TraceProfile {
                voltage_v: voltage,
                active_current_a: active_current,
                idle_current_a: idle_current,
                noise_std_a: noise_std,
                active_start_s: window_start,
                active_end_s: window_end,
            };
            let clock = ClockModel {
                offset_s: clock_offset,
                drift_ppm: clock_drift_ppm,
                jitter_std_s: jitter_std,
            };
            let trace = simulate_trace(
                &profile,
                &clock,
                duration,
                sample_rate,
                keyed_stream(seed, 0x9e4).next_u64(),
            )?;
            write_trace_csv(&out, &trace)?;
            println!(
                "wrote {} samples to {} (ground truth {:.9} J)",
                trace.len(),
                out.display(),
                profile.ground_truth_energy_j()
            );
        }
        MeasureAction::Extract {
            trace,
            window_start,
            window_end,
            clock_offset,
            clock_drift_ppm,
            jitter_std,
            seed,
        } => {
            let samples = read_trace_csv(&trace)?;
            let window = InferenceWindow::new(window_start, window_end)?;
            let clock = ClockModel {
                offset_s: clock_offset,
                drift_ppm: clock_drift_ppm,
                jitter_std_s: jitter_std,
            };
            let capture = trigger_capture(&samples, &window, &clock, seed)?;
            let result = extract_energy(&capture.inference_samples(), window.latency_s())?;
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
    }
    Ok(())
}
