//! `fracdyn` — batch toolkit for discrete-time fractional-order dynamical
//! networks with unknown inputs.
//!
//! Subcommands: `simulate`, `estimate`, `select-sensors`,
//! `check-observability`, `recover`, `synth`. Set `FRACDYN_LOG=debug` for
//! extra diagnostics on stderr.
//!
//! Exit codes: 0 success, 1 negative domain verdict (not observable /
//! infeasible selection), 2 usage or file errors, 3 numerical failure.

mod formats;
mod plot;
mod synth;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracdyn_core::estimation::one_step_predictions;
use fracdyn_core::fraccore::{g_kernel, simulate_closed_form, simulate_recursive};
use fracdyn_core::numerics::LassoConfig;
use fracdyn_core::observability::{exhaustive_min_sensors, greedy_select, DEFAULT_EXHAUSTIVE_LIMIT};
use fracdyn_core::recovery::{
    recover_joint, recover_projected_ridge, InputRecovery, ObservationStack,
};
use fracdyn_core::{
    build_theta_xi, estimate_alpha, is_perfectly_observable, run_em, EmConfig, FractionalOrders,
    SensorSet, SystemModel, Trajectory,
};
use nalgebra::{DMatrix, DVector};

use formats::{
    numbered_channels, parse_float_list, parse_sensor_spec, read_csv, read_matrix, read_model,
    read_sensors, write_csv, write_matrix, write_model, write_sensors, SensorFile,
};

/// Top-level CLI errors, mapped onto exit codes in `main`.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    Io {
        path: String,
        message: String,
    },
    Core(fracdyn_core::Error),
}

impl From<fracdyn_core::Error> for CliError {
    fn from(e: fracdyn_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Parse {
                path,
                line,
                message,
            } => write!(f, "{path}:{line}: {message}"),
            CliError::Io { path, message } => write!(f, "{path}: {message}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } | CliError::Io { .. } => 2,
            CliError::Core(e) => match e {
                fracdyn_core::Error::Numerical(_)
                | fracdyn_core::Error::LassoNoConvergence { .. }
                | fracdyn_core::Error::EStepFailed { .. } => 3,
                _ => 2,
            },
        }
    }
}

fn debug_enabled() -> bool {
    std::env::var("FRACDYN_LOG")
        .map(|v| v.eq_ignore_ascii_case("debug"))
        .unwrap_or(false)
}

fn debug(message: impl AsRef<str>) {
    if debug_enabled() {
        eprintln!("fracdyn[debug]: {}", message.as_ref());
    }
}

fn warn(message: impl AsRef<str>) {
    eprintln!("fracdyn[warn]: {}", message.as_ref());
}

#[derive(Parser)]
#[command(
    name = "fracdyn",
    about = "Fractional-order dynamical networks with unknown inputs: simulate, estimate, select sensors, recover",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a model and write the trajectory CSV
    Simulate(SimulateArgs),
    /// Fit the system matrix and sparse unknown inputs from a data CSV
    Estimate(EstimateArgs),
    /// Greedily pick a dedicated-sensor set achieving perfect observability
    SelectSensors(SelectSensorsArgs),
    /// Report the perfect-observability rank condition for a sensor set
    CheckObservability(CheckArgs),
    /// Recover the initial state and inputs from partial observations
    Recover(RecoverArgs),
    /// Generate a deterministic synthetic model + trajectory benchmark
    Synth(SynthArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model file
    #[arg(long)]
    model: PathBuf,
    /// Number of simulated samples K
    #[arg(long, value_name = "K")]
    horizon: usize,
    /// Inputs CSV with p channels and at least K-1 rows
    #[arg(long, conflicts_with = "impulses")]
    inputs: Option<PathBuf>,
    /// Sparse impulses, e.g. '5:1:2.0,20:2:-3.5' (step:channel:value,
    /// steps 0-based, channels 1-based)
    #[arg(long)]
    impulses: Option<String>,
    /// Initial state as a comma list (default: zeros)
    #[arg(long)]
    x0: Option<String>,
    /// Output trajectory CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Data CSV: one column per state channel
    #[arg(long)]
    data: PathBuf,
    /// Input coupling matrix B (whitespace-separated text, n rows)
    #[arg(long)]
    coupling: PathBuf,
    /// Sparsity weight lambda (penalty is 2*sigma2*lambda)
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Noise variance sigma^2
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Fractional-difference truncation depth J
    #[arg(long, value_name = "J", default_value_t = 64)]
    trunc: usize,
    /// Maximum E/M iterations
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    /// Relative objective-change tolerance
    #[arg(long, default_value_t = 1e-6)]
    objective_tol: f64,
    /// Known fractional orders as a comma list (skips estimation)
    #[arg(long, conflicts_with = "scale_range")]
    alpha: Option<String>,
    /// Wavelet level range 'min,max' for order estimation
    #[arg(long)]
    scale_range: Option<String>,
    /// Output prefix: writes PREFIX.model, PREFIX_inputs.csv, PREFIX_trace.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectSensorsArgs {
    /// Model file
    #[arg(long)]
    model: PathBuf,
    /// Observation horizon K
    #[arg(long, value_name = "K")]
    horizon: usize,
    /// Also run exhaustive enumeration (small n only) and report the ratio
    #[arg(long)]
    exhaustive: bool,
    /// Output prefix: writes PREFIX_sensors.txt, PREFIX_marginals.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    /// Model file
    #[arg(long)]
    model: PathBuf,
    /// Observation horizon K
    #[arg(long, value_name = "K")]
    horizon: usize,
    /// Sensor list '1,3,5' (1-based) or 'all'
    #[arg(long, conflicts_with = "sensors_file")]
    sensors: Option<String>,
    /// Sensor-set file written by select-sensors
    #[arg(long)]
    sensors_file: Option<PathBuf>,
}

#[derive(Args)]
struct RecoverArgs {
    /// Model file
    #[arg(long)]
    model: PathBuf,
    /// Sensor list '1,3,5' (1-based) or 'all'
    #[arg(long, conflicts_with = "sensors_file")]
    sensors: Option<String>,
    /// Sensor-set file written by select-sensors
    #[arg(long)]
    sensors_file: Option<PathBuf>,
    /// Observations CSV shaped K x |S|
    #[arg(long)]
    obs: PathBuf,
    /// Optional horizon cross-check against the observation row count
    #[arg(long, value_name = "K")]
    horizon: Option<usize>,
    /// Recovery method
    #[arg(long, default_value = "joint", value_parser = ["joint", "ridge"])]
    method: String,
    /// Ridge regularization weight (ridge method only)
    #[arg(long)]
    epsilon: Option<f64>,
    /// Recover inputs with a sparsity-enforcing solve instead of least squares
    #[arg(long)]
    sparse_inputs: bool,
    /// l1 penalty for --sparse-inputs
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    /// Ground-truth initial state CSV (one row) for --plot
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write PREFIX_overlay.svg comparing actual vs recovered x0
    #[arg(long, requires = "truth")]
    plot: bool,
    /// Output prefix: writes PREFIX_x0.csv, PREFIX_inputs.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// RNG seed; identical seeds and flags give identical bytes
    #[arg(long)]
    seed: u64,
    /// State count n
    #[arg(long, default_value_t = 8)]
    states: usize,
    /// Input count p (p < n)
    #[arg(long, default_value_t = 2)]
    input_count: usize,
    /// Trajectory length T
    #[arg(long, default_value_t = 256)]
    samples: usize,
    /// Fraction of input entries carrying an impulse
    #[arg(long, default_value_t = 0.02)]
    density: f64,
    /// Impulse magnitude scale
    #[arg(long, default_value_t = 5.0)]
    amplitude: f64,
    /// Observation SNR in dB (omit for noiseless states)
    #[arg(long)]
    snr_db: Option<f64>,
    /// Output prefix: writes PREFIX.model, PREFIX_states.csv, PREFIX_inputs.csv
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::SelectSensors(args) => cmd_select_sensors(args),
        Command::CheckObservability(args) => cmd_check_observability(args),
        Command::Recover(args) => cmd_recover(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("fracdyn: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn ensure_distinct_paths(paths: &[&Path]) -> Result<(), CliError> {
    for (i, a) in paths.iter().enumerate() {
        for b in paths.iter().skip(i + 1) {
            if a == b {
                return Err(CliError::Usage(format!(
                    "paths must be distinct: '{}' appears twice",
                    a.display()
                )));
            }
        }
    }
    Ok(())
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

fn warn_on_extreme_orders(model: &SystemModel) {
    for (i, alpha) in model.orders().as_vector().iter().enumerate() {
        if *alpha > 2.0 {
            warn(format!(
                "fractional order alpha_{} = {alpha} is above 2; estimates usually land in (0, 1.5)",
                i + 1
            ));
        }
    }
}

fn load_sensors(
    spec: &Option<String>,
    file: &Option<PathBuf>,
    n: usize,
) -> Result<SensorSet, CliError> {
    match (spec, file) {
        (Some(spec), None) => parse_sensor_spec(spec, n),
        (None, Some(path)) => {
            let parsed = read_sensors(path)?;
            SensorSet::new(parsed.indices, n).map_err(CliError::from)
        }
        (None, None) => Err(CliError::Usage(
            "one of --sensors or --sensors-file is required".into(),
        )),
        (Some(_), Some(_)) => unreachable!("clap forbids the combination"),
    }
}

fn parse_impulses(spec: &str, steps: usize, p: usize) -> Result<DMatrix<f64>, CliError> {
    let mut inputs = DMatrix::zeros(steps, p);
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let fields: Vec<&str> = part.split(':').collect();
        if fields.len() != 3 {
            return Err(CliError::Usage(format!(
                "impulse '{part}' must be step:channel:value"
            )));
        }
        let step: usize = fields[0]
            .parse()
            .map_err(|_| CliError::Usage(format!("impulse step '{}' is not a count", fields[0])))?;
        let channel: usize = fields[1]
            .parse()
            .map_err(|_| CliError::Usage(format!("impulse channel '{}' is not a count", fields[1])))?;
        let value: f64 = fields[2]
            .parse()
            .map_err(|_| CliError::Usage(format!("impulse value '{}' is not a number", fields[2])))?;
        if step >= steps {
            return Err(CliError::Usage(format!(
                "impulse step {step} is beyond the last input step {}",
                steps.saturating_sub(1)
            )));
        }
        if channel == 0 || channel > p {
            return Err(CliError::Usage(format!(
                "impulse channel {channel} out of range 1..={p}"
            )));
        }
        inputs[(step, channel - 1)] = value;
    }
    Ok(inputs)
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8, CliError> {
    let mut in_paths: Vec<&Path> = vec![&args.model, &args.out];
    if let Some(p) = &args.inputs {
        in_paths.push(p);
    }
    ensure_distinct_paths(&in_paths)?;
    if args.horizon == 0 {
        return Err(CliError::Usage("--horizon must be at least 1".into()));
    }

    let model_file = read_model(&args.model)?;
    let model = &model_file.model;
    debug(format!(
        "model schema {}; notes: {}",
        model_file.schema_version,
        if model_file.notes.is_empty() { "(none)" } else { &model_file.notes }
    ));
    warn_on_extreme_orders(model);
    let steps = args.horizon.saturating_sub(1).max(1);

    let inputs = match (&args.inputs, &args.impulses) {
        (Some(path), None) => {
            let series = read_csv(path)?;
            if series.values.ncols() != model.p() {
                return Err(CliError::Usage(format!(
                    "inputs CSV has {} channels but the model expects p = {}",
                    series.values.ncols(),
                    model.p()
                )));
            }
            series.values
        }
        (None, Some(spec)) => parse_impulses(spec, steps, model.p())?,
        (None, None) => DMatrix::zeros(steps, model.p()),
        (Some(_), Some(_)) => unreachable!("clap forbids the combination"),
    };

    let x0 = match &args.x0 {
        Some(spec) => {
            let values = parse_float_list(spec)?;
            if values.len() != model.n() {
                return Err(CliError::Usage(format!(
                    "--x0 has {} entries but the model has n = {}",
                    values.len(),
                    model.n()
                )));
            }
            DVector::from_vec(values)
        }
        None => DVector::zeros(model.n()),
    };

    let trajectory = simulate_recursive(model, &x0, &inputs, args.horizon)?;
    let kernel = g_kernel(model, args.horizon)?;
    let closed = simulate_closed_form(&kernel, &x0, &inputs, args.horizon)?;
    let deviation = (trajectory.states() - closed.states()).abs().max();
    println!("closed-form cross-check max deviation: {deviation:.3e}");

    write_csv(
        &args.out,
        &numbered_channels("x", model.n()),
        trajectory.states(),
        None,
    )?;
    debug(format!("trajectory written to {}", args.out.display()));
    Ok(0)
}

fn rmse(residual: &DMatrix<f64>) -> f64 {
    (residual.norm_squared() / residual.len() as f64).sqrt()
}

fn cmd_estimate(args: EstimateArgs) -> Result<u8, CliError> {
    let out_model = suffixed(&args.out, ".model");
    let out_inputs = suffixed(&args.out, "_inputs.csv");
    let out_trace = suffixed(&args.out, "_trace.csv");
    ensure_distinct_paths(&[
        args.data.as_path(),
        args.coupling.as_path(),
        &out_model,
        &out_inputs,
        &out_trace,
    ])?;

    let series = read_csv(&args.data)?;
    let n = series.values.ncols();
    if series.values.nrows() < 2 {
        return Err(CliError::Usage("data needs at least 2 samples".into()));
    }
    debug(format!(
        "data: {} samples x {n} channels ({}){}",
        series.values.nrows(),
        series.channels.join(","),
        match series.sample_rate {
            Some(hz) => format!(", {hz} Hz"),
            None => String::new(),
        }
    ));
    let coupling = read_matrix(&args.coupling)?;
    if coupling.nrows() != n {
        return Err(CliError::Usage(format!(
            "coupling matrix has {} rows but the data has {n} channels",
            coupling.nrows()
        )));
    }
    let trajectory = Trajectory::from_states(series.values.clone())?;

    let alpha = match (&args.alpha, &args.scale_range) {
        (Some(spec), _) => {
            let values = parse_float_list(spec)?;
            if values.len() != n {
                return Err(CliError::Usage(format!(
                    "--alpha has {} entries but the data has {n} channels",
                    values.len()
                )));
            }
            Some(FractionalOrders::new_relaxed(values)?)
        }
        (None, Some(range_spec)) => {
            let range = parse_float_list(range_spec)?;
            if range.len() != 2 {
                return Err(CliError::Usage("--scale-range must be 'min,max'".into()));
            }
            let est = estimate_alpha(&series.values, (range[0] as usize, range[1] as usize))?;
            Some(est.orders)
        }
        (None, None) => None,
    };

    let cfg = EmConfig {
        lambda: args.lambda,
        sigma2: args.sigma2,
        max_iterations: args.max_iter,
        objective_tol: args.objective_tol,
        truncation: args.trunc,
        lasso: LassoConfig::default(),
    };
    let fit = run_em(&trajectory, &coupling, &cfg, alpha.as_ref())?;
    if !fit.converged {
        warn(format!(
            "estimation hit the iteration cap ({}) before the objective settled",
            cfg.max_iterations
        ));
    }

    // error ratio: one-step RMSE of the fitted model with inputs vs the
    // no-input fit on the same orders
    let no_input_cfg = EmConfig {
        lambda: f64::INFINITY,
        max_iterations: 1,
        ..cfg.clone()
    };
    let baseline = run_em(&trajectory, &coupling, &no_input_cfg, Some(&fit.orders))?;
    let truncation = cfg.truncation.min(trajectory.len());
    let actual = series.values.rows(1, series.values.nrows() - 1).into_owned();

    let with_model = SystemModel::new(fit.orders.clone(), fit.a_hat.clone(), coupling.clone())?;
    let with_pred = one_step_predictions(&with_model, &series.values, &fit.u_hat, truncation)?;
    let rmse_with = rmse(&(&actual - &with_pred));

    let base_model = SystemModel::new(fit.orders.clone(), baseline.a_hat.clone(), coupling.clone())?;
    let base_pred = one_step_predictions(&base_model, &series.values, &baseline.u_hat, truncation)?;
    let rmse_without = rmse(&(&actual - &base_pred));

    let ratio = if rmse_without > 0.0 {
        rmse_with / rmse_without
    } else {
        1.0
    };
    println!("one-step RMSE with inputs: {rmse_with:.6e}");
    println!("one-step RMSE without inputs: {rmse_without:.6e}");
    println!("error ratio (with / without): {ratio:.6}");
    println!(
        "converged: {} after {} iterations",
        fit.converged, fit.iterations_run
    );

    let notes = format!(
        "fitted by fracdyn estimate; lambda={}; sigma2={}; trunc={}; iterations={}; converged={}",
        args.lambda, args.sigma2, truncation, fit.iterations_run, fit.converged
    );
    write_model(&out_model, &with_model, &notes)?;
    write_csv(
        &out_inputs,
        &numbered_channels("u", coupling.ncols()),
        &fit.u_hat,
        series.sample_rate,
    )?;
    let trace = DMatrix::from_fn(fit.objective_trace.len(), 2, |i, j| {
        if j == 0 {
            i as f64
        } else {
            fit.objective_trace[i]
        }
    });
    write_csv(
        &out_trace,
        &["iteration".to_string(), "objective".to_string()],
        &trace,
        None,
    )?;
    Ok(0)
}

fn cmd_select_sensors(args: SelectSensorsArgs) -> Result<u8, CliError> {
    let out_sensors = suffixed(&args.out, "_sensors.txt");
    let out_marginals = suffixed(&args.out, "_marginals.csv");
    ensure_distinct_paths(&[args.model.as_path(), &out_sensors, &out_marginals])?;
    if args.horizon == 0 {
        return Err(CliError::Usage("--horizon must be at least 1".into()));
    }

    let model_file = read_model(&args.model)?;
    let model = &model_file.model;
    let result = greedy_select(model, args.horizon)?;

    let achieved = result.selected.achieved_rank().unwrap_or(0);
    println!(
        "greedy selection: {} of {} sensors, rank {achieved} / target {}",
        result.selected.len(),
        model.n(),
        result.rank_target
    );
    let printable: Vec<String> = result
        .selected
        .indices()
        .iter()
        .map(|i| (i + 1).to_string())
        .collect();
    println!("sensors (1-based): {}", printable.join(","));
    if !result.feasible {
        warn("target rank is unreachable even with every sensor");
    }

    write_sensors(
        &out_sensors,
        &SensorFile {
            indices: result.selected.indices().to_vec(),
            achieved_rank: achieved,
            target_rank: result.rank_target,
            feasible: result.feasible,
        },
    )?;

    let mut history_rows = Vec::with_capacity(result.marginal_history.len() * 4);
    let mut rank_after = 0usize;
    for (step, (sensor, gain)) in result.marginal_history.iter().enumerate() {
        rank_after += gain;
        history_rows.extend([
            (step + 1) as f64,
            (sensor + 1) as f64,
            *gain as f64,
            rank_after as f64,
        ]);
    }
    let history = DMatrix::from_row_slice(result.marginal_history.len(), 4, &history_rows);
    write_csv(
        &out_marginals,
        &[
            "step".to_string(),
            "sensor".to_string(),
            "gain".to_string(),
            "rank_after".to_string(),
        ],
        &history,
        None,
    )?;

    if args.exhaustive {
        match exhaustive_min_sensors(model, args.horizon, DEFAULT_EXHAUSTIVE_LIMIT)? {
            Some(best) => {
                let optimal: Vec<String> =
                    best.indices().iter().map(|i| (i + 1).to_string()).collect();
                let ratio = result.selected.len() as f64 / best.len() as f64;
                println!("exhaustive optimum: {} sensors ({})", best.len(), optimal.join(","));
                println!("greedy/optimal size ratio: {ratio:.4}");
                let out_optimal = suffixed(&args.out, "_optimal.txt");
                write_sensors(
                    &out_optimal,
                    &SensorFile {
                        indices: best.indices().to_vec(),
                        achieved_rank: best.achieved_rank().unwrap_or(0),
                        target_rank: result.rank_target,
                        feasible: true,
                    },
                )?;
            }
            None => println!("exhaustive search confirms the target rank is unreachable"),
        }
    }

    Ok(if result.feasible { 0 } else { 1 })
}

fn cmd_check_observability(args: CheckArgs) -> Result<u8, CliError> {
    if args.horizon == 0 {
        return Err(CliError::Usage("--horizon must be at least 1".into()));
    }
    let model_file = read_model(&args.model)?;
    let model = &model_file.model;
    let sensors = load_sensors(&args.sensors, &args.sensors_file, model.n())?;

    let (observable, report) = is_perfectly_observable(model, &sensors, args.horizon)?;
    let target = model.n() + (args.horizon - 1) * model.p();
    println!(
        "rank {} / target {target} -> {}",
        report.rank,
        if observable {
            "perfectly observable"
        } else {
            "NOT perfectly observable"
        }
    );
    let tail_len = report.singular_values.len().min(4);
    if tail_len > 0 {
        let tail: Vec<String> = report.singular_values[report.singular_values.len() - tail_len..]
            .iter()
            .map(|v| format!("{v:.3e}"))
            .collect();
        println!("singular-value tail: {}", tail.join(" "));
    }
    debug(format!("rank tolerance {:.3e}", report.tolerance_used));
    Ok(if observable { 0 } else { 1 })
}

fn cmd_recover(args: RecoverArgs) -> Result<u8, CliError> {
    let out_x0 = suffixed(&args.out, "_x0.csv");
    let out_inputs = suffixed(&args.out, "_inputs.csv");
    let mut paths: Vec<&Path> = vec![args.model.as_path(), args.obs.as_path(), &out_x0, &out_inputs];
    if let Some(t) = &args.truth {
        paths.push(t);
    }
    ensure_distinct_paths(&paths)?;

    let model_file = read_model(&args.model)?;
    let model = &model_file.model;
    let sensors = load_sensors(&args.sensors, &args.sensors_file, model.n())?;

    let obs_csv = read_csv(&args.obs)?;
    if obs_csv.values.ncols() != sensors.len() {
        return Err(CliError::Usage(format!(
            "observations have {} columns but the sensor set has {}",
            obs_csv.values.ncols(),
            sensors.len()
        )));
    }
    let horizon = obs_csv.values.nrows();
    if horizon == 0 {
        return Err(CliError::Usage("observations are empty".into()));
    }
    if let Some(k) = args.horizon {
        if k != horizon {
            return Err(CliError::Usage(format!(
                "--horizon {k} does not match the {horizon} observation rows"
            )));
        }
    }

    let pair = build_theta_xi(model, &sensors, horizon)?;
    let obs = ObservationStack::from_rows(&obs_csv.values, sensors.clone())?;

    let result = match args.method.as_str() {
        "joint" => recover_joint(&pair, &obs)?,
        "ridge" => {
            let input_recovery = if args.sparse_inputs {
                InputRecovery::Lasso(LassoConfig::new(args.lambda))
            } else {
                InputRecovery::LeastSquares
            };
            recover_projected_ridge(&pair, &obs, args.epsilon, input_recovery)?
        }
        other => return Err(CliError::Usage(format!("unknown method '{other}'"))),
    };

    println!("method: {:?}", result.method);
    println!("residual norm: {:.6e}", result.residual_norm);
    println!(
        "rank {} (target {}), smallest retained singular value {:.3e}",
        result.rank,
        model.n() + horizon.saturating_sub(1) * model.p(),
        result.min_retained_singular_value
    );
    if result.rank_deficient {
        warn("system is rank deficient: recovered values are a minimum-norm representative, not unique");
    }

    let x0_row = DMatrix::from_fn(1, model.n(), |_, j| result.x0[j]);
    write_csv(&out_x0, &numbered_channels("x", model.n()), &x0_row, None)?;
    write_csv(
        &out_inputs,
        &numbered_channels("u", model.p()),
        &result.inputs,
        None,
    )?;

    if args.plot {
        let truth_path = args.truth.as_ref().expect("clap requires --truth");
        let truth = read_csv(truth_path)?;
        if truth.values.nrows() != 1 || truth.values.ncols() != model.n() {
            return Err(CliError::Usage(format!(
                "truth CSV must be one row of {} values",
                model.n()
            )));
        }
        let actual: Vec<f64> = truth.values.row(0).iter().copied().collect();
        let recovered: Vec<f64> = result.x0.iter().copied().collect();
        let out_svg = suffixed(&args.out, "_overlay.svg");
        plot::write_overlay(
            &out_svg,
            "initial state: actual vs recovered",
            "actual",
            &actual,
            "recovered",
            &recovered,
        )?;
        let max_err = actual
            .iter()
            .zip(&recovered)
            .map(|(a, r)| (a - r).abs())
            .fold(0.0_f64, f64::max);
        println!("max abs error vs truth: {max_err:.6e}");
    }

    Ok(0)
}

fn cmd_synth(args: SynthArgs) -> Result<u8, CliError> {
    let out_model = suffixed(&args.out, ".model");
    let out_states = suffixed(&args.out, "_states.csv");
    let out_inputs = suffixed(&args.out, "_inputs.csv");
    let out_coupling = suffixed(&args.out, "_coupling.txt");
    ensure_distinct_paths(&[&out_model, &out_states, &out_inputs, &out_coupling])?;

    let spec = synth::SynthSpec {
        seed: args.seed,
        states: args.states,
        input_count: args.input_count,
        samples: args.samples,
        density: args.density,
        amplitude: args.amplitude,
        snr_db: args.snr_db,
    };
    let (model, trajectory) = synth::generate(&spec)?;

    let notes = format!(
        "generated by fracdyn synth; seed={}; states={}; input_count={}; samples={}; density={}; amplitude={}{}",
        args.seed,
        args.states,
        args.input_count,
        args.samples,
        args.density,
        args.amplitude,
        match args.snr_db {
            Some(db) => format!("; snr_db={db}"),
            None => String::new(),
        }
    );
    write_model(&out_model, &model, &notes)?;
    write_csv(
        &out_states,
        &numbered_channels("x", model.n()),
        trajectory.states(),
        None,
    )?;
    write_csv(
        &out_inputs,
        &numbered_channels("u", model.p()),
        trajectory.inputs(),
        None,
    )?;
    write_matrix(&out_coupling, model.b())?;
    println!(
        "synthetic benchmark written: {} states, {} inputs, {} samples (seed {})",
        model.n(),
        model.p(),
        trajectory.len(),
        args.seed
    );
    Ok(0)
}
