//! `xlmd` — simulate exact constrained molecular dynamics and its
//! extended-Lagrangian relaxation, and measure how the relaxation converges
//! as the fictitious latent mass shrinks.
//!
//! Every command emits CSV (to stdout or `--out`) with the fully resolved
//! configuration echoed as `#`-prefixed header comments, so artifacts are
//! self-describing and byte-reproducible. `--threads` and `--out` are
//! deliberately not echoed: neither influences any numerical value, and
//! output bytes must not depend on the worker count.
//!
//! Exit codes: 0 success, 1 numerical failure (blow-up, lost positive
//! definiteness), 2 usage error.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use xlmd::analysis::{
    convergence_study, default_eps_grid, energy_drift, homogeneous_flow_map, write_convergence_csv,
    write_plot_data, IntegratorKind, PositionTrajectory,
};
use xlmd::dynamics::{
    extended_csv_row, make_initial_condition, phase_csv_row, simulate_exact, simulate_xlmd,
    stability_report, trajectory_csv_header, IcKind, PhaseState, SimConfig,
};
use xlmd::fmt::sig17;
use xlmd::model::{validate_derivatives, BuiltinModel, Model};

#[derive(Parser)]
#[command(
    name = "xlmd",
    version,
    about = "Exact constrained MD vs extended-Lagrangian (XLMD) relaxation: \
             trajectories, convergence studies, and diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one trajectory and write sampled CSV rows
    Run(RunArgs),
    /// Sweep the fictitious mass, co-simulate against the exact dynamics,
    /// and fit convergence orders
    Converge(ConvergeArgs),
    /// Compare the scalar fast-system flow map against its leading-order
    /// oscillatory prediction
    Flowmap(FlowmapArgs),
    /// Measure the maximum energy drift along one trajectory
    Energy(EnergyArgs),
    /// Validate model derivatives against central finite differences
    Check(CheckArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    /// 3-atom / 20-latent anharmonic benchmark system
    #[value(name = "toy")]
    Toy,
    /// 1-atom / 1-latent system with constant coupling coefficients
    #[value(name = "constant")]
    Constant,
    /// 1-atom / 1-latent system with position-dependent coupling
    #[value(name = "scalar1d")]
    Scalar1d,
}

impl ModelArg {
    fn instantiate(self) -> Box<dyn Model> {
        match self {
            ModelArg::Toy => BuiltinModel::Toy.instantiate(),
            ModelArg::Constant => BuiltinModel::ConstantCoupling.instantiate(),
            ModelArg::Scalar1d => BuiltinModel::Scalar1d.instantiate(),
        }
    }

    fn label(self) -> &'static str {
        match self {
            ModelArg::Toy => "toy",
            ModelArg::Constant => "constant",
            ModelArg::Scalar1d => "scalar1d",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum IcArg {
    /// Latent position and velocity both track the constrained solution
    #[value(name = "optimal")]
    Optimal,
    /// Latent position on the constraint, latent velocity zero
    #[value(name = "compatible")]
    Compatible,
    /// Latent position displaced off the constraint
    #[value(name = "incompatible")]
    Incompatible,
}

impl IcArg {
    fn kind(self) -> IcKind {
        match self {
            IcArg::Optimal => IcKind::OptimallyCompatible,
            IcArg::Compatible => IcKind::Compatible,
            IcArg::Incompatible => IcKind::Incompatible,
        }
    }

    fn label(self) -> &'static str {
        match self {
            IcArg::Optimal => "optimal",
            IcArg::Compatible => "compatible",
            IcArg::Incompatible => "incompatible",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum IntegratorArg {
    /// Exact dynamics: one constraint solve per force evaluation
    #[value(name = "exact")]
    Exact,
    /// Extended dynamics: latent variable carries fictitious mass epsilon
    #[value(name = "xlmd")]
    Xlmd,
}

impl IntegratorArg {
    fn label(self) -> &'static str {
        match self {
            IntegratorArg::Exact => "exact",
            IntegratorArg::Xlmd => "xlmd",
        }
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("not a number: {e}"))?;
    if !v.is_finite() || v <= 0.0 {
        return Err(format!("must be positive and finite, got {v}"));
    }
    Ok(v)
}

fn parse_non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("not a number: {e}"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("must be non-negative and finite, got {v}"));
    }
    Ok(v)
}

fn parse_finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("not a number: {e}"))?;
    if !v.is_finite() {
        return Err(format!("must be finite, got {v}"));
    }
    Ok(v)
}

#[derive(Args)]
struct RunArgs {
    /// Built-in system to simulate
    #[arg(long, value_enum, default_value_t = ModelArg::Toy)]
    model: ModelArg,
    /// Fictitious latent mass (XLMD integrator only)
    #[arg(long, value_parser = parse_positive, allow_negative_numbers = true, default_value = "1.0")]
    epsilon: f64,
    /// Latent initial-condition kind (XLMD integrator only)
    #[arg(long, value_enum, default_value_t = IcArg::Compatible)]
    ic: IcArg,
    /// Integration step size
    #[arg(long, value_parser = parse_positive, allow_negative_numbers = true, default_value = "1e-5")]
    dt: f64,
    /// Final simulated time
    #[arg(long = "t-final", value_parser = parse_non_negative, allow_negative_numbers = true, default_value = "5.0")]
    t_final: f64,
    /// Emit every n-th step (step 0 and the final step always included)
    #[arg(long = "sample-stride", value_parser = clap::value_parser!(u64).range(1..), default_value = "100")]
    sample_stride: u64,
    /// Which dynamics to propagate
    #[arg(long, value_enum, default_value_t = IntegratorArg::Xlmd)]
    integrator: IntegratorArg,
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergeArgs {
    /// Built-in system to study
    #[arg(long, value_enum, default_value_t = ModelArg::Toy)]
    model: ModelArg,
    /// Comma-separated fictitious-mass grid (default: 9 points, geometric
    /// from 1e-2 down to 1e-4)
    #[arg(long = "eps-grid", value_delimiter = ',', value_parser = parse_positive, allow_negative_numbers = true)]
    eps_grid: Option<Vec<f64>>,
    /// Latent initial-condition kind
    #[arg(long, value_enum, default_value_t = IcArg::Compatible)]
    ic: IcArg,
    /// Shared co-simulation step size
    #[arg(long, value_parser = parse_positive, allow_negative_numbers = true, default_value = "1e-5")]
    dt: f64,
    /// Final simulated time
    #[arg(long = "t-final", value_parser = parse_non_negative, allow_negative_numbers = true, default_value = "5.0")]
    t_final: f64,
    /// Worker threads (default: one per grid point, capped at hardware
    /// parallelism; never affects output bytes)
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write `epsilon,err_r,err_p,err_x` in ascending epsilon here
    #[arg(long = "plot-data")]
    plot_data: Option<PathBuf>,
}

#[derive(Args)]
struct FlowmapArgs {
    /// Built-in system (must have a one-dimensional latent side)
    #[arg(long, value_enum, default_value_t = ModelArg::Scalar1d)]
    model: ModelArg,
    /// Fictitious latent mass for the background trajectory and the fast
    /// system
    #[arg(long, value_parser = parse_positive, allow_negative_numbers = true, default_value = "1e-2")]
    epsilon: f64,
    /// Latent initial-condition kind for the background trajectory
    #[arg(long, value_enum, default_value_t = IcArg::Compatible)]
    ic: IcArg,
    /// Step size of the background trajectory and the fast-system solve
    #[arg(long, value_parser = parse_positive, allow_negative_numbers = true, default_value = "2e-4")]
    dt: f64,
    /// Final time of the background trajectory
    #[arg(long = "t-final", value_parser = parse_non_negative, allow_negative_numbers = true, default_value = "1.0")]
    t_final: f64,
    /// Start of the flow-map window (snapped to the sample grid)
    #[arg(long, value_parser = parse_non_negative, allow_negative_numbers = true, default_value = "0.0")]
    s: f64,
    /// End of the flow-map window (default: the trajectory end)
    #[arg(long, value_parser = parse_non_negative, allow_negative_numbers = true)]
    t: Option<f64>,
    /// Initial displacement of the fast variable (the prediction assumes 0)
    #[arg(long, value_parser = parse_finite, allow_negative_numbers = true, default_value = "0.0")]
    eta0: f64,
    /// Initial velocity of the fast variable
    #[arg(long, value_parser = parse_finite, allow_negative_numbers = true, default_value = "1.0")]
    xi0: f64,
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnergyArgs {
    /// Built-in system to measure
    #[arg(long, value_enum, default_value_t = ModelArg::Toy)]
    model: ModelArg,
    /// Fictitious latent mass (XLMD integrator only)
    #[arg(long, value_parser = parse_positive, allow_negative_numbers = true, default_value = "1.0")]
    epsilon: f64,
    /// Latent initial-condition kind (XLMD integrator only)
    #[arg(long, value_enum, default_value_t = IcArg::Compatible)]
    ic: IcArg,
    /// Integration step size
    #[arg(long, value_parser = parse_positive, allow_negative_numbers = true, default_value = "1e-5")]
    dt: f64,
    /// Final simulated time
    #[arg(long = "t-final", value_parser = parse_non_negative, allow_negative_numbers = true, default_value = "5.0")]
    t_final: f64,
    /// Which dynamics to propagate
    #[arg(long, value_enum, default_value_t = IntegratorArg::Xlmd)]
    integrator: IntegratorArg,
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Built-in system to validate
    #[arg(long, value_enum, default_value_t = ModelArg::Toy)]
    model: ModelArg,
    /// Finite-difference step
    #[arg(long, value_parser = parse_positive, allow_negative_numbers = true, default_value = "1e-4")]
    h: f64,
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Converge(args) => cmd_converge(args),
        Command::Flowmap(args) => cmd_flowmap(args),
        Command::Energy(args) => cmd_energy(args),
        Command::Check(args) => cmd_check(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

/// 2 for precondition/usage problems, 1 for numerical failures and
/// everything else (I/O included).
fn classify(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<xlmd::Error>() {
        Some(
            xlmd::Error::InvalidConfig(_)
            | xlmd::Error::DimensionMismatch { .. }
            | xlmd::Error::OutOfRange { .. }
            | xlmd::Error::DegenerateInput(_),
        ) => 2,
        _ => 1,
    }
}

fn emit(out: &Option<PathBuf>, content: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout()
            .write_all(content.as_bytes())
            .context("writing stdout")?,
    }
    Ok(())
}

fn push_kv(buf: &mut String, key: &str, value: impl AsRef<str>) {
    buf.push_str("# ");
    buf.push_str(key);
    buf.push('=');
    buf.push_str(value.as_ref());
    buf.push('\n');
}

/// Warns on the diagnostic stream when dt eats into the 10× safety margin
/// below the latent stability limit (the hard limit itself is enforced by
/// the propagation routines).
fn warn_if_marginal(model: &dyn Model, r0: &[f64], eps: f64, dt: f64) {
    if let Ok(report) = stability_report(model, r0, eps, dt) {
        if report.is_marginal() && report.ratio < 1.0 {
            eprintln!(
                "warning: dt {} is within 10x of the latent stability limit {} \
                 (dt/limit = {:.3})",
                dt, report.limit_dt, report.ratio
            );
        }
    }
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let model = args.model.instantiate();
    let model = model.as_ref();
    let mut config = SimConfig::new(args.epsilon, args.dt, args.t_final);
    config.ic_kind = args.ic.kind();
    config.sample_stride = args.sample_stride as usize;

    let mut buf = String::new();
    push_kv(&mut buf, "command", "run");
    push_kv(&mut buf, "model", args.model.label());
    push_kv(&mut buf, "integrator", args.integrator.label());
    push_kv(&mut buf, "epsilon", sig17(args.epsilon));
    push_kv(&mut buf, "ic", args.ic.label());
    push_kv(&mut buf, "dt", sig17(args.dt));
    push_kv(&mut buf, "t_final", sig17(args.t_final));
    push_kv(&mut buf, "sample_stride", args.sample_stride.to_string());

    let stride = args.sample_stride as usize;
    let total = config.num_steps();
    let sampled = |step: usize| step.is_multiple_of(stride) || step == total;
    match args.integrator {
        IntegratorArg::Exact => {
            buf.push_str(&trajectory_csv_header(model.atomic_dim(), None));
            buf.push('\n');
            let initial = PhaseState::new(model.initial_position(), model.initial_velocity());
            simulate_exact(model, initial, &config, |step, state| {
                if sampled(step) {
                    buf.push_str(&phase_csv_row(state));
                    buf.push('\n');
                }
            })?;
        }
        IntegratorArg::Xlmd => {
            buf.push_str(&trajectory_csv_header(
                model.atomic_dim(),
                Some(model.latent_dim()),
            ));
            buf.push('\n');
            let r0 = model.initial_position();
            let p0 = model.initial_velocity();
            warn_if_marginal(model, &r0, args.epsilon, args.dt);
            let initial = make_initial_condition(model, config.ic_kind, &r0, &p0, None)?;
            simulate_xlmd(model, initial, &config, |step, state| {
                if sampled(step) {
                    buf.push_str(&extended_csv_row(state));
                    buf.push('\n');
                }
            })?;
        }
    }
    emit(&args.out, &buf)
}

fn cmd_converge(args: ConvergeArgs) -> anyhow::Result<()> {
    let model = args.model.instantiate();
    let model = model.as_ref();
    let grid = args.eps_grid.clone().unwrap_or_else(default_eps_grid);
    let hardware = std::thread::available_parallelism()
        .map(std::num::NonZeroUsize::get)
        .unwrap_or(1);
    let workers = match args.threads {
        Some(n) => n as usize,
        None => grid.len().min(hardware),
    };

    let r0 = model.initial_position();
    if let Some(&eps_min) = grid
        .iter()
        .min_by(|a, b| a.total_cmp(b)) {
        warn_if_marginal(model, &r0, eps_min, args.dt);
    }

    let report = convergence_study(model, &grid, args.ic.kind(), args.dt, args.t_final, workers)?;

    let mut buf = String::new();
    push_kv(&mut buf, "command", "converge");
    push_kv(&mut buf, "model", args.model.label());
    push_kv(&mut buf, "ic", args.ic.label());
    push_kv(&mut buf, "dt", sig17(args.dt));
    push_kv(&mut buf, "t_final", sig17(args.t_final));
    let grid_echo: Vec<String> = grid.iter().map(|e| sig17(*e)).collect();
    push_kv(&mut buf, "eps_grid", grid_echo.join(","));
    let mut csv = Vec::new();
    write_convergence_csv(&mut csv, &report)?;
    buf.push_str(std::str::from_utf8(&csv).expect("csv is ascii"));
    emit(&args.out, &buf)?;

    if let Some(plot_path) = &args.plot_data {
        let mut plot = String::new();
        push_kv(&mut plot, "command", "converge/plot-data");
        push_kv(&mut plot, "model", args.model.label());
        push_kv(&mut plot, "ic", args.ic.label());
        push_kv(&mut plot, "dt", sig17(args.dt));
        push_kv(&mut plot, "t_final", sig17(args.t_final));
        let mut csv = Vec::new();
        write_plot_data(&mut csv, &report)?;
        plot.push_str(std::str::from_utf8(&csv).expect("csv is ascii"));
        emit(&Some(plot_path.clone()), &plot)?;
    }
    Ok(())
}

fn cmd_flowmap(args: FlowmapArgs) -> anyhow::Result<()> {
    let model = args.model.instantiate();
    let model = model.as_ref();
    let t = args.t.unwrap_or(args.t_final);
    let mut config = SimConfig::new(args.epsilon, args.dt, args.t_final);
    config.ic_kind = args.ic.kind();
    config.sample_stride = 1;

    let r0 = model.initial_position();
    let p0 = model.initial_velocity();
    warn_if_marginal(model, &r0, args.epsilon, args.dt);
    let initial = make_initial_condition(model, config.ic_kind, &r0, &p0, None)?;
    let trajectory = PositionTrajectory::record_xlmd(model, initial, &config)?;
    let result = homogeneous_flow_map(
        model,
        &trajectory,
        args.epsilon,
        args.s,
        t,
        args.eta0,
        args.xi0,
    )?;

    let mut buf = String::new();
    push_kv(&mut buf, "command", "flowmap");
    push_kv(&mut buf, "model", args.model.label());
    push_kv(&mut buf, "epsilon", sig17(args.epsilon));
    push_kv(&mut buf, "ic", args.ic.label());
    push_kv(&mut buf, "dt", sig17(args.dt));
    push_kv(&mut buf, "t_final", sig17(args.t_final));
    push_kv(&mut buf, "eta0", sig17(args.eta0));
    buf.push_str("s,t,xi0,numeric_y,numeric_v,predicted_y,predicted_v,residual_y,residual_v\n");
    buf.push_str(&format!(
        "{},{},{},{},{},{},{},{},{}\n",
        sig17(result.s),
        sig17(result.t),
        sig17(result.xi0),
        sig17(result.numeric.0),
        sig17(result.numeric.1),
        sig17(result.predicted.0),
        sig17(result.predicted.1),
        sig17(result.residual.0),
        sig17(result.residual.1),
    ));
    emit(&args.out, &buf)
}

fn cmd_energy(args: EnergyArgs) -> anyhow::Result<()> {
    let model = args.model.instantiate();
    let model = model.as_ref();
    let mut config = SimConfig::new(args.epsilon, args.dt, args.t_final);
    config.ic_kind = args.ic.kind();
    let kind = match args.integrator {
        IntegratorArg::Exact => IntegratorKind::Exact,
        IntegratorArg::Xlmd => IntegratorKind::Xlmd,
    };
    if kind == IntegratorKind::Xlmd {
        warn_if_marginal(model, &model.initial_position(), args.epsilon, args.dt);
    }
    let drift = energy_drift(model, &config, kind)?;

    let mut buf = String::new();
    push_kv(&mut buf, "command", "energy");
    push_kv(&mut buf, "model", args.model.label());
    push_kv(&mut buf, "integrator", args.integrator.label());
    push_kv(&mut buf, "epsilon", sig17(args.epsilon));
    push_kv(&mut buf, "ic", args.ic.label());
    push_kv(&mut buf, "dt", sig17(args.dt));
    push_kv(&mut buf, "t_final", sig17(args.t_final));
    buf.push_str("max_energy_drift\n");
    buf.push_str(&sig17(drift));
    buf.push('\n');
    emit(&args.out, &buf)
}

fn cmd_check(args: CheckArgs) -> anyhow::Result<()> {
    let model = args.model.instantiate();
    let model = model.as_ref();
    let report = validate_derivatives(model, &model.initial_position(), args.h)?;

    let mut buf = String::new();
    push_kv(&mut buf, "command", "check");
    push_kv(&mut buf, "model", args.model.label());
    push_kv(&mut buf, "h", sig17(args.h));
    buf.push_str(
        "h,max_force_discrepancy,max_coupling_matrix_discrepancy,\
         max_coupling_vector_discrepancy,threshold,pass\n",
    );
    buf.push_str(&format!(
        "{},{},{},{},{},{}\n",
        sig17(report.h),
        sig17(report.max_force_discrepancy),
        sig17(report.max_coupling_matrix_discrepancy),
        sig17(report.max_coupling_vector_discrepancy),
        sig17(report.threshold),
        report.pass,
    ));
    emit(&args.out, &buf)?;
    if !report.pass {
        anyhow::bail!(
            "derivative validation failed: max discrepancy {} exceeds threshold {}",
            report.max_discrepancy(),
            report.threshold
        );
    }
    Ok(())
}
