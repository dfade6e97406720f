//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input (arguments, config,
//! model validation, empty delay search range), 3 numerical failure,
//! 4 divergence of a run that was expected to be stable.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::analysis::{
    classify_trajectory, critical_delay_search, droop_limits, equilibrium, settle_times,
    stability_report, voltage_bound, CURRENT_SETTLE_BAND, VOLTAGE_SETTLE_FRACTION,
};
use crate::config::{self, ModelConfig};
use crate::controllers::Controller;
use crate::error::Error;
use crate::model::ControllerKind;
use crate::output::{emit_plot_script, write_trajectory_csv, PlotRow, Report, ResultBundle};
use crate::simulator::{run_scenario, Scenario, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

/// Settling targets reported by `simulate`, in seconds after the step.
pub const VOLTAGE_SETTLE_TARGET: f64 = 2.0;
pub const CURRENT_SETTLE_TARGET: f64 = 8.0;

const DEFAULT_TAUS: [f64; 3] = [0.0, 0.1, 0.22];
const DEFAULT_SCALES: [f64; 7] = [1e6, 1e4, 1e2, 1.0, 1e-2, 1e-4, 1e-6];

#[derive(Debug, Parser)]
#[command(
    name = "mtdc",
    version,
    about = "Voltage control analysis and simulation for MTDC grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Droop,
    Distributed,
}

impl From<KindArg> for ControllerKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Droop => ControllerKind::Droop,
            KindArg::Distributed => ControllerKind::Distributed,
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    /// Bundled model preset (default: paper_4term)
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Model file in TOML
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the controller kind from the model
    #[arg(long, value_enum)]
    controller: Option<KindArg>,
    /// Print flat key=value lines instead of the summary
    #[arg(long)]
    machine_readable: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the injection step and write the trajectory
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Communication delay in seconds (default: from the model)
        #[arg(long)]
        tau: Option<f64>,
        /// Simulated time in seconds (default: from the model)
        #[arg(long)]
        horizon: Option<f64>,
        /// Directory for the CSV, plot script and report
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Exit with code 4 if the run diverges, whatever the delay
        #[arg(long)]
        assert_stable: bool,
    },
    /// Closed-loop equilibrium and the steady-state voltage bound
    Equilibrium {
        #[command(flatten)]
        common: Common,
        /// Use the post-step injections instead of the pre-step ones
        #[arg(long)]
        post_step: bool,
    },
    /// Hurwitz check and the sufficient stability conditions
    Stability {
        #[command(flatten)]
        common: Common,
    },
    /// Droop equilibria as all gains are scaled up or down
    Limits {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        post_step: bool,
        /// Comma-separated gain scales
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<f64>>,
    },
    /// Simulate several delays in parallel and optionally bisect for the critical delay
    SweepDelay {
        #[command(flatten)]
        common: Common,
        /// Comma-separated delays in seconds (default: 0,0.1,0.22)
        #[arg(long, value_delimiter = ',')]
        tau_list: Option<Vec<f64>>,
        /// Simulated time per delay in seconds (default: from the model)
        #[arg(long)]
        horizon: Option<f64>,
        /// Directory for the CSVs, plot script and report
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Bisect for the critical delay between LO and HI seconds
        #[arg(long, value_delimiter = ',', num_args = 1, value_name = "LO,HI")]
        search: Option<Vec<f64>>,
    },
    /// List the bundled presets or print one as TOML
    Preset { name: Option<String> },
}

#[derive(Debug)]
enum Failure {
    Lib(Error),
    Diverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Diverged(_) => EXIT_DIVERGED,
            Failure::Lib(e) => match e {
                Error::Io { .. } => EXIT_IO,
                Error::Numerical(_) => EXIT_NUMERICAL,
                Error::Validation(_)
                | Error::Connectivity { .. }
                | Error::SearchRange { .. }
                | Error::Config { .. } => EXIT_INVALID,
            },
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Runs the CLI with explicit output streams and returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = match &f {
                Failure::Lib(e) => writeln!(err, "error: {e}"),
                Failure::Diverged(msg) => writeln!(err, "error: {msg}"),
            };
            f.exit_code()
        }
    }
}

/// Entry point used by the binary.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(argv, &mut stdout.lock(), &mut stderr.lock())
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Outcome {
    match cmd {
        Command::Simulate {
            common,
            tau,
            horizon,
            out_dir,
            assert_stable,
        } => simulate(
            &common,
            tau,
            horizon,
            out_dir.as_deref(),
            assert_stable,
            out,
        ),
        Command::Equilibrium { common, post_step } => equilibrium_cmd(&common, post_step, out),
        Command::Stability { common } => stability_cmd(&common, out),
        Command::Limits {
            common,
            post_step,
            scales,
        } => limits_cmd(&common, post_step, scales, out),
        Command::SweepDelay {
            common,
            tau_list,
            horizon,
            out_dir,
            search,
        } => sweep_delay(&common, tau_list, horizon, out_dir.as_deref(), search, out),
        Command::Preset { name } => preset_cmd(name, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Outcome {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::Lib(Error::io("<stdout>", e)))
}

fn load(common: &Common) -> Result<(ModelConfig, ControllerKind), Error> {
    let model = match (&common.config, &common.preset) {
        (Some(path), _) => config::parse_config(path)?,
        (None, Some(name)) => config::load_preset(name)?,
        (None, None) => config::load_preset(config::DEFAULT_PRESET)?,
    };
    let kind = common.controller.map_or(model.controller.kind, Into::into);
    Ok((model, kind))
}

fn check_time(name: &str, value: f64, allow_zero: bool) -> Result<f64, Error> {
    let ok = value.is_finite() && (value > 0.0 || (allow_zero && value == 0.0));
    if ok {
        Ok(value)
    } else {
        Err(Error::Validation(format!(
            "--{name} must be a {} number of seconds, got {value}",
            if allow_zero {
                "non-negative"
            } else {
                "positive"
            }
        )))
    }
}

fn tau_label(tau: f64) -> String {
    format!("tau_{tau}s")
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

struct RunSummary {
    trajectory: Trajectory,
    diverged: bool,
    head: f64,
    tail: f64,
}

fn run_one(
    model: &ModelConfig,
    kind: ControllerKind,
    scenario: &Scenario,
) -> Result<RunSummary, Error> {
    let system = model.system(kind, &scenario.pre_injections)?;
    let controller = model.controller(kind, scenario.delay)?;
    let trajectory = run_scenario(&system, &controller, scenario)?;
    let post = equilibrium(&system.with_injections(&scenario.post_injections)?)?;
    let (diverged, head, tail) = classify_trajectory(
        &trajectory,
        &post.v_eq,
        scenario.step_time,
        scenario.horizon,
    );
    Ok(RunSummary {
        trajectory,
        diverged,
        head,
        tail,
    })
}

fn describe_settle(t: Option<f64>) -> String {
    t.map_or_else(|| "not within horizon".to_string(), |t| format!("{t:.3} s"))
}

fn simulate(
    common: &Common,
    tau: Option<f64>,
    horizon: Option<f64>,
    out_dir: Option<&Path>,
    assert_stable: bool,
    out: &mut dyn Write,
) -> Outcome {
    let (model, kind) = load(common)?;
    let tau = check_time("tau", tau.unwrap_or(model.controller.tau), true)?;
    let mut scenario = model.scenario.with_delay(tau);
    if let Some(h) = horizon {
        scenario = scenario.with_horizon(check_time("horizon", h, false)?);
    }
    let system = model.system(kind, &scenario.pre_injections)?;
    let spectral = stability_report(&system)?;
    let run = run_one(&model, kind, &scenario)?;
    let pre_eq = equilibrium(&system)?;
    let post_eq = equilibrium(&system.with_injections(&scenario.post_injections)?)?;
    let settle = settle_times(
        &run.trajectory,
        &pre_eq,
        &post_eq,
        scenario.step_time,
        model.params.nominal_voltage(),
    );

    let mut bundle = ResultBundle::default();
    let r = &mut bundle.report;
    r.section(format!("Step response, {} controller", kind.name()))
        .entry("controller", kind.name(), "")
        .entry("tau", tau, "s")
        .entry("horizon", scenario.horizon, "s")
        .entry("step_time", scenario.step_time, "s")
        .entry("samples", run.trajectory.len(), "")
        .entry("hurwitz_undelayed", spectral.hurwitz, "")
        .entry("blew_up", run.trajectory.diverged, "")
        .entry("stable", !run.diverged, "")
        .entry("head_deviation", run.head, "V")
        .entry("tail_deviation", run.tail, "V");
    if let (Some(v), Some(u)) = (run.trajectory.v.last(), run.trajectory.u.last()) {
        r.vector("V_final", v, "V").vector("u_final", u, "A");
    }
    r.vector("V_eq", &post_eq.v_eq, "V")
        .vector("u_eq", &post_eq.u_eq, "A")
        .entry("settle_voltages", settle.voltages, "s")
        .entry("settle_currents", settle.currents, "s")
        .entry(
            "settle_voltages_within_target",
            settle.voltages.is_some_and(|t| t <= VOLTAGE_SETTLE_TARGET),
            "",
        )
        .entry(
            "settle_currents_within_target",
            settle.currents.is_some_and(|t| t <= CURRENT_SETTLE_TARGET),
            "",
        );

    if let Some(dir) = out_dir {
        create_dir(dir)?;
        let name = format!("{}_{}.csv", kind.name(), tau_label(tau));
        write_trajectory_csv(&run.trajectory, dir.join(&name))?;
        let script = dir.join("simulate.gp");
        emit_plot_script(
            &[PlotRow {
                title: format!("{} controller, tau = {tau} s", kind.name()),
                csv: PathBuf::from(&name),
            }],
            model.nodes(),
            model.params.nominal_voltage(),
            &script,
        )?;
        let report_path = dir.join("simulate.txt");
        fs::write(&report_path, bundle.report.render_machine())
            .map_err(|e| Error::io(&report_path, e))?;
        bundle.trajectories.push(dir.join(&name));
        bundle.plot_script = Some(script);
        bundle
            .report
            .entry("csv", dir.join(&name).display().to_string(), "")
            .entry(
                "plot_script",
                dir.join("simulate.gp").display().to_string(),
                "",
            );
    }
    let verdict = |ok: bool| if ok { "met" } else { "missed" };
    bundle
        .report
        .note(format!(
            "settled: voltages {}, currents {}",
            describe_settle(settle.voltages),
            describe_settle(settle.currents)
        ))
        .note(format!(
            "targets: voltages within {:.0}% of their step by {VOLTAGE_SETTLE_TARGET:.1} s ({}), \
             currents within {CURRENT_SETTLE_BAND} A by {CURRENT_SETTLE_TARGET:.1} s ({})",
            VOLTAGE_SETTLE_FRACTION * 100.0,
            verdict(settle.voltages.is_some_and(|t| t <= VOLTAGE_SETTLE_TARGET)),
            verdict(settle.currents.is_some_and(|t| t <= CURRENT_SETTLE_TARGET)),
        ));
    emit(out, &bundle.report.render(common.machine_readable))?;

    let asserted = assert_stable || (tau == 0.0 && spectral.hurwitz);
    if asserted && run.diverged {
        return Err(Failure::Diverged(format!(
            "trajectory diverged (tail deviation {:.6e} V) although the run was expected to be stable",
            run.tail
        )));
    }
    Ok(())
}

fn injections_for(model: &ModelConfig, post_step: bool) -> &DVector<f64> {
    if post_step {
        &model.scenario.post_injections
    } else {
        &model.scenario.pre_injections
    }
}

fn equilibrium_cmd(common: &Common, post_step: bool, out: &mut dyn Write) -> Outcome {
    let (model, kind) = load(common)?;
    let injections = injections_for(&model, post_step);
    let system = model.system(kind, injections)?;
    let eq = equilibrium(&system)?;
    let bound = voltage_bound(&system, &eq)?;
    let mut r = Report::new();
    r.section(format!(
        "Equilibrium, {} controller, {}-step injections",
        kind.name(),
        if post_step { "post" } else { "pre" }
    ))
    .entry("controller", kind.name(), "")
    .vector("I_inj", injections, "A")
    .vector("V_eq", &eq.v_eq, "V");
    if let Some(vh) = &eq.v_hat_eq {
        r.vector("Vhat_eq", vh, "V");
    }
    r.vector("u_eq", &eq.u_eq, "A");
    if let Some(k) = eq.k {
        r.entry("k", k, "V");
    }
    r.entry("current_balance", eq.current_balance(), "A")
        .entry("bound_lhs", bound.lhs, "V")
        .entry("bound_rhs", bound.rhs, "V")
        .entry("bound_holds", bound.holds, "");
    emit(out, &r.render(common.machine_readable))
}

fn stability_cmd(common: &Common, out: &mut dyn Write) -> Outcome {
    let (model, kind) = load(common)?;
    let system = model.system(kind, &model.scenario.post_injections)?;
    let rep = stability_report(&system)?;
    let eq = equilibrium(&system)?;
    let bound = voltage_bound(&system, &eq)?;
    let mut r = Report::new();
    r.section(format!("Stability, {} controller", kind.name()))
        .entry("controller", kind.name(), "")
        .entry("state_dimension", system.dim(), "")
        .entry("hurwitz", rep.hurwitz, "")
        .entry("spectral_abscissa", rep.spectral_abscissa, "1/s")
        .entry("hurwitz_margin", -rep.spectral_abscissa, "1/s");
    if let Some(c8) = rep.condition8 {
        r.entry("condition8_value", c8.value, "")
            .entry("condition8_holds", c8.holds, "");
    }
    if let Some(c9) = rep.condition9 {
        r.entry("condition9_value", c9.value, "")
            .entry("condition9_holds", c9.holds, "");
    }
    r.entry("bound_lhs", bound.lhs, "V")
        .entry("bound_rhs", bound.rhs, "V")
        .entry("bound_holds", bound.holds, "");
    emit(out, &r.render(common.machine_readable))
}

fn limits_cmd(
    common: &Common,
    post_step: bool,
    scales: Option<Vec<f64>>,
    out: &mut dyn Write,
) -> Outcome {
    let (model, _) = load(common)?;
    let injections = injections_for(&model, post_step);
    let scales = scales.unwrap_or_else(|| DEFAULT_SCALES.to_vec());
    let table = droop_limits(model.line_topology(), &model.params, injections, &scales)?;
    let mut r = Report::new();
    r.section(format!(
        "Droop equilibria under gain scaling, {}-step injections",
        if post_step { "post" } else { "pre" }
    ))
    .entry("injection_sum", injections.sum(), "A");
    for row in &table.rows {
        let p = format!("scale_{:e}", row.scale);
        r.entry(format!("{p}.voltage_error"), row.voltage_error, "V")
            .entry(
                format!("{p}.local_balance_error"),
                row.local_balance_error,
                "A",
            )
            .entry(format!("{p}.sharing_error"), row.sharing_error, "A")
            .entry(format!("{p}.spread"), row.spread, "V")
            .entry(format!("{p}.mean_offset"), row.mean_offset, "V");
    }
    r.entry(
        "voltage_approaches_nominal",
        table.voltage_approaches_nominal,
        "",
    )
    .entry(
        "current_approaches_injection",
        table.current_approaches_injection,
        "",
    )
    .entry(
        "current_approaches_sharing",
        table.current_approaches_sharing,
        "",
    )
    .entry("spread_grows", table.spread_grows, "")
    .entry(
        "mean_diverges_with_injection_sign",
        table.mean_diverges_with_injection_sign,
        "",
    );
    emit(out, &r.render(common.machine_readable))
}

fn sweep_delay(
    common: &Common,
    tau_list: Option<Vec<f64>>,
    horizon: Option<f64>,
    out_dir: Option<&Path>,
    search: Option<Vec<f64>>,
    out: &mut dyn Write,
) -> Outcome {
    let (model, kind) = load(common)?;
    if kind != ControllerKind::Distributed {
        return Err(
            Error::Validation("sweep-delay needs the distributed controller".into()).into(),
        );
    }
    let taus = tau_list.unwrap_or_else(|| DEFAULT_TAUS.to_vec());
    if taus.is_empty() {
        return Err(Error::Validation("--tau-list is empty".into()).into());
    }
    for &t in &taus {
        check_time("tau-list", t, true)?;
    }
    let search = match search.as_deref() {
        None => None,
        Some(&[lo, hi]) => Some((
            check_time("search", lo, true)?,
            check_time("search", hi, false)?,
        )),
        Some(other) => {
            return Err(Error::Validation(format!(
                "--search needs LO,HI, got {} values",
                other.len()
            ))
            .into())
        }
    };
    let mut base = model.scenario.clone();
    if let Some(h) = horizon {
        base = base.with_horizon(check_time("horizon", h, false)?);
    }

    let runs: Vec<Result<RunSummary, Error>> = taus
        .par_iter()
        .map(|&tau| run_one(&model, kind, &base.with_delay(tau)))
        .collect();
    let runs: Vec<RunSummary> = runs.into_iter().collect::<Result<_, _>>()?;

    let mut r = Report::new();
    r.section("Delay sweep, distributed controller")
        .entry("horizon", base.horizon, "s");
    for (tau, run) in taus.iter().zip(&runs) {
        let p = tau_label(*tau);
        r.entry(format!("{p}.stable"), !run.diverged, "")
            .entry(format!("{p}.blew_up"), run.trajectory.diverged, "")
            .entry(format!("{p}.head_deviation"), run.head, "V")
            .entry(format!("{p}.tail_deviation"), run.tail, "V");
    }

    if let Some(dir) = out_dir {
        create_dir(dir)?;
        let mut rows = Vec::with_capacity(runs.len());
        for (tau, run) in taus.iter().zip(&runs) {
            let name = format!("sweep_{}.csv", tau_label(*tau));
            write_trajectory_csv(&run.trajectory, dir.join(&name))?;
            rows.push(PlotRow {
                title: format!("tau = {tau} s"),
                csv: PathBuf::from(name),
            });
        }
        let script = dir.join("sweep.gp");
        emit_plot_script(
            &rows,
            model.nodes(),
            model.params.nominal_voltage(),
            &script,
        )?;
        r.entry("plot_script", script.display().to_string(), "");
    }

    if let Some((lo, hi)) = search {
        let system = model.system(kind, &base.pre_injections)?;
        let controller = match model.controller(kind, 0.0)? {
            Controller::Distributed(c) => c,
            Controller::Droop(_) => unreachable!("kind checked above"),
        };
        let found = critical_delay_search(&system, &controller, &base, (lo, hi), base.horizon)?;
        r.entry("critical_delay", found.critical_delay, "s")
            .entry("stable_below", found.stable_below, "s")
            .entry("unstable_above", found.unstable_above, "s")
            .entry("search_evaluations", found.evaluations.len(), "");
    }
    if let Some(dir) = out_dir {
        let path = dir.join("sweep.txt");
        fs::write(&path, r.render_machine()).map_err(|e| Error::io(&path, e))?;
    }
    emit(out, &r.render(common.machine_readable))
}

fn preset_cmd(name: Option<String>, out: &mut dyn Write) -> Outcome {
    match name {
        None => {
            let list: String = config::preset_names().map(|n| format!("{n}\n")).collect();
            emit(out, &list)
        }
        Some(name) => emit(out, config::preset_source(&name)?),
    }
}
