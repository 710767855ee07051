//! The `critmac` command line: analyze, optimize, simulate and sweep MAC
//! protocols with critical traffic.
//!
//! [`run`] takes the arguments and output streams explicitly so that the
//! whole command line can also be driven in-process.
//!
//! Exit codes: 0 success, 2 bad arguments, 3 numeric failure, 4 infeasible
//! design problem.

mod config;
mod output;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use critmac::analysis;
use critmac::optimizer::{self, DesignProblem, SolutionStatus, SweepAxis, SweepSpec};
use critmac::protocol::{EnhancementConfig, ProtocolParams};
use critmac::sim::{self, CriticalTrafficModel, Scenario, SimConfig, SlotTrace};
use critmac::Error;

use output::{Cell, Format, Records, Report};

#[derive(Debug, Parser)]
#[command(
    name = "critmac",
    version,
    about = "Analyze, optimize and simulate MAC protocols with critical traffic"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form metrics for one protocol.
    #[command(args_override_self = true)]
    Analyze(AnalyzeArgs),
    /// Best (q, r) for a user count, fairness and delay threshold.
    #[command(args_override_self = true)]
    Optimize(OptimizeArgs),
    /// Monte Carlo simulation, side by side with the analysis.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Optimize or evaluate over a range of one parameter (CSV by default).
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Output format [default: table, csv for sweep].
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write the result to this file instead of stdout.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Read `key = value` defaults from this file; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Number of users.
    #[arg(long)]
    n: usize,
    /// Fairness: probability that a success run ends after each slot.
    #[arg(long)]
    theta: f64,
    /// Transmission probability after an idle slot.
    #[arg(long)]
    q: f64,
    /// Retransmission probability after a collision.
    #[arg(long)]
    r: f64,
    /// Also report the critical delay under the enhanced protocol.
    #[arg(long)]
    enhanced: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    theta: f64,
    /// Upper bound on the mean critical delay (omit for no bound).
    #[arg(long, default_value_t = f64::INFINITY)]
    eta: f64,
    /// Distance of the search box from 0 and 1.
    #[arg(long, default_value_t = optimizer::DEFAULT_EPSILON)]
    epsilon: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    SingleCritical,
    TwoCriticalDuringSuccess,
    TwoCriticalSimultaneous,
    TwoCriticalDuringCollision,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::SingleCritical => Scenario::SingleCritical,
            ScenarioArg::TwoCriticalDuringSuccess => Scenario::TwoCriticalDuringSuccess,
            ScenarioArg::TwoCriticalSimultaneous => Scenario::TwoCriticalSimultaneous,
            ScenarioArg::TwoCriticalDuringCollision => Scenario::TwoCriticalDuringCollision,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    theta: f64,
    /// Defaults to the utilization-optimal value for (n, theta).
    #[arg(long)]
    q: Option<f64>,
    /// Defaults to the utilization-optimal value for (n, theta).
    #[arg(long)]
    r: Option<f64>,
    /// Rounds (single-critical) or runs (two-critical scenarios).
    #[arg(long, default_value_t = SimConfig::DEFAULT_ROUNDS)]
    rounds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Slots in each normal phase.
    #[arg(long, default_value_t = SimConfig::DEFAULT_NORMAL_PHASE_SLOTS)]
    normal_slots: u32,
    /// Use the enhanced protocol (implied by two-critical scenarios).
    #[arg(long)]
    enhanced: bool,
    /// Collision bound of the enhanced protocol.
    #[arg(long, default_value_t = 5)]
    b: u32,
    /// Fixed number of critical packets per event [default: 20].
    #[arg(long, conflicts_with = "geometric_mean")]
    packets: Option<u32>,
    /// Geometric number of critical packets with this mean.
    #[arg(long)]
    geometric_mean: Option<f64>,
    #[arg(long, value_enum, default_value_t = ScenarioArg::SingleCritical)]
    scenario: ScenarioArg,
    /// Write the per-slot trace of every round to this file.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    /// Abort a critical phase that runs longer than this.
    #[arg(long, default_value_t = SimConfig::DEFAULT_MAX_CRITICAL_SLOTS)]
    max_critical_slots: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AxisArg {
    /// Metrics over the whole (q, r) grid.
    Qr,
    /// Optimize for each user count.
    N,
    /// Optimize for each fairness value.
    Theta,
    /// Optimize for each delay threshold.
    Eta,
    /// Optimize for an estimated user count, evaluate at --n.
    Nhat,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Qr => SweepAxis::QrGrid,
            AxisArg::N => SweepAxis::NRange,
            AxisArg::Theta => SweepAxis::ThetaRange,
            AxisArg::Eta => SweepAxis::EtaRange,
            AxisArg::Nhat => SweepAxis::NhatRange,
        }
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    axis: AxisArg,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    theta: f64,
    #[arg(long, default_value_t = f64::INFINITY)]
    eta: f64,
    #[arg(long, default_value_t = optimizer::DEFAULT_EPSILON)]
    epsilon: f64,
    /// First value of the swept parameter (not used by the qr axis).
    #[arg(long)]
    from: Option<f64>,
    /// Last value of the swept parameter (not used by the qr axis).
    #[arg(long)]
    to: Option<f64>,
    /// Step [default: 0.01 for qr, 1 for n and nhat].
    #[arg(long)]
    step: Option<f64>,
    #[command(flatten)]
    common: Common,
}

enum Failure {
    Usage(String),
    Core(Error),
    Infeasible,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_)
            | Failure::Core(Error::BadParams(_) | Error::ScenarioUnsatisfiable(_)) => 2,
            Failure::Core(Error::SingularSystem { .. } | Error::Stalled { .. }) => 3,
            Failure::Infeasible => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Core(e) => {
                let name = match e {
                    Error::BadParams(_) => "BadParams",
                    Error::SingularSystem { .. } => "SingularSystem",
                    Error::ScenarioUnsatisfiable(_) => "ScenarioUnsatisfiable",
                    Error::Stalled { .. } => "Stalled",
                };
                format!("{name}: {e}")
            }
            Failure::Infeasible => {
                "Infeasible: no protocol in the search box meets the delay threshold".into()
            }
        }
    }
}

type Outcome = Result<(), Failure>;

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Usage(format!("cannot write {}: {e}", path.display()))
}

fn emit(report: &Report, common: &Common, default: Format, out: &mut dyn Write) -> Outcome {
    let text = report.render(common.format.unwrap_or(default));
    match &common.output {
        Some(path) => std::fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => out
            .write_all(text.as_bytes())
            .and_then(|()| out.flush())
            .map_err(|e| io_failure(Path::new("stdout"), e)),
    }
}

fn analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Outcome {
    let params = ProtocolParams::new(a.n, a.theta, a.q, a.r)?;
    let m = analysis::evaluate(&params)?;
    let mut fields = vec![
        ("n", Cell::Int(a.n as u64)),
        ("theta", Cell::Num(a.theta)),
        ("q", Cell::Num(a.q)),
        ("r", Cell::Num(a.r)),
        ("t_s", Cell::Num(m.t_s)),
        ("t_c", Cell::Num(m.t_c)),
        ("c_norm", Cell::Num(m.c_norm)),
        ("d_crit", Cell::Num(m.d_crit)),
        ("f_norm", Cell::Num(m.f_norm)),
    ];
    if a.enhanced {
        fields.push((
            "d_crit_enhanced",
            Cell::Num(analysis::enhanced_critical_delay(&params)?),
        ));
    }
    emit(
        &Report::one("analysis", Records::single(fields)),
        &a.common,
        Format::Table,
        out,
    )
}

fn optimize(a: &OptimizeArgs, out: &mut dyn Write) -> Outcome {
    let prob = DesignProblem::unconstrained(a.n, a.theta)
        .with_eta(a.eta)
        .with_epsilon(a.epsilon);
    let s = if a.eta.is_infinite() {
        optimizer::maximize_utilization(&prob)?
    } else {
        optimizer::solve_design_problem(&prob)?
    };
    let fields = vec![
        ("n", Cell::Int(a.n as u64)),
        ("theta", Cell::Num(a.theta)),
        ("eta", Cell::Num(a.eta)),
        ("epsilon", Cell::Num(a.epsilon)),
        ("q_opt", Cell::Num(s.q_opt)),
        ("r_opt", Cell::Num(s.r_opt)),
        ("c_norm", Cell::Num(s.c_norm)),
        ("d_crit", Cell::Num(s.d_crit)),
        ("status", Cell::Text(s.status.as_str().into())),
        ("eta_star", Cell::Num(s.eta_star)),
    ];
    emit(
        &Report::one("design", Records::single(fields)),
        &a.common,
        Format::Table,
        out,
    )?;
    if s.status == SolutionStatus::Infeasible {
        return Err(Failure::Infeasible);
    }
    Ok(())
}

fn sim_config(a: &SimulateArgs) -> Result<SimConfig, Failure> {
    let (q, r) = match (a.q, a.r) {
        (Some(q), Some(r)) => (q, r),
        (q, r) => {
            let best =
                optimizer::maximize_utilization(&DesignProblem::unconstrained(a.n, a.theta))?;
            (q.unwrap_or(best.q_opt), r.unwrap_or(best.r_opt))
        }
    };
    let scenario = Scenario::from(a.scenario);
    let enhancement = if a.enhanced || scenario.is_two_critical() {
        EnhancementConfig::enhanced(a.b)
    } else {
        EnhancementConfig::disabled()
    };
    let traffic = match (a.packets, a.geometric_mean) {
        (_, Some(mean)) => CriticalTrafficModel::Geometric(mean),
        (Some(len), None) => CriticalTrafficModel::Fixed(len),
        (None, None) => CriticalTrafficModel::default(),
    };
    let mut cfg = SimConfig::new(ProtocolParams::new(a.n, a.theta, q, r)?)
        .with_enhancement(enhancement)
        .with_rounds(a.rounds)
        .with_seed(a.seed)
        .with_scenario(scenario)
        .with_traffic_model(traffic)
        .with_normal_phase_slots(a.normal_slots);
    cfg.max_critical_slots = a.max_critical_slots;
    cfg.validate()?;
    Ok(cfg)
}

fn setup_fields(cfg: &SimConfig) -> Vec<(&'static str, Cell)> {
    let p = &cfg.params;
    let traffic = match cfg.traffic_model {
        CriticalTrafficModel::Fixed(len) => format!("fixed({len})"),
        CriticalTrafficModel::Geometric(mean) => format!("geometric({mean})"),
    };
    vec![
        ("scenario", Cell::Text(cfg.scenario.as_str().into())),
        ("n", Cell::Int(p.n_users() as u64)),
        ("theta", Cell::Num(p.theta())),
        ("q", Cell::Num(p.q())),
        ("r", Cell::Num(p.r())),
        ("enhanced", Cell::Text(cfg.enhancement.enabled.to_string())),
        (
            "b",
            if cfg.enhancement.enabled {
                Cell::Int(cfg.enhancement.backoff_bound.into())
            } else {
                Cell::Empty
            },
        ),
        ("critical_traffic", Cell::Text(traffic)),
        ("normal_slots", Cell::Int(cfg.normal_phase_slots.into())),
        ("rounds", Cell::Int(cfg.rounds)),
        ("seed", Cell::Int(cfg.seed)),
    ]
}

fn write_traces(cfg: &SimConfig, path: &Path) -> Outcome {
    let file = File::create(path).map_err(|e| io_failure(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", SlotTrace::header(cfg.params.n_users()))
        .map_err(|e| io_failure(path, e))?;
    for round in 0..cfg.rounds {
        let (trace, _) = sim::run_round(cfg, round)?;
        trace
            .write_records(&mut out)
            .map_err(|e| io_failure(path, e))?;
    }
    out.flush().map_err(|e| io_failure(path, e))
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Outcome {
    let cfg = sim_config(a)?;
    if let Some(path) = &a.trace {
        write_traces(&cfg, path)?;
    }
    let setup = setup_fields(&cfg);
    let report = if cfg.scenario.is_two_critical() {
        let t = sim::simulate_two_critical(&cfg)?;
        let v = &t.violations;
        let fields = vec![
            ("runs", Cell::Int(t.runs)),
            ("violations", Cell::Int(v.total())),
            ("inference_violations", Cell::Int(v.inference)),
            ("latency_bound_violations", Cell::Int(v.latency_bound)),
            ("exact_latency_violations", Cell::Int(v.exact_latency)),
            (
                "first_g_collision_violations",
                Cell::Int(v.first_g_collision),
            ),
            ("alternation_violations", Cell::Int(v.alternation)),
            ("idle_then_wait_violations", Cell::Int(v.idle_then_wait)),
            ("max_inference_latency", Cell::Int(t.max_inference_latency)),
            (
                "mean_inference_latency",
                Cell::Num(t.mean_inference_latency),
            ),
            ("second_finished_first", Cell::Int(t.second_finished_first)),
            (
                "idle_then_wait_checked",
                Cell::Int(t.idle_then_wait_checked),
            ),
        ];
        Report {
            sections: vec![
                ("setup", Records::single(setup)),
                ("properties", Records::single(fields)),
            ],
        }
    } else {
        let rep = sim::run_experiment(&cfg)?;
        // the closed form needs at least two users
        let theory = analysis::evaluate(&cfg.params).ok();
        let delay = if cfg.enhancement.enabled {
            analysis::enhanced_critical_delay(&cfg.params).ok()
        } else {
            theory.map(|m| m.d_crit)
        };
        let mut metrics = Records::new(vec!["metric", "simulated", "se", "analysis"]);
        for (name, est, expected) in [
            ("t_s", rep.t_s, theory.map(|m| m.t_s)),
            ("t_c", rep.t_c, theory.map(|m| m.t_c)),
            ("c_norm", rep.c_norm, theory.map(|m| m.c_norm)),
            ("d_crit", rep.d_crit, delay),
        ] {
            metrics.push(vec![
                Cell::Text(name.into()),
                Cell::Num(est.mean),
                Cell::Num(est.se),
                Cell::opt(expected),
            ]);
        }
        let bound = if cfg.enhancement.enabled {
            Cell::Int(cfg.enhancement.backoff_bound.into())
        } else {
            Cell::Empty
        };
        metrics.push(vec![
            Cell::Text("max_d_crit".into()),
            Cell::Int(rep.max_d_crit.into()),
            Cell::Empty,
            bound,
        ]);
        let mut setup = setup;
        setup.extend([
            ("success_runs", Cell::Int(rep.success_runs as u64)),
            (
                "truncated_success_runs",
                Cell::Int(rep.truncated_success_runs as u64),
            ),
            (
                "contention_periods",
                Cell::Int(rep.contention_periods as u64),
            ),
            (
                "truncated_contention_periods",
                Cell::Int(rep.truncated_contention_periods as u64),
            ),
        ]);
        Report {
            sections: vec![("setup", Records::single(setup)), ("metrics", metrics)],
        }
    };
    emit(&report, &a.common, Format::Table, out)
}

fn sweep(a: &SweepArgs, out: &mut dyn Write) -> Outcome {
    let axis = SweepAxis::from(a.axis);
    let (from, to) = match (axis, a.from, a.to) {
        (SweepAxis::QrGrid, _, _) => (a.epsilon, 1.0 - a.epsilon),
        (_, Some(from), Some(to)) => (from, to),
        _ => {
            return Err(Failure::Usage(format!(
                "--axis {} needs --from and --to",
                axis.as_str()
            )))
        }
    };
    let step = match (axis, a.step) {
        (_, Some(step)) => step,
        (SweepAxis::QrGrid, None) => optimizer::COARSE_STEP,
        (SweepAxis::NRange | SweepAxis::NhatRange, None) => 1.0,
        _ => {
            return Err(Failure::Usage(format!(
                "--axis {} needs --step",
                axis.as_str()
            )))
        }
    };
    let template = DesignProblem::unconstrained(a.n, a.theta)
        .with_eta(a.eta)
        .with_epsilon(a.epsilon);
    let rows = optimizer::sweep(&SweepSpec {
        axis,
        template,
        from,
        to,
        step,
    })?;
    let mut records = Records::new(vec![
        "n", "n_hat", "theta", "eta", "q", "r", "c_norm", "d_crit", "status", "error",
    ]);
    for row in rows {
        records.push(vec![
            Cell::Int(row.n_users as u64),
            row.n_hat.map_or(Cell::Empty, |n| Cell::Int(n as u64)),
            Cell::Num(row.theta),
            Cell::Num(row.eta),
            Cell::Num(row.q),
            Cell::Num(row.r),
            Cell::opt(row.c_norm),
            Cell::opt(row.d_crit),
            row.status
                .map_or(Cell::Empty, |s| Cell::Text(s.as_str().into())),
            row.error.map_or(Cell::Empty, Cell::Text),
        ]);
    }
    emit(&Report::one("sweep", records), &a.common, Format::Csv, out)
}

/// Runs one command line (including the program name) and returns the exit
/// code. Results go to `out` (unless `--output` is given), diagnostics to
/// `err`.
pub fn run(args: Vec<OsString>, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let outcome = config::splice(args)
        .map_err(Failure::Usage)
        .and_then(|args| match Cli::try_parse_from(args) {
            Ok(cli) => match &cli.command {
                Command::Analyze(a) => analyze(a, out),
                Command::Optimize(a) => optimize(a, out),
                Command::Simulate(a) => simulate(a, out),
                Command::Sweep(a) => sweep(a, out),
            },
            // help and version go to stdout with status 0
            Err(e) if !e.use_stderr() => {
                write!(out, "{}", e.render()).map_err(|e| io_failure(Path::new("stdout"), e))
            }
            Err(e) => Err(Failure::Usage(
                e.render()
                    .to_string()
                    .trim_end()
                    .trim_start_matches("error: ")
                    .to_owned(),
            )),
        });
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.exit_code()
        }
    }
}
