use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mipc_core::error::ExperimentError;
use mipc_core::experiments::{
    create, run_kappa_sweep, run_single, run_timing_sweep, sidecar, solve_decomposed, solve_exact,
    write_json, write_kappa_csv, write_predicted_csv, write_timing_csv, write_trajectory_csv,
    ExperimentConfig,
};
use mipc_core::receding::Controller;

#[derive(Parser)]
#[command(name = "mipc", version, about = "Exact and decomposed mixed-integer predictive control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the coupled program once over the whole horizon.
    SolveExact(Common),
    /// Plan every agent once from the initial state.
    SolveDecomposed(Common),
    /// Run one controller in closed loop and dump its trajectory.
    ClosedLoop(Common),
    /// Per-decision solve times of all three controllers over a range of horizons.
    SweepTiming(Common),
    /// Closed-loop cost error against the exact optimum over a list of couplings.
    SweepKappa(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output CSV; a JSON summary is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Seeds the disturbance jitter.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ControllerArg::DecompLp)]
    controller: ControllerArg,
    /// Timing repetitions per decision for closed-loop runs.
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Exact,
    DecompMilp,
    DecompLp,
}

impl From<ControllerArg> for Controller {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::Exact => Controller::ExactMilp,
            ControllerArg::DecompMilp => Controller::DecomposedMilp,
            ControllerArg::DecompLp => Controller::DecomposedLp,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mipc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<(), ExperimentError> {
    match command {
        Command::SolveExact(a) => {
            let cfg = ExperimentConfig::load(&a.config)?;
            let run = solve_exact(&cfg, a.seed)?;
            write_trajectory_csv(create(&a.out)?, &run.trajectory)?;
            summary(&a, "solve-exact", json!({ "status": "optimal", "result": run }))
        }
        Command::SolveDecomposed(a) => {
            let cfg = ExperimentConfig::load(&a.config)?;
            let run = solve_decomposed(&cfg, a.controller.into(), a.seed)?;
            write_trajectory_csv(create(&a.out)?, &run.trajectory)?;
            summary(&a, "solve-decomposed", json!({ "status": "optimal", "result": run }))
        }
        Command::ClosedLoop(a) => {
            let cfg = ExperimentConfig::load(&a.config)?;
            let run = run_single(&cfg, a.controller.into(), a.seed, a.repetitions)?;
            let r = &run.result;
            write_trajectory_csv(create(&a.out)?, &r.trajectory)?;
            let n = r.trajectory.x.first().map_or(0, Vec::len);
            write_predicted_csv(create(&sidecar(&a.out, "predicted.csv"))?, &r.predicted, n)?;
            summary(&a, "closed-loop", json!({ "result": run }))
        }
        Command::SweepTiming(a) => {
            let cfg = ExperimentConfig::load(&a.config)?;
            let table = run_timing_sweep(&cfg, a.seed)?;
            write_timing_csv(create(&a.out)?, &table)?;
            summary(&a, "sweep-timing", json!({ "time_unit": "ms", "result": table }))?;
            nonempty(table.rows.len(), &table.errors)
        }
        Command::SweepKappa(a) => {
            let cfg = ExperimentConfig::load(&a.config)?;
            let controller: Controller = a.controller.into();
            let table = run_kappa_sweep(&cfg, controller, a.seed)?;
            write_kappa_csv(create(&a.out)?, &table)?;
            for (row, (exact, approx)) in table.rows.iter().zip(&table.trajectories) {
                let tag = format!("kappa-{}", row.kappa);
                write_trajectory_csv(create(&sidecar(&a.out, &format!("{tag}.exact.csv")))?, exact)?;
                write_trajectory_csv(
                    create(&sidecar(&a.out, &format!("{tag}.{}.csv", controller.name())))?,
                    &approx.trajectory,
                )?;
            }
            summary(&a, "sweep-kappa", json!({ "result": table }))?;
            nonempty(table.rows.len(), &table.errors)
        }
    }
}

fn summary(a: &Common, command: &str, body: serde_json::Value) -> Result<(), ExperimentError> {
    let mut value = json!({
        "command": command,
        "config": path_str(&a.config),
        "seed": a.seed,
        "controller": Controller::from(a.controller).name(),
    });
    if let (Some(v), serde_json::Value::Object(extra)) = (value.as_object_mut(), body) {
        v.extend(extra);
    }
    write_json(&sidecar(&a.out, "json"), &value)
}

fn nonempty(rows: usize, errors: &[String]) -> Result<(), ExperimentError> {
    if rows == 0 && !errors.is_empty() {
        return Err(ExperimentError::Infeasible(errors.join("; ")));
    }
    Ok(())
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}
