//! Experiment configuration, runners and output files.
//!
//! A config is a TOML file:
//!
//! ```toml
//! experiment = "kappa-sweep"        # or "timing-sweep", "single-run"
//!
//! [system]
//! kappa = 0.1                       # coupled position/velocity pair
//! # delta = [[0.0, -0.1], [0.1, 0.0]]  # or an explicit coupling
//! # e = [[-1.0, 0.0], [0.0, -1.0]]
//! capacity = 3.0
//! horizon = 6
//! w = [1.0, 1.0]                    # constant disturbance
//! # w_stream = [[1.0, 1.0], ...]    # or one row per period, N + 1 rows
//! w_jitter = 0.0                    # uniform noise on w, drawn from --seed
//! xi0 = [0.0, 0.0]
//! xif = [0.0, 0.0]
//!
//! [costs]
//! p = 1.0
//! h = 1.0
//! f = 100.0
//!
//! [estimator]
//! kind = "example-conservative"     # or "box-worst-case" with box_lo/box_hi
//! xbar1 = 1.0
//!
//! [timing]
//! horizons = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
//! repetitions = 5
//!
//! [kappa_sweep]
//! kappas = [0.01, 0.2, 0.225]
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomposition::{build_subproblems, DemandEstimator};
use crate::error::{ControlError, ExperimentError};
use crate::lotsizing::{solve_shortest_path, RegenInterval};
use crate::milp::{build_stacked, solve_bnb, MilpStatus};
use crate::model::{
    BoundaryConditions, CostParams, DisturbanceTrajectory, Matrix, StateBox, SystemSpec, Trajectory,
};
use crate::receding::{
    median, percentage_error, run_closed_loop, solve_one_shot, ClosedLoopOptions, ClosedLoopResult,
    Controller, PlanStatus, PredictedPlan,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    TimingSweep,
    KappaSweep,
    SingleRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kappa: Option<f64>,
    pub delta: Option<Vec<Vec<f64>>>,
    pub e: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_capacity")]
    pub capacity: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    pub w: Option<Vec<f64>>,
    pub w_stream: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub w_jitter: f64,
    pub xi0: Option<Vec<f64>>,
    pub xif: Option<Vec<f64>>,
}

fn default_capacity() -> f64 {
    3.0
}

fn default_horizon() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub p: f64,
    pub h: f64,
    pub f: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            h: 1.0,
            f: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    #[default]
    ExampleConservative,
    BoxWorstCase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub kind: EstimatorKind,
    #[serde(default = "default_xbar1")]
    pub xbar1: f64,
    pub box_lo: Option<Vec<f64>>,
    pub box_hi: Option<Vec<f64>>,
}

fn default_xbar1() -> f64 {
    1.0
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::default(),
            xbar1: default_xbar1(),
            box_lo: None,
            box_hi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    pub horizons: Vec<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
}

fn default_repetitions() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaSweepConfig {
    pub kappas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    pub system: SystemConfig,
    #[serde(default)]
    pub costs: CostConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    pub timing: Option<TimingConfig>,
    pub kappa_sweep: Option<KappaSweepConfig>,
}

/// A fully built closed-loop setup.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: SystemSpec,
    pub w: DisturbanceTrajectory,
    pub bc: BoundaryConditions,
    pub estimator: DemandEstimator,
}

fn config_error(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

fn finite(name: &str, values: &[f64]) -> Result<(), ExperimentError> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(config_error(format!("{name} has non-finite entry {v}"))),
        None => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// The coupled pair at `kappa`, N = 6, `w ≡ 1`, `C = 3`, `p = h = 1`,
    /// `f = 100`, zero boundary states.
    pub fn coupled_pair(kappa: f64, horizon: usize) -> Self {
        Self {
            experiment: Some(ExperimentKind::SingleRun),
            system: SystemConfig {
                kappa: Some(kappa),
                delta: None,
                e: None,
                capacity: 3.0,
                horizon,
                w: None,
                w_stream: None,
                w_jitter: 0.0,
                xi0: None,
                xif: None,
            },
            costs: CostConfig::default(),
            estimator: EstimatorConfig::default(),
            timing: None,
            kappa_sweep: None,
        }
    }

    fn dimension(&self) -> usize {
        match (&self.system.delta, self.system.kappa) {
            (Some(d), _) => d.len(),
            _ => 2,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let s = &self.system;
        match (&s.delta, s.kappa) {
            (Some(_), Some(_)) => return Err(config_error("give either system.kappa or system.delta")),
            (None, None) if self.kappa_sweep.is_none() => {
                return Err(config_error("system needs kappa or delta"))
            }
            _ => {}
        }
        if let Some(k) = s.kappa {
            finite("system.kappa", &[k])?;
        }
        if !(s.capacity.is_finite() && s.capacity > 0.0) {
            return Err(config_error(format!("capacity must be positive, got {}", s.capacity)));
        }
        if s.horizon == 0 {
            return Err(config_error("horizon must be at least 1"));
        }
        if !(s.w_jitter.is_finite() && s.w_jitter >= 0.0) {
            return Err(config_error("w_jitter must be a nonnegative number"));
        }
        let n = self.dimension();
        if n == 0 {
            return Err(config_error("system has no states"));
        }
        for (name, v) in [("system.w", &s.w), ("system.xi0", &s.xi0), ("system.xif", &s.xif)] {
            if let Some(v) = v {
                finite(name, v)?;
            }
        }
        for (name, v) in [("system.xi0", &s.xi0), ("system.xif", &s.xif)] {
            if v.as_ref().is_some_and(|v| v.len() != n) {
                return Err(config_error(format!("{name} needs {n} entries")));
            }
        }
        if s.w.is_some() && s.w_stream.is_some() {
            return Err(config_error("give either system.w or system.w_stream"));
        }
        for rows in [&s.delta, &s.e, &s.w_stream].into_iter().flatten() {
            for row in rows {
                finite("system matrix", row)?;
            }
        }
        for (name, v) in [("costs.p", self.costs.p), ("costs.h", self.costs.h), ("costs.f", self.costs.f)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(config_error(format!("{name} must be a nonnegative number")));
            }
        }
        finite("estimator.xbar1", &[self.estimator.xbar1])?;
        if self.estimator.kind == EstimatorKind::ExampleConservative && n != 2 {
            return Err(config_error("example-conservative estimator needs two states"));
        }
        if let Some(t) = &self.timing {
            if t.horizons.is_empty() {
                return Err(config_error("timing.horizons is empty"));
            }
            if t.horizons.contains(&0) {
                return Err(config_error("timing.horizons must be at least 1"));
            }
            if t.repetitions == 0 {
                return Err(config_error("timing.repetitions must be at least 1"));
            }
        }
        if let Some(k) = &self.kappa_sweep {
            if k.kappas.is_empty() {
                return Err(config_error("kappa_sweep.kappas is empty"));
            }
            finite("kappa_sweep.kappas", &k.kappas)?;
            if s.delta.is_some() {
                return Err(config_error("a kappa sweep needs the coupled pair, not system.delta"));
            }
        }
        Ok(())
    }

    fn check_kind(&self, expected: ExperimentKind) -> Result<(), ExperimentError> {
        match self.experiment {
            Some(kind) if kind != expected => Err(config_error(format!(
                "config is for {kind:?}, command runs {expected:?}"
            ))),
            _ => Ok(()),
        }
    }

    /// Builds the scenario, optionally overriding `kappa` and the horizon.
    /// `seed` drives the disturbance jitter only.
    pub fn scenario(
        &self,
        kappa: Option<f64>,
        horizon: Option<usize>,
        seed: u64,
    ) -> Result<Scenario, ExperimentError> {
        let s = &self.system;
        let horizon = horizon.unwrap_or(s.horizon);
        let n = self.dimension();
        let costs = CostParams::uniform(horizon, n, self.costs.p, self.costs.h, self.costs.f);
        let spec = match (&s.delta, kappa.or(s.kappa)) {
            (Some(delta), _) => {
                let delta = Matrix::from_rows(delta.clone()).map_err(|e| config_error(e.to_string()))?;
                let e = match &s.e {
                    Some(e) => Matrix::from_rows(e.clone()).map_err(|e| config_error(e.to_string()))?,
                    None => {
                        let mut e = Matrix::identity(n);
                        (0..n).for_each(|i| e.set(i, i, -1.0));
                        e
                    }
                };
                SystemSpec::new(delta, e, s.capacity, horizon, costs).map_err(|e| config_error(e.to_string()))?
            }
            (None, Some(k)) => {
                let mut spec = SystemSpec::coupled_pair(k, s.capacity, horizon, costs);
                if let Some(e) = &s.e {
                    spec.e = Matrix::from_rows(e.clone()).map_err(|e| config_error(e.to_string()))?;
                }
                spec
            }
            (None, None) => return Err(config_error("no kappa given")),
        };
        let m = spec.e.cols();

        let mut rows = match (&s.w_stream, &s.w) {
            (Some(stream), _) => {
                if stream.len() < horizon + 1 {
                    return Err(config_error(format!(
                        "w_stream has {} rows, horizon {horizon} needs {}",
                        stream.len(),
                        horizon + 1
                    )));
                }
                stream[..=horizon].to_vec()
            }
            (None, Some(w)) => vec![w.clone(); horizon + 1],
            (None, None) => vec![vec![1.0; m]; horizon + 1],
        };
        if rows.iter().any(|r| r.len() != m) {
            return Err(config_error(format!("disturbance rows need {m} entries")));
        }
        if s.w_jitter > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for v in rows.iter_mut().flatten() {
                *v += rng.random_range(-s.w_jitter..=s.w_jitter);
            }
        }
        let w = DisturbanceTrajectory { w: rows };

        let bc = BoundaryConditions {
            xi0: s.xi0.clone().unwrap_or_else(|| vec![0.0; n]),
            xif: s.xif.clone().unwrap_or_else(|| vec![0.0; n]),
        };
        let estimator = match self.estimator.kind {
            EstimatorKind::ExampleConservative => {
                DemandEstimator::example_conservative(self.estimator.xbar1, &bc.xi0)
                    .map_err(|e| config_error(e.to_string()))?
            }
            EstimatorKind::BoxWorstCase => {
                let (Some(lo), Some(hi)) = (&self.estimator.box_lo, &self.estimator.box_hi) else {
                    return Err(config_error("box-worst-case needs box_lo and box_hi"));
                };
                let x_box = StateBox::new(lo.clone(), hi.clone()).map_err(|e| config_error(e.to_string()))?;
                if x_box.dim() != n {
                    return Err(config_error(format!("estimator box needs {n} entries")));
                }
                DemandEstimator::box_worst_case(x_box)
            }
        };
        Ok(Scenario {
            spec,
            w,
            bc,
            estimator,
        })
    }
}

/// One-shot exact solution over `[0, N]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactRun {
    pub cost: f64,
    pub activations: Vec<usize>,
    pub nodes_explored: usize,
    pub wall_time_ms: f64,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

pub fn solve_exact(cfg: &ExperimentConfig, seed: u64) -> Result<ExactRun, ExperimentError> {
    let sc = cfg.scenario(None, None, seed)?;
    let sol = solve_one_shot(&sc.spec, &sc.w, &sc.bc)?;
    if sol.status != MilpStatus::Optimal {
        return Err(ExperimentError::Infeasible("exact program has no feasible point".into()));
    }
    Ok(ExactRun {
        cost: sol.objective,
        activations: (0..sc.spec.n()).map(|i| sol.trajectory.activations(i)).collect(),
        nodes_explored: sol.nodes_explored,
        wall_time_ms: sol.wall_time * 1e3,
        trajectory: sol.trajectory,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentSummary {
    pub agent: usize,
    pub status: PlanStatus,
    pub cost: f64,
    pub demands: Vec<f64>,
    /// Empty for the branch-and-bound route.
    pub intervals: Vec<RegenInterval>,
    pub wall_time_ms: f64,
}

/// The decomposed plan over `[0, N]` from the initial state, without
/// closing the loop. `trajectory.x` holds each agent's predicted states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecomposedRun {
    pub controller: Controller,
    pub agents: Vec<AgentSummary>,
    pub cost: f64,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

pub fn solve_decomposed(
    cfg: &ExperimentConfig,
    controller: Controller,
    seed: u64,
) -> Result<DecomposedRun, ExperimentError> {
    if controller == Controller::ExactMilp {
        return Err(config_error("solve-decomposed needs decomp-milp or decomp-lp"));
    }
    let sc = cfg.scenario(None, None, seed)?;
    let n = sc.spec.n();
    let horizon = sc.spec.horizon;
    let mut subs = build_subproblems(&sc.spec, &sc.w, &sc.estimator, 0, &sc.bc.xi0).map_err(ControlError::from)?;
    let mut traj = Trajectory::zeros(horizon, n);
    let mut agents = Vec::with_capacity(n);
    for (i, inst) in subs.iter_mut().enumerate() {
        inst.terminal = sc.bc.xif[i];
        let start = std::time::Instant::now();
        let (status, cost, intervals, streams) = match controller {
            Controller::DecomposedLp => {
                let sol = solve_shortest_path(inst).map_err(ControlError::from)?;
                let streams = sol.is_optimal().then(|| {
                    let s = sol.schedule.clone();
                    (s.x, s.u, s.y)
                });
                (PlanStatus::from(sol.status), sol.cost, sol.chosen_intervals, streams)
            }
            _ => {
                let (spec, w, bc) = inst.as_system();
                let sol = solve_bnb(&build_stacked(&spec, &w, &bc).map_err(ControlError::from)?)
                    .map_err(ControlError::from)?;
                let t = sol.trajectory;
                let ok = sol.status == MilpStatus::Optimal;
                (
                    if ok { PlanStatus::Optimal } else { PlanStatus::Infeasible },
                    sol.objective,
                    Vec::new(),
                    ok.then(|| {
                        (
                            t.x.iter().map(|r| r[0]).collect(),
                            t.u.iter().map(|r| r[0]).collect(),
                            t.y.iter().map(|r| r[0]).collect(),
                        )
                    }),
                )
            }
        };
        let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
        let Some((x, u, y)) = streams else {
            return Err(ExperimentError::Infeasible(format!("agent {} has status {status:?}", i + 1)));
        };
        for k in 0..horizon {
            traj.u[k][i] = u[k];
            traj.y[k][i] = y[k];
        }
        for (k, v) in x.into_iter().enumerate() {
            traj.x[k][i] = v;
        }
        agents.push(AgentSummary {
            agent: i + 1,
            status,
            cost,
            demands: inst.demands.clone(),
            intervals,
            wall_time_ms,
        });
    }
    Ok(DecomposedRun {
        controller,
        cost: agents.iter().map(|a| a.cost).sum(),
        agents,
        trajectory: traj,
    })
}

/// Closed-loop run of one controller against the one-shot exact optimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleRun {
    pub controller: Controller,
    pub cost: f64,
    pub exact_cost: Option<f64>,
    pub eps_pct: Option<f64>,
    pub activations: Vec<usize>,
    pub exact_activations: Vec<usize>,
    pub statuses: Vec<Vec<PlanStatus>>,
    pub solve_times_ms: Vec<Vec<f64>>,
    #[serde(skip)]
    pub result: ClosedLoopResult,
    #[serde(skip)]
    pub exact_trajectory: Option<Trajectory>,
}

pub fn run_single(
    cfg: &ExperimentConfig,
    controller: Controller,
    seed: u64,
    repetitions: usize,
) -> Result<SingleRun, ExperimentError> {
    let sc = cfg.scenario(None, None, seed)?;
    single_from_scenario(&sc, controller, repetitions)
}

fn single_from_scenario(sc: &Scenario, controller: Controller, repetitions: usize) -> Result<SingleRun, ExperimentError> {
    let options = ClosedLoopOptions {
        timing_repetitions: repetitions,
    };
    let result = run_closed_loop(&sc.spec, &sc.w, &sc.bc, controller, &sc.estimator, options)?;
    let exact = solve_one_shot(&sc.spec, &sc.w, &sc.bc)?;
    let n = sc.spec.n();
    let (exact_cost, exact_activations, exact_trajectory) = if exact.status == MilpStatus::Optimal {
        let acts = (0..n).map(|i| exact.trajectory.activations(i)).collect();
        (Some(exact.objective), acts, Some(exact.trajectory))
    } else {
        (None, Vec::new(), None)
    };
    let eps_pct = match exact_cost {
        Some(c) => percentage_error(result.cost, c).ok(),
        None => None,
    };
    Ok(SingleRun {
        controller,
        cost: result.cost,
        exact_cost,
        eps_pct,
        activations: (0..n).map(|i| result.trajectory.activations(i)).collect(),
        exact_activations,
        statuses: result.status_log.clone(),
        solve_times_ms: result
            .solver_times
            .iter()
            .map(|row| row.iter().map(|t| t * 1e3).collect())
            .collect(),
        result,
        exact_trajectory,
    })
}

/// One row of the timing sweep. Times are milliseconds per decision of one
/// agent; each decision is timed as the median of the configured repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    #[serde(rename = "N")]
    pub horizon: usize,
    pub t_exact: f64,
    pub t_decomp_milp: f64,
    pub t_lp: f64,
    /// Medians over the decisions of the run, same order as the means.
    pub median_over_decisions: [f64; 3],
    pub costs: [f64; 3],
    pub fallbacks: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingTable {
    pub repetitions: usize,
    pub rows: Vec<TimingRow>,
    pub errors: Vec<String>,
}

fn times_ms(r: &ClosedLoopResult) -> (f64, f64) {
    let mut all: Vec<f64> = r.solver_times.iter().flatten().map(|t| t * 1e3).collect();
    let mean = r.mean_solve_time() * 1e3;
    (mean, median(&mut all))
}

pub fn run_timing_sweep(cfg: &ExperimentConfig, seed: u64) -> Result<TimingTable, ExperimentError> {
    cfg.check_kind(ExperimentKind::TimingSweep)?;
    let timing = cfg
        .timing
        .as_ref()
        .ok_or_else(|| config_error("timing sweep needs a [timing] section"))?;
    let options = ClosedLoopOptions {
        timing_repetitions: timing.repetitions,
    };
    let mut table = TimingTable {
        repetitions: timing.repetitions,
        rows: Vec::new(),
        errors: Vec::new(),
    };
    for &horizon in &timing.horizons {
        let sc = cfg.scenario(None, Some(horizon), seed)?;
        let mut runs = Vec::with_capacity(3);
        for controller in Controller::ALL {
            match run_closed_loop(&sc.spec, &sc.w, &sc.bc, controller, &sc.estimator, options) {
                Ok(r) => runs.push(r),
                Err(e) => {
                    let msg = format!("N = {horizon}, {}: {e}", controller.name());
                    warn!("{msg}");
                    table.errors.push(msg);
                    break;
                }
            }
        }
        if runs.len() != 3 {
            continue;
        }
        let stats: Vec<(f64, f64)> = runs.iter().map(times_ms).collect();
        info!(
            "N = {horizon}: exact {:.4} ms, decomp-milp {:.4} ms, lp {:.4} ms",
            stats[0].0, stats[1].0, stats[2].0
        );
        table.rows.push(TimingRow {
            horizon,
            t_exact: stats[0].0,
            t_decomp_milp: stats[1].0,
            t_lp: stats[2].0,
            median_over_decisions: [stats[0].1, stats[1].1, stats[2].1],
            costs: [runs[0].cost, runs[1].cost, runs[2].cost],
            fallbacks: [runs[0].fallbacks(), runs[1].fallbacks(), runs[2].fallbacks()],
        });
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaRow {
    pub kappa: f64,
    pub cost_exact: f64,
    pub cost_approx: f64,
    pub eps_pct: f64,
    pub activations_exact: Vec<usize>,
    pub activations_approx: Vec<usize>,
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorTable {
    pub controller: Controller,
    pub rows: Vec<KappaRow>,
    pub errors: Vec<String>,
    /// Exact and approximate realized trajectories, one pair per row.
    #[serde(skip)]
    pub trajectories: Vec<(Trajectory, ClosedLoopResult)>,
}

pub fn run_kappa_sweep(
    cfg: &ExperimentConfig,
    controller: Controller,
    seed: u64,
) -> Result<ErrorTable, ExperimentError> {
    cfg.check_kind(ExperimentKind::KappaSweep)?;
    let sweep = cfg
        .kappa_sweep
        .as_ref()
        .ok_or_else(|| config_error("kappa sweep needs a [kappa_sweep] section"))?;
    let mut table = ErrorTable {
        controller,
        rows: Vec::new(),
        errors: Vec::new(),
        trajectories: Vec::new(),
    };
    for &kappa in &sweep.kappas {
        let sc = cfg.scenario(Some(kappa), None, seed)?;
        match single_from_scenario(&sc, controller, 1) {
            Ok(run) => match (run.exact_cost, run.eps_pct, run.exact_trajectory) {
                (Some(cost_exact), Some(eps_pct), Some(exact)) => {
                    table.rows.push(KappaRow {
                        kappa,
                        cost_exact,
                        cost_approx: run.cost,
                        eps_pct,
                        activations_exact: run.exact_activations.clone(),
                        activations_approx: run.activations.clone(),
                        fallbacks: run.result.fallbacks(),
                    });
                    table.trajectories.push((exact, run.result));
                }
                _ => table.errors.push(format!("kappa = {kappa}: exact program infeasible")),
            },
            Err(e) => {
                warn!("kappa = {kappa}: {e}");
                table.errors.push(format!("kappa = {kappa}: {e}"));
            }
        }
    }
    Ok(table)
}

fn state_headers(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

/// `k, x1..xn, u1..un, y1..yn`; the row for `k = N` has empty controls.
pub fn write_trajectory_csv<W: Write>(out: W, traj: &Trajectory) -> Result<(), ExperimentError> {
    let n = traj.x.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = std::iter::once("k".to_string())
        .chain(state_headers("x", n))
        .chain(state_headers("u", n))
        .chain(state_headers("y", n))
        .collect();
    w.write_record(&header)?;
    for (k, x) in traj.x.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(x.iter().map(f64::to_string));
        match (traj.u.get(k), traj.y.get(k)) {
            (Some(u), Some(y)) => {
                rec.extend(u.iter().map(f64::to_string));
                rec.extend(y.iter().map(u8::to_string));
            }
            _ => rec.extend(std::iter::repeat_n(String::new(), 2 * n)),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `tau, k, x1..xn, u1..un, y1..yn` for every plan made along the loop.
pub fn write_predicted_csv<W: Write>(out: W, plans: &[Option<PredictedPlan>], n: usize) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = ["tau".to_string(), "k".to_string()]
        .into_iter()
        .chain(state_headers("x", n))
        .chain(state_headers("u", n))
        .chain(state_headers("y", n))
        .collect();
    w.write_record(&header)?;
    for plan in plans.iter().flatten() {
        for (t, x) in plan.x.iter().enumerate() {
            let mut rec = vec![plan.tau.to_string(), (plan.tau + t).to_string()];
            rec.extend(x.iter().map(f64::to_string));
            match (plan.u.get(t), plan.y.get(t)) {
                (Some(u), Some(y)) => {
                    rec.extend(u.iter().map(f64::to_string));
                    rec.extend(y.iter().map(u8::to_string));
                }
                _ => rec.extend(std::iter::repeat_n(String::new(), 2 * n)),
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing_csv<W: Write>(out: W, table: &TimingTable) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N", "t_exact", "t_decomp_milp", "t_lp"])?;
    for r in &table.rows {
        w.write_record([
            r.horizon.to_string(),
            r.t_exact.to_string(),
            r.t_decomp_milp.to_string(),
            r.t_lp.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_kappa_csv<W: Write>(out: W, table: &ErrorTable) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kappa", "cost_exact", "cost_approx", "eps_pct"])?;
    for r in &table.rows {
        w.write_record([
            r.kappa.to_string(),
            r.cost_exact.to_string(),
            r.cost_approx.to_string(),
            r.eps_pct.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `out` with its extension replaced, e.g. `run.csv` to `run.json`.
pub fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.{suffix}"))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, ExperimentError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}
