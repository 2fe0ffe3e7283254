//! Shrinking-horizon closed loop: at every `τ` plan over `[τ, N]` from the
//! measured state, apply the first control, step the plant and repeat.

use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::decomposition::{build_subproblems, DemandEstimator, LotSizingInstance};
use crate::error::{ControlError, ModelError};
use crate::lotsizing::{solve_shortest_path, SubproblemStatus};
use crate::milp::{build_stacked, solve_bnb, MilpSolution, MilpStatus};
use crate::model::{
    check_unstabilizing, step_plant, trajectory_cost, validate_spec, BoundaryConditions,
    DisturbanceTrajectory, SystemSpec, Trajectory, Violation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Controller {
    /// Centralized branch-and-bound on the coupled plant.
    #[serde(rename = "exact")]
    ExactMilp,
    /// Branch-and-bound on each agent's scalar lot-sizing problem.
    #[serde(rename = "decomp-milp")]
    DecomposedMilp,
    /// Shortest path over interval LPs on each agent's problem.
    #[serde(rename = "decomp-lp")]
    DecomposedLp,
}

impl Controller {
    pub const ALL: [Controller; 3] = [
        Controller::ExactMilp,
        Controller::DecomposedMilp,
        Controller::DecomposedLp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Controller::ExactMilp => "exact",
            Controller::DecomposedMilp => "decomp-milp",
            Controller::DecomposedLp => "decomp-lp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanStatus {
    Optimal,
    Infeasible,
    /// The initial stock covers the window; the previous plan was kept.
    CarryPrevious,
}

impl From<SubproblemStatus> for PlanStatus {
    fn from(s: SubproblemStatus) -> Self {
        match s {
            SubproblemStatus::Optimal => PlanStatus::Optimal,
            SubproblemStatus::Infeasible => PlanStatus::Infeasible,
            SubproblemStatus::CarryPrevious => PlanStatus::CarryPrevious,
        }
    }
}

/// Plan computed at `tau` for the periods `tau..N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedPlan {
    pub tau: usize,
    /// Predicted states at `tau..=N`.
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub y: Vec<Vec<u8>>,
    /// Predicted cost over `[tau, N]` as seen by the planner.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopResult {
    pub controller: Controller,
    pub trajectory: Trajectory,
    pub per_step_costs: Vec<f64>,
    pub cost: f64,
    /// One entry per `τ`; `None` where no new plan was found.
    pub predicted: Vec<Option<PredictedPlan>>,
    /// Seconds per `τ`, one entry per solve: a single entry for the
    /// centralized controller and one per agent otherwise.
    pub solver_times: Vec<Vec<f64>>,
    /// Per `τ`, one status per solve, indexed like `solver_times`.
    pub status_log: Vec<Vec<PlanStatus>>,
}

impl ClosedLoopResult {
    /// Mean over all recorded solves.
    pub fn mean_solve_time(&self) -> f64 {
        let all: Vec<f64> = self.solver_times.iter().flatten().copied().collect();
        if all.is_empty() {
            0.0
        } else {
            all.iter().sum::<f64>() / all.len() as f64
        }
    }

    pub fn fallbacks(&self) -> usize {
        self.status_log
            .iter()
            .flatten()
            .filter(|s| **s != PlanStatus::Optimal)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClosedLoopOptions {
    /// Every solve is repeated this many times and the median time kept.
    pub timing_repetitions: usize,
}

impl Default for ClosedLoopOptions {
    fn default() -> Self {
        Self {
            timing_repetitions: 1,
        }
    }
}

fn timed<T, E>(reps: usize, mut f: impl FnMut() -> Result<T, E>) -> Result<(T, f64), E> {
    let mut times = Vec::with_capacity(reps.max(1));
    let mut result = None;
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        let out = f()?;
        times.push(start.elapsed().as_secs_f64());
        result.get_or_insert(out);
    }
    Ok((result.unwrap(), median(&mut times)))
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// The exact program over the whole horizon, solved once.
pub fn solve_one_shot(
    spec: &SystemSpec,
    w: &DisturbanceTrajectory,
    bc: &BoundaryConditions,
) -> Result<MilpSolution, ControlError> {
    Ok(solve_bnb(&build_stacked(spec, w, bc)?)?)
}

/// Per-agent plan: `u[t]`, `y[t]` and states for periods `tau + t`.
struct AgentPlan {
    tau: usize,
    x: Vec<f64>,
    u: Vec<f64>,
    y: Vec<u8>,
}

impl AgentPlan {
    fn action(&self, k: usize) -> Option<(f64, u8)> {
        let t = k.checked_sub(self.tau)?;
        Some((*self.u.get(t)?, *self.y.get(t)?))
    }
}

fn solve_agent(
    controller: Controller,
    inst: &LotSizingInstance,
    reps: usize,
) -> Result<(Option<AgentPlan>, PlanStatus, f64, f64), ControlError> {
    match controller {
        Controller::DecomposedLp => {
            let (sol, time) = timed(reps, || solve_shortest_path(inst))?;
            let status = PlanStatus::from(sol.status);
            let plan = sol.is_optimal().then(|| AgentPlan {
                tau: inst.tau,
                x: sol.schedule.x.clone(),
                u: sol.schedule.u.clone(),
                y: sol.schedule.y.clone(),
            });
            Ok((plan, status, time, sol.cost))
        }
        Controller::DecomposedMilp => {
            let (spec, w, bc) = inst.as_system();
            let milp = build_stacked(&spec, &w, &bc)?;
            let (sol, time) = timed(reps, || solve_bnb(&milp))?;
            if sol.status != MilpStatus::Optimal {
                return Ok((None, PlanStatus::Infeasible, time, f64::INFINITY));
            }
            let t = &sol.trajectory;
            let plan = AgentPlan {
                tau: inst.tau,
                x: t.x.iter().map(|r| r[0]).collect(),
                u: t.u.iter().map(|r| r[0]).collect(),
                y: t.y.iter().map(|r| r[0]).collect(),
            };
            Ok((Some(plan), PlanStatus::Optimal, time, sol.objective))
        }
        Controller::ExactMilp => unreachable!("centralized controller has no agents"),
    }
}

pub fn run_closed_loop(
    spec: &SystemSpec,
    w: &DisturbanceTrajectory,
    bc: &BoundaryConditions,
    controller: Controller,
    est: &DemandEstimator,
    options: ClosedLoopOptions,
) -> Result<ClosedLoopResult, ControlError> {
    for v in validate_spec(spec).violations {
        match v {
            Violation::NonzeroDiagonal { .. } | Violation::NegativeCost { .. } => {
                warn!("system check: {v}")
            }
            _ => return Err(ModelError::Invalid(v.to_string()).into()),
        }
    }
    if !check_unstabilizing(spec, w)? {
        warn!("disturbance does not drain every state; some demands are negative");
    }
    let n = spec.n();
    let horizon = spec.horizon;
    if bc.xi0.len() != n || bc.xif.len() != n {
        return Err(ModelError::Dimension("boundary conditions".into()).into());
    }
    let reps = options.timing_repetitions;

    let mut traj = Trajectory::zeros(horizon, n);
    traj.x[0] = bc.xi0.clone();
    let mut predicted = Vec::with_capacity(horizon);
    let mut solver_times = Vec::with_capacity(horizon);
    let mut status_log = Vec::with_capacity(horizon);
    let mut agent_plans: Vec<Option<AgentPlan>> = (0..n).map(|_| None).collect();
    let mut central_plan: Option<PredictedPlan> = None;

    for tau in 0..horizon {
        let measured = traj.x[tau].clone();
        let mut u = vec![0.0; n];
        let mut y = vec![0u8; n];
        match controller {
            Controller::ExactMilp => {
                let local_bc = BoundaryConditions {
                    xi0: measured.clone(),
                    xif: bc.xif.clone(),
                };
                let milp = build_stacked(&spec.window(tau), &w.window(tau), &local_bc)?;
                let (sol, time) = timed(reps, || solve_bnb(&milp))?;
                solver_times.push(vec![time]);
                if sol.status == MilpStatus::Optimal {
                    status_log.push(vec![PlanStatus::Optimal]);
                    let plan = PredictedPlan {
                        tau,
                        x: sol.trajectory.x.clone(),
                        u: sol.trajectory.u.clone(),
                        y: sol.trajectory.y.clone(),
                        cost: sol.objective,
                    };
                    predicted.push(Some(plan.clone()));
                    central_plan = Some(plan);
                } else {
                    status_log.push(vec![PlanStatus::Infeasible]);
                    predicted.push(None);
                }
                let plan = central_plan.as_ref().ok_or(ControlError::ControllerInfeasible(tau))?;
                let t = tau - plan.tau;
                u.clone_from(&plan.u[t]);
                y.clone_from(&plan.y[t]);
            }
            Controller::DecomposedMilp | Controller::DecomposedLp => {
                let est_tau = est.reanchor(&measured);
                let mut subs = build_subproblems(spec, w, &est_tau, tau, &measured)?;
                let mut times = Vec::with_capacity(n);
                let mut statuses = Vec::with_capacity(n);
                let mut plan_x = vec![vec![f64::NAN; n]; horizon - tau + 1];
                let mut plan_u = vec![vec![0.0; n]; horizon - tau];
                let mut plan_y = vec![vec![0u8; n]; horizon - tau];
                let mut plan_cost = 0.0;
                let mut complete = true;
                for (i, inst) in subs.iter_mut().enumerate() {
                    inst.terminal = bc.xif[i];
                    let (plan, status, time, cost) = solve_agent(controller, inst, reps)?;
                    times.push(time);
                    statuses.push(status);
                    match plan {
                        Some(p) => {
                            for t in 0..p.u.len() {
                                plan_u[t][i] = p.u[t];
                                plan_y[t][i] = p.y[t];
                            }
                            for (t, &x) in p.x.iter().enumerate() {
                                plan_x[t][i] = x;
                            }
                            plan_cost += cost;
                            agent_plans[i] = Some(p);
                        }
                        None => complete = false,
                    }
                    let (ui, yi) = agent_plans[i]
                        .as_ref()
                        .and_then(|p| p.action(tau))
                        .ok_or(ControlError::ControllerInfeasible(tau))?;
                    u[i] = ui;
                    y[i] = yi;
                }
                solver_times.push(times);
                status_log.push(statuses);
                predicted.push(complete.then_some(PredictedPlan {
                    tau,
                    x: plan_x,
                    u: plan_u,
                    y: plan_y,
                    cost: plan_cost,
                }));
            }
        }
        traj.x[tau + 1] = step_plant(spec, &measured, &u, w.at(tau));
        traj.u[tau] = u;
        traj.y[tau] = y;
    }

    let per_step_costs = (0..horizon)
        .map(|k| spec.costs.stage_cost(k, &traj.x[k], &traj.u[k], &traj.y[k]))
        .collect();
    let cost = trajectory_cost(&spec.costs, &traj);
    Ok(ClosedLoopResult {
        controller,
        trajectory: traj,
        per_step_costs,
        cost,
        predicted,
        solver_times,
        status_log,
    })
}

/// `100 (approx − exact) / exact`, zero when both are zero.
pub fn percentage_error(cost_approx: f64, cost_exact: f64) -> Result<f64, ControlError> {
    if cost_exact == 0.0 {
        return if cost_approx == 0.0 {
            Ok(0.0)
        } else {
            Err(ControlError::DivisionByZero(cost_exact))
        };
    }
    Ok(100.0 * (cost_approx - cost_exact) / cost_exact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CostParams;

    fn pair(kappa: f64) -> SystemSpec {
        SystemSpec::coupled_pair(kappa, 3.0, 6, CostParams::uniform(6, 2, 1.0, 1.0, 100.0))
    }

    fn conservative() -> DemandEstimator {
        DemandEstimator::example_conservative(1.0, &[0.0, 0.0]).unwrap()
    }

    #[test]
    fn percentage_error_examples() {
        assert_eq!(percentage_error(5.0, 5.0).unwrap(), 0.0);
        assert!((percentage_error(1.2 * 7.0, 7.0).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(percentage_error(0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(percentage_error(1.0, 0.0), Err(ControlError::DivisionByZero(_))));
    }

    #[test]
    fn no_demand_gives_zero_trajectories() {
        let spec = pair(0.1);
        let w = DisturbanceTrajectory::constant(6, &[0.0, 0.0]);
        let bc = BoundaryConditions::zero(2);
        for c in Controller::ALL {
            let r = run_closed_loop(&spec, &w, &bc, c, &conservative(), ClosedLoopOptions::default()).unwrap();
            assert_eq!(r.cost, 0.0, "{c:?}");
            assert!(r.trajectory.x.iter().flatten().all(|&x| x == 0.0));
            assert!(r.trajectory.u.iter().flatten().all(|&u| u == 0.0));
        }
    }

    #[test]
    fn realized_states_replay() {
        let spec = pair(0.2);
        let w = DisturbanceTrajectory::constant(6, &[1.0, 1.0]);
        let bc = BoundaryConditions::zero(2);
        for c in Controller::ALL {
            let r = run_closed_loop(&spec, &w, &bc, c, &conservative(), ClosedLoopOptions::default()).unwrap();
            for k in 0..6 {
                let next = step_plant(&spec, &r.trajectory.x[k], &r.trajectory.u[k], w.at(k));
                assert_eq!(next, r.trajectory.x[k + 1]);
            }
            assert_eq!(r.trajectory.x.len(), 7);
            assert_eq!(r.solver_times.len(), 6);
        }
    }

    #[test]
    fn infeasible_start_is_reported() {
        // Demand 4 in the first period exceeds C = 3.
        let spec = pair(0.0);
        let w = DisturbanceTrajectory::constant(6, &[4.0, 1.0]);
        let bc = BoundaryConditions::zero(2);
        for c in Controller::ALL {
            let r = run_closed_loop(&spec, &w, &bc, c, &conservative(), ClosedLoopOptions::default());
            assert!(matches!(r, Err(ControlError::ControllerInfeasible(0))), "{c:?}");
        }
    }
}
