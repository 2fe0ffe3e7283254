//! Python bindings: lot-sizing subproblems, the coupled pair in closed loop,
//! and the two sweeps driven by a TOML config.

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mipc_core::decomposition::{DemandEstimator, LotSizingInstance as CoreInstance};
use mipc_core::error::{ControlError, ExperimentError};
use mipc_core::experiments::{run_kappa_sweep, run_timing_sweep, ExperimentConfig};
use mipc_core::lotsizing::{solve_shortest_path, SubproblemStatus};
use mipc_core::milp::MilpStatus;
use mipc_core::model::{BoundaryConditions, CostParams, DisturbanceTrajectory, SystemSpec, Trajectory};
use mipc_core::receding::{percentage_error as core_percentage_error, run_closed_loop, solve_one_shot, ClosedLoopOptions, Controller};

create_exception!(mipc, InfeasibleError, PyRuntimeError);

fn control_err(e: ControlError) -> PyErr {
    match e {
        ControlError::ControllerInfeasible(_) => InfeasibleError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn experiment_err(e: ExperimentError) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        3 => InfeasibleError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn controller(name: &str) -> PyResult<Controller> {
    Controller::ALL
        .into_iter()
        .find(|c| c.name() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown controller {name:?}; use exact, decomp-milp or decomp-lp")))
}

fn binary(y: &[Vec<u8>]) -> Vec<Vec<u32>> {
    y.iter().map(|r| r.iter().map(|&v| u32::from(v)).collect()).collect()
}

fn trajectory_dict<'py>(py: Python<'py>, t: &Trajectory, cost: f64) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("cost", cost)?;
    d.set_item("x", t.x.clone())?;
    d.set_item("u", t.u.clone())?;
    d.set_item("y", binary(&t.y))?;
    let n = t.x.first().map_or(0, Vec::len);
    d.set_item("activations", (0..n).map(|i| t.activations(i)).collect::<Vec<_>>())?;
    Ok(d)
}

/// Single-item lot-sizing problem with a batch capacity.
#[pyclass(name = "LotSizingInstance")]
struct PyInstance {
    inner: CoreInstance,
}

#[pymethods]
impl PyInstance {
    #[new]
    #[pyo3(signature = (demands, capacity=3.0, p=1.0, h=1.0, f=100.0, xi0=0.0, terminal=0.0))]
    fn new(demands: Vec<f64>, capacity: f64, p: f64, h: f64, f: f64, xi0: f64, terminal: f64) -> PyResult<Self> {
        let mut inner = CoreInstance::uniform(demands, xi0, capacity, p, h, f);
        inner.terminal = terminal;
        inner.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    #[getter]
    fn demands(&self) -> Vec<f64> {
        self.inner.demands.clone()
    }

    /// Shortest path over interval LPs. Returns a dict with status, cost,
    /// intervals (1-based, inclusive) and the x/u/y schedule.
    fn solve<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let sol = solve_shortest_path(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let d = PyDict::new(py);
        let status = match sol.status {
            SubproblemStatus::Optimal => "optimal",
            SubproblemStatus::Infeasible => "infeasible",
            SubproblemStatus::CarryPrevious => "carry-previous",
        };
        d.set_item("status", status)?;
        d.set_item("cost", sol.cost)?;
        d.set_item("path_cost", sol.path_cost)?;
        d.set_item("intervals", sol.chosen_intervals.iter().map(|iv| (iv.alpha, iv.beta)).collect::<Vec<_>>())?;
        d.set_item("x", sol.schedule.x)?;
        d.set_item("u", sol.schedule.u)?;
        d.set_item("y", sol.schedule.y.iter().map(|&v| u32::from(v)).collect::<Vec<_>>())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("LotSizingInstance(demands={:?}, capacity={})", self.inner.demands, self.inner.capacity)
    }
}

/// Two agents where the first drains into the second through the coupling kappa.
#[pyclass(name = "CoupledPair")]
struct PyCoupledPair {
    spec: SystemSpec,
    w: DisturbanceTrajectory,
    bc: BoundaryConditions,
    xbar1: f64,
}

#[pymethods]
impl PyCoupledPair {
    #[new]
    #[pyo3(signature = (kappa, horizon=6, capacity=3.0, p=1.0, h=1.0, f=100.0, w=vec![1.0, 1.0], xbar1=1.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(kappa: f64, horizon: usize, capacity: f64, p: f64, h: f64, f: f64, w: Vec<f64>, xbar1: f64) -> PyResult<Self> {
        if w.len() != 2 {
            return Err(PyValueError::new_err("w needs two entries"));
        }
        Ok(Self {
            spec: SystemSpec::coupled_pair(kappa, capacity, horizon, CostParams::uniform(horizon, 2, p, h, f)),
            w: DisturbanceTrajectory::constant(horizon, &w),
            bc: BoundaryConditions::zero(2),
            xbar1,
        })
    }

    /// Centralized branch-and-bound over the whole horizon.
    fn solve_exact<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let sol = solve_one_shot(&self.spec, &self.w, &self.bc).map_err(control_err)?;
        if sol.status != MilpStatus::Optimal {
            return Err(InfeasibleError::new_err("exact program is infeasible"));
        }
        let d = trajectory_dict(py, &sol.trajectory, sol.objective)?;
        d.set_item("nodes_explored", sol.nodes_explored)?;
        Ok(d)
    }

    #[pyo3(signature = (controller="decomp-lp"))]
    fn closed_loop<'py>(&self, py: Python<'py>, controller: &str) -> PyResult<Bound<'py, PyDict>> {
        let est = DemandEstimator::example_conservative(self.xbar1, &self.bc.xi0)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let c = self::controller(controller)?;
        let r = run_closed_loop(&self.spec, &self.w, &self.bc, c, &est, ClosedLoopOptions::default())
            .map_err(control_err)?;
        let d = trajectory_dict(py, &r.trajectory, r.cost)?;
        d.set_item("controller", c.name())?;
        d.set_item("fallbacks", r.fallbacks())?;
        d.set_item("mean_solve_time", r.mean_solve_time())?;
        Ok(d)
    }
}

/// Experiment config parsed from TOML.
#[pyclass(name = "Experiment")]
struct PyExperiment {
    cfg: ExperimentConfig,
}

#[pymethods]
impl PyExperiment {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            cfg: ExperimentConfig::from_toml_str(text).map_err(experiment_err)?,
        })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            cfg: ExperimentConfig::load(&path).map_err(experiment_err)?,
        })
    }

    /// One dict per kappa: kappa, cost_exact, cost_approx, eps_pct.
    #[pyo3(signature = (controller="decomp-lp", seed=0))]
    fn kappa_sweep<'py>(&self, py: Python<'py>, controller: &str, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let table = run_kappa_sweep(&self.cfg, self::controller(controller)?, seed).map_err(experiment_err)?;
        table
            .rows
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("kappa", r.kappa)?;
                d.set_item("cost_exact", r.cost_exact)?;
                d.set_item("cost_approx", r.cost_approx)?;
                d.set_item("eps_pct", r.eps_pct)?;
                Ok(d)
            })
            .collect()
    }

    /// One dict per horizon with mean per-decision times in milliseconds.
    #[pyo3(signature = (seed=0))]
    fn timing_sweep<'py>(&self, py: Python<'py>, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let table = run_timing_sweep(&self.cfg, seed).map_err(experiment_err)?;
        table
            .rows
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("N", r.horizon)?;
                d.set_item("t_exact", r.t_exact)?;
                d.set_item("t_decomp_milp", r.t_decomp_milp)?;
                d.set_item("t_lp", r.t_lp)?;
                Ok(d)
            })
            .collect()
    }
}

#[pyfunction]
fn percentage_error(cost_approx: f64, cost_exact: f64) -> PyResult<f64> {
    core_percentage_error(cost_approx, cost_exact).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn mipc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyCoupledPair>()?;
    m.add_class::<PyExperiment>()?;
    m.add_function(wrap_pyfunction!(percentage_error, m)?)?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    Ok(())
}
