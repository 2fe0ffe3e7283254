//! Splits the coupled plant into scalar lot-sizing problems.
//!
//! Agent `i` sees the dynamics `x_i(k+1) = x_i(k) − d̃_i(k) + u_i(k)` where the
//! demand `d̃_i` replaces the influence of the other states by an estimate.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{BoundaryConditions, CostParams, DisturbanceTrajectory, Matrix, StateBox, SystemSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DemandEstimator {
    /// Worst demand over a fixed state box. Stateless.
    BoxWorstCase { x_box: StateBox },
    /// Two-state estimator for the position/velocity plant. `state[0]` is a
    /// lower bound on `x_1` held at its initial value; `state[1]` is an upper
    /// bound on `x_2`, grown by `Δ_21 x̄_1 + (E w(k))_2 + C` per period.
    ExampleConservative { xbar1: f64, state: [f64; 2] },
}

impl DemandEstimator {
    pub fn box_worst_case(x_box: StateBox) -> Self {
        DemandEstimator::BoxWorstCase { x_box }
    }

    pub fn example_conservative(xbar1: f64, measured_x0: &[f64]) -> Result<Self, ModelError> {
        if measured_x0.len() != 2 {
            return Err(ModelError::Dimension(format!(
                "conservative estimator needs 2 states, got {}",
                measured_x0.len()
            )));
        }
        Ok(DemandEstimator::ExampleConservative {
            xbar1,
            state: [measured_x0[0], measured_x0[1]],
        })
    }

    /// Refreshes the estimate from a plant measurement. The upper bound on
    /// `x_2` restarts from the measured value; the lower bound on `x_1` stays
    /// at its initial value, since a measurement of `x_1` is not a lower bound
    /// for later periods.
    pub fn reanchor(&self, measured: &[f64]) -> Self {
        match self {
            DemandEstimator::BoxWorstCase { .. } => self.clone(),
            DemandEstimator::ExampleConservative { xbar1, state } => {
                DemandEstimator::ExampleConservative {
                    xbar1: *xbar1,
                    state: [state[0], measured[1]],
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DemandEstimator::BoxWorstCase { .. } => "box-worst-case",
            DemandEstimator::ExampleConservative { .. } => "example-conservative",
        }
    }

    fn check(&self, spec: &SystemSpec) -> Result<(), ModelError> {
        match self {
            DemandEstimator::BoxWorstCase { x_box } if x_box.dim() != spec.n() => {
                Err(ModelError::Dimension(format!(
                    "box has {} components, system has {}",
                    x_box.dim(),
                    spec.n()
                )))
            }
            DemandEstimator::ExampleConservative { .. } if spec.n() != 2 => Err(ModelError::Dimension(
                format!("conservative estimator needs 2 states, system has {}", spec.n()),
            )),
            _ => Ok(()),
        }
    }
}

/// `d_i = −(Δ_i· x + E_i· w_k)`.
pub fn raw_demand(spec: &SystemSpec, x: &[f64], w_k: &[f64], i: usize) -> f64 {
    let coupling: f64 = spec.delta.row(i).iter().zip(x).map(|(a, v)| a * v).sum();
    let disturbance: f64 = spec.e.row(i).iter().zip(w_k).map(|(e, v)| e * v).sum();
    -(coupling + disturbance)
}

/// Demand the estimator predicts for agent `i` at its current period.
pub fn estimated_demand(est: &DemandEstimator, spec: &SystemSpec, w_k: &[f64], i: usize) -> f64 {
    match est {
        DemandEstimator::BoxWorstCase { x_box } => {
            // max over the box of −Δ_i· ξ: pick hi where −Δ_ij > 0.
            let corner: Vec<f64> = spec
                .delta
                .row(i)
                .iter()
                .enumerate()
                .map(|(j, &a)| if -a > 0.0 { x_box.hi[j] } else { x_box.lo[j] })
                .collect();
            raw_demand(spec, &corner, w_k, i)
        }
        DemandEstimator::ExampleConservative { state, .. } => raw_demand(spec, state, w_k, i),
    }
}

pub fn advance_estimator(est: &DemandEstimator, spec: &SystemSpec, w_k: &[f64]) -> DemandEstimator {
    match est {
        DemandEstimator::BoxWorstCase { .. } => est.clone(),
        DemandEstimator::ExampleConservative { xbar1, state } => {
            let ew2: f64 = spec.e.row(1).iter().zip(w_k).map(|(e, v)| e * v).sum();
            DemandEstimator::ExampleConservative {
                xbar1: *xbar1,
                state: [
                    state[0],
                    state[1] + spec.delta[(1, 0)] * xbar1 + ew2 + spec.capacity,
                ],
            }
        }
    }
}

/// Scalar capacitated lot-sizing problem of one agent over `[tau, horizon_end]`.
///
/// `demands[t]`, `p[t]`, `h[t]` and `f[t]` belong to period `tau + t`. A
/// negative `xi0` is a backlog that must be recovered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotSizingInstance {
    pub agent: usize,
    pub tau: usize,
    pub horizon_end: usize,
    pub xi0: f64,
    /// Required state at `horizon_end`.
    pub terminal: f64,
    pub demands: Vec<f64>,
    pub capacity: f64,
    pub p: Vec<f64>,
    pub h: Vec<f64>,
    pub f: Vec<f64>,
}

impl LotSizingInstance {
    /// Uniform costs, `tau = 0`, zero terminal state.
    pub fn uniform(demands: Vec<f64>, xi0: f64, capacity: f64, p: f64, h: f64, f: f64) -> Self {
        let len = demands.len();
        Self {
            agent: 0,
            tau: 0,
            horizon_end: len,
            xi0,
            terminal: 0.0,
            demands,
            capacity,
            p: vec![p; len],
            h: vec![h; len],
            f: vec![f; len],
        }
    }

    /// Number of periods `N − τ`.
    pub fn len(&self) -> usize {
        self.demands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demands.is_empty()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let len = self.len();
        if self.tau + len != self.horizon_end {
            return Err(ModelError::Dimension(format!(
                "{len} demands for window [{}, {}]",
                self.tau, self.horizon_end
            )));
        }
        if self.p.len() != len || self.h.len() != len || self.f.len() != len {
            return Err(ModelError::Dimension("cost streams differ from demand length".into()));
        }
        if !self.demands.iter().all(|d| d.is_finite()) || !self.xi0.is_finite() {
            return Err(ModelError::Dimension("non-finite demand or initial state".into()));
        }
        Ok(())
    }

    /// The same problem as a one-state plant `x(k+1) = x(k) − d(k) + u(k)`,
    /// i.e. `Δ = 0`, `E = −1` and disturbance `d`.
    pub fn as_system(&self) -> (SystemSpec, DisturbanceTrajectory, BoundaryConditions) {
        let len = self.len();
        let column = |v: &[f64]| Matrix::from_rows(v.iter().map(|&x| vec![x]).collect()).unwrap();
        let costs = CostParams {
            p: column(&self.p),
            h: column(&self.h),
            f: column(&self.f),
        };
        let spec = SystemSpec {
            delta: Matrix::zeros(1, 1),
            e: Matrix::from_rows(vec![vec![-1.0]]).unwrap(),
            capacity: self.capacity,
            horizon: len,
            costs,
        };
        let mut w: Vec<Vec<f64>> = self.demands.iter().map(|&d| vec![d]).collect();
        w.push(vec![0.0]);
        (
            spec,
            DisturbanceTrajectory { w },
            BoundaryConditions {
                xi0: vec![self.xi0],
                xif: vec![self.terminal],
            },
        )
    }
}

/// One lot-sizing instance per agent for the window `[tau, N]`. The estimator
/// must already reflect the measurement at `tau`; it is advanced period by
/// period while the demand streams are built.
pub fn build_subproblems(
    spec: &SystemSpec,
    w: &DisturbanceTrajectory,
    est: &DemandEstimator,
    tau: usize,
    xi0: &[f64],
) -> Result<Vec<LotSizingInstance>, ModelError> {
    let n = spec.n();
    let horizon = spec.horizon;
    est.check(spec)?;
    if tau >= horizon {
        return Err(ModelError::Dimension(format!("tau = {tau} outside horizon {horizon}")));
    }
    if xi0.len() != n || w.len() < horizon {
        return Err(ModelError::Dimension("initial state or disturbance length mismatch".into()));
    }
    let mut demands = vec![Vec::with_capacity(horizon - tau); n];
    let mut current = est.clone();
    for k in tau..horizon {
        for (i, stream) in demands.iter_mut().enumerate() {
            stream.push(estimated_demand(&current, spec, w.at(k), i));
        }
        current = advance_estimator(&current, spec, w.at(k));
    }
    Ok(demands
        .into_iter()
        .enumerate()
        .map(|(i, demands)| LotSizingInstance {
            agent: i,
            tau,
            horizon_end: horizon,
            xi0: xi0[i],
            terminal: 0.0,
            demands,
            capacity: spec.capacity,
            p: (tau..horizon).map(|k| spec.costs.p[(k, i)]).collect(),
            h: (tau..horizon).map(|k| spec.costs.h[(k, i)]).collect(),
            f: (tau..horizon).map(|k| spec.costs.f[(k, i)]).collect(),
        })
        .collect())
}
