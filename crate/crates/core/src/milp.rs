//! Exact mixed-integer formulation and its solvers.
//!
//! The dynamics are stacked as `𝐀 x + 𝐁 u = 𝐛` over `x = (x(0), …, x(N))`
//! and `u = (u(0), …, u(N−1))`, with `0 <= u <= C y` and binary `y`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{MilpError, ModelError};
use crate::lp::{LpProblem, LpSolution, LpStatus, Simplex, SimplexOptions};
use crate::model::{BoundaryConditions, DisturbanceTrajectory, Matrix, SystemSpec, Trajectory};

/// Enumeration is refused beyond this many binaries.
pub const ENUMERATION_LIMIT: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    State,
    Control,
    Activation,
}

/// Back-map entry for one flat LP column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarMeta {
    pub kind: VarKind,
    pub period: usize,
    pub component: usize,
}

/// The stacked matrices `𝐀`, `𝐁` and right-hand side `𝐛`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSystem {
    pub a: Matrix,
    pub b_mat: Matrix,
    pub b: Vec<f64>,
}

/// Builds the block bidiagonal system. Row blocks are `−x(0) = −ξ0`, then
/// `A x(k) − x(k+1) + u(k) = −E w(k)` for `k < N`, then `−x(N) = −ξf`.
pub fn stacked_system(
    spec: &SystemSpec,
    w: &DisturbanceTrajectory,
    bc: &BoundaryConditions,
) -> Result<StackedSystem, ModelError> {
    let n = spec.n();
    let horizon = spec.horizon;
    check_dims(spec, w, bc)?;
    let a_dyn = spec.a_matrix();
    let rows = n * (horizon + 2);
    let mut a = Matrix::zeros(rows, n * (horizon + 1));
    let mut b_mat = Matrix::zeros(rows, n * horizon);
    let mut b = vec![0.0; rows];
    for i in 0..n {
        a.set(i, i, -1.0);
        b[i] = -bc.xi0[i];
        let last = n * (horizon + 1) + i;
        a.set(last, n * horizon + i, -1.0);
        b[last] = -bc.xif[i];
    }
    for k in 0..horizon {
        let ew = spec.e.mul_vec(w.at(k));
        for i in 0..n {
            let r = n * (k + 1) + i;
            for j in 0..n {
                a.set(r, n * k + j, a_dyn[(i, j)]);
            }
            a.set(r, n * (k + 1) + i, -1.0);
            b_mat.set(r, n * k + i, 1.0);
            b[r] = -ew[i];
        }
    }
    Ok(StackedSystem { a, b_mat, b })
}

fn check_dims(
    spec: &SystemSpec,
    w: &DisturbanceTrajectory,
    bc: &BoundaryConditions,
) -> Result<(), ModelError> {
    let n = spec.n();
    if bc.xi0.len() != n || bc.xif.len() != n {
        return Err(ModelError::Dimension(format!(
            "boundary conditions have lengths {} and {}, system has {n} states",
            bc.xi0.len(),
            bc.xif.len()
        )));
    }
    if w.len() < spec.horizon {
        return Err(ModelError::Dimension(format!(
            "disturbance has {} periods, horizon is {}",
            w.len(),
            spec.horizon
        )));
    }
    if let Some(row) = w.w.iter().find(|r| r.len() != spec.e.cols()) {
        return Err(ModelError::Dimension(format!(
            "disturbance row has {} entries, E has {} columns",
            row.len(),
            spec.e.cols()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpInstance {
    /// Relaxation over `(x, u, y)` with `y ∈ [0, 1]`.
    pub lp_relaxation: LpProblem,
    /// Flat indices of `y(k)_i`, ordered by period then component.
    pub binary_indices: Vec<usize>,
    pub meta: Vec<VarMeta>,
    pub n: usize,
    pub horizon: usize,
}

impl MilpInstance {
    pub fn state_index(&self, k: usize, i: usize) -> usize {
        k * self.n + i
    }

    pub fn control_index(&self, k: usize, i: usize) -> usize {
        self.n * (self.horizon + 1) + k * self.n + i
    }

    pub fn activation_index(&self, k: usize, i: usize) -> usize {
        self.n * (2 * self.horizon + 1) + k * self.n + i
    }

    fn trajectory(&self, x: &[f64]) -> Trajectory {
        let (n, horizon) = (self.n, self.horizon);
        Trajectory {
            x: (0..=horizon)
                .map(|k| (0..n).map(|i| x[self.state_index(k, i)]).collect())
                .collect(),
            u: (0..horizon)
                .map(|k| (0..n).map(|i| x[self.control_index(k, i)]).collect())
                .collect(),
            y: (0..horizon)
                .map(|k| {
                    (0..n)
                        .map(|i| u8::from(x[self.activation_index(k, i)] > 0.5))
                        .collect()
                })
                .collect(),
        }
    }
}

pub fn build_stacked(
    spec: &SystemSpec,
    w: &DisturbanceTrajectory,
    bc: &BoundaryConditions,
) -> Result<MilpInstance, MilpError> {
    let stacked = stacked_system(spec, w, bc)?;
    let n = spec.n();
    let horizon = spec.horizon;
    let nx = n * (horizon + 1);
    let nu = n * horizon;
    let total = nx + 2 * nu;

    let mut lp = LpProblem::new(total);
    for r in 0..stacked.a.rows() {
        let mut row = vec![0.0; total];
        row[..nx].copy_from_slice(stacked.a.row(r));
        row[nx..nx + nu].copy_from_slice(stacked.b_mat.row(r));
        lp.add_eq(row, stacked.b[r]);
    }

    let mut meta = Vec::with_capacity(total);
    for k in 0..=horizon {
        for i in 0..n {
            meta.push(VarMeta {
                kind: VarKind::State,
                period: k,
                component: i,
            });
        }
    }
    for kind in [VarKind::Control, VarKind::Activation] {
        for k in 0..horizon {
            for i in 0..n {
                meta.push(VarMeta {
                    kind,
                    period: k,
                    component: i,
                });
            }
        }
    }

    let instance = MilpInstance {
        lp_relaxation: LpProblem::new(0),
        binary_indices: (nx + nu..total).collect(),
        meta,
        n,
        horizon,
    };
    for k in 0..horizon {
        for i in 0..n {
            let (xi, ui, yi) = (
                instance.state_index(k, i),
                instance.control_index(k, i),
                instance.activation_index(k, i),
            );
            lp.c[xi] = spec.costs.h[(k, i)];
            lp.c[ui] = spec.costs.p[(k, i)];
            lp.c[yi] = spec.costs.f[(k, i)];
            lp.bounds[yi] = (0.0, 1.0);
            let mut row = vec![0.0; total];
            row[yi] = spec.capacity;
            row[ui] = -1.0;
            lp.add_ge(row, 0.0);
        }
    }
    Ok(MilpInstance {
        lp_relaxation: lp,
        ..instance
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub trajectory: Trajectory,
    pub objective: f64,
    /// Objective of the root relaxation; `NaN` when not computed.
    pub relaxation_bound: f64,
    pub nodes_explored: usize,
    /// Seconds.
    pub wall_time: f64,
}

impl MilpSolution {
    fn infeasible(instance: &MilpInstance, nodes: usize, start: Instant) -> Self {
        Self {
            status: MilpStatus::Infeasible,
            trajectory: Trajectory::zeros(instance.horizon, instance.n),
            objective: f64::INFINITY,
            relaxation_bound: f64::NAN,
            nodes_explored: nodes,
            wall_time: start.elapsed().as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BnbOptions {
    /// A binary within this distance of 0 or 1 counts as integral.
    pub integrality_tol: f64,
    pub simplex: SimplexOptions,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self {
            integrality_tol: 1e-6,
            simplex: SimplexOptions::default(),
        }
    }
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    fixings: Vec<(f64, f64)>,
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap: the smallest bound, then the deepest node, then the oldest node
    // compares greatest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

struct NodeSolver<'a> {
    instance: &'a MilpInstance,
    simplex: Simplex,
    scratch: LpProblem,
    solves: usize,
}

impl<'a> NodeSolver<'a> {
    fn new(instance: &'a MilpInstance, options: SimplexOptions) -> Self {
        Self {
            instance,
            simplex: Simplex::new(options),
            scratch: instance.lp_relaxation.clone(),
            solves: 0,
        }
    }

    fn solve(&mut self, fixings: &[(f64, f64)]) -> Result<Option<LpSolution>, MilpError> {
        for (&idx, &b) in self.instance.binary_indices.iter().zip(fixings) {
            self.scratch.bounds[idx] = b;
        }
        self.solves += 1;
        let sol = self.simplex.solve(&self.scratch)?;
        match sol.status {
            LpStatus::Optimal => Ok(Some(sol)),
            LpStatus::Infeasible => Ok(None),
            LpStatus::Unbounded => Err(MilpError::Unbounded),
            LpStatus::IterLimit => Err(MilpError::IterLimit),
        }
    }
}

/// Best-first branch-and-bound on the LP bound (ties: deeper first), branching
/// on the most fractional activation (ties: lowest flat index).
pub fn solve_bnb(instance: &MilpInstance) -> Result<MilpSolution, MilpError> {
    solve_bnb_with(instance, BnbOptions::default())
}

pub fn solve_bnb_with(instance: &MilpInstance, options: BnbOptions) -> Result<MilpSolution, MilpError> {
    let start = Instant::now();
    let mut solver = NodeSolver::new(instance, options.simplex);
    let root_fix = vec![(0.0, 1.0); instance.binary_indices.len()];
    let Some(root) = solver.solve(&root_fix)? else {
        return Ok(MilpSolution::infeasible(instance, solver.solves, start));
    };
    let relaxation_bound = root.objective;

    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node {
        bound: root.objective,
        depth: 0,
        seq,
        fixings: root_fix,
        x: root.x,
    });
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let prune_tol = 1e-9;

    while let Some(node) = heap.pop() {
        if let Some((best, _)) = &incumbent {
            if node.bound >= best - prune_tol * best.abs().max(1.0) {
                break;
            }
        }
        let branch = most_fractional(instance, &node.x, options.integrality_tol);
        let Some(pos) = branch else {
            // Integral: re-solve with the binaries pinned for a clean point.
            let pinned: Vec<(f64, f64)> = instance
                .binary_indices
                .iter()
                .map(|&idx| {
                    let v = node.x[idx].round();
                    (v, v)
                })
                .collect();
            if let Some(sol) = solver.solve(&pinned)? {
                if incumbent.as_ref().is_none_or(|(best, _)| sol.objective < *best) {
                    incumbent = Some((sol.objective, sol.x));
                }
            }
            continue;
        };
        for value in [0.0, 1.0] {
            let mut fixings = node.fixings.clone();
            fixings[pos] = (value, value);
            if let Some(sol) = solver.solve(&fixings)? {
                let dominated = incumbent
                    .as_ref()
                    .is_some_and(|(best, _)| sol.objective >= best - prune_tol * best.abs().max(1.0));
                if !dominated {
                    seq += 1;
                    heap.push(Node {
                        bound: sol.objective,
                        depth: node.depth + 1,
                        seq,
                        fixings,
                        x: sol.x,
                    });
                }
            }
        }
    }

    Ok(match incumbent {
        Some((objective, x)) => MilpSolution {
            status: MilpStatus::Optimal,
            trajectory: instance.trajectory(&x),
            objective,
            relaxation_bound,
            nodes_explored: solver.solves,
            wall_time: start.elapsed().as_secs_f64(),
        },
        None => MilpSolution::infeasible(instance, solver.solves, start),
    })
}

fn most_fractional(instance: &MilpInstance, x: &[f64], tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (pos, &idx) in instance.binary_indices.iter().enumerate() {
        let v = x[idx];
        let frac = (v - v.floor()).min(v.ceil() - v);
        if frac > tol && best.is_none_or(|(_, f)| frac > f) {
            best = Some((pos, frac));
        }
    }
    best.map(|(pos, _)| pos)
}

/// Brute-force oracle: solves the residual LP for every binary assignment.
pub fn enumerate_exact(instance: &MilpInstance) -> Result<MilpSolution, MilpError> {
    let start = Instant::now();
    let count = instance.binary_indices.len();
    if count > ENUMERATION_LIMIT {
        return Err(MilpError::InstanceTooLarge(count, ENUMERATION_LIMIT));
    }
    let mut solver = NodeSolver::new(instance, SimplexOptions::default());
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u64..(1u64 << count) {
        let fixings: Vec<(f64, f64)> = (0..count)
            .map(|b| {
                let v = ((mask >> b) & 1) as f64;
                (v, v)
            })
            .collect();
        if let Some(sol) = solver.solve(&fixings)? {
            if best.as_ref().is_none_or(|(obj, _)| sol.objective < *obj) {
                best = Some((sol.objective, sol.x));
            }
        }
    }
    Ok(match best {
        Some((objective, x)) => MilpSolution {
            status: MilpStatus::Optimal,
            trajectory: instance.trajectory(&x),
            objective,
            relaxation_bound: f64::NAN,
            nodes_explored: solver.solves,
            wall_time: start.elapsed().as_secs_f64(),
        },
        None => MilpSolution::infeasible(instance, solver.solves, start),
    })
}

/// Solves the relaxation only (all binaries in `[0, 1]`).
pub fn solve_relaxation(instance: &MilpInstance) -> Result<Option<f64>, MilpError> {
    let mut solver = NodeSolver::new(instance, SimplexOptions::default());
    let fix = vec![(0.0, 1.0); instance.binary_indices.len()];
    Ok(solver.solve(&fix)?.map(|s| s.objective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{step_plant, CostParams};

    fn scalar(horizon: usize, capacity: f64, demand: f64) -> (SystemSpec, DisturbanceTrajectory) {
        let spec = SystemSpec::new(
            Matrix::zeros(1, 1),
            Matrix::from_rows(vec![vec![-1.0]]).unwrap(),
            capacity,
            horizon,
            CostParams::uniform(horizon, 1, 1.0, 1.0, 100.0),
        )
        .unwrap();
        (spec, DisturbanceTrajectory::constant(horizon, &[demand]))
    }

    #[test]
    fn stacked_pattern_for_one_period() {
        let (mut spec, w) = scalar(1, 3.0, 0.0);
        spec.e = Matrix::identity(1);
        let s = stacked_system(&spec, &w, &BoundaryConditions::zero(1)).unwrap();
        assert_eq!(s.a.to_rows(), vec![vec![-1.0, 0.0], vec![1.0, -1.0], vec![0.0, -1.0]]);
        assert_eq!(s.b_mat.to_rows(), vec![vec![0.0], vec![1.0], vec![0.0]]);
        assert_eq!(s.b, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn rhs_carries_boundary_and_disturbance() {
        let spec = SystemSpec::coupled_pair(0.1, 3.0, 3, CostParams::uniform(3, 2, 1.0, 1.0, 100.0));
        let w = DisturbanceTrajectory::constant(3, &[1.0, 2.0]);
        let bc = BoundaryConditions {
            xi0: vec![0.5, 0.0],
            xif: vec![0.0, 0.25],
        };
        let s = stacked_system(&spec, &w, &bc).unwrap();
        assert_eq!(s.b.len(), 2 * 5);
        assert_eq!(&s.b[..2], &[-0.5, 0.0]);
        assert_eq!(&s.b[8..], &[0.0, -0.25]);
        // −E w = w for E = −I.
        assert_eq!(&s.b[2..4], &[1.0, 2.0]);
        let zero = stacked_system(&spec, &DisturbanceTrajectory::constant(3, &[0.0, 0.0]), &BoundaryConditions::zero(2)).unwrap();
        assert!(zero.b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn demand_free_optimum_is_zero() {
        let (spec, w) = scalar(2, 3.0, 0.0);
        let inst = build_stacked(&spec, &w, &BoundaryConditions::zero(1)).unwrap();
        let sol = solve_bnb(&inst).unwrap();
        assert_eq!(sol.status, MilpStatus::Optimal);
        assert_eq!(sol.objective, 0.0);
        assert!(sol.trajectory.u.iter().flatten().all(|&u| u == 0.0));
    }

    #[test]
    fn one_batch_covers_two_unit_demands() {
        let (spec, w) = scalar(2, 3.0, 1.0);
        let inst = build_stacked(&spec, &w, &BoundaryConditions::zero(1)).unwrap();
        let sol = solve_bnb(&inst).unwrap();
        let oracle = enumerate_exact(&inst).unwrap();
        // u(0) = 2, x(1) = 1: cost 2 + 1 + 100.
        assert!((sol.objective - 103.0).abs() < 1e-9);
        assert!((sol.objective - oracle.objective).abs() < 1e-7);
        assert!((sol.trajectory.u[0][0] - 2.0).abs() < 1e-9);
        assert_eq!(sol.trajectory.y, vec![vec![1], vec![0]]);
    }

    #[test]
    fn capacity_shortfall_is_infeasible() {
        let (spec, w) = scalar(3, 3.0, 4.0);
        let inst = build_stacked(&spec, &w, &BoundaryConditions::zero(1)).unwrap();
        assert_eq!(solve_bnb(&inst).unwrap().status, MilpStatus::Infeasible);
        assert_eq!(enumerate_exact(&inst).unwrap().status, MilpStatus::Infeasible);
    }

    #[test]
    fn empty_horizon_enumerates_to_zero() {
        let (spec, w) = scalar(0, 3.0, 1.0);
        let inst = build_stacked(&spec, &w, &BoundaryConditions::zero(1)).unwrap();
        let sol = enumerate_exact(&inst).unwrap();
        assert_eq!(sol.status, MilpStatus::Optimal);
        assert_eq!(sol.objective, 0.0);
        assert_eq!(sol.trajectory.horizon(), 0);
    }

    #[test]
    fn enumeration_guard() {
        let (spec, w) = scalar(25, 3.0, 1.0);
        let inst = build_stacked(&spec, &w, &BoundaryConditions::zero(1)).unwrap();
        assert_eq!(enumerate_exact(&inst), Err(MilpError::InstanceTooLarge(25, 24)));
    }

    #[test]
    fn coupled_pair_solution_replays_through_plant() {
        let spec = SystemSpec::coupled_pair(0.1, 3.0, 4, CostParams::uniform(4, 2, 1.0, 1.0, 100.0));
        let w = DisturbanceTrajectory::constant(4, &[1.0, 1.0]);
        let inst = build_stacked(&spec, &w, &BoundaryConditions::zero(2)).unwrap();
        let sol = solve_bnb(&inst).unwrap();
        let oracle = enumerate_exact(&inst).unwrap();
        assert!((sol.objective - oracle.objective).abs() < 1e-7);
        assert!(sol.relaxation_bound <= sol.objective + 1e-9);
        let t = &sol.trajectory;
        assert!(t.violations(3.0, 1e-9).is_empty());
        for k in 0..4 {
            let next = step_plant(&spec, &t.x[k], &t.u[k], w.at(k));
            for i in 0..2 {
                assert!((next[i] - t.x[k + 1][i]).abs() <= 1e-8);
            }
        }
    }
}
