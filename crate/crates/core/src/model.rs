//! Plant and cost model for weakly coupled linear systems.
//!
//! The plant evolves as `x(k+1) = x(k) + Δ x(k) + E w(k) + u(k)` with
//! `0 <= u(k) <= C y(k)` and binary activations `y(k)`. Every type here is a
//! plain value; operations are free functions.

use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Values strictly below this count as negative in the strict sign checks.
pub const STRICT_NEG_TOL: f64 = -1e-12;

/// Dense row-major matrix. The systems handled here have a handful of states,
/// so there is no sparse storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n_cols {
                return Err(ModelError::Dimension(format!(
                    "matrix row {i} has {} entries, expected {n_cols}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        Ok(Self {
            rows: n_rows,
            cols: n_cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// Copy of rows `start..` (used to slice per-period streams).
    pub fn rows_from(&self, start: usize) -> Self {
        let start = start.min(self.rows);
        Self {
            rows: self.rows - start,
            cols: self.cols,
            data: self.data[start * self.cols..].to_vec(),
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.data
            .iter()
            .enumerate()
            .map(move |(idx, &v)| (idx / self.cols.max(1), idx % self.cols.max(1), v))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = ModelError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Self::from_rows(rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Proportional, holding and fixed cost streams, one row per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Cost per unit of control, `N x n`.
    pub p: Matrix,
    /// Cost per unit of state held over a period, `N x n`.
    pub h: Matrix,
    /// Cost per activation, `N x n`.
    pub f: Matrix,
}

impl CostParams {
    pub fn uniform(horizon: usize, n: usize, p: f64, h: f64, f: f64) -> Self {
        Self {
            p: Matrix::filled(horizon, n, p),
            h: Matrix::filled(horizon, n, h),
            f: Matrix::filled(horizon, n, f),
        }
    }

    /// Cost streams for the periods `tau..N`.
    pub fn window(&self, tau: usize) -> Self {
        Self {
            p: self.p.rows_from(tau),
            h: self.h.rows_from(tau),
            f: self.f.rows_from(tau),
        }
    }

    pub fn horizon(&self) -> usize {
        self.p.rows()
    }

    pub fn stage_cost(&self, k: usize, x: &[f64], u: &[f64], y: &[u8]) -> f64 {
        let mut cost = 0.0;
        for i in 0..x.len() {
            cost += self.p[(k, i)] * u[i] + self.h[(k, i)] * x[i] + self.f[(k, i)] * f64::from(y[i]);
        }
        cost
    }
}

/// The coupled plant `A = I + Δ` together with its disturbance gain,
/// control capacity, horizon and costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub delta: Matrix,
    pub e: Matrix,
    pub capacity: f64,
    pub horizon: usize,
    pub costs: CostParams,
}

impl SystemSpec {
    /// Checks dimensions only; use [`validate_spec`] for the remaining invariants.
    pub fn new(
        delta: Matrix,
        e: Matrix,
        capacity: f64,
        horizon: usize,
        costs: CostParams,
    ) -> Result<Self, ModelError> {
        let spec = Self {
            delta,
            e,
            capacity,
            horizon,
            costs,
        };
        let dims = dimension_violations(&spec);
        if let Some(first) = dims.into_iter().next() {
            return Err(ModelError::Dimension(first));
        }
        Ok(spec)
    }

    /// The two-state position/velocity plant
    /// `A = [[1, -κ], [κ, 1]]`, `E = -I`.
    pub fn coupled_pair(kappa: f64, capacity: f64, horizon: usize, costs: CostParams) -> Self {
        let delta = Matrix::from_rows(vec![vec![0.0, -kappa], vec![kappa, 0.0]]).unwrap();
        let e = Matrix::from_rows(vec![vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        Self {
            delta,
            e,
            capacity,
            horizon,
            costs,
        }
    }

    pub fn n(&self) -> usize {
        self.delta.rows()
    }

    pub fn a_matrix(&self) -> Matrix {
        let n = self.n();
        let mut a = self.delta.clone();
        for i in 0..n {
            a.set(i, i, a[(i, i)] + 1.0);
        }
        a
    }

    /// The same plant restricted to the shrinking window `[tau, N]`.
    pub fn window(&self, tau: usize) -> Self {
        Self {
            delta: self.delta.clone(),
            e: self.e.clone(),
            capacity: self.capacity,
            horizon: self.horizon.saturating_sub(tau),
            costs: self.costs.window(tau),
        }
    }
}

/// Disturbances `w(0), ..., w(N)`, one row per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceTrajectory {
    pub w: Vec<Vec<f64>>,
}

impl DisturbanceTrajectory {
    pub fn constant(horizon: usize, value: &[f64]) -> Self {
        Self {
            w: vec![value.to_vec(); horizon + 1],
        }
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.w[k]
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn window(&self, tau: usize) -> Self {
        Self {
            w: self.w[tau.min(self.w.len())..].to_vec(),
        }
    }

    fn check(&self, spec: &SystemSpec) -> Result<(), ModelError> {
        if self.w.len() < spec.horizon + 1 {
            return Err(ModelError::Dimension(format!(
                "disturbance has {} periods, horizon {} needs {}",
                self.w.len(),
                spec.horizon,
                spec.horizon + 1
            )));
        }
        if let Some(bad) = self.w.iter().find(|row| row.len() != spec.e.cols()) {
            return Err(ModelError::Dimension(format!(
                "disturbance row has {} entries, E has {} columns",
                bad.len(),
                spec.e.cols()
            )));
        }
        Ok(())
    }
}

/// States `x(0..=N)`, continuous controls `u(0..N)` and activations `y(0..N)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub y: Vec<Vec<u8>>,
}

impl Trajectory {
    pub fn zeros(horizon: usize, n: usize) -> Self {
        Self {
            x: vec![vec![0.0; n]; horizon + 1],
            u: vec![vec![0.0; n]; horizon],
            y: vec![vec![0; n]; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.u.len()
    }

    /// Single-component view of state `i`.
    pub fn component(&self, i: usize) -> Trajectory {
        Trajectory {
            x: self.x.iter().map(|r| vec![r[i]]).collect(),
            u: self.u.iter().map(|r| vec![r[i]]).collect(),
            y: self.y.iter().map(|r| vec![r[i]]).collect(),
        }
    }

    /// Number of activations of component `i`.
    pub fn activations(&self, i: usize) -> usize {
        self.y.iter().filter(|r| r[i] == 1).count()
    }

    /// Lists every breach of `x >= 0`, `0 <= u <= C y`, `y ∈ {0,1}`.
    pub fn violations(&self, capacity: f64, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (k, row) in self.x.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                if v < -tol {
                    out.push(format!("negative state x_{}({k}) = {v}", i + 1));
                }
            }
        }
        for (k, (u_row, y_row)) in self.u.iter().zip(&self.y).enumerate() {
            for (i, (&u, &y)) in u_row.iter().zip(y_row).enumerate() {
                if y > 1 {
                    out.push(format!("non-binary y_{}({k}) = {y}", i + 1));
                }
                if u < -tol || u > capacity * f64::from(y) + tol {
                    out.push(format!("u_{}({k}) = {u} outside [0, C y]", i + 1));
                }
            }
        }
        out
    }
}

/// Initial state `ξ0` and terminal state `ξf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub xi0: Vec<f64>,
    pub xif: Vec<f64>,
}

impl BoundaryConditions {
    pub fn zero(n: usize) -> Self {
        Self {
            xi0: vec![0.0; n],
            xif: vec![0.0; n],
        }
    }
}

/// Per-component interval `[lo, hi]` the states are assumed to stay in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl StateBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, ModelError> {
        if lo.len() != hi.len() {
            return Err(ModelError::Dimension(format!(
                "box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] <= hi[i])) {
            return Err(ModelError::EmptyBox(i));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    Proportional,
    Holding,
    Fixed,
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostKind::Proportional => "proportional",
            CostKind::Holding => "holding",
            CostKind::Fixed => "fixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// 0-based index; displayed 1-based.
    NonzeroDiagonal { index: usize, value: f64 },
    NegativeCost { kind: CostKind, period: usize, component: usize },
    NonPositiveCapacity(f64),
    EmptyHorizon,
    EmptyState,
    Dimension(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonzeroDiagonal { index, value } => {
                write!(f, "nonzero diagonal at ({0},{0}): {value}", index + 1)
            }
            Violation::NegativeCost {
                kind,
                period,
                component,
            } => write!(f, "negative {kind} cost at period {period}, component {}", component + 1),
            Violation::NonPositiveCapacity(c) => write!(f, "capacity must be positive, got {c}"),
            Violation::EmptyHorizon => f.write_str("horizon must be at least 1"),
            Violation::EmptyState => f.write_str("state dimension must be at least 1"),
            Violation::Dimension(msg) => write!(f, "dimension mismatch: {msg}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

fn dimension_violations(spec: &SystemSpec) -> Vec<String> {
    let n = spec.delta.rows();
    let mut out = Vec::new();
    if spec.delta.cols() != n {
        out.push(format!("Δ is {}x{}, not square", n, spec.delta.cols()));
    }
    if spec.e.rows() != n {
        out.push(format!("E has {} rows, expected {n}", spec.e.rows()));
    }
    for (name, m) in [("p", &spec.costs.p), ("h", &spec.costs.h), ("f", &spec.costs.f)] {
        if m.rows() != spec.horizon || m.cols() != n {
            out.push(format!(
                "{name} is {}x{}, expected {}x{n}",
                m.rows(),
                m.cols(),
                spec.horizon
            ));
        }
    }
    out
}

pub fn validate_spec(spec: &SystemSpec) -> ValidationReport {
    let mut violations: Vec<Violation> = dimension_violations(spec)
        .into_iter()
        .map(Violation::Dimension)
        .collect();
    let n = spec.delta.rows();
    if n == 0 {
        violations.push(Violation::EmptyState);
    }
    if spec.horizon == 0 {
        violations.push(Violation::EmptyHorizon);
    }
    if !(spec.capacity > 0.0) {
        violations.push(Violation::NonPositiveCapacity(spec.capacity));
    }
    if spec.delta.cols() == n {
        for i in 0..n {
            let value = spec.delta[(i, i)];
            if value != 0.0 {
                violations.push(Violation::NonzeroDiagonal { index: i, value });
            }
        }
    }
    for (kind, m) in [
        (CostKind::Proportional, &spec.costs.p),
        (CostKind::Holding, &spec.costs.h),
        (CostKind::Fixed, &spec.costs.f),
    ] {
        for (period, component, v) in m.entries() {
            if v < 0.0 || v.is_nan() {
                violations.push(Violation::NegativeCost {
                    kind,
                    period,
                    component,
                });
            }
        }
    }
    ValidationReport { violations }
}

/// `E w(k) < 0` componentwise for every period of `w`.
pub fn check_unstabilizing(spec: &SystemSpec, w: &DisturbanceTrajectory) -> Result<bool, ModelError> {
    w.check(spec)?;
    Ok(w.w
        .iter()
        .all(|wk| spec.e.mul_vec(wk).iter().all(|&v| v < STRICT_NEG_TOL)))
}

/// `max_{x ∈ box} (Δ x)_i + (E w(k))_i < 0` for every component and period.
pub fn check_weak_coupling(
    spec: &SystemSpec,
    w: &DisturbanceTrajectory,
    x_box: &StateBox,
) -> Result<bool, ModelError> {
    w.check(spec)?;
    let n = spec.n();
    if x_box.dim() != n {
        return Err(ModelError::Dimension(format!(
            "box has {} components, system has {n}",
            x_box.dim()
        )));
    }
    let coupling_max: Vec<f64> = (0..n)
        .map(|i| {
            spec.delta
                .row(i)
                .iter()
                .enumerate()
                .map(|(j, &a)| if a > 0.0 { a * x_box.hi[j] } else { a * x_box.lo[j] })
                .sum()
        })
        .collect();
    Ok(w.w.iter().all(|wk| {
        spec.e
            .mul_vec(wk)
            .iter()
            .zip(&coupling_max)
            .all(|(ew, dx)| dx + ew < STRICT_NEG_TOL)
    }))
}

/// One step of the true plant, `x + Δx + E w_k + u`. No projection onto the
/// positive orthant.
pub fn step_plant(spec: &SystemSpec, x: &[f64], u: &[f64], w_k: &[f64]) -> Vec<f64> {
    let dx = spec.delta.mul_vec(x);
    let ew = spec.e.mul_vec(w_k);
    (0..x.len()).map(|i| x[i] + dx[i] + ew[i] + u[i]).collect()
}

/// `Σ_{k<N} p^k u(k) + h^k x(k) + f^k y(k)`. The terminal state is not costed.
pub fn trajectory_cost(costs: &CostParams, traj: &Trajectory) -> f64 {
    (0..traj.horizon())
        .map(|k| costs.stage_cost(k, &traj.x[k], &traj.u[k], &traj.y[k]))
        .sum()
}
