//! Dense two-phase primal simplex with bounded variables.
//!
//! Problems have the form
//!
//! ```text
//! min c·x  s.t.  A_eq x = b_eq,  A_ge x >= b_ge,  lo <= x <= hi
//! ```
//!
//! with finite lower bounds and possibly infinite upper bounds. Nonbasic
//! variables sit at either bound, so box constraints never become rows.

use serde::{Deserialize, Serialize};

use crate::error::LpError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_ge: Vec<Vec<f64>>,
    pub b_ge: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

impl LpProblem {
    /// `n` variables in `[0, +inf)` with a zero objective and no rows.
    pub fn new(n: usize) -> Self {
        Self {
            c: vec![0.0; n],
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            a_ge: Vec::new(),
            b_ge: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
    }

    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) {
        self.a_ge.push(row);
        self.b_ge.push(rhs);
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.add_ge(row.into_iter().map(|v| -v).collect(), -rhs);
    }

    pub fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(LpError::Dimension(format!(
                "{} bounds for {n} variables",
                self.bounds.len()
            )));
        }
        if self.a_eq.len() != self.b_eq.len() || self.a_ge.len() != self.b_ge.len() {
            return Err(LpError::Dimension("row count differs from rhs length".into()));
        }
        if let Some(row) = self.a_eq.iter().chain(&self.a_ge).find(|r| r.len() != n) {
            return Err(LpError::Dimension(format!(
                "row with {} entries for {n} variables",
                row.len()
            )));
        }
        for (index, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !lo.is_finite() || hi.is_nan() || lo > hi {
                return Err(LpError::Bounds { index, lo, hi });
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
        let eq = self
            .a_eq
            .iter()
            .zip(&self.b_eq)
            .map(|(r, b)| (dot(r) - b).abs());
        let ge = self
            .a_ge
            .iter()
            .zip(&self.b_ge)
            .map(|(r, b)| (b - dot(r)).max(0.0));
        let bounds = self
            .bounds
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &v)| (lo - v).max(v - hi).max(0.0));
        eq.chain(ge).chain(bounds).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Basic columns at termination: structural variables are `0..n`, the
    /// surplus of inequality row `r` is `n + r`.
    pub basis: Vec<usize>,
    /// Multipliers of the equality rows, then of the `>=` rows.
    pub duals_eq: Vec<f64>,
    pub duals_ge: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    fn empty(status: LpStatus, n: usize, iterations: usize) -> Self {
        Self {
            status,
            x: vec![0.0; n],
            objective: f64::NAN,
            basis: Vec::new(),
            duals_eq: Vec::new(),
            duals_ge: Vec::new(),
            iterations,
        }
    }
}

/// Lagrangian lower bound `π·b + Σ_j min_{x_j ∈ [lo, hi]} (c_j − π·A_j) x_j`.
///
/// Valid for any `π_eq` and any `π_ge >= 0`; negative inequality multipliers
/// are clamped to zero. Returns `-inf` if some reduced cost is negative on a
/// variable without an upper bound.
pub fn dual_bound(problem: &LpProblem, duals_eq: &[f64], duals_ge: &[f64]) -> f64 {
    let n = problem.num_vars();
    let mut reduced = problem.c.clone();
    let mut value = 0.0;
    for (row, (b, &pi)) in problem.a_eq.iter().zip(problem.b_eq.iter().zip(duals_eq)) {
        value += pi * b;
        for j in 0..n {
            reduced[j] -= pi * row[j];
        }
    }
    for (row, (b, &pi)) in problem.a_ge.iter().zip(problem.b_ge.iter().zip(duals_ge)) {
        let pi = pi.max(0.0);
        value += pi * b;
        for j in 0..n {
            reduced[j] -= pi * row[j];
        }
    }
    for (d, &(lo, hi)) in reduced.iter().zip(&problem.bounds) {
        if *d >= 0.0 {
            value += d * lo;
        } else if hi.is_finite() {
            value += d * hi;
        } else if *d < -1e-12 {
            return f64::NEG_INFINITY;
        }
    }
    value
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Tableau entries with magnitude below this are treated as zero.
    pub pivot_tol: f64,
    /// Reduced-cost threshold for optimality.
    pub optimality_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            pivot_tol: 1e-9,
            optimality_tol: 1e-9,
            bland_after: 100,
        }
    }
}

/// Solver instance; holds the working tableau of the current solve.
#[derive(Debug, Default)]
pub struct Simplex {
    options: SimplexOptions,
    rows: usize,
    cols: usize,
    tableau: Vec<f64>,
    beta: Vec<f64>,
    upper: Vec<f64>,
    at_upper: Vec<bool>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    reduced: Vec<f64>,
    iterations: usize,
    degenerate_run: usize,
    bland: bool,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
    IterLimit,
}

impl Simplex {
    pub fn new(options: SimplexOptions) -> Self {
        Self {
            options,
            ..Self::default()
        }
    }

    pub fn solve(&mut self, problem: &LpProblem) -> Result<LpSolution, LpError> {
        problem.check()?;
        let n = problem.num_vars();
        let m_eq = problem.a_eq.len();
        let m_ge = problem.a_ge.len();
        let m = m_eq + m_ge;

        // Shift x = lo + x'. Row r reads Σ a x' (− s_r) = rhs, negated when
        // rhs < 0 so that every starting basic value is nonnegative.
        let lo: Vec<f64> = problem.bounds.iter().map(|b| b.0).collect();
        let mut sign = vec![1.0; m];
        let mut rhs = vec![0.0; m];
        let mut needs_artificial = vec![true; m];
        for r in 0..m {
            let (row, b) = if r < m_eq {
                (&problem.a_eq[r], problem.b_eq[r])
            } else {
                (&problem.a_ge[r - m_eq], problem.b_ge[r - m_eq])
            };
            let shifted = b - row.iter().zip(&lo).map(|(a, l)| a * l).sum::<f64>();
            if shifted < 0.0 {
                sign[r] = -1.0;
            }
            rhs[r] = shifted.abs();
            // A negated `>=` row has surplus coefficient +1 and can start basic.
            if r >= m_eq && (sign[r] < 0.0 || shifted == 0.0) {
                needs_artificial[r] = false;
                if shifted == 0.0 {
                    sign[r] = -1.0;
                }
            }
        }
        let n_art = needs_artificial.iter().filter(|&&a| a).count();
        let cols = n + m_ge + n_art;
        self.rows = m;
        self.cols = cols;
        self.tableau = vec![0.0; m * cols];
        self.upper = Vec::with_capacity(cols);
        self.upper
            .extend(problem.bounds.iter().map(|&(l, h)| h - l));
        self.upper.extend(std::iter::repeat_n(f64::INFINITY, m_ge + n_art));
        self.at_upper = vec![false; cols];
        self.basis = vec![0; m];
        self.in_basis = vec![false; cols];
        self.beta = rhs;
        self.iterations = 0;
        self.degenerate_run = 0;
        self.bland = false;

        let mut start_col = vec![0; m];
        let mut next_art = n + m_ge;
        for r in 0..m {
            let row = if r < m_eq {
                &problem.a_eq[r]
            } else {
                &problem.a_ge[r - m_eq]
            };
            let t = &mut self.tableau[r * cols..(r + 1) * cols];
            for j in 0..n {
                t[j] = sign[r] * row[j];
            }
            if r >= m_eq {
                t[n + r - m_eq] = -sign[r];
            }
            start_col[r] = if needs_artificial[r] {
                t[next_art] = 1.0;
                next_art += 1;
                next_art - 1
            } else {
                n + r - m_eq
            };
            self.basis[r] = start_col[r];
            self.in_basis[start_col[r]] = true;
        }

        // Phase 1: minimise the sum of artificials.
        if n_art > 0 {
            let mut cost = vec![0.0; cols];
            for c in cost.iter_mut().skip(n + m_ge) {
                *c = 1.0;
            }
            self.price(&cost);
            match self.run_phase() {
                PhaseOutcome::IterLimit => {
                    return Ok(LpSolution::empty(LpStatus::IterLimit, n, self.iterations))
                }
                // Phase 1 is bounded below by zero.
                PhaseOutcome::Unbounded | PhaseOutcome::Optimal => {}
            }
            let infeasibility: f64 = (0..m)
                .filter(|&r| self.basis[r] >= n + m_ge)
                .map(|r| self.beta[r])
                .sum();
            let scale = 1.0 + self.beta.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            if infeasibility > 1e-9 * scale {
                return Ok(LpSolution::empty(LpStatus::Infeasible, n, self.iterations));
            }
            // Artificials stay at zero from here on.
            for j in n + m_ge..cols {
                self.upper[j] = 0.0;
                self.at_upper[j] = false;
            }
            self.degenerate_run = 0;
        }

        let mut cost = vec![0.0; cols];
        cost[..n].copy_from_slice(&problem.c[..n]);
        self.price(&cost);
        let status = match self.run_phase() {
            PhaseOutcome::Optimal => LpStatus::Optimal,
            PhaseOutcome::Unbounded => {
                return Ok(LpSolution::empty(LpStatus::Unbounded, n, self.iterations))
            }
            PhaseOutcome::IterLimit => {
                return Ok(LpSolution::empty(LpStatus::IterLimit, n, self.iterations))
            }
        };

        let mut x = lo;
        for j in 0..n {
            if self.at_upper[j] {
                x[j] += self.upper[j];
            }
        }
        for r in 0..m {
            let j = self.basis[r];
            if j < n {
                x[j] += self.beta[r].max(0.0).min(self.upper[j]);
            }
        }
        // Starting columns are unit vectors, so π'_r = c_start − d_start = −d_start.
        let duals: Vec<f64> = (0..m)
            .map(|r| -sign[r] * self.reduced[start_col[r]])
            .collect();
        let mut basis: Vec<usize> = self.basis.iter().copied().filter(|&j| j < n + m_ge).collect();
        basis.sort_unstable();
        Ok(LpSolution {
            status,
            objective: problem.objective(&x),
            x,
            basis,
            duals_eq: duals[..m_eq].to_vec(),
            duals_ge: duals[m_eq..].to_vec(),
            iterations: self.iterations,
        })
    }

    fn price(&mut self, cost: &[f64]) {
        let cols = self.cols;
        let mut d = cost.to_vec();
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                let row = &self.tableau[r * cols..(r + 1) * cols];
                for j in 0..cols {
                    d[j] -= cb * row[j];
                }
            }
        }
        self.reduced = d;
    }

    fn choose_entering(&self) -> Option<usize> {
        let tol = self.options.optimality_tol;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.cols {
            if self.in_basis[j] || self.upper[j] <= 0.0 {
                continue;
            }
            let d = self.reduced[j];
            let gain = if self.at_upper[j] { d } else { -d };
            if gain <= tol {
                continue;
            }
            if self.bland {
                return Some(j);
            }
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        best.map(|(j, _)| j)
    }

    fn run_phase(&mut self) -> PhaseOutcome {
        let cols = self.cols;
        let tol = self.options.pivot_tol;
        loop {
            let Some(j) = self.choose_entering() else {
                return PhaseOutcome::Optimal;
            };
            if self.iterations >= self.options.max_iterations {
                return PhaseOutcome::IterLimit;
            }
            self.iterations += 1;
            let sigma = if self.at_upper[j] { -1.0 } else { 1.0 };

            // (step, row, leaving goes to its upper bound)
            let mut leave: Option<(f64, usize, bool)> = None;
            for r in 0..self.rows {
                let delta = sigma * self.tableau[r * cols + j];
                let b = self.basis[r];
                let (limit, to_upper) = if delta > tol {
                    (self.beta[r].max(0.0) / delta, false)
                } else if delta < -tol && self.upper[b].is_finite() {
                    ((self.upper[b] - self.beta[r]).max(0.0) / -delta, true)
                } else {
                    continue;
                };
                let better = match leave {
                    None => true,
                    Some((t, row, _)) => {
                        limit < t - 1e-12 || (limit <= t + 1e-12 && b < self.basis[row])
                    }
                };
                if better {
                    leave = Some((limit, r, to_upper));
                }
            }

            let flip = self.upper[j];
            let step = match leave {
                Some((t, _, _)) if t < flip => t,
                _ if flip.is_finite() => {
                    for r in 0..self.rows {
                        self.beta[r] -= sigma * flip * self.tableau[r * cols + j];
                    }
                    self.at_upper[j] = !self.at_upper[j];
                    self.degenerate_run = 0;
                    continue;
                }
                _ => return PhaseOutcome::Unbounded,
            };
            let (_, r, to_upper) = leave.expect("step implies a leaving row");

            for i in 0..self.rows {
                self.beta[i] -= sigma * step * self.tableau[i * cols + j];
            }
            let entering_start = if self.at_upper[j] { self.upper[j] } else { 0.0 };
            let old = self.basis[r];
            self.beta[r] = entering_start + sigma * step;
            self.at_upper[old] = to_upper;
            self.in_basis[old] = false;
            self.at_upper[j] = false;
            self.in_basis[j] = true;
            self.basis[r] = j;
            self.pivot(r, j);

            if step <= 1e-12 {
                self.degenerate_run += 1;
                if self.degenerate_run > self.options.bland_after {
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let p = self.tableau[r * cols + j];
        for v in &mut self.tableau[r * cols..(r + 1) * cols] {
            *v /= p;
        }
        let (before, rest) = self.tableau.split_at_mut(r * cols);
        let (pivot_row, after) = rest.split_at_mut(cols);
        for row in before.chunks_mut(cols).chain(after.chunks_mut(cols)) {
            let factor = row[j];
            if factor != 0.0 {
                for (v, pv) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= factor * pv;
                }
                row[j] = 0.0;
            }
        }
        let factor = self.reduced[j];
        if factor != 0.0 {
            for (d, pv) in self.reduced.iter_mut().zip(pivot_row.iter()) {
                *d -= factor * pv;
            }
            self.reduced[j] = 0.0;
        }
    }
}

pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    Simplex::new(SimplexOptions::default()).solve(problem)
}
