//! Capacitated lot sizing by regeneration intervals.
//!
//! An interval `[α, β]` covers periods `α..=β`; period `t` carries the control
//! and demand of time `t − 1`. Its LP places full batches (`y`, size `C`) and
//! at most one partial batch (`ε`, size `r`), and the cheapest chain of
//! intervals from `τ` to `N` is found by dynamic programming.

use serde::{Deserialize, Serialize};

use crate::decomposition::LotSizingInstance;
use crate::error::LotSizingError;
use crate::lp::{solve_lp, LpProblem, LpStatus};

/// Width of the integer snap applied before rounding `d/C`.
pub const SNAP_TOL: f64 = 1e-9;
/// Tolerance on replayed states. Snapping `d/C` by `SNAP_TOL` can move a
/// batch total by up to `C · SNAP_TOL`, so this is looser than the snap.
pub const REPLAY_TOL: f64 = 1e-8;
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegenInterval {
    pub alpha: usize,
    pub beta: usize,
}

impl RegenInterval {
    pub fn new(alpha: usize, beta: usize) -> Self {
        Self { alpha, beta }
    }

    pub fn len(&self) -> usize {
        self.beta + 1 - self.alpha
    }

    pub fn is_empty(&self) -> bool {
        self.beta < self.alpha
    }

    /// Control times `α − 1 ..= β − 1`.
    pub fn control_times(&self) -> std::ops::Range<usize> {
        self.alpha - 1..self.beta
    }

    fn check(&self, inst: &LotSizingInstance) -> Result<(), LotSizingError> {
        if self.alpha < inst.tau + 1 || self.alpha > self.beta || self.beta > inst.horizon_end {
            return Err(LotSizingError::BadInterval {
                alpha: self.alpha,
                beta: self.beta,
                first: inst.tau + 1,
                last: inst.horizon_end,
            });
        }
        Ok(())
    }
}

fn snap(v: f64) -> Option<f64> {
    let r = v.round();
    ((v - r).abs() <= SNAP_TOL).then_some(r)
}

pub fn snapped_ceil(v: f64) -> f64 {
    snap(v).unwrap_or_else(|| v.ceil())
}

pub fn snapped_floor(v: f64) -> f64 {
    snap(v).unwrap_or_else(|| v.floor())
}

/// `d − ⌊d/C⌋·C`, exactly zero when `d/C` is within the snap of an integer.
pub fn residual_demand(d_ab: f64, capacity: f64) -> f64 {
    let q = d_ab / capacity;
    match snap(q) {
        Some(_) => 0.0,
        None => d_ab - q.floor() * capacity,
    }
}

/// Per-period demands with the initial stock netted out of the first period
/// and the terminal target added to the last one.
fn net_demands(inst: &LotSizingInstance) -> Vec<f64> {
    let mut d = inst.demands.clone();
    if let Some(first) = d.first_mut() {
        *first -= inst.xi0;
    }
    if let Some(last) = d.last_mut() {
        *last += inst.terminal;
    }
    d
}

/// Demand accumulated over an interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccumulatedDemand {
    /// `Σ d̃` over the interval, before netting the initial stock.
    pub raw: f64,
    /// Demand the interval's batches must cover, clamped at zero.
    pub effective: f64,
    /// The initial stock alone exceeds the demand of a first interval.
    pub excess_inventory: bool,
}

pub fn accumulated_demand(
    inst: &LotSizingInstance,
    iv: RegenInterval,
) -> Result<AccumulatedDemand, LotSizingError> {
    iv.check(inst)?;
    let offset = inst.tau + 1;
    let net = net_demands(inst);
    let raw: f64 = (iv.alpha..=iv.beta).map(|t| inst.demands[t - offset]).sum::<f64>()
        + if iv.beta == inst.horizon_end { inst.terminal } else { 0.0 };
    let total: f64 = (iv.alpha..=iv.beta).map(|t| net[t - offset]).sum();
    Ok(AccumulatedDemand {
        raw,
        effective: total.max(0.0),
        excess_inventory: iv.alpha == offset && total < -SNAP_TOL,
    })
}

/// Coefficient of `u(k)` in the cost once states are eliminated:
/// `p(k) + Σ_{j>k} h(j)`.
fn marginal_costs(inst: &LotSizingInstance) -> Vec<f64> {
    let len = inst.len();
    let mut e = vec![0.0; len];
    let mut tail = 0.0;
    for t in (0..len).rev() {
        e[t] = inst.p[t] + tail;
        tail += inst.h[t];
    }
    e
}

/// Prefix demands and batch counts of one interval.
struct IntervalData {
    prefix: Vec<f64>,
    total: f64,
    residual: f64,
    batches: f64,
    full: f64,
}

impl IntervalData {
    fn new(net: &[f64], first: usize, len: usize, capacity: f64) -> Self {
        let prefix: Vec<f64> = net[first..first + len]
            .iter()
            .scan(0.0, |acc, d| {
                *acc += d;
                Some(*acc)
            })
            .collect();
        let total = *prefix.last().unwrap();
        let clamped = total.max(0.0);
        let residual = residual_demand(clamped, capacity);
        Self {
            batches: snapped_ceil(clamped / capacity),
            full: snapped_ceil((clamped - residual) / capacity),
            prefix,
            total,
            residual,
        }
    }

    /// Lower bounds on the cumulative batch counts after each period.
    fn prefix_bounds(&self, t: usize, capacity: f64) -> (f64, f64) {
        let p = self.prefix[t];
        (
            snapped_ceil(p / capacity).max(0.0),
            snapped_ceil((p - self.residual) / capacity).max(0.0),
        )
    }

    fn zero(&self) -> bool {
        self.total.abs() <= SNAP_TOL
    }

    /// Infeasible without solving anything: the interval ends with stock left
    /// over, or a zero-demand interval needs supply in between.
    fn trivially_infeasible(&self) -> bool {
        self.total < -SNAP_TOL || (self.zero() && self.prefix.iter().any(|&p| p > SNAP_TOL))
    }
}

fn interval_data(inst: &LotSizingInstance, iv: RegenInterval) -> IntervalData {
    IntervalData::new(&net_demands(inst), iv.alpha - inst.tau - 1, iv.len(), inst.capacity)
}

/// Interval LP. Variables are `y` for each period followed by `ε` for each
/// period. Besides the total and prefix batch counts it caps each period at
/// one batch; without the cap several batches could share a period.
pub fn build_interval_lp(inst: &LotSizingInstance, iv: RegenInterval) -> Result<LpProblem, LotSizingError> {
    iv.check(inst)?;
    let data = interval_data(inst, iv);
    let e = marginal_costs(inst);
    Ok(interval_lp(inst, iv, &data, &e))
}

fn interval_lp(inst: &LotSizingInstance, iv: RegenInterval, data: &IntervalData, e: &[f64]) -> LpProblem {
    let len = iv.len();
    let first = iv.alpha - inst.tau - 1;
    let cap = inst.capacity;
    let mut lp = LpProblem::new(2 * len);
    for t in 0..len {
        lp.c[t] = cap * e[first + t] + inst.f[first + t];
        lp.c[len + t] = data.residual * e[first + t] + inst.f[first + t];
    }
    let row = |y_upto: usize, eps_upto: usize| {
        let mut r = vec![0.0; 2 * len];
        r[..y_upto].iter_mut().for_each(|v| *v = 1.0);
        r[len..len + eps_upto].iter_mut().for_each(|v| *v = 1.0);
        r
    };
    lp.add_eq(row(len, len), data.batches);
    lp.add_eq(row(len, 0), data.full);
    for t in 0..len - 1 {
        let (all, full) = data.prefix_bounds(t, cap);
        lp.add_ge(row(t + 1, t + 1), all);
        lp.add_ge(row(t + 1, 0), full);
    }
    for t in 0..len {
        let mut r = vec![0.0; 2 * len];
        r[t] = 1.0;
        r[len + t] = 1.0;
        lp.add_le(r, 1.0);
    }
    lp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSolution {
    pub interval: RegenInterval,
    /// LP objective, meaningful only when `feasible`.
    pub cost: f64,
    pub y: Vec<u8>,
    pub eps: Vec<u8>,
    pub residual: f64,
    pub demand: f64,
    pub feasible: bool,
}

impl IntervalSolution {
    fn infeasible(iv: RegenInterval, data: &IntervalData) -> Self {
        Self {
            interval: iv,
            cost: f64::INFINITY,
            y: Vec::new(),
            eps: Vec::new(),
            residual: data.residual,
            demand: data.total.max(0.0),
            feasible: false,
        }
    }

    /// Control amounts for the interval's periods.
    pub fn controls(&self, capacity: f64) -> Vec<f64> {
        if self.y.is_empty() {
            return vec![0.0; self.interval.len()];
        }
        self.y
            .iter()
            .zip(&self.eps)
            .map(|(&y, &e)| y as f64 * capacity + e as f64 * self.residual)
            .collect()
    }
}

pub fn solve_interval(inst: &LotSizingInstance, iv: RegenInterval) -> Result<IntervalSolution, LotSizingError> {
    iv.check(inst)?;
    let data = interval_data(inst, iv);
    let e = marginal_costs(inst);
    solve_interval_with(inst, iv, &data, &e)
}

fn solve_interval_with(
    inst: &LotSizingInstance,
    iv: RegenInterval,
    data: &IntervalData,
    e: &[f64],
) -> Result<IntervalSolution, LotSizingError> {
    if data.trivially_infeasible() {
        return Ok(IntervalSolution::infeasible(iv, data));
    }
    let len = iv.len();
    if data.zero() {
        return Ok(IntervalSolution {
            interval: iv,
            cost: 0.0,
            y: vec![0; len],
            eps: vec![0; len],
            residual: 0.0,
            demand: 0.0,
            feasible: true,
        });
    }
    // Pigeonhole: more batches due by period t than periods so far.
    let crowded = (0..len).any(|t| data.prefix_bounds(t, inst.capacity).0 > (t + 1) as f64);
    if crowded {
        return Ok(IntervalSolution::infeasible(iv, data));
    }
    let lp = interval_lp(inst, iv, data, e);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Ok(IntervalSolution::infeasible(iv, data)),
        other => {
            return Err(LotSizingError::LpFailure {
                alpha: iv.alpha,
                beta: iv.beta,
                status: format!("{other:?}"),
            })
        }
    }
    let mut bits = Vec::with_capacity(2 * len);
    for (index, &v) in sol.x.iter().enumerate() {
        let rounded = v.round();
        if (v - rounded).abs() > INTEGRALITY_TOL || !(rounded == 0.0 || rounded == 1.0) {
            return Err(LotSizingError::IntegralityViolation {
                alpha: iv.alpha,
                beta: iv.beta,
                index,
                value: v,
            });
        }
        bits.push(rounded as u8);
    }
    let eps = bits.split_off(len);
    Ok(IntervalSolution {
        interval: iv,
        cost: sol.objective,
        y: bits,
        eps,
        residual: data.residual,
        demand: data.total.max(0.0),
        feasible: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubproblemStatus {
    Optimal,
    Infeasible,
    /// The initial stock covers the whole window; the caller should keep its
    /// previous plan.
    CarryPrevious,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlStreams {
    /// States at `τ..=N`.
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemSolution {
    pub agent: usize,
    pub tau: usize,
    pub horizon_end: usize,
    pub status: SubproblemStatus,
    pub chosen_intervals: Vec<RegenInterval>,
    pub interval_solutions: Vec<IntervalSolution>,
    /// Empty unless `status` is `Optimal`.
    pub schedule: ControlStreams,
    /// `Σ p u + h x + f y` over `τ..N−1` along the replayed schedule.
    pub cost: f64,
    /// Sum of the interval LP objectives. Differs from `cost` by a constant
    /// that depends on the demands only.
    pub path_cost: f64,
}

impl SubproblemSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SubproblemStatus::Optimal
    }
}

/// All interval solutions, indexed `[α − τ − 1][β − α]`.
pub fn solve_all_intervals(inst: &LotSizingInstance) -> Result<Vec<Vec<IntervalSolution>>, LotSizingError> {
    let len = inst.len();
    let net = net_demands(inst);
    let e = marginal_costs(inst);
    let mut table = Vec::with_capacity(len);
    for a in 0..len {
        let mut row = Vec::with_capacity(len - a);
        for b in a..len {
            let iv = RegenInterval::new(inst.tau + 1 + a, inst.tau + 1 + b);
            let data = IntervalData::new(&net, a, b - a + 1, inst.capacity);
            row.push(solve_interval_with(inst, iv, &data, &e)?);
        }
        table.push(row);
    }
    Ok(table)
}

pub fn solve_shortest_path(inst: &LotSizingInstance) -> Result<SubproblemSolution, LotSizingError> {
    inst.validate().map_err(|e| LotSizingError::NoSchedule(e.to_string()))?;
    let len = inst.len();
    let table = solve_all_intervals(inst)?;

    // best[v]: cheapest completion from node τ + v. Scanning β upward with a
    // strict comparison keeps the smallest β among ties.
    let mut best = vec![f64::INFINITY; len + 1];
    let mut next = vec![usize::MAX; len + 1];
    best[len] = 0.0;
    for v in (0..len).rev() {
        for b in v..len {
            let arc = &table[v][b - v];
            if !arc.feasible || !best[b + 1].is_finite() {
                continue;
            }
            let total = arc.cost + best[b + 1];
            if total < best[v] - 1e-9 * (1.0 + total.abs()) {
                best[v] = total;
                next[v] = b + 1;
            }
        }
    }

    let mut sol = SubproblemSolution {
        agent: inst.agent,
        tau: inst.tau,
        horizon_end: inst.horizon_end,
        status: SubproblemStatus::Optimal,
        chosen_intervals: Vec::new(),
        interval_solutions: Vec::new(),
        schedule: ControlStreams {
            x: Vec::new(),
            u: Vec::new(),
            y: Vec::new(),
        },
        cost: f64::INFINITY,
        path_cost: f64::INFINITY,
    };
    if len == 0 {
        sol.status = SubproblemStatus::Infeasible;
        return Ok(sol);
    }
    if !best[0].is_finite() {
        let whole = accumulated_demand(inst, RegenInterval::new(inst.tau + 1, inst.horizon_end))?;
        sol.status = if whole.excess_inventory {
            SubproblemStatus::CarryPrevious
        } else {
            SubproblemStatus::Infeasible
        };
        return Ok(sol);
    }
    let mut v = 0;
    while v < len {
        let b = next[v];
        let arc = table[v][b - 1 - v].clone();
        sol.chosen_intervals.push(arc.interval);
        sol.interval_solutions.push(arc);
        v = b;
    }
    sol.path_cost = best[0];
    sol.schedule = schedule_to_controls(inst, &sol)?;
    sol.cost = schedule_cost(inst, &sol.schedule);
    Ok(sol)
}

fn schedule_cost(inst: &LotSizingInstance, s: &ControlStreams) -> f64 {
    (0..inst.len())
        .map(|t| inst.p[t] * s.u[t] + inst.h[t] * s.x[t] + inst.f[t] * s.y[t] as f64)
        .sum()
}

/// Turns the chosen batches into controls and replays
/// `x(k+1) = x(k) − d̃(k) + u(k)` from the initial stock.
pub fn schedule_to_controls(
    inst: &LotSizingInstance,
    sol: &SubproblemSolution,
) -> Result<ControlStreams, LotSizingError> {
    if sol.status != SubproblemStatus::Optimal {
        return Err(LotSizingError::NoSchedule(format!("{:?}", sol.status)));
    }
    let mut u = Vec::with_capacity(inst.len());
    let mut expected = inst.tau + 1;
    for arc in &sol.interval_solutions {
        if arc.interval.alpha != expected {
            return Err(LotSizingError::ReplayViolation(format!(
                "interval tiling: expected start {expected}, got {}",
                arc.interval.alpha
            )));
        }
        u.extend(arc.controls(inst.capacity));
        expected = arc.interval.beta + 1;
    }
    if expected != inst.horizon_end + 1 {
        return Err(LotSizingError::ReplayViolation(format!(
            "intervals end at {}, horizon is {}",
            expected - 1,
            inst.horizon_end
        )));
    }
    let y: Vec<u8> = u.iter().map(|&v| u8::from(v > 0.0)).collect();
    let mut x = Vec::with_capacity(inst.len() + 1);
    x.push(inst.xi0);
    for (t, (&d, &ut)) in inst.demands.iter().zip(&u).enumerate() {
        let next = x[t] - d + ut;
        if next < -REPLAY_TOL {
            return Err(LotSizingError::ReplayViolation(format!(
                "nonnegativity at k = {}: x = {next}",
                inst.tau + t + 1
            )));
        }
        x.push(next);
    }
    let terminal = x[inst.len()];
    if (terminal - inst.terminal).abs() > REPLAY_TOL {
        return Err(LotSizingError::ReplayViolation(format!(
            "terminal condition: x(N) = {terminal}, target {}",
            inst.terminal
        )));
    }
    Ok(ControlStreams { x, u, y })
}

/// The whole path problem as one LP, with every interval's batching rows
/// scaled by its path variable `z`.
#[derive(Debug, Clone)]
pub struct MonolithicLp {
    pub problem: LpProblem,
    /// Each interval with the index of its `z` variable.
    pub arcs: Vec<(RegenInterval, usize)>,
}

pub fn build_monolithic_lp(inst: &LotSizingInstance) -> MonolithicLp {
    let len = inst.len();
    let net = net_demands(inst);
    let e = marginal_costs(inst);
    let cap = inst.capacity;

    struct Arc {
        a: usize,
        b: usize,
        y0: usize,
        z: usize,
        data: IntervalData,
    }
    let mut arcs = Vec::new();
    let mut n = 0;
    for a in 0..len {
        for b in a..len {
            let l = b - a + 1;
            arcs.push(Arc {
                a,
                b,
                y0: n,
                z: n + 2 * l,
                data: IntervalData::new(&net, a, l, cap),
            });
            n += 2 * l + 1;
        }
    }

    let mut lp = LpProblem::new(n);
    for arc in &arcs {
        let l = arc.b - arc.a + 1;
        for t in 0..l {
            lp.c[arc.y0 + t] = cap * e[arc.a + t] + inst.f[arc.a + t];
            lp.c[arc.y0 + l + t] = arc.data.residual * e[arc.a + t] + inst.f[arc.a + t];
        }
        if arc.data.trivially_infeasible() {
            lp.bounds[arc.z] = (0.0, 0.0);
        }
        let gated = |y_upto: usize, eps_upto: usize, count: f64| {
            let mut r = vec![0.0; n];
            r[arc.y0..arc.y0 + y_upto].iter_mut().for_each(|v| *v = 1.0);
            r[arc.y0 + l..arc.y0 + l + eps_upto].iter_mut().for_each(|v| *v = 1.0);
            r[arc.z] = -count;
            r
        };
        lp.add_eq(gated(l, l, arc.data.batches), 0.0);
        lp.add_eq(gated(l, 0, arc.data.full), 0.0);
        for t in 0..l - 1 {
            let (all, full) = arc.data.prefix_bounds(t, cap);
            lp.add_ge(gated(t + 1, t + 1, all), 0.0);
            lp.add_ge(gated(t + 1, 0, full), 0.0);
        }
        for t in 0..l {
            let mut r = vec![0.0; n];
            r[arc.y0 + t] = 1.0;
            r[arc.y0 + l + t] = 1.0;
            r[arc.z] = -1.0;
            lp.add_le(r, 0.0);
        }
    }
    // One unit of flow leaves node τ and is conserved at every inner node.
    let mut source = vec![0.0; n];
    for arc in arcs.iter().filter(|arc| arc.a == 0) {
        source[arc.z] = 1.0;
    }
    lp.add_eq(source, 1.0);
    for v in 1..len {
        let mut r = vec![0.0; n];
        for arc in &arcs {
            if arc.b + 1 == v {
                r[arc.z] += 1.0;
            }
            if arc.a == v {
                r[arc.z] -= 1.0;
            }
        }
        lp.add_eq(r, 0.0);
    }
    MonolithicLp {
        problem: lp,
        arcs: arcs
            .iter()
            .map(|arc| (RegenInterval::new(inst.tau + 1 + arc.a, inst.tau + 1 + arc.b), arc.z))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{build_stacked, solve_bnb, MilpStatus};

    fn inst(demands: &[f64], xi0: f64) -> LotSizingInstance {
        LotSizingInstance::uniform(demands.to_vec(), xi0, 3.0, 1.0, 1.0, 100.0)
    }

    #[test]
    fn accumulated_demand_examples() {
        let i = inst(&[6.0, 6.0], 10.0);
        let whole = accumulated_demand(&i, RegenInterval::new(1, 2)).unwrap();
        assert_eq!(whole.effective, 2.0);
        assert!(!whole.excess_inventory);
        let plain = accumulated_demand(&inst(&[6.0, 6.0], 0.0), RegenInterval::new(1, 2)).unwrap();
        assert_eq!(plain.effective, 12.0);
        let excess = accumulated_demand(&inst(&[3.0, 4.0], 10.0), RegenInterval::new(1, 2)).unwrap();
        assert_eq!(excess.effective, 0.0);
        assert!(excess.excess_inventory);
        // Later intervals never net the initial stock.
        let later = accumulated_demand(&inst(&[3.0, 4.0], 10.0), RegenInterval::new(2, 2)).unwrap();
        assert_eq!(later.effective, 4.0);
        assert!(accumulated_demand(&i, RegenInterval::new(0, 1)).is_err());
        assert!(accumulated_demand(&i, RegenInterval::new(2, 3)).is_err());
    }

    #[test]
    fn residual_examples() {
        assert_eq!(residual_demand(7.0, 3.0), 1.0);
        assert_eq!(residual_demand(6.0, 3.0), 0.0);
        assert_eq!(residual_demand(6.0 + 1e-12, 3.0), 0.0);
        assert_eq!(residual_demand(6.0 - 1e-12, 3.0), 0.0);
        assert_eq!(snapped_ceil(2.0 + 1e-12), 2.0);
        assert_eq!(snapped_ceil(2.0 + 1e-6), 3.0);
    }

    #[test]
    fn interval_lp_examples() {
        let zero = build_interval_lp(&inst(&[0.0, 0.0], 0.0), RegenInterval::new(1, 2)).unwrap();
        // The last two `>=` rows are the per-period caps.
        assert!(zero.b_eq.iter().chain(&zero.b_ge[..2]).all(|&b| b == 0.0));
        let sol = solve_lp(&zero).unwrap();
        assert_eq!(sol.objective, 0.0);

        let single = inst(&[2.0], 0.0);
        let lp = build_interval_lp(&single, RegenInterval::new(1, 1)).unwrap();
        assert_eq!(lp.b_eq, vec![1.0, 0.0]);
        let s = solve_interval(&single, RegenInterval::new(1, 1)).unwrap();
        assert_eq!((s.y.clone(), s.eps.clone()), (vec![0], vec![1]));
        // r·e + f with e = p = 1 for the last period.
        assert!((s.cost - (2.0 + 100.0)).abs() < 1e-9);

        let front = inst(&[5.0, 2.0], 0.0);
        let lp = build_interval_lp(&front, RegenInterval::new(1, 2)).unwrap();
        assert_eq!(lp.b_ge[0], 2.0);
        assert_eq!(lp.b_eq, vec![3.0, 2.0]);
    }

    #[test]
    fn solve_interval_examples() {
        let z = solve_interval(&inst(&[0.0, 0.0, 0.0], 0.0), RegenInterval::new(1, 3)).unwrap();
        assert!(z.feasible && z.cost == 0.0 && z.controls(3.0).iter().all(|&u| u == 0.0));

        let two = solve_interval(&inst(&[0.0, 4.0], 0.0), RegenInterval::new(1, 2)).unwrap();
        assert!(two.feasible);
        assert_eq!(two.y.iter().sum::<u8>(), 1);
        assert_eq!(two.eps.iter().sum::<u8>(), 1);
        assert!(two.cost > 200.0);

        let crowded = solve_interval(&inst(&[7.0, 0.0], 0.0), RegenInterval::new(1, 2)).unwrap();
        assert!(!crowded.feasible);
    }

    /// Stock-out hidden by the partial batch: demands (2, 2) in one interval
    /// must not start with the residual batch alone.
    #[test]
    fn prefix_rows_use_the_interval_residual() {
        let i = inst(&[2.0, 2.0], 0.0);
        let s = solve_interval(&i, RegenInterval::new(1, 2)).unwrap();
        let u = s.controls(3.0);
        assert!(u[0] >= 2.0, "{u:?}");
        assert_eq!(u.iter().sum::<f64>(), 4.0);
    }

    #[test]
    fn shortest_path_with_zero_demand() {
        let s = solve_shortest_path(&inst(&[0.0; 4], 0.0)).unwrap();
        assert_eq!(s.status, SubproblemStatus::Optimal);
        assert_eq!(s.chosen_intervals, vec![RegenInterval::new(1, 1), RegenInterval::new(2, 2),
            RegenInterval::new(3, 3), RegenInterval::new(4, 4)]);
        assert_eq!(s.cost, 0.0);
        assert!(s.schedule.u.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn shortest_path_matches_the_milp() {
        let i = inst(&[1.0; 6], 0.0);
        let s = solve_shortest_path(&i).unwrap();
        let (spec, w, bc) = i.as_system();
        let exact = solve_bnb(&build_stacked(&spec, &w, &bc).unwrap()).unwrap();
        assert_eq!(exact.status, MilpStatus::Optimal);
        assert!((s.cost - exact.objective).abs() < 1e-7, "{} vs {}", s.cost, exact.objective);
        assert_eq!(s.schedule.y, exact.trajectory.y.iter().map(|r| r[0]).collect::<Vec<_>>());
        assert_eq!(s.schedule.y.iter().filter(|&&y| y == 1).count(), 2);
    }

    #[test]
    fn initial_stock_cases() {
        let covered = solve_shortest_path(&inst(&[1.0, 1.0], 5.0)).unwrap();
        assert_eq!(covered.status, SubproblemStatus::CarryPrevious);
        let exact = solve_shortest_path(&inst(&[1.0, 1.0], 2.0)).unwrap();
        assert_eq!(exact.status, SubproblemStatus::Optimal);
        assert!(exact.schedule.u.iter().all(|&u| u == 0.0));
        let partial = solve_shortest_path(&inst(&[1.0, 4.0], 2.0)).unwrap();
        assert_eq!(partial.status, SubproblemStatus::Optimal);
        assert!((partial.schedule.u.iter().sum::<f64>() - 3.0).abs() < 1e-12);
        let short = solve_shortest_path(&inst(&[4.0, 1.0], 0.0)).unwrap();
        assert_eq!(short.status, SubproblemStatus::Infeasible);
    }

    #[test]
    fn schedule_replay_rejects_bad_plans() {
        let i = inst(&[2.0], 0.0);
        let mut s = solve_shortest_path(&i).unwrap();
        let streams = schedule_to_controls(&i, &s).unwrap();
        assert_eq!(streams.u, vec![2.0]);
        assert_eq!(streams.x, vec![0.0, 0.0]);
        s.interval_solutions[0].eps = vec![0];
        assert!(matches!(schedule_to_controls(&i, &s), Err(LotSizingError::ReplayViolation(_))));
        s.status = SubproblemStatus::Infeasible;
        assert!(matches!(schedule_to_controls(&i, &s), Err(LotSizingError::NoSchedule(_))));
    }

    #[test]
    fn monolithic_lp_agrees() {
        let one = build_monolithic_lp(&inst(&[2.0], 0.0));
        assert_eq!(one.arcs.len(), 1);
        let sol = solve_lp(&one.problem).unwrap();
        assert!((sol.x[one.arcs[0].1] - 1.0).abs() < 1e-9);

        let zero = build_monolithic_lp(&inst(&[0.0; 3], 0.0));
        assert!(solve_lp(&zero.problem).unwrap().objective.abs() < 1e-9);

        for demands in [[1.0, 2.0, 0.5, 3.0], [2.5, 0.0, 0.0, 4.0], [3.0, 3.0, 1.0, 0.2]] {
            let i = inst(&demands, 0.5);
            let path = solve_shortest_path(&i).unwrap();
            let mono = solve_lp(&build_monolithic_lp(&i).problem).unwrap();
            assert!((path.path_cost - mono.objective).abs() < 1e-7);
        }
    }
}
