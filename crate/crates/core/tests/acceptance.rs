//! Acceptance gate. Runs every criterion in order and prints one line each;
//! exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mipc_core::decomposition::{DemandEstimator, LotSizingInstance};
use mipc_core::experiments::{run_kappa_sweep, run_timing_sweep, solve_decomposed, ExperimentConfig, KappaSweepConfig, TimingConfig};
use mipc_core::lotsizing::{
    accumulated_demand, residual_demand, solve_interval, solve_shortest_path, RegenInterval,
    SubproblemStatus, INTEGRALITY_TOL,
};
use mipc_core::lp::{dual_bound, solve_lp, LpProblem, LpStatus};
use mipc_core::milp::{build_stacked, enumerate_exact, MilpStatus};
use mipc_core::model::{step_plant, BoundaryConditions, CostParams, DisturbanceTrajectory, StateBox, SystemSpec};
use mipc_core::receding::{run_closed_loop, solve_one_shot, ClosedLoopOptions, Controller};
use mipc_core::Matrix;

const C: f64 = 3.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn scalar_instance(rng: &mut ChaCha8Rng, max_len: usize) -> LotSizingInstance {
    let len = rng.random_range(1..=max_len);
    let demands = (0..len).map(|_| rng.random_range(0.0..=3.0 * C)).collect();
    LotSizingInstance::uniform(demands, 0.0, C, 1.0, 1.0, 100.0)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut feasible, mut worst) = (0, 0.0f64);
    for case in 0..100 {
        let inst = scalar_instance(&mut rng, 6);
        let sp = match solve_shortest_path(&inst) {
            Ok(sp) => sp,
            Err(e) => return outcome(false, format!("case {case}: {e}")),
        };
        let (spec, w, bc) = inst.as_system();
        let exact = enumerate_exact(&build_stacked(&spec, &w, &bc).unwrap()).unwrap();
        match (exact.status, sp.is_optimal()) {
            (MilpStatus::Optimal, true) => {
                feasible += 1;
                worst = worst.max((sp.cost - exact.objective).abs());
            }
            (MilpStatus::Infeasible, false) => {}
            (status, _) => {
                return outcome(false, format!("case {case}: enumeration {status:?}, path {:?}", sp.status))
            }
        }
    }
    outcome(
        worst <= 1e-7,
        format!("100 instances, {feasible} feasible, max |path - enumeration| = {worst:.2e}"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut solved, mut tries, mut worst) = (0, 0, 0.0f64);
    while solved < 500 {
        tries += 1;
        if tries > 200_000 {
            return outcome(false, format!("only {solved} feasible interval LPs found"));
        }
        let len = rng.random_range(1..=8);
        let mut inst = LotSizingInstance::uniform(
            (0..len).map(|_| rng.random_range(0.0..=3.0 * C)).collect(),
            0.0,
            C,
            0.0,
            0.0,
            0.0,
        );
        inst.p = (0..len).map(|_| rng.random_range(0.1..3.0)).collect();
        inst.h = (0..len).map(|_| rng.random_range(0.0..2.0)).collect();
        inst.f = (0..len).map(|_| rng.random_range(1.0..150.0)).collect();
        let beta = rng.random_range(1..=len);
        let iv = RegenInterval::new(1, beta);
        let lp = mipc_core::lotsizing::build_interval_lp(&inst, iv).unwrap();
        let sol = solve_lp(&lp).unwrap();
        if sol.status != LpStatus::Optimal {
            continue;
        }
        for v in &sol.x {
            worst = worst.max((v - v.round()).abs());
        }
        if let Err(e) = solve_interval(&inst, iv) {
            return outcome(false, format!("{e}"));
        }
        solved += 1;
    }
    outcome(
        worst <= INTEGRALITY_TOL,
        format!("500 feasible LPs ({tries} drawn), max distance to integer {worst:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let twelve = LotSizingInstance::uniform(vec![6.0, 6.0], 10.0, C, 1.0, 1.0, 100.0);
    let seven = LotSizingInstance::uniform(vec![3.0, 4.0], 10.0, C, 1.0, 1.0, 100.0);
    let d12 = accumulated_demand(&twelve, RegenInterval::new(1, 2)).unwrap();
    let d7 = accumulated_demand(&seven, RegenInterval::new(1, 2)).unwrap();
    let status = solve_shortest_path(&seven).unwrap().status;
    outcome(
        d12.effective == 2.0 && !d12.excess_inventory && d7.effective == 0.0 && status == SubproblemStatus::CarryPrevious,
        format!("demand 12 with stock 10 -> {}, demand 7 with stock 10 -> {status:?}", d12.effective),
    )
}

fn pair(kappa: f64, horizon: usize) -> (SystemSpec, DisturbanceTrajectory, BoundaryConditions, DemandEstimator) {
    (
        SystemSpec::coupled_pair(kappa, C, horizon, CostParams::uniform(horizon, 2, 1.0, 1.0, 100.0)),
        DisturbanceTrajectory::constant(horizon, &[1.0, 1.0]),
        BoundaryConditions::zero(2),
        DemandEstimator::example_conservative(1.0, &[0.0, 0.0]).unwrap(),
    )
}

fn criterion_4() -> Outcome {
    let (spec, w, bc, est) = pair(0.225, 6);
    let one_shot = solve_one_shot(&spec, &w, &bc).unwrap().trajectory;
    let opts = ClosedLoopOptions::default();
    let exact = run_closed_loop(&spec, &w, &bc, Controller::ExactMilp, &est, opts).unwrap().trajectory;
    let approx = run_closed_loop(&spec, &w, &bc, Controller::DecomposedLp, &est, opts).unwrap().trajectory;
    let counts = |t: &mipc_core::Trajectory| (t.activations(0), t.activations(1));
    let pass = counts(&one_shot) == (3, 2) && counts(&exact) == (3, 2) && approx.activations(0) == 4;
    outcome(
        pass,
        format!(
            "exact one-shot {:?}, exact closed loop {:?}, decomposed LP {:?}",
            counts(&one_shot),
            counts(&exact),
            counts(&approx)
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut cfg = ExperimentConfig::coupled_pair(0.0, 6);
    cfg.experiment = None;
    cfg.system.kappa = None;
    cfg.kappa_sweep = Some(KappaSweepConfig {
        kappas: vec![0.01, 0.2, 0.225],
    });
    let table = match run_kappa_sweep(&cfg, Controller::DecomposedLp, 0) {
        Ok(t) if t.rows.len() == 3 => t,
        Ok(t) => return outcome(false, format!("sweep errors: {:?}", t.errors)),
        Err(e) => return outcome(false, e.to_string()),
    };
    let eps: Vec<f64> = table.rows.iter().map(|r| r.eps_pct).collect();
    outcome(
        eps[0] <= 0.1 && eps[1] <= 2.0 && eps[2] >= 10.0,
        format!("eps% = {:.3} / {:.3} / {:.3} at kappa 0.01 / 0.2 / 0.225", eps[0], eps[1], eps[2]),
    )
}

fn criterion_6() -> Outcome {
    let mut cfg = ExperimentConfig::coupled_pair(0.1, 6);
    cfg.experiment = None;
    cfg.timing = Some(TimingConfig {
        horizons: vec![6, 8, 9, 10],
        repetitions: 5,
    });
    let table = match run_timing_sweep(&cfg, 0) {
        Ok(t) if t.rows.len() == 4 => t,
        Ok(t) => return outcome(false, format!("sweep errors: {:?}", t.errors)),
        Err(e) => return outcome(false, e.to_string()),
    };
    let row = |n: usize| table.rows.iter().find(|r| r.horizon == n).unwrap();
    let ordered = [8, 9, 10].iter().all(|&n| {
        let r = row(n);
        r.t_lp < r.t_decomp_milp && r.t_decomp_milp < r.t_exact
    });
    let ratio = |n: usize| row(n).t_exact / row(n).t_lp;
    let growing = ratio(6) < ratio(8) && ratio(8) < ratio(10);
    let times: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("N={} {:.3}/{:.3}/{:.3}", r.horizon, r.t_exact, r.t_decomp_milp, r.t_lp))
        .collect();
    outcome(
        ordered && growing,
        format!(
            "ordering {}, exact/lp ratio {:.1} -> {:.1} -> {:.1} {}; ms exact/decomp-milp/lp: {}",
            if ordered { "holds" } else { "broken" },
            ratio(6),
            ratio(8),
            ratio(10),
            if growing { "increasing" } else { "not increasing" },
            times.join(", ")
        ),
    )
}

fn decoupled_exactness(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for case in 0..50 {
        let horizon = rng.random_range(1..=5);
        let mut costs = CostParams::uniform(horizon, 2, 0.0, 0.0, 0.0);
        for k in 0..horizon {
            for i in 0..2 {
                costs.p.set(k, i, rng.random_range(0.1..3.0));
                costs.h.set(k, i, rng.random_range(0.0..2.0));
                costs.f.set(k, i, rng.random_range(1.0..150.0));
            }
        }
        let spec = SystemSpec::new(
            Matrix::zeros(2, 2),
            Matrix::from_rows(vec![vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap(),
            C,
            horizon,
            costs,
        )
        .unwrap();
        let w = DisturbanceTrajectory {
            w: (0..=horizon).map(|_| vec![rng.random_range(0.0..=C), rng.random_range(0.0..=C)]).collect(),
        };
        let bc = BoundaryConditions::zero(2);
        let est = DemandEstimator::box_worst_case(StateBox::new(vec![0.0; 2], vec![10.0; 2]).unwrap());
        let exact = solve_one_shot(&spec, &w, &bc).map_err(|e| e.to_string())?;
        for controller in [Controller::DecomposedLp, Controller::DecomposedMilp] {
            let r = run_closed_loop(&spec, &w, &bc, controller, &est, ClosedLoopOptions::default())
                .map_err(|e| format!("case {case}: {e}"))?;
            worst = worst.max((r.cost - exact.objective).abs());
        }
    }
    Ok(worst)
}

fn random_lp(rng: &mut ChaCha8Rng) -> LpProblem {
    let n = rng.random_range(2..=8);
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut lp = LpProblem::new(n);
    lp.c = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    lp.bounds = vec![(0.0, 2.0); n];
    for _ in 0..rng.random_range(0..=3) {
        let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = row.iter().zip(&x0).map(|(a, x)| a * x).sum();
        lp.add_eq(row, b);
    }
    for _ in 0..rng.random_range(0..=4) {
        let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: f64 = row.iter().zip(&x0).map(|(a, x)| a * x).sum();
        lp.add_ge(row, b - rng.random_range(0.0..0.5));
    }
    lp
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();

    match decoupled_exactness(&mut rng) {
        Ok(worst) if worst <= 1e-7 => {}
        Ok(worst) => failures.push(format!("decoupled exactness off by {worst:.2e}")),
        Err(e) => failures.push(e),
    }

    let (mut partial_bad, mut tiling_bad, mut conservation) = (0, 0, 0.0f64);
    for _ in 0..200 {
        let mut inst = scalar_instance(&mut rng, 8);
        inst.demands.iter_mut().for_each(|d| *d /= 3.0);
        inst.xi0 = if rng.random_bool(0.5) { rng.random_range(0.0..3.0) } else { 0.0 };
        let sp = solve_shortest_path(&inst).unwrap();
        if !sp.is_optimal() {
            continue;
        }
        let mut next = 1;
        for sol in &sp.interval_solutions {
            tiling_bad += usize::from(sol.interval.alpha != next);
            next = sol.interval.beta + 1;
            let mut needed: f64 = sol.interval.control_times().map(|k| inst.demands[k]).sum();
            if sol.interval.alpha == 1 {
                needed -= inst.xi0;
            }
            let supplied: f64 = sol.controls(C).iter().sum();
            conservation = conservation.max((supplied - needed.max(0.0)).abs());
            let partial: u8 = sol.eps.iter().sum();
            partial_bad += usize::from(partial != u8::from(residual_demand(sol.demand, C) > 0.0));
        }
        tiling_bad += usize::from(next != inst.len() + 1);
    }
    if tiling_bad > 0 {
        failures.push(format!("{tiling_bad} tiling violations"));
    }
    if conservation > 1e-8 {
        failures.push(format!("conservation off by {conservation:.2e}"));
    }
    if partial_bad > 0 {
        failures.push(format!("{partial_bad} partial-batch count violations"));
    }

    for kappa in [0.01, 0.1, 0.2, 0.225] {
        let (spec, w, bc, est) = pair(kappa, 6);
        for controller in Controller::ALL {
            let r = run_closed_loop(&spec, &w, &bc, controller, &est, ClosedLoopOptions::default()).unwrap();
            let t = &r.trajectory;
            if (0..6).any(|k| step_plant(&spec, &t.x[k], &t.u[k], w.at(k)) != t.x[k + 1]) {
                failures.push(format!("replay mismatch at kappa {kappa}, {}", controller.name()));
            }
        }
    }
    if let Err(e) = solve_decomposed(&ExperimentConfig::coupled_pair(0.1, 6), Controller::DecomposedLp, 0) {
        failures.push(format!("decomposed plan: {e}"));
    }

    let mut duality = 0.0f64;
    for _ in 0..300 {
        let lp = random_lp(&mut rng);
        let sol = solve_lp(&lp).unwrap();
        if sol.status != LpStatus::Optimal {
            failures.push(format!("feasible bounded LP reported {:?}", sol.status));
            break;
        }
        let bound = dual_bound(&lp, &sol.duals_eq, &sol.duals_ge);
        if bound > sol.objective + 1e-7 {
            failures.push(format!("dual bound {bound} above primal {}", sol.objective));
        }
        duality = duality.max((sol.objective - bound).abs()).max(lp.max_violation(&sol.x));
    }
    if duality > 1e-7 {
        failures.push(format!("duality residual {duality:.2e}"));
    }

    let detail = if failures.is_empty() {
        format!("all properties hold; conservation {conservation:.1e}, duality residual {duality:.1e}")
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("shortest path matches enumeration", criterion_1),
        ("interval LPs are integral", criterion_2),
        ("initial stock revises demand", criterion_3),
        ("activation counts at kappa 0.225", criterion_4),
        ("error sweep shape", criterion_5),
        ("solve time ordering", criterion_6),
        ("property suite", criterion_7),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "criterion {}: {} {name} ({:.1}s): {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
