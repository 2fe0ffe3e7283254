use mipc_core::decomposition::DemandEstimator;
use mipc_core::model::{step_plant, BoundaryConditions, CostParams, DisturbanceTrajectory, StateBox, SystemSpec};
use mipc_core::receding::{percentage_error, run_closed_loop, solve_one_shot, ClosedLoopOptions, Controller};
use mipc_core::Matrix;
use proptest::prelude::*;

const C: f64 = 3.0;

fn pair(kappa: f64) -> SystemSpec {
    SystemSpec::coupled_pair(kappa, C, 6, CostParams::uniform(6, 2, 1.0, 1.0, 100.0))
}

fn conservative() -> DemandEstimator {
    DemandEstimator::example_conservative(1.0, &[0.0, 0.0]).unwrap()
}

fn run(kappa: f64, controller: Controller) -> mipc_core::receding::ClosedLoopResult {
    let w = DisturbanceTrajectory::constant(6, &[1.0, 1.0]);
    run_closed_loop(&pair(kappa), &w, &BoundaryConditions::zero(2), controller, &conservative(), ClosedLoopOptions::default())
        .unwrap()
}

#[test]
fn exact_one_shot_activates_three_then_two() {
    let w = DisturbanceTrajectory::constant(6, &[1.0, 1.0]);
    for kappa in [0.01, 0.1, 0.2, 0.225] {
        let t = solve_one_shot(&pair(kappa), &w, &BoundaryConditions::zero(2)).unwrap().trajectory;
        assert_eq!((t.activations(0), t.activations(1)), (3, 2), "kappa {kappa}");
    }
}

#[test]
fn strong_coupling_costs_an_extra_batch() {
    let exact = run(0.225, Controller::ExactMilp);
    let approx = run(0.225, Controller::DecomposedLp);
    assert_eq!(exact.trajectory.activations(0), 3);
    assert_eq!(approx.trajectory.activations(0), 4);
    assert!(percentage_error(approx.cost, exact.cost).unwrap() >= 10.0);
}

#[test]
fn weak_coupling_is_nearly_optimal() {
    let w = DisturbanceTrajectory::constant(6, &[1.0, 1.0]);
    for (kappa, bound) in [(0.01, 0.1), (0.2, 2.0)] {
        let exact = solve_one_shot(&pair(kappa), &w, &BoundaryConditions::zero(2)).unwrap();
        let eps = percentage_error(run(kappa, Controller::DecomposedLp).cost, exact.objective).unwrap();
        assert!((0.0..=bound).contains(&eps), "kappa {kappa}: {eps}");
    }
}

#[test]
fn both_decomposed_controllers_agree() {
    for kappa in [0.01, 0.2, 0.225] {
        let lp = run(kappa, Controller::DecomposedLp);
        let milp = run(kappa, Controller::DecomposedMilp);
        assert!((lp.cost - milp.cost).abs() <= 1e-7, "kappa {kappa}");
        assert_eq!(lp.trajectory.y, milp.trajectory.y);
    }
}

#[test]
fn trajectories_replay_exactly() {
    let spec = pair(0.1);
    let w = DisturbanceTrajectory::constant(6, &[1.0, 1.0]);
    for c in Controller::ALL {
        let t = run(0.1, c).trajectory;
        for k in 0..6 {
            assert_eq!(step_plant(&spec, &t.x[k], &t.u[k], w.at(k)), t.x[k + 1], "{c:?} k={k}");
        }
    }
}

fn decoupled() -> impl Strategy<Value = (SystemSpec, DisturbanceTrajectory)> {
    (1..=5usize).prop_flat_map(|horizon| {
        (
            prop::collection::vec((0.1..3.0f64, 0.0..2.0f64, 1.0..150.0f64), horizon * 2),
            prop::collection::vec(prop_oneof![(0u32..=3).prop_map(f64::from), 0.0..C], (horizon + 1) * 2),
        )
            .prop_map(move |(costs, demand)| {
                let mut params = CostParams::uniform(horizon, 2, 0.0, 0.0, 0.0);
                for (j, (p, h, f)) in costs.into_iter().enumerate() {
                    params.p.set(j / 2, j % 2, p);
                    params.h.set(j / 2, j % 2, h);
                    params.f.set(j / 2, j % 2, f);
                }
                let e = Matrix::from_rows(vec![vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap();
                let spec = SystemSpec::new(Matrix::zeros(2, 2), e, C, horizon, params).unwrap();
                let w = DisturbanceTrajectory { w: demand.chunks(2).map(<[f64]>::to_vec).collect() };
                (spec, w)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn decoupled_agents_recover_the_exact_optimum((spec, w) in decoupled()) {
        let bc = BoundaryConditions::zero(2);
        let est = DemandEstimator::box_worst_case(StateBox::new(vec![0.0; 2], vec![10.0; 2]).unwrap());
        let exact = solve_one_shot(&spec, &w, &bc).unwrap();
        for c in [Controller::DecomposedLp, Controller::DecomposedMilp] {
            let r = run_closed_loop(&spec, &w, &bc, c, &est, ClosedLoopOptions::default());
            match exact.status {
                mipc_core::milp::MilpStatus::Optimal => {
                    let r = r.unwrap();
                    prop_assert!((r.cost - exact.objective).abs() <= 1e-7, "{:?}: {} vs {}", c, r.cost, exact.objective);
                }
                mipc_core::milp::MilpStatus::Infeasible => prop_assert!(r.is_err()),
            }
        }
    }
}
