use ballastplan::allocation::{check_feasible, objective, solve, MissionProfile, TankBudget};
use ballastplan::energy_model::EnergyModel;
use ballastplan::reference_oracle::{grid_bound, grid_solve, GridSpec};
use proptest::prelude::*;

fn instance(max_legs: usize) -> impl Strategy<Value = (Vec<f64>, f64)> {
    (1..=max_legs)
        .prop_flat_map(|n| (prop::collection::vec(0.0..150.0f64, n), 0.05..4.0f64))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solver_agrees_with_grid_oracle((d, c) in instance(6)) {
        let m = EnergyModel::default();
        let p = MissionProfile::from_distances(&d).unwrap();
        let budget = TankBudget::new(c).unwrap();
        let grid = GridSpec::new(21).unwrap();
        let ours = solve(&p, &m, budget).unwrap().cost_wh;
        let reference = grid_solve(&p, &m, budget, grid).unwrap().cost_wh;
        let bound = grid_bound(&p, &m, budget, grid);
        prop_assert!(ours <= reference + 1e-6, "solver {ours} worse than grid {reference}");
        prop_assert!(ours >= reference - bound - 1e-9, "grid {reference} exceeds solver {ours} by more than {bound}");
    }

    #[test]
    fn solutions_are_feasible((d, c) in instance(40)) {
        let m = EnergyModel::default();
        let p = MissionProfile::from_distances(&d).unwrap();
        let budget = TankBudget::new(c).unwrap();
        let a = solve(&p, &m, budget).unwrap();
        prop_assert!(check_feasible(&a.delta, &p, budget).unwrap().is_empty());
    }

    #[test]
    fn more_air_never_costs_more((d, c) in instance(20), extra in 0.0..3.0f64) {
        let m = EnergyModel::default();
        let p = MissionProfile::from_distances(&d).unwrap();
        let small = solve(&p, &m, TankBudget::new(c).unwrap()).unwrap().cost_wh;
        let large = solve(&p, &m, TankBudget::new(c + extra).unwrap()).unwrap().cost_wh;
        prop_assert!(large <= small + 1e-7, "{large} > {small}");
    }

    #[test]
    fn feasible_perturbations_do_not_improve(
        (d, c) in instance(6),
        noise in prop::collection::vec(-1.0..1.0f64, 6),
        eps in 1e-4..0.05f64,
    ) {
        let m = EnergyModel::default();
        let p = MissionProfile::from_distances(&d).unwrap();
        let budget = TankBudget::new(c).unwrap();
        let a = solve(&p, &m, budget).unwrap();
        let moved: Vec<f64> = a.delta.iter().zip(&noise).map(|(x, r)| (x + eps * r).clamp(0.0, 1.0)).collect();
        if check_feasible(&moved, &p, budget).unwrap().is_empty() {
            let cost = objective(&p, &m, &moved).unwrap();
            prop_assert!(cost >= a.cost_wh - 1e-7, "{cost} < {}", a.cost_wh);
        }
    }
}

#[test]
fn scaling_distances_scales_cost() {
    let m = EnergyModel::default();
    let p = MissionProfile::from_distances(&[12.0, 7.0, 30.0, 2.0]).unwrap();
    let budget = TankBudget::new(1.3).unwrap();
    let base = solve(&p, &m, budget).unwrap().cost_wh;
    let doubled = solve(&p.scaled(2.0).unwrap(), &m, budget).unwrap().cost_wh;
    assert!((doubled - 2.0 * base).abs() < 1e-6, "{doubled} vs {base}");
}
