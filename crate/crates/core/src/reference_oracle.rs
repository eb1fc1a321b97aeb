//! Exhaustive grid search over `delta`, used to cross-check the convex solver.
//!
//! Grid points are enumerated in integer level units so that feasibility is
//! decided exactly; the final point is re-checked with the same
//! [`check_feasible`](crate::allocation::check_feasible) the solver uses.

use rayon::prelude::*;

use crate::allocation::{self, Allocation, MissionProfile, TankBudget, FEASIBILITY_TOL};
use crate::energy_model::{EnergyModel, SECONDS_PER_HOUR};
use crate::error::{Error, Result};

/// Largest profile the oracle will enumerate.
pub const MAX_LEGS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    resolution: usize,
}

impl GridSpec {
    pub fn new(resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::domain(format!("grid resolution must be at least 2, got {resolution}")));
        }
        Ok(GridSpec { resolution })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn step(&self) -> f64 {
        1.0 / (self.resolution - 1) as f64
    }
}

#[derive(Clone)]
struct Best {
    cost: f64,
    air: usize,
    levels: Vec<usize>,
}

impl Best {
    fn better_than(&self, other: &Best) -> bool {
        (self.cost, self.air, &self.levels) < (other.cost, other.air, &other.levels)
    }
}

struct Search<'a> {
    costs: &'a [Vec<f64>],
    top: usize,
    max_air: usize,
}

impl Search<'_> {
    fn dfs(&self, i: usize, level: usize, air: usize, cost: f64, path: &mut Vec<usize>, best: &mut Option<Best>) {
        let n = self.costs.len();
        if i == n {
            let cand = Best { cost, air, levels: path.clone() };
            if best.as_ref().is_none_or(|b| cand.better_than(b)) {
                *best = Some(cand);
            }
            return;
        }
        if i % 2 == 0 {
            // Fill: level may only rise, and only while the tank allows.
            for next in level..=self.top {
                let used = air + (next - level);
                if used > self.max_air {
                    break;
                }
                path.push(next);
                self.dfs(i + 1, next, used, cost + self.costs[i][next], path, best);
                path.pop();
            }
        } else {
            for next in 0..=level {
                path.push(next);
                self.dfs(i + 1, next, air, cost + self.costs[i][next], path, best);
                path.pop();
            }
        }
    }
}

/// Minimum-objective feasible `delta` on the grid `{0, h, ..., 1}^n`.
pub fn grid_solve(
    profile: &MissionProfile,
    model: &EnergyModel,
    budget: TankBudget,
    grid: GridSpec,
) -> Result<Allocation> {
    let n = profile.len();
    if n > MAX_LEGS {
        return Err(Error::Size(format!(
            "grid oracle enumerates at most {MAX_LEGS} legs, profile has {n}"
        )));
    }
    if n == 0 {
        return Err(Error::domain("cannot allocate over an empty profile"));
    }
    let h = grid.step();
    let top = grid.resolution - 1;
    let max_air = ((budget.fills() + FEASIBILITY_TOL) / h).floor().min(top as f64 * n as f64) as usize;

    let v = model.velocity_mps();
    let costs: Vec<Vec<f64>> = profile
        .legs()
        .iter()
        .map(|leg| {
            let curve = model.curve(leg.loaded);
            (0..=top)
                .map(|k| curve.eval_unchecked(k as f64 * h) * leg.distance_m / v / SECONDS_PER_HOUR)
                .collect()
        })
        .collect();

    let search = Search { costs: &costs, top, max_air };
    let first_choices = top.min(max_air);
    let best = (0..=first_choices)
        .into_par_iter()
        .map(|l0| {
            let mut best = None;
            let mut path = vec![l0];
            search.dfs(1, l0, l0, costs[0][l0], &mut path, &mut best);
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .reduce(|a, b| if b.better_than(&a) { b } else { a })
        .ok_or_else(|| Error::Internal("grid contains no feasible point".into()))?;

    let mut delta = Vec::with_capacity(n);
    let mut prev = 0usize;
    for (i, &l) in best.levels.iter().enumerate() {
        let step = if i % 2 == 0 { l - prev } else { prev - l };
        delta.push(step as f64 * h);
        prev = l;
    }
    let violations = allocation::check_feasible(&delta, profile, budget)?;
    if let Some(v) = violations.first() {
        return Err(Error::Internal(format!("grid optimum fails the feasibility check: {v}")));
    }
    Allocation::from_delta(profile, model, delta)
}

/// Upper bound on `grid optimum - true optimum`.
///
/// Scaling the continuous optimum's levels by `1 - k h / C` (k fills) and
/// flooring them to the grid keeps every constraint satisfied and moves each
/// level by at most `h + k h / C`; each leg's cost is Lipschitz in its level.
/// The bound saturates at the cost spread between any two feasible points.
pub fn grid_bound(profile: &MissionProfile, model: &EnergyModel, budget: TankBudget, grid: GridSpec) -> f64 {
    let h = grid.step();
    let fills = profile.len().div_ceil(2) as f64;
    let shift = (h + fills * h / budget.fills()).min(1.0);
    let v = model.velocity_mps();
    profile
        .legs()
        .iter()
        .map(|leg| model.curve(leg.loaded).lipschitz_on_unit_interval() * leg.distance_m / v / SECONDS_PER_HOUR)
        .sum::<f64>()
        * shift
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_loaded_leg_fills_completely() {
        let m = EnergyModel::default();
        let p = MissionProfile::from_distances(&[10.0]).unwrap();
        let a = grid_solve(&p, &m, TankBudget::new(1.0).unwrap(), GridSpec::new(11).unwrap()).unwrap();
        assert_eq!(a.delta, vec![1.0]);
    }

    #[test]
    fn no_air_means_no_buoyancy() {
        let m = EnergyModel::default();
        let p = MissionProfile::from_distances(&[5.0, 5.0, 8.0, 8.0]).unwrap();
        let a = grid_solve(&p, &m, TankBudget::new(1e-9).unwrap(), GridSpec::new(21).unwrap()).unwrap();
        assert!(a.delta.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn refuses_large_profiles() {
        let m = EnergyModel::default();
        let p = MissionProfile::from_distances(&[1.0; 10]).unwrap();
        let r = grid_solve(&p, &m, TankBudget::new(1.0).unwrap(), GridSpec::new(3).unwrap());
        assert!(matches!(r, Err(Error::Size(_))));
    }

    #[test]
    fn resolution_must_be_at_least_two() {
        assert!(GridSpec::new(1).is_err());
        assert_eq!(GridSpec::new(21).unwrap().step(), 0.05);
    }

    #[test]
    fn budget_caps_the_fills() {
        let m = EnergyModel::default();
        let p = MissionProfile::from_distances(&[10.0, 10.0, 10.0, 10.0]).unwrap();
        let budget = TankBudget::new(0.5).unwrap();
        let a = grid_solve(&p, &m, budget, GridSpec::new(11).unwrap()).unwrap();
        assert!(a.total_air() <= 0.5 + FEASIBILITY_TOL);
        assert!(allocation::check_feasible(&a.delta, &p, budget).unwrap().is_empty());
    }
}
