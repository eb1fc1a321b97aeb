//! Buoyancy allocation over a sequence of loaded and empty legs.
//!
//! A mission alternates loaded legs (odd, 1-indexed) and empty legs (even).
//! Before each leg the ballast changes by a magnitude `delta[i]`: a fill before
//! a loaded leg, a vent before an empty one. The signed lower-triangular
//! operator `M` turns those magnitudes into the level held during each leg,
//! and `M'` totals the compressed air drawn from the tank (fills only).

mod ipm;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::energy_model::{EnergyModel, SECONDS_PER_HOUR};
use crate::error::{Error, Result};
use crate::mission::ComponentKind;

/// Tolerance used by every feasibility decision, for the solver and the grid
/// oracle alike.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Weight of the total-air tie breaker added to the solver objective.
pub const AIR_TIE_WEIGHT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub distance_m: f64,
    pub loaded: bool,
    /// Component carried on a loaded leg, or the one just placed on an empty leg.
    #[serde(default)]
    pub payload: ComponentKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Leg>", into = "Vec<Leg>")]
pub struct MissionProfile {
    legs: Vec<Leg>,
}

impl MissionProfile {
    pub fn new(legs: Vec<Leg>) -> Result<Self> {
        for (i, leg) in legs.iter().enumerate() {
            if !(leg.distance_m >= 0.0 && leg.distance_m.is_finite()) {
                return Err(Error::domain(format!(
                    "leg {} has invalid distance {}",
                    i + 1,
                    leg.distance_m
                )));
            }
            if leg.loaded != (i % 2 == 0) {
                return Err(Error::domain(format!(
                    "leg {} breaks the loaded/empty alternation",
                    i + 1
                )));
            }
        }
        Ok(MissionProfile { legs })
    }

    /// Alternating legs carrying blocks, first leg loaded.
    pub fn from_distances(distances: &[f64]) -> Result<Self> {
        MissionProfile::new(
            distances
                .iter()
                .enumerate()
                .map(|(i, &d)| Leg {
                    distance_m: d,
                    loaded: i % 2 == 0,
                    payload: ComponentKind::Block,
                })
                .collect(),
        )
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    pub fn len(&self) -> usize {
        self.legs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.legs.is_empty()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.legs.iter().map(|l| l.distance_m).collect()
    }

    /// Same legs with every distance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        MissionProfile::new(
            self.legs
                .iter()
                .map(|l| Leg { distance_m: l.distance_m * factor, ..*l })
                .collect(),
        )
    }
}

impl TryFrom<Vec<Leg>> for MissionProfile {
    type Error = Error;

    fn try_from(legs: Vec<Leg>) -> Result<Self> {
        MissionProfile::new(legs)
    }
}

impl From<MissionProfile> for Vec<Leg> {
    fn from(p: MissionProfile) -> Vec<Leg> {
        p.legs
    }
}

/// Tank capacity in full-payload fills.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TankBudget(f64);

impl TankBudget {
    pub fn new(fills: f64) -> Result<Self> {
        if fills > 0.0 && !fills.is_nan() {
            Ok(TankBudget(fills))
        } else {
            Err(Error::domain(format!("tank budget must be positive, got {fills}")))
        }
    }

    pub fn fills(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for TankBudget {
    type Error = Error;

    fn try_from(c: f64) -> Result<Self> {
        TankBudget::new(c)
    }
}

impl From<TankBudget> for f64 {
    fn from(c: TankBudget) -> f64 {
        c.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Non-negative change magnitudes, one per leg.
    pub delta: Vec<f64>,
    /// `M * delta`: the level held during each leg.
    pub levels: Vec<f64>,
    /// `M' * delta+`: air drawn through each leg, in fills.
    pub air_used: Vec<f64>,
    pub cost_wh: f64,
}

impl Allocation {
    /// Builds the derived fields for a given `delta`.
    pub fn from_delta(profile: &MissionProfile, model: &EnergyModel, delta: Vec<f64>) -> Result<Self> {
        let cost_wh = objective(profile, model, &delta)?;
        Ok(Allocation {
            levels: cumulative_levels(&delta),
            air_used: cumulative_air(&delta),
            delta,
            cost_wh,
        })
    }

    pub fn zeros(profile: &MissionProfile, model: &EnergyModel) -> Result<Self> {
        Allocation::from_delta(profile, model, vec![0.0; profile.len()])
    }

    /// Fill to `level` before every loaded leg and vent completely before
    /// every empty leg.
    pub fn fixed_level(profile: &MissionProfile, model: &EnergyModel, level: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&level) {
            return Err(Error::domain(format!("buoyancy level {level} outside [0, 1]")));
        }
        Allocation::from_delta(profile, model, vec![level; profile.len()])
    }

    pub fn total_air(&self) -> f64 {
        self.air_used.last().copied().unwrap_or(0.0)
    }

    /// Per-leg cost in watt-hours.
    pub fn leg_costs(&self, profile: &MissionProfile, model: &EnergyModel) -> Result<Vec<f64>> {
        leg_costs(profile, model, &self.delta)
    }

    /// Writes one CSV row per leg.
    pub fn write_csv<W: std::io::Write>(
        &self,
        profile: &MissionProfile,
        model: &EnergyModel,
        out: W,
    ) -> Result<()> {
        let costs = self.leg_costs(profile, model)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "index",
            "distance_m",
            "loaded",
            "delta",
            "level",
            "air_cumulative",
            "leg_cost_wh",
        ])?;
        for (i, leg) in profile.legs().iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                leg.distance_m.to_string(),
                leg.loaded.to_string(),
                self.delta[i].to_string(),
                self.levels[i].to_string(),
                self.air_used[i].to_string(),
                costs[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Small dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::domain(format!(
                "matrix has {} columns, vector has {} entries",
                self.cols,
                x.len()
            )));
        }
        Ok(self
            .data
            .chunks(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// `M[i][j] = +1` for odd `j <= i`, `-1` for even `j <= i` (1-indexed).
pub fn build_sign_matrix(n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::domain("sign matrix needs at least one leg"));
    }
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            m.set(i, j, if j % 2 == 0 { 1.0 } else { -1.0 });
        }
    }
    Ok(m)
}

/// `M` with the vent columns removed and the fill columns kept as `+1` from
/// their own row down. Multiplies the pickup-only subvector of `delta`.
pub fn build_air_matrix(n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::domain("air matrix needs at least one leg"));
    }
    let fills = n.div_ceil(2);
    let mut m = Matrix::zeros(n, fills);
    for i in 0..n {
        for k in 0..fills {
            if 2 * k <= i {
                m.set(i, k, 1.0);
            }
        }
    }
    Ok(m)
}

/// The fill entries of `delta` (odd legs, 1-indexed).
pub fn pickup_deltas(delta: &[f64]) -> Vec<f64> {
    delta.iter().step_by(2).copied().collect()
}

/// `M * delta` without materializing `M`.
pub fn cumulative_levels(delta: &[f64]) -> Vec<f64> {
    let mut level = 0.0;
    delta
        .iter()
        .enumerate()
        .map(|(i, d)| {
            if i % 2 == 0 {
                level += d;
            } else {
                level -= d;
            }
            level
        })
        .collect()
}

/// `M' * delta+` without materializing `M'`.
pub fn cumulative_air(delta: &[f64]) -> Vec<f64> {
    let mut air = 0.0;
    delta
        .iter()
        .enumerate()
        .map(|(i, d)| {
            if i % 2 == 0 {
                air += d;
            }
            air
        })
        .collect()
}

fn leg_costs(profile: &MissionProfile, model: &EnergyModel, delta: &[f64]) -> Result<Vec<f64>> {
    if delta.len() != profile.len() {
        return Err(Error::domain(format!(
            "delta has {} entries for {} legs",
            delta.len(),
            profile.len()
        )));
    }
    let v = model.velocity_mps();
    cumulative_levels(delta)
        .into_iter()
        .zip(profile.legs())
        .map(|(level, leg)| {
            // Levels that drift outside [0, 1] by rounding are clamped before
            // evaluation; genuinely infeasible input is reported as such.
            if !(-FEASIBILITY_TOL..=1.0 + FEASIBILITY_TOL).contains(&level) {
                return Err(Error::domain(format!("infeasible level {level}")));
            }
            let b = level.clamp(0.0, 1.0);
            Ok(model.curve(leg.loaded).eval_unchecked(b) * leg.distance_m / v / SECONDS_PER_HOUR)
        })
        .collect()
}

/// Total hold-depth energy in watt-hours over the mission.
pub fn objective(profile: &MissionProfile, model: &EnergyModel, delta: &[f64]) -> Result<f64> {
    Ok(leg_costs(profile, model, delta)?.iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum Violation {
    DeltaNegative { index: usize, value: f64 },
    DeltaAboveOne { index: usize, value: f64 },
    LevelNegative { index: usize, value: f64 },
    LevelAboveOne { index: usize, value: f64 },
    AirBudget { used: f64, budget: f64 },
}

impl Violation {
    /// How far past the bound the quantity lies.
    pub fn magnitude(&self) -> f64 {
        match *self {
            Violation::DeltaNegative { value, .. } | Violation::LevelNegative { value, .. } => -value,
            Violation::DeltaAboveOne { value, .. } | Violation::LevelAboveOne { value, .. } => value - 1.0,
            Violation::AirBudget { used, budget } => used - budget,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Indices are reported 1-based like the leg numbering.
        match *self {
            Violation::DeltaNegative { index, value } => write!(f, "delta[{}] = {value} < 0", index + 1),
            Violation::DeltaAboveOne { index, value } => write!(f, "delta[{}] = {value} > 1", index + 1),
            Violation::LevelNegative { index, value } => write!(f, "level[{}] = {value} < 0", index + 1),
            Violation::LevelAboveOne { index, value } => write!(f, "level[{}] = {value} > 1", index + 1),
            Violation::AirBudget { used, budget } => write!(f, "air used {used} > budget {budget}"),
        }
    }
}

/// Lists every violated constraint at tolerance [`FEASIBILITY_TOL`].
pub fn check_feasible(delta: &[f64], profile: &MissionProfile, budget: TankBudget) -> Result<Vec<Violation>> {
    if delta.len() != profile.len() {
        return Err(Error::domain(format!(
            "delta has {} entries for {} legs",
            delta.len(),
            profile.len()
        )));
    }
    let mut out = Vec::new();
    for (index, &value) in delta.iter().enumerate() {
        if !(value >= -FEASIBILITY_TOL) {
            out.push(Violation::DeltaNegative { index, value });
        } else if value > 1.0 + FEASIBILITY_TOL {
            out.push(Violation::DeltaAboveOne { index, value });
        }
    }
    for (index, value) in cumulative_levels(delta).into_iter().enumerate() {
        if !(value >= -FEASIBILITY_TOL) {
            out.push(Violation::LevelNegative { index, value });
        } else if value > 1.0 + FEASIBILITY_TOL {
            out.push(Violation::LevelAboveOne { index, value });
        }
    }
    let used = cumulative_air(delta).last().copied().unwrap_or(0.0);
    if used > budget.fills() + FEASIBILITY_TOL {
        out.push(Violation::AirBudget { used, budget: budget.fills() });
    }
    Ok(out)
}

/// Minimizes the mission hold-depth energy over feasible `delta`.
///
/// The problem is solved in level space, where the objective is separable
/// and every constraint touches at most two neighbouring legs apart from the
/// single tank row. Ties are broken toward less air.
pub fn solve(profile: &MissionProfile, model: &EnergyModel, budget: TankBudget) -> Result<Allocation> {
    if profile.is_empty() {
        return Err(Error::domain("cannot allocate over an empty profile"));
    }
    let problem = ipm::LevelProblem::new(profile, model, budget);
    let delta = match problem.solve() {
        Ok(levels) => levels_to_delta(&levels),
        Err(ipm::Failure { message, last }) => {
            let best = Allocation::from_delta(profile, model, levels_to_delta(&last))
                .ok()
                .map(Box::new);
            return Err(Error::Solver { message, best });
        }
    };
    let violations = check_feasible(&delta, profile, budget)?;
    if let Some(v) = violations.first() {
        return Err(Error::Internal(format!("solver returned an infeasible point: {v}")));
    }
    Allocation::from_delta(profile, model, delta)
}

/// Inverts `M`: magnitudes of the level changes, clamped to `[0, 1]`.
fn levels_to_delta(levels: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(levels.len());
    for (i, &l) in levels.iter().enumerate() {
        let l = l.clamp(0.0, 1.0);
        let step = if i % 2 == 0 { l - prev } else { prev - l };
        let step = step.clamp(0.0, 1.0);
        prev = if i % 2 == 0 { prev + step } else { prev - step };
        out.push(step);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> EnergyModel {
        EnergyModel::default()
    }

    #[test]
    fn sign_matrix_examples() {
        assert_eq!(build_sign_matrix(1).unwrap().to_rows(), vec![vec![1.0]]);
        assert_eq!(
            build_sign_matrix(2).unwrap().to_rows(),
            vec![vec![1.0, 0.0], vec![1.0, -1.0]]
        );
        assert_eq!(
            build_sign_matrix(4).unwrap().to_rows(),
            vec![
                vec![1.0, 0.0, 0.0, 0.0],
                vec![1.0, -1.0, 0.0, 0.0],
                vec![1.0, -1.0, 1.0, 0.0],
                vec![1.0, -1.0, 1.0, -1.0],
            ]
        );
        assert!(matches!(build_sign_matrix(0), Err(Error::Domain(_))));
    }

    #[test]
    fn air_matrix_examples() {
        assert_eq!(build_air_matrix(1).unwrap().to_rows(), vec![vec![1.0]]);
        assert_eq!(build_air_matrix(2).unwrap().to_rows(), vec![vec![1.0], vec![1.0]]);
        assert_eq!(
            build_air_matrix(4).unwrap().to_rows(),
            vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]]
        );
        assert!(build_air_matrix(0).is_err());
    }

    #[test]
    fn matrix_free_products_agree_with_matrices() {
        let delta = [0.7, 0.2, 0.4, 0.9, 0.3];
        let m = build_sign_matrix(5).unwrap();
        let mp = build_air_matrix(5).unwrap();
        assert_eq!(m.mul_vec(&delta).unwrap(), cumulative_levels(&delta));
        assert_eq!(mp.mul_vec(&pickup_deltas(&delta)).unwrap(), cumulative_air(&delta));
    }

    #[test]
    fn objective_examples() {
        let m = model();
        // 10 m at 0.5 m/s is 20 s per leg: (470 W + 59 W) * 20 s / 3600.
        let p = MissionProfile::from_distances(&[10.0, 10.0]).unwrap();
        let e = objective(&p, &m, &[0.0, 0.0]).unwrap();
        assert!((e - 10580.0 / 3600.0).abs() < 1e-12, "{e}");

        let z = MissionProfile::from_distances(&[0.0, 0.0]).unwrap();
        assert_eq!(objective(&z, &m, &[0.5, 0.25]).unwrap(), 0.0);

        assert!(matches!(objective(&p, &m, &[0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn objective_is_sum_of_transport_energies() {
        use crate::energy_model::transport_energy;
        let m = model();
        let d = [3.0, 5.0, 7.5, 2.0];
        let delta = [0.6, 0.1, 0.3, 0.7];
        let p = MissionProfile::from_distances(&d).unwrap();
        let levels = [0.6, 0.5, 0.8, 0.1];
        let expected: f64 = (0..4)
            .map(|i| transport_energy(m.curve(i % 2 == 0), levels[i], d[i], 0.5).unwrap())
            .sum();
        assert!((objective(&p, &m, &delta).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn feasibility_examples() {
        let p = MissionProfile::from_distances(&[1.0, 1.0]).unwrap();
        let big = TankBudget::new(10.0).unwrap();
        assert!(check_feasible(&[0.0, 0.0], &p, big).unwrap().is_empty());

        let v = check_feasible(&[0.0, 0.5], &p, big).unwrap();
        assert_eq!(v, vec![Violation::LevelNegative { index: 1, value: -0.5 }]);
        assert_eq!(v[0].magnitude(), 0.5);

        let v = check_feasible(&[1.0, 0.0], &p, TankBudget::new(0.5).unwrap()).unwrap();
        assert_eq!(v, vec![Violation::AirBudget { used: 1.0, budget: 0.5 }]);
        assert_eq!(v[0].magnitude(), 0.5);
    }

    #[test]
    fn profile_rejects_broken_alternation() {
        let legs = vec![
            Leg { distance_m: 1.0, loaded: false, payload: ComponentKind::Block },
        ];
        assert!(MissionProfile::new(legs).is_err());
        assert!(MissionProfile::from_distances(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn budget_must_be_positive() {
        assert!(TankBudget::new(0.0).is_err());
        assert!(TankBudget::new(-1.0).is_err());
        assert!(TankBudget::new(f64::NAN).is_err());
        assert!(TankBudget::new(1e-9).is_ok());
    }

    #[test]
    fn solve_without_air_stays_at_zero() {
        let m = model();
        let p = MissionProfile::from_distances(&[40.0, 40.0, 25.0, 25.0]).unwrap();
        let a = solve(&p, &m, TankBudget::new(1e-9).unwrap()).unwrap();
        assert!(a.delta.iter().all(|d| d.abs() < 1e-8), "{:?}", a.delta);
        let zero = objective(&p, &m, &[0.0; 4]).unwrap();
        assert!((a.cost_wh - zero).abs() < 1e-5);
    }

    #[test]
    fn solve_fills_and_vents_fully_with_ample_air() {
        let m = model();
        let p = MissionProfile::from_distances(&[100.0, 100.0]).unwrap();
        let a = solve(&p, &m, TankBudget::new(10.0).unwrap()).unwrap();
        // f+ is flat at b = 1, so the level is only pinned to about sqrt(gap).
        assert!((a.delta[0] - 1.0).abs() < 1e-4, "{:?}", a.delta);
        assert!((a.delta[1] - 1.0).abs() < 1e-4, "{:?}", a.delta);
        // f+(1) = 32.5 W and f-(0) = 59 W for 200 s each.
        assert!((a.cost_wh - (32.5 + 59.0) * 200.0 / 3600.0).abs() < 1e-6);
    }

    fn assert_solves(d: &[f64], c: f64) {
        let p = MissionProfile::from_distances(d).unwrap();
        let budget = TankBudget::new(c).unwrap();
        let a = solve(&p, &model(), budget).unwrap();
        assert!(check_feasible(&a.delta, &p, budget).unwrap().is_empty());
    }

    #[test]
    fn solve_handles_degenerate_final_loaded_leg() {
        // Tank row and the last chain row go active together.
        assert_solves(&[196.72948143263307, 121.38047964126706, 10.215897381716843], 0.6346321661423009);
    }

    #[test]
    fn solve_escapes_corrector_cycle() {
        let d = [
            185.028622327756, 98.28878858301184, 74.28087234046944, 162.56306646913873, 9.056905342950028,
            92.94358307074657, 199.64572766196446, 136.25995977703082, 41.880016048510306, 189.51529100559063,
        ];
        assert_solves(&d, 1.4935454245645499);
    }

    #[test]
    fn solve_long_profiles_at_extreme_budgets() {
        let d: Vec<f64> = (0..401).map(|i| ((i * 37 % 101) as f64) * 1.9 + 0.5).collect();
        for c in [1e-6, 3e-3, 0.7, 45.0] {
            assert_solves(&d, c);
        }
    }

    #[test]
    fn solve_rejects_empty_profile() {
        let p = MissionProfile::default();
        assert!(solve(&p, &model(), TankBudget::new(1.0).unwrap()).is_err());
    }

    #[test]
    fn csv_columns() {
        let m = model();
        let p = MissionProfile::from_distances(&[2.0, 2.0]).unwrap();
        let a = Allocation::fixed_level(&p, &m, 0.8).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&p, &m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "index,distance_m,loaded,delta,level,air_cumulative,leg_cost_wh"
        );
        assert!(lines.next().unwrap().starts_with("1,2,true,0.8,0.8,0.8,"));
        assert!(lines.next().unwrap().starts_with("2,2,false,0.8,0,0.8,"));
    }
}
