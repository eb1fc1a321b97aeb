//! Hold-depth power curves and the transport energy they induce.
//!
//! Two quadratic curves describe the instantaneous thruster power needed to
//! hold depth as a function of the buoyancy level `b`: one while carrying a
//! component (non-increasing in `b`) and one while travelling empty
//! (non-decreasing in `b`). Energy is reported in watt-hours; time in seconds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mission::{self, RowScenario};

pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// Buoyancy level at which the second loaded-power anchor is measured.
pub const LOADED_ANCHOR_LEVEL: f64 = 0.8;

/// Fraction of the current payload's in-water weight carried by ballast air.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct BuoyancyLevel(f64);

impl BuoyancyLevel {
    pub const EMPTY: BuoyancyLevel = BuoyancyLevel(0.0);
    pub const FULL: BuoyancyLevel = BuoyancyLevel(1.0);

    pub fn new(b: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&b) {
            Ok(BuoyancyLevel(b))
        } else {
            Err(Error::domain(format!("buoyancy level {b} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for BuoyancyLevel {
    type Error = Error;

    fn try_from(b: f64) -> Result<Self> {
        BuoyancyLevel::new(b)
    }
}

impl From<BuoyancyLevel> for f64 {
    fn from(b: BuoyancyLevel) -> f64 {
        b.0
    }
}

/// `a2 * b^2 + a1 * b + a0`, in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct PowerCurve {
    a2: f64,
    a1: f64,
    a0: f64,
}

impl PowerCurve {
    /// Builds a curve, rejecting non-convex coefficients or negative power
    /// anywhere on `[0, 1]`.
    pub fn new(a2: f64, a1: f64, a0: f64) -> Result<Self> {
        if !(a2.is_finite() && a1.is_finite() && a0.is_finite()) {
            return Err(Error::domain("power curve coefficients must be finite"));
        }
        if a2 < 0.0 {
            return Err(Error::domain(format!("power curve is not convex (a2 = {a2})")));
        }
        let curve = PowerCurve { a2, a1, a0 };
        let min = curve.min_on_unit_interval();
        if min < 0.0 {
            return Err(Error::domain(format!(
                "power curve goes negative on [0, 1] (minimum {min} W)"
            )));
        }
        Ok(curve)
    }

    pub fn coefficients(&self) -> [f64; 3] {
        [self.a2, self.a1, self.a0]
    }

    pub fn a2(&self) -> f64 {
        self.a2
    }

    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    /// Evaluates without a domain check. Callers own the `[0, 1]` guarantee.
    #[inline]
    pub fn eval_unchecked(&self, b: f64) -> f64 {
        (self.a2 * b + self.a1) * b + self.a0
    }

    pub fn eval(&self, b: BuoyancyLevel) -> f64 {
        self.eval_unchecked(b.0)
    }

    pub fn derivative(&self, b: f64) -> f64 {
        2.0 * self.a2 * b + self.a1
    }

    /// Largest |f'| on `[0, 1]`. The derivative is affine so the endpoints suffice.
    pub fn lipschitz_on_unit_interval(&self) -> f64 {
        self.derivative(0.0).abs().max(self.derivative(1.0).abs())
    }

    fn min_on_unit_interval(&self) -> f64 {
        let mut min = self.eval_unchecked(0.0).min(self.eval_unchecked(1.0));
        if self.a2 > 0.0 {
            let vertex = -self.a1 / (2.0 * self.a2);
            if (0.0..=1.0).contains(&vertex) {
                min = min.min(self.eval_unchecked(vertex));
            }
        }
        min
    }
}

impl TryFrom<[f64; 3]> for PowerCurve {
    type Error = Error;

    fn try_from(c: [f64; 3]) -> Result<Self> {
        PowerCurve::new(c[0], c[1], c[2])
    }
}

impl From<PowerCurve> for [f64; 3] {
    fn from(c: PowerCurve) -> [f64; 3] {
        c.coefficients()
    }
}

/// Checked evaluation: `b` outside `[0, 1]` is a domain error.
pub fn eval_power(curve: &PowerCurve, b: f64) -> Result<f64> {
    Ok(curve.eval(BuoyancyLevel::new(b)?))
}

/// Energy in watt-hours to hold depth at level `b` while covering `distance`
/// meters at `velocity` m/s.
pub fn transport_energy(curve: &PowerCurve, b: f64, distance: f64, velocity: f64) -> Result<f64> {
    if !(velocity > 0.0) {
        return Err(Error::domain(format!("velocity must be positive, got {velocity}")));
    }
    if !(distance >= 0.0) {
        return Err(Error::domain(format!("distance must be non-negative, got {distance}")));
    }
    let watts = eval_power(curve, b)?;
    Ok(watts * (distance / velocity) / SECONDS_PER_HOUR)
}

/// Converts seconds at constant watts to watt-hours.
#[inline]
pub fn watt_seconds_to_wh(watts: f64, seconds: f64) -> f64 {
    watts * seconds / SECONDS_PER_HOUR
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnergyModelDoc", into = "EnergyModelDoc")]
pub struct EnergyModel {
    /// Power while carrying a component.
    pub loaded: PowerCurve,
    /// Power while travelling empty.
    pub unloaded: PowerCurve,
    velocity_mps: f64,
    battery_wh: f64,
}

impl EnergyModel {
    pub const DEFAULT_VELOCITY_MPS: f64 = 0.5;
    pub const DEFAULT_BATTERY_WH: f64 = 230.0;

    pub fn new(
        loaded: PowerCurve,
        unloaded: PowerCurve,
        velocity_mps: f64,
        battery_wh: f64,
    ) -> Result<Self> {
        if !(velocity_mps > 0.0 && velocity_mps.is_finite()) {
            return Err(Error::domain(format!("velocity must be positive, got {velocity_mps}")));
        }
        if !(battery_wh > 0.0 && battery_wh.is_finite()) {
            return Err(Error::domain(format!("battery capacity must be positive, got {battery_wh}")));
        }
        // 101-point grid, matching the monotonicity property the curves must satisfy.
        let grid = (0..=100).map(|k| k as f64 / 100.0);
        let mut prev: Option<(f64, f64)> = None;
        for b in grid {
            let (l, u) = (loaded.eval_unchecked(b), unloaded.eval_unchecked(b));
            if let Some((pl, pu)) = prev {
                if l > pl + 1e-9 {
                    return Err(Error::domain("loaded power curve must be non-increasing on [0, 1]"));
                }
                if u < pu - 1e-9 {
                    return Err(Error::domain("unloaded power curve must be non-decreasing on [0, 1]"));
                }
            }
            prev = Some((l, u));
        }
        Ok(EnergyModel { loaded, unloaded, velocity_mps, battery_wh })
    }

    pub fn velocity_mps(&self) -> f64 {
        self.velocity_mps
    }

    pub fn battery_wh(&self) -> f64 {
        self.battery_wh
    }

    pub fn with_velocity(self, velocity_mps: f64) -> Result<Self> {
        EnergyModel::new(self.loaded, self.unloaded, velocity_mps, self.battery_wh)
    }

    pub fn with_battery(self, battery_wh: f64) -> Result<Self> {
        EnergyModel::new(self.loaded, self.unloaded, self.velocity_mps, battery_wh)
    }

    pub fn curve(&self, loaded: bool) -> &PowerCurve {
        if loaded {
            &self.loaded
        } else {
            &self.unloaded
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl Default for EnergyModel {
    fn default() -> Self {
        fit_curves(&CalibrationAnchors::default()).expect("default anchors are valid")
    }
}

#[derive(Serialize, Deserialize)]
struct EnergyModelDoc {
    loaded: PowerCurve,
    unloaded: PowerCurve,
    velocity_mps: f64,
    battery_wh: f64,
}

impl TryFrom<EnergyModelDoc> for EnergyModel {
    type Error = Error;

    fn try_from(d: EnergyModelDoc) -> Result<Self> {
        EnergyModel::new(d.loaded, d.unloaded, d.velocity_mps, d.battery_wh)
    }
}

impl From<EnergyModel> for EnergyModelDoc {
    fn from(m: EnergyModel) -> Self {
        EnergyModelDoc {
            loaded: m.loaded,
            unloaded: m.unloaded,
            velocity_mps: m.velocity_mps,
            battery_wh: m.battery_wh,
        }
    }
}

/// Measured power points the quadratic curves are fitted through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationAnchors {
    /// Loaded power with no ballast assistance.
    pub p_loaded_b0: f64,
    /// Loaded power at `b = 0.8`.
    pub p_loaded_b08: f64,
    /// Neutral hover power while empty, `f_-(0)`.
    pub p_hover: f64,
    /// Empty power when carrying a full ballast load, `f_-(1)`.
    pub p_unloaded_b1: f64,
}

impl CalibrationAnchors {
    pub const DEFAULT_P_HOVER: f64 = 59.0;

    /// Default anchors with a different hover power; `f_-(1)` stays at three
    /// times the hover power.
    pub fn with_hover(p_hover: f64) -> Self {
        CalibrationAnchors {
            p_hover,
            p_unloaded_b1: 3.0 * p_hover,
            ..CalibrationAnchors::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.p_loaded_b0, self.p_loaded_b08, self.p_hover, self.p_unloaded_b1];
        if all.iter().any(|p| !p.is_finite()) {
            return Err(Error::calibration("anchors must be finite"));
        }
        if !(self.p_loaded_b0 >= self.p_loaded_b08 && self.p_loaded_b08 >= 0.0) {
            return Err(Error::calibration(format!(
                "loaded anchors out of order: f+(0) = {} W, f+(0.8) = {} W",
                self.p_loaded_b0, self.p_loaded_b08
            )));
        }
        if !(self.p_unloaded_b1 >= self.p_hover && self.p_hover >= 0.0) {
            return Err(Error::calibration(format!(
                "unloaded anchors out of order: f-(0) = {} W, f-(1) = {} W",
                self.p_hover, self.p_unloaded_b1
            )));
        }
        Ok(())
    }
}

impl Default for CalibrationAnchors {
    fn default() -> Self {
        CalibrationAnchors {
            p_loaded_b0: 470.0,
            p_loaded_b08: 50.0,
            p_hover: Self::DEFAULT_P_HOVER,
            p_unloaded_b1: 3.0 * Self::DEFAULT_P_HOVER,
        }
    }
}

/// Fits both curves from the anchors.
///
/// The loaded curve passes through `(0, p_loaded_b0)` and `(0.8, p_loaded_b08)`
/// with `f'(1) = 0`; the unloaded curve passes through `(0, p_hover)` and
/// `(1, p_unloaded_b1)` with `f'(0) = 0`. Velocity and battery take their
/// defaults.
pub fn fit_curves(anchors: &CalibrationAnchors) -> Result<EnergyModel> {
    anchors.validate()?;

    // f(b) = a2 b^2 - 2 a2 b + a0, so f(0.8) - f(0) = a2 (0.64 - 1.6).
    let b = LOADED_ANCHOR_LEVEL;
    let a2 = (anchors.p_loaded_b0 - anchors.p_loaded_b08) / (2.0 * b - b * b);
    let loaded = PowerCurve::new(a2, -2.0 * a2, anchors.p_loaded_b0)
        .map_err(|e| Error::calibration(format!("loaded curve: {e}")))?;

    let unloaded = PowerCurve::new(anchors.p_unloaded_b1 - anchors.p_hover, 0.0, anchors.p_hover)
        .map_err(|e| Error::calibration(format!("unloaded curve: {e}")))?;

    EnergyModel::new(
        loaded,
        unloaded,
        EnergyModel::DEFAULT_VELOCITY_MPS,
        EnergyModel::DEFAULT_BATTERY_WH,
    )
    .map_err(|e| Error::calibration(e.to_string()))
}

/// Observed recharge count for a row of a given length, built without ballast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowTarget {
    pub num_blocks: usize,
    pub charges: u64,
}

/// Everything besides the hover power that the unloaded calibration holds fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSetup {
    pub anchors: CalibrationAnchors,
    pub velocity_mps: f64,
    pub battery_wh: f64,
    pub pitch_m: f64,
    pub offset_m: f64,
    /// Inclusive hover-power search range in watts, stepped at 1 W.
    pub search_w: (u32, u32),
}

impl Default for CalibrationSetup {
    fn default() -> Self {
        CalibrationSetup {
            anchors: CalibrationAnchors::default(),
            velocity_mps: EnergyModel::DEFAULT_VELOCITY_MPS,
            battery_wh: EnergyModel::DEFAULT_BATTERY_WH,
            pitch_m: RowScenario::DEFAULT_PITCH_M,
            offset_m: RowScenario::DEFAULT_OFFSET_M,
            search_w: (10, 150),
        }
    }
}

/// Picks the hover power whose zero-ballast recharge counts best match the
/// targets, by exhaustive 1 W search. When several powers tie, the lower
/// median of the tied set is returned.
pub fn calibrate_unloaded(targets: &[RowTarget], setup: &CalibrationSetup) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::calibration("no row targets given"));
    }
    if targets.iter().all(|t| t.charges == 0) {
        return Err(Error::calibration(
            "every target has zero charges; the hover power is unconstrained",
        ));
    }
    let (lo, hi) = setup.search_w;
    if lo > hi {
        return Err(Error::calibration("empty hover-power search range"));
    }

    let profiles = targets
        .iter()
        .map(|t| {
            let row = RowScenario::new(t.num_blocks, setup.pitch_m, setup.offset_m)?;
            Ok(mission::row_to_profile(&row))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut scored = Vec::with_capacity((hi - lo + 1) as usize);
    for watts in lo..=hi {
        let anchors = CalibrationAnchors {
            p_hover: watts as f64,
            p_unloaded_b1: 3.0 * watts as f64,
            ..setup.anchors
        };
        let model = fit_curves(&anchors)?
            .with_velocity(setup.velocity_mps)?
            .with_battery(setup.battery_wh)?;
        let mut sse = 0.0;
        for (profile, target) in profiles.iter().zip(targets) {
            let charges = mission::count_recharges_unballasted(profile, &model) as f64;
            sse += (charges - target.charges as f64).powi(2);
        }
        scored.push((watts, sse));
    }

    let best = scored.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let worst = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    if best == worst {
        return Err(Error::calibration(
            "objective is flat over the search range; targets do not constrain the hover power",
        ));
    }
    let minimizers: Vec<u32> = scored.iter().filter(|s| s.1 == best).map(|s| s.0).collect();
    Ok(minimizers[(minimizers.len() - 1) / 2] as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_model() -> EnergyModel {
        EnergyModel::default()
    }

    #[test]
    fn loaded_anchors_reproduced() {
        let m = default_model();
        assert!((eval_power(&m.loaded, 0.0).unwrap() - 470.0).abs() < 1e-9);
        assert!((eval_power(&m.loaded, 0.8).unwrap() - 50.0).abs() < 1e-9);
        assert!((eval_power(&m.unloaded, 0.0).unwrap() - 59.0).abs() < 1e-12);
    }

    #[test]
    fn loaded_curve_at_full_level() {
        // Hand solution of {a0 = 470, 0.64 a2 + 0.8 a1 + a0 = 50, 2 a2 + a1 = 0}:
        // a2 = 420 / 0.96 = 437.5, a1 = -875, f(1) = 437.5 - 875 + 470 = 32.5.
        let m = default_model();
        assert_eq!(m.loaded.coefficients(), [437.5, -875.0, 470.0]);
        assert!((m.loaded.eval(BuoyancyLevel::FULL) - 32.5).abs() < 1e-12);
        assert_eq!(m.unloaded.coefficients(), [118.0, 0.0, 59.0]);
    }

    #[test]
    fn eval_rejects_out_of_range_level() {
        let m = default_model();
        assert!(matches!(eval_power(&m.loaded, 1.01), Err(Error::Domain(_))));
        assert!(matches!(eval_power(&m.loaded, -0.01), Err(Error::Domain(_))));
        assert!(eval_power(&m.loaded, f64::NAN).is_err());
    }

    #[test]
    fn transport_energy_examples() {
        let m = default_model();
        assert_eq!(transport_energy(&m.loaded, 0.0, 0.0, 0.5).unwrap(), 0.0);
        assert!((transport_energy(&m.loaded, 0.0, 1800.0, 0.5).unwrap() - 470.0).abs() < 1e-9);
        assert!((transport_energy(&m.loaded, 0.8, 900.0, 0.5).unwrap() - 25.0).abs() < 1e-9);
        assert!(matches!(transport_energy(&m.loaded, 0.0, 1.0, 0.0), Err(Error::Domain(_))));
        assert!(transport_energy(&m.loaded, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn flat_loaded_curve_is_allowed() {
        let anchors = CalibrationAnchors {
            p_loaded_b0: 100.0,
            p_loaded_b08: 100.0,
            ..CalibrationAnchors::default()
        };
        let m = fit_curves(&anchors).unwrap();
        assert_eq!(m.loaded.a2(), 0.0);
        assert_eq!(m.loaded.eval(BuoyancyLevel::FULL), 100.0);
    }

    #[test]
    fn misordered_anchors_rejected() {
        let inverted = CalibrationAnchors {
            p_loaded_b0: 40.0,
            p_loaded_b08: 50.0,
            ..CalibrationAnchors::default()
        };
        assert!(matches!(fit_curves(&inverted), Err(Error::Calibration(_))));

        // f(1) = p0 - (p0 - p08) / 0.96 < 0 when p08 is tiny relative to p0.
        let dips_negative = CalibrationAnchors {
            p_loaded_b0: 470.0,
            p_loaded_b08: 1.0,
            ..CalibrationAnchors::default()
        };
        assert!(matches!(fit_curves(&dips_negative), Err(Error::Calibration(_))));
    }

    #[test]
    fn json_shape() {
        let m = default_model();
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["loaded"], serde_json::json!([437.5, -875.0, 470.0]));
        assert_eq!(v["unloaded"], serde_json::json!([118.0, 0.0, 59.0]));
        assert_eq!(v["velocity_mps"], 0.5);
        assert_eq!(v["battery_wh"], 230.0);
        assert_eq!(EnergyModel::from_json(&m.to_json().unwrap()).unwrap(), m);

        let concave = r#"{"loaded":[-1,0,100],"unloaded":[1,0,1],"velocity_mps":0.5,"battery_wh":230}"#;
        assert!(EnergyModel::from_json(concave).is_err());
    }

    /// Independent recharge oracle: at zero ballast every loaded meter costs
    /// f+(0) and every empty meter f-(0), so the row total has a closed form.
    fn closed_form_charges(blocks: usize, hover: f64) -> u64 {
        let n = blocks as f64;
        let one_way = n * 1.0 + 0.4 * n * (n - 1.0) / 2.0;
        let wh = (470.0 + hover) * one_way / 0.5 / 3600.0;
        (wh / 230.0).floor() as u64
    }

    fn grid_oracle(targets: &[(usize, u64)]) -> f64 {
        let scored: Vec<(u32, f64)> = (10..=150)
            .map(|w| {
                let sse = targets
                    .iter()
                    .map(|&(n, c)| (closed_form_charges(n, w as f64) as f64 - c as f64).powi(2))
                    .sum();
                (w, sse)
            })
            .collect();
        let best = scored.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let mins: Vec<u32> = scored.iter().filter(|s| s.1 == best).map(|s| s.0).collect();
        mins[(mins.len() - 1) / 2] as f64
    }

    #[test]
    fn hover_calibration_matches_closed_form_oracle() {
        let targets = [
            RowTarget { num_blocks: 250, charges: 16 },
            RowTarget { num_blocks: 500, charges: 64 },
        ];
        let p = calibrate_unloaded(&targets, &CalibrationSetup::default()).unwrap();
        assert_eq!(p, grid_oracle(&[(250, 16), (500, 64)]));
        assert_eq!(p, 59.0);
    }

    #[test]
    fn hover_calibration_single_target() {
        let targets = [RowTarget { num_blocks: 250, charges: 16 }];
        let p = calibrate_unloaded(&targets, &CalibrationSetup::default()).unwrap();
        assert_eq!(p, grid_oracle(&[(250, 16)]));
        assert!((40.0..=80.0).contains(&p), "p_hover = {p}");
    }

    #[test]
    fn hover_calibration_degenerate_targets() {
        let short = [RowTarget { num_blocks: 10, charges: 0 }];
        assert!(matches!(
            calibrate_unloaded(&short, &CalibrationSetup::default()),
            Err(Error::Calibration(_))
        ));
        assert!(calibrate_unloaded(&[], &CalibrationSetup::default()).is_err());
    }
}
