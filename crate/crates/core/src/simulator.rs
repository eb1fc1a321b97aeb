//! Discrete-event simulation of the pick, ballast, carry, place, return cycle.
//!
//! Each loaded leg produces `grasp -> add_buoyancy -> transport` and each empty
//! leg `place -> return_leg`. Energy, time and tank pressure are accumulated
//! event by event; the mission totals are the plain sums of the event fields.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::allocation::{Allocation, MissionProfile};
use crate::energy_model::{watt_seconds_to_wh, EnergyModel};
use crate::error::{Error, Result};
use crate::mission::{self, ComponentSpec};

/// Depth of water equivalent to one atmosphere, meters.
const WATER_COLUMN_PER_ATM_M: f64 = 10.3;
const MAX_PULSES: u32 = 1_000_000;
/// Pulses delivering less than this many PSI count as a stalled tank.
const STALL_PSI: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub depth_m: f64,
    pub water_density: f64,
    pub surface_psi: f64,
}

impl Environment {
    pub fn new(depth_m: f64, water_density: f64, surface_psi: f64) -> Result<Self> {
        if !(depth_m >= 0.0 && depth_m.is_finite()) {
            return Err(Error::domain(format!("depth must be non-negative, got {depth_m}")));
        }
        if !(water_density > 0.0 && surface_psi > 0.0) {
            return Err(Error::domain("water density and surface pressure must be positive"));
        }
        Ok(Environment { depth_m, water_density, surface_psi })
    }

    pub fn at_depth(depth_m: f64) -> Result<Self> {
        let d = Environment::default();
        Environment::new(depth_m, d.water_density, d.surface_psi)
    }

    /// Absolute pressure at depth, PSI.
    pub fn ambient_psi(&self) -> f64 {
        self.surface_psi * (1.0 + self.depth_m / WATER_COLUMN_PER_ATM_M)
    }
}

impl Default for Environment {
    fn default() -> Self {
        Environment { depth_m: 4.0, water_density: 1000.0, surface_psi: 14.7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TankState {
    pub pressure_psi: f64,
    pub volume_l: f64,
    pub max_pressure_psi: f64,
}

impl TankState {
    pub const DEFAULT_VOLUME_L: f64 = 3.0;
    pub const DEFAULT_MAX_PSI: f64 = 3000.0;

    pub fn new(pressure_psi: f64, volume_l: f64, max_pressure_psi: f64) -> Result<Self> {
        if !(volume_l > 0.0) {
            return Err(Error::domain(format!("tank volume must be positive, got {volume_l}")));
        }
        if !(0.0..=max_pressure_psi).contains(&pressure_psi) {
            return Err(Error::domain(format!(
                "tank pressure {pressure_psi} PSI outside [0, {max_pressure_psi}]"
            )));
        }
        Ok(TankState { pressure_psi, volume_l, max_pressure_psi })
    }

    pub fn with_pressure(self, pressure_psi: f64) -> Result<Self> {
        TankState::new(pressure_psi, self.volume_l, self.max_pressure_psi)
    }

    /// Mass of water the tank's air can displace once expanded to ambient pressure.
    pub fn offset_capacity_kg(&self, env: &Environment) -> f64 {
        self.volume_l * self.pressure_psi / env.ambient_psi() * env.water_density / 1000.0
    }
}

impl Default for TankState {
    fn default() -> Self {
        TankState {
            pressure_psi: Self::DEFAULT_MAX_PSI,
            volume_l: Self::DEFAULT_VOLUME_L,
            max_pressure_psi: Self::DEFAULT_MAX_PSI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirDemand {
    /// Ballast volume at ambient pressure.
    pub ambient_liters: f64,
    /// Pressure drop in the supplying tank.
    pub tank_psi_drop: f64,
}

/// Air needed to offset `b` of an in-water mass, drawn from a tank of
/// `tank_volume_l` liters (isothermal ideal gas).
pub fn air_for_buoyancy_from(mass_water_kg: f64, b: f64, env: &Environment, tank_volume_l: f64) -> Result<AirDemand> {
    if !(mass_water_kg >= 0.0) {
        return Err(Error::domain(format!("in-water mass must be non-negative, got {mass_water_kg}")));
    }
    if !(0.0..=1.0).contains(&b) {
        return Err(Error::domain(format!("buoyancy level {b} outside [0, 1]")));
    }
    let ambient_liters = b * mass_water_kg / env.water_density * 1000.0;
    Ok(AirDemand {
        ambient_liters,
        tank_psi_drop: ambient_liters * env.ambient_psi() / tank_volume_l,
    })
}

/// [`air_for_buoyancy_from`] for the default 3 L tank.
pub fn air_for_buoyancy(mass_water_kg: f64, b: f64, env: &Environment) -> Result<AirDemand> {
    air_for_buoyancy_from(mass_water_kg, b, env, TankState::DEFAULT_VOLUME_L)
}

/// Valve pulsing: each pulse moves a fixed fraction of the pressure
/// difference between tank and ambient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseModel {
    pub on_s: f64,
    pub gap_s: f64,
    pub flow_fraction: f64,
}

impl PulseModel {
    fn validate(&self) -> Result<()> {
        if !(self.on_s >= 0.0 && self.gap_s >= 0.0) {
            return Err(Error::config("pulse timings must be non-negative"));
        }
        if !(self.flow_fraction > 0.0 && self.flow_fraction <= 1.0) {
            return Err(Error::config(format!(
                "pulse flow fraction must lie in (0, 1], got {}",
                self.flow_fraction
            )));
        }
        Ok(())
    }
}

impl Default for PulseModel {
    fn default() -> Self {
        PulseModel { on_s: 0.5, gap_s: 0.5, flow_fraction: 0.0007 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FillOutcome {
    pub tank: TankState,
    pub pulses: u32,
    pub duration_s: f64,
    pub psi_used: f64,
    /// The tank could not deliver the requested air.
    pub partial: bool,
}

/// Pulses the valve until the ballast holds `target_b` of the payload.
/// The final pulse is cut short once enough air has moved.
pub fn pulse_fill(
    tank: TankState,
    target_b: f64,
    payload: &ComponentSpec,
    env: &Environment,
    pulse: &PulseModel,
) -> Result<FillOutcome> {
    pulse.validate()?;
    let demand = air_for_buoyancy_from(payload.mass_water_kg, target_b, env, tank.volume_l)?;
    let ambient = env.ambient_psi();
    let mut remaining = demand.tank_psi_drop;
    let mut pressure = tank.pressure_psi;
    let mut pulses = 0u32;
    let mut partial = false;

    while remaining > 0.0 {
        let step = pulse.flow_fraction * (pressure - ambient);
        if !(step > STALL_PSI) || pulses >= MAX_PULSES {
            partial = true;
            break;
        }
        pulses += 1;
        let moved = step.min(remaining);
        pressure -= moved;
        remaining -= moved;
    }

    let psi_used = tank.pressure_psi - pressure;
    Ok(FillOutcome {
        tank: TankState { pressure_psi: pressure, ..tank },
        pulses,
        duration_s: pulses as f64 * (pulse.on_s + pulse.gap_s),
        psi_used,
        partial,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorKind {
    Grasp,
    AddBuoyancy,
    Transport,
    Place,
    ReturnLeg,
}

impl BehaviorKind {
    pub const ALL: [BehaviorKind; 5] = [
        BehaviorKind::Grasp,
        BehaviorKind::AddBuoyancy,
        BehaviorKind::Transport,
        BehaviorKind::Place,
        BehaviorKind::ReturnLeg,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BehaviorKind::Grasp => "Grasping component",
            BehaviorKind::AddBuoyancy => "Adding buoyancy",
            BehaviorKind::Transport => "Transporting component",
            BehaviorKind::Place => "Placing component",
            BehaviorKind::ReturnLeg => "Returning to pickup",
        }
    }
}

impl fmt::Display for BehaviorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BehaviorKind::Grasp => "grasp",
            BehaviorKind::AddBuoyancy => "add_buoyancy",
            BehaviorKind::Transport => "transport",
            BehaviorKind::Place => "place",
            BehaviorKind::ReturnLeg => "return_leg",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DurationModel {
    Fixed { seconds: f64 },
    /// Leg distance over a travel speed.
    Travel { velocity_mps: f64 },
    /// Duration of the pulsed ballast fill.
    PulseFill(PulseModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PowerModel {
    Fixed { watts: f64 },
    /// The energy model's curve for the leg, at the leg's ballast level.
    Curve,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSpec {
    pub kind: BehaviorKind,
    pub duration: DurationModel,
    pub power: PowerModel,
}

impl BehaviorSpec {
    fn validate(&self) -> Result<()> {
        let travel = matches!(self.kind, BehaviorKind::Transport | BehaviorKind::ReturnLeg);
        match self.duration {
            DurationModel::Fixed { seconds } if !(seconds >= 0.0) => {
                return Err(Error::config(format!("{}: negative duration", self.kind)))
            }
            DurationModel::Travel { velocity_mps } => {
                if !travel {
                    return Err(Error::config(format!("{}: travel duration only applies to legs", self.kind)));
                }
                if !(velocity_mps > 0.0) {
                    return Err(Error::config(format!("{}: travel speed must be positive", self.kind)));
                }
            }
            DurationModel::PulseFill(p) => {
                if self.kind != BehaviorKind::AddBuoyancy {
                    return Err(Error::config(format!("{}: pulse-fill duration only applies to add_buoyancy", self.kind)));
                }
                p.validate()?;
            }
            DurationModel::Fixed { .. } => {}
        }
        match self.power {
            PowerModel::Fixed { watts } if !(watts >= 0.0) => {
                Err(Error::config(format!("{}: negative power", self.kind)))
            }
            PowerModel::Curve if !travel => {
                Err(Error::config(format!("{}: curve power only applies to legs", self.kind)))
            }
            _ => Ok(()),
        }
    }
}

/// One spec per behavior kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<BehaviorSpec>", into = "Vec<BehaviorSpec>")]
pub struct BehaviorSet {
    specs: [BehaviorSpec; 5],
}

impl BehaviorSet {
    pub fn new(specs: Vec<BehaviorSpec>) -> Result<Self> {
        let mut slots: [Option<BehaviorSpec>; 5] = [None; 5];
        for s in specs {
            s.validate()?;
            let slot = &mut slots[s.kind as usize];
            if slot.is_some() {
                return Err(Error::config(format!("behavior {} given twice", s.kind)));
            }
            *slot = Some(s);
        }
        let mut out = Vec::with_capacity(5);
        for (kind, slot) in BehaviorKind::ALL.iter().zip(slots) {
            out.push(slot.ok_or_else(|| Error::config(format!("behavior {kind} missing")))?);
        }
        Ok(BehaviorSet { specs: out.try_into().expect("five behaviors") })
    }

    pub fn get(&self, kind: BehaviorKind) -> &BehaviorSpec {
        &self.specs[kind as usize]
    }

    pub fn specs(&self) -> &[BehaviorSpec] {
        &self.specs
    }
}

impl Default for BehaviorSet {
    /// Parameters calibrated against the pool trials: per-behavior time and
    /// energy shares, and the trial totals for the column and pyramid builds.
    fn default() -> Self {
        use BehaviorKind::*;
        BehaviorSet::new(vec![
            BehaviorSpec {
                kind: Grasp,
                duration: DurationModel::Fixed { seconds: 14.0 },
                power: PowerModel::Fixed { watts: 150.0 },
            },
            BehaviorSpec {
                kind: AddBuoyancy,
                duration: DurationModel::PulseFill(PulseModel::default()),
                power: PowerModel::Fixed { watts: 95.0 },
            },
            BehaviorSpec {
                kind: Transport,
                duration: DurationModel::Travel { velocity_mps: 0.016 },
                power: PowerModel::Curve,
            },
            BehaviorSpec {
                kind: Place,
                duration: DurationModel::Fixed { seconds: 15.0 },
                power: PowerModel::Fixed { watts: 110.0 },
            },
            BehaviorSpec {
                kind: ReturnLeg,
                duration: DurationModel::Travel { velocity_mps: 0.025 },
                power: PowerModel::Curve,
            },
        ])
        .expect("default behaviors are valid")
    }
}

impl TryFrom<Vec<BehaviorSpec>> for BehaviorSet {
    type Error = Error;

    fn try_from(v: Vec<BehaviorSpec>) -> Result<Self> {
        BehaviorSet::new(v)
    }
}

impl From<BehaviorSet> for Vec<BehaviorSpec> {
    fn from(b: BehaviorSet) -> Self {
        b.specs.to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Grasp,
    AddBuoyancy,
    Transport,
    Place,
    ReturnLeg,
    /// The tank could not complete a fill; the log ends here.
    TankExhausted,
}

impl EventKind {
    pub fn behavior(self) -> Option<BehaviorKind> {
        match self {
            EventKind::Grasp => Some(BehaviorKind::Grasp),
            EventKind::AddBuoyancy => Some(BehaviorKind::AddBuoyancy),
            EventKind::Transport => Some(BehaviorKind::Transport),
            EventKind::Place => Some(BehaviorKind::Place),
            EventKind::ReturnLeg => Some(BehaviorKind::ReturnLeg),
            EventKind::TankExhausted => None,
        }
    }
}

impl From<BehaviorKind> for EventKind {
    fn from(k: BehaviorKind) -> Self {
        match k {
            BehaviorKind::Grasp => EventKind::Grasp,
            BehaviorKind::AddBuoyancy => EventKind::AddBuoyancy,
            BehaviorKind::Transport => EventKind::Transport,
            BehaviorKind::Place => EventKind::Place,
            BehaviorKind::ReturnLeg => EventKind::ReturnLeg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionEvent {
    pub kind: EventKind,
    /// 1-based component number.
    pub component: usize,
    pub start_s: f64,
    pub duration_s: f64,
    pub power_w: f64,
    pub energy_wh: f64,
    pub air_psi: f64,
    /// Ballast level at the end of the event.
    pub level: f64,
    /// Tank pressure at the end of the event.
    pub tank_psi: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MissionTotals {
    pub energy_wh: f64,
    pub duration_s: f64,
    pub air_psi: f64,
    pub recharges: u64,
    /// One flag per attempted manipulation.
    pub successes: Vec<bool>,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MissionLog {
    pub events: Vec<MissionEvent>,
    pub totals: MissionTotals,
}

impl MissionLog {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &MissionEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Energy and time summed over one behavior.
    pub fn behavior_totals(&self, kind: BehaviorKind) -> (f64, f64) {
        self.events_of(kind.into())
            .fold((0.0, 0.0), |(e, t), ev| (e + ev.energy_wh, t + ev.duration_s))
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(text: &str) -> Result<Vec<MissionEvent>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Ok(serde_json::from_str(l)?))
            .collect()
    }
}

fn push_event(log: &mut Vec<MissionEvent>, clock: &mut f64, mut ev: MissionEvent) {
    ev.start_s = *clock;
    ev.energy_wh = watt_seconds_to_wh(ev.power_w, ev.duration_s);
    *clock += ev.duration_s;
    log.push(ev);
}

fn fixed_duration(spec: &BehaviorSpec) -> f64 {
    match spec.duration {
        DurationModel::Fixed { seconds } => seconds,
        _ => 0.0,
    }
}

fn fixed_power(spec: &BehaviorSpec) -> f64 {
    match spec.power {
        PowerModel::Fixed { watts } => watts,
        PowerModel::Curve => 0.0,
    }
}

fn leg_duration(spec: &BehaviorSpec, distance: f64) -> f64 {
    match spec.duration {
        DurationModel::Fixed { seconds } => seconds,
        DurationModel::Travel { velocity_mps } => distance / velocity_mps,
        DurationModel::PulseFill(_) => 0.0,
    }
}

fn leg_power(spec: &BehaviorSpec, model: &EnergyModel, loaded: bool, level: f64) -> f64 {
    match spec.power {
        PowerModel::Fixed { watts } => watts,
        PowerModel::Curve => model.curve(loaded).eval_unchecked(level.clamp(0.0, 1.0)),
    }
}

/// Runs the behavior pipeline over every leg of `profile`.
pub fn simulate(
    profile: &MissionProfile,
    model: &EnergyModel,
    alloc: &Allocation,
    behaviors: &BehaviorSet,
    env: &Environment,
    tank: TankState,
) -> Result<MissionLog> {
    if alloc.delta.len() != profile.len() {
        return Err(Error::domain(format!(
            "allocation has {} entries for {} legs",
            alloc.delta.len(),
            profile.len()
        )));
    }
    let mut events = Vec::with_capacity(profile.len() * 3);
    let mut successes = Vec::new();
    let mut clock = 0.0;
    let mut tank = tank;
    let mut level = 0.0;
    let mut truncated = false;

    let grasp = behaviors.get(BehaviorKind::Grasp);
    let fill = behaviors.get(BehaviorKind::AddBuoyancy);
    let transport = behaviors.get(BehaviorKind::Transport);
    let place = behaviors.get(BehaviorKind::Place);
    let ret = behaviors.get(BehaviorKind::ReturnLeg);
    let pulse = match fill.duration {
        DurationModel::PulseFill(p) => p,
        _ => PulseModel::default(),
    };

    for (i, leg) in profile.legs().iter().enumerate() {
        let component = i / 2 + 1;
        let delta = alloc.delta[i];
        let blank = MissionEvent {
            kind: EventKind::Grasp,
            component,
            start_s: 0.0,
            duration_s: 0.0,
            power_w: 0.0,
            energy_wh: 0.0,
            air_psi: 0.0,
            level,
            tank_psi: tank.pressure_psi,
        };

        if leg.loaded {
            push_event(
                &mut events,
                &mut clock,
                MissionEvent {
                    kind: EventKind::Grasp,
                    duration_s: fixed_duration(grasp),
                    power_w: fixed_power(grasp),
                    ..blank
                },
            );

            let payload = ComponentSpec::default_for(leg.payload);
            let outcome = pulse_fill(tank, delta, &payload, env, &pulse)?;
            tank = outcome.tank;
            let delivered = if outcome.partial {
                let full = air_for_buoyancy_from(payload.mass_water_kg, 1.0, env, tank.volume_l)?.tank_psi_drop;
                if full > 0.0 {
                    (outcome.psi_used / full).min(delta)
                } else {
                    0.0
                }
            } else {
                delta
            };
            level = (level + delivered).min(1.0);
            let fill_duration = match fill.duration {
                DurationModel::Fixed { seconds } => seconds,
                _ => outcome.duration_s,
            };
            push_event(
                &mut events,
                &mut clock,
                MissionEvent {
                    kind: EventKind::AddBuoyancy,
                    duration_s: fill_duration,
                    power_w: fixed_power(fill),
                    air_psi: outcome.psi_used,
                    level,
                    tank_psi: tank.pressure_psi,
                    ..blank
                },
            );
            if outcome.partial {
                successes.push(false);
                truncated = true;
                push_event(
                    &mut events,
                    &mut clock,
                    MissionEvent { kind: EventKind::TankExhausted, level, tank_psi: tank.pressure_psi, ..blank },
                );
                break;
            }
            successes.push(true);

            push_event(
                &mut events,
                &mut clock,
                MissionEvent {
                    kind: EventKind::Transport,
                    duration_s: leg_duration(transport, leg.distance_m),
                    power_w: leg_power(transport, model, true, level),
                    level,
                    tank_psi: tank.pressure_psi,
                    ..blank
                },
            );
        } else {
            // Venting is immediate and leaves the tank untouched.
            level = (level - delta).max(0.0);
            push_event(
                &mut events,
                &mut clock,
                MissionEvent {
                    kind: EventKind::Place,
                    duration_s: fixed_duration(place),
                    power_w: fixed_power(place),
                    level,
                    ..blank
                },
            );
            push_event(
                &mut events,
                &mut clock,
                MissionEvent {
                    kind: EventKind::ReturnLeg,
                    duration_s: leg_duration(ret, leg.distance_m),
                    power_w: leg_power(ret, model, false, level),
                    level,
                    ..blank
                },
            );
        }
    }

    let mut totals = MissionTotals { successes, truncated, ..MissionTotals::default() };
    for e in &events {
        totals.energy_wh += e.energy_wh;
        totals.duration_s += e.duration_s;
        totals.air_psi += e.air_psi;
    }
    totals.recharges = mission::recharges_for(totals.energy_wh, model.battery_wh());
    Ok(MissionLog { events, totals })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub kind: BehaviorKind,
    pub time_pct: f64,
    pub energy_pct: f64,
}

/// Share of mission time and energy spent in each behavior, in percent.
pub fn behavior_breakdown(log: &MissionLog) -> Result<Vec<BreakdownRow>> {
    if log.is_empty() {
        return Err(Error::domain("cannot break down an empty mission log"));
    }
    let (time, energy) = (log.totals.duration_s, log.totals.energy_wh);
    if !(time > 0.0 && energy > 0.0) {
        return Err(Error::domain("mission log has no elapsed time or no energy use"));
    }
    Ok(BehaviorKind::ALL
        .iter()
        .map(|&kind| {
            let (e, t) = log.behavior_totals(kind);
            BreakdownRow { kind, time_pct: 100.0 * t / time, energy_pct: 100.0 * e / energy }
        })
        .collect())
}

/// Fixed-width text rendering of a breakdown.
pub fn render_breakdown(rows: &[BreakdownRow]) -> String {
    let mut s = format!("{:<24} {:>12} {:>16}\n", "Behavior", "Percent time", "Percent energy");
    for r in rows {
        s.push_str(&format!("{:<24} {:>11.1}% {:>15.1}%\n", r.kind.label(), r.time_pct, r.energy_pct));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mission::ComponentKind;

    #[test]
    fn block_fill_at_five_meters() {
        // 0.8 * 9.5 kg = 7.6 L; 14.7 * (1 + 5 / 10.3) = 21.836 PSI; 7.6 * 21.836 / 3.
        let env = Environment::at_depth(5.0).unwrap();
        let d = air_for_buoyancy(9.5, 0.8, &env).unwrap();
        assert!((d.ambient_liters - 7.6).abs() < 1e-12);
        let expected = 7.6 * 14.7 * (1.0 + 5.0 / 10.3) / 3.0;
        assert!((d.tank_psi_drop - expected).abs() < 1e-9);
        assert!((d.tank_psi_drop - 55.3).abs() < 0.1, "{}", d.tank_psi_drop);
    }

    #[test]
    fn zero_level_needs_no_air() {
        let d = air_for_buoyancy(9.5, 0.0, &Environment::default()).unwrap();
        assert_eq!((d.ambient_liters, d.tank_psi_drop), (0.0, 0.0));
        assert!(air_for_buoyancy(-1.0, 0.5, &Environment::default()).is_err());
    }

    #[test]
    fn full_tank_offset_at_five_meters() {
        // 3000 PSI * 3 L / 21.836 PSI = 412 L of ambient air.
        let env = Environment::at_depth(5.0).unwrap();
        let kg = TankState::default().offset_capacity_kg(&env);
        assert!((kg - 412.2).abs() < 0.5, "{kg}");
    }

    #[test]
    fn pulse_fill_matches_demand() {
        let env = Environment::at_depth(5.0).unwrap();
        let out = pulse_fill(TankState::default(), 0.8, &ComponentSpec::BLOCK, &env, &PulseModel::default()).unwrap();
        let demand = air_for_buoyancy(9.5, 0.8, &env).unwrap().tank_psi_drop;
        assert!(!out.partial);
        assert!(out.pulses >= 1);
        assert!((out.psi_used - demand).abs() < 1e-9);
        assert!((out.tank.pressure_psi - (3000.0 - demand)).abs() < 1e-9);
        assert_eq!(out.duration_s, out.pulses as f64);
    }

    #[test]
    fn pulse_fill_edge_cases() {
        let env = Environment::default();
        let pulse = PulseModel::default();
        let out = pulse_fill(TankState::default(), 0.0, &ComponentSpec::BLOCK, &env, &pulse).unwrap();
        assert_eq!(out.pulses, 0);
        assert_eq!(out.tank, TankState::default());
        assert!(!out.partial);

        let flat = TankState::default().with_pressure(env.ambient_psi()).unwrap();
        let out = pulse_fill(flat, 0.5, &ComponentSpec::BLOCK, &env, &pulse).unwrap();
        assert!(out.partial);
        assert_eq!(out.pulses, 0);
    }

    #[test]
    fn nearly_empty_tank_fills_partially() {
        let env = Environment::default();
        let low = TankState::default().with_pressure(env.ambient_psi() + 5.0).unwrap();
        let pulse = PulseModel { flow_fraction: 0.2, ..PulseModel::default() };
        let out = pulse_fill(low, 0.8, &ComponentSpec::BLOCK, &env, &pulse).unwrap();
        assert!(out.partial);
        assert!(out.psi_used < 5.0 && out.psi_used > 4.9);
        assert!(out.tank.pressure_psi > env.ambient_psi());
    }

    #[test]
    fn behavior_set_requires_every_kind() {
        let mut specs: Vec<BehaviorSpec> = BehaviorSet::default().into();
        specs.pop();
        assert!(matches!(BehaviorSet::new(specs.clone()), Err(Error::Config(_))));
        specs.push(specs[0]);
        assert!(BehaviorSet::new(specs).is_err());

        let bad = BehaviorSpec {
            kind: BehaviorKind::Grasp,
            duration: DurationModel::Travel { velocity_mps: 1.0 },
            power: PowerModel::Fixed { watts: 1.0 },
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn behavior_set_json_round_trip() {
        let b = BehaviorSet::default();
        let text = serde_json::to_string(&b).unwrap();
        assert!(text.contains(r#""model":"pulse_fill""#), "{text}");
        assert_eq!(serde_json::from_str::<BehaviorSet>(&text).unwrap(), b);
    }

    #[test]
    fn empty_profile_gives_empty_log() {
        let m = EnergyModel::default();
        let p = MissionProfile::default();
        let a = Allocation::zeros(&p, &m).unwrap();
        let log = simulate(&p, &m, &a, &BehaviorSet::default(), &Environment::default(), TankState::default()).unwrap();
        assert!(log.is_empty());
        assert_eq!(log.totals, MissionTotals::default());
        assert!(behavior_breakdown(&log).is_err());
    }

    #[test]
    fn pipeline_order_per_component() {
        let m = EnergyModel::default();
        let p = MissionProfile::from_distances(&[2.0, 2.0, 1.0, 1.0]).unwrap();
        let a = Allocation::fixed_level(&p, &m, 0.8).unwrap();
        let log = simulate(&p, &m, &a, &BehaviorSet::default(), &Environment::default(), TankState::default()).unwrap();
        let kinds: Vec<EventKind> = log.events.iter().map(|e| e.kind).collect();
        use EventKind::*;
        assert_eq!(
            kinds,
            vec![Grasp, AddBuoyancy, Transport, Place, ReturnLeg, Grasp, AddBuoyancy, Transport, Place, ReturnLeg]
        );
        assert_eq!(log.totals.successes, vec![true, true]);
        let transport = log.events_of(Transport).next().unwrap();
        assert!((transport.power_w - 50.0).abs() < 1e-9);
        let ret = log.events_of(ReturnLeg).next().unwrap();
        assert_eq!(ret.power_w, 59.0);
        assert_eq!(ret.level, 0.0);
    }

    #[test]
    fn exhaustion_truncates_log() {
        let m = EnergyModel::default();
        let p = MissionProfile::from_distances(&[2.0, 2.0, 2.0, 2.0]).unwrap();
        let a = Allocation::fixed_level(&p, &m, 0.8).unwrap();
        let env = Environment::default();
        // Enough air for one block fill but not two.
        let tank = TankState::default().with_pressure(env.ambient_psi() + 80.0).unwrap();
        let log = simulate(&p, &m, &a, &BehaviorSet::default(), &env, tank).unwrap();
        assert!(log.totals.truncated);
        assert_eq!(log.events.last().unwrap().kind, EventKind::TankExhausted);
        assert_eq!(log.totals.successes, vec![true, false]);
    }

    #[test]
    fn single_behavior_breakdown() {
        let ev = MissionEvent {
            kind: EventKind::Transport,
            component: 1,
            start_s: 0.0,
            duration_s: 10.0,
            power_w: 36.0,
            energy_wh: 0.1,
            air_psi: 0.0,
            level: 0.0,
            tank_psi: 3000.0,
        };
        let log = MissionLog {
            events: vec![ev],
            totals: MissionTotals { energy_wh: 0.1, duration_s: 10.0, ..MissionTotals::default() },
        };
        let rows = behavior_breakdown(&log).unwrap();
        let t = rows.iter().find(|r| r.kind == BehaviorKind::Transport).unwrap();
        assert_eq!((t.time_pct, t.energy_pct), (100.0, 100.0));
        assert!(rows.iter().filter(|r| r.kind != BehaviorKind::Transport).all(|r| r.time_pct == 0.0));
    }

    #[test]
    fn cone_payload_uses_cone_mass() {
        let m = EnergyModel::default();
        let legs = vec![
            crate::allocation::Leg { distance_m: 1.0, loaded: true, payload: ComponentKind::Cone },
            crate::allocation::Leg { distance_m: 1.0, loaded: false, payload: ComponentKind::Cone },
        ];
        let p = MissionProfile::new(legs).unwrap();
        let a = Allocation::fixed_level(&p, &m, 0.8).unwrap();
        let env = Environment::default();
        let log = simulate(&p, &m, &a, &BehaviorSet::default(), &env, TankState::default()).unwrap();
        let expected = air_for_buoyancy(3.2, 0.8, &env).unwrap().tank_psi_drop;
        assert!((log.totals.air_psi - expected).abs() < 1e-9);
    }
}
