//! Construction scenarios and the leg profiles they induce.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::allocation::{self, Allocation, Leg, MissionProfile};
use crate::energy_model::EnergyModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    #[default]
    Block,
    Cone,
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComponentKind::Block => "block",
            ComponentKind::Cone => "cone",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub kind: ComponentKind,
    pub mass_air_kg: f64,
    pub mass_water_kg: f64,
}

impl ComponentSpec {
    pub const BLOCK: ComponentSpec = ComponentSpec {
        kind: ComponentKind::Block,
        mass_air_kg: 12.9,
        mass_water_kg: 9.5,
    };
    pub const CONE: ComponentSpec = ComponentSpec {
        kind: ComponentKind::Cone,
        mass_air_kg: 3.9,
        mass_water_kg: 3.2,
    };

    pub fn new(kind: ComponentKind, mass_air_kg: f64, mass_water_kg: f64) -> Result<Self> {
        if !(mass_water_kg >= 0.0 && mass_water_kg < mass_air_kg) {
            return Err(Error::domain(format!(
                "{kind}: in-water mass {mass_water_kg} kg must be non-negative and below the in-air mass {mass_air_kg} kg"
            )));
        }
        Ok(ComponentSpec { kind, mass_air_kg, mass_water_kg })
    }

    pub fn default_for(kind: ComponentKind) -> Self {
        match kind {
            ComponentKind::Block => Self::BLOCK,
            ComponentKind::Cone => Self::CONE,
        }
    }
}

pub type Point = [f64; 2];

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacedComponent {
    pub kind: ComponentKind,
    pub x: f64,
    pub y: f64,
    /// Optional layer number. When absent, layers are the maximal runs of
    /// equal kind in placement order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<u32>,
}

/// Components in placement order; layers alternate blocks and cones.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "StructureDoc", into = "StructureDoc")]
pub struct StructureSpec {
    components: Vec<PlacedComponent>,
}

#[derive(Serialize, Deserialize)]
struct StructureDoc {
    components: Vec<PlacedComponent>,
}

impl TryFrom<StructureDoc> for StructureSpec {
    type Error = Error;

    fn try_from(d: StructureDoc) -> Result<Self> {
        StructureSpec::new(d.components)
    }
}

impl From<StructureSpec> for StructureDoc {
    fn from(s: StructureSpec) -> Self {
        StructureDoc { components: s.components }
    }
}

impl StructureSpec {
    pub fn new(components: Vec<PlacedComponent>) -> Result<Self> {
        for (i, c) in components.iter().enumerate() {
            if !(c.x.is_finite() && c.y.is_finite()) {
                return Err(Error::config(format!("component {} has a non-finite position", i + 1)));
            }
        }
        let explicit = components.iter().filter(|c| c.layer.is_some()).count();
        if explicit != 0 && explicit != components.len() {
            return Err(Error::config("either every component has a layer or none does"));
        }
        if explicit > 0 {
            let mut prev: Option<(u32, ComponentKind)> = None;
            for (i, c) in components.iter().enumerate() {
                let layer = c.layer.unwrap_or_default();
                if let Some((pl, pk)) = prev {
                    if layer < pl {
                        return Err(Error::config(format!(
                            "component {} goes back to layer {layer} after layer {pl}",
                            i + 1
                        )));
                    }
                    if layer == pl && c.kind != pk {
                        return Err(Error::config(format!("layer {layer} mixes blocks and cones")));
                    }
                    if layer > pl && c.kind == pk {
                        return Err(Error::config(format!(
                            "layers {pl} and {layer} are both made of {pk}s"
                        )));
                    }
                }
                prev = Some((layer, c.kind));
            }
        }
        Ok(StructureSpec { components })
    }

    pub fn components(&self) -> &[PlacedComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Where each component kind is picked up.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pickups {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cone: Option<Point>,
}

impl Pickups {
    pub fn get(&self, kind: ComponentKind) -> Option<Point> {
        match kind {
            ComponentKind::Block => self.block,
            ComponentKind::Cone => self.cone,
        }
    }
}

/// A straight row of blocks fed from a pallet at one end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RowDoc", into = "RowDoc")]
pub struct RowScenario {
    num_blocks: usize,
    pitch_m: f64,
    offset_m: f64,
}

#[derive(Serialize, Deserialize)]
struct RowDoc {
    num_blocks: usize,
    #[serde(default = "default_pitch")]
    pitch_m: f64,
    #[serde(default = "default_offset")]
    offset_m: f64,
}

fn default_pitch() -> f64 {
    RowScenario::DEFAULT_PITCH_M
}

fn default_offset() -> f64 {
    RowScenario::DEFAULT_OFFSET_M
}

impl TryFrom<RowDoc> for RowScenario {
    type Error = Error;

    fn try_from(d: RowDoc) -> Result<Self> {
        RowScenario::new(d.num_blocks, d.pitch_m, d.offset_m)
    }
}

impl From<RowScenario> for RowDoc {
    fn from(r: RowScenario) -> Self {
        RowDoc { num_blocks: r.num_blocks, pitch_m: r.pitch_m, offset_m: r.offset_m }
    }
}

impl RowScenario {
    /// Nominal cinder block length.
    pub const DEFAULT_PITCH_M: f64 = 0.4;
    pub const DEFAULT_OFFSET_M: f64 = 1.0;

    pub fn new(num_blocks: usize, pitch_m: f64, offset_m: f64) -> Result<Self> {
        if num_blocks == 0 {
            return Err(Error::config("a row needs at least one block"));
        }
        if !(pitch_m > 0.0 && pitch_m.is_finite()) {
            return Err(Error::config(format!("row pitch must be positive, got {pitch_m}")));
        }
        if !(offset_m >= 0.0 && offset_m.is_finite()) {
            return Err(Error::config(format!("pallet offset must be non-negative, got {offset_m}")));
        }
        Ok(RowScenario { num_blocks, pitch_m, offset_m })
    }

    pub fn with_defaults(num_blocks: usize) -> Result<Self> {
        RowScenario::new(num_blocks, Self::DEFAULT_PITCH_M, Self::DEFAULT_OFFSET_M)
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn pitch_m(&self) -> f64 {
        self.pitch_m
    }

    pub fn offset_m(&self) -> f64 {
        self.offset_m
    }
}

/// Out-and-back legs from the pallet to successive slots, nearest slot first.
pub fn row_to_profile(scenario: &RowScenario) -> MissionProfile {
    let mut legs = Vec::with_capacity(2 * scenario.num_blocks);
    for k in 0..scenario.num_blocks {
        let d = scenario.offset_m + k as f64 * scenario.pitch_m;
        legs.push(Leg { distance_m: d, loaded: true, payload: ComponentKind::Block });
        legs.push(Leg { distance_m: d, loaded: false, payload: ComponentKind::Block });
    }
    MissionProfile::new(legs).expect("row legs alternate and are non-negative")
}

/// Pickup-to-place legs in component order. Each empty leg heads to the
/// next component's pickup; the last one returns to `start`.
pub fn structure_to_profile(spec: &StructureSpec, pickups: &Pickups, start: Point) -> Result<MissionProfile> {
    let pickup_of = |kind: ComponentKind| {
        pickups
            .get(kind)
            .ok_or_else(|| Error::config(format!("no pickup position for {kind}s")))
    };
    let comps = spec.components();
    let mut legs = Vec::with_capacity(2 * comps.len());
    for (i, c) in comps.iter().enumerate() {
        let place = [c.x, c.y];
        legs.push(Leg {
            distance_m: distance(pickup_of(c.kind)?, place),
            loaded: true,
            payload: c.kind,
        });
        let next = match comps.get(i + 1) {
            Some(n) => pickup_of(n.kind)?,
            None => start,
        };
        legs.push(Leg { distance_m: distance(place, next), loaded: false, payload: c.kind });
    }
    MissionProfile::new(legs)
}

/// Full battery charges needed beyond the initial one: `floor(E / capacity)`.
pub fn count_recharges(profile: &MissionProfile, model: &EnergyModel, alloc: &Allocation) -> Result<u64> {
    let wh = allocation::objective(profile, model, &alloc.delta)?;
    Ok(recharges_for(wh, model.battery_wh()))
}

pub(crate) fn count_recharges_unballasted(profile: &MissionProfile, model: &EnergyModel) -> u64 {
    let wh = allocation::objective(profile, model, &vec![0.0; profile.len()])
        .expect("zero allocation is always feasible");
    recharges_for(wh, model.battery_wh())
}

pub fn recharges_for(energy_wh: f64, battery_wh: f64) -> u64 {
    (energy_wh / battery_wh).floor().max(0.0) as u64
}
