//! Scenario files: a structure with pickups, a straight row, or bare leg
//! distances, plus optional simulation overrides.

use std::path::Path;

use ballastplan::allocation::{Allocation, MissionProfile, TankBudget};
use ballastplan::energy_model::EnergyModel;
use ballastplan::mission::{self, PlacedComponent, Pickups, Point, RowScenario, StructureSpec};
use ballastplan::simulator::{BehaviorSet, Environment, TankState};
use ballastplan::{Error, Result};
use serde::{Deserialize, Serialize};

/// Energy and duration a simulated scenario is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub energy_wh: f64,
    pub duration_min: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    name: Option<String>,
    components: Option<Vec<PlacedComponent>>,
    pickups: Option<Pickups>,
    start: Option<Point>,
    num_blocks: Option<usize>,
    pitch_m: Option<f64>,
    offset_m: Option<f64>,
    distances: Option<Vec<f64>>,
    fixed_level: Option<f64>,
    tank_c: Option<f64>,
    behaviors: Option<BehaviorSet>,
    environment: Option<Environment>,
    tank: Option<TankState>,
    reference: Option<Reference>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    Structure { spec: StructureSpec, pickups: Pickups, start: Point },
    Row(RowScenario),
    Distances(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub layout: Layout,
    /// Ballast every manipulation to this level instead of solving.
    pub fixed_level: Option<f64>,
    pub tank_c: Option<f64>,
    pub behaviors: BehaviorSet,
    pub environment: Environment,
    pub tank: TankState,
    pub reference: Option<Reference>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ScenarioDoc = serde_json::from_str(text)?;
        let kinds = [doc.components.is_some(), doc.num_blocks.is_some(), doc.distances.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if kinds != 1 {
            return Err(Error::Config(
                "a scenario needs exactly one of `components`, `num_blocks` or `distances`".into(),
            ));
        }
        let layout = if let Some(components) = doc.components {
            let spec = StructureSpec::new(components)?;
            let pickups = doc.pickups.unwrap_or_default();
            let start = match doc.start {
                Some(p) => p,
                None => pickups.block.or(pickups.cone).unwrap_or([0.0, 0.0]),
            };
            Layout::Structure { spec, pickups, start }
        } else if let Some(n) = doc.num_blocks {
            Layout::Row(RowScenario::new(
                n,
                doc.pitch_m.unwrap_or(RowScenario::DEFAULT_PITCH_M),
                doc.offset_m.unwrap_or(RowScenario::DEFAULT_OFFSET_M),
            )?)
        } else {
            Layout::Distances(doc.distances.unwrap_or_default())
        };
        if let Some(b) = doc.fixed_level {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::Config(format!("fixed_level {b} outside [0, 1]")));
            }
        }
        Ok(Scenario {
            name: doc.name.unwrap_or_else(|| "unnamed".into()),
            layout,
            fixed_level: doc.fixed_level,
            tank_c: doc.tank_c,
            behaviors: doc.behaviors.unwrap_or_default(),
            environment: doc.environment.unwrap_or_default(),
            tank: doc.tank.unwrap_or_default(),
            reference: doc.reference,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Scenario::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn profile(&self) -> Result<MissionProfile> {
        match &self.layout {
            Layout::Structure { spec, pickups, start } => mission::structure_to_profile(spec, pickups, *start),
            Layout::Row(row) => Ok(mission::row_to_profile(row)),
            Layout::Distances(d) => MissionProfile::from_distances(d),
        }
    }

    /// `--tank-c` wins over the scenario, which wins over the default.
    pub fn budget(&self, flag: Option<f64>) -> Result<TankBudget> {
        TankBudget::new(flag.or(self.tank_c).unwrap_or(crate::DEFAULT_TANK_C))
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// The scenario's fixed level if it has one, otherwise the optimal plan.
    pub fn allocation(&self, profile: &MissionProfile, model: &EnergyModel, budget: TankBudget) -> Result<Allocation> {
        if profile.is_empty() {
            return Allocation::zeros(profile, model);
        }
        match self.fixed_level {
            Some(b) => Allocation::fixed_level(profile, model, b),
            None => ballastplan::allocation::solve(profile, model, budget),
        }
    }
}
