//! Planning configuration shared by the command line and the service.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::PlannerParams;
use crate::radiomap::{UtilityScale, WeightPolicy};
use crate::tracer::{AntennaConfig, TraceParams};

pub const DEFAULT_RESOLUTION_M: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub resolution_m: f64,
    /// Position is ignored; the planner moves the antenna.
    pub antenna: AntennaConfig,
    pub trace: TraceParams,
    pub planner: PlannerParams,
    pub weights: WeightPolicy,
    pub utility_scale: UtilityScale,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            resolution_m: DEFAULT_RESOLUTION_M,
            antenna: AntennaConfig::default(),
            trace: TraceParams::default(),
            planner: PlannerParams::default(),
            weights: WeightPolicy::default(),
            utility_scale: UtilityScale::default(),
        }
    }
}

impl PlanConfig {
    /// Reads JSON, or TOML when the extension is `.toml`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: PlanConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?
        } else {
            serde_json::from_str(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution_m.is_finite() && self.resolution_m > 0.0) {
            return Err(Error::validation("resolution_m", "must be positive"));
        }
        self.antenna.validate()?;
        self.trace.validate()?;
        self.planner.validate()
    }
}
