//! The controller config file: virtual mechanism, gripper thresholds, hand
//! filter and plant parameters in one JSON document.

use serde::{Deserialize, Serialize};

use crate::controller::VmcParams;
use crate::error::{Error, Result};
use crate::gripper::FsmConfig;
use crate::hand_signal::HandFilterConfig;
use crate::plant::PlantConfig;

pub const DEFAULT_CONTROLLER_CONFIG: &str = include_str!("../data/controller.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub controller: VmcParams,
    pub gripper: FsmConfig,
    #[serde(default)]
    pub hand_filter: HandFilterConfig,
    pub plant: PlantConfig,
}

impl SessionConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Parse {
            what: "controller config",
            source,
        })
    }

    pub fn validate(&self, dof: usize) -> Result<()> {
        self.controller.validate()?;
        if self.controller.torque_limits.len() != dof {
            return Err(Error::invalid(
                "controller.torque_limits",
                format!("expected {dof} entries, got {}", self.controller.torque_limits.len()),
            ));
        }
        self.fsm_config().validate()?;
        self.hand_filter.validate()?;
        self.plant.validate(dof)
    }

    /// Gripper thresholds, with the offset taken from the controller section.
    pub fn fsm_config(&self) -> FsmConfig {
        FsmConfig {
            alpha_default: self.controller.alpha_default,
            ..self.gripper
        }
    }
}

/// The bundled defaults.
pub fn default_session_config() -> SessionConfig {
    SessionConfig::from_json(DEFAULT_CONTROLLER_CONFIG).expect("bundled controller config parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_is_valid() {
        let c = default_session_config();
        c.validate(7).unwrap();
        assert_eq!(c.fsm_config().alpha_default, 0.10);
        assert_eq!(c.controller.beta_placement, 0.23);
    }

    #[test]
    fn invalid_values_name_their_key() {
        let mut c = default_session_config();
        c.plant.dt = 0.5;
        let err = c.validate(7).unwrap_err().to_string();
        assert!(err.contains("plant.dt"), "{err}");
        let mut c = default_session_config();
        c.controller.torque_limits[2] = 0.0;
        assert!(c.validate(7).unwrap_err().to_string().contains("torque_limits"));
        assert!(default_session_config().validate(6).is_err());
    }
}
