//! Loading the chain, controller config and profile shared by every command.

use std::path::{Path, PathBuf};

use handover_core::config::{default_session_config, SessionConfig};
use handover_core::controller::Profile;
use handover_core::kinematics::{load_chain, KinematicChain, PANDA_CHAIN};
use thiserror::Error;

pub const EXIT_SUCCESS: u8 = 0;
pub const EXIT_TASK_FAILURE: u8 = 2;
pub const EXIT_SYSTEM_ERROR: u8 = 3;
pub const EXIT_INVALID_INPUT: u8 = 4;

pub const STREAM_HZ_RANGE: (f64, f64) = (1.0, 120.0);
pub const DEFAULT_STREAM_HZ: f64 = 60.0;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, unreadable inputs or invalid configuration.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Failure while executing or writing results.
    #[error("system error: {0}")]
    System(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID_INPUT,
            CliError::System(_) => EXIT_SYSTEM_ERROR,
        }
    }

    pub fn invalid(key: &str, reason: impl std::fmt::Display) -> Self {
        CliError::Invalid(format!("{key}: {reason}"))
    }
}

/// Paths and options as given on the command line; `None` means the bundled default.
#[derive(Debug, Clone, Default)]
pub struct BundleArgs {
    pub chain: Option<PathBuf>,
    pub controller_config: Option<PathBuf>,
    pub profile: Option<String>,
    pub stream_hz: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConfigBundle {
    pub chain: KinematicChain,
    pub session: SessionConfig,
    pub profile: Profile,
    pub stream_hz: f64,
}

fn read(key: &str, path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::invalid(key, format!("cannot read {}: {e}", path.display())))
}

impl ConfigBundle {
    pub fn load(args: &BundleArgs) -> Result<Self, CliError> {
        let chain = match &args.chain {
            Some(path) => load_chain(&read("chain", path)?).map_err(|e| CliError::invalid("chain", e))?,
            None => load_chain(PANDA_CHAIN).map_err(|e| CliError::System(e.to_string()))?,
        };
        let session = match &args.controller_config {
            Some(path) => SessionConfig::from_json(&read("controller_config", path)?)
                .map_err(|e| CliError::invalid("controller_config", e))?,
            None => default_session_config(),
        };
        session
            .validate(chain.dof())
            .map_err(|e| CliError::invalid("controller_config", e))?;
        chain
            .attachment(&session.controller.gripper_base_attachment)
            .map_err(|e| CliError::invalid("controller.gripper_base_attachment", e))?;
        let profile = match &args.profile {
            Some(p) => p.parse().map_err(|e| CliError::invalid("profile", e))?,
            None => session.controller.profile,
        };
        let stream_hz = args.stream_hz.unwrap_or(DEFAULT_STREAM_HZ);
        let (lo, hi) = STREAM_HZ_RANGE;
        if !(stream_hz >= lo && stream_hz <= hi) {
            return Err(CliError::invalid("stream_hz", format!("{stream_hz} is outside [{lo}, {hi}]")));
        }
        Ok(Self {
            chain,
            session,
            profile,
            stream_hz,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_load() {
        let b = ConfigBundle::load(&BundleArgs::default()).unwrap();
        assert_eq!(b.chain.dof(), 7);
        assert_eq!(b.stream_hz, DEFAULT_STREAM_HZ);
        assert_eq!(b.profile, Profile::Authoritative);
    }

    #[test]
    fn invalid_inputs_name_the_key() {
        let err = |args: BundleArgs| ConfigBundle::load(&args).unwrap_err();
        let e = err(BundleArgs { chain: Some("/nonexistent/chain.json".into()), ..Default::default() });
        assert_eq!(e.exit_code(), EXIT_INVALID_INPUT);
        assert!(e.to_string().contains("chain"), "{e}");
        let e = err(BundleArgs { stream_hz: Some(500.0), ..Default::default() });
        assert!(e.to_string().contains("stream_hz"), "{e}");
        let e = err(BundleArgs { profile: Some("timid".into()), ..Default::default() });
        assert!(e.to_string().contains("profile"), "{e}");
    }
}
