//! Independent oracles for the handover controller and the acceptance checks
//! built on them.

pub mod checks;
pub mod oracle;
