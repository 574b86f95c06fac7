//! The four disease simulators and a name-based registry.

pub mod ahn;
pub mod ghaffari;
pub mod glucose;
pub mod sepsis;

pub use ahn::AhnChemoEnv;
pub use ghaffari::GhaffariCancerEnv;
pub use glucose::SimGlucoseEnv;
pub use sepsis::OberstSepsisEnv;

use crate::pomdp::{EnvError, Environment};

/// Registered environment names, in the order they are listed.
pub const ENV_NAMES: [&str; 4] = [ahn::NAME, ghaffari::NAME, sepsis::NAME, glucose::NAME];

/// Resolves a registered name (case-insensitive) or short alias
/// (`ahn`, `ghaffari`, `sepsis`, `glucose`).
pub fn canonical_name(name: &str) -> Option<&'static str> {
    let lower = name.to_ascii_lowercase();
    let hit = match lower.as_str() {
        "ahn" | "chemo" => ahn::NAME,
        "ghaffari" | "cancer" => ghaffari::NAME,
        "sepsis" | "oberst" => sepsis::NAME,
        "glucose" | "simglucose" | "diabetes" => glucose::NAME,
        _ => return ENV_NAMES.into_iter().find(|n| n.eq_ignore_ascii_case(name)),
    };
    Some(hit)
}

/// Builds an environment with its default configuration.
pub fn make_env(name: &str) -> Result<Box<dyn Environment>, EnvError> {
    let env: Box<dyn Environment> = match canonical_name(name) {
        Some(ahn::NAME) => Box::new(AhnChemoEnv::new()),
        Some(ghaffari::NAME) => Box::new(GhaffariCancerEnv::new()),
        Some(sepsis::NAME) => Box::new(OberstSepsisEnv::new()),
        Some(glucose::NAME) => Box::new(SimGlucoseEnv::new()),
        _ => return Err(EnvError::InvalidSpec(format!("unknown environment {name:?}"))),
    };
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_round_trip() {
        for name in ENV_NAMES {
            assert_eq!(make_env(name).unwrap().spec().name, name);
        }
        assert_eq!(canonical_name("SEPSIS"), Some(sepsis::NAME));
        assert_eq!(canonical_name("simglucoseenv"), Some(glucose::NAME));
        assert!(make_env("pong").is_err());
    }
}
