//! Scenarios compiled into the binary.

use std::path::Path;

use crate::error::ConfigError;
use crate::harness::config::ScenarioConfig;

const BUILTINS: &[(&str, &str)] = &[
    ("fig1-cooperative", include_str!("../../scenarios/fig1-cooperative.json")),
    ("fig1-bgw1-ignores", include_str!("../../scenarios/fig1-bgw1-ignores.json")),
    ("fig1-all-ignore", include_str!("../../scenarios/fig1-all-ignore.json")),
    ("on-off", include_str!("../../scenarios/on-off.json")),
    ("spoofer", include_str!("../../scenarios/spoofer.json")),
    ("provisioning-load", include_str!("../../scenarios/provisioning-load.json")),
    ("client-bound", include_str!("../../scenarios/client-bound.json")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

pub fn builtin_source(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn builtin(name: &str) -> Result<ScenarioConfig, ConfigError> {
    let text = builtin_source(name).ok_or_else(|| ConfigError::UnknownScenario(name.to_string()))?;
    ScenarioConfig::from_json_str(text, &format!("{name}.json"))
}

/// A built-in name, or else a path to a JSON file.
pub fn load_scenario(name_or_path: &str) -> Result<ScenarioConfig, ConfigError> {
    if builtin_source(name_or_path).is_some() {
        return builtin(name_or_path);
    }
    ScenarioConfig::from_path(Path::new(name_or_path))
}
