//! Scenario files: TOML with an explicit format version.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Scenario;
use crate::error::{Error, Result};

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    format_version: u32,
    scenario: Scenario,
}

pub fn scenario_to_string(scenario: &Scenario) -> Result<String> {
    toml::to_string(&ScenarioFile {
        format_version: SCENARIO_FORMAT_VERSION,
        scenario: scenario.clone(),
    })
    .map_err(|e| Error::Serde(e.to_string()))
}

pub fn scenario_from_str(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
    if file.format_version != SCENARIO_FORMAT_VERSION {
        return Err(Error::Serde(format!(
            "unsupported scenario format version {}",
            file.format_version
        )));
    }
    file.scenario.validate()?;
    Ok(file.scenario)
}

pub fn save_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    std::fs::write(path, scenario_to_string(scenario)?)?;
    Ok(())
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    scenario_from_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{sample_scenario, Template};

    #[test]
    fn text_round_trip_is_exact() {
        let s = sample_scenario(Template::CrissCross, 6, 2, 42).unwrap();
        let back = scenario_from_str(&scenario_to_string(&s).unwrap()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn wrong_version_rejected() {
        let s = sample_scenario(Template::CrissCross, 2, 1, 1).unwrap();
        let text = scenario_to_string(&s)
            .unwrap()
            .replace("format_version = 1", "format_version = 9");
        assert!(matches!(scenario_from_str(&text), Err(Error::Serde(_))));
    }
}
