//! Suite configuration files. Keys present in a file take precedence over the values they
//! are layered on.

use std::path::Path;

use crate::bench::SuiteConfig;
use crate::error::{Error, Result};

/// Lays the TOML document `text` over `base`.
pub fn overlay(base: &SuiteConfig, text: &str) -> Result<SuiteConfig> {
    let file: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(format!("config file: {e}")))?;
    let mut merged = toml::Table::try_from(base).map_err(|e| Error::Serde(e.to_string()))?;
    for (k, v) in file {
        merged.insert(k, v);
    }
    let cfg: SuiteConfig = merged
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("config file: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn overlay_file(base: &SuiteConfig, path: &Path) -> Result<SuiteConfig> {
    overlay(base, &std::fs::read_to_string(path)?)
}

pub fn to_toml(cfg: &SuiteConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Serde(e.to_string()))
}
