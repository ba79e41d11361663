//! Figure presets, shipped as TOML files under `presets/`.

use crate::config::{ConfigSource, RunConfig};
use crate::error::ConfigError;

const PRESETS: [(&str, &str); 12] = [
    ("fig1", include_str!("../presets/fig1.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("fig7", include_str!("../presets/fig7.toml")),
    ("fig8", include_str!("../presets/fig8.toml")),
    ("fig9", include_str!("../presets/fig9.toml")),
    ("fig10", include_str!("../presets/fig10.toml")),
    ("fig11", include_str!("../presets/fig11.toml")),
    ("fig12", include_str!("../presets/fig12.toml")),
    ("fig13", include_str!("../presets/fig13.toml")),
    ("fig14", include_str!("../presets/fig14.toml")),
];

pub const NAMES: [&str; 12] = {
    let mut names = [""; 12];
    let mut i = 0;
    while i < PRESETS.len() {
        names[i] = PRESETS[i].0;
        i += 1;
    }
    names
};

/// Raw TOML of a preset.
pub fn text(name: &str) -> Result<&'static str, ConfigError> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| ConfigError::UnknownPreset {
            name: name.to_string(),
        })
}

pub fn preset(name: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::parse(text(name)?, &ConfigSource::Preset(name.to_string()))?;
    cfg.preset = Some(name.to_string());
    Ok(cfg)
}
