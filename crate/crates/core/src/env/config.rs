//! The `[env]` section of experiment and environment config files.
//!
//! ```toml
//! [env]
//! kind = "dst"              # or "minecart"
//! map = "maps/custom.map"   # DST: map file, relative to the config file
//! # grid = """..."""        # DST: inline map instead of `map`
//! observation = "one_hot"   # one_hot | coordinates | features | pixels
//! max_steps = 200
//! gamma = 0.95
//! frame_skip = 1
//!
//! [env.minecart]            # Minecart overrides, see `MinecartConfig`
//! capacity = 1.5
//! ```
//!
//! Omitting both `map` and `grid` selects the bundled 10-treasure map;
//! `map = "builtin:small"` selects the bundled 6x6 map.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DeepSeaTreasure, DstMap, Environment, FrameSkip, Minecart, MinecartConfig, PixelObservation};
use crate::error::{MorlError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Dst,
    Minecart,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    /// DST: one-hot grid position.
    OneHot,
    /// DST: row/column scaled to [0, 1].
    Coordinates,
    /// Minecart: position, speed, heading and content features.
    Features,
    /// Two stacked 48x48 grayscale frames.
    Pixels,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub frame_skip: Option<usize>,
    #[serde(default)]
    pub observation: Option<ObservationMode>,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub map: Option<String>,
    #[serde(default)]
    pub grid: Option<String>,
    #[serde(default)]
    pub minecart: Option<MinecartConfig>,
}

pub const DST_DEFAULT_MAX_STEPS: usize = 200;
pub const PIXEL_SIZE: usize = 48;

/// Other sections are ignored so experiment files double as env configs.
#[derive(Deserialize)]
struct EnvFile {
    env: EnvConfig,
}

impl EnvConfig {
    pub fn dst() -> Self {
        EnvConfig {
            kind: EnvKind::Dst,
            gamma: None,
            frame_skip: None,
            observation: None,
            max_steps: None,
            map: None,
            grid: None,
            minecart: None,
        }
    }

    pub fn dst_with_map(map: &DstMap) -> Self {
        EnvConfig {
            grid: Some(map.to_text()),
            ..EnvConfig::dst()
        }
    }

    pub fn minecart() -> Self {
        EnvConfig {
            kind: EnvKind::Minecart,
            ..EnvConfig::dst()
        }
    }

    /// Parses a file holding an `[env]` table; relative map paths resolve
    /// against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let file: EnvFile = toml::from_str(text).map_err(|e| toml_error(&e, "env"))?;
        let mut env = file.env;
        env.resolve(base_dir)?;
        Ok(env)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Inlines a referenced map file into `grid` and validates the result.
    pub fn resolve(&mut self, base_dir: &Path) -> Result<()> {
        if let Some(map) = self.map.take() {
            if self.grid.is_some() {
                return Err(MorlError::config("env.map", "give either `map` or `grid`, not both"));
            }
            self.grid = Some(match map.as_str() {
                "builtin:default" => super::dst::DEFAULT_MAP.to_string(),
                "builtin:small" => super::dst::SMALL_MAP.to_string(),
                path => std::fs::read_to_string(base_dir.join(path))
                    .map_err(|e| MorlError::config("env.map", format!("{path}: {e}")))?,
            });
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(MorlError::config("env.gamma", "must lie in (0, 1]"));
            }
        }
        if self.frame_skip == Some(0) {
            return Err(MorlError::config("env.frame_skip", "must be >= 1"));
        }
        if self.max_steps == Some(0) {
            return Err(MorlError::config("env.max_steps", "must be >= 1"));
        }
        match self.kind {
            EnvKind::Dst => {
                if self.minecart.is_some() {
                    return Err(MorlError::config("env.minecart", "not valid for kind = \"dst\""));
                }
                if self.observation == Some(ObservationMode::Features) {
                    return Err(MorlError::config("env.observation", "DST uses one_hot, coordinates or pixels"));
                }
                self.dst_map().map_err(|e| MorlError::config("env.grid", e.to_string()))?;
            }
            EnvKind::Minecart => {
                if self.grid.is_some() {
                    return Err(MorlError::config("env.grid", "not valid for kind = \"minecart\""));
                }
                if matches!(self.observation, Some(ObservationMode::OneHot | ObservationMode::Coordinates)) {
                    return Err(MorlError::config("env.observation", "Minecart uses features or pixels"));
                }
                self.minecart_config().validate()?;
            }
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(match self.kind {
            EnvKind::Dst => 0.95,
            EnvKind::Minecart => 0.98,
        })
    }

    pub fn frame_skip(&self) -> usize {
        self.frame_skip.unwrap_or(match self.kind {
            EnvKind::Dst => 1,
            EnvKind::Minecart => 4,
        })
    }

    pub fn observation_mode(&self) -> ObservationMode {
        self.observation.unwrap_or(match self.kind {
            EnvKind::Dst => ObservationMode::OneHot,
            EnvKind::Minecart => ObservationMode::Features,
        })
    }

    pub fn dst_map(&self) -> Result<DstMap> {
        match &self.grid {
            Some(text) => DstMap::parse(text),
            None => Ok(DstMap::default_map()),
        }
    }

    pub fn dst_max_steps(&self) -> usize {
        self.max_steps.unwrap_or(DST_DEFAULT_MAX_STEPS)
    }

    /// Minecart parameters with `max_steps` applied (in raw frames).
    pub fn minecart_config(&self) -> MinecartConfig {
        let mut cfg = self.minecart.clone().unwrap_or_default();
        if let Some(m) = self.max_steps {
            cfg.max_episode_steps = m;
        }
        cfg
    }

    pub fn num_objectives(&self) -> usize {
        match self.kind {
            EnvKind::Dst => 2,
            EnvKind::Minecart => self.minecart_config().num_objectives(),
        }
    }

    /// Builds the environment with its frame-skip and observation wrappers.
    pub fn build(&self, seed: u64) -> Result<Box<dyn Environment>> {
        let skip = self.frame_skip();
        let pixels = self.observation_mode() == ObservationMode::Pixels;
        Ok(match self.kind {
            EnvKind::Dst => {
                let mode = if pixels { ObservationMode::OneHot } else { self.observation_mode() };
                let env = DeepSeaTreasure::new(self.dst_map()?, mode, self.dst_max_steps());
                if pixels {
                    Box::new(FrameSkip::new(PixelObservation::new(env), skip)?)
                } else {
                    Box::new(FrameSkip::new(env, skip)?)
                }
            }
            EnvKind::Minecart => {
                let env = Minecart::new(self.minecart_config(), seed)?;
                if pixels {
                    Box::new(FrameSkip::new(PixelObservation::new(env), skip)?)
                } else {
                    Box::new(FrameSkip::new(env, skip)?)
                }
            }
        })
    }
}

/// Maps a TOML error to a config error naming the offending key when the
/// message carries one.
/// Config error for a failed section parse, keyed `section.field` when the
/// message names a field.
pub(crate) fn toml_error(e: &toml::de::Error, section: &str) -> MorlError {
    let message = e.message().to_string();
    let key = message
        .split('`')
        .nth(1)
        .filter(|k| *k != section)
        .map_or_else(|| section.to_string(), |k| format!("{section}.{k}"));
    MorlError::config(key, message)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_env_kind() {
        let d = EnvConfig::dst();
        assert_eq!((d.gamma(), d.frame_skip()), (0.95, 1));
        let m = EnvConfig::minecart();
        assert_eq!((m.gamma(), m.frame_skip()), (0.98, 4));
        assert_eq!(m.num_objectives(), 3);
    }

    #[test]
    fn parses_inline_grid() {
        let text = "[env]\nkind = \"dst\"\ngrid = \"\"\"\nS T2\n. T3\n\"\"\"\nmax_steps = 9\n";
        let cfg = EnvConfig::from_toml_str(text, Path::new(".")).unwrap();
        assert_eq!(cfg.dst_map().unwrap().treasures().len(), 2);
        assert_eq!(cfg.dst_max_steps(), 9);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = "[env]\nkind = \"dst\"\nbogus_key = 3\n";
        match EnvConfig::from_toml_str(text, Path::new(".")) {
            Err(MorlError::Config { key, .. }) => assert_eq!(key, "env.bogus_key"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn minecart_overrides() {
        let text = "[env]\nkind = \"minecart\"\n[env.minecart]\ncapacity = 2.0\n";
        let cfg = EnvConfig::from_toml_str(text, Path::new(".")).unwrap();
        assert_eq!(cfg.minecart_config().capacity, 2.0);
        assert_eq!(cfg.minecart_config().mines.len(), 5);
        let env = cfg.build(0).unwrap();
        assert_eq!(env.num_actions(), 6);
    }

    #[test]
    fn map_file_is_resolved_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.map"), "S T4\n").unwrap();
        let text = "[env]\nkind = \"dst\"\nmap = \"m.map\"\n";
        let cfg = EnvConfig::from_toml_str(text, dir.path()).unwrap();
        assert_eq!(cfg.dst_map().unwrap().treasures(), vec![((0, 1), 4.0)]);
        let text = "[env]\nkind = \"dst\"\nmap = \"missing.map\"\n";
        assert!(EnvConfig::from_toml_str(text, dir.path()).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let text = "[env]\nkind = \"dst\"\nframe_skip = 0\n";
        assert!(EnvConfig::from_toml_str(text, Path::new(".")).is_err());
        let text = "[env]\nkind = \"minecart\"\nobservation = \"one_hot\"\n";
        assert!(EnvConfig::from_toml_str(text, Path::new(".")).is_err());
    }
}
