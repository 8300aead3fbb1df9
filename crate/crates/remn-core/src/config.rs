//! Flat key=value configuration files. Unknown keys are errors; every key
//! has a default.

use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;
use crate::synth::{ScenarioKind, ScenarioSpec};
use std::collections::BTreeMap;
use std::path::Path;

/// Parsed run configuration: pipeline settings plus the scenario to run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub scenario: ScenarioSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pipeline: PipelineConfig::default(),
            scenario: ScenarioSpec {
                kind: ScenarioKind::Plain,
                frames: 60,
                height: 128,
                width: 128,
                replay_factor: 1,
                seed: 0,
            },
        }
    }
}

fn parse_flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        _ => Err(Error::argument(format!("{}: expected a boolean, got '{}'", key, value))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::argument(format!("{}: invalid value '{}'", key, value)))
}

/// `<H>x<W>` size strings.
pub fn parse_size(value: &str) -> Result<(usize, usize)> {
    let (h, w) = value
        .split_once('x')
        .ok_or_else(|| Error::argument(format!("size '{}' must be HxW", value)))?;
    Ok((parse_num("size", h)?, parse_num("size", w)?))
}

impl RunConfig {
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.pipeline;
        match key {
            "seed" => {
                p.seed = parse_num(key, value)?;
                self.scenario.seed = p.seed;
            }
            "key_channels" => p.key_channels = parse_num(key, value)?,
            "value_channels" => p.value_channels = parse_num(key, value)?,
            "objects" => p.objects = parse_num(key, value)?,
            "frm.enabled" => p.frm_enabled = parse_flag(key, value)?,
            "frm.kernel" => p.frm_kernel = parse_num(key, value)?,
            "frm.seed" => p.frm_seed = Some(parse_num(key, value)?),
            "asm.enabled" => p.asm_enabled = parse_flag(key, value)?,
            "asm.sigma" => p.sigma = parse_num(key, value)?,
            "asm.interval" => p.interval = parse_num(key, value)?,
            "rrm.enabled" => p.rrm_enabled = parse_flag(key, value)?,
            "rrm.capacity" => p.capacity = parse_num(key, value)?,
            "rrm.policies" => p.policies = parse_num(key, value)?,
            "rrm.hidden" => p.rrm_hidden = parse_num(key, value)?,
            "rrm.seed" => p.rrm_seed = Some(parse_num(key, value)?),
            "rrm.protect_first" => p.protect_first = parse_flag(key, value)?,
            "pipeline.store_raw_key" => p.store_raw_key = parse_flag(key, value)?,
            "scenario.name" => self.scenario.kind = value.parse()?,
            "scenario.frames" => self.scenario.frames = parse_num(key, value)?,
            "scenario.size" => {
                let (h, w) = parse_size(value)?;
                self.scenario.height = h;
                self.scenario.width = w;
            }
            "scenario.replay" => self.scenario.replay_factor = parse_num(key, value)?,
            "scenario.seed" => self.scenario.seed = parse_num(key, value)?,
            other => {
                return Err(Error::argument(format!("unknown config key '{}'", other)));
            }
        }
        Ok(())
    }

    pub fn from_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::argument(format!("line {}: expected key=value", lineno + 1))
            })?;
            cfg.apply(key.trim(), value.trim())?;
        }
        cfg.pipeline.validate()?;
        cfg.scenario.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_str(&text)
    }

    /// Every key with its effective value, for the report's config echo.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let p = &self.pipeline;
        let s = &self.scenario;
        let mut map = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            map.insert(k.to_string(), v);
        };
        put("seed", p.seed.to_string());
        put("key_channels", p.key_channels.to_string());
        put("value_channels", p.value_channels.to_string());
        put("objects", p.objects.to_string());
        put("frm.enabled", p.frm_enabled.to_string());
        put("frm.kernel", p.frm_kernel.to_string());
        put("frm.seed", p.frm_seed().to_string());
        put("asm.enabled", p.asm_enabled.to_string());
        put("asm.sigma", p.sigma.to_string());
        put("asm.interval", p.interval.to_string());
        put("rrm.enabled", p.rrm_enabled.to_string());
        put("rrm.capacity", p.capacity.to_string());
        put("rrm.policies", p.policies.to_string());
        put("rrm.hidden", p.rrm_hidden.to_string());
        put("rrm.seed", p.rrm_seed().to_string());
        put("rrm.protect_first", p.protect_first.to_string());
        put("pipeline.store_raw_key", p.store_raw_key.to_string());
        put("scenario.name", s.kind.to_string());
        put("scenario.frames", s.frames.to_string());
        put("scenario.size", format!("{}x{}", s.height, s.width));
        put("scenario.replay", s.replay_factor.to_string());
        put("scenario.seed", s.seed.to_string());
        map
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::from_str("").unwrap();
        assert_eq!(cfg.pipeline.key_channels, 16);
        assert_eq!(cfg.pipeline.capacity, 8);
        assert!((cfg.pipeline.sigma - 0.1).abs() < 1e-12);
        assert_eq!(cfg.scenario.frames, 60);
    }

    #[test]
    fn parses_known_keys() {
        let cfg = RunConfig::from_str(
            "seed = 9\n# a comment\nasm.sigma = 0.2\nscenario.name = deform\nscenario.size = 64x128\nrrm.enabled = false\n",
        )
        .unwrap();
        assert_eq!(cfg.pipeline.seed, 9);
        assert_eq!(cfg.scenario.seed, 9);
        assert!((cfg.pipeline.sigma - 0.2).abs() < 1e-12);
        assert_eq!(cfg.scenario.kind, ScenarioKind::Deform);
        assert_eq!((cfg.scenario.height, cfg.scenario.width), (64, 128));
        assert!(!cfg.pipeline.rrm_enabled);
    }

    #[test]
    fn unknown_key_is_error() {
        assert!(RunConfig::from_str("no_such_key = 1\n").is_err());
    }

    #[test]
    fn malformed_line_is_error() {
        assert!(RunConfig::from_str("just a line\n").is_err());
    }

    #[test]
    fn capacity_divisibility_enforced() {
        // 2^policies = 8 does not divide 12
        assert!(RunConfig::from_str("rrm.capacity = 12\nrrm.policies = 3\n").is_err());
        assert!(RunConfig::from_str("rrm.capacity = 16\nrrm.policies = 3\n").is_ok());
    }

    #[test]
    fn explicit_scenario_seed_survives_seed_key() {
        let cfg = RunConfig::from_str("scenario.seed = 4\nseed = 9\n").unwrap();
        // later `seed` overwrites the scenario seed; order matters
        assert_eq!(cfg.scenario.seed, 9);
        let cfg = RunConfig::from_str("seed = 9\nscenario.seed = 4\n").unwrap();
        assert_eq!(cfg.scenario.seed, 4);
    }

    #[test]
    fn echo_contains_every_key() {
        let cfg = RunConfig::default();
        let echo = cfg.echo();
        assert_eq!(echo.len(), 22);
        assert_eq!(echo["scenario.size"], "128x128");
    }
}
