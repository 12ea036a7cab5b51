//! Run configuration: one JSON document, with dotted-key overrides.

use std::fs;
use std::path::{Path, PathBuf};

use inversion_ad::epsnet::TrainConfig;
use inversion_ad::metrics::DEFAULT_FPR_CAP;
use inversion_ad::schedule::{NoiseSchedule, SubsetPolicy, TimestepSubset};
use inversion_ad::scoring::ScoreMode;
use inversion_ad::synthbench::BenchConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{config_err, file_err, CliResult};

/// File the effective config is echoed to inside the output dir.
pub const EFFECTIVE_CONFIG_FILE: &str = "config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            timesteps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> CliResult<NoiseSchedule<f64>> {
        Ok(NoiseSchedule::linear(self.timesteps, self.beta_start, self.beta_end)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsetConfig {
    /// Number of inversion steps `S`.
    pub steps: usize,
    pub policy: SubsetPolicy,
}

impl Default for SubsetConfig {
    fn default() -> Self {
        Self {
            steps: 3,
            policy: SubsetPolicy::Uniform,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory (`train.ften`, `test.ften`, ...). The synthetic
    /// bench is generated in memory when unset.
    pub dir: Option<PathBuf>,
    pub bench: BenchConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schedule: ScheduleConfig,
    pub subset: SubsetConfig,
    pub score_mode: ScoreMode,
    /// Perturbation ratio `r` used by `score_mode = "recon"`.
    pub recon_ratio: f64,
    /// Anomaly maps are upsampled to `out_height × out_width`.
    pub out_height: usize,
    pub out_width: usize,
    pub fpr_cap: f64,
    pub data: DataConfig,
    pub train: TrainConfig,
    /// Model file; defaults to `model.bin` in the output dir.
    pub model: Option<PathBuf>,
    /// FTEN file read by `invert`.
    pub input: Option<PathBuf>,
    /// Seeds evaluation-time noise (reconstruction baseline).
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleConfig::default(),
            subset: SubsetConfig::default(),
            score_mode: ScoreMode::Combined,
            recon_ratio: 0.4,
            out_height: 32,
            out_width: 32,
            fpr_cap: DEFAULT_FPR_CAP,
            data: DataConfig::default(),
            train: TrainConfig::default(),
            model: None,
            input: None,
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Loads `path` (or the defaults), applies `key=json` overrides in
    /// order and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[(String, Value)]) -> CliResult<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| crate::error::CliError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).or_else(|e| config_err(format!("{}: {e}", p.display())))?
            }
            None => serde_json::to_value(Self::default()).expect("default config serializes"),
        };
        for (key, value) in overrides {
            set_path(&mut doc, key, value.clone())?;
        }
        let cfg: Self = serde_json::from_value(doc).or_else(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.schedule.build()?;
        TimestepSubset::new(self.schedule.timesteps, self.subset.steps, self.subset.policy)?;
        if !(self.recon_ratio > 0.0 && self.recon_ratio <= 1.0) {
            return config_err(format!("recon_ratio must be in (0, 1], got {}", self.recon_ratio));
        }
        if self.out_height == 0 || self.out_width == 0 {
            return config_err("output resolution must be positive");
        }
        if !(self.fpr_cap > 0.0 && self.fpr_cap <= 1.0) {
            return config_err(format!("fpr_cap must be in (0, 1], got {}", self.fpr_cap));
        }
        self.train.validate()?;
        match &self.data.dir {
            Some(d) if !d.is_dir() => return config_err(format!("data dir {} does not exist", d.display())),
            Some(_) => {}
            None => self.data.bench.validate()?,
        }
        Ok(())
    }

    pub fn model_path(&self) -> PathBuf {
        self.model
            .clone()
            .unwrap_or_else(|| self.output_dir.join(crate::commands::MODEL_FILE))
    }

    pub fn subset(&self) -> CliResult<TimestepSubset> {
        Ok(TimestepSubset::new(
            self.schedule.timesteps,
            self.subset.steps,
            self.subset.policy,
        )?)
    }

    /// Writes the effective config into the output dir.
    pub fn echo(&self) -> CliResult<()> {
        fs::create_dir_all(&self.output_dir).map_err(file_err(&self.output_dir))?;
        let path = self.output_dir.join(EFFECTIVE_CONFIG_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        fs::write(&path, text).map_err(file_err(path))
    }
}

/// Parses `a.b.c=<json>`; a value that is not valid JSON is taken as a string.
pub fn parse_override(s: &str) -> CliResult<(String, Value)> {
    let Some((key, raw)) = s.split_once('=') else {
        return config_err(format!("override {s:?} is not key=value"));
    };
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> CliResult<()> {
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(map) = node else {
            return config_err(format!("cannot set {key}: {} is not an object", parts[..i].join(".")));
        };
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    config_err("empty override key")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn defaults_roundtrip_through_json() {
        let cfg = RunConfig::load(None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn overrides_apply_in_order() {
        let ov = vec![
            parse_override("subset.steps=10").unwrap(),
            parse_override("subset.policy=quad").unwrap(),
            parse_override("train.model.width=16").unwrap(),
            parse_override("subset.steps=5").unwrap(),
        ];
        let cfg = RunConfig::load(None, &ov).unwrap();
        assert_eq!(cfg.subset.steps, 5);
        assert_eq!(cfg.subset.policy, SubsetPolicy::Quad);
        assert_eq!(cfg.train.model.width, 16);
    }

    #[test]
    fn bad_keys_and_values_are_config_errors() {
        for ov in [
            "subset.stepz=3",
            "subset.steps=0",
            "subset.steps=1001",
            "score_mode=fancy",
            "recon_ratio=0",
        ] {
            let err = RunConfig::load(None, &[parse_override(ov).unwrap()]).unwrap_err();
            assert_eq!(err.exit_code(), crate::error::EXIT_CONFIG, "{ov}: {err}");
        }
        assert!(parse_override("novalue").is_err());
        assert_eq!(parse_override("a=x y").unwrap().1, json!("x y"));
    }
}
