//! Flag / config-file merging and the resolved run record embedded in outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

pub const OUT_ENV: &str = "HUBBARD_GF_OUT";

/// Every key a config file may carry; names match the long flags with `-` as `_`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub t: Option<f64>,
    pub u: Option<f64>,
    pub grid: Option<usize>,
    pub shots: Option<u64>,
    pub seed: Option<u64>,
    pub dtau: Option<f64>,
    pub steps: Option<usize>,
    pub phi: Option<f64>,
    pub kind: Option<String>,
    pub protocol: Option<String>,
    pub evolution: Option<String>,
    pub noise_model: Option<PathBuf>,
    pub readout: Option<bool>,
    pub twirls: Option<usize>,
    pub dd: Option<String>,
    pub zne_scales: Option<Vec<f64>>,
    pub zne_order: Option<usize>,
    pub min_win: Option<f64>,
    pub reference: Option<String>,
    pub correlators: Option<Vec<String>>,
    pub repetitions: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(ConfigFile::default()) };
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        toml::from_str(&text).map_err(|source| CliError::Config { path: path.to_path_buf(), source })
    }
}

/// Flag, then config file, then default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn out_dir(flag: Option<PathBuf>, file: Option<PathBuf>) -> PathBuf {
    flag.or(file).or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"))
}

/// The resolved parameters of one run. Absent fields do not apply to the command.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunConfig {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dtau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protocol: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evolution: Option<String>,
    pub shots: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mitigation: Option<Value>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        RunConfig { command: command.into(), ..Default::default() }
    }

    /// Physical parameters must be finite; shot runs need an explicit seed.
    pub fn validate(&self, seed_given: bool) -> Result<()> {
        for (name, v) in [("t", self.t), ("u", self.u), ("dtau", self.dtau), ("phi", self.phi)] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(CliError::Usage(format!("--{name} must be finite, got {v}")));
                }
            }
        }
        if let Some(d) = self.dtau {
            if d <= 0.0 {
                return Err(CliError::Usage(format!("--dtau must be positive, got {d}")));
            }
        }
        if self.shots > 0 && !seed_given {
            return Err(CliError::Usage("--seed is required when --shots > 0".into()));
        }
        Ok(())
    }

    /// `(key, value)` pairs in key order, for `# key = value` CSV headers.
    pub fn header(&self) -> Vec<(String, String)> {
        let Value::Object(map) = serde_json::to_value(self).expect("plain data serializes") else { unreachable!() };
        map.into_iter()
            .map(|(k, v)| {
                let s = match v {
                    Value::String(s) => s,
                    other => other.to_string(),
                };
                (k, s)
            })
            .collect()
    }
}

/// Header lines of a CSV written by this tool: `# key = value` until the first
/// non-comment line.
pub fn read_header(text: &str) -> Vec<(String, String)> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| {
            let (k, v) = l.trim_start_matches('#').split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_default() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick(None::<i32>, None, 3), 3);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(toml::from_str::<ConfigFile>("t = 1.0\nbogus = 2").is_err());
        let c: ConfigFile = toml::from_str("t = 1.0\nkind = \"keldysh\"\nzne_scales = [1.0, 2.0]").unwrap();
        assert_eq!(c.t, Some(1.0));
        assert_eq!(c.zne_scales.unwrap().len(), 2);
    }

    #[test]
    fn header_round_trip() {
        let mut rc = RunConfig::new("correlator");
        rc.t = Some(1.0);
        rc.kind = Some("retarded".into());
        rc.seed = 7;
        let h = rc.header();
        let text: String = h.iter().map(|(k, v)| format!("# {k} = {v}\n")).collect::<String>() + "tau,estimate\n0,1\n";
        assert_eq!(read_header(&text), h);
        assert!(h.iter().any(|(k, v)| k == "kind" && v == "retarded"));
        assert!(!h.iter().any(|(k, _)| k == "u"));
    }

    #[test]
    fn validation() {
        let mut rc = RunConfig::new("x");
        rc.t = Some(f64::NAN);
        assert!(matches!(rc.validate(true), Err(CliError::Usage(_))));
        let mut rc = RunConfig::new("x");
        rc.shots = 10;
        assert!(rc.validate(false).is_err());
        assert!(rc.validate(true).is_ok());
    }
}
