//! Run-config files: TOML with dotted section keys, plus command-line
//! `key=value` overrides applied on top of the parsed file.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::{Table, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub name: Option<String>,
    pub seed: Option<u64>,
    pub n_seeds: Option<usize>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub environment: EnvironmentSection,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: Option<u64>,
    pub t0: Option<u64>,
    pub eta: Option<f64>,
    pub delta: Option<f64>,
    pub lambda: Option<f64>,
    pub norm_bound: Option<f64>,
    pub gradient_bound: Option<f64>,
    pub row_norm_bound: Option<f64>,
    pub noise: Option<f64>,
    pub eps_opt: Option<f64>,
    pub checkpoints: Option<Vec<u64>>,
    pub force_theory_t0: Option<bool>,
    /// `estimated` or `known`.
    pub safe_set: Option<String>,
    pub export_exploration: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: Option<String>,
    pub c_lower: Option<f64>,
    pub c_upper: Option<f64>,
    pub lambda_dc: Option<f64>,
    pub prices_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    pub constraint_matrix: Option<Vec<Vec<f64>>>,
    pub constraint_offsets: Option<Vec<f64>>,
    pub box_lower: Option<Vec<f64>>,
    pub box_upper: Option<Vec<f64>>,
    pub baseline: Option<Vec<f64>>,
    pub baseline_min_gap: Option<f64>,
    pub noise_std: Option<f64>,
}

/// Parses `text` and applies `overrides` (each `dotted.key=value`) on top.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ConfigFile, ConfigError> {
    let mut table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<ConfigFile, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, overrides)
}

fn apply_override(table: &mut Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let raw = raw.trim();
    // Bare words that are not TOML literals are taken as strings.
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("nonempty key");
    let mut node = table;
    for p in parts {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Override(format!("{spec} ({p} is not a section)")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_and_sections_agree() {
        let a = parse_config("scenario.kind = \"f2\"\nrun.horizon = 10", &[]).unwrap();
        let b = parse_config("[scenario]\nkind = \"f2\"\n[run]\nhorizon = 10", &[]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.run.horizon, Some(10));
    }

    #[test]
    fn overrides_win() {
        let cfg = parse_config(
            "seed = 1\nrun.delta = 0.1",
            &[
                "run.delta=0.05".into(),
                "scenario.kind=f3".into(),
                "seed = 9".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.run.delta, Some(0.05));
        assert_eq!(cfg.scenario.kind.as_deref(), Some("f3"));
        assert_eq!(cfg.seed, Some(9));
        let cfg = parse_config("", &["environment.box_lower=[-1.0, -2.0]".into()]).unwrap();
        assert_eq!(cfg.environment.box_lower, Some(vec![-1.0, -2.0]));
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(
            parse_config("run.horizn = 3", &[]),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            parse_config("run = [", &[]),
            Err(ConfigError::Syntax(_))
        ));
        assert!(matches!(
            parse_config("", &["novalue".into()]),
            Err(ConfigError::Override(_))
        ));
        assert!(matches!(
            parse_config("", &["a..b=1".into()]),
            Err(ConfigError::Override(_))
        ));
        assert!(matches!(
            parse_config("seed = 1", &["seed.x=1".into()]),
            Err(ConfigError::Override(_))
        ));
    }
}
