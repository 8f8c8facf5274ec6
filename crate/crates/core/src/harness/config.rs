use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generate::{generate_environments, GeneratorSpec};
use crate::error::{Error, Result};
use crate::mechanism::MechanismSpec;
use crate::signal::{Environment, EnvironmentDoc};

/// An environment document or a seeded generator, as written in a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvironmentEntry {
    Generated { generator: GeneratorSpec },
    Explicit(EnvironmentDoc),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweeps {
    /// Empty means each environment's own effort cost.
    #[serde(default)]
    pub effort_costs: Vec<f64>,
    /// Extra probabilities at which truthful and low-signal utilities are reported.
    #[serde(default)]
    pub p_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environments: Vec<EnvironmentEntry>,
    pub mechanisms: Vec<MechanismSpec>,
    #[serde(default)]
    pub sweeps: Sweeps,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_grid")]
    pub grid: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_trials() -> usize {
    10_000
}

fn default_grid() -> f64 {
    1e-3
}

/// An environment ready to run, with its identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedEnvironment {
    pub id: String,
    pub env: Environment,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    environments: Vec<serde_json::Value>,
    mechanisms: Vec<serde_json::Value>,
    #[serde(default)]
    sweeps: Sweeps,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_grid")]
    grid: f64,
    #[serde(default)]
    output_dir: Option<PathBuf>,
}

fn validation(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Validation {
        path: path.into(),
        message: message.into(),
    }
}

fn typed<T: serde::de::DeserializeOwned>(value: serde_json::Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." {
            prefix.to_string()
        } else {
            format!("{prefix}.{inner}")
        };
        validation(path, e.into_inner().to_string())
    })
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let raw: RawConfig = typed(value, "$")?;
    let mut environments = Vec::with_capacity(raw.environments.len());
    for (i, v) in raw.environments.into_iter().enumerate() {
        let at = format!("environments[{i}]");
        let entry = if v.get("generator").is_some() {
            #[derive(Deserialize)]
            #[serde(deny_unknown_fields)]
            struct Gen {
                generator: GeneratorSpec,
            }
            let g: Gen = typed(v, &at)?;
            EnvironmentEntry::Generated {
                generator: g.generator,
            }
        } else {
            EnvironmentEntry::Explicit(typed(v, &at)?)
        };
        environments.push(entry);
    }
    let mechanisms = raw
        .mechanisms
        .into_iter()
        .enumerate()
        .map(|(i, v)| typed(v, &format!("mechanisms[{i}]")))
        .collect::<Result<Vec<MechanismSpec>>>()?;
    let config = ExperimentConfig {
        environments,
        mechanisms,
        sweeps: raw.sweeps,
        trials: raw.trials,
        seed: raw.seed,
        grid: raw.grid,
        output_dir: raw.output_dir,
    };
    validate_config(&config)?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn validate_config(config: &ExperimentConfig) -> Result<()> {
    if config.environments.is_empty() {
        return Err(validation(
            "environments",
            "at least one environment is required",
        ));
    }
    if config.mechanisms.is_empty() {
        return Err(validation(
            "mechanisms",
            "at least one mechanism is required",
        ));
    }
    if config.trials == 0 {
        return Err(validation("trials", "must be at least 1"));
    }
    if !(config.grid > 0.0 && config.grid <= 1.0) {
        return Err(validation("grid", "must lie in (0, 1]"));
    }
    for (i, c) in config.sweeps.effort_costs.iter().enumerate() {
        if !(c.is_finite() && *c >= 0.0) {
            return Err(validation(
                format!("sweeps.effort_costs[{i}]"),
                "must be a nonnegative number",
            ));
        }
    }
    for (i, p) in config.sweeps.p_values.iter().enumerate() {
        if !(0.0..=1.0).contains(p) {
            return Err(validation(
                format!("sweeps.p_values[{i}]"),
                "must lie in [0, 1]",
            ));
        }
    }
    for (i, m) in config.mechanisms.iter().enumerate() {
        m.validate()
            .map_err(|e| validation(format!("mechanisms[{i}]"), e.to_string()))?;
    }
    resolve_environments(config).map(|_| ())
}

/// Expands generators and assigns identifiers: the document's `id`, or
/// `env{index}` for unnamed documents.
pub fn resolve_environments(config: &ExperimentConfig) -> Result<Vec<NamedEnvironment>> {
    let mut out = Vec::new();
    for (i, entry) in config.environments.iter().enumerate() {
        let at = format!("environments[{i}]");
        match entry {
            EnvironmentEntry::Explicit(doc) => {
                let id = doc.id.clone().unwrap_or_else(|| format!("env{i}"));
                let env = doc
                    .clone()
                    .into_environment()
                    .map_err(|e| validation(at.clone(), e.to_string()))?;
                out.push(NamedEnvironment { id, env });
            }
            EnvironmentEntry::Generated { generator } => {
                let envs = generate_environments(generator)
                    .map_err(|e| validation(format!("{at}.generator"), e.to_string()))?;
                out.extend(envs);
            }
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for e in &out {
        if !seen.insert(e.id.clone()) {
            return Err(validation(
                "environments",
                format!("duplicate environment id `{}`", e.id),
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const E1: &str = r#"{
        "environments": [{"id": "E1", "labels": [0, 1], "prior": [0.5, 0.5],
            "high": [[0.9, 0.1], [0.1, 0.9]], "effort_cost": 0.1, "n_agents": 3, "n_objects": 2}],
        "mechanisms": [{"kind": "output_agreement"}]
    }"#;

    #[test]
    fn parses_minimal_config() {
        let c = parse_config(E1).unwrap();
        assert_eq!(c.trials, 10_000);
        assert_eq!(c.grid, 1e-3);
        let envs = resolve_environments(&c).unwrap();
        assert_eq!(envs[0].id, "E1");
        let want = crate::signal::fixtures::e1();
        let (got, want) = (&envs[0].env, &want);
        assert_eq!(got.q_space, want.q_space);
        assert_eq!(
            (got.n_agents, got.n_objects),
            (want.n_agents, want.n_objects)
        );
        for q in 0..2 {
            for s in 0..2 {
                assert!((got.high_channel.prob(q, s) - want.high_channel.prob(q, s)).abs() < 1e-15);
                assert!(
                    (got.trusted_channel.prob(q, s) - want.trusted_channel.prob(q, s)).abs()
                        < 1e-15
                );
                assert_eq!(got.low_channel.prob(q, s), want.low_channel.prob(q, s));
            }
        }
    }

    #[test]
    fn missing_prior_names_the_field() {
        let text = E1.replace(r#""prior": [0.5, 0.5],"#, "");
        match parse_config(&text) {
            Err(Error::Validation { path, message }) => {
                assert!(path.starts_with("environments[0]"), "{path}");
                assert!(message.contains("prior"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn error_kinds() {
        assert!(matches!(parse_config("{"), Err(Error::Parse(_))));
        let bad_mech = E1.replace("output_agreement", "kamble");
        match parse_config(&bad_mech) {
            Err(Error::Validation { path, .. }) => assert_eq!(path, "mechanisms[0]"),
            other => panic!("{other:?}"),
        }
        let bad_prior = E1.replace("[0.5, 0.5]", "[0.5, 0.6]");
        assert!(matches!(
            parse_config(&bad_prior),
            Err(Error::Validation { .. })
        ));
        let no_mech = E1.replace(r#"[{"kind": "output_agreement"}]"#, "[]");
        assert!(matches!(
            parse_config(&no_mech),
            Err(Error::Validation { .. })
        ));
        let typo = E1.replace("\"mechanisms\"", "\"trials\": 0, \"mechanisms\"");
        assert!(matches!(parse_config(&typo), Err(Error::Validation { .. })));
    }

    #[test]
    fn generator_entries_expand() {
        let text = r#"{"environments": [{"generator": {"num_labels": 3, "seed": 7, "count": 20}}],
                       "mechanisms": [{"kind": "shnayder"}]}"#;
        let c = parse_config(text).unwrap();
        let a = resolve_environments(&c).unwrap();
        let b = resolve_environments(&c).unwrap();
        assert_eq!(a.len(), 20);
        assert!(a.iter().all(|e| e.env.num_labels() == 3));
        assert_eq!(a, b);
    }
}
