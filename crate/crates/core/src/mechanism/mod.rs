//! Peer-prediction mechanisms used as the unchecked reward `z`.

mod analytic;
mod instance;
mod reward;
mod simulate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::ScoringRule;
use crate::signal::{Environment, DEFAULT_ENUMERATION_BUDGET};
use crate::strategy::StrategyProfile;

pub use analytic::{analytic_unchecked_utility, pts_finite_population_utility};
pub use instance::{sample_instance, ObjectLayout, RealizedInstance};
pub use reward::{
    realized_reward, reward_dbts, reward_kamble, reward_mrbts, reward_output_agreement,
    reward_peer_insensitive, reward_pts, reward_radanovic15, reward_rbts, reward_riley,
    reward_shnayder, shadowed_belief,
};
pub use simulate::{simulate_utilities, simulate_utilities_with};

pub const DEFAULT_THETA: f64 = 0.05;

/// How Riley's mechanism combines the per-peer scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RileyAggregation {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    OutputAgreement,
    PeerTruthSerum,
    #[serde(rename = "shnayder")]
    ShnayderDG,
    Kamble,
    Radanovic15,
    #[serde(rename = "robust_bts")]
    RobustBTS,
    #[serde(rename = "multi_valued_rbts")]
    MultiValuedRBTS,
    #[serde(rename = "divergence_bts")]
    DivergenceBTS,
    #[serde(rename = "riley")]
    RileyMinimum,
    PeerInsensitive,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 10] = [
        MechanismKind::OutputAgreement,
        MechanismKind::PeerTruthSerum,
        MechanismKind::ShnayderDG,
        MechanismKind::Kamble,
        MechanismKind::Radanovic15,
        MechanismKind::RobustBTS,
        MechanismKind::MultiValuedRBTS,
        MechanismKind::DivergenceBTS,
        MechanismKind::RileyMinimum,
        MechanismKind::PeerInsensitive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::OutputAgreement => "output_agreement",
            MechanismKind::PeerTruthSerum => "peer_truth_serum",
            MechanismKind::ShnayderDG => "shnayder",
            MechanismKind::Kamble => "kamble",
            MechanismKind::Radanovic15 => "radanovic15",
            MechanismKind::RobustBTS => "robust_bts",
            MechanismKind::MultiValuedRBTS => "multi_valued_rbts",
            MechanismKind::DivergenceBTS => "divergence_bts",
            MechanismKind::RileyMinimum => "riley",
            MechanismKind::PeerInsensitive => "peer_insensitive",
        }
    }

    pub fn uses_beliefs(self) -> bool {
        matches!(
            self,
            MechanismKind::RobustBTS
                | MechanismKind::MultiValuedRBTS
                | MechanismKind::DivergenceBTS
                | MechanismKind::RileyMinimum
        )
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One unchecked mechanism with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MechanismDoc", into = "MechanismDoc")]
pub enum MechanismSpec {
    OutputAgreement,
    PeerTruthSerum {
        alpha: f64,
        beta: f64,
    },
    ShnayderDG,
    Kamble {
        k: f64,
    },
    Radanovic15,
    RobustBTS {
        rule: ScoringRule,
    },
    MultiValuedRBTS {
        rule: ScoringRule,
    },
    DivergenceBTS {
        rule: ScoringRule,
        theta: f64,
    },
    RileyMinimum {
        rule: ScoringRule,
        aggregation: RileyAggregation,
    },
    PeerInsensitive {
        w: f64,
    },
}

impl MechanismSpec {
    pub fn kind(&self) -> MechanismKind {
        match self {
            MechanismSpec::OutputAgreement => MechanismKind::OutputAgreement,
            MechanismSpec::PeerTruthSerum { .. } => MechanismKind::PeerTruthSerum,
            MechanismSpec::ShnayderDG => MechanismKind::ShnayderDG,
            MechanismSpec::Kamble { .. } => MechanismKind::Kamble,
            MechanismSpec::Radanovic15 => MechanismKind::Radanovic15,
            MechanismSpec::RobustBTS { .. } => MechanismKind::RobustBTS,
            MechanismSpec::MultiValuedRBTS { .. } => MechanismKind::MultiValuedRBTS,
            MechanismSpec::DivergenceBTS { .. } => MechanismKind::DivergenceBTS,
            MechanismSpec::RileyMinimum { .. } => MechanismKind::RileyMinimum,
            MechanismSpec::PeerInsensitive { .. } => MechanismKind::PeerInsensitive,
        }
    }

    pub fn rule(&self) -> Option<ScoringRule> {
        match self {
            MechanismSpec::RobustBTS { rule }
            | MechanismSpec::MultiValuedRBTS { rule }
            | MechanismSpec::DivergenceBTS { rule, .. }
            | MechanismSpec::RileyMinimum { rule, .. } => Some(*rule),
            _ => None,
        }
    }

    /// The ten mechanisms with the reference parameters: quadratic rule,
    /// alpha 0.1, beta 1, K 1, default theta, W 1.
    pub fn reference_set() -> Vec<MechanismSpec> {
        let rule = ScoringRule::Quadratic;
        vec![
            MechanismSpec::OutputAgreement,
            MechanismSpec::PeerTruthSerum {
                alpha: 0.1,
                beta: 1.0,
            },
            MechanismSpec::ShnayderDG,
            MechanismSpec::Kamble { k: 1.0 },
            MechanismSpec::Radanovic15,
            MechanismSpec::RobustBTS { rule },
            MechanismSpec::MultiValuedRBTS { rule },
            MechanismSpec::DivergenceBTS {
                rule,
                theta: DEFAULT_THETA,
            },
            MechanismSpec::RileyMinimum {
                rule,
                aggregation: RileyAggregation::Mean,
            },
            MechanismSpec::PeerInsensitive { w: 1.0 },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidMechanism(format!(
                    "{name} must be > 0, got {v}"
                )))
            }
        };
        match self {
            MechanismSpec::PeerTruthSerum { alpha, beta } => {
                positive("alpha", *alpha)?;
                positive("beta", *beta)
            }
            MechanismSpec::Kamble { k } => positive("K", *k),
            MechanismSpec::DivergenceBTS { theta, .. } => positive("theta", *theta),
            MechanismSpec::PeerInsensitive { w } => positive("W", *w),
            _ => Ok(()),
        }
    }

    /// Rejects mechanisms that cannot run on `env` at all.
    pub fn check_env(&self, env: &Environment) -> Result<()> {
        if self.kind() == MechanismKind::RobustBTS && env.num_labels() != 2 {
            return Err(Error::NonBinaryLabelSpace(env.num_labels()));
        }
        Ok(())
    }
}

impl fmt::Display for MechanismSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind().name())
    }
}

/// Flat config form of [`MechanismSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismDoc {
    pub kind: MechanismKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, rename = "W", skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<ScoringRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub riley_aggregation: Option<RileyAggregation>,
}

impl TryFrom<MechanismDoc> for MechanismSpec {
    type Error = Error;

    fn try_from(d: MechanismDoc) -> Result<Self> {
        let kind = d.kind;
        let mut allowed: Vec<&str> = Vec::new();
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::InvalidMechanism(format!("{kind} requires `{name}`")))
        };
        let need_rule = || {
            d.rule
                .ok_or_else(|| Error::InvalidMechanism(format!("{kind} requires `rule`")))
        };
        let spec = match kind {
            MechanismKind::OutputAgreement => MechanismSpec::OutputAgreement,
            MechanismKind::PeerTruthSerum => {
                allowed.extend(["alpha", "beta"]);
                MechanismSpec::PeerTruthSerum {
                    alpha: need(d.alpha, "alpha")?,
                    beta: need(d.beta, "beta")?,
                }
            }
            MechanismKind::ShnayderDG => MechanismSpec::ShnayderDG,
            MechanismKind::Kamble => {
                allowed.push("K");
                MechanismSpec::Kamble { k: need(d.k, "K")? }
            }
            MechanismKind::Radanovic15 => MechanismSpec::Radanovic15,
            MechanismKind::RobustBTS => {
                allowed.push("rule");
                MechanismSpec::RobustBTS { rule: need_rule()? }
            }
            MechanismKind::MultiValuedRBTS => {
                allowed.push("rule");
                MechanismSpec::MultiValuedRBTS { rule: need_rule()? }
            }
            MechanismKind::DivergenceBTS => {
                allowed.extend(["rule", "theta"]);
                MechanismSpec::DivergenceBTS {
                    rule: need_rule()?,
                    theta: d.theta.unwrap_or(DEFAULT_THETA),
                }
            }
            MechanismKind::RileyMinimum => {
                allowed.extend(["rule", "riley_aggregation"]);
                MechanismSpec::RileyMinimum {
                    rule: need_rule()?,
                    aggregation: d.riley_aggregation.unwrap_or_default(),
                }
            }
            MechanismKind::PeerInsensitive => {
                allowed.push("W");
                MechanismSpec::PeerInsensitive { w: need(d.w, "W")? }
            }
        };
        let present = [
            ("alpha", d.alpha.is_some()),
            ("beta", d.beta.is_some()),
            ("K", d.k.is_some()),
            ("theta", d.theta.is_some()),
            ("W", d.w.is_some()),
            ("rule", d.rule.is_some()),
            ("riley_aggregation", d.riley_aggregation.is_some()),
        ];
        if let Some((name, _)) = present.iter().find(|(n, p)| *p && !allowed.contains(n)) {
            return Err(Error::InvalidMechanism(format!(
                "`{name}` is not a parameter of {kind}"
            )));
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl From<MechanismSpec> for MechanismDoc {
    fn from(s: MechanismSpec) -> Self {
        let mut d = MechanismDoc {
            kind: s.kind(),
            alpha: None,
            beta: None,
            k: None,
            theta: None,
            w: None,
            rule: s.rule(),
            riley_aggregation: None,
        };
        match s {
            MechanismSpec::PeerTruthSerum { alpha, beta } => {
                d.alpha = Some(alpha);
                d.beta = Some(beta);
            }
            MechanismSpec::Kamble { k } => d.k = Some(k),
            MechanismSpec::DivergenceBTS { theta, .. } => d.theta = Some(theta),
            MechanismSpec::RileyMinimum { aggregation, .. } => {
                d.riley_aggregation = Some(aggregation)
            }
            MechanismSpec::PeerInsensitive { w } => d.w = Some(w),
            _ => {}
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityEstimate {
    pub value: f64,
    pub stderr: f64,
    pub method: Method,
    pub samples: u64,
}

impl UtilityEstimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            stderr: 0.0,
            method: Method::Analytic,
            samples: 0,
        }
    }

    /// Affine map `a + b * self`, with the standard error scaled by `|b|`.
    pub fn affine(self, a: f64, b: f64) -> Self {
        Self {
            value: a + b * self.value,
            stderr: self.stderr * b.abs(),
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    /// Exact when an analytic form exists and fits the budget, else Monte Carlo.
    #[default]
    Auto,
    Analytic,
    MonteCarlo,
}

/// Knobs shared by every utility evaluator.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub method: MethodChoice,
    pub trials: usize,
    pub seed: u64,
    /// Population used by the simulator instead of the environment's.
    pub sim_agents: Option<usize>,
    pub sim_objects: Option<usize>,
    pub budget: u128,
    /// Subtract the focal agent's effort cost from every simulated trial.
    pub include_effort_cost: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            method: MethodChoice::Auto,
            trials: 10_000,
            seed: 0,
            sim_agents: None,
            sim_objects: None,
            budget: DEFAULT_ENUMERATION_BUDGET,
            include_effort_cost: false,
        }
    }
}

/// Expected unchecked reward of `for_agent` under `profile`, exact when possible.
pub fn expected_unchecked_utility(
    spec: &MechanismSpec,
    env: &Environment,
    profile: &StrategyProfile,
    for_agent: usize,
) -> Result<UtilityEstimate> {
    expected_unchecked_utility_with(spec, env, profile, for_agent, &EvalOptions::default())
}

pub fn expected_unchecked_utility_with(
    spec: &MechanismSpec,
    env: &Environment,
    profile: &StrategyProfile,
    for_agent: usize,
    opts: &EvalOptions,
) -> Result<UtilityEstimate> {
    spec.validate()?;
    spec.check_env(env)?;
    profile.check(env)?;
    match opts.method {
        MethodChoice::MonteCarlo => simulate_utilities_with(spec, env, profile, for_agent, opts),
        MethodChoice::Analytic => {
            analytic_unchecked_utility(spec, env, profile, for_agent, opts.budget)
        }
        MethodChoice::Auto => {
            match analytic_unchecked_utility(spec, env, profile, for_agent, opts.budget) {
                Ok(u) => Ok(u),
                Err(Error::EnumerationBudgetExceeded { .. }) | Err(Error::Unsupported(_)) => {
                    log::debug!("{spec}: falling back to Monte Carlo");
                    simulate_utilities_with(spec, env, profile, for_agent, opts)
                }
                Err(e) => Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doc_round_trip() {
        for spec in MechanismSpec::reference_set() {
            let j = serde_json::to_string(&spec).unwrap();
            let back: MechanismSpec = serde_json::from_str(&j).unwrap();
            assert_eq!(back, spec);
        }
    }

    #[test]
    fn doc_param_rules() {
        let bad = [
            r#"{"kind":"peer_truth_serum","alpha":0.1}"#,
            r#"{"kind":"output_agreement","K":1}"#,
            r#"{"kind":"kamble","K":0}"#,
            r#"{"kind":"riley"}"#,
            r#"{"kind":"peer_insensitive","W":-1}"#,
            r#"{"kind":"oa"}"#,
        ];
        for b in bad {
            assert!(serde_json::from_str::<MechanismSpec>(b).is_err(), "{b}");
        }
        let d: MechanismSpec =
            serde_json::from_str(r#"{"kind":"divergence_bts","rule":"log"}"#).unwrap();
        assert_eq!(
            d,
            MechanismSpec::DivergenceBTS {
                rule: ScoringRule::Logarithmic,
                theta: 0.05
            }
        );
    }
}
