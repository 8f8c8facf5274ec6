//! Discrete signal environments.
//!
//! An [`Environment`] fixes a finite quality space, a prior over it, and three
//! signal channels: the costly per-agent high-quality channel, the common
//! low-quality channel (one draw per object, shared by every agent), and the
//! trusted evaluator's channel. All three are conditionally independent given
//! the object's quality.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used for every probability-sum check.
pub const PROB_TOL: f64 = 1e-12;

/// Default cap on the number of joint outcomes any exact enumeration may visit.
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 10_000_000;

/// Ordered finite set of distinct labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LabelName>", into = "Vec<LabelName>")]
pub struct LabelSpace {
    names: Vec<String>,
}

impl LabelSpace {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::InvalidEnvironment(format!(
                "label space needs at least 2 labels, got {}",
                names.len()
            )));
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(Error::InvalidEnvironment(format!("duplicate label `{a}`")));
            }
        }
        Ok(Self { names })
    }

    /// Labels `0, 1, ..., k-1`.
    pub fn indexed(k: usize) -> Result<Self> {
        Self::new((0..k).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, label: usize) -> &str {
        &self.names[label]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// A label as written in a JSON document: strings and numbers are both accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelName {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<LabelName> for String {
    fn from(l: LabelName) -> String {
        match l {
            LabelName::Int(i) => i.to_string(),
            LabelName::Float(f) => f.to_string(),
            LabelName::Text(s) => s,
        }
    }
}

impl TryFrom<Vec<LabelName>> for LabelSpace {
    type Error = Error;
    fn try_from(v: Vec<LabelName>) -> Result<Self> {
        LabelSpace::new(v.into_iter().map(String::from))
    }
}

impl From<LabelSpace> for Vec<LabelName> {
    fn from(l: LabelSpace) -> Self {
        l.names
            .into_iter()
            .map(|s| match s.parse::<i64>() {
                Ok(i) if i.to_string() == s => LabelName::Int(i),
                _ => LabelName::Text(s),
            })
            .collect()
    }
}

/// Probability weights over a label space, indexed by label position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Validating constructor.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let d = Self { probs };
        d.check("distribution")?;
        Ok(d)
    }

    /// Wraps raw weights without checking them; see [`Distribution::check`].
    pub fn from_vec_unchecked(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    /// Normalizes nonnegative weights. Fails when the total mass is zero.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidDistribution {
                context: "normalization".into(),
                reason: format!("weights {weights:?} cannot be normalized"),
            });
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn point_mass(k: usize, label: usize) -> Self {
        let mut probs = vec![0.0; k];
        probs[label] = 1.0;
        Self { probs }
    }

    pub fn check(&self, context: &str) -> Result<()> {
        if self.probs.is_empty() {
            return Err(Error::InvalidDistribution {
                context: context.into(),
                reason: "empty support".into(),
            });
        }
        if let Some(w) = self
            .probs
            .iter()
            .find(|w| !w.is_finite() || **w < 0.0 || **w > 1.0)
        {
            return Err(Error::InvalidDistribution {
                context: context.into(),
                reason: format!("weight {w} outside [0, 1]"),
            });
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidDistribution {
                context: context.into(),
                reason: format!("weights {:?} sum to {total}", self.probs),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn prob(&self, label: usize) -> f64 {
        self.probs[label]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Index of the heaviest label, the first one on ties.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn approx_eq(&self, other: &Distribution, tol: f64) -> bool {
        self.len() == other.len()
            && self
                .probs
                .iter()
                .zip(&other.probs)
                .all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// Conditional law of an output label given an input label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Channel {
    rows: Vec<Distribution>,
}

impl Channel {
    pub fn new(rows: Vec<Distribution>) -> Result<Self> {
        let c = Self { rows };
        c.check("channel", None)?;
        Ok(c)
    }

    pub fn from_rows_unchecked(rows: Vec<Vec<f64>>) -> Self {
        Self {
            rows: rows
                .into_iter()
                .map(Distribution::from_vec_unchecked)
                .collect(),
        }
    }

    /// Reports the input with probability `accuracy`, otherwise a uniformly
    /// chosen different label.
    pub fn symmetric(k: usize, accuracy: f64) -> Self {
        let off = if k > 1 {
            (1.0 - accuracy) / (k - 1) as f64
        } else {
            0.0
        };
        let rows = (0..k)
            .map(|q| {
                Distribution::from_vec_unchecked(
                    (0..k)
                        .map(|s| if s == q { accuracy } else { off })
                        .collect(),
                )
            })
            .collect();
        Self { rows }
    }

    pub fn identity(k: usize) -> Self {
        Self {
            rows: (0..k).map(|q| Distribution::point_mass(k, q)).collect(),
        }
    }

    /// Every row uniform: the output carries no information about the input.
    pub fn uninformative(k: usize) -> Self {
        Self {
            rows: (0..k).map(|_| Distribution::uniform(k)).collect(),
        }
    }

    /// Every row equal to `d`.
    pub fn constant(k: usize, d: &Distribution) -> Self {
        Self {
            rows: (0..k).map(|_| d.clone()).collect(),
        }
    }

    pub fn check(&self, context: &str, k: Option<usize>) -> Result<()> {
        let k = k.unwrap_or(self.rows.len());
        if self.rows.len() != k {
            return Err(Error::ShapeMismatch(format!(
                "{context} has {} rows, expected {k}",
                self.rows.len()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::ShapeMismatch(format!(
                    "{context} row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            row.check(&format!("{context} row {i}"))?;
        }
        Ok(())
    }

    #[inline]
    pub fn prob(&self, input: usize, output: usize) -> f64 {
        self.rows[input].prob(output)
    }

    pub fn row(&self, input: usize) -> &Distribution {
        &self.rows[input]
    }

    pub fn rows(&self) -> &[Distribution] {
        &self.rows
    }

    pub fn input_len(&self) -> usize {
        self.rows.len()
    }
}

/// The probabilistic game setting shared by every analysis in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub q_space: LabelSpace,
    pub prior: Distribution,
    pub high_channel: Channel,
    pub trusted_channel: Channel,
    pub low_channel: Channel,
    pub effort_cost: f64,
    pub n_agents: usize,
    pub n_objects: usize,
}

/// Which of the three signals a marginal refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    High,
    Low,
    Trusted,
}

impl Environment {
    /// Symmetric-noise environment with a quality-independent uniform low signal.
    pub fn symmetric(
        k: usize,
        high_accuracy: f64,
        trusted_accuracy: f64,
        effort_cost: f64,
        n_agents: usize,
        n_objects: usize,
    ) -> Result<Self> {
        let env = Self {
            q_space: LabelSpace::indexed(k)?,
            prior: Distribution::uniform(k),
            high_channel: Channel::symmetric(k, high_accuracy),
            trusted_channel: Channel::symmetric(k, trusted_accuracy),
            low_channel: Channel::uninformative(k),
            effort_cost,
            n_agents,
            n_objects,
        };
        validate_environment(&env)?;
        Ok(env)
    }

    #[inline]
    pub fn num_labels(&self) -> usize {
        self.q_space.len()
    }

    pub fn with_effort_cost(&self, effort_cost: f64) -> Self {
        Self {
            effort_cost,
            ..self.clone()
        }
    }

    pub fn with_population(&self, n_agents: usize, n_objects: usize) -> Self {
        Self {
            n_agents,
            n_objects,
            ..self.clone()
        }
    }

    pub fn channel(&self, which: SignalKind) -> &Channel {
        match which {
            SignalKind::High => &self.high_channel,
            SignalKind::Low => &self.low_channel,
            SignalKind::Trusted => &self.trusted_channel,
        }
    }

    /// `(q, s^l, P(q) P(s^l | q))` for every pair with positive mass.
    pub fn quality_low_pairs(&self) -> Vec<(usize, usize, f64)> {
        let k = self.num_labels();
        let mut out = Vec::with_capacity(k * k);
        for q in 0..k {
            let pq = self.prior.prob(q);
            if pq == 0.0 {
                continue;
            }
            for l in 0..k {
                let w = pq * self.low_channel.prob(q, l);
                if w > 0.0 {
                    out.push((q, l, w));
                }
            }
        }
        out
    }

    pub fn to_doc(&self) -> EnvironmentDoc {
        EnvironmentDoc {
            id: None,
            labels: self.q_space.clone().into(),
            prior: self.prior.probs().to_vec(),
            high: self
                .high_channel
                .rows()
                .iter()
                .map(|r| r.probs().to_vec())
                .collect(),
            trusted: Some(
                self.trusted_channel
                    .rows()
                    .iter()
                    .map(|r| r.probs().to_vec())
                    .collect(),
            ),
            low: Some(
                self.low_channel
                    .rows()
                    .iter()
                    .map(|r| r.probs().to_vec())
                    .collect(),
            ),
            effort_cost: self.effort_cost,
            n_agents: self.n_agents,
            n_objects: self.n_objects,
        }
    }
}

/// JSON form of an [`Environment`]. `trusted` defaults to the high channel and
/// `low` to the uninformative uniform channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub labels: Vec<LabelName>,
    pub prior: Vec<f64>,
    pub high: Vec<Vec<f64>>,
    #[serde(default)]
    pub trusted: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub low: Option<Vec<Vec<f64>>>,
    pub effort_cost: f64,
    pub n_agents: usize,
    pub n_objects: usize,
}

impl EnvironmentDoc {
    pub fn into_environment(self) -> Result<Environment> {
        let q_space = LabelSpace::try_from(self.labels)?;
        let k = q_space.len();
        let high = Channel::from_rows_unchecked(self.high);
        let trusted = self
            .trusted
            .map(Channel::from_rows_unchecked)
            .unwrap_or_else(|| high.clone());
        let low = self
            .low
            .map(Channel::from_rows_unchecked)
            .unwrap_or_else(|| Channel::uninformative(k));
        let env = Environment {
            q_space,
            prior: Distribution::from_vec_unchecked(self.prior),
            high_channel: high,
            trusted_channel: trusted,
            low_channel: low,
            effort_cost: self.effort_cost,
            n_agents: self.n_agents,
            n_objects: self.n_objects,
        };
        validate_environment(&env)?;
        Ok(env)
    }
}

impl Serialize for Environment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_doc().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Environment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        EnvironmentDoc::deserialize(d)?
            .into_environment()
            .map_err(serde::de::Error::custom)
    }
}

/// Checks every structural invariant; the error names the first violation.
pub fn validate_environment(env: &Environment) -> Result<()> {
    let k = env.q_space.len();
    if k < 2 {
        return Err(Error::InvalidEnvironment("fewer than 2 labels".into()));
    }
    if env.prior.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "prior has {} entries, expected {k}",
            env.prior.len()
        )));
    }
    env.prior.check("prior")?;
    env.high_channel.check("high channel", Some(k))?;
    env.trusted_channel.check("trusted channel", Some(k))?;
    env.low_channel.check("low channel", Some(k))?;
    if !(env.effort_cost >= 0.0) || !env.effort_cost.is_finite() {
        return Err(Error::InvalidEnvironment(format!(
            "effort cost {} must be a nonnegative number",
            env.effort_cost
        )));
    }
    if env.n_agents < 3 {
        return Err(Error::TooFewAgents(env.n_agents));
    }
    if env.n_objects < 2 {
        return Err(Error::InvalidEnvironment(format!(
            "n_objects = {} (at least 2 required)",
            env.n_objects
        )));
    }
    Ok(())
}

/// One joint outcome `(q, s^h_1..s^h_k, s^l, s^t)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignalTuple {
    pub quality: usize,
    pub high: Vec<usize>,
    pub low: usize,
    pub trusted: usize,
}

/// Exact finite joint law, stored as an outcome list.
#[derive(Debug, Clone)]
pub struct JointDistribution {
    entries: Vec<(SignalTuple, f64)>,
}

impl JointDistribution {
    pub fn entries(&self) -> &[(SignalTuple, f64)] {
        &self.entries
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }

    /// Probability of the event selected by `pred`.
    pub fn prob(&self, pred: impl Fn(&SignalTuple) -> bool) -> f64 {
        self.entries
            .iter()
            .filter(|(t, _)| pred(t))
            .map(|(_, w)| w)
            .sum()
    }

    pub fn weight_of(&self, tuple: &SignalTuple) -> f64 {
        self.prob(|t| t == tuple)
    }
}

/// Checks `base^exponent <= budget` without overflowing.
pub(crate) fn check_budget(base: usize, exponent: usize, budget: u128) -> Result<()> {
    let mut needed: u128 = 1;
    for _ in 0..exponent {
        needed = needed.saturating_mul(base as u128);
    }
    if needed > budget {
        return Err(Error::EnumerationBudgetExceeded { needed, budget });
    }
    Ok(())
}

pub fn joint_signal_distribution(env: &Environment, k: usize) -> Result<JointDistribution> {
    joint_signal_distribution_with_budget(env, k, DEFAULT_ENUMERATION_BUDGET)
}

/// Full product-form table over `|Q|^(k+3)` outcomes (zero-weight ones included).
pub fn joint_signal_distribution_with_budget(
    env: &Environment,
    k: usize,
    budget: u128,
) -> Result<JointDistribution> {
    if k == 0 || k > env.n_agents {
        return Err(Error::InvalidEnvironment(format!(
            "joint distribution over {k} agents requested, population is {}",
            env.n_agents
        )));
    }
    let nq = env.num_labels();
    check_budget(nq, k + 3, budget)?;
    let mut entries = Vec::new();
    let mut high = vec![0usize; k];
    for q in 0..nq {
        for l in 0..nq {
            for t in 0..nq {
                let base =
                    env.prior.prob(q) * env.low_channel.prob(q, l) * env.trusted_channel.prob(q, t);
                // odometer over the k high signals
                high.iter_mut().for_each(|h| *h = 0);
                loop {
                    let w = high
                        .iter()
                        .fold(base, |acc, h| acc * env.high_channel.prob(q, *h));
                    entries.push((
                        SignalTuple {
                            quality: q,
                            high: high.clone(),
                            low: l,
                            trusted: t,
                        },
                        w,
                    ));
                    let mut pos = 0;
                    while pos < k {
                        high[pos] += 1;
                        if high[pos] < nq {
                            break;
                        }
                        high[pos] = 0;
                        pos += 1;
                    }
                    if pos == k {
                        break;
                    }
                }
            }
        }
    }
    Ok(JointDistribution { entries })
}

/// Posterior of quality given one observation through `channel`.
pub fn quality_posterior(
    env: &Environment,
    channel: &Channel,
    observed: usize,
) -> Result<Distribution> {
    let k = env.num_labels();
    if observed >= k {
        return Err(Error::LabelOutOfRange(observed));
    }
    let weights: Vec<f64> = (0..k)
        .map(|q| env.prior.prob(q) * channel.prob(q, observed))
        .collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroProbabilityConditioning(observed));
    }
    Ok(Distribution::from_vec_unchecked(
        weights.into_iter().map(|w| w / total).collect(),
    ))
}

/// `Pr(s^h_{i'} = . | s^h_i = observed)` for two distinct agents.
pub fn posterior_peer_belief(env: &Environment, observed: usize) -> Result<Distribution> {
    let post = quality_posterior(env, &env.high_channel, observed)?;
    let k = env.num_labels();
    let probs = (0..k)
        .map(|s| {
            (0..k)
                .map(|q| post.prob(q) * env.high_channel.prob(q, s))
                .sum()
        })
        .collect();
    Ok(Distribution::from_vec_unchecked(probs))
}

pub fn signal_marginal(env: &Environment, which: SignalKind) -> Distribution {
    let channel = env.channel(which);
    let k = env.num_labels();
    let probs = (0..k)
        .map(|s| (0..k).map(|q| env.prior.prob(q) * channel.prob(q, s)).sum())
        .collect();
    Distribution::from_vec_unchecked(probs)
}

/// Reference environments used throughout the tests and the bundled config.
pub mod fixtures {
    use super::*;

    /// Binary labels, uniform prior, 0.9-accurate high and trusted channels,
    /// uninformative low channel, effort cost 0.1, three agents, two objects.
    pub fn e1() -> Environment {
        Environment::symmetric(2, 0.9, 0.9, 0.1, 3, 2).expect("E1 is valid")
    }

    /// Ternary labels with a skewed prior and asymmetric noise.
    pub fn ternary_a() -> Environment {
        let env = Environment {
            q_space: LabelSpace::indexed(3).unwrap(),
            prior: Distribution::from_vec_unchecked(vec![0.5, 0.3, 0.2]),
            high_channel: Channel::from_rows_unchecked(vec![
                vec![0.8, 0.15, 0.05],
                vec![0.1, 0.75, 0.15],
                vec![0.05, 0.15, 0.8],
            ]),
            trusted_channel: Channel::symmetric(3, 0.85),
            low_channel: Channel::uninformative(3),
            effort_cost: 0.05,
            n_agents: 4,
            n_objects: 6,
        };
        validate_environment(&env).unwrap();
        env
    }

    /// Ternary symmetric environment.
    pub fn ternary_b() -> Environment {
        Environment::symmetric(3, 0.7, 0.8, 0.08, 3, 6).expect("valid")
    }
}
