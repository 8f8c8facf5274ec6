use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp1};
use serde::{Deserialize, Serialize};

use super::config::NamedEnvironment;
use crate::error::{Error, Result};
use crate::signal::{validate_environment, Channel, Distribution, Environment, LabelSpace};

/// Seeded family of random environments. Channel rows put a uniformly drawn
/// accuracy on the diagonal and spread the rest evenly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub num_labels: usize,
    pub seed: u64,
    pub count: usize,
    #[serde(default = "default_accuracy")]
    pub accuracy: [f64; 2],
    /// Defaults to `accuracy`.
    #[serde(default)]
    pub trusted_accuracy: Option<[f64; 2]>,
    /// Accuracy range of an informative low channel. Absent means a uniform
    /// low signal independent of quality.
    #[serde(default)]
    pub low_accuracy: Option<[f64; 2]>,
    /// Low signal independent of quality with a random marginal.
    #[serde(default)]
    pub random_low_marginal: bool,
    /// Flat Dirichlet prior instead of uniform.
    #[serde(default)]
    pub random_prior: bool,
    #[serde(default = "default_cost")]
    pub effort_cost: f64,
    #[serde(default = "default_agents")]
    pub n_agents: usize,
    #[serde(default = "default_objects")]
    pub n_objects: usize,
    #[serde(default)]
    pub id_prefix: Option<String>,
}

fn default_accuracy() -> [f64; 2] {
    [0.6, 0.95]
}

fn default_cost() -> f64 {
    0.1
}

fn default_agents() -> usize {
    3
}

fn default_objects() -> usize {
    2
}

impl GeneratorSpec {
    pub fn new(num_labels: usize, seed: u64, count: usize) -> Self {
        Self {
            num_labels,
            seed,
            count,
            accuracy: default_accuracy(),
            trusted_accuracy: None,
            low_accuracy: None,
            random_low_marginal: false,
            random_prior: false,
            effort_cost: default_cost(),
            n_agents: default_agents(),
            n_objects: default_objects(),
            id_prefix: None,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], k: usize) -> Result<()> {
    let floor = 1.0 / k as f64;
    if !(r[0] <= r[1] && r[0] >= floor && r[1] <= 1.0) {
        return Err(Error::InvalidEnvironment(format!(
            "{name} range [{}, {}] must satisfy 1/|Q| <= lo <= hi <= 1",
            r[0], r[1]
        )));
    }
    Ok(())
}

fn draw_in<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

fn noisy_channel<R: Rng>(rng: &mut R, k: usize, range: [f64; 2]) -> Channel {
    let rows = (0..k)
        .map(|q| {
            let acc = draw_in(rng, range);
            let off = (1.0 - acc) / (k - 1) as f64;
            (0..k).map(|s| if s == q { acc } else { off }).collect()
        })
        .collect();
    Channel::from_rows_unchecked(rows)
}

fn dirichlet<R: Rng>(rng: &mut R, k: usize) -> Result<Distribution> {
    let w: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    Distribution::from_weights(w.into_iter().map(|x: f64| x.max(1e-6)).collect())
}

pub fn generate_environments(spec: &GeneratorSpec) -> Result<Vec<NamedEnvironment>> {
    let k = spec.num_labels;
    if k < 2 {
        return Err(Error::InvalidEnvironment(
            "generator needs at least 2 labels".into(),
        ));
    }
    check_range("accuracy", spec.accuracy, k)?;
    let trusted_range = spec.trusted_accuracy.unwrap_or(spec.accuracy);
    check_range("trusted_accuracy", trusted_range, k)?;
    if let Some(r) = spec.low_accuracy {
        check_range("low_accuracy", r, k)?;
    }
    let prefix = spec
        .id_prefix
        .clone()
        .unwrap_or_else(|| format!("gen-k{k}-s{}", spec.seed));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let prior = if spec.random_prior {
            dirichlet(&mut rng, k)?
        } else {
            Distribution::uniform(k)
        };
        let high = noisy_channel(&mut rng, k, spec.accuracy);
        let trusted = noisy_channel(&mut rng, k, trusted_range);
        let low = match spec.low_accuracy {
            Some(r) => noisy_channel(&mut rng, k, r),
            None if spec.random_low_marginal => Channel::constant(k, &dirichlet(&mut rng, k)?),
            None => Channel::uninformative(k),
        };
        let env = Environment {
            q_space: LabelSpace::indexed(k)?,
            prior,
            high_channel: high,
            trusted_channel: trusted,
            low_channel: low,
            effort_cost: spec.effort_cost,
            n_agents: spec.n_agents,
            n_objects: spec.n_objects,
        };
        validate_environment(&env)?;
        out.push(NamedEnvironment {
            id: format!("{prefix}-{i}"),
            env,
        });
    }
    Ok(out)
}
