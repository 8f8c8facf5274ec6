use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::Rng;

use crate::error::{Error, Result};
use crate::signal::{Distribution, Environment};
use crate::strategy::{induced_peer_belief, BeliefMode, Report, Strategy, StrategyProfile};

/// Which agent evaluates which object in a simulated batch.
///
/// The first `shared` objects are evaluated by everybody. The remaining
/// `n_agents * side_per_agent` objects are each skipped by exactly one agent,
/// round robin, which gives every pair of agents disjoint private task sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectLayout {
    pub n_agents: usize,
    pub n_objects: usize,
    pub shared: usize,
    pub side_per_agent: usize,
}

impl ObjectLayout {
    pub fn new(n_agents: usize, n_objects: usize) -> Self {
        let side_per_agent = (n_objects / 2) / n_agents;
        Self {
            n_agents,
            n_objects,
            shared: n_objects - n_agents * side_per_agent,
            side_per_agent,
        }
    }

    #[inline]
    pub fn evaluates(&self, agent: usize, object: usize) -> bool {
        object < self.shared || (object - self.shared) % self.n_agents != agent
    }
}

/// Every report submitted in one batch, plus the trusted labels.
#[derive(Debug, Clone)]
pub struct RealizedInstance {
    n_agents: usize,
    n_objects: usize,
    num_labels: usize,
    evaluated: Vec<bool>,
    signals: Vec<usize>,
    belief_ix: Vec<usize>,
    beliefs: Arc<[Distribution]>,
    trusted: Vec<Option<usize>>,
}

impl RealizedInstance {
    /// Builds an instance from `reports[agent][object]`.
    pub fn from_reports(
        num_labels: usize,
        reports: Vec<Vec<Option<Report>>>,
        trusted: Vec<Option<usize>>,
    ) -> Result<Self> {
        let n_agents = reports.len();
        let n_objects = trusted.len();
        let mut evaluated = Vec::with_capacity(n_agents * n_objects);
        let mut signals = Vec::with_capacity(n_agents * n_objects);
        let mut belief_ix = Vec::with_capacity(n_agents * n_objects);
        let mut beliefs = Vec::new();
        for (a, row) in reports.into_iter().enumerate() {
            if row.len() != n_objects {
                return Err(Error::ShapeMismatch(format!(
                    "agent {a} has {} report slots, expected {n_objects}",
                    row.len()
                )));
            }
            for r in row {
                match r {
                    Some(r) => {
                        if r.signal >= num_labels {
                            return Err(Error::LabelOutOfRange(r.signal));
                        }
                        if r.belief.len() != num_labels {
                            return Err(Error::ShapeMismatch("belief size".into()));
                        }
                        r.belief.check("belief report")?;
                        evaluated.push(true);
                        signals.push(r.signal);
                        belief_ix.push(beliefs.len());
                        beliefs.push(r.belief);
                    }
                    None => {
                        evaluated.push(false);
                        signals.push(0);
                        belief_ix.push(0);
                    }
                }
            }
        }
        if let Some(t) = trusted.iter().flatten().find(|t| **t >= num_labels) {
            return Err(Error::LabelOutOfRange(*t));
        }
        Ok(Self {
            n_agents,
            n_objects,
            num_labels,
            evaluated,
            signals,
            belief_ix,
            beliefs: beliefs.into(),
            trusted,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_objects(&self) -> usize {
        self.n_objects
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    #[inline]
    pub fn evaluated(&self, agent: usize, object: usize) -> bool {
        self.evaluated[agent * self.n_objects + object]
    }

    #[inline]
    pub fn signal(&self, agent: usize, object: usize) -> Option<usize> {
        let i = agent * self.n_objects + object;
        self.evaluated[i].then(|| self.signals[i])
    }

    #[inline]
    pub fn belief(&self, agent: usize, object: usize) -> Option<&Distribution> {
        let i = agent * self.n_objects + object;
        self.evaluated[i].then(|| &self.beliefs[self.belief_ix[i]])
    }

    pub fn evaluators(&self, object: usize) -> Vec<usize> {
        (0..self.n_agents)
            .filter(|a| self.evaluated(*a, object))
            .collect()
    }

    pub fn tasks(&self, agent: usize) -> Vec<usize> {
        (0..self.n_objects)
            .filter(|o| self.evaluated(agent, *o))
            .collect()
    }

    pub fn trusted(&self, object: usize) -> Option<usize> {
        self.trusted[object]
    }
}

/// Precomputed samplers so repeated instance draws stay cheap.
pub(crate) struct InstanceSampler {
    layout: ObjectLayout,
    k: usize,
    prior: WeightedIndex<f64>,
    high: Vec<WeightedIndex<f64>>,
    low: Vec<WeightedIndex<f64>>,
    trusted: Vec<WeightedIndex<f64>>,
    strategies: Vec<Strategy>,
    beliefs: Arc<[Distribution]>,
    /// Index into `strategies` for every agent.
    agent_strategy: Vec<usize>,
}

fn sampler(d: &Distribution) -> WeightedIndex<f64> {
    WeightedIndex::new(d.probs()).expect("validated distribution")
}

impl InstanceSampler {
    pub(crate) fn new(
        env: &Environment,
        profile: &StrategyProfile,
        layout: ObjectLayout,
    ) -> Result<Self> {
        let k = env.num_labels();
        let mut strategies = vec![profile.base.clone()];
        let mut agent_strategy = vec![0; layout.n_agents];
        if let Some((i, s)) = &profile.deviant {
            strategies.push(s.clone());
            if *i < layout.n_agents {
                agent_strategy[*i] = 1;
            }
        }
        // belief tables indexed by (strategy, h, l); unreachable observations get a uniform placeholder
        let mut beliefs = Vec::with_capacity(strategies.len() * k * k);
        for s in &strategies {
            for h in 0..k {
                for l in 0..k {
                    let b = match s.belief {
                        BeliefMode::PointMassOnReport => {
                            Distribution::point_mass(k, s.signal_report(h, l))
                        }
                        BeliefMode::InducedPosterior => {
                            match induced_peer_belief(env, s.effort, h, l, &profile.base) {
                                Ok(b) => b,
                                Err(Error::ZeroProbabilityConditioning(_)) => {
                                    Distribution::uniform(k)
                                }
                                Err(e) => return Err(e),
                            }
                        }
                    };
                    beliefs.push(b);
                }
            }
        }
        Ok(Self {
            layout,
            k,
            prior: sampler(&env.prior),
            high: env.high_channel.rows().iter().map(sampler).collect(),
            low: env.low_channel.rows().iter().map(sampler).collect(),
            trusted: env.trusted_channel.rows().iter().map(sampler).collect(),
            strategies,
            beliefs: beliefs.into(),
            agent_strategy,
        })
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RealizedInstance {
        let (n, m, k) = (self.layout.n_agents, self.layout.n_objects, self.k);
        let mut evaluated = vec![false; n * m];
        let mut signals = vec![0; n * m];
        let mut belief_ix = vec![0; n * m];
        let mut trusted = Vec::with_capacity(m);
        for o in 0..m {
            let q = self.prior.sample(rng);
            let l = self.low[q].sample(rng);
            trusted.push(Some(self.trusted[q].sample(rng)));
            for a in 0..n {
                if !self.layout.evaluates(a, o) {
                    continue;
                }
                let h = self.high[q].sample(rng);
                let si = self.agent_strategy[a];
                let idx = a * m + o;
                evaluated[idx] = true;
                signals[idx] = self.strategies[si].signal_report(h, l);
                belief_ix[idx] = (si * k + h) * k + l;
            }
        }
        RealizedInstance {
            n_agents: n,
            n_objects: m,
            num_labels: k,
            evaluated,
            signals,
            belief_ix,
            beliefs: Arc::clone(&self.beliefs),
            trusted,
        }
    }
}

/// Draws one batch of reports for `profile` on `layout`.
pub fn sample_instance<R: Rng + ?Sized>(
    env: &Environment,
    profile: &StrategyProfile,
    layout: ObjectLayout,
    rng: &mut R,
) -> Result<RealizedInstance> {
    if layout.n_agents < 3 {
        return Err(Error::TooFewAgents(layout.n_agents));
    }
    profile.check(&env.with_population(layout.n_agents, layout.n_objects))?;
    Ok(InstanceSampler::new(env, profile, layout)?.sample(rng))
}
