use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::instance::{InstanceSampler, ObjectLayout};
use super::reward::realized_reward;
use super::{EvalOptions, MechanismSpec, Method, MethodChoice, UtilityEstimate};
use crate::error::{Error, Result};
use crate::signal::Environment;
use crate::strategy::StrategyProfile;

/// Trials per RNG stream. Fixed so results do not depend on the thread count.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * other.n as f64 / n as f64,
            m2: self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64,
        }
    }

    fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64).max(0.0).sqrt() / (self.n as f64).sqrt()
    }
}

/// Monte Carlo estimate of the focal agent's mean per-object reward: the
/// deviant if there is one, otherwise agent 0.
pub fn simulate_utilities(
    spec: &MechanismSpec,
    env: &Environment,
    profile: &StrategyProfile,
    trials: usize,
    seed: u64,
) -> Result<UtilityEstimate> {
    let focal = profile.deviant.as_ref().map(|(i, _)| *i).unwrap_or(0);
    let opts = EvalOptions {
        method: MethodChoice::MonteCarlo,
        trials,
        seed,
        ..EvalOptions::default()
    };
    simulate_utilities_with(spec, env, profile, focal, &opts)
}

pub fn simulate_utilities_with(
    spec: &MechanismSpec,
    env: &Environment,
    profile: &StrategyProfile,
    for_agent: usize,
    opts: &EvalOptions,
) -> Result<UtilityEstimate> {
    if opts.trials == 0 {
        return Err(Error::InvalidEnvironment(
            "at least one trial is required".into(),
        ));
    }
    spec.validate()?;
    spec.check_env(env)?;
    let n = opts.sim_agents.unwrap_or(env.n_agents);
    let m = opts.sim_objects.unwrap_or(env.n_objects);
    if n < 3 {
        return Err(Error::TooFewAgents(n));
    }
    let sized = env.with_population(n, m);
    profile.check(&sized)?;
    if for_agent >= n {
        return Err(Error::InvalidEnvironment(format!(
            "focal agent {for_agent} outside population of {n}"
        )));
    }
    let layout = ObjectLayout::new(n, m);
    let sampler = InstanceSampler::new(env, profile, layout)?;
    let tasks: Vec<usize> = (0..m).filter(|o| layout.evaluates(for_agent, *o)).collect();
    let cost = if opts.include_effort_cost && profile.strategy_of(for_agent).is_full() {
        env.effort_cost
    } else {
        0.0
    };
    let chunks = opts.trials.div_ceil(CHUNK);
    let parts: Vec<Result<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(opts.trials - c * CHUNK);
            let mut acc = Moments::default();
            for _ in 0..count {
                let inst = sampler.sample(&mut rng);
                let mut total = 0.0;
                for o in &tasks {
                    total += realized_reward(spec, &inst, for_agent, *o, &mut rng)?;
                }
                acc.push(total / tasks.len() as f64 - cost);
            }
            Ok(acc)
        })
        .collect();
    let mut all = Moments::default();
    for p in parts {
        all = all.merge(p?);
    }
    Ok(UtilityEstimate {
        value: all.mean,
        stderr: all.stderr(),
        method: Method::MonteCarlo,
        samples: all.n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::fixtures::e1;
    use crate::strategy::Strategy;

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let mut seq = Moments::default();
        xs.iter().for_each(|x| seq.push(*x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..37].iter().for_each(|x| a.push(*x));
        xs[37..].iter().for_each(|x| b.push(*x));
        let merged = a.merge(b);
        assert_eq!(merged.n, seq.n);
        assert!((merged.mean - seq.mean).abs() < 1e-12);
        assert!((merged.m2 - seq.m2).abs() < 1e-9);
    }

    #[test]
    fn constant_mechanism_is_exact() {
        let env = e1();
        let p = StrategyProfile::symmetric(Strategy::truthful(2));
        let u = simulate_utilities(&MechanismSpec::PeerInsensitive { w: 1.0 }, &env, &p, 500, 1)
            .unwrap();
        assert_eq!(u.value, 1.0);
        assert_eq!(u.stderr, 0.0);
        assert_eq!(u.samples, 500);
    }

    #[test]
    fn fixed_seed_is_bitwise_stable() {
        let env = e1();
        let p = StrategyProfile::symmetric(Strategy::truthful(2));
        let a = simulate_utilities(&MechanismSpec::OutputAgreement, &env, &p, 3000, 9).unwrap();
        let b = simulate_utilities(&MechanismSpec::OutputAgreement, &env, &p, 3000, 9).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        let c = simulate_utilities(&MechanismSpec::OutputAgreement, &env, &p, 3000, 10).unwrap();
        assert_ne!(a.value.to_bits(), c.value.to_bits());
    }

    #[test]
    fn effort_cost_flag() {
        let env = e1();
        let p = StrategyProfile::symmetric(Strategy::truthful(2));
        let spec = MechanismSpec::PeerInsensitive { w: 1.0 };
        let opts = EvalOptions {
            trials: 10,
            include_effort_cost: true,
            ..EvalOptions::default()
        };
        let u = simulate_utilities_with(&spec, &env, &p, 0, &opts).unwrap();
        assert!((u.value - 0.9).abs() < 1e-12);
    }
}
