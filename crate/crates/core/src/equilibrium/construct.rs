use serde::{Deserialize, Serialize};

use super::{best_no_effort_strategy, Analyzer, EquilibriumRecord, DEFAULT_TOLERANCE};
use crate::error::{Error, Result};
use crate::mechanism::{EvalOptions, MechanismSpec};
use crate::signal::{Channel, Distribution, Environment};

/// At `c^E = 0, p = 0`: the best no-effort profile is a symmetric equilibrium
/// and pays at least as much as the truthful profile.
pub fn check_theorem3_conditions(spec: &MechanismSpec, env: &Environment) -> Result<bool> {
    check_theorem3_conditions_with(spec, env, &EvalOptions::default())
}

pub fn check_theorem3_conditions_with(
    spec: &MechanismSpec,
    env: &Environment,
    opts: &EvalOptions,
) -> Result<bool> {
    let free = env.with_effort_cost(0.0);
    let a = Analyzer::new(spec, &free, opts)?;
    let gl = a
        .index_of(&best_no_effort_strategy(&free)?)
        .expect("enumerated");
    let rec = a.record(gl, 0.0, DEFAULT_TOLERANCE)?;
    if !rec.certified() {
        return Ok(false);
    }
    let truthful = a.symmetric_payoff(0, 0.0)?;
    Ok(rec.utility >= truthful.value - DEFAULT_TOLERANCE)
}

/// An environment in which the low-signal equilibrium pays strictly more than
/// truthful reporting, with the equilibrium checks that confirm it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominatedWitness {
    pub environment: Environment,
    /// Indices into the candidate list: the source of the low-signal law and
    /// the source of the high channel.
    pub low_source: usize,
    pub high_source: usize,
    pub low_equilibrium: EquilibriumRecord,
    pub truthful: EquilibriumRecord,
}

/// Low channel whose every row is the high-signal marginal of `env`: a common
/// signal distributed like one agent's high signal but carrying no
/// information about quality.
fn marginal_low_channel(env: &Environment) -> Result<Channel> {
    let k = env.num_labels();
    let probs = (0..k)
        .map(|s| {
            (0..k)
                .map(|q| env.prior.prob(q) * env.high_channel.prob(q, s))
                .sum()
        })
        .collect();
    Ok(Channel::constant(k, &Distribution::from_weights(probs)?))
}

/// Searches ordered pairs `(F, F')` of candidates, `F = F'` included, for a
/// composition with prior, high channel, trusted channel and effort cost from
/// `F'` and a low signal distributed like `F`'s high-signal marginal. A pair
/// qualifies when both are elicitable at `p = 0`, truthful pays at least as
/// much under `F` as under `F'`, and in the composition the no-effort
/// equilibrium pays strictly more than truthful reporting.
pub fn construct_dominated_environment(
    spec: &MechanismSpec,
    candidates: &[Environment],
) -> Result<DominatedWitness> {
    let mut ok = Vec::with_capacity(candidates.len());
    let mut truthful_pay = Vec::with_capacity(candidates.len());
    for env in candidates {
        let a = Analyzer::new(spec, env, &EvalOptions::default())?;
        let r = a.record(0, 0.0, DEFAULT_TOLERANCE)?;
        ok.push(r.certified());
        truthful_pay.push(r.utility);
    }
    for (lo, f) in candidates.iter().enumerate() {
        for (hi, f2) in candidates.iter().enumerate() {
            if !ok[lo] || !ok[hi] || f.num_labels() != f2.num_labels() {
                continue;
            }
            if truthful_pay[lo] < truthful_pay[hi] - DEFAULT_TOLERANCE {
                continue;
            }
            let mut env = f2.clone();
            env.low_channel = marginal_low_channel(f)?;
            if spec.check_env(&env).is_err() {
                continue;
            }
            let a = Analyzer::new(spec, &env, &EvalOptions::default())?;
            let gl = a
                .index_of(&best_no_effort_strategy(&env)?)
                .expect("enumerated");
            let low_eq = a.record(gl, 0.0, DEFAULT_TOLERANCE)?;
            let truthful = a.record(0, 0.0, DEFAULT_TOLERANCE)?;
            if low_eq.certified() && low_eq.utility > truthful.utility + DEFAULT_TOLERANCE {
                log::debug!("dominated composition from candidates ({lo}, {hi})");
                return Ok(DominatedWitness {
                    environment: env,
                    low_source: lo,
                    high_source: hi,
                    low_equilibrium: low_eq,
                    truthful,
                });
            }
        }
    }
    Err(Error::NotFound(format!(
        "no elicitable candidate pair yields a dominated truthful profile under {spec}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{enumerate_symmetric_pure_equilibria, DEFAULT_TOLERANCE};
    use crate::signal::fixtures::e1;
    use crate::spotcheck::SpotGame;
    use crate::strategy::Strategy;

    #[test]
    fn sufficient_condition_on_e1() {
        for spec in [
            MechanismSpec::OutputAgreement,
            MechanismSpec::ShnayderDG,
            MechanismSpec::PeerTruthSerum {
                alpha: 0.1,
                beta: 1.0,
            },
        ] {
            assert!(check_theorem3_conditions(&spec, &e1()).unwrap(), "{spec}");
        }
    }

    #[test]
    fn same_distribution_witness() {
        let w = construct_dominated_environment(&MechanismSpec::OutputAgreement, &[e1()]).unwrap();
        assert_eq!((w.low_source, w.high_source), (0, 0));
        assert!((w.truthful.utility - 0.72).abs() < 1e-12);
        assert!((w.low_equilibrium.utility - 1.0).abs() < 1e-12);
        let g = SpotGame::new(0.0, MechanismSpec::OutputAgreement).unwrap();
        let eqs =
            enumerate_symmetric_pure_equilibria(&g, &w.environment, DEFAULT_TOLERANCE).unwrap();
        let truthful = eqs
            .iter()
            .find(|r| r.strategy == Strategy::truthful(2))
            .unwrap();
        assert!(eqs[0].utility > truthful.utility);
    }

    #[test]
    fn noisier_low_source() {
        let noisy = crate::signal::Environment::symmetric(2, 0.7, 0.9, 0.0, 3, 2).unwrap();
        let sharp = e1().with_effort_cost(0.0);
        let w = construct_dominated_environment(&MechanismSpec::OutputAgreement, &[noisy, sharp])
            .unwrap();
        assert!(w.low_equilibrium.utility > w.truthful.utility);
    }

    #[test]
    fn no_candidates() {
        assert!(matches!(
            construct_dominated_environment(&MechanismSpec::OutputAgreement, &[]),
            Err(Error::NotFound(_))
        ));
        // truthful is never an equilibrium of a constant reward with positive cost
        assert!(construct_dominated_environment(
            &MechanismSpec::PeerInsensitive { w: 1.0 },
            &[e1()]
        )
        .is_err());
    }
}
