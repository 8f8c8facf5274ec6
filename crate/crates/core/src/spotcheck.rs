//! Spot checks against trusted reports, and the combined game `M = (p, y, z)`.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::best_no_effort_strategy;
use crate::error::{Error, Result};
use crate::mechanism::{
    expected_unchecked_utility_with, realized_reward, EvalOptions, MechanismSpec, RealizedInstance,
    UtilityEstimate,
};
use crate::signal::Environment;
use crate::strategy::{Effort, MixedStrategy, Strategy, StrategyProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SpotKind {
    /// `1[r_ij = t_j] - 1[r_ij' = t_j'']`
    #[default]
    #[serde(rename = "dg")]
    DGStyle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpotGame {
    pub p: f64,
    pub mechanism: MechanismSpec,
    #[serde(default, rename = "spot")]
    pub spot_kind: SpotKind,
}

impl SpotGame {
    pub fn new(p: f64, mechanism: MechanismSpec) -> Result<Self> {
        let g = Self {
            p,
            mechanism,
            spot_kind: SpotKind::DGStyle,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_p(&self, p: f64) -> Self {
        Self { p, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidMechanism(format!(
                "spot check probability {} outside [0, 1]",
                self.p
            )));
        }
        self.mechanism.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotOutcome {
    pub checked: bool,
    pub reward: f64,
}

/// `1[r_ij = t_j] - 1[r_ij' = t_j'']`.
pub fn spot_reward(r: usize, trusted: usize, r_other: usize, trusted_other: usize) -> f64 {
    let hit = if r == trusted { 1.0 } else { 0.0 };
    let cross = if r_other == trusted_other { 1.0 } else { 0.0 };
    hit - cross
}

/// Exact `E[y]` for a report rule: the agreement probability with the trusted
/// label minus the agreement of independent draws from the two marginals.
pub fn expected_spot_reward(env: &Environment, strategy: &Strategy) -> f64 {
    if strategy.is_constant() {
        // a constant report is independent of everything; the two terms cancel exactly
        return 0.0;
    }
    let k = env.num_labels();
    let mut joint = vec![0.0; k];
    let mut report = vec![0.0; k];
    let mut trusted = vec![0.0; k];
    for (q, l, w) in env.quality_low_pairs() {
        for (s, t) in trusted.iter_mut().enumerate() {
            *t += w * env.trusted_channel.prob(q, s);
        }
        let mut law = vec![0.0; k];
        match strategy.effort {
            Effort::None => law[strategy.map[l]] = 1.0,
            Effort::Full => {
                for h in 0..k {
                    law[strategy.map[h]] += env.high_channel.prob(q, h);
                }
            }
        }
        for s in 0..k {
            report[s] += w * law[s];
            joint[s] += w * law[s] * env.trusted_channel.prob(q, s);
        }
    }
    (0..k).map(|s| joint[s] - report[s] * trusted[s]).sum()
}

/// Whether paying for the high signal beats the best no-effort strategy under
/// spot checks alone.
pub fn check_worthwhile_effort(env: &Environment) -> Result<bool> {
    let gl = best_no_effort_strategy(env)?;
    let truthful = Strategy::truthful(env.num_labels());
    Ok(expected_spot_reward(env, &truthful) - env.effort_cost > expected_spot_reward(env, &gl))
}

pub fn effort_cost_of(env: &Environment, s: &Strategy) -> f64 {
    if s.is_full() {
        env.effort_cost
    } else {
        0.0
    }
}

/// `p E[y] + (1 - p) E[z] - c^E` for `for_agent`.
pub fn combined_expected_utility(
    game: &SpotGame,
    env: &Environment,
    profile: &StrategyProfile,
    for_agent: usize,
) -> Result<UtilityEstimate> {
    combined_expected_utility_with(game, env, profile, for_agent, &EvalOptions::default())
}

pub fn combined_expected_utility_with(
    game: &SpotGame,
    env: &Environment,
    profile: &StrategyProfile,
    for_agent: usize,
    opts: &EvalOptions,
) -> Result<UtilityEstimate> {
    game.validate()?;
    let own = profile.strategy_of(for_agent);
    let ey = expected_spot_reward(env, own);
    let z = expected_unchecked_utility_with(&game.mechanism, env, profile, for_agent, opts)?;
    let cost = effort_cost_of(env, own);
    Ok(z.affine(game.p * ey - cost, 1.0 - game.p))
}

/// Utility of a mixed deviation against a symmetric population.
pub fn combined_expected_utility_mixed(
    game: &SpotGame,
    env: &Environment,
    base: &Strategy,
    deviant: usize,
    mixed: &MixedStrategy,
) -> Result<UtilityEstimate> {
    let mut value = 0.0;
    let mut var = 0.0;
    let mut method = crate::mechanism::Method::Analytic;
    let mut samples = 0;
    for (w, s) in mixed.components() {
        let profile = StrategyProfile::with_deviant(base.clone(), deviant, s.clone());
        let u = combined_expected_utility(game, env, &profile, deviant)?;
        value += w * u.value;
        var += (w * u.stderr).powi(2);
        if u.method == crate::mechanism::Method::MonteCarlo {
            method = u.method;
        }
        samples += u.samples;
    }
    Ok(UtilityEstimate {
        value,
        stderr: var.sqrt(),
        method,
        samples,
    })
}

/// One realized reward: checked with probability `p`, in which case the
/// spot-check reward applies with `j'` drawn from the agent's own objects and
/// `j''` from the other trusted objects.
pub fn spot_checked_reward<R: Rng + ?Sized>(
    game: &SpotGame,
    inst: &RealizedInstance,
    agent: usize,
    object: usize,
    rng: &mut R,
) -> Result<SpotOutcome> {
    let checked = rng.random::<f64>() < game.p;
    if !checked {
        let reward = realized_reward(&game.mechanism, inst, agent, object, rng)?;
        return Ok(SpotOutcome { checked, reward });
    }
    let r = inst.signal(agent, object).ok_or_else(|| {
        Error::Unsupported(format!("agent {agent} did not evaluate object {object}"))
    })?;
    let t = inst
        .trusted(object)
        .ok_or_else(|| Error::Unsupported(format!("object {object} has no trusted report")))?;
    let own = inst.tasks(agent);
    let j1 = *own.choose(rng).expect("agent evaluated `object`");
    let trusted: Vec<usize> = (0..inst.n_objects())
        .filter(|o| inst.trusted(*o).is_some())
        .collect();
    let outside: Vec<usize> = trusted
        .iter()
        .copied()
        .filter(|o| !inst.evaluated(agent, *o))
        .collect();
    let pool: Vec<usize> = if outside.is_empty() {
        trusted.into_iter().filter(|o| *o != j1).collect()
    } else {
        outside
    };
    let j2 = *pool.choose(rng).ok_or_else(|| {
        Error::NotEnoughObjects("no second trusted object for the penalty term".into())
    })?;
    let reward = spot_reward(
        r,
        t,
        inst.signal(agent, j1).expect("own object"),
        inst.trusted(j2).expect("trusted object"),
    );
    Ok(SpotOutcome { checked, reward })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::{sample_instance, ObjectLayout};
    use crate::signal::fixtures::{e1, ternary_a};
    use crate::signal::{joint_signal_distribution, Channel};
    use crate::strategy::enumerate_pure_strategies;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spot_reward_table() {
        assert_eq!(spot_reward(1, 1, 0, 1), 1.0);
        assert_eq!(spot_reward(1, 1, 1, 1), 0.0);
        assert_eq!(spot_reward(0, 1, 1, 1), -1.0);
    }

    #[test]
    fn expected_spot_reward_e1() {
        let env = e1();
        // oracle: P(s^h = s^t) - sum_s P(s^h = s) P(s^t = s) from the joint table
        let j = joint_signal_distribution(&env, 1).unwrap();
        let agree = j.prob(|t| t.high[0] == t.trusted);
        let cross: f64 = (0..2)
            .map(|s| j.prob(|t| t.high[0] == s) * j.prob(|t| t.trusted == s))
            .sum();
        let ey = expected_spot_reward(&env, &Strategy::truthful(2));
        assert!((ey - (agree - cross)).abs() < 1e-12);
        assert!((ey - 0.32).abs() < 1e-12);
        assert!(expected_spot_reward(&env, &Strategy::low_identity(2)).abs() < 1e-15);
        for s in enumerate_pure_strategies(&env.q_space).unwrap() {
            if s.is_constant() {
                assert_eq!(expected_spot_reward(&env, &s), 0.0);
            }
        }
    }

    #[test]
    fn worthwhile_effort() {
        assert!(check_worthwhile_effort(&e1()).unwrap());
        assert!(!check_worthwhile_effort(&e1().with_effort_cost(0.4)).unwrap());
        let mut env = e1();
        env.low_channel = Channel::identity(2);
        env.trusted_channel = Channel::identity(2);
        for c in [0.001, 0.1, 0.5] {
            assert!(!check_worthwhile_effort(&env.with_effort_cost(c)).unwrap());
        }
    }

    #[test]
    fn combined_peer_insensitive() {
        let env = e1();
        let game = SpotGame::new(0.5, MechanismSpec::PeerInsensitive { w: 1.0 }).unwrap();
        let t = StrategyProfile::symmetric(Strategy::truthful(2));
        let u = combined_expected_utility(&game, &env, &t, 0).unwrap();
        assert!((u.value - 0.56).abs() < 1e-12);
        let g = StrategyProfile::symmetric(Strategy::low_identity(2));
        let u = combined_expected_utility(&game, &env, &g, 0).unwrap();
        assert!((u.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn combined_at_zero_p_is_unchecked_minus_cost() {
        let env = ternary_a();
        let game = SpotGame::new(0.0, MechanismSpec::ShnayderDG).unwrap();
        let t = StrategyProfile::symmetric(Strategy::truthful(3));
        let z = crate::mechanism::expected_unchecked_utility(&game.mechanism, &env, &t, 0).unwrap();
        let u = combined_expected_utility(&game, &env, &t, 0).unwrap();
        assert_eq!(u.value, z.value - env.effort_cost);
    }

    #[test]
    fn combined_is_affine_in_p() {
        for env in [e1(), ternary_a()] {
            let k = env.num_labels();
            for spec in MechanismSpec::reference_set() {
                if spec.check_env(&env).is_err() {
                    continue;
                }
                for s in [Strategy::truthful(k), Strategy::low_identity(k)] {
                    let prof = StrategyProfile::symmetric(s);
                    let at = |p: f64| {
                        combined_expected_utility(
                            &SpotGame::new(p, spec.clone()).unwrap(),
                            &env,
                            &prof,
                            0,
                        )
                        .unwrap()
                        .value
                    };
                    let (a, b, c) = (at(0.0), at(0.4), at(1.0));
                    assert!((b - (0.6 * a + 0.4 * c)).abs() < 1e-12, "{spec}");
                }
            }
        }
    }

    #[test]
    fn realized_spot_checks_average_to_expectation() {
        let env = e1();
        let game = SpotGame::new(1.0, MechanismSpec::OutputAgreement).unwrap();
        let prof = StrategyProfile::symmetric(Strategy::truthful(2));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layout = ObjectLayout::new(4, 40);
        let mut total = 0.0;
        let mut n = 0.0;
        for _ in 0..400 {
            let inst = sample_instance(&env, &prof, layout, &mut rng).unwrap();
            for o in inst.tasks(0) {
                let out = spot_checked_reward(&game, &inst, 0, o, &mut rng).unwrap();
                assert!(out.checked);
                total += out.reward;
                n += 1.0;
            }
        }
        // 14400 draws of a reward in {-1, 0, 1}: stderr below 0.0075
        assert!((total / n - 0.32).abs() < 0.03);
    }

    #[test]
    fn spot_game_json() {
        let g: SpotGame = serde_json::from_str(
            r#"{"p": 0.3, "mechanism": {"kind": "output_agreement"}, "spot": "dg"}"#,
        )
        .unwrap();
        assert_eq!(g.p, 0.3);
        assert!(SpotGame::new(1.5, MechanismSpec::OutputAgreement).is_err());
    }
}
