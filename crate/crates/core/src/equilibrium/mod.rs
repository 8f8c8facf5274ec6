//! Best responses, symmetric pure equilibria and minimum spot-check
//! probabilities.

mod construct;
mod payoffs;
mod threshold;

use serde::{Deserialize, Serialize};

pub use construct::{
    check_theorem3_conditions, check_theorem3_conditions_with, construct_dominated_environment,
    DominatedWitness,
};
pub use payoffs::{comparison_margin, Analyzer, Payoff, MC_MARGIN_SIGMAS};
pub use threshold::{
    p_ds_bisection, solve_p_ds, solve_p_el, solve_p_ex, solve_p_pareto, solve_thresholds,
    solve_thresholds_with, Certificates, SolverOptions, Threshold, ThresholdReport,
};

use crate::error::{Error, Result};
use crate::mechanism::{EvalOptions, Method};
use crate::signal::Environment;
use crate::spotcheck::{expected_spot_reward, SpotGame};
use crate::strategy::{enumerate_pure_strategies, Effort, Strategy};

/// Default certification tolerance for exact payoffs.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// A candidate must beat the incumbent by more than this to replace it.
pub const TIE_EPSILON: f64 = 1e-12;

/// Largest label space for which all symmetric equilibria are listed.
pub const MAX_EQUILIBRIUM_LABELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumStatus {
    Certified,
    Rejected,
    /// Some deviation gain is within the sampling margin of the tolerance.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumRecord {
    pub strategy: Strategy,
    pub p: f64,
    pub utility: f64,
    pub stderr: f64,
    pub max_deviation_gain: f64,
    pub best_deviation: Strategy,
    pub status: EquilibriumStatus,
    pub method: Method,
}

impl EquilibriumRecord {
    pub fn certified(&self) -> bool {
        self.status == EquilibriumStatus::Certified
    }
}

/// `g^l`: the no-effort strategy with the highest expected spot reward,
/// ties going to the identity map.
pub fn best_no_effort_strategy(env: &Environment) -> Result<Strategy> {
    let mut best: Option<(f64, Strategy)> = None;
    for s in enumerate_pure_strategies(&env.q_space)? {
        if s.effort != Effort::None {
            continue;
        }
        let v = expected_spot_reward(env, &s);
        match &best {
            Some((bv, _)) if v <= bv + TIE_EPSILON => {}
            _ => best = Some((v, s)),
        }
    }
    Ok(best.expect("at least one no-effort strategy").1)
}

/// Index and payoff of the best response among `payoffs`, in tie-break order.
pub(crate) fn argmax(payoffs: &[Payoff]) -> (usize, Payoff) {
    let mut best = 0;
    for (i, u) in payoffs.iter().enumerate().skip(1) {
        if u.value > payoffs[best].value + TIE_EPSILON {
            best = i;
        }
    }
    (best, payoffs[best])
}

impl Analyzer {
    pub fn best_response(&self, base: usize, p: f64) -> Result<(usize, Payoff)> {
        Ok(argmax(&self.payoffs_against(base, p)?))
    }

    /// Equilibrium check of the symmetric profile `base` at `p`.
    pub fn record(&self, base: usize, p: f64, tol: f64) -> Result<EquilibriumRecord> {
        let payoffs = self.payoffs_against(base, p)?;
        let own = payoffs[base];
        let (br, best) = argmax(&payoffs);
        let mut status = EquilibriumStatus::Certified;
        for u in &payoffs {
            let gain = u.value - own.value;
            let margin = comparison_margin(u, &own);
            if gain - margin > tol {
                status = EquilibriumStatus::Rejected;
                break;
            }
            if gain + margin > tol {
                status = EquilibriumStatus::Inconclusive;
            }
        }
        let method = if payoffs.iter().any(|u| u.method == Method::MonteCarlo) {
            Method::MonteCarlo
        } else {
            Method::Analytic
        };
        Ok(EquilibriumRecord {
            strategy: self.strategies()[base].clone(),
            p,
            utility: own.value,
            stderr: own.stderr,
            max_deviation_gain: (best.value - own.value).max(0.0),
            best_deviation: self.strategies()[br].clone(),
            status,
            method,
        })
    }

    /// Every certified symmetric pure equilibrium at `p`, best first.
    pub fn equilibria(&self, p: f64, tol: f64) -> Result<Vec<EquilibriumRecord>> {
        if self.env().num_labels() > MAX_EQUILIBRIUM_LABELS {
            let k = self.env().num_labels() as u128;
            let budget = 2 * (MAX_EQUILIBRIUM_LABELS as u128).pow(MAX_EQUILIBRIUM_LABELS as u32);
            return Err(Error::EnumerationBudgetExceeded {
                needed: 2 * k.pow(k as u32),
                budget,
            });
        }
        let mut out = Vec::new();
        for b in 0..self.len() {
            let r = self.record(b, p, tol)?;
            if r.certified() {
                out.push(r);
            }
        }
        out.sort_by(|a, b| b.utility.total_cmp(&a.utility));
        Ok(out)
    }
}

fn analyzer_for(game: &SpotGame, env: &Environment) -> Result<Analyzer> {
    game.validate()?;
    Analyzer::new(&game.mechanism, env, &EvalOptions::default())
}

fn index_in(a: &Analyzer, s: &Strategy) -> Result<usize> {
    s.check(a.env().num_labels())?;
    a.index_of(s)
        .ok_or_else(|| Error::InvalidMechanism(format!("strategy {s} is not enumerable")))
}

/// Exhaustive best response to a population playing `others`.
pub fn best_response(
    game: &SpotGame,
    env: &Environment,
    others: &Strategy,
) -> Result<(Strategy, Payoff)> {
    let a = analyzer_for(game, env)?;
    let (i, u) = a.best_response(index_in(&a, others)?, game.p)?;
    Ok((a.strategies()[i].clone(), u))
}

pub fn is_symmetric_equilibrium(
    game: &SpotGame,
    env: &Environment,
    strategy: &Strategy,
    tol: f64,
) -> Result<EquilibriumRecord> {
    let a = analyzer_for(game, env)?;
    a.record(index_in(&a, strategy)?, game.p, tol)
}

pub fn enumerate_symmetric_pure_equilibria(
    game: &SpotGame,
    env: &Environment,
    tol: f64,
) -> Result<Vec<EquilibriumRecord>> {
    analyzer_for(game, env)?.equilibria(game.p, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::MechanismSpec;
    use crate::signal::fixtures::{e1, ternary_b};
    use crate::signal::Channel;

    fn game(p: f64, spec: MechanismSpec) -> SpotGame {
        SpotGame::new(p, spec).unwrap()
    }

    #[test]
    fn g_low_examples() {
        assert_eq!(
            best_no_effort_strategy(&e1()).unwrap(),
            Strategy::low_identity(2)
        );
        let mut env = e1();
        env.low_channel = Channel::symmetric(2, 0.8);
        let g = best_no_effort_strategy(&env).unwrap();
        assert_eq!(g, Strategy::low_identity(2));
        assert!(expected_spot_reward(&env, &g) > 0.0);
        assert_eq!(
            best_no_effort_strategy(&ternary_b()).unwrap(),
            Strategy::low_identity(3)
        );
    }

    #[test]
    fn best_response_examples() {
        let env = e1();
        let pi = MechanismSpec::PeerInsensitive { w: 1.0 };
        let (s, u) =
            best_response(&game(1.0, pi.clone()), &env, &Strategy::low_identity(2)).unwrap();
        assert_eq!(s, Strategy::truthful(2));
        assert!((u.value - 0.22).abs() < 1e-12);

        let free = env.with_effort_cost(0.0);
        let (s, u) = best_response(
            &game(0.0, MechanismSpec::OutputAgreement),
            &free,
            &Strategy::low_identity(2),
        )
        .unwrap();
        assert_eq!(s, Strategy::low_identity(2));
        assert!((u.value - 1.0).abs() < 1e-12);

        let (s, _) = best_response(&game(0.0, pi.clone()), &env, &Strategy::truthful(2)).unwrap();
        assert_eq!(s, Strategy::low_identity(2));
        let (s, _) = best_response(&game(0.0, pi), &free, &Strategy::truthful(2)).unwrap();
        assert_eq!(s, Strategy::truthful(2));
    }

    #[test]
    fn equilibrium_checks() {
        let free = e1().with_effort_cost(0.0);
        let r = is_symmetric_equilibrium(
            &game(0.0, MechanismSpec::OutputAgreement),
            &free,
            &Strategy::low_identity(2),
            DEFAULT_TOLERANCE,
        )
        .unwrap();
        assert!(r.certified());
        assert!((r.utility - 1.0).abs() < 1e-12);

        let r = is_symmetric_equilibrium(
            &game(0.0, MechanismSpec::PeerInsensitive { w: 1.0 }),
            &e1(),
            &Strategy::truthful(2),
            DEFAULT_TOLERANCE,
        )
        .unwrap();
        assert_eq!(r.status, EquilibriumStatus::Rejected);
        assert!((r.max_deviation_gain - 0.1).abs() < 1e-12);
    }

    #[test]
    fn best_response_is_its_own_equilibrium_when_fixed_point() {
        let env = e1();
        for spec in MechanismSpec::reference_set() {
            let g = game(0.4, spec);
            let (s, _) = best_response(&g, &env, &Strategy::truthful(2)).unwrap();
            let (s2, _) = best_response(&g, &env, &s).unwrap();
            if s2 == s {
                let r = is_symmetric_equilibrium(&g, &env, &s, DEFAULT_TOLERANCE).unwrap();
                assert!(r.certified());
                assert_eq!(r.max_deviation_gain, 0.0);
            }
        }
    }

    #[test]
    fn oa_equilibria_at_zero() {
        let free = e1().with_effort_cost(0.0);
        let g = game(0.0, MechanismSpec::OutputAgreement);
        let eqs = enumerate_symmetric_pure_equilibria(&g, &free, DEFAULT_TOLERANCE).unwrap();
        let find = |s: &Strategy| eqs.iter().find(|r| &r.strategy == s).map(|r| r.utility);
        assert!((find(&Strategy::truthful(2)).unwrap() - 0.82).abs() < 1e-12);
        assert!((find(&Strategy::low_identity(2)).unwrap() - 1.0).abs() < 1e-12);
        for c in 0..2 {
            assert!((find(&Strategy::constant(Effort::None, 2, c)).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(eqs.windows(2).all(|w| w[0].utility >= w[1].utility));
        for r in &eqs {
            let again =
                is_symmetric_equilibrium(&g, &free, &r.strategy, DEFAULT_TOLERANCE).unwrap();
            assert_eq!(again.utility, r.utility);
        }
    }

    #[test]
    fn peer_insensitive_equilibria() {
        let g = game(0.0, MechanismSpec::PeerInsensitive { w: 1.0 });
        let eqs = enumerate_symmetric_pure_equilibria(&g, &e1(), DEFAULT_TOLERANCE).unwrap();
        assert_eq!(eqs.len(), 4);
        assert!(eqs
            .iter()
            .all(|r| r.strategy.effort == Effort::None && r.utility == 1.0));
    }

    #[test]
    fn large_label_spaces_refuse_enumeration() {
        let env = crate::signal::Environment::symmetric(5, 0.8, 0.8, 0.1, 3, 2).unwrap();
        let g = game(0.0, MechanismSpec::OutputAgreement);
        assert!(matches!(
            enumerate_symmetric_pure_equilibria(&g, &env, DEFAULT_TOLERANCE),
            Err(Error::EnumerationBudgetExceeded { .. })
        ));
    }
}
