//! Agent strategies: an effort choice, a report map and a belief rule.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Distribution, Environment, LabelSpace};

/// Largest label space whose pure strategy set we are willing to list.
pub const MAX_ENUMERABLE_LABELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Effort {
    Full,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum BeliefMode {
    #[default]
    #[serde(rename = "posterior")]
    InducedPosterior,
    #[serde(rename = "pointmass")]
    PointMassOnReport,
}

/// A pure strategy. `map[s]` is the report given observation `s`, where the
/// observation is the high signal under full effort and the low signal otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Strategy {
    pub effort: Effort,
    pub map: Vec<usize>,
    #[serde(default)]
    pub belief: BeliefMode,
}

impl Strategy {
    pub fn new(effort: Effort, map: Vec<usize>) -> Self {
        Self {
            effort,
            map,
            belief: BeliefMode::InducedPosterior,
        }
    }

    /// (Full, identity).
    pub fn truthful(k: usize) -> Self {
        Self::new(Effort::Full, (0..k).collect())
    }

    /// (None, identity): report the low signal.
    pub fn low_identity(k: usize) -> Self {
        Self::new(Effort::None, (0..k).collect())
    }

    pub fn constant(effort: Effort, k: usize, label: usize) -> Self {
        Self::new(effort, vec![label; k])
    }

    pub fn with_belief(mut self, belief: BeliefMode) -> Self {
        self.belief = belief;
        self
    }

    pub fn is_full(&self) -> bool {
        self.effort == Effort::Full
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, s)| i == *s)
    }

    pub fn is_constant(&self) -> bool {
        self.map.windows(2).all(|w| w[0] == w[1])
    }

    /// The label the strategy reports for realized `(s^h, s^l)`.
    #[inline]
    pub fn signal_report(&self, high: usize, low: usize) -> usize {
        match self.effort {
            Effort::Full => self.map[high],
            Effort::None => self.map[low],
        }
    }

    pub fn check(&self, k: usize) -> Result<()> {
        if self.map.len() != k {
            return Err(Error::ShapeMismatch(format!(
                "report map has {} entries, label space has {k}",
                self.map.len()
            )));
        }
        if let Some(bad) = self.map.iter().find(|s| **s >= k) {
            return Err(Error::LabelOutOfRange(*bad));
        }
        Ok(())
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let effort = match self.effort {
            Effort::Full => "full",
            Effort::None => "none",
        };
        let map: Vec<String> = self.map.iter().map(|s| s.to_string()).collect();
        write!(f, "{effort}:{}", map.join(""))
    }
}

/// Everyone plays `base`, except possibly one deviant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyProfile {
    pub base: Strategy,
    pub deviant: Option<(usize, Strategy)>,
}

impl StrategyProfile {
    pub fn symmetric(base: Strategy) -> Self {
        Self {
            base,
            deviant: None,
        }
    }

    pub fn with_deviant(base: Strategy, agent: usize, strategy: Strategy) -> Self {
        Self {
            base,
            deviant: Some((agent, strategy)),
        }
    }

    pub fn strategy_of(&self, agent: usize) -> &Strategy {
        match &self.deviant {
            Some((i, s)) if *i == agent => s,
            _ => &self.base,
        }
    }

    pub fn check(&self, env: &Environment) -> Result<()> {
        let k = env.num_labels();
        self.base.check(k)?;
        if let Some((i, s)) = &self.deviant {
            if *i >= env.n_agents {
                return Err(Error::InvalidEnvironment(format!(
                    "deviant index {i} outside population of {}",
                    env.n_agents
                )));
            }
            s.check(k)?;
        }
        Ok(())
    }
}

/// Finite mixture over pure strategies, used only as a deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedStrategy {
    components: Vec<(f64, Strategy)>,
}

impl MixedStrategy {
    pub fn new(components: Vec<(f64, Strategy)>) -> Result<Self> {
        Distribution::new(components.iter().map(|(w, _)| *w).collect())?;
        Ok(Self { components })
    }

    pub fn components(&self) -> &[(f64, Strategy)] {
        &self.components
    }
}

/// What an agent submits for one object.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub signal: usize,
    pub belief: Distribution,
}

/// `2 |Q|^|Q|` pure strategies: full effort before no effort, and within each
/// effort level the identity map first, then the remaining maps in
/// lexicographic order. Callers rely on this order for tie-breaking.
pub fn enumerate_pure_strategies(labels: &LabelSpace) -> Result<Vec<Strategy>> {
    let k = labels.len();
    if k > MAX_ENUMERABLE_LABELS {
        let needed = 2 * (k as u128).pow(k as u32);
        let budget = 2 * (MAX_ENUMERABLE_LABELS as u128).pow(MAX_ENUMERABLE_LABELS as u32);
        return Err(Error::EnumerationBudgetExceeded { needed, budget });
    }
    let identity: Vec<usize> = (0..k).collect();
    let total = k.pow(k as u32);
    let mut maps = Vec::with_capacity(total);
    maps.push(identity.clone());
    for code in 0..total {
        // most significant digit first, so `code` order is lexicographic
        let mut map = vec![0; k];
        let mut c = code;
        for slot in map.iter_mut().rev() {
            *slot = c % k;
            c /= k;
        }
        if map != identity {
            maps.push(map);
        }
    }
    let mut out = Vec::with_capacity(2 * total);
    for effort in [Effort::Full, Effort::None] {
        out.extend(maps.iter().map(|m| Strategy::new(effort, m.clone())));
    }
    Ok(out)
}

/// Posterior over quality given what an agent with `effort` sees.
fn own_quality_posterior(
    env: &Environment,
    effort: Effort,
    high: usize,
    low: usize,
) -> Result<Vec<f64>> {
    let k = env.num_labels();
    let w: Vec<f64> = (0..k)
        .map(|q| {
            let base = env.prior.prob(q) * env.low_channel.prob(q, low);
            match effort {
                Effort::Full => base * env.high_channel.prob(q, high),
                Effort::None => base,
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        let observed = if effort == Effort::Full { high } else { low };
        return Err(Error::ZeroProbabilityConditioning(observed));
    }
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Law of a random peer's signal report, given the agent's own observation and
/// that peers play `base`. A full-effort agent conditions on both its signals,
/// a no-effort agent on the low signal only.
pub fn induced_peer_belief(
    env: &Environment,
    own_effort: Effort,
    high: usize,
    low: usize,
    base: &Strategy,
) -> Result<Distribution> {
    let k = env.num_labels();
    if base.effort == Effort::None {
        // peers' reports are a function of the common low signal, which is observed
        return Ok(Distribution::point_mass(k, base.map[low]));
    }
    let post = own_quality_posterior(env, own_effort, high, low)?;
    let mut probs = vec![0.0; k];
    for (q, pq) in post.iter().enumerate() {
        if *pq == 0.0 {
            continue;
        }
        for h in 0..k {
            probs[base.map[h]] += pq * env.high_channel.prob(q, h);
        }
    }
    Ok(Distribution::from_vec_unchecked(probs))
}

/// The report `strategy` produces for realized `(s^h, s^l)` when peers follow
/// `profile.base`.
pub fn realize_report(
    strategy: &Strategy,
    env: &Environment,
    signals: (usize, usize),
    profile: &StrategyProfile,
) -> Result<Report> {
    let (high, low) = signals;
    let k = env.num_labels();
    if high >= k {
        return Err(Error::LabelOutOfRange(high));
    }
    if low >= k {
        return Err(Error::LabelOutOfRange(low));
    }
    let signal = strategy.signal_report(high, low);
    let belief = match strategy.belief {
        BeliefMode::PointMassOnReport => Distribution::point_mass(k, signal),
        BeliefMode::InducedPosterior => {
            induced_peer_belief(env, strategy.effort, high, low, &profile.base)?
        }
    };
    Ok(Report { signal, belief })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::fixtures::{e1, ternary_a};
    use crate::signal::{joint_signal_distribution, Channel};

    #[test]
    fn strategy_counts() {
        for (k, n) in [(2, 8), (3, 54), (4, 512)] {
            let l = LabelSpace::indexed(k).unwrap();
            let all = enumerate_pure_strategies(&l).unwrap();
            assert_eq!(all.len(), n);
            assert_eq!(all[0], Strategy::truthful(k));
            assert_eq!(all[n / 2], Strategy::low_identity(k));
            let mut dedup = all.clone();
            dedup.sort_by(|a, b| {
                a.map
                    .cmp(&b.map)
                    .then((a.effort as u8).cmp(&(b.effort as u8)))
            });
            dedup.dedup();
            assert_eq!(dedup.len(), n);
        }
        assert!(matches!(
            enumerate_pure_strategies(&LabelSpace::indexed(7).unwrap()),
            Err(Error::EnumerationBudgetExceeded { .. })
        ));
    }

    #[test]
    fn binary_order() {
        let all = enumerate_pure_strategies(&LabelSpace::indexed(2).unwrap()).unwrap();
        let maps: Vec<_> = all[..4].iter().map(|s| s.map.clone()).collect();
        assert_eq!(maps, vec![vec![0, 1], vec![0, 0], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn truthful_belief_e1() {
        let env = e1();
        let t = Strategy::truthful(2);
        let r = realize_report(&t, &env, (1, 0), &StrategyProfile::symmetric(t.clone())).unwrap();
        assert_eq!(r.signal, 1);
        assert!(r
            .belief
            .approx_eq(&Distribution::from_vec_unchecked(vec![0.18, 0.82]), 1e-12));
    }

    #[test]
    fn low_identity_belief_is_point_mass() {
        let env = e1();
        let g = Strategy::low_identity(2);
        let r = realize_report(&g, &env, (1, 0), &StrategyProfile::symmetric(g.clone())).unwrap();
        assert_eq!(r.signal, 0);
        assert_eq!(r.belief, Distribution::point_mass(2, 0));
    }

    #[test]
    fn constant_map_ignores_input() {
        let env = e1();
        let c = Strategy::constant(Effort::Full, 2, 1);
        let p = StrategyProfile::symmetric(c.clone());
        for h in 0..2 {
            for l in 0..2 {
                assert_eq!(realize_report(&c, &env, (h, l), &p).unwrap().signal, 1);
            }
        }
    }

    #[test]
    fn point_mass_mode() {
        let env = e1();
        let t = Strategy::truthful(2).with_belief(BeliefMode::PointMassOnReport);
        let r = realize_report(&t, &env, (0, 1), &StrategyProfile::symmetric(t.clone())).unwrap();
        assert_eq!(r.belief, Distribution::point_mass(2, 0));
    }

    // Brute force over the joint table: P(g(s^h_2) = r | s^h_1 = h, s^l = l).
    fn oracle_belief(env: &Environment, h: usize, l: usize, base: &Strategy) -> Vec<f64> {
        let k = env.num_labels();
        let joint = joint_signal_distribution(env, 2).unwrap();
        let cond = joint.prob(|t| t.high[0] == h && t.low == l);
        (0..k)
            .map(|r| {
                joint.prob(|t| {
                    t.high[0] == h && t.low == l && base.signal_report(t.high[1], t.low) == r
                }) / cond
            })
            .collect()
    }

    #[test]
    fn induced_belief_matches_joint_table() {
        let mut envs = vec![e1(), ternary_a()];
        let mut corr = ternary_a();
        corr.low_channel = Channel::symmetric(3, 0.6);
        envs.push(corr);
        for env in envs {
            let all = enumerate_pure_strategies(&env.q_space).unwrap();
            let k = env.num_labels();
            for base in all.iter().filter(|s| s.is_full()) {
                for h in 0..k {
                    for l in 0..k {
                        let got = induced_peer_belief(&env, Effort::Full, h, l, base).unwrap();
                        let want = oracle_belief(&env, h, l, base);
                        for r in 0..k {
                            assert!((got.prob(r) - want[r]).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn serde_shape() {
        let s: Strategy = serde_json::from_str(r#"{"effort":"none","map":[1,1]}"#).unwrap();
        assert_eq!(s, Strategy::constant(Effort::None, 2, 1));
        let j =
            serde_json::to_value(Strategy::truthful(2).with_belief(BeliefMode::PointMassOnReport))
                .unwrap();
        assert_eq!(j["belief"], "pointmass");
        assert_eq!(j["effort"], "full");
    }

    #[test]
    fn mixture_weights_validated() {
        assert!(MixedStrategy::new(vec![
            (0.5, Strategy::truthful(2)),
            (0.4, Strategy::low_identity(2))
        ])
        .is_err());
        assert!(MixedStrategy::new(vec![
            (0.5, Strategy::truthful(2)),
            (0.5, Strategy::low_identity(2))
        ])
        .is_ok());
    }
}
