//! Exact expectations for a focal agent against a symmetric population.
//!
//! The population-frequency mechanisms (PTS, Kamble, Radanovic) are evaluated
//! in their large-population or large-sample limits; everything else is an
//! exact finite sum over the joint signal table.

use super::instance::ObjectLayout;
use super::reward::{dbts_value, mrbts_value, riley_value, sentinel, shadowed_belief};
use super::{MechanismSpec, UtilityEstimate};
use crate::error::{Error, Result};
use crate::scoring::{ProperScoringRule, ScoringRule};
use crate::signal::{check_budget, Distribution, Environment};
use crate::strategy::{induced_peer_belief, BeliefMode, Effort, Strategy, StrategyProfile};

/// Strategies of the focal agent and of everybody else.
fn focal_pair(profile: &StrategyProfile, for_agent: usize) -> Result<(&Strategy, &Strategy)> {
    match &profile.deviant {
        Some((i, s)) if *i == for_agent => Ok((s, &profile.base)),
        Some(_) => Err(Error::Unsupported(
            "exact utility of a conforming agent while another agent deviates".into(),
        )),
        None => Ok((&profile.base, &profile.base)),
    }
}

/// Law of a report given `(q, l)`.
fn report_law(env: &Environment, s: &Strategy, q: usize, l: usize) -> Vec<f64> {
    let k = env.num_labels();
    let mut out = vec![0.0; k];
    match s.effort {
        Effort::None => out[s.map[l]] = 1.0,
        Effort::Full => {
            for h in 0..k {
                out[s.map[h]] += env.high_channel.prob(q, h);
            }
        }
    }
    out
}

struct Laws {
    k: usize,
    /// `(weight of (q, l), focal report law, base report law)`
    cells: Vec<(f64, Vec<f64>, Vec<f64>)>,
}

impl Laws {
    fn new(env: &Environment, dev: &Strategy, base: &Strategy) -> Self {
        let cells = env
            .quality_low_pairs()
            .into_iter()
            .map(|(q, l, w)| (w, report_law(env, dev, q, l), report_law(env, base, q, l)))
            .collect();
        Self {
            k: env.num_labels(),
            cells,
        }
    }

    /// `P(focal reports a, a base peer reports b)`.
    fn joint(&self) -> Vec<Vec<f64>> {
        let mut jp = vec![vec![0.0; self.k]; self.k];
        for (w, d, b) in &self.cells {
            for (a, da) in d.iter().enumerate() {
                for (c, bc) in b.iter().enumerate() {
                    jp[a][c] += w * da * bc;
                }
            }
        }
        jp
    }

    /// Joint law of two distinct base agents' reports.
    fn base_pair(&self) -> Vec<Vec<f64>> {
        let mut p2 = vec![vec![0.0; self.k]; self.k];
        for (w, _, b) in &self.cells {
            for (a, ba) in b.iter().enumerate() {
                for (c, bc) in b.iter().enumerate() {
                    p2[a][c] += w * ba * bc;
                }
            }
        }
        p2
    }

    fn focal_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.k];
        for (w, d, _) in &self.cells {
            for (a, da) in d.iter().enumerate() {
                m[a] += w * da;
            }
        }
        m
    }

    fn base_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.k];
        for (w, _, b) in &self.cells {
            for (a, ba) in b.iter().enumerate() {
                m[a] += w * ba;
            }
        }
        m
    }
}

fn output_agreement(laws: &Laws) -> f64 {
    let jp = laws.joint();
    (0..laws.k).map(|s| jp[s][s]).sum()
}

fn pts_limit(laws: &Laws, alpha: f64, beta: f64) -> f64 {
    let mut e = 0.0;
    for (w, d, b) in &laws.cells {
        for s in 0..laws.k {
            if b[s] > 0.0 {
                // F(s) tends to the base report law on this object
                e += w * d[s] * b[s] / b[s];
            }
        }
    }
    alpha + beta * e
}

fn shnayder(laws: &Laws) -> f64 {
    let fm = laws.focal_marginal();
    let bm = laws.base_marginal();
    let overlap: f64 = fm.iter().zip(&bm).map(|(a, b)| a * b).sum();
    output_agreement(laws) - overlap
}

fn kamble_limit(laws: &Laws, k_param: f64) -> f64 {
    let jp = laws.joint();
    let p2 = laws.base_pair();
    (0..laws.k)
        .map(|s| {
            let f2 = p2[s][s];
            if f2 <= 1e-15 || f2 >= 1.0 - 1e-15 {
                0.0
            } else {
                jp[s][s] * k_param / f2.sqrt()
            }
        })
        .sum()
}

fn radanovic_limit(laws: &Laws) -> f64 {
    let bm = laws.base_marginal();
    if bm.iter().any(|p| *p <= 0.0) {
        // an infinite sample is double mixed iff every label has positive mass
        return 0.0;
    }
    let jp = laws.joint();
    let p2 = laws.base_pair();
    let mut e = 0.0;
    for r in 0..laws.k {
        let c: Vec<f64> = (0..laws.k).map(|t| p2[r][t] / bm[r]).collect();
        let sq: f64 = c.iter().map(|x| x * x).sum();
        for t in 0..laws.k {
            e += jp[r][t] * (0.5 + c[t] - 0.5 * sq);
        }
    }
    e
}

fn belief_of(
    env: &Environment,
    s: &Strategy,
    h: usize,
    l: usize,
    base: &Strategy,
) -> Result<Distribution> {
    match s.belief {
        BeliefMode::PointMassOnReport => Ok(Distribution::point_mass(
            env.num_labels(),
            s.signal_report(h, l),
        )),
        BeliefMode::InducedPosterior => induced_peer_belief(env, s.effort, h, l, base),
    }
}

/// Per-agent observation tables for one `(q, l)` cell: `(P(h|q), report, belief)`.
struct Observed {
    by_h: Vec<(f64, usize, Distribution)>,
}

impl Observed {
    fn new(env: &Environment, s: &Strategy, q: usize, l: usize, base: &Strategy) -> Result<Self> {
        let k = env.num_labels();
        let mut by_h = Vec::with_capacity(k);
        for h in 0..k {
            let ph = env.high_channel.prob(q, h);
            if ph == 0.0 {
                continue;
            }
            by_h.push((ph, s.signal_report(h, l), belief_of(env, s, h, l, base)?));
        }
        Ok(Self { by_h })
    }
}

/// Sums `w * f(focal, peer_j, peer_k)` over all positive-weight outcomes.
fn belief_sum<F>(
    env: &Environment,
    dev: &Strategy,
    base: &Strategy,
    peers: usize,
    mut f: F,
) -> Result<f64>
where
    F: FnMut(&(f64, usize, Distribution), &[&(f64, usize, Distribution)]) -> Result<f64>,
{
    let mut e = 0.0;
    for (q, l, w) in env.quality_low_pairs() {
        let me = Observed::new(env, dev, q, l, base)?;
        let them = Observed::new(env, base, q, l, base)?;
        for own in &me.by_h {
            match peers {
                1 => {
                    for j in &them.by_h {
                        e += w * own.0 * j.0 * f(own, &[j])?;
                    }
                }
                2 => {
                    for j in &them.by_h {
                        for kk in &them.by_h {
                            e += w * own.0 * j.0 * kk.0 * f(own, &[j, kk])?;
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    Ok(e)
}

fn rbts(env: &Environment, dev: &Strategy, base: &Strategy, rule: ScoringRule) -> Result<f64> {
    if env.num_labels() != 2 {
        return Err(Error::NonBinaryLabelSpace(env.num_labels()));
    }
    belief_sum(env, dev, base, 2, |(_, r, b), peers| {
        let (_, _, bj) = peers[0];
        let (_, rk, _) = peers[1];
        let shadow = shadowed_belief(bj, *r);
        sentinel(
            rule.score(&shadow, *rk)
                .and_then(|x| Ok(x + rule.score(b, *rk)?)),
        )
    })
}

fn mrbts(env: &Environment, dev: &Strategy, base: &Strategy, rule: ScoringRule) -> Result<f64> {
    belief_sum(env, dev, base, 1, |(_, r, b), peers| {
        let (_, rj, bj) = peers[0];
        sentinel(mrbts_value(rule, *r, b, *rj, bj))
    })
}

fn dbts(
    env: &Environment,
    dev: &Strategy,
    base: &Strategy,
    rule: ScoringRule,
    theta: f64,
) -> Result<f64> {
    belief_sum(env, dev, base, 1, |(_, r, b), peers| {
        let (_, rj, bj) = peers[0];
        sentinel(dbts_value(rule, theta, *r, b, *rj, bj))
    })
}

/// Calls `f(counts)` for every composition of `n` into `parts` nonnegative parts.
fn for_each_composition(
    n: usize,
    parts: usize,
    f: &mut dyn FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    fn rec(
        left: usize,
        slot: usize,
        counts: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]) -> Result<()>,
    ) -> Result<()> {
        if slot + 1 == counts.len() {
            counts[slot] = left;
            return f(counts);
        }
        for c in 0..=left {
            counts[slot] = c;
            rec(left - c, slot + 1, counts, f)?;
        }
        Ok(())
    }
    let mut counts = vec![0; parts];
    rec(n, 0, &mut counts, f)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `P(Bin(n, p) = c)` for every `c`, computed in log space.
fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    if p <= 0.0 || p >= 1.0 {
        let mut out = vec![0.0; n + 1];
        out[if p <= 0.0 { 0 } else { n }] = 1.0;
        return out;
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut ln_choose = 0.0;
    (0..=n)
        .map(|c| {
            if c > 0 {
                ln_choose += ((n - c + 1) as f64).ln() - (c as f64).ln();
            }
            (ln_choose + c as f64 * lp + (n - c) as f64 * lq).exp()
        })
        .collect()
}

fn multinomial(counts: &[usize]) -> f64 {
    let mut left = counts.iter().sum::<usize>();
    let mut c = 1.0;
    for x in counts {
        c *= binomial(left, *x);
        left -= x;
    }
    c
}

fn riley_budget(env: &Environment) -> f64 {
    let k = env.num_labels();
    let peers = env.n_agents - 1;
    (k * k * k) as f64 * binomial(peers + k - 1, k - 1)
}

fn riley(
    env: &Environment,
    dev: &Strategy,
    base: &Strategy,
    rule: ScoringRule,
    aggregation: super::RileyAggregation,
) -> Result<f64> {
    let k = env.num_labels();
    let peers = env.n_agents - 1;
    let mut e = 0.0;
    for (q, l, w) in env.quality_low_pairs() {
        let me = Observed::new(env, dev, q, l, base)?;
        // peers are exchangeable, so only the counts of each high signal matter
        let them: Vec<(f64, usize, Distribution)> = (0..k)
            .map(|h| {
                Ok((
                    env.high_channel.prob(q, h),
                    base.signal_report(h, l),
                    belief_of(env, base, h, l, base).unwrap_or_else(|_| Distribution::uniform(k)),
                ))
            })
            .collect::<Result<_>>()?;
        for_each_composition(peers, k, &mut |counts| {
            let mut p = multinomial(counts);
            for (h, c) in counts.iter().enumerate() {
                if *c > 0 {
                    p *= them[h].0.powi(*c as i32);
                }
            }
            if p == 0.0 {
                return Ok(());
            }
            let reports: Vec<(usize, &Distribution)> = counts
                .iter()
                .enumerate()
                .flat_map(|(h, c)| std::iter::repeat_n((them[h].1, &them[h].2), *c))
                .collect();
            for (ph, r, b) in &me.by_h {
                let v = sentinel(riley_value(
                    rule,
                    aggregation,
                    k,
                    *r,
                    b,
                    reports.iter().copied(),
                ))?;
                e += w * ph * p * v;
            }
            Ok(())
        })?;
    }
    Ok(e)
}

/// Exact (or limiting) expected unchecked reward of `for_agent`.
///
/// Fails with `Unsupported` when `for_agent` conforms while someone else
/// deviates, and with `EnumerationBudgetExceeded` when the table is too big.
pub fn analytic_unchecked_utility(
    spec: &MechanismSpec,
    env: &Environment,
    profile: &StrategyProfile,
    for_agent: usize,
    budget: u128,
) -> Result<UtilityEstimate> {
    let (dev, base) = focal_pair(profile, for_agent)?;
    let k = env.num_labels();
    let v = match spec {
        MechanismSpec::PeerInsensitive { w } => *w,
        MechanismSpec::OutputAgreement => output_agreement(&Laws::new(env, dev, base)),
        MechanismSpec::PeerTruthSerum { alpha, beta } => {
            pts_limit(&Laws::new(env, dev, base), *alpha, *beta)
        }
        MechanismSpec::ShnayderDG => shnayder(&Laws::new(env, dev, base)),
        MechanismSpec::Kamble { k: kp } => kamble_limit(&Laws::new(env, dev, base), *kp),
        MechanismSpec::Radanovic15 => radanovic_limit(&Laws::new(env, dev, base)),
        MechanismSpec::RobustBTS { rule } => {
            check_budget(k, 5, budget)?;
            rbts(env, dev, base, *rule)?
        }
        MechanismSpec::MultiValuedRBTS { rule } => {
            check_budget(k, 4, budget)?;
            mrbts(env, dev, base, *rule)?
        }
        MechanismSpec::DivergenceBTS { rule, theta } => {
            check_budget(k, 4, budget)?;
            dbts(env, dev, base, *rule, *theta)?
        }
        MechanismSpec::RileyMinimum { rule, aggregation } => {
            let needed = riley_budget(env);
            if needed > budget as f64 {
                return Err(Error::EnumerationBudgetExceeded {
                    needed: needed.min(u128::MAX as f64) as u128,
                    budget,
                });
            }
            riley(env, dev, base, *rule, *aggregation)?
        }
    };
    Ok(UtilityEstimate::exact(v))
}

/// Exact PTS utility at a finite population laid out as `layout`, with F the
/// per-object frequency over that object's evaluators. The analytic path
/// reports the large-population limit instead; this is its finite-size oracle.
pub fn pts_finite_population_utility(
    alpha: f64,
    beta: f64,
    env: &Environment,
    profile: &StrategyProfile,
    for_agent: usize,
    layout: ObjectLayout,
) -> Result<f64> {
    let (dev, base) = focal_pair(profile, for_agent)?;
    let laws = Laws::new(env, dev, base);
    // expected bonus on an object with `evaluators` raters (focal and peer included)
    let per_object = |evaluators: usize| -> f64 {
        let others = evaluators - 2;
        let mut e = 0.0;
        for (w, d, b) in &laws.cells {
            for s in 0..laws.k {
                let ps = b[s];
                if d[s] * ps == 0.0 {
                    continue;
                }
                let mut inv = 0.0;
                for (c, pc) in binomial_pmf(others, ps).into_iter().enumerate() {
                    inv += pc * evaluators as f64 / (2 + c) as f64;
                }
                e += w * d[s] * ps * inv;
            }
        }
        alpha + beta * e
    };
    let n = layout.n_agents;
    let full = layout.shared as f64;
    let skipped_by_others = ((n - 1) * layout.side_per_agent) as f64;
    let mut total = full * per_object(n);
    if layout.side_per_agent > 0 {
        total += skipped_by_others * per_object(n - 1);
    }
    Ok(total / (full + skipped_by_others))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::RileyAggregation;
    use crate::signal::fixtures::{e1, ternary_a};
    use crate::signal::joint_signal_distribution;
    use crate::strategy::enumerate_pure_strategies;

    fn sym(s: Strategy) -> StrategyProfile {
        StrategyProfile::symmetric(s)
    }

    fn u(spec: &MechanismSpec, env: &Environment, p: &StrategyProfile, agent: usize) -> f64 {
        analytic_unchecked_utility(
            spec,
            env,
            p,
            agent,
            crate::signal::DEFAULT_ENUMERATION_BUDGET,
        )
        .unwrap()
        .value
    }

    #[test]
    fn oa_oracle_from_joint_table() {
        // two truthful agents agree with probability P(s^h_1 = s^h_2)
        let env = e1();
        let j = joint_signal_distribution(&env, 2).unwrap();
        let agree = j.prob(|t| t.high[0] == t.high[1]);
        assert!((agree - 0.82).abs() < 1e-12);
        let t = Strategy::truthful(2);
        assert!((u(&MechanismSpec::OutputAgreement, &env, &sym(t), 0) - agree).abs() < 1e-12);
        let g = Strategy::low_identity(2);
        assert_eq!(u(&MechanismSpec::OutputAgreement, &env, &sym(g), 0), 1.0);
    }

    #[test]
    fn shnayder_oracle_from_joint_table() {
        let env = e1();
        let j = joint_signal_distribution(&env, 2).unwrap();
        let agree = j.prob(|t| t.high[0] == t.high[1]);
        let sq: f64 = (0..2).map(|s| j.prob(|t| t.high[0] == s).powi(2)).sum();
        let t = Strategy::truthful(2);
        let got = u(&MechanismSpec::ShnayderDG, &env, &sym(t), 0);
        assert!((got - (agree - sq)).abs() < 1e-12);
        assert!((got - 0.32).abs() < 1e-12);
        let g = Strategy::low_identity(2);
        assert!((u(&MechanismSpec::ShnayderDG, &env, &sym(g), 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kamble_limits() {
        let env = e1();
        let spec = MechanismSpec::Kamble { k: 1.0 };
        let g = u(&spec, &env, &sym(Strategy::low_identity(2)), 0);
        assert!((g - 2f64.sqrt()).abs() < 1e-12);
        let t = u(&spec, &env, &sym(Strategy::truthful(2)), 0);
        assert!((t - 2.0 * 0.41f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pts_equilibria() {
        let env = ternary_a();
        let spec = MechanismSpec::PeerTruthSerum {
            alpha: 0.1,
            beta: 1.0,
        };
        for s in [Strategy::truthful(3), Strategy::low_identity(3)] {
            assert!((u(&spec, &env, &sym(s), 0) - 1.1).abs() < 1e-12);
        }
    }

    #[test]
    fn radanovic_limits() {
        let env = e1();
        let g = u(
            &MechanismSpec::Radanovic15,
            &env,
            &sym(Strategy::low_identity(2)),
            0,
        );
        assert!((g - 1.0).abs() < 1e-12);
        let t = u(
            &MechanismSpec::Radanovic15,
            &env,
            &sym(Strategy::truthful(2)),
            0,
        );
        assert!((t - (0.5 + 0.5 * 0.7048)).abs() < 1e-12);
        let c = u(
            &MechanismSpec::Radanovic15,
            &env,
            &sym(Strategy::constant(Effort::None, 2, 0)),
            0,
        );
        assert_eq!(c, 0.0);
    }

    #[test]
    fn belief_mechanisms_low_equilibrium() {
        let env = e1();
        let q = ScoringRule::Quadratic;
        let g = Strategy::low_identity(2).with_belief(BeliefMode::PointMassOnReport);
        let p = sym(g.clone());
        assert!((u(&MechanismSpec::RobustBTS { rule: q }, &env, &p, 0) - 2.0).abs() < 1e-12);
        assert!((u(&MechanismSpec::MultiValuedRBTS { rule: q }, &env, &p, 0) - 2.0).abs() < 1e-12);
        assert!(
            (u(
                &MechanismSpec::DivergenceBTS {
                    rule: q,
                    theta: 0.05
                },
                &env,
                &p,
                0
            ) - 1.0)
                .abs()
                < 1e-12
        );
        let riley = MechanismSpec::RileyMinimum {
            rule: q,
            aggregation: RileyAggregation::Mean,
        };
        assert!((u(&riley, &env, &p, 0) - 1.0).abs() < 1e-12);
        // the induced belief of a low-signal population is the same point mass
        let p = sym(Strategy::low_identity(2));
        assert!((u(&MechanismSpec::MultiValuedRBTS { rule: q }, &env, &p, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mrbts_truthful_e1() {
        let env = e1();
        let p = sym(Strategy::truthful(2));
        // 1 + E[R(posterior, r_j)] = 1 + 0.82 * 2 * 0.82 + 0.18 * 2 * 0.18 - (0.82^2 + 0.18^2)
        let want = 1.0 + 0.7048;
        let got = u(
            &MechanismSpec::MultiValuedRBTS {
                rule: ScoringRule::Quadratic,
            },
            &env,
            &p,
            0,
        );
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn conformer_with_deviant_is_unsupported() {
        let env = e1();
        let p = StrategyProfile::with_deviant(Strategy::truthful(2), 0, Strategy::low_identity(2));
        assert!(matches!(
            analytic_unchecked_utility(&MechanismSpec::OutputAgreement, &env, &p, 1, 10),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn budget_respected() {
        let env = ternary_a();
        let spec = MechanismSpec::MultiValuedRBTS {
            rule: ScoringRule::Quadratic,
        };
        let p = sym(Strategy::truthful(3));
        assert!(matches!(
            analytic_unchecked_utility(&spec, &env, &p, 0, 10),
            Err(Error::EnumerationBudgetExceeded { needed: 81, .. })
        ));
    }

    #[test]
    fn constant_maps_oa() {
        let env = ternary_a();
        for s in enumerate_pure_strategies(&env.q_space)
            .unwrap()
            .into_iter()
            .filter(|s| s.is_constant())
        {
            assert!((u(&MechanismSpec::OutputAgreement, &env, &sym(s), 0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pts_finite_population_tends_to_limit() {
        let env = e1();
        let p = sym(Strategy::truthful(2));
        let small =
            pts_finite_population_utility(0.1, 1.0, &env, &p, 0, ObjectLayout::new(3, 2)).unwrap();
        // hand computation for three raters per object
        assert!((small - (0.1 + 0.81 * 1.05 + 0.01 * 1.45)).abs() < 1e-12);
        let big = pts_finite_population_utility(0.1, 1.0, &env, &p, 0, ObjectLayout::new(2000, 2))
            .unwrap();
        assert!((big - 1.1).abs() < 1e-3);
    }

    #[test]
    fn composition_weights_sum_to_one() {
        let mut total = 0.0;
        let probs = [0.2f64, 0.5, 0.3];
        for_each_composition(5, 3, &mut |c| {
            let mut p = multinomial(c);
            for (i, x) in c.iter().enumerate() {
                p *= probs[i].powi(*x as i32);
            }
            total += p;
            Ok(())
        })
        .unwrap();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
