//! Per-report rewards on a realized batch.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::instance::RealizedInstance;
use super::{MechanismSpec, RileyAggregation};
use crate::error::{Error, Result};
use crate::scoring::{divergence, ProperScoringRule, ScoringRule, UNDEFINED_SCORE};
use crate::signal::Distribution;

fn own_report(
    inst: &RealizedInstance,
    agent: usize,
    object: usize,
) -> Result<(usize, &Distribution)> {
    match (inst.signal(agent, object), inst.belief(agent, object)) {
        (Some(s), Some(b)) => Ok((s, b)),
        _ => Err(Error::Unsupported(format!(
            "agent {agent} did not evaluate object {object}"
        ))),
    }
}

fn peers(inst: &RealizedInstance, agent: usize, object: usize) -> Vec<usize> {
    (0..inst.n_agents())
        .filter(|a| *a != agent && inst.evaluated(*a, object))
        .collect()
}

fn pick_peer<R: Rng + ?Sized>(
    inst: &RealizedInstance,
    agent: usize,
    object: usize,
    rng: &mut R,
) -> Result<usize> {
    peers(inst, agent, object)
        .choose(rng)
        .copied()
        .ok_or(Error::NoPeer { agent, object })
}

fn pick_two<R: Rng + ?Sized>(pool: &[usize], rng: &mut R) -> Option<(usize, usize)> {
    if pool.len() < 2 {
        return None;
    }
    let a = rng.random_range(0..pool.len());
    let mut b = rng.random_range(0..pool.len() - 1);
    if b >= a {
        b += 1;
    }
    Some((pool[a], pool[b]))
}

/// `1[r_ij = r_i'j]` for a uniformly chosen peer `i'`.
pub fn reward_output_agreement<R: Rng + ?Sized>(
    inst: &RealizedInstance,
    agent: usize,
    object: usize,
    rng: &mut R,
) -> Result<f64> {
    let (r, _) = own_report(inst, agent, object)?;
    let peer = pick_peer(inst, agent, object, rng)?;
    Ok(if inst.signal(peer, object) == Some(r) {
        1.0
    } else {
        0.0
    })
}

/// `alpha + beta * 1[r_ij = r_i'j] / F(r_i'j)`, with F the frequency of the
/// peer's report among everyone who evaluated the object.
pub fn reward_pts<R: Rng + ?Sized>(
    inst: &RealizedInstance,
    agent: usize,
    object: usize,
    alpha: f64,
    beta: f64,
    rng: &mut R,
) -> Result<f64> {
    let (r, _) = own_report(inst, agent, object)?;
    let peer = pick_peer(inst, agent, object, rng)?;
    let rp = inst.signal(peer, object).expect("peer evaluated");
    if rp != r {
        return Ok(alpha);
    }
    let evaluators = inst.evaluators(object);
    let hits = evaluators
        .iter()
        .filter(|a| inst.signal(**a, object) == Some(rp))
        .count();
    Ok(alpha + beta * evaluators.len() as f64 / hits as f64)
}

fn frequencies(inst: &RealizedInstance, agent: usize, objects: &[usize]) -> Vec<f64> {
    let mut f = vec![0.0; inst.num_labels()];
    for o in objects {
        f[inst.signal(agent, *o).expect("task set member")] += 1.0;
    }
    let n = objects.len() as f64;
    f.iter_mut().for_each(|x| *x /= n);
    f
}

/// Agreement minus the inner product of report frequencies on two
/// disjoint task sets.
pub fn reward_shnayder<R: Rng + ?Sized>(
    inst: &RealizedInstance,
    agent: usize,
    object: usize,
    rng: &mut R,
) -> Result<f64> {
    let (r, _) = own_report(inst, agent, object)?;
    let peer = pick_peer(inst, agent, object, rng)?;
    let mut own_only = Vec::new();
    let mut peer_only = Vec::new();
    for o in (0..inst.n_objects()).filter(|o| *o != object) {
        match (inst.evaluated(agent, o), inst.evaluated(peer, o)) {
            (true, false) => own_only.push(o),
            (false, true) => peer_only.push(o),
            _ => {}
        }
    }
    if own_only.is_empty() || peer_only.is_empty() {
        return Err(Error::NoDisjointTaskSets(agent, peer));
    }
    let fi = frequencies(inst, agent, &own_only);
    let fp = frequencies(inst, peer, &peer_only);
    let overlap: f64 = fi.iter().zip(&fp).map(|(a, b)| a * b).sum();
    let agree = if inst.signal(peer, object) == Some(r) {
        1.0
    } else {
        0.0
    };
    Ok(agree - overlap)
}

/// Agreement scaled by `K / f(s)`, where `f(s)^2` is the fraction of objects
/// on which two further agents both reported `s`.
pub fn reward_kamble<R: Rng + ?Sized>(
    inst: &RealizedInstance,
    agent: usize,
    object: usize,
    k: f64,
    rng: &mut R,
) -> Result<f64> {
    if inst.n_agents() < 4 {
        return Err(Error::TooFewAgents(inst.n_agents()));
    }
    let (r, _) = own_report(inst, agent, object)?;
    let peer = pick_peer(inst, agent, object, rng)?;
    let s = inst.signal(peer, object).expect("peer evaluated");
    let scorers: Vec<usize> = (0..inst.n_agents())
        .filter(|a| *a != agent && *a != peer)
        .collect();
    let (a, b) = pick_two(&scorers, rng).expect("at least two scorers");
    let mut common = 0usize;
    let mut both = 0usize;
    for o in 0..inst.n_objects() {
        if let (Some(x), Some(y)) = (inst.signal(a, o), inst.signal(b, o)) {
            common += 1;
            if x == s && y == s {
                both += 1;
            }
        }
    }
    if common == 0 || both == 0 || both == common {
        return Ok(0.0);
    }
    let f = (both as f64 / common as f64).sqrt();
    Ok(if r == s { k / f } else { 0.0 })
}

/// Quadratic-style agreement score against a sample of reports on objects
/// the agent did not evaluate; zero unless the sample contains every label twice.
pub fn reward_radanovic15<R: Rng + ?Sized>(
    inst: &RealizedInstance,
    agent: usize,
    object: usize,
    rng: &mut R,
) -> Result<f64> {
    if inst.n_objects() < 3 {
        return Err(Error::NotEnoughObjects(format!(
            "{} objects, at least 3 required",
            inst.n_objects()
        )));
    }
    let (r, _) = own_report(inst, agent, object)?;
    let peer = pick_peer(inst, agent, object, rng)?;
    let rp = inst.signal(peer, object).expect("peer evaluated");
    // one (object, evaluator, report) per object the agent skipped
    let mut sample = Vec::new();
    for o in (0..inst.n_objects()).filter(|o| !inst.evaluated(agent, *o)) {
        let evaluators = inst.evaluators(o);
        if let Some(e) = evaluators.choose(rng) {
            sample.push((o, *e, inst.signal(*e, o).expect("evaluator")));
        }
    }
    if sample.is_empty() {
        return Err(Error::NotEnoughObjects(format!(
            "agent {agent} evaluated every object, sample is empty"
        )));
    }
    let mut counts = vec![0usize; inst.num_labels()];
    for (_, _, s) in &sample {
        counts[*s] += 1;
    }
    if counts.iter().any(|c| *c < 2) {
        return Ok(0.0);
    }
    let matching: Vec<usize> = (0..sample.len()).filter(|i| sample[*i].2 == r).collect();
    let (x, y) = pick_two(&matching, rng).ok_or_else(|| {
        Error::NotEnoughObjects("fewer than two sample objects match the report".into())
    })?;
    let mut reference = |(o, sampled, _): (usize, usize, usize)| -> Result<usize> {
        let others: Vec<usize> = inst
            .evaluators(o)
            .into_iter()
            .filter(|a| *a != sampled)
            .collect();
        let a = others.choose(rng).ok_or(Error::NoPeer {
            agent: sampled,
            object: o,
        })?;
        Ok(inst.signal(*a, o).expect("evaluator"))
    };
    let r1 = reference(sample[x])?;
    let r2 = reference(sample[y])?;
    let hit = if r1 == rp { 1.0 } else { 0.0 };
    let pair = if r1 == r2 { 1.0 } else { 0.0 };
    Ok(0.5 + hit - 0.5 * pair)
}

/// Binary shadowing: move the peer's belief in label 1 up (report 1) or down
/// (report 0) by `min(b, 1 - b)`.
pub fn shadowed_belief(peer_belief: &Distribution, report: usize) -> Distribution {
    let b = peer_belief.prob(1);
    let delta = b.min(1.0 - b);
    let x = if report == 1 { b + delta } else { b - delta };
    let x = x.clamp(0.0, 1.0);
    Distribution::from_vec_unchecked(vec![1.0 - x, x])
}

/// `R(b'_i, r_k) + R(b_i, r_k)` with `b'_i` shadowed from peer `j`'s belief.
pub fn reward_rbts<R: Rng + ?Sized>(
    inst: &RealizedInstance,
    agent: usize,
    object: usize,
    rule: ScoringRule,
    rng: &mut R,
) -> Result<f64> {
    if inst.num_labels() != 2 {
        return Err(Error::NonBinaryLabelSpace(inst.num_labels()));
    }
    let (r, b) = own_report(inst, agent, object)?;
    let pool = peers(inst, agent, object);
    let (j, k) = pick_two(&pool, rng).ok_or(Error::NoPeer { agent, object })?;
    let shadow = shadowed_belief(inst.belief(j, object).expect("peer"), r);
    let rk = inst.signal(k, object).expect("peer");
    Ok(rule.score(&shadow, rk)? + rule.score(b, rk)?)
}

pub(crate) fn mrbts_value(
    rule: ScoringRule,
    r: usize,
    b: &Distribution,
    rj: usize,
    bj: &Distribution,
) -> Result<f64> {
    let bonus = if r == rj {
        let m = bj.prob(r);
        if m <= 0.0 {
            return Err(Error::ZeroBeliefMatch);
        }
        1.0 / m
    } else {
        0.0
    };
    Ok(bonus + rule.score(b, rj)?)
}

/// `1[r_i = r_j] / b_j(r_i) + R(b_i, r_j)`.
pub fn reward_mrbts<R: Rng + ?Sized>(
    inst: &RealizedInstance,
    agent: usize,
    object: usize,
    rule: ScoringRule,
    rng: &mut R,
) -> Result<f64> {
    let (r, b) = own_report(inst, agent, object)?;
    let j = pick_peer(inst, agent, object, rng)?;
    mrbts_value(
        rule,
        r,
        b,
        inst.signal(j, object).expect("peer"),
        inst.belief(j, object).expect("peer"),
    )
}

pub(crate) fn dbts_value(
    rule: ScoringRule,
    theta: f64,
    r: usize,
    b: &Distribution,
    rj: usize,
    bj: &Distribution,
) -> Result<f64> {
    let penalty = if r == rj {
        // an undefined divergence is infinite, so it always exceeds theta
        let d = match divergence(&rule, b, bj) {
            Ok(d) => d,
            Err(Error::LogOfZero) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        if d > theta {
            1.0
        } else {
            0.0
        }
    } else {
        0.0
    };
    Ok(rule.score(b, rj)? - penalty)
}

/// `-1[r_i = r_j and D(b_i, b_j) > theta] + R(b_i, r_j)`.
pub fn reward_dbts<R: Rng + ?Sized>(
    inst: &RealizedInstance,
    agent: usize,
    object: usize,
    rule: ScoringRule,
    theta: f64,
    rng: &mut R,
) -> Result<f64> {
    let (r, b) = own_report(inst, agent, object)?;
    let j = pick_peer(inst, agent, object, rng)?;
    dbts_value(
        rule,
        theta,
        r,
        b,
        inst.signal(j, object).expect("peer"),
        inst.belief(j, object).expect("peer"),
    )
}

/// Riley's reward from explicit peer reports.
pub(crate) fn riley_value<'a>(
    rule: ScoringRule,
    aggregation: RileyAggregation,
    num_labels: usize,
    r: usize,
    b: &Distribution,
    peer_reports: impl Iterator<Item = (usize, &'a Distribution)> + Clone,
) -> Result<f64> {
    let n = peer_reports.clone().count();
    let scale = match aggregation {
        RileyAggregation::Mean => 1.0 / n as f64,
        RileyAggregation::Sum => 1.0,
    };
    let mut counts = vec![0usize; num_labels];
    let mut own = 0.0;
    for (s, _) in peer_reports.clone() {
        counts[s] += 1;
        own += rule.score(b, s)?;
    }
    own *= scale;
    if counts.contains(&0) {
        return Ok(own);
    }
    let mut proxy = vec![0.0; num_labels];
    let mut same = 0.0;
    for (s, bj) in peer_reports.clone() {
        if s == r {
            same += 1.0;
            for (p, x) in proxy.iter_mut().zip(bj.probs()) {
                *p += x;
            }
        }
    }
    proxy.iter_mut().for_each(|p| *p /= same);
    let proxy = Distribution::from_vec_unchecked(proxy);
    let mut capped = 0.0;
    for (s, _) in peer_reports {
        capped += rule.score(&proxy, s)?;
    }
    Ok(own.min(capped * scale))
}

/// Score of the own belief against all peers' reports, capped by the score of
/// the same-report peers' average belief whenever every label was reported.
pub fn reward_riley(
    inst: &RealizedInstance,
    agent: usize,
    object: usize,
    rule: ScoringRule,
    aggregation: RileyAggregation,
) -> Result<f64> {
    let (r, b) = own_report(inst, agent, object)?;
    let pool = peers(inst, agent, object);
    if pool.len() < 2 {
        return Err(Error::NoPeer { agent, object });
    }
    let reports: Vec<(usize, &Distribution)> = pool
        .iter()
        .map(|j| {
            (
                inst.signal(*j, object).unwrap(),
                inst.belief(*j, object).unwrap(),
            )
        })
        .collect();
    riley_value(
        rule,
        aggregation,
        inst.num_labels(),
        r,
        b,
        reports.iter().copied(),
    )
}

pub fn reward_peer_insensitive(w: f64) -> f64 {
    w
}

/// Maps undefined scores to the sentinel and leaves structural errors alone.
pub(crate) fn sentinel(r: Result<f64>) -> Result<f64> {
    match r {
        Err(Error::LogOfZero) | Err(Error::ZeroBeliefMatch) => Ok(UNDEFINED_SCORE),
        other => other,
    }
}

/// Reward of `agent` on `object` under `spec`; undefined scores become the sentinel.
pub fn realized_reward<R: Rng + ?Sized>(
    spec: &MechanismSpec,
    inst: &RealizedInstance,
    agent: usize,
    object: usize,
    rng: &mut R,
) -> Result<f64> {
    let v = match spec {
        MechanismSpec::OutputAgreement => reward_output_agreement(inst, agent, object, rng),
        MechanismSpec::PeerTruthSerum { alpha, beta } => {
            reward_pts(inst, agent, object, *alpha, *beta, rng)
        }
        MechanismSpec::ShnayderDG => reward_shnayder(inst, agent, object, rng),
        MechanismSpec::Kamble { k } => reward_kamble(inst, agent, object, *k, rng),
        MechanismSpec::Radanovic15 => reward_radanovic15(inst, agent, object, rng),
        MechanismSpec::RobustBTS { rule } => reward_rbts(inst, agent, object, *rule, rng),
        MechanismSpec::MultiValuedRBTS { rule } => reward_mrbts(inst, agent, object, *rule, rng),
        MechanismSpec::DivergenceBTS { rule, theta } => {
            reward_dbts(inst, agent, object, *rule, *theta, rng)
        }
        MechanismSpec::RileyMinimum { rule, aggregation } => {
            reward_riley(inst, agent, object, *rule, *aggregation)
        }
        MechanismSpec::PeerInsensitive { w } => Ok(reward_peer_insensitive(*w)),
    };
    sentinel(v)
}
