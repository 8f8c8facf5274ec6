use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{
    best_no_effort_strategy, Analyzer, EquilibriumRecord, EquilibriumStatus, DEFAULT_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::mechanism::{EvalOptions, MechanismSpec};
use crate::signal::Environment;
use crate::spotcheck::expected_spot_reward;
use crate::strategy::Strategy;

/// Outcome of one threshold solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Value(f64),
    /// The closed form exceeds 1 or its denominator is not positive.
    NotAchievable,
    /// No probed probability qualifies.
    NotFound,
    /// The solver's precondition fails.
    NotApplicable,
    /// The answer hinges on a sampled comparison within its margin.
    Inconclusive,
}

impl Threshold {
    pub fn value(&self) -> Option<f64> {
        match self {
            Threshold::Value(v) => Some(*v),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Threshold::Value(_) => "Value",
            Threshold::NotAchievable => "NotAchievable",
            Threshold::NotFound => "NotFound",
            Threshold::NotApplicable => "NotApplicable",
            Threshold::Inconclusive => "Inconclusive",
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Value(v) => write!(f, "{v}"),
            other => f.write_str(other.label()),
        }
    }
}

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Threshold::Value(v) => s.serialize_f64(*v),
            other => s.serialize_str(other.label()),
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Threshold::Value(v)),
            Raw::Text(t) => match t.as_str() {
                "NotAchievable" => Ok(Threshold::NotAchievable),
                "NotFound" => Ok(Threshold::NotFound),
                "NotApplicable" => Ok(Threshold::NotApplicable),
                "Inconclusive" => Ok(Threshold::Inconclusive),
                other => Err(serde::de::Error::custom(format!(
                    "unknown threshold `{other}`"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub grid: f64,
    /// Bisection width for the elimination threshold.
    pub refine: f64,
    pub tol: f64,
    /// Require truthful to beat other equilibria strictly.
    pub strict_pareto: bool,
    pub eval: EvalOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            grid: 1e-3,
            refine: 1e-6,
            tol: DEFAULT_TOLERANCE,
            strict_pareto: false,
            eval: EvalOptions::default(),
        }
    }
}

impl SolverOptions {
    pub fn with_grid(grid: f64) -> Self {
        Self {
            grid,
            ..Self::default()
        }
    }

    fn grid_points(&self) -> Result<Vec<f64>> {
        if !(self.grid > 0.0 && self.grid <= 1.0) {
            return Err(Error::InvalidMechanism(format!(
                "grid step {} outside (0, 1]",
                self.grid
            )));
        }
        let n = (1.0 / self.grid).round() as usize;
        let mut pts: Vec<f64> = (0..=n)
            .map(|i| ((i as f64 * self.grid) * 1e12).round() / 1e12)
            .filter(|p| *p <= 1.0)
            .collect();
        if *pts.last().unwrap() < 1.0 {
            pts.push(1.0);
        }
        Ok(pts)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    pub p_el: Vec<EquilibriumRecord>,
    pub p_ex: Vec<EquilibriumRecord>,
    pub p_pareto: Vec<EquilibriumRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub p_ds: Threshold,
    pub p_ds_bisection: Threshold,
    pub p_el: Threshold,
    pub p_ex: Threshold,
    pub p_pareto: Threshold,
    pub grid_resolution: f64,
    pub strict_pareto: bool,
    pub g_low: Strategy,
    pub spot_truthful: f64,
    pub spot_g_low: f64,
    pub utility_truthful_p0: f64,
    pub utility_g_low_p0: f64,
    pub certificates: Certificates,
}

fn spot_terms(env: &Environment) -> Result<(f64, f64)> {
    let gl = best_no_effort_strategy(env)?;
    Ok((
        expected_spot_reward(env, &Strategy::truthful(env.num_labels())),
        expected_spot_reward(env, &gl),
    ))
}

/// Smallest `p` making truthful reporting dominant under a peer-insensitive
/// unchecked reward, in closed form.
pub fn solve_p_ds(env: &Environment) -> Result<Threshold> {
    let (et, eg) = spot_terms(env)?;
    let c = env.effort_cost;
    if c == 0.0 {
        return Ok(Threshold::Value(0.0));
    }
    let denom = et - eg;
    if denom <= 0.0 {
        return Ok(Threshold::NotAchievable);
    }
    let p = c / denom;
    Ok(if p > 1.0 {
        Threshold::NotAchievable
    } else {
        Threshold::Value(p)
    })
}

/// The same threshold found by bisection on the dominance gap
/// `p E[y(truthful)] - c - p E[y(g^l)]`.
pub fn p_ds_bisection(env: &Environment, width: f64) -> Result<Threshold> {
    let (et, eg) = spot_terms(env)?;
    let c = env.effort_cost;
    let gap = |p: f64| p * et - c - p * eg;
    if gap(0.0) >= 0.0 {
        return Ok(Threshold::Value(0.0));
    }
    if gap(1.0) < 0.0 {
        return Ok(Threshold::NotAchievable);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if gap(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Threshold::Value(hi))
}

fn g_low_index(a: &Analyzer) -> Result<usize> {
    let gl = best_no_effort_strategy(a.env())?;
    Ok(a.index_of(&gl).expect("enumerated"))
}

fn p_el_with(a: &Analyzer, opts: &SolverOptions) -> Result<(Threshold, Vec<EquilibriumRecord>)> {
    let gl = g_low_index(a)?;
    let start = a.record(gl, 0.0, opts.tol)?;
    match start.status {
        EquilibriumStatus::Rejected => return Ok((Threshold::NotApplicable, vec![start])),
        EquilibriumStatus::Inconclusive => return Ok((Threshold::Inconclusive, vec![start])),
        EquilibriumStatus::Certified => {}
    }
    let pts = opts.grid_points()?;
    for w in pts.windows(2) {
        let r = a.record(gl, w[1], opts.tol)?;
        match r.status {
            EquilibriumStatus::Certified => continue,
            EquilibriumStatus::Inconclusive => {
                return Ok((Threshold::Inconclusive, vec![start, r]))
            }
            EquilibriumStatus::Rejected => {}
        }
        // the deviation gain is a maximum of affine functions of p, so its sign changes once
        let (mut lo, mut hi) = (w[0], w[1]);
        while hi - lo > opts.refine {
            let mid = 0.5 * (lo + hi);
            if a.record(gl, mid, opts.tol)?.max_deviation_gain > opts.tol {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let last = a.record(gl, hi, opts.tol)?;
        return Ok((Threshold::Value(hi), vec![start, last]));
    }
    Ok((Threshold::NotFound, vec![start]))
}

fn p_ex_with(a: &Analyzer, opts: &SolverOptions) -> Result<(Threshold, Vec<EquilibriumRecord>)> {
    let t = 0;
    let gl = g_low_index(a)?;
    let zt = a.conforming(t)?.value;
    let zg = a.conforming(gl)?.value;
    let (et, eg) = (a.spot(t), a.spot(gl));
    let (ct, cg) = (a.cost(t), a.cost(gl));
    // U_t(p) - U_g(p) = head + slope * p
    let head = zt - ct - zg + cg;
    let slope = et - zt - eg + zg;
    let eps = 1e-12;
    let p = if slope.abs() <= eps {
        if head.abs() <= eps {
            0.0
        } else {
            return Ok((Threshold::NotApplicable, Vec::new()));
        }
    } else {
        -head / slope
    };
    if !(-eps..=1.0 + eps).contains(&p) {
        return Ok((Threshold::NotApplicable, Vec::new()));
    }
    let p = p.clamp(0.0, 1.0);
    let certs = vec![a.record(t, p, opts.tol)?, a.record(gl, p, opts.tol)?];
    Ok((Threshold::Value(p), certs))
}

fn p_pareto_with(
    a: &Analyzer,
    opts: &SolverOptions,
) -> Result<(Threshold, Vec<EquilibriumRecord>)> {
    let t = 0;
    a.fill_diagonal()?;
    let mut unsure = false;
    'grid: for p in opts.grid_points()? {
        let rt = a.record(t, p, opts.tol)?;
        match rt.status {
            EquilibriumStatus::Rejected => continue,
            EquilibriumStatus::Inconclusive => {
                unsure = true;
                continue;
            }
            EquilibriumStatus::Certified => {}
        }
        let own = a.symmetric_payoff(t, p)?;
        let mut certs = vec![rt];
        let mut undecided = false;
        let tol = opts.tol;
        let beats = |x: f64| {
            if opts.strict_pareto {
                x >= own.value - tol
            } else {
                x > own.value + tol
            }
        };
        for b in 1..a.len() {
            let u = a.symmetric_payoff(b, p)?;
            let margin = super::comparison_margin(&u, &own);
            // only profiles that could pay more than truthful need an equilibrium check
            if !beats(u.value + margin) {
                continue;
            }
            let r = a.record(b, p, tol)?;
            match r.status {
                EquilibriumStatus::Rejected => {}
                EquilibriumStatus::Certified if beats(u.value - margin) => continue 'grid,
                _ => {
                    undecided = true;
                    certs.push(r);
                }
            }
        }
        if undecided {
            unsure = true;
            continue;
        }
        return Ok((Threshold::Value(p), certs));
    }
    Ok((
        if unsure {
            Threshold::Inconclusive
        } else {
            Threshold::NotFound
        },
        Vec::new(),
    ))
}

/// Smallest `p` at which the best no-effort equilibrium stops being one.
pub fn solve_p_el(
    spec: &MechanismSpec,
    env: &Environment,
    opts: &SolverOptions,
) -> Result<Threshold> {
    Ok(p_el_with(&Analyzer::new(spec, env, &opts.eval)?, opts)?.0)
}

/// `p` at which the truthful and the best no-effort profiles pay the same.
pub fn solve_p_ex(
    spec: &MechanismSpec,
    env: &Environment,
    opts: &SolverOptions,
) -> Result<Threshold> {
    Ok(p_ex_with(&Analyzer::new(spec, env, &opts.eval)?, opts)?.0)
}

/// Smallest grid point at which truthful is a symmetric equilibrium paying at
/// least as much as every other symmetric pure equilibrium. Asymmetric and
/// mixed equilibria are not searched, so this is a lower bound.
pub fn solve_p_pareto(
    spec: &MechanismSpec,
    env: &Environment,
    opts: &SolverOptions,
) -> Result<Threshold> {
    Ok(p_pareto_with(&Analyzer::new(spec, env, &opts.eval)?, opts)?.0)
}

pub fn solve_thresholds(
    spec: &MechanismSpec,
    env: &Environment,
    opts: &SolverOptions,
) -> Result<ThresholdReport> {
    let a = Analyzer::new(spec, env, &opts.eval)?;
    solve_thresholds_with(&a, opts)
}

pub fn solve_thresholds_with(a: &Analyzer, opts: &SolverOptions) -> Result<ThresholdReport> {
    let env = a.env();
    let gl = g_low_index(a)?;
    let (p_el, c_el) = p_el_with(a, opts)?;
    let (p_ex, c_ex) = p_ex_with(a, opts)?;
    let (p_pareto, c_pareto) = p_pareto_with(a, opts)?;
    Ok(ThresholdReport {
        p_ds: solve_p_ds(env)?,
        p_ds_bisection: p_ds_bisection(env, 1e-12)?,
        p_el,
        p_ex,
        p_pareto,
        grid_resolution: opts.grid,
        strict_pareto: opts.strict_pareto,
        g_low: a.strategies()[gl].clone(),
        spot_truthful: a.spot(0),
        spot_g_low: a.spot(gl),
        utility_truthful_p0: a.symmetric_payoff(0, 0.0)?.value,
        utility_g_low_p0: a.symmetric_payoff(gl, 0.0)?.value,
        certificates: Certificates {
            p_el: c_el,
            p_ex: c_ex,
            p_pareto: c_pareto,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::fixtures::{e1, ternary_b};
    use crate::signal::Channel;

    fn close(t: Threshold, v: f64, tol: f64) -> bool {
        t.value().is_some_and(|x| (x - v).abs() <= tol)
    }

    #[test]
    fn p_ds_examples() {
        assert!(close(solve_p_ds(&e1()).unwrap(), 0.3125, 1e-12));
        assert!(close(p_ds_bisection(&e1(), 1e-12).unwrap(), 0.3125, 1e-9));
        assert_eq!(
            solve_p_ds(&e1().with_effort_cost(0.0)).unwrap(),
            Threshold::Value(0.0)
        );
        assert_eq!(
            solve_p_ds(&e1().with_effort_cost(0.5)).unwrap(),
            Threshold::NotAchievable
        );
        assert_eq!(
            p_ds_bisection(&e1().with_effort_cost(0.5), 1e-12).unwrap(),
            Threshold::NotAchievable
        );
    }

    #[test]
    fn p_el_examples() {
        let o = SolverOptions::default();
        let pi = MechanismSpec::PeerInsensitive { w: 1.0 };
        assert!(close(solve_p_el(&pi, &e1(), &o).unwrap(), 0.3125, 1e-6));
        // the deviant facing a low-signal population agrees half the time:
        // p 0.32 + (1 - p) 0.5 - 0.1 = 1 - p
        let oa = solve_p_el(&MechanismSpec::OutputAgreement, &e1(), &o).unwrap();
        assert!(close(oa, 0.6 / 0.82, 1e-6), "{oa}");
        assert!(close(
            solve_p_el(&pi, &e1().with_effort_cost(0.0), &o).unwrap(),
            0.0,
            1e-6
        ));
    }

    #[test]
    fn p_ex_examples() {
        let o = SolverOptions::default();
        assert!(close(
            solve_p_ex(&MechanismSpec::OutputAgreement, &e1(), &o).unwrap(),
            0.56,
            1e-12
        ));
        let pi = MechanismSpec::PeerInsensitive { w: 1.0 };
        assert!(close(solve_p_ex(&pi, &e1(), &o).unwrap(), 0.3125, 1e-12));
        assert!(close(
            solve_p_ex(&pi, &e1().with_effort_cost(0.0), &o).unwrap(),
            0.0,
            1e-12
        ));
    }

    #[test]
    fn p_pareto_examples() {
        let o = SolverOptions::default();
        let pi = MechanismSpec::PeerInsensitive { w: 1.0 };
        assert!(close(solve_p_pareto(&pi, &e1(), &o).unwrap(), 0.313, 1e-12));
        let oa = solve_p_pareto(&MechanismSpec::OutputAgreement, &e1(), &o).unwrap();
        assert!(oa.value().unwrap() >= 0.3125);
        let mut env = e1().with_effort_cost(0.0);
        env.high_channel = Channel::identity(2);
        env.low_channel = Channel::identity(2);
        assert!(close(
            solve_p_pareto(&MechanismSpec::OutputAgreement, &env, &o).unwrap(),
            0.0,
            1e-12
        ));
    }

    #[test]
    fn grid_points_end_at_one() {
        let pts = SolverOptions::with_grid(0.3).grid_points().unwrap();
        assert_eq!(pts, vec![0.0, 0.3, 0.6, 0.9, 1.0]);
        assert_eq!(
            SolverOptions::with_grid(1e-3).grid_points().unwrap().len(),
            1001
        );
        assert!(SolverOptions::with_grid(0.0).grid_points().is_err());
    }

    #[test]
    fn report_is_consistent() {
        let o = SolverOptions::default();
        let r = solve_thresholds(&MechanismSpec::ShnayderDG, &ternary_b(), &o).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        let back: ThresholdReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        if let (Some(pp), Some(el), Some(ex)) = (r.p_pareto.value(), r.p_el.value(), r.p_ex.value())
        {
            assert!(pp >= el.min(ex) - o.grid);
        }
    }
}
