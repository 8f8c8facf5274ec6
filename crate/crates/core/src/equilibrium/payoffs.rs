use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::Result;
use crate::mechanism::{
    expected_unchecked_utility_with, EvalOptions, MechanismSpec, Method, UtilityEstimate,
};
use crate::signal::Environment;
use crate::spotcheck::expected_spot_reward;
use crate::strategy::{enumerate_pure_strategies, Strategy, StrategyProfile};

/// Significance margin, in standard errors, for sampled comparisons.
pub const MC_MARGIN_SIGMAS: f64 = 4.0;

/// Payoff tables for one mechanism on one environment.
///
/// The unchecked part `Z[b][d]` (agent playing `d` against a population
/// playing `b`) does not depend on `p`, so it is computed once and reused by
/// every probe of the threshold solvers. Rows are filled lazily.
pub struct Analyzer {
    spec: MechanismSpec,
    env: Environment,
    opts: EvalOptions,
    strategies: Vec<Strategy>,
    ey: Vec<f64>,
    cost: Vec<f64>,
    diag: Vec<OnceLock<UtilityEstimate>>,
    rows: Vec<OnceLock<Vec<UtilityEstimate>>>,
}

/// `U(d | b)` at one spot-check probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Payoff {
    pub value: f64,
    pub stderr: f64,
    pub method: Method,
}

impl Analyzer {
    pub fn new(spec: &MechanismSpec, env: &Environment, opts: &EvalOptions) -> Result<Self> {
        spec.validate()?;
        spec.check_env(env)?;
        let strategies = enumerate_pure_strategies(&env.q_space)?;
        let ey = strategies
            .iter()
            .map(|s| expected_spot_reward(env, s))
            .collect();
        let cost = strategies
            .iter()
            .map(|s| if s.is_full() { env.effort_cost } else { 0.0 })
            .collect();
        let n = strategies.len();
        Ok(Self {
            spec: spec.clone(),
            env: env.clone(),
            opts: opts.clone(),
            strategies,
            ey,
            cost,
            diag: (0..n).map(|_| OnceLock::new()).collect(),
            rows: (0..n).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn spec(&self) -> &MechanismSpec {
        &self.spec
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn strategies(&self) -> &[Strategy] {
        &self.strategies
    }

    pub fn len(&self) -> usize {
        self.strategies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strategies.is_empty()
    }

    pub fn index_of(&self, s: &Strategy) -> Option<usize> {
        self.strategies
            .iter()
            .position(|t| t.effort == s.effort && t.map == s.map)
    }

    pub fn spot(&self, i: usize) -> f64 {
        self.ey[i]
    }

    pub fn cost(&self, i: usize) -> f64 {
        self.cost[i]
    }

    fn evaluate(&self, base: usize, dev: usize) -> Result<UtilityEstimate> {
        let b = self.strategies[base].clone();
        let profile = if base == dev {
            StrategyProfile::symmetric(b)
        } else {
            StrategyProfile::with_deviant(b, 0, self.strategies[dev].clone())
        };
        expected_unchecked_utility_with(&self.spec, &self.env, &profile, 0, &self.opts)
    }

    /// `Z[b][b]`.
    pub fn conforming(&self, base: usize) -> Result<UtilityEstimate> {
        if let Some(u) = self.diag[base].get() {
            return Ok(*u);
        }
        let u = self.evaluate(base, base)?;
        Ok(*self.diag[base].get_or_init(|| u))
    }

    /// `Z[b][d]` for every `d`.
    pub fn row(&self, base: usize) -> Result<&[UtilityEstimate]> {
        if let Some(r) = self.rows[base].get() {
            return Ok(r);
        }
        let own = self.conforming(base)?;
        let row = (0..self.len())
            .into_par_iter()
            .map(|d| {
                if d == base {
                    Ok(own)
                } else {
                    self.evaluate(base, d)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.rows[base].get_or_init(|| row))
    }

    /// Fills every diagonal entry, in parallel.
    pub fn fill_diagonal(&self) -> Result<()> {
        (0..self.len())
            .into_par_iter()
            .try_for_each(|b| self.conforming(b).map(|_| ()))
    }

    fn combine(&self, dev: usize, z: UtilityEstimate, p: f64) -> Payoff {
        Payoff {
            value: p * self.ey[dev] + (1.0 - p) * z.value - self.cost[dev],
            stderr: (1.0 - p) * z.stderr,
            method: z.method,
        }
    }

    /// Utility of everybody playing `base`.
    pub fn symmetric_payoff(&self, base: usize, p: f64) -> Result<Payoff> {
        Ok(self.combine(base, self.conforming(base)?, p))
    }

    /// `U(d | b)` for every `d`.
    pub fn payoffs_against(&self, base: usize, p: f64) -> Result<Vec<Payoff>> {
        Ok(self
            .row(base)?
            .iter()
            .enumerate()
            .map(|(d, z)| self.combine(d, *z, p))
            .collect())
    }
}

/// Margin below which two sampled payoffs are not distinguishable.
pub fn comparison_margin(a: &Payoff, b: &Payoff) -> f64 {
    MC_MARGIN_SIGMAS * (a.stderr * a.stderr + b.stderr * b.stderr).sqrt()
}
