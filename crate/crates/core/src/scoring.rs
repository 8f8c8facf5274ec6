//! Proper scoring rules for categorical beliefs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Distribution, LabelSpace};

/// Utility assigned when a score is undefined, e.g. the log of zero.
pub const UNDEFINED_SCORE: f64 = -1e9;

pub trait ProperScoringRule {
    fn score(&self, belief: &Distribution, outcome: usize) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoringRule {
    #[serde(rename = "quadratic")]
    Quadratic,
    #[serde(rename = "log")]
    Logarithmic,
}

impl ScoringRule {
    pub fn name(self) -> &'static str {
        match self {
            ScoringRule::Quadratic => "quadratic",
            ScoringRule::Logarithmic => "log",
        }
    }
}

impl ProperScoringRule for ScoringRule {
    fn score(&self, belief: &Distribution, outcome: usize) -> Result<f64> {
        if outcome >= belief.len() {
            return Err(Error::LabelOutOfRange(outcome));
        }
        match self {
            ScoringRule::Quadratic => {
                let sq: f64 = belief.probs().iter().map(|b| b * b).sum();
                Ok(2.0 * belief.prob(outcome) - sq)
            }
            ScoringRule::Logarithmic => {
                let b = belief.prob(outcome);
                if b <= 0.0 {
                    Err(Error::LogOfZero)
                } else {
                    Ok(b.ln())
                }
            }
        }
    }
}

pub fn score(rule: ScoringRule, belief: &Distribution, outcome: usize) -> Result<f64> {
    rule.score(belief, outcome)
}

/// `E_{s ~ b1}[R(b1, s) - R(b2, s)]`. Outcomes outside the support of `b1`
/// carry no weight and are not scored.
pub fn divergence<R: ProperScoringRule + ?Sized>(
    rule: &R,
    b1: &Distribution,
    b2: &Distribution,
) -> Result<f64> {
    if b1.len() != b2.len() {
        return Err(Error::ShapeMismatch(format!(
            "divergence between beliefs of sizes {} and {}",
            b1.len(),
            b2.len()
        )));
    }
    let mut d = 0.0;
    for s in 0..b1.len() {
        let w = b1.prob(s);
        if w == 0.0 {
            continue;
        }
        d += w * (rule.score(b1, s)? - rule.score(b2, s)?);
    }
    Ok(d)
}

/// Expected score of reporting `report` when outcomes follow `truth`.
pub fn expected_score<R: ProperScoringRule + ?Sized>(
    rule: &R,
    truth: &Distribution,
    report: &Distribution,
) -> Result<f64> {
    let mut e = 0.0;
    for s in 0..truth.len() {
        let w = truth.prob(s);
        if w > 0.0 {
            e += w * rule.score(report, s)?;
        }
    }
    Ok(e)
}

/// True iff a correct point-mass prediction scores the same on every label.
pub fn check_symmetry<R: ProperScoringRule + ?Sized>(rule: &R, labels: &LabelSpace) -> bool {
    let k = labels.len();
    let mut first = None;
    for s in 0..k {
        let v = match rule.score(&Distribution::point_mass(k, s), s) {
            Ok(v) => v,
            Err(_) => return false,
        };
        match first {
            None => first = Some(v),
            Some(f) if (v - f).abs() > 1e-12 => return false,
            _ => {}
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(v: &[f64]) -> Distribution {
        Distribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn quadratic_values() {
        let q = ScoringRule::Quadratic;
        assert_eq!(q.score(&Distribution::point_mass(3, 2), 2).unwrap(), 1.0);
        assert!((q.score(&d(&[0.7, 0.3]), 0).unwrap() - 0.82).abs() < 1e-12);
    }

    #[test]
    fn log_values() {
        let l = ScoringRule::Logarithmic;
        assert_eq!(l.score(&Distribution::point_mass(2, 0), 0).unwrap(), 0.0);
        assert_eq!(
            l.score(&Distribution::point_mass(2, 0), 1),
            Err(Error::LogOfZero)
        );
    }

    #[test]
    fn divergence_values() {
        let q = ScoringRule::Quadratic;
        let a = d(&[1.0, 0.0]);
        let b = d(&[0.0, 1.0]);
        assert!((divergence(&q, &a, &b).unwrap() - 2.0).abs() < 1e-12);
        let kl = divergence(
            &ScoringRule::Logarithmic,
            &d(&[0.5, 0.5]),
            &d(&[0.25, 0.75]),
        )
        .unwrap();
        let want = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((kl - want).abs() < 1e-12);
        assert!((kl - 0.14384).abs() < 1e-5);
        assert_eq!(divergence(&q, &a, &a).unwrap(), 0.0);
        assert_eq!(
            divergence(&ScoringRule::Logarithmic, &a, &b),
            Err(Error::LogOfZero)
        );
    }

    struct Skewed;
    impl ProperScoringRule for Skewed {
        fn score(&self, belief: &Distribution, outcome: usize) -> Result<f64> {
            Ok(ScoringRule::Quadratic.score(belief, outcome)? + outcome as f64)
        }
    }

    #[test]
    fn symmetry() {
        let l = LabelSpace::indexed(4).unwrap();
        assert!(check_symmetry(&ScoringRule::Quadratic, &l));
        assert!(check_symmetry(&ScoringRule::Logarithmic, &l));
        assert!(!check_symmetry(&Skewed, &l));
    }

    #[test]
    fn config_names() {
        let r: ScoringRule = serde_json::from_str("\"log\"").unwrap();
        assert_eq!(r, ScoringRule::Logarithmic);
        assert!(serde_json::from_str::<ScoringRule>("\"brier\"").is_err());
    }

    fn simplex(n: usize) -> impl Strategy<Value = Distribution> {
        proptest::collection::vec(0.01f64..1.0, n)
            .prop_map(|w| Distribution::from_weights(w).unwrap())
    }

    proptest! {
        #[test]
        fn quadratic_divergence_is_squared_distance(a in simplex(4), b in simplex(4)) {
            let dv = divergence(&ScoringRule::Quadratic, &a, &b).unwrap();
            let sq: f64 = a.probs().iter().zip(b.probs()).map(|(x, y)| (x - y) * (x - y)).sum();
            prop_assert!((dv - sq).abs() < 1e-12);
        }

        #[test]
        fn divergences_nonnegative(a in simplex(3), b in simplex(3)) {
            for rule in [ScoringRule::Quadratic, ScoringRule::Logarithmic] {
                prop_assert!(divergence(&rule, &a, &b).unwrap() >= -1e-12);
            }
        }
    }
}
