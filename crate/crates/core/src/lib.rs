//! Spot-checked peer prediction: signal models, the peer-prediction
//! mechanism zoo, spot-check rewards and equilibrium threshold solvers.

pub mod equilibrium;
pub mod error;
pub mod harness;
pub mod mechanism;
pub mod scoring;
pub mod signal;
pub mod spotcheck;
pub mod strategy;

pub use equilibrium::{EquilibriumRecord, Threshold, ThresholdReport};
pub use error::{Error, Result};
pub use mechanism::{EvalOptions, MechanismKind, MechanismSpec, Method, UtilityEstimate};
pub use scoring::ScoringRule;
pub use signal::{Channel, Distribution, Environment, LabelSpace, SignalKind};
pub use spotcheck::SpotGame;
pub use strategy::{BeliefMode, Effort, Strategy, StrategyProfile};
