//! Log-wealth path simulation, first upcrossings, and Monte Carlo experiments.
//!
//! Paths are simulated on the relative log scale `log X_t − log x`, so the
//! barrier is `log(ℓ/x)` and results are invariant under joint rescaling of
//! `x` and `ℓ`.

mod experiment;
mod ito;
mod levy;
pub mod passage;
pub mod rng;

pub use experiment::{
    ig_first_passage_oracle, overshoot_histogram, upcrossing_experiment, ExperimentReport, Histogram,
    MarketRef, RepOutcome,
};
pub use ito::simulate_ito_log_wealth;
pub use levy::simulate_levy_log_wealth;

use nalgebra::DVector;
use thiserror::Error;

use crate::growth_optimizer::GrowthError;

/// Default market-time budget, as a multiple of `log(ℓ/x)`.
pub const DEFAULT_BUDGET_FACTOR: f64 = 50.0;

/// Default calendar step for grid schemes.
pub const DEFAULT_DT: f64 = 1e-3;

/// Default cap on grid steps per path.
pub const DEFAULT_MAX_STEPS: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Exact: exponential inter-jump times with exact drifted-Brownian passage
    /// in between.
    Event,
    /// Euler steps of size `dt`; jumps take effect at the end of the step they
    /// fall in. Biased towards later crossings.
    Grid,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Event => "event",
            Scheme::Grid => "grid",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Numeraire,
    /// Constant proportions of wealth in each asset.
    Constant(DVector<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recording {
    /// Every grid step and every jump.
    Full,
    /// Start and terminal events only.
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub scheme: Scheme,
    pub dt: f64,
    /// Paths stop once market time reaches `budget_factor · log(ℓ/x)`.
    pub budget_factor: f64,
    pub max_steps: u64,
    pub recording: Recording,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Event,
            dt: DEFAULT_DT,
            budget_factor: DEFAULT_BUDGET_FACTOR,
            max_steps: DEFAULT_MAX_STEPS,
            recording: Recording::Sparse,
        }
    }
}

impl SimConfig {
    pub fn event() -> Self {
        Self::default()
    }

    pub fn grid(dt: f64) -> Self {
        Self {
            scheme: Scheme::Grid,
            dt,
            ..Self::default()
        }
    }

    pub fn full(mut self) -> Self {
        self.recording = Recording::Full;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Start,
    Step,
    Jump { atom: usize, log_return: f64 },
    /// Continuous hit of the barrier.
    Crossing,
    /// Last event of a path that stopped without crossing.
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEvent {
    pub t: f64,
    pub market_time: f64,
    /// `log X_t − log x`.
    pub log_growth: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalStatus {
    Crossed,
    BudgetExhausted,
    StepCapExhausted,
    /// Wealth hit zero through a jump.
    Ruined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub initial_wealth: f64,
    pub events: Vec<PathEvent>,
    pub status: TerminalStatus,
}

impl PathRecord {
    pub fn log_wealth(&self, event: &PathEvent) -> f64 {
        self.initial_wealth.ln() + event.log_growth
    }

    pub fn last(&self) -> &PathEvent {
        self.events.last().expect("paths always hold a start event")
    }
}

/// First upcrossing of a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Upcrossing {
    Reached {
        market_time: f64,
        tau: f64,
        overshoot: f64,
    },
    NotReached,
}

/// First event with `log X ≥ log ℓ`. Levels at or below the initial wealth
/// are reached at time zero.
pub fn first_upcrossing(path: &PathRecord, level: f64) -> Upcrossing {
    if level <= path.initial_wealth {
        return Upcrossing::Reached {
            market_time: 0.0,
            tau: 0.0,
            overshoot: 0.0,
        };
    }
    let barrier = (level / path.initial_wealth).ln();
    path.events
        .iter()
        .find(|e| e.log_growth >= barrier)
        .map_or(Upcrossing::NotReached, |e| Upcrossing::Reached {
            market_time: e.market_time,
            tau: e.t,
            overshoot: e.log_growth - barrier,
        })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("strategy violates the natural constraints")]
    Infeasible,
    #[error("strategy has dimension {found}, market has {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("grid step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("initial wealth and level must be positive (x = {x}, level = {level})")]
    InvalidWealth { x: f64, level: f64 },
    #[error("maximal growth rate must be positive and finite to run the market clock, got {0}")]
    NoMarketClock(f64),
    #[error("no numéraire portfolio at grid step {step}: cρ = a has no solution")]
    Unsolvable { step: u64 },
    #[error("replication count must be at least 1")]
    NoReplications,
    #[error(transparent)]
    Growth(#[from] GrowthError),
}

fn check_wealth(x: f64, level: f64) -> Result<(), SimError> {
    if !(x > 0.0 && level > 0.0 && x.is_finite() && level.is_finite()) {
        return Err(SimError::InvalidWealth { x, level });
    }
    Ok(())
}

fn check_dt(config: &SimConfig) -> Result<(), SimError> {
    if !(config.dt > 0.0 && config.dt.is_finite()) {
        return Err(SimError::NonPositiveDt(config.dt));
    }
    Ok(())
}

/// A trivial path for `ℓ ≤ x`: crossed at time zero.
fn already_there(x: f64) -> PathRecord {
    PathRecord {
        initial_wealth: x,
        events: vec![PathEvent {
            t: 0.0,
            market_time: 0.0,
            log_growth: 0.0,
            kind: EventKind::Start,
        }],
        status: TerminalStatus::Crossed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(points: &[(f64, f64)], g: f64) -> PathRecord {
        PathRecord {
            initial_wealth: 1.0,
            events: points
                .iter()
                .map(|&(t, l)| PathEvent {
                    t,
                    market_time: g * t,
                    log_growth: l,
                    kind: EventKind::Step,
                })
                .collect(),
            status: TerminalStatus::Crossed,
        }
    }

    #[test]
    fn level_below_start_is_immediate() {
        let p = path(&[(0.0, 0.0)], 0.1);
        assert_eq!(
            first_upcrossing(&p, 0.5),
            Upcrossing::Reached {
                market_time: 0.0,
                tau: 0.0,
                overshoot: 0.0
            }
        );
    }

    #[test]
    fn deterministic_growth_path() {
        // log X = g t, O = g t: T = log(ℓ/x)
        let g = 0.08;
        let level = 3.0_f64;
        let tau = level.ln() / g;
        let p = path(&[(0.0, 0.0), (tau / 2.0, level.ln() / 2.0), (tau, level.ln())], g);
        match first_upcrossing(&p, level) {
            Upcrossing::Reached {
                market_time,
                overshoot,
                ..
            } => {
                assert!((market_time - level.ln()).abs() < 1e-15);
                assert_eq!(overshoot, 0.0);
            }
            Upcrossing::NotReached => panic!("should cross"),
        }
    }

    #[test]
    fn capped_path_not_reached() {
        let p = path(&[(0.0, 0.0), (1.0, 0.5), (2.0, 0.9)], 1.0);
        assert_eq!(first_upcrossing(&p, 1.0_f64.exp()), Upcrossing::NotReached);
    }
}
