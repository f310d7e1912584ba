//! Growth-optimal (numéraire) portfolios and the market-time clock.
//!
//! * [`market_model`]: Lévy and Itô market specifications and the natural
//!   constraints on portfolio proportions.
//! * [`growth_optimizer`]: the growth rate, its maximizer, the viability gate,
//!   and the Itô risk premium.
//! * [`simulator`]: log-wealth paths, first upcrossings and parallel,
//!   seed-deterministic Monte Carlo.
//! * [`analytics`]: bounds on the expected market time to reach a level and
//!   the studies that check estimates against them.

pub mod analytics;
pub mod growth_optimizer;
pub mod linalg;
pub mod market_model;
pub mod simulator;

pub use analytics::{check_estimate, theoretical_bounds, BoundReport, Verdict};
pub use growth_optimizer::{solve_market, GrowthSolution, MarketVerdict, SolverOptions};
pub use market_model::{validate_spec, JumpAtom, LevyMarket, LevyMarketSpec, Market, MarketSpec};
pub use simulator::{upcrossing_experiment, ExperimentReport, MarketRef, Scheme, SimConfig, Strategy};
