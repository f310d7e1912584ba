use log::warn;
use rand::Rng;
use rand_distr::{Distribution, InverseGaussian};
use rayon::prelude::*;

use super::rng::replication_stream;
use super::{
    first_upcrossing, simulate_ito_log_wealth, simulate_levy_log_wealth, Recording, Scheme, SimConfig, SimError,
    Strategy, TerminalStatus, Upcrossing,
};
use crate::growth_optimizer::GrowthSolution;
use crate::market_model::{ItoMarket, LevyMarket};

/// What to simulate: a Lévy market with its solved numéraire, or an Itô market.
#[derive(Debug, Clone, Copy)]
pub enum MarketRef<'a> {
    Levy {
        market: &'a LevyMarket,
        solution: &'a GrowthSolution,
    },
    Ito(&'a ItoMarket),
}

impl MarketRef<'_> {
    /// The overshoot constant `α` of the numéraire (zero for continuous markets).
    pub fn alpha(&self) -> f64 {
        match self {
            MarketRef::Levy { solution, .. } => solution.alpha,
            MarketRef::Ito(_) => 0.0,
        }
    }
}

/// One replication's row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepOutcome {
    pub rep: u64,
    /// Calendar time at the crossing, or where the path stopped.
    pub tau: f64,
    /// Market time at the crossing, or where the path stopped.
    pub market_time: f64,
    /// `log X_τ − log ℓ`, present only when reached.
    pub overshoot: Option<f64>,
    pub reached: bool,
    pub status: TerminalStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub reps: u64,
    pub reached: u64,
    pub reached_fraction: f64,
    /// Mean market time over reached replications.
    pub mean_t: f64,
    pub stderr_t: f64,
    pub mean_tau: f64,
    pub overshoot_samples: Vec<f64>,
    pub histogram: Histogram,
    pub scheme: Scheme,
    pub seed: u64,
    pub outcomes: Vec<RepOutcome>,
}

impl ExperimentReport {
    /// Market times of the reached replications, in replication order.
    pub fn market_times(&self) -> Vec<f64> {
        self.outcomes
            .iter()
            .filter(|o| o.reached)
            .map(|o| o.market_time)
            .collect()
    }
}

/// Counts of `samples` in bins `[k·w, (k+1)·w)`.
pub fn overshoot_histogram(samples: &[f64], bin_width: f64) -> Histogram {
    let mut counts = Vec::new();
    if bin_width > 0.0 {
        for &s in samples {
            let k = (s / bin_width).floor().max(0.0) as usize;
            if counts.len() <= k {
                counts.resize(k + 1, 0);
            }
            counts[k] += 1;
        }
    }
    Histogram { bin_width, counts }
}

fn run_one(
    target: MarketRef<'_>,
    strategy: &Strategy,
    x: f64,
    level: f64,
    config: &SimConfig,
    master_seed: u64,
    rep: u64,
) -> Result<RepOutcome, SimError> {
    let mut rng = replication_stream(master_seed, rep);
    let path = match target {
        MarketRef::Levy { market, solution } => {
            let pi = match strategy {
                Strategy::Numeraire => &solution.rho,
                Strategy::Constant(pi) => pi,
            };
            simulate_levy_log_wealth(market, solution, pi, x, level, config, &mut rng)?
        }
        MarketRef::Ito(market) => simulate_ito_log_wealth(market, strategy, x, level, config, &mut rng)?,
    };
    Ok(match first_upcrossing(&path, level) {
        Upcrossing::Reached {
            market_time,
            tau,
            overshoot,
        } => RepOutcome {
            rep,
            tau,
            market_time,
            overshoot: Some(overshoot),
            reached: true,
            status: TerminalStatus::Crossed,
        },
        Upcrossing::NotReached => {
            let last = path.last();
            RepOutcome {
                rep,
                tau: last.t,
                market_time: last.market_time,
                overshoot: None,
                reached: false,
                status: path.status,
            }
        }
    })
}

/// Runs `reps` independent first-upcrossing replications in parallel.
///
/// Replication `k` draws from the stream keyed by `(master_seed, k)` and the
/// summary is reduced in replication order, so the report does not depend on
/// the size of the thread pool. Truncated replications are excluded from the
/// means and show up in `reached_fraction`.
pub fn upcrossing_experiment(
    target: MarketRef<'_>,
    strategy: &Strategy,
    x: f64,
    level: f64,
    reps: u64,
    config: &SimConfig,
    master_seed: u64,
) -> Result<ExperimentReport, SimError> {
    if reps == 0 {
        return Err(SimError::NoReplications);
    }
    let config = SimConfig {
        recording: Recording::Sparse,
        ..*config
    };
    let outcomes = (0..reps)
        .into_par_iter()
        .map(|rep| run_one(target, strategy, x, level, &config, master_seed, rep))
        .collect::<Result<Vec<_>, _>>()?;

    let reached: Vec<&RepOutcome> = outcomes.iter().filter(|o| o.reached).collect();
    let n = reached.len() as f64;
    let (mean_t, stderr_t, mean_tau) = if reached.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let mean_t = reached.iter().map(|o| o.market_time).sum::<f64>() / n;
        let mean_tau = reached.iter().map(|o| o.tau).sum::<f64>() / n;
        let var = if reached.len() > 1 {
            reached.iter().map(|o| (o.market_time - mean_t).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (mean_t, (var / n).sqrt(), mean_tau)
    };
    if reached.len() as u64 != reps {
        warn!(
            "{} of {} replications stopped before reaching the level; they are excluded from the mean",
            reps - reached.len() as u64,
            reps
        );
    }
    let overshoot_samples: Vec<f64> = reached.iter().filter_map(|o| o.overshoot).collect();
    let alpha = target.alpha();
    let bin_width = if alpha > 0.0 {
        alpha.ln_1p() / 50.0
    } else {
        overshoot_samples.iter().copied().fold(0.0, f64::max) / 50.0
    };
    Ok(ExperimentReport {
        reps,
        reached: reached.len() as u64,
        reached_fraction: n / reps as f64,
        mean_t,
        stderr_t,
        mean_tau,
        histogram: overshoot_histogram(&overshoot_samples, bin_width),
        overshoot_samples,
        scheme: config.scheme,
        seed: master_seed,
        outcomes,
    })
}

/// Exact market-time first passage for a continuous market: in market time,
/// `log X̂ − log x` is a Brownian motion with drift 1 and variance 2, so the
/// passage time to `barrier` is inverse Gaussian with mean `barrier` and
/// shape `barrier²/2`.
pub fn ig_first_passage_oracle<R: Rng + ?Sized>(barrier: f64, reps: usize, rng: &mut R) -> Vec<f64> {
    if barrier <= 0.0 {
        return vec![0.0; reps];
    }
    let ig = InverseGaussian::new(barrier, barrier * barrier / 2.0).expect("positive parameters");
    (0..reps).map(|_| ig.sample(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth_optimizer::{solve_market, SolverOptions};
    use crate::market_model::{validate_levy, JumpAtom, LevyMarketSpec};

    #[test]
    fn oracle_moments() {
        let mut rng = replication_stream(99, 0);
        assert!(ig_first_passage_oracle(0.0, 10, &mut rng).iter().all(|&t| t == 0.0));
        let xs = ig_first_passage_oracle(1.0, 200_000, &mut rng);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 1.0).abs() < 3.0 * (var / n).sqrt());
        assert!((var - 2.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn histogram_bins() {
        let h = overshoot_histogram(&[0.0, 0.05, 0.1, 0.25], 0.1);
        assert_eq!(h.counts, vec![2, 1, 1]);
        assert!(overshoot_histogram(&[0.0], 0.0).counts.is_empty());
    }

    #[test]
    fn scale_invariance_of_samples() {
        let m = validate_levy(LevyMarketSpec::with_covariance(
            vec![0.05],
            &[vec![0.01]],
            vec![JumpAtom::new(vec![0.25], 0.2)],
        ))
        .unwrap();
        let sol = solve_market(&m, SolverOptions::default()).unwrap();
        let target = MarketRef::Levy {
            market: &m,
            solution: &sol,
        };
        let run = |x: f64, l: f64, cfg: &SimConfig| {
            upcrossing_experiment(target, &Strategy::Numeraire, x, l, 200, cfg, 17).unwrap()
        };
        for cfg in [SimConfig::event(), SimConfig::grid(1e-2)] {
            let base = run(1.0, 7.5, &cfg);
            for u in [0.125, 2.0, 1024.0] {
                let scaled = run(u, 7.5 * u, &cfg);
                assert_eq!(base.market_times(), scaled.market_times());
            }
        }
    }

    #[test]
    fn zero_replications_rejected() {
        let m = validate_levy(LevyMarketSpec::with_covariance(vec![0.08], &[vec![0.04]], vec![])).unwrap();
        let sol = solve_market(&m, SolverOptions::default()).unwrap();
        let target = MarketRef::Levy {
            market: &m,
            solution: &sol,
        };
        assert_eq!(
            upcrossing_experiment(target, &Strategy::Numeraire, 1.0, 2.0, 0, &SimConfig::event(), 1),
            Err(SimError::NoReplications)
        );
    }
}
