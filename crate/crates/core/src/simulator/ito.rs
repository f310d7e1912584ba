use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{
    already_there, check_dt, check_wealth, EventKind, PathEvent, PathRecord, Recording, SimConfig, SimError,
    Strategy, TerminalStatus,
};
use crate::growth_optimizer::{risk_premium, RiskPremium, TOL_RANK};
use crate::market_model::{CoefficientModel, ItoMarket};

/// Step-function coefficients on the calendar grid `t_n = n·dt`.
struct CoefficientStream<'a> {
    model: &'a CoefficientModel,
    dt: f64,
    a: DVector<f64>,
    sigma: DMatrix<f64>,
    piece: usize,
    factor: f64,
}

impl<'a> CoefficientStream<'a> {
    fn new(market: &'a ItoMarket, dt: f64) -> Self {
        let (a, sigma) = market.initial_coefficients();
        let factor = match market.model() {
            CoefficientModel::StochasticVolatility { initial_factor, .. } => *initial_factor,
            _ => 0.0,
        };
        Self {
            model: market.model(),
            dt,
            a,
            sigma,
            piece: 0,
            factor,
        }
    }

    /// Moves to `t_{n+1}`; returns whether the coefficients changed.
    fn advance<R: Rng + ?Sized>(&mut self, t_next: f64, rng: &mut R) -> bool {
        match self.model {
            CoefficientModel::Constant { .. } => false,
            CoefficientModel::Schedule { pieces } => {
                let mut changed = false;
                while self.piece + 1 < pieces.len() && pieces[self.piece + 1].start <= t_next {
                    self.piece += 1;
                    changed = true;
                }
                if changed {
                    self.a.copy_from(&pieces[self.piece].a);
                    self.sigma.copy_from(&pieces[self.piece].sigma);
                }
                changed
            }
            CoefficientModel::StochasticVolatility {
                sigma,
                mean_reversion,
                vol_of_vol,
                ..
            } => {
                if *vol_of_vol == 0.0 && *mean_reversion == 0.0 {
                    return false;
                }
                // exact Ornstein–Uhlenbeck transition
                let decay = (-mean_reversion * self.dt).exp();
                let sd = if *mean_reversion > 0.0 {
                    vol_of_vol * ((1.0 - decay * decay) / (2.0 * mean_reversion)).sqrt()
                } else {
                    vol_of_vol * self.dt.sqrt()
                };
                let z: f64 = rng.sample(StandardNormal);
                self.factor = self.factor * decay + sd * z;
                self.sigma = sigma * self.factor.exp();
                true
            }
        }
    }
}

/// Per-step quantities for the strategy being simulated.
struct StepLaw {
    drift: f64,
    /// Exposure to each Brownian coordinate.
    loading: DVector<f64>,
}

fn step_law(strategy: &Strategy, rp: &RiskPremium, a: &DVector<f64>, sigma: &DMatrix<f64>) -> StepLaw {
    match strategy {
        Strategy::Numeraire => StepLaw {
            drift: rp.growth(),
            loading: rp.lambda.clone(),
        },
        Strategy::Constant(pi) => {
            let loading = sigma.tr_mul(pi);
            StepLaw {
                drift: pi.dot(a) - 0.5 * loading.norm_squared(),
                loading,
            }
        }
    }
}

/// Euler scheme for `log X_t − log x` in an Itô market; market time
/// accumulates `½|λ_t|²` by the trapezoid rule.
pub fn simulate_ito_log_wealth<R: Rng + ?Sized>(
    market: &ItoMarket,
    strategy: &Strategy,
    x: f64,
    level: f64,
    config: &SimConfig,
    rng: &mut R,
) -> Result<PathRecord, SimError> {
    check_wealth(x, level)?;
    check_dt(config)?;
    if let Strategy::Constant(pi) = strategy {
        if pi.len() != market.dim() {
            return Err(SimError::Dimension {
                expected: market.dim(),
                found: pi.len(),
            });
        }
    }
    let dt = config.dt;
    let mut coeffs = CoefficientStream::new(market, dt);
    let mut rp = risk_premium(&coeffs.a, &coeffs.sigma, TOL_RANK);
    if !rp.solvable {
        return Err(SimError::Unsolvable { step: 0 });
    }
    if level <= x {
        return Ok(already_there(x));
    }
    let barrier = (level / x).ln();
    let budget = config.budget_factor * barrier;
    let mut law = step_law(strategy, &rp, &coeffs.a, &coeffs.sigma);
    let sqrt_dt = dt.sqrt();
    let m = market.brownian_dim();
    let mut noise = DVector::zeros(m);

    let mut events = vec![PathEvent {
        t: 0.0,
        market_time: 0.0,
        log_growth: 0.0,
        kind: EventKind::Start,
    }];
    let mut level_now = 0.0;
    let mut clock = 0.0;
    let mut n: u64 = 0;
    let status = loop {
        for w in noise.iter_mut() {
            *w = rng.sample::<f64, _>(StandardNormal) * sqrt_dt;
        }
        level_now += law.drift * dt + law.loading.dot(&noise);
        let growth_before = rp.growth();
        n += 1;
        let t = n as f64 * dt;
        if coeffs.advance(t, rng) {
            rp = risk_premium(&coeffs.a, &coeffs.sigma, TOL_RANK);
            if !rp.solvable {
                return Err(SimError::Unsolvable { step: n });
            }
            law = step_law(strategy, &rp, &coeffs.a, &coeffs.sigma);
        }
        clock += 0.5 * (growth_before + rp.growth()) * dt;
        let ev = PathEvent {
            t,
            market_time: clock,
            log_growth: level_now,
            kind: EventKind::Step,
        };
        let status = if level_now >= barrier {
            Some(TerminalStatus::Crossed)
        } else if clock >= budget {
            Some(TerminalStatus::BudgetExhausted)
        } else if n >= config.max_steps {
            Some(TerminalStatus::StepCapExhausted)
        } else {
            None
        };
        if let Some(s) = status {
            let kind = if s == TerminalStatus::Crossed {
                EventKind::Step
            } else {
                EventKind::Stop
            };
            events.push(PathEvent { kind, ..ev });
            break s;
        }
        if config.recording == Recording::Full {
            events.push(ev);
        }
    };
    Ok(PathRecord {
        initial_wealth: x,
        events,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_model::{validate_ito, ItoMarketSpec, SchedulePiece};
    use crate::simulator::rng::replication_stream;

    fn constant(a: f64, s: f64) -> ItoMarket {
        validate_ito(ItoMarketSpec {
            d: 1,
            m: 1,
            model: CoefficientModel::Constant {
                a: DVector::from_vec(vec![a]),
                sigma: DMatrix::from_element(1, 1, s),
            },
        })
        .unwrap()
    }

    #[test]
    fn constant_coefficients_clock_is_linear() {
        let m = constant(0.08, 0.2);
        let cfg = SimConfig {
            max_steps: 5000,
            ..SimConfig::grid(1e-3).full()
        };
        let mut rng = replication_stream(1, 0);
        let p = simulate_ito_log_wealth(&m, &Strategy::Numeraire, 1.0, 1e9, &cfg, &mut rng).unwrap();
        for e in &p.events {
            assert!((e.market_time - 0.5 * 0.16 * e.t).abs() < 1e-12);
        }
        assert_eq!(p.status, TerminalStatus::StepCapExhausted);
    }

    #[test]
    fn zero_premium_never_moves() {
        let m = constant(0.0, 0.2);
        let cfg = SimConfig {
            max_steps: 2000,
            ..SimConfig::grid(1e-3).full()
        };
        let mut rng = replication_stream(2, 0);
        let p = simulate_ito_log_wealth(&m, &Strategy::Numeraire, 1.0, 2.0, &cfg, &mut rng).unwrap();
        assert!(p.events.iter().all(|e| e.log_growth == 0.0 && e.market_time == 0.0));
        assert_eq!(p.status, TerminalStatus::StepCapExhausted);
    }

    #[test]
    fn stochastic_volatility_clock_is_monotone() {
        let m = validate_ito(ItoMarketSpec {
            d: 1,
            m: 1,
            model: CoefficientModel::StochasticVolatility {
                a: DVector::from_vec(vec![0.1]),
                sigma: DMatrix::from_element(1, 1, 0.25),
                mean_reversion: 2.0,
                vol_of_vol: 0.8,
                initial_factor: 0.0,
            },
        })
        .unwrap();
        let cfg = SimConfig {
            max_steps: 20_000,
            ..SimConfig::grid(1e-3).full()
        };
        let mut rng = replication_stream(3, 0);
        let p = simulate_ito_log_wealth(&m, &Strategy::Numeraire, 1.0, 1e9, &cfg, &mut rng).unwrap();
        let mut max_jump: f64 = 0.0;
        for w in p.events.windows(2) {
            assert!(w[1].market_time >= w[0].market_time);
            max_jump = max_jump.max(w[1].market_time - w[0].market_time);
        }
        // increments are O(dt): no discontinuities at grid resolution
        assert!(max_jump < 1e-2);
    }

    #[test]
    fn schedule_switches_pieces() {
        let m = validate_ito(ItoMarketSpec {
            d: 1,
            m: 1,
            model: CoefficientModel::Schedule {
                pieces: vec![
                    SchedulePiece {
                        start: 0.0,
                        a: DVector::from_vec(vec![0.08]),
                        sigma: DMatrix::from_element(1, 1, 0.2),
                    },
                    SchedulePiece {
                        start: 1.0,
                        a: DVector::from_vec(vec![0.0]),
                        sigma: DMatrix::from_element(1, 1, 0.2),
                    },
                ],
            },
        })
        .unwrap();
        let cfg = SimConfig {
            max_steps: 3000,
            ..SimConfig::grid(1e-3).full()
        };
        let mut rng = replication_stream(4, 0);
        let p = simulate_ito_log_wealth(&m, &Strategy::Numeraire, 1.0, 1e9, &cfg, &mut rng).unwrap();
        // ∫ ½|λ|² = 0.08 on [0,1], half a step of trapezoid at the switch, then flat
        let last = p.last();
        assert!((last.market_time - 0.08 + 0.5 * 0.08 * 1e-3).abs() < 1e-9, "{}", last.market_time);
    }

    #[test]
    fn unsolvable_premium_aborts() {
        let m = validate_ito(ItoMarketSpec {
            d: 1,
            m: 1,
            model: CoefficientModel::Constant {
                a: DVector::from_vec(vec![0.1]),
                sigma: DMatrix::from_element(1, 1, 0.0),
            },
        })
        .unwrap();
        let mut rng = replication_stream(5, 0);
        let err = simulate_ito_log_wealth(&m, &Strategy::Numeraire, 1.0, 2.0, &SimConfig::grid(1e-3), &mut rng)
            .unwrap_err();
        assert_eq!(err, SimError::Unsolvable { step: 0 });
    }
}
