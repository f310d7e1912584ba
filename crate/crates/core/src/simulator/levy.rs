use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::passage::{exponential_wait, passage_within, Passage};
use super::{
    already_there, check_dt, check_wealth, EventKind, PathEvent, PathRecord, Recording, Scheme, SimConfig,
    SimError, TerminalStatus,
};
use crate::growth_optimizer::GrowthSolution;
use crate::market_model::{in_constraint_set, LevyMarket};

/// Log-wealth dynamics of a constant-proportion portfolio in a Lévy market.
#[derive(Debug, Clone)]
pub(crate) struct LogWealthLaw {
    /// Drift between jumps: `⟨π,a⟩ − ½⟨π,cπ⟩ − Σ rate_k ⟨π,z_k⟩`.
    pub drift: f64,
    /// `⟨π,cπ⟩`.
    pub variance: f64,
    /// `log(1 + ⟨π,z_k⟩)`; `−∞` on the constraint boundary.
    pub jump_marks: Vec<f64>,
    pub rates: Vec<f64>,
    pub total_rate: f64,
}

impl LogWealthLaw {
    pub fn new(market: &LevyMarket, pi: &DVector<f64>) -> Result<Self, SimError> {
        if pi.len() != market.dim() {
            return Err(SimError::Dimension {
                expected: market.dim(),
                found: pi.len(),
            });
        }
        if !in_constraint_set(pi, &market.constraints()) {
            return Err(SimError::Infeasible);
        }
        let c = market.covariance();
        let mut drift = pi.dot(market.drift()) - 0.5 * pi.dot(&(c * pi));
        let mut jump_marks = Vec::with_capacity(market.atoms().len());
        for atom in market.atoms() {
            let j = pi.dot(&atom.z);
            drift -= atom.rate * j;
            jump_marks.push(if 1.0 + j <= 0.0 { f64::NEG_INFINITY } else { j.ln_1p() });
        }
        let rates: Vec<f64> = market.atoms().iter().map(|a| a.rate).collect();
        Ok(Self {
            drift,
            variance: pi.dot(&(c * pi)).max(0.0),
            total_rate: rates.iter().sum(),
            jump_marks,
            rates,
        })
    }

    /// Atom index chosen with probability proportional to its rate.
    fn pick_atom<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.total_rate;
        let mut acc = 0.0;
        for (k, r) in self.rates.iter().enumerate() {
            acc += r;
            if u < acc {
                return k;
            }
        }
        self.rates.len() - 1
    }
}

/// Simulates `log X_t − log x` for the constant-proportion portfolio `pi`
/// until it first reaches `log(ℓ/x)`, the market-time budget runs out, or
/// wealth is ruined. Market time runs at `solution.g_star`.
pub fn simulate_levy_log_wealth<R: Rng + ?Sized>(
    market: &LevyMarket,
    solution: &GrowthSolution,
    pi: &DVector<f64>,
    x: f64,
    level: f64,
    config: &SimConfig,
    rng: &mut R,
) -> Result<PathRecord, SimError> {
    check_wealth(x, level)?;
    if config.scheme == Scheme::Grid {
        check_dt(config)?;
    }
    let g_star = solution.g_star;
    if !(g_star > 0.0 && g_star.is_finite()) {
        return Err(SimError::NoMarketClock(g_star));
    }
    let law = LogWealthLaw::new(market, pi)?;
    if level <= x {
        return Ok(already_there(x));
    }
    let barrier = (level / x).ln();
    let horizon = config.budget_factor * barrier / g_star;
    Ok(match config.scheme {
        Scheme::Event => event_path(&law, g_star, x, barrier, horizon, config.recording, rng),
        Scheme::Grid => grid_path(&law, g_star, x, barrier, horizon, config, rng),
    })
}

fn start_event() -> PathEvent {
    PathEvent {
        t: 0.0,
        market_time: 0.0,
        log_growth: 0.0,
        kind: EventKind::Start,
    }
}

fn event_path<R: Rng + ?Sized>(
    law: &LogWealthLaw,
    g_star: f64,
    x: f64,
    barrier: f64,
    horizon: f64,
    recording: Recording,
    rng: &mut R,
) -> PathRecord {
    let mut events = vec![start_event()];
    let mut t = 0.0;
    let mut level = 0.0;
    let status = loop {
        let remaining = horizon - t;
        let wait = exponential_wait(law.total_rate, rng);
        let span = wait.min(remaining);
        match passage_within(law.drift, law.variance, barrier - level, span, rng) {
            Passage::Hit(u) => {
                t += u;
                events.push(PathEvent {
                    t,
                    market_time: g_star * t,
                    log_growth: barrier,
                    kind: EventKind::Crossing,
                });
                break TerminalStatus::Crossed;
            }
            Passage::Miss(y) => {
                t += span;
                level += y;
            }
        }
        if wait >= remaining {
            events.push(PathEvent {
                t,
                market_time: g_star * t,
                log_growth: level,
                kind: EventKind::Stop,
            });
            break TerminalStatus::BudgetExhausted;
        }
        let atom = law.pick_atom(rng);
        let log_return = law.jump_marks[atom];
        level += log_return;
        let ev = PathEvent {
            t,
            market_time: g_star * t,
            log_growth: level,
            kind: EventKind::Jump { atom, log_return },
        };
        if log_return == f64::NEG_INFINITY {
            events.push(ev);
            break TerminalStatus::Ruined;
        }
        if level >= barrier {
            events.push(ev);
            break TerminalStatus::Crossed;
        }
        if recording == Recording::Full {
            events.push(ev);
        }
    };
    PathRecord {
        initial_wealth: x,
        events,
        status,
    }
}

fn grid_path<R: Rng + ?Sized>(
    law: &LogWealthLaw,
    g_star: f64,
    x: f64,
    barrier: f64,
    horizon: f64,
    config: &SimConfig,
    rng: &mut R,
) -> PathRecord {
    let dt = config.dt;
    let step_drift = law.drift * dt;
    let step_sd = (law.variance * dt).sqrt();
    let mut events = vec![start_event()];
    let mut next_jump = exponential_wait(law.total_rate, rng);
    let mut level = 0.0;
    let mut n: u64 = 0;
    let status = loop {
        n += 1;
        let t = n as f64 * dt;
        level += step_drift;
        if step_sd > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            level += step_sd * z;
        }
        let mut kind = EventKind::Step;
        let mut ruined = false;
        while next_jump <= t {
            let atom = law.pick_atom(rng);
            let log_return = law.jump_marks[atom];
            level += log_return;
            kind = EventKind::Jump { atom, log_return };
            next_jump += exponential_wait(law.total_rate, rng);
            if log_return == f64::NEG_INFINITY {
                ruined = true;
                break;
            }
        }
        let ev = PathEvent {
            t,
            market_time: g_star * t,
            log_growth: level,
            kind,
        };
        let status = if ruined {
            Some(TerminalStatus::Ruined)
        } else if level >= barrier {
            Some(TerminalStatus::Crossed)
        } else if t >= horizon {
            Some(TerminalStatus::BudgetExhausted)
        } else if n >= config.max_steps {
            Some(TerminalStatus::StepCapExhausted)
        } else {
            None
        };
        if let Some(s) = status {
            let kind = if s == TerminalStatus::Crossed || kind != EventKind::Step {
                kind
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
    PathRecord {
        initial_wealth: x,
        events,
        status,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth_optimizer::{solve_market, SolverOptions};
    use crate::market_model::{validate_levy, JumpAtom, LevyMarketSpec};
    use crate::simulator::rng::replication_stream;
    use crate::simulator::{first_upcrossing, Upcrossing};

    fn j1() -> LevyMarket {
        validate_levy(LevyMarketSpec::with_covariance(
            vec![0.1],
            &[vec![0.0]],
            vec![JumpAtom::new(vec![-0.5], 0.1)],
        ))
        .unwrap()
    }

    fn bs1() -> LevyMarket {
        validate_levy(LevyMarketSpec::with_covariance(vec![0.08], &[vec![0.04]], vec![])).unwrap()
    }

    #[test]
    fn j1_numeraire_dynamics() {
        let m = j1();
        let sol = solve_market(&m, SolverOptions::default()).unwrap();
        let law = LogWealthLaw::new(&m, &sol.rho).unwrap();
        assert!((law.drift - 0.2).abs() < 1e-12);
        assert_eq!(law.variance, 0.0);
        assert!((law.jump_marks[0] - (1.0_f64 / 3.0).ln()).abs() < 1e-10);

        let mut rng = replication_stream(11, 0);
        let path = simulate_levy_log_wealth(
            &m,
            &sol,
            &sol.rho,
            1.0,
            1e4,
            &SimConfig::event().full(),
            &mut rng,
        )
        .unwrap();
        let mut jumps = 0;
        for w in path.events.windows(2) {
            let (prev, cur) = (w[0], w[1]);
            assert!(cur.t > prev.t);
            let continuous = prev.log_growth + 0.2 * (cur.t - prev.t);
            match cur.kind {
                EventKind::Jump { log_return, .. } => {
                    jumps += 1;
                    assert!((cur.log_growth - continuous - log_return).abs() < 1e-9);
                    assert!((log_return + 3.0_f64.ln()).abs() < 1e-10);
                }
                _ => assert!((cur.log_growth - continuous).abs() < 1e-9),
            }
        }
        assert!(jumps > 0);
        assert_eq!(path.status, TerminalStatus::Crossed);
    }

    #[test]
    fn same_seed_same_path() {
        let m = j1();
        let sol = solve_market(&m, SolverOptions::default()).unwrap();
        for cfg in [SimConfig::event().full(), SimConfig::grid(1e-2).full()] {
            let run = || {
                let mut rng = replication_stream(5, 9);
                simulate_levy_log_wealth(&m, &sol, &sol.rho, 1.0, 20.0, &cfg, &mut rng).unwrap()
            };
            let (a, b) = (run(), run());
            assert_eq!(a, b);
            let bits = |p: &PathRecord| -> Vec<u64> {
                p.events.iter().flat_map(|e| [e.t.to_bits(), e.log_growth.to_bits()]).collect()
            };
            assert_eq!(bits(&a), bits(&b));
        }
    }

    #[test]
    fn bs1_long_run_growth_rate() {
        // increments of log X over a long horizon average to g(ρ) = 0.08
        let m = bs1();
        let sol = solve_market(&m, SolverOptions::default()).unwrap();
        let cfg = SimConfig {
            budget_factor: 1e9,
            ..SimConfig::grid(0.01)
        };
        let horizon = 2000.0;
        let mut rates = Vec::new();
        for rep in 0..50 {
            let mut rng = replication_stream(12, rep);
            let cfg = SimConfig {
                max_steps: (horizon / cfg.dt) as u64,
                ..cfg
            };
            let p = simulate_levy_log_wealth(&m, &sol, &sol.rho, 1.0, f64::MAX, &cfg, &mut rng).unwrap();
            assert_eq!(p.status, TerminalStatus::StepCapExhausted);
            rates.push(p.last().log_growth / p.last().t);
        }
        let n = rates.len() as f64;
        let mean = rates.iter().sum::<f64>() / n;
        let sd = (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - 0.08).abs() < 3.0 * sd / n.sqrt(), "{mean} ± {}", sd / n.sqrt());
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = j1();
        let sol = solve_market(&m, SolverOptions::default()).unwrap();
        let mut rng = replication_stream(0, 0);
        let bad_pi = DVector::from_vec(vec![2.5]);
        assert_eq!(
            simulate_levy_log_wealth(&m, &sol, &bad_pi, 1.0, 2.0, &SimConfig::event(), &mut rng),
            Err(SimError::Infeasible)
        );
        assert_eq!(
            simulate_levy_log_wealth(&m, &sol, &sol.rho, 1.0, 2.0, &SimConfig::grid(0.0), &mut rng),
            Err(SimError::NonPositiveDt(0.0))
        );
    }

    #[test]
    fn boundary_strategy_can_be_ruined() {
        let m = j1();
        let sol = solve_market(&m, SolverOptions::default()).unwrap();
        let pi = DVector::from_vec(vec![2.0]);
        let mut rng = replication_stream(3, 0);
        let p = simulate_levy_log_wealth(&m, &sol, &pi, 1.0, 1e6, &SimConfig::event(), &mut rng).unwrap();
        assert_eq!(p.status, TerminalStatus::Ruined);
        assert_eq!(first_upcrossing(&p, 1e6), Upcrossing::NotReached);
    }

    #[test]
    fn zero_strategy_exhausts_budget() {
        let m = bs1();
        let sol = solve_market(&m, SolverOptions::default()).unwrap();
        let pi = DVector::from_vec(vec![0.0]);
        let mut rng = replication_stream(3, 0);
        let p = simulate_levy_log_wealth(&m, &sol, &pi, 1.0, 2.0, &SimConfig::event(), &mut rng).unwrap();
        assert_eq!(p.status, TerminalStatus::BudgetExhausted);
        assert!((p.last().market_time - 50.0 * 2.0_f64.ln()).abs() < 1e-9);
    }
}
