//! Value-function bounds on the expected market time to reach a level, and
//! studies that hold Monte Carlo estimates against them.

use nalgebra::DVector;
use thiserror::Error;

use crate::growth_optimizer::growth_rate;
use crate::market_model::in_constraint_set;
use crate::simulator::{upcrossing_experiment, ExperimentReport, MarketRef, SimConfig, SimError, Strategy};

pub const DEFAULT_K_SIGMA: f64 = 3.0;

/// Minimum reached fraction for an estimate to be checked against the bounds.
pub const MIN_REACHED_FRACTION: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("wealth levels must be positive (x = {x}, level = {level})")]
    NonPositiveWealth { x: f64, level: f64 },
    #[error("overshoot constant must be nonnegative, got {0}")]
    NegativeAlpha(f64),
    #[error("only {fraction} of replications reached the level; at least {required} is needed")]
    InsufficientReached { fraction: f64, required: f64 },
    #[error("no levels given")]
    NoLevels,
    #[error("plug-in estimate of E[log(1+α)] diverges ({0})")]
    DivergentPlugIn(String),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaSource {
    /// The deterministic `α` of a Lévy market.
    Constant,
    /// Sample mean of per-path `log(1 + α)`.
    SampleBased,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub x: f64,
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha_used: f64,
    pub alpha_source: AlphaSource,
}

/// `log(ℓ/x) ≤ E[T] ≤ log(ℓ/x) + log(1+α)` for the numéraire; both bounds
/// collapse to 0 when `ℓ ≤ x`.
pub fn theoretical_bounds(x: f64, level: f64, alpha: f64) -> Result<BoundReport, AnalyticsError> {
    if !(x > 0.0 && level > 0.0) {
        return Err(AnalyticsError::NonPositiveWealth { x, level });
    }
    if alpha.is_nan() || alpha < 0.0 {
        return Err(AnalyticsError::NegativeAlpha(alpha));
    }
    let (lower, upper) = if level <= x {
        (0.0, 0.0)
    } else {
        let lower = (level / x).ln();
        (lower, lower + alpha.ln_1p())
    };
    Ok(BoundReport {
        x,
        level,
        lower,
        upper,
        alpha_used: alpha,
        alpha_source: AlphaSource::Constant,
    })
}

/// Bounds with a path-dependent overshoot constant, using the sample mean of
/// `log(1 + α_i)` for the upper bound.
pub fn plug_in_bounds(x: f64, level: f64, alpha_samples: &[f64]) -> Result<BoundReport, AnalyticsError> {
    let mut report = theoretical_bounds(x, level, 0.0)?;
    if alpha_samples.is_empty() {
        return Err(AnalyticsError::DivergentPlugIn("no samples".into()));
    }
    if let Some(bad) = alpha_samples.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(AnalyticsError::DivergentPlugIn(format!("sample {bad}")));
    }
    let mean_log = alpha_samples.iter().map(|a| a.ln_1p()).sum::<f64>() / alpha_samples.len() as f64;
    if level > x {
        report.upper = report.lower + mean_log;
    }
    report.alpha_used = mean_log.exp_m1();
    report.alpha_source = AlphaSource::SampleBased;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Consistent,
    LowerViolation,
    UpperViolation,
}

/// Interval overlap of `mean ± k·stderr` with `[lower, upper]`.
pub fn check_interval(mean: f64, stderr: f64, bounds: &BoundReport, k_sigma: f64) -> Verdict {
    if mean + k_sigma * stderr < bounds.lower {
        Verdict::LowerViolation
    } else if mean - k_sigma * stderr > bounds.upper {
        Verdict::UpperViolation
    } else {
        Verdict::Consistent
    }
}

pub fn check_estimate(
    report: &ExperimentReport,
    bounds: &BoundReport,
    k_sigma: f64,
) -> Result<Verdict, AnalyticsError> {
    if report.reached_fraction < MIN_REACHED_FRACTION {
        return Err(AnalyticsError::InsufficientReached {
            fraction: report.reached_fraction,
            required: MIN_REACHED_FRACTION,
        });
    }
    Ok(check_interval(report.mean_t, report.stderr_t, bounds, k_sigma))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub level: f64,
    /// `log(ℓ/x)`.
    pub log_level: f64,
    pub mean_t: f64,
    pub stderr: f64,
    pub ratio: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    pub reached_fraction: f64,
    /// `ℓ ≤ x`: no simulation, `T = 0` exactly and the ratio is reported as 1.
    pub degenerate: bool,
}

impl RatioRow {
    /// Ratio standard error.
    pub fn ratio_stderr(&self) -> f64 {
        if self.degenerate {
            0.0
        } else {
            self.stderr / self.log_level
        }
    }

    /// Whether the ratio lies in the band widened by `k` standard errors.
    pub fn within_band(&self, k_sigma: f64) -> bool {
        let slack = k_sigma * self.ratio_stderr();
        self.ratio >= self.band_lo - slack && self.ratio <= self.band_hi + slack
    }
}

/// Runs one numéraire experiment per level and tabulates `E[T] / log(ℓ/x)`
/// against the band given by the bounds divided by `log(ℓ/x)`. Level `k`
/// uses master seed `seed + k`.
pub fn asymptotic_ratio_study(
    target: MarketRef<'_>,
    x: f64,
    levels: &[f64],
    reps: u64,
    config: &SimConfig,
    seed: u64,
) -> Result<Vec<RatioRow>, AnalyticsError> {
    if levels.is_empty() {
        return Err(AnalyticsError::NoLevels);
    }
    let alpha = target.alpha();
    levels
        .iter()
        .enumerate()
        .map(|(k, &level)| {
            let bounds = theoretical_bounds(x, level, alpha)?;
            if level <= x {
                return Ok(RatioRow {
                    level,
                    log_level: 0.0,
                    mean_t: 0.0,
                    stderr: 0.0,
                    ratio: 1.0,
                    band_lo: 1.0,
                    band_hi: 1.0,
                    reached_fraction: 1.0,
                    degenerate: true,
                });
            }
            let report = upcrossing_experiment(
                target,
                &Strategy::Numeraire,
                x,
                level,
                reps,
                config,
                seed.wrapping_add(k as u64),
            )?;
            let log_level = bounds.lower;
            Ok(RatioRow {
                level,
                log_level,
                mean_t: report.mean_t,
                stderr: report.stderr_t,
                ratio: report.mean_t / log_level,
                band_lo: 1.0,
                band_hi: bounds.upper / log_level,
                reached_fraction: report.reached_fraction,
                degenerate: false,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRow {
    pub label: String,
    pub pi: DVector<f64>,
    /// Growth rate of the strategy (for Itô markets: at the initial coefficients).
    pub growth: f64,
    pub report: Option<ExperimentReport>,
    /// `g*·log(ℓ/x)/g(π)` for continuous constant-coefficient markets.
    pub exact_mean_t: Option<f64>,
    pub rejected: Option<String>,
}

impl StrategyRow {
    /// Mean market time, infinite when nothing reached the level.
    pub fn mean_t(&self) -> f64 {
        match &self.report {
            Some(r) if r.reached > 0 && r.reached_fraction >= MIN_REACHED_FRACTION => r.mean_t,
            _ => f64::INFINITY,
        }
    }

    pub fn stderr(&self) -> f64 {
        self.report.as_ref().map_or(f64::NAN, |r| r.stderr_t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    /// Sorted by mean market time; unreached and rejected rows last.
    pub rows: Vec<StrategyRow>,
    /// The numéraire's mean is within `k` joint standard errors of the best
    /// competitor or better.
    pub numeraire_dominates: bool,
}

pub const NUMERAIRE_LABEL: &str = "numeraire";

/// Simulates the numéraire and each constant strategy on common settings
/// (strategy `k` uses master seed `seed + k + 1`).
#[allow(clippy::too_many_arguments)]
pub fn strategy_comparison(
    target: MarketRef<'_>,
    strategies: &[DVector<f64>],
    x: f64,
    level: f64,
    reps: u64,
    config: &SimConfig,
    seed: u64,
    k_sigma: f64,
) -> Result<ComparisonTable, AnalyticsError> {
    let (g_star, continuous_constant) = match target {
        MarketRef::Levy { market, solution } => (solution.g_star, !market.has_jumps()),
        MarketRef::Ito(market) => {
            let (a, sigma) = market.initial_coefficients();
            let rp = crate::growth_optimizer::risk_premium(&a, &sigma, crate::growth_optimizer::TOL_RANK);
            (rp.growth(), market.is_constant())
        }
    };
    let log_level = if level > x { (level / x).ln() } else { 0.0 };
    let exact = |g: f64| {
        continuous_constant.then(|| if g > 0.0 { g_star * log_level / g } else { f64::INFINITY })
    };

    let numeraire_pi = match target {
        MarketRef::Levy { solution, .. } => solution.rho.clone(),
        MarketRef::Ito(market) => {
            let (a, sigma) = market.initial_coefficients();
            crate::growth_optimizer::risk_premium(&a, &sigma, crate::growth_optimizer::TOL_RANK).rho
        }
    };
    let report = upcrossing_experiment(target, &Strategy::Numeraire, x, level, reps, config, seed)?;
    let mut rows = vec![StrategyRow {
        label: NUMERAIRE_LABEL.to_owned(),
        pi: numeraire_pi,
        growth: g_star,
        report: Some(report),
        exact_mean_t: exact(g_star),
        rejected: None,
    }];

    for (k, pi) in strategies.iter().enumerate() {
        let label = format!("constant[{k}]");
        let growth = match target {
            MarketRef::Levy { market, .. } => {
                if pi.len() != market.dim() || !in_constraint_set(pi, &market.constraints()) {
                    rows.push(rejected_row(label, pi, "outside the natural constraints"));
                    continue;
                }
                growth_rate(pi, market).unwrap_or(f64::NEG_INFINITY)
            }
            MarketRef::Ito(market) => {
                if pi.len() != market.dim() {
                    rows.push(rejected_row(label, pi, "dimension mismatch"));
                    continue;
                }
                let (a, sigma) = market.initial_coefficients();
                let loading = sigma.tr_mul(pi);
                pi.dot(&a) - 0.5 * loading.norm_squared()
            }
        };
        let strategy = Strategy::Constant(pi.clone());
        let report = match upcrossing_experiment(target, &strategy, x, level, reps, config, seed + k as u64 + 1) {
            Ok(r) => r,
            Err(SimError::Infeasible) => {
                rows.push(rejected_row(label, pi, "outside the natural constraints"));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        rows.push(StrategyRow {
            label,
            pi: pi.clone(),
            growth,
            report: Some(report),
            exact_mean_t: exact(growth),
            rejected: None,
        });
    }

    let numeraire = &rows[0];
    let (nm, ns) = (numeraire.mean_t(), numeraire.stderr());
    let numeraire_dominates = rows[1..].iter().filter(|r| r.rejected.is_none()).all(|r| {
        let m = r.mean_t();
        m.is_infinite() || nm <= m + k_sigma * (ns * ns + r.stderr().powi(2)).sqrt()
    });

    rows.sort_by(|a, b| {
        let key = |r: &StrategyRow| (r.rejected.is_some(), r.mean_t());
        let (ra, ma) = key(a);
        let (rb, mb) = key(b);
        ra.cmp(&rb).then(ma.total_cmp(&mb))
    });
    Ok(ComparisonTable {
        rows,
        numeraire_dominates,
    })
}

fn rejected_row(label: String, pi: &DVector<f64>, why: &str) -> StrategyRow {
    StrategyRow {
        label,
        pi: pi.clone(),
        growth: f64::NAN,
        report: None,
        exact_mean_t: None,
        rejected: Some(why.to_owned()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{Histogram, Scheme};
    use std::f64::consts::E;

    fn report(mean_t: f64, stderr_t: f64, reached_fraction: f64) -> ExperimentReport {
        ExperimentReport {
            reps: 100,
            reached: (100.0 * reached_fraction) as u64,
            reached_fraction,
            mean_t,
            stderr_t,
            mean_tau: 0.0,
            overshoot_samples: vec![],
            histogram: Histogram {
                bin_width: 0.0,
                counts: vec![],
            },
            scheme: Scheme::Event,
            seed: 0,
            outcomes: vec![],
        }
    }

    #[test]
    fn bounds_fixtures() {
        let b = theoretical_bounds(1.0, E, 0.0).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-15 && b.lower == b.upper);
        let b = theoretical_bounds(2.0, 2.0, 0.5).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
        let b = theoretical_bounds(1.0, 100.0, 0.72474).unwrap();
        assert!((b.lower - 4.60517).abs() < 1e-5);
        assert!((b.upper - 5.15025).abs() < 1e-5);
        assert!(theoretical_bounds(0.0, 1.0, 0.0).is_err());
        assert!(theoretical_bounds(1.0, -1.0, 0.0).is_err());
        assert!(theoretical_bounds(1.0, 2.0, -0.1).is_err());
    }

    #[test]
    fn verdicts() {
        let b = theoretical_bounds(1.0, 2.0_f64.exp(), 0.0).unwrap();
        assert_eq!(check_estimate(&report(2.001, 0.01, 1.0), &b, 3.0), Ok(Verdict::Consistent));
        let b = BoundReport {
            lower: 1.0,
            upper: 1.5,
            ..b
        };
        assert_eq!(check_estimate(&report(0.9, 0.01, 1.0), &b, 3.0), Ok(Verdict::LowerViolation));
        assert_eq!(check_estimate(&report(1.6, 0.01, 1.0), &b, 3.0), Ok(Verdict::UpperViolation));
        assert!(matches!(
            check_estimate(&report(1.2, 0.01, 0.9), &b, 3.0),
            Err(AnalyticsError::InsufficientReached { .. })
        ));
    }

    #[test]
    fn plug_in() {
        let b = plug_in_bounds(1.0, E, &[0.0, (2.0_f64).exp_m1()]).unwrap();
        assert!((b.upper - 2.0).abs() < 1e-12);
        assert_eq!(b.alpha_source, AlphaSource::SampleBased);
        assert!(plug_in_bounds(1.0, E, &[f64::INFINITY]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bounds_ordered_and_scale_free(
                x in 1e-3..1e3_f64,
                ratio in 0.1..1e4_f64,
                alpha in 0.0..10.0_f64,
                u in prop::sample::select(vec![0.25, 2.0, 64.0]),
            ) {
                let b = theoretical_bounds(x, x * ratio, alpha).unwrap();
                prop_assert!(b.lower <= b.upper);
                if alpha == 0.0 || ratio <= 1.0 {
                    prop_assert_eq!(b.lower, b.upper);
                } else if alpha > 1e-6 {
                    prop_assert!(b.lower < b.upper);
                }
                let s = theoretical_bounds(u * x, u * x * ratio, alpha).unwrap();
                prop_assert!((s.lower - b.lower).abs() <= 1e-12 * (1.0 + b.lower.abs()));
                prop_assert!((s.upper - b.upper).abs() <= 1e-12 * (1.0 + b.upper.abs()));
            }
        }
    }
}
