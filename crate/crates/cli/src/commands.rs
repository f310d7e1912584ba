use std::path::Path;

use market_clock::analytics::{
    asymptotic_ratio_study, check_estimate, check_interval, strategy_comparison, theoretical_bounds,
    AnalyticsError, BoundReport, Verdict, MIN_REACHED_FRACTION,
};
use market_clock::growth_optimizer::{risk_premium, solve_market, GrowthSolution, MarketVerdict, SolverOptions, TOL_RANK};
use market_clock::market_model::{validate_spec, Market};
use market_clock::simulator::{upcrossing_experiment, MarketRef, Scheme, SimConfig, SimError, Strategy};
use nalgebra::DVector;
use serde::Serialize;

use crate::output::{fmt12, num, nums, print_json, write_json, write_ratio_table, write_replications};
use crate::schema::read_spec;
use crate::{CliError, CommonArgs, CompareArgs, SchemeArg, SimulateArgs, StudyArgs};

#[derive(Debug, Serialize)]
struct Analysis {
    market: &'static str,
    viable: bool,
    verdict: &'static str,
    rho: Vec<Option<f64>>,
    g_star: Option<f64>,
    g_star_unbounded: bool,
    alpha: Option<f64>,
    log1p_alpha: Option<f64>,
    witness: Option<Vec<Option<f64>>>,
    iterations: usize,
    grad_norm: Option<f64>,
    tie_break: &'static str,
}

/// A validated market that passed (or failed) the viability gate.
struct Gated {
    market: Market,
    solution: GrowthSolution,
    analysis: Analysis,
}

impl Gated {
    fn target(&self) -> MarketRef<'_> {
        match &self.market {
            Market::Levy(market) => MarketRef::Levy {
                market,
                solution: &self.solution,
            },
            Market::Ito(market) => MarketRef::Ito(market),
        }
    }
}

fn gate(spec_path: &Path) -> Result<Gated, CliError> {
    let spec = read_spec(spec_path)?;
    let market = validate_spec(spec).map_err(|e| {
        CliError::Input(
            e.0.iter()
                .map(|v| format!("\n  - {v}"))
                .fold("invalid market specification:".to_owned(), |acc, s| acc + &s),
        )
    })?;
    let solution = match &market {
        Market::Levy(m) => solve_market(m, SolverOptions::default())
            .map_err(|e| CliError::NotViable(format!("growth maximization failed: {e}")))?,
        Market::Ito(m) => {
            // the gate looks at the coefficients in force at time zero
            let (a, sigma) = m.initial_coefficients();
            let rp = risk_premium(&a, &sigma, TOL_RANK);
            let g = rp.growth();
            let verdict = if !rp.solvable {
                MarketVerdict::Arbitrage
            } else if g > market_clock::growth_optimizer::ZERO_GROWTH_TOL {
                MarketVerdict::Viable
            } else {
                MarketVerdict::ZeroGrowth
            };
            GrowthSolution {
                rho: rp.rho,
                g_star: g,
                alpha: 0.0,
                viable: verdict == MarketVerdict::Viable,
                verdict,
                witness: None,
                iterations: 0,
                grad_norm: 0.0,
                tie_break: market_clock::growth_optimizer::TieBreak::MinimalNorm,
            }
        }
    };
    let is_ito = matches!(market, Market::Ito(_));
    let analysis = Analysis {
        market: if is_ito { "ito" } else { "levy" },
        viable: solution.viable,
        verdict: match (solution.verdict, is_ito) {
            (MarketVerdict::Viable, _) => "viable",
            (MarketVerdict::Arbitrage, false) => "arbitrage",
            (MarketVerdict::Arbitrage, true) => "no_numeraire",
            (MarketVerdict::ZeroGrowth, _) => "zero_growth",
        },
        rho: nums(solution.rho.iter().copied()),
        g_star: num(solution.g_star),
        g_star_unbounded: solution.g_star == f64::INFINITY,
        alpha: num(solution.alpha),
        log1p_alpha: num(solution.log1p_alpha()),
        witness: solution.witness.as_ref().map(|w| nums(w.iter().copied())),
        iterations: solution.iterations,
        grad_norm: num(solution.grad_norm),
        tie_break: "minimal_norm",
    };
    Ok(Gated {
        market,
        solution,
        analysis,
    })
}

fn require_viable(g: &Gated) -> Result<(), CliError> {
    if g.solution.viable {
        Ok(())
    } else {
        Err(CliError::NotViable(format!(
            "market is not viable ({}); run `analyze` for details",
            g.analysis.verdict
        )))
    }
}

pub fn analyze(spec: &Path) -> Result<(), CliError> {
    let g = gate(spec)?;
    print_json(&g.analysis);
    require_viable(&g)
}

fn check_common(c: &CommonArgs) -> Result<(), CliError> {
    if c.reps < 1 {
        return Err(CliError::Input("--reps must be at least 1".into()));
    }
    if !(c.x > 0.0 && c.x.is_finite()) {
        return Err(CliError::Input("--x must be positive".into()));
    }
    if !(c.dt > 0.0 && c.dt.is_finite()) {
        return Err(CliError::Input("--dt must be positive".into()));
    }
    if c.k_sigma.is_nan() || c.k_sigma < 0.0 {
        return Err(CliError::Input("--k-sigma must be nonnegative".into()));
    }
    Ok(())
}

fn check_level(x: f64, level: f64) -> Result<(), CliError> {
    if !(level > x && level.is_finite()) {
        return Err(CliError::Input(format!("level {level} must exceed x = {x}")));
    }
    Ok(())
}

fn sim_config(c: &CommonArgs, market: &Market) -> SimConfig {
    match (c.scheme, market) {
        (SchemeArg::Event, Market::Levy(_)) => SimConfig::event(),
        _ => SimConfig::grid(c.dt),
    }
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Input(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Unsolvable { .. } | SimError::NoMarketClock(_) => CliError::NotViable(e.to_string()),
        _ => CliError::Input(e.to_string()),
    }
}

fn analytics_error(e: AnalyticsError) -> CliError {
    match e {
        AnalyticsError::Simulation(s) => sim_error(s),
        AnalyticsError::InsufficientReached { .. } => CliError::BoundCheck(e.to_string()),
        _ => CliError::Input(e.to_string()),
    }
}

#[derive(Debug, Serialize)]
struct BoundsJson {
    lower: Option<f64>,
    upper: Option<f64>,
    alpha: Option<f64>,
    applies_to: &'static str,
}

impl BoundsJson {
    fn new(b: &BoundReport, numeraire: bool) -> Self {
        Self {
            lower: num(b.lower),
            upper: num(b.upper),
            alpha: num(b.alpha_used),
            applies_to: if numeraire { "lower_and_upper" } else { "lower_only" },
        }
    }
}

#[derive(Debug, Serialize)]
struct HistogramJson {
    bin_width: Option<f64>,
    counts: Vec<u64>,
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    market: &'static str,
    strategy: Vec<Option<f64>>,
    numeraire: bool,
    x: Option<f64>,
    level: Option<f64>,
    reps: u64,
    scheme: &'static str,
    dt: Option<f64>,
    seed: u64,
    k_sigma: Option<f64>,
    g_star: Option<f64>,
    reached_fraction: Option<f64>,
    #[serde(rename = "mean_T")]
    mean_t: Option<f64>,
    #[serde(rename = "stderr_T")]
    stderr_t: Option<f64>,
    mean_tau: Option<f64>,
    overshoot_max: Option<f64>,
    overshoot_mean: Option<f64>,
    overshoot_histogram: HistogramJson,
    bounds: BoundsJson,
    verdict: &'static str,
    csv: String,
}

fn verdict_name(v: &Result<Verdict, AnalyticsError>) -> &'static str {
    match v {
        Ok(Verdict::Consistent) => "consistent",
        Ok(Verdict::LowerViolation) => "lower-violation",
        Ok(Verdict::UpperViolation) => "upper-violation",
        Err(_) => "insufficient-reached",
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let c = &args.common;
    check_common(c)?;
    check_level(c.x, args.level)?;
    let g = gate(&c.spec)?;
    require_viable(&g)?;
    let (strategy, numeraire) = match &args.pi {
        None => (Strategy::Numeraire, true),
        Some(pi) => (Strategy::Constant(DVector::from_vec(pi.clone())), false),
    };
    let config = sim_config(c, &g.market);
    let target = g.target();
    let report = with_pool(c.threads, || {
        upcrossing_experiment(target, &strategy, c.x, args.level, c.reps, &config, c.seed)
    })?
    .map_err(sim_error)?;

    let csv = c.out.join("replications.csv");
    write_replications(&csv, &report.outcomes)?;

    let mut bounds = theoretical_bounds(c.x, args.level, target.alpha()).map_err(analytics_error)?;
    let checked = if numeraire {
        check_estimate(&report, &bounds, c.k_sigma)
    } else {
        // only the lower bound holds for arbitrary strategies
        let open = BoundReport {
            upper: f64::INFINITY,
            ..bounds
        };
        check_estimate(&report, &open, c.k_sigma)
    };
    if !numeraire {
        bounds.upper = f64::INFINITY;
    }
    let overshoot_max = report.overshoot_samples.iter().copied().fold(f64::NAN, f64::max);
    let overshoot_mean = report.overshoot_samples.iter().sum::<f64>() / report.overshoot_samples.len() as f64;
    let summary = SimulationSummary {
        market: g.analysis.market,
        strategy: match &strategy {
            Strategy::Numeraire => nums(g.solution.rho.iter().copied()),
            Strategy::Constant(pi) => nums(pi.iter().copied()),
        },
        numeraire,
        x: num(c.x),
        level: num(args.level),
        reps: report.reps,
        scheme: report.scheme.name(),
        dt: (report.scheme == Scheme::Grid).then_some(c.dt),
        seed: c.seed,
        k_sigma: num(c.k_sigma),
        g_star: num(g.solution.g_star),
        reached_fraction: num(report.reached_fraction),
        mean_t: num(report.mean_t),
        stderr_t: num(report.stderr_t),
        mean_tau: num(report.mean_tau),
        overshoot_max: num(overshoot_max),
        overshoot_mean: num(overshoot_mean),
        overshoot_histogram: HistogramJson {
            bin_width: num(report.histogram.bin_width),
            counts: report.histogram.counts.clone(),
        },
        bounds: BoundsJson::new(&bounds, numeraire),
        verdict: verdict_name(&checked),
        csv: csv.display().to_string(),
    };
    write_json(&c.out.join("summary.json"), &summary)?;
    print_json(&summary);

    match checked {
        Ok(Verdict::Consistent) => Ok(()),
        Ok(v) => Err(CliError::BoundCheck(format!(
            "estimate {} ± {} is inconsistent with bounds [{}, {}] ({v:?})",
            fmt12(report.mean_t),
            fmt12(report.stderr_t),
            fmt12(bounds.lower),
            fmt12(bounds.upper)
        ))),
        Err(e) => Err(analytics_error(e)),
    }
}

#[derive(Debug, Serialize)]
struct StudyRowJson {
    level: Option<f64>,
    logl: Option<f64>,
    #[serde(rename = "mean_T")]
    mean_t: Option<f64>,
    stderr: Option<f64>,
    ratio: Option<f64>,
    band_lo: Option<f64>,
    band_hi: Option<f64>,
    reached_fraction: Option<f64>,
    within_band: bool,
}

#[derive(Debug, Serialize)]
struct StudySummary {
    market: &'static str,
    x: Option<f64>,
    reps: u64,
    scheme: &'static str,
    seed: u64,
    k_sigma: Option<f64>,
    alpha: Option<f64>,
    rows: Vec<StudyRowJson>,
    csv: String,
}

pub fn study(args: &StudyArgs) -> Result<(), CliError> {
    let c = &args.common;
    check_common(c)?;
    if args.levels.is_empty() {
        return Err(CliError::Input("--levels needs at least one level".into()));
    }
    for &l in &args.levels {
        check_level(c.x, l)?;
    }
    let g = gate(&c.spec)?;
    require_viable(&g)?;
    let config = sim_config(c, &g.market);
    let target = g.target();
    let rows = with_pool(c.threads, || {
        asymptotic_ratio_study(target, c.x, &args.levels, c.reps, &config, c.seed)
    })?
    .map_err(analytics_error)?;
    let csv = c.out.join("study.csv");
    write_ratio_table(&csv, &rows)?;
    let ok = |r: &market_clock::analytics::RatioRow| {
        r.reached_fraction >= MIN_REACHED_FRACTION && r.within_band(c.k_sigma)
    };
    let summary = StudySummary {
        market: g.analysis.market,
        x: num(c.x),
        reps: c.reps,
        scheme: config.scheme.name(),
        seed: c.seed,
        k_sigma: num(c.k_sigma),
        alpha: num(target.alpha()),
        rows: rows
            .iter()
            .map(|r| StudyRowJson {
                level: num(r.level),
                logl: num(r.log_level),
                mean_t: num(r.mean_t),
                stderr: num(r.stderr),
                ratio: num(r.ratio),
                band_lo: num(r.band_lo),
                band_hi: num(r.band_hi),
                reached_fraction: num(r.reached_fraction),
                within_band: ok(r),
            })
            .collect(),
        csv: csv.display().to_string(),
    };
    write_json(&c.out.join("study.json"), &summary)?;
    print_json(&summary);
    match rows.iter().find(|r| !ok(r)) {
        None => Ok(()),
        Some(r) => Err(CliError::BoundCheck(format!(
            "level {}: ratio {} outside band [{}, {}] widened by {} standard errors",
            fmt12(r.level),
            fmt12(r.ratio),
            fmt12(r.band_lo),
            fmt12(r.band_hi),
            c.k_sigma
        ))),
    }
}

fn parse_pi(s: &str) -> Result<DVector<f64>, CliError> {
    let xs = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Input(format!("bad --pi {s:?}: {e}")))?;
    Ok(DVector::from_vec(xs))
}

#[derive(Debug, Serialize)]
struct CompareRowJson {
    label: String,
    pi: Vec<Option<f64>>,
    growth: Option<f64>,
    #[serde(rename = "mean_T")]
    mean_t: Option<f64>,
    stderr: Option<f64>,
    reached_fraction: Option<f64>,
    #[serde(rename = "exact_mean_T")]
    exact_mean_t: Option<f64>,
    lower_bound_ok: Option<bool>,
    rejected: Option<String>,
}

#[derive(Debug, Serialize)]
struct CompareSummary {
    x: Option<f64>,
    level: Option<f64>,
    reps: u64,
    seed: u64,
    numeraire_dominates: bool,
    rows: Vec<CompareRowJson>,
}

pub fn compare(args: &CompareArgs) -> Result<(), CliError> {
    let c = &args.common;
    check_common(c)?;
    check_level(c.x, args.level)?;
    let strategies = args.pi.iter().map(|s| parse_pi(s)).collect::<Result<Vec<_>, _>>()?;
    let g = gate(&c.spec)?;
    require_viable(&g)?;
    let config = sim_config(c, &g.market);
    let target = g.target();
    let table = with_pool(c.threads, || {
        strategy_comparison(target, &strategies, c.x, args.level, c.reps, &config, c.seed, c.k_sigma)
    })?
    .map_err(analytics_error)?;
    let lower = theoretical_bounds(c.x, args.level, 0.0).map_err(analytics_error)?;
    let open = BoundReport {
        upper: f64::INFINITY,
        ..lower
    };
    let rows: Vec<CompareRowJson> = table
        .rows
        .iter()
        .map(|r| CompareRowJson {
            label: r.label.clone(),
            pi: nums(r.pi.iter().copied()),
            growth: num(r.growth),
            mean_t: num(r.mean_t()),
            stderr: num(r.stderr()),
            reached_fraction: r.report.as_ref().and_then(|rep| num(rep.reached_fraction)),
            exact_mean_t: r.exact_mean_t.and_then(num),
            lower_bound_ok: r.report.as_ref().filter(|rep| rep.reached > 0).map(|rep| {
                check_interval(rep.mean_t, rep.stderr_t, &open, c.k_sigma) != Verdict::LowerViolation
            }),
            rejected: r.rejected.clone(),
        })
        .collect();
    let violation = rows.iter().any(|r| r.lower_bound_ok == Some(false));
    let summary = CompareSummary {
        x: num(c.x),
        level: num(args.level),
        reps: c.reps,
        seed: c.seed,
        numeraire_dominates: table.numeraire_dominates,
        rows,
    };
    write_json(&c.out.join("compare.json"), &summary)?;
    print_json(&summary);
    if violation || !table.numeraire_dominates {
        return Err(CliError::BoundCheck(
            "strategy comparison contradicts the lower bound or numéraire optimality".into(),
        ));
    }
    Ok(())
}
