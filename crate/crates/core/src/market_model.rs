//! Market specifications and the constraint geometry induced by the jump atoms.
//!
//! A Lévy market is the triplet `(a, c, ν)` of the total-returns process with
//! `ν` restricted to finitely many atoms. An Itô market is described by a
//! coefficient model that produces piecewise-constant `(a_t, σ_t)` on a
//! calendar grid.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Tolerance for PSD checks and for the agreement of `sigma` with `c`.
pub const TOL_PSD: f64 = 1e-10;

/// Default boundary tolerance for membership in the natural constraints.
pub const DEFAULT_FEAS_TOL: f64 = 1e-12;

/// One atom of the jump measure: relative jump sizes `z` arriving at `rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpAtom {
    pub z: DVector<f64>,
    pub rate: f64,
}

impl JumpAtom {
    pub fn new(z: Vec<f64>, rate: f64) -> Self {
        Self {
            z: DVector::from_vec(z),
            rate,
        }
    }
}

/// Unvalidated exponential Lévy market.
///
/// At least one of `sigma` (`d × m`) or `c` (`d × d`) must be present.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyMarketSpec {
    pub d: usize,
    pub m: usize,
    pub a: DVector<f64>,
    pub sigma: Option<DMatrix<f64>>,
    pub c: Option<DMatrix<f64>>,
    pub atoms: Vec<JumpAtom>,
}

impl LevyMarketSpec {
    /// Convenience constructor from a volatility matrix given row by row.
    pub fn with_sigma(a: Vec<f64>, sigma_rows: &[Vec<f64>], atoms: Vec<JumpAtom>) -> Self {
        let d = a.len();
        let m = sigma_rows.first().map_or(0, Vec::len);
        Self {
            d,
            m,
            a: DVector::from_vec(a),
            sigma: Some(matrix_from_rows(sigma_rows, d, m)),
            c: None,
            atoms,
        }
    }

    /// Convenience constructor from a covariance matrix given row by row.
    pub fn with_covariance(a: Vec<f64>, c_rows: &[Vec<f64>], atoms: Vec<JumpAtom>) -> Self {
        let d = a.len();
        Self {
            d,
            m: d,
            a: DVector::from_vec(a),
            sigma: None,
            c: Some(matrix_from_rows(c_rows, d, d)),
            atoms,
        }
    }
}

/// Builds a `rows × cols` matrix; ragged input is padded with NaN so that
/// validation reports it instead of panicking here.
pub fn matrix_from_rows(rows_in: &[Vec<f64>], rows: usize, cols: usize) -> DMatrix<f64> {
    let nrows = rows_in.len().max(rows);
    let ncols = rows_in.iter().map(Vec::len).max().unwrap_or(0).max(cols);
    DMatrix::from_fn(nrows, ncols, |i, j| {
        rows_in
            .get(i)
            .and_then(|r| r.get(j))
            .copied()
            .unwrap_or(f64::NAN)
    })
}

/// A validated Lévy market with the covariance materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyMarket {
    spec: LevyMarketSpec,
    c: DMatrix<f64>,
    kappa: f64,
}

impl LevyMarket {
    pub fn dim(&self) -> usize {
        self.spec.d
    }

    pub fn brownian_dim(&self) -> usize {
        self.spec.m
    }

    pub fn drift(&self) -> &DVector<f64> {
        &self.spec.a
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn sigma(&self) -> Option<&DMatrix<f64>> {
        self.spec.sigma.as_ref()
    }

    pub fn atoms(&self) -> &[JumpAtom] {
        &self.spec.atoms
    }

    /// Upper bound on jump coordinates, floored at zero.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn total_jump_rate(&self) -> f64 {
        self.spec.atoms.iter().map(|a| a.rate).sum()
    }

    pub fn has_jumps(&self) -> bool {
        !self.spec.atoms.is_empty()
    }

    /// The spec with `c` filled in; validating it again yields an equal market.
    pub fn spec(&self) -> &LevyMarketSpec {
        &self.spec
    }

    pub fn constraints(&self) -> ConstraintQuery<'_> {
        ConstraintQuery::new(&self.spec.atoms)
    }
}

/// A single reason a market specification was rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("jump below −1: atom {atom}, coordinate {coord} = {value}")]
    JumpBelowMinusOne { atom: usize, coord: usize, value: f64 },
    #[error("zero atom: atom {atom} is the zero vector")]
    ZeroAtom { atom: usize },
    #[error("nonpositive rate: atom {atom} has rate {rate}")]
    NonpositiveRate { atom: usize, rate: f64 },
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: String,
        found: String,
    },
    #[error("covariance is not positive semidefinite (smallest eigenvalue {min_eigenvalue})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("covariance is not symmetric (max asymmetry {max_diff})")]
    NotSymmetric { max_diff: f64 },
    #[error("sigma and c disagree (max |σσᵀ − c| = {max_diff})")]
    SigmaCovarianceMismatch { max_diff: f64 },
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
    #[error("neither sigma nor c was given")]
    MissingVolatility,
    #[error("invalid coefficient model: {0}")]
    InvalidModel(String),
}

/// Every violation found in a specification.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid market specification: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct SpecErrors(pub Vec<Violation>);

fn mismatch(what: &str, expected: impl ToString, found: impl ToString) -> Violation {
    Violation::DimensionMismatch {
        what: what.to_owned(),
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

fn shape(m: &DMatrix<f64>) -> String {
    format!("{}×{}", m.nrows(), m.ncols())
}

fn check_sigma(sigma: &DMatrix<f64>, d: usize, m: usize, what: &str, errs: &mut Vec<Violation>) {
    if sigma.nrows() != d || sigma.ncols() != m {
        errs.push(mismatch(what, format!("{d}×{m}"), shape(sigma)));
    } else if sigma.iter().any(|v| !v.is_finite()) {
        errs.push(Violation::NonFinite {
            what: what.to_owned(),
        });
    }
}

fn check_vector(v: &DVector<f64>, d: usize, what: &str, errs: &mut Vec<Violation>) {
    if v.len() != d {
        errs.push(mismatch(what, d, v.len()));
    } else if v.iter().any(|x| !x.is_finite()) {
        errs.push(Violation::NonFinite {
            what: what.to_owned(),
        });
    }
}

/// Checks symmetry and positive semidefiniteness of a square covariance.
fn check_covariance(c: &DMatrix<f64>, errs: &mut Vec<Violation>) {
    let max_diff = (c - c.transpose()).amax();
    if max_diff > TOL_PSD {
        errs.push(Violation::NotSymmetric { max_diff });
        return;
    }
    let sym = (c + c.transpose()) * 0.5;
    let min_eigenvalue = sym.symmetric_eigenvalues().min();
    if min_eigenvalue < -TOL_PSD {
        errs.push(Violation::NotPsd { min_eigenvalue });
    }
}

/// Checks every invariant of a Lévy market and materializes `c = σσᵀ`.
pub fn validate_levy(spec: LevyMarketSpec) -> Result<LevyMarket, SpecErrors> {
    let mut errs = Vec::new();
    let d = spec.d;
    check_vector(&spec.a, d, "a", &mut errs);

    let from_sigma = spec.sigma.as_ref().and_then(|s| {
        let before = errs.len();
        check_sigma(s, d, spec.m, "sigma", &mut errs);
        (errs.len() == before).then(|| s * s.transpose())
    });

    let c = match (&spec.c, from_sigma) {
        (Some(c), derived) => {
            let before = errs.len();
            if c.nrows() != d || c.ncols() != d {
                errs.push(mismatch("c", format!("{d}×{d}"), shape(c)));
            } else if c.iter().any(|v| !v.is_finite()) {
                errs.push(Violation::NonFinite { what: "c".into() });
            } else {
                check_covariance(c, &mut errs);
            }
            if let Some(ss) = derived {
                if errs.len() == before {
                    let max_diff = (&ss - c).amax();
                    if max_diff > TOL_PSD {
                        errs.push(Violation::SigmaCovarianceMismatch { max_diff });
                    }
                }
            }
            Some(c.clone())
        }
        (None, Some(ss)) => Some(ss),
        (None, None) => {
            if spec.sigma.is_none() {
                errs.push(Violation::MissingVolatility);
            }
            None
        }
    };

    let mut kappa = 0.0_f64;
    for (k, atom) in spec.atoms.iter().enumerate() {
        if atom.z.len() != d {
            errs.push(mismatch(&format!("atom {k}"), d, atom.z.len()));
            continue;
        }
        if atom.z.iter().any(|v| !v.is_finite()) || !atom.rate.is_finite() {
            errs.push(Violation::NonFinite {
                what: format!("atom {k}"),
            });
            continue;
        }
        for (i, &zi) in atom.z.iter().enumerate() {
            if zi < -1.0 {
                errs.push(Violation::JumpBelowMinusOne {
                    atom: k,
                    coord: i,
                    value: zi,
                });
            }
            kappa = kappa.max(zi);
        }
        if atom.z.iter().all(|&v| v == 0.0) {
            errs.push(Violation::ZeroAtom { atom: k });
        }
        if atom.rate <= 0.0 {
            errs.push(Violation::NonpositiveRate {
                atom: k,
                rate: atom.rate,
            });
        }
    }

    match c {
        Some(c) if errs.is_empty() => {
            let mut spec = spec;
            spec.c = Some(c.clone());
            Ok(LevyMarket { spec, c, kappa })
        }
        _ => Err(SpecErrors(errs)),
    }
}

/// A piece of a deterministic coefficient schedule, active from `start` until
/// the next piece begins.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulePiece {
    pub start: f64,
    pub a: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

/// Generators of `(a_t, σ_t)` for an Itô market.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientModel {
    Constant {
        a: DVector<f64>,
        sigma: DMatrix<f64>,
    },
    /// Piecewise constant in calendar time; pieces sorted by `start`, the
    /// first starting at 0.
    Schedule { pieces: Vec<SchedulePiece> },
    /// `σ_t = σ·exp(Y_t)` with `dY = −κ Y dt + η dB`, `B` independent of the
    /// market's Brownian motion.
    StochasticVolatility {
        a: DVector<f64>,
        sigma: DMatrix<f64>,
        mean_reversion: f64,
        vol_of_vol: f64,
        initial_factor: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItoMarketSpec {
    pub d: usize,
    pub m: usize,
    pub model: CoefficientModel,
}

/// A validated Itô market.
#[derive(Debug, Clone, PartialEq)]
pub struct ItoMarket {
    spec: ItoMarketSpec,
}

impl ItoMarket {
    pub fn dim(&self) -> usize {
        self.spec.d
    }

    pub fn brownian_dim(&self) -> usize {
        self.spec.m
    }

    pub fn model(&self) -> &CoefficientModel {
        &self.spec.model
    }

    pub fn spec(&self) -> &ItoMarketSpec {
        &self.spec
    }

    /// Coefficients in force at calendar time 0 (the factor at its initial value).
    pub fn initial_coefficients(&self) -> (DVector<f64>, DMatrix<f64>) {
        match &self.spec.model {
            CoefficientModel::Constant { a, sigma } => (a.clone(), sigma.clone()),
            CoefficientModel::Schedule { pieces } => (pieces[0].a.clone(), pieces[0].sigma.clone()),
            CoefficientModel::StochasticVolatility {
                a,
                sigma,
                initial_factor,
                ..
            } => (a.clone(), sigma * initial_factor.exp()),
        }
    }

    /// True when `(a_t, σ_t)` never changes.
    pub fn is_constant(&self) -> bool {
        match &self.spec.model {
            CoefficientModel::Constant { .. } => true,
            CoefficientModel::Schedule { pieces } => pieces.len() == 1,
            CoefficientModel::StochasticVolatility { vol_of_vol, .. } => *vol_of_vol == 0.0,
        }
    }
}

pub fn validate_ito(spec: ItoMarketSpec) -> Result<ItoMarket, SpecErrors> {
    let mut errs = Vec::new();
    let (d, m) = (spec.d, spec.m);
    match &spec.model {
        CoefficientModel::Constant { a, sigma } => {
            check_vector(a, d, "a", &mut errs);
            check_sigma(sigma, d, m, "sigma", &mut errs);
        }
        CoefficientModel::Schedule { pieces } => {
            if pieces.is_empty() {
                errs.push(Violation::InvalidModel("schedule has no pieces".into()));
            } else if pieces[0].start != 0.0 {
                errs.push(Violation::InvalidModel(
                    "first schedule piece must start at 0".into(),
                ));
            }
            for (k, piece) in pieces.iter().enumerate() {
                check_vector(&piece.a, d, &format!("schedule[{k}].a"), &mut errs);
                check_sigma(&piece.sigma, d, m, &format!("schedule[{k}].sigma"), &mut errs);
                if !piece.start.is_finite() {
                    errs.push(Violation::NonFinite {
                        what: format!("schedule[{k}].start"),
                    });
                }
                if k > 0 && piece.start <= pieces[k - 1].start {
                    errs.push(Violation::InvalidModel(format!(
                        "schedule starts must be strictly increasing (piece {k})"
                    )));
                }
            }
        }
        CoefficientModel::StochasticVolatility {
            a,
            sigma,
            mean_reversion,
            vol_of_vol,
            initial_factor,
        } => {
            check_vector(a, d, "a", &mut errs);
            check_sigma(sigma, d, m, "sigma", &mut errs);
            for (name, v) in [
                ("mean_reversion", mean_reversion),
                ("vol_of_vol", vol_of_vol),
                ("initial_factor", initial_factor),
            ] {
                if !v.is_finite() {
                    errs.push(Violation::NonFinite { what: name.into() });
                }
            }
            if *mean_reversion < 0.0 || *vol_of_vol < 0.0 {
                errs.push(Violation::InvalidModel(
                    "mean_reversion and vol_of_vol must be nonnegative".into(),
                ));
            }
        }
    }
    if errs.is_empty() {
        Ok(ItoMarket { spec })
    } else {
        Err(SpecErrors(errs))
    }
}

/// Either kind of market, as read from a spec file.
#[derive(Debug, Clone, PartialEq)]
pub enum MarketSpec {
    Levy(LevyMarketSpec),
    Ito(ItoMarketSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Market {
    Levy(LevyMarket),
    Ito(ItoMarket),
}

pub fn validate_spec(spec: MarketSpec) -> Result<Market, SpecErrors> {
    match spec {
        MarketSpec::Levy(s) => validate_levy(s).map(Market::Levy),
        MarketSpec::Ito(s) => validate_ito(s).map(Market::Ito),
    }
}

/// Membership queries for the natural constraints `𝔠` and their recession cone.
#[derive(Debug, Clone, Copy)]
pub struct ConstraintQuery<'a> {
    atoms: &'a [JumpAtom],
    tolerance: f64,
}

impl<'a> ConstraintQuery<'a> {
    pub fn new(atoms: &'a [JumpAtom]) -> Self {
        Self {
            atoms,
            tolerance: DEFAULT_FEAS_TOL,
        }
    }

    /// Panics if `tolerance` is negative or NaN.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        assert!(tolerance >= 0.0, "feasibility tolerance must be nonnegative");
        self.tolerance = tolerance;
        self
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn atoms(&self) -> &'a [JumpAtom] {
        self.atoms
    }
}

/// `1 + ⟨π, z_k⟩ ≥ −ε` for every atom. Boundary points are feasible.
pub fn in_constraint_set(pi: &DVector<f64>, q: &ConstraintQuery<'_>) -> bool {
    q.atoms
        .iter()
        .all(|atom| 1.0 + pi.dot(&atom.z) >= -q.tolerance)
}

/// `⟨η, z_k⟩ ≥ −ε` for every atom.
pub fn in_recession_cone(eta: &DVector<f64>, q: &ConstraintQuery<'_>) -> bool {
    q.atoms.iter().all(|atom| eta.dot(&atom.z) >= -q.tolerance)
}
