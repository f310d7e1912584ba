//! JSON market-spec files.
//!
//! ```json
//! {"d": 1, "m": 1, "a": [0.05], "sigma": [[0.1]],
//!  "atoms": [{"z": [0.25], "rate": 0.2}]}
//! ```
//!
//! `c` may replace (or accompany) `sigma`. An `"ito"` object selects the Itô
//! engine and describes how `(a, σ)` evolve:
//! `{"model": "constant"}`,
//! `{"model": "schedule", "pieces": [{"start": 0, "a": [...], "sigma": [[...]]}, ...]}` or
//! `{"model": "stochastic_vol", "mean_reversion": 2, "vol_of_vol": 0.5, "initial_factor": 0}`.

use std::path::Path;

use market_clock::market_model::{
    matrix_from_rows, CoefficientModel, ItoMarketSpec, JumpAtom, LevyMarketSpec, MarketSpec, SchedulePiece,
};
use nalgebra::DVector;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    d: usize,
    m: Option<usize>,
    a: Vec<f64>,
    sigma: Option<Vec<Vec<f64>>>,
    c: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    atoms: Vec<AtomFile>,
    ito: Option<ItoFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomFile {
    z: Vec<f64>,
    rate: f64,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
enum ItoFile {
    Constant,
    Schedule {
        pieces: Vec<PieceFile>,
    },
    StochasticVol {
        mean_reversion: f64,
        vol_of_vol: f64,
        #[serde(default)]
        initial_factor: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PieceFile {
    start: f64,
    a: Vec<f64>,
    sigma: Vec<Vec<f64>>,
}

pub fn read_spec(path: &Path) -> Result<MarketSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_spec(&text)
}

pub fn parse_spec(text: &str) -> Result<MarketSpec, CliError> {
    let file: SpecFile =
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("malformed spec: {e}")))?;
    let d = file.d;
    let m = file
        .m
        .or_else(|| file.sigma.as_ref().and_then(|s| s.first().map(Vec::len)))
        .unwrap_or(d);

    match file.ito {
        None => Ok(MarketSpec::Levy(LevyMarketSpec {
            d,
            m,
            a: DVector::from_vec(file.a),
            sigma: file.sigma.as_deref().map(|s| matrix_from_rows(s, d, m)),
            c: file.c.as_deref().map(|c| matrix_from_rows(c, d, d)),
            atoms: file
                .atoms
                .into_iter()
                .map(|at| JumpAtom::new(at.z, at.rate))
                .collect(),
        })),
        Some(ito) => {
            if !file.atoms.is_empty() {
                return Err(CliError::Input("Itô markets cannot carry jump atoms".into()));
            }
            if file.c.is_some() {
                return Err(CliError::Input("Itô markets are specified through sigma, not c".into()));
            }
            let sigma = || {
                file.sigma
                    .as_deref()
                    .map(|s| matrix_from_rows(s, d, m))
                    .ok_or_else(|| CliError::Input("Itô market needs sigma".into()))
            };
            let a = DVector::from_vec(file.a.clone());
            let model = match ito {
                ItoFile::Constant => CoefficientModel::Constant { a, sigma: sigma()? },
                ItoFile::Schedule { pieces } => CoefficientModel::Schedule {
                    pieces: pieces
                        .into_iter()
                        .map(|p| SchedulePiece {
                            start: p.start,
                            a: DVector::from_vec(p.a),
                            sigma: matrix_from_rows(&p.sigma, d, m),
                        })
                        .collect(),
                },
                ItoFile::StochasticVol {
                    mean_reversion,
                    vol_of_vol,
                    initial_factor,
                } => CoefficientModel::StochasticVolatility {
                    a,
                    sigma: sigma()?,
                    mean_reversion,
                    vol_of_vol,
                    initial_factor,
                },
            };
            Ok(MarketSpec::Ito(ItoMarketSpec { d, m, model }))
        }
    }
}
