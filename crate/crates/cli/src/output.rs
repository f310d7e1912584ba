//! Number formatting and report files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use market_clock::analytics::RatioRow;
use market_clock::simulator::RepOutcome;
use serde::Serialize;

use crate::CliError;

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// 12 significant digits, shortest form; `inf`, `-inf` and `nan` spelled out.
pub fn fmt12(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{}", round12(x))
    }
}

/// JSON number rounded to 12 significant digits; non-finite values become null.
pub fn num(x: f64) -> Option<f64> {
    x.is_finite().then(|| round12(x))
}

pub fn nums(xs: impl IntoIterator<Item = f64>) -> Vec<Option<f64>> {
    xs.into_iter().map(num).collect()
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    }
    let f = fs::File::create(path).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Input(format!("cannot write {}: {e}", path.display()))
}

/// `rep,tau_calendar,T_market,overshoot,reached`; unreached rows carry the
/// stopping times and `nan` overshoot.
pub fn write_replications(path: &Path, rows: &[RepOutcome]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let err = io_err(path);
    writeln!(w, "rep,tau_calendar,T_market,overshoot,reached").map_err(&err)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.rep,
            fmt12(r.tau),
            fmt12(r.market_time),
            fmt12(r.overshoot.unwrap_or(f64::NAN)),
            u8::from(r.reached)
        )
        .map_err(&err)?;
    }
    w.flush().map_err(&err)
}

pub fn write_ratio_table(path: &Path, rows: &[RatioRow]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let err = io_err(path);
    writeln!(w, "level,logl,mean_T,stderr,ratio,band_lo,band_hi").map_err(&err)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt12(r.level),
            fmt12(r.log_level),
            fmt12(r.mean_t),
            fmt12(r.stderr),
            fmt12(r.ratio),
            fmt12(r.band_lo),
            fmt12(r.band_hi)
        )
        .map_err(&err)?;
    }
    w.flush().map_err(&err)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    let err = io_err(path);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Input(e.to_string()))?;
    writeln!(w).map_err(&err)?;
    w.flush().map_err(&err)
}

pub fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("report types serialize")
    );
}
