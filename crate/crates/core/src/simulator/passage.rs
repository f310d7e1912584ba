//! Exact first passage of a Brownian motion with drift to a level above it.
//!
//! The process is `Y_t = drift·t + √var·B_t`, started at 0, and the barrier
//! sits at `gap > 0`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, InverseGaussian, StandardNormal};

/// Unconditional first passage time to `gap`; `f64::INFINITY` when the path
/// never gets there.
pub fn first_passage_time<R: Rng + ?Sized>(drift: f64, var: f64, gap: f64, rng: &mut R) -> f64 {
    if gap <= 0.0 {
        return 0.0;
    }
    if var <= 0.0 {
        return if drift > 0.0 { gap / drift } else { f64::INFINITY };
    }
    if drift == 0.0 {
        // one-sided stable law: gap² / (var · Z²)
        let z: f64 = rng.sample(StandardNormal);
        return gap * gap / (var * z * z);
    }
    if drift < 0.0 {
        // P(hit) = exp(2·drift·gap/var); given a hit, the time is that of the
        // mirrored positive drift
        let u: f64 = rng.random();
        if u >= (2.0 * drift * gap / var).exp() {
            return f64::INFINITY;
        }
    }
    let mean = gap / drift.abs();
    let shape = gap * gap / var;
    match InverseGaussian::new(mean, shape) {
        Ok(ig) => ig.sample(rng),
        // parameters underflowed: the passage is effectively deterministic
        Err(_) => mean,
    }
}

/// Result of running the process over a finite horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Passage {
    /// The barrier was reached at this time.
    Hit(f64),
    /// The barrier was not reached; the position at the horizon.
    Miss(f64),
}

/// Exact joint sampling of the passage event over `[0, horizon]` and, on a
/// miss, the endpoint conditioned on the running maximum staying below `gap`.
pub fn passage_within<R: Rng + ?Sized>(
    drift: f64,
    var: f64,
    gap: f64,
    horizon: f64,
    rng: &mut R,
) -> Passage {
    let tau = first_passage_time(drift, var, gap, rng);
    if tau <= horizon {
        return Passage::Hit(tau);
    }
    if var <= 0.0 {
        return Passage::Miss(drift * horizon);
    }
    // killed-process density = Gaussian density × (1 − bridge crossing probability)
    let sd = (var * horizon).sqrt();
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let y = drift * horizon + sd * z;
        if y >= gap {
            continue;
        }
        let cross = (-2.0 * gap * (gap - y) / (var * horizon)).exp();
        let u: f64 = rng.random();
        if u >= cross {
            return Passage::Miss(y);
        }
    }
}

/// Exponential waiting time with the given rate; infinite for rate zero.
pub fn exponential_wait<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    if rate <= 0.0 {
        f64::INFINITY
    } else {
        let e: f64 = rng.sample(Exp1);
        e / rate
    }
}
