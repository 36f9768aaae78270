//! Coarse detection: sequential CFAR peak extraction with cancellation.
//!
//! The coarse stage treats each elevation grid column as a matched filter.
//! For the current residual `r` it finds the grid point with the largest
//! correlation magnitude, fits all peaks found so far by least squares,
//! cancels them, and records the normalized test statistic
//!
//! ```text
//! Γ_k = |a(s_pk)ᴴ r_{k-1}|² / (N · ‖r_k‖²)
//! ```
//!
//! — the matched energy of the newest peak against the residual energy
//! after cancelling it. A constant-false-alarm threshold `T` (see
//! [`calibrate_threshold`]) converts the statistics into a detected count:
//! scanning from `k_max` downward, the first `Γ_k > T` fixes `k̂`.
//!
//! Each accepted peak is bracketed by an elevation window of `±ρ_s`
//! (rounded outward to grid points); the union of accepted windows is the
//! reduced candidate set handed to the fine stage, typically two orders of
//! magnitude smaller than the full grid.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::SteeringMatrix;
use crate::linalg::{least_squares, norm_sq, vdot};
use crate::C64;

/// Residual energies below `RESIDUAL_FLOOR · ‖g‖²` are treated as exact
/// cancellations and the statistic is reported as `+∞` (noiseless input).
const RESIDUAL_FLOOR: f64 = 1e-24;

/// Output of the coarse stage.
///
/// `peaks`, `statistics`, and `windows` always have length `k_max` (every
/// stage is computed); `k_hat` says how many were accepted by the threshold
/// scan, and `union` collects the grid indices of the first `k_hat` windows.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseDetection {
    pub k_hat: usize,
    pub peaks: Vec<usize>,
    pub statistics: Vec<f64>,
    pub windows: Vec<(usize, usize)>,
    pub union: Vec<usize>,
}

/// Normalized matched-filter statistic of `g` against a single steering
/// column: `|aᴴg|² / (N·‖g⊥‖²)` with `‖g⊥‖² = ‖g‖² - |aᴴg|²/N` the energy
/// orthogonal to the column. Returns `+∞` when the column captures all of
/// `g`'s energy.
pub fn test_statistic(g: &[C64], column: &[C64]) -> Result<f64> {
    if g.len() != column.len() {
        return Err(Error::InvalidParameter("statistic length mismatch"));
    }
    let g2 = norm_sq(g);
    if g2 <= 0.0 {
        return Err(Error::EmptyMeasurement);
    }
    let n = g.len() as f64;
    let matched = vdot(column, g).norm_sqr();
    let orth = (g2 - matched / n).max(0.0);
    if orth <= RESIDUAL_FLOOR * g2 {
        return Ok(f64::INFINITY);
    }
    Ok(matched / (n * orth))
}

/// Runs the sequential coarse detector: up to `k_max` peak-and-cancel
/// stages, then a top-down threshold scan.
///
/// A zero measurement short-circuits to `k̂ = 0` with zero statistics.
pub fn coarse_detect(
    g: &[C64],
    sm: &SteeringMatrix,
    k_max: usize,
    threshold: f64,
) -> Result<CoarseDetection> {
    let n = sm.n();
    let m = sm.m();
    if g.len() != n {
        return Err(Error::InvalidParameter("measurement length != N"));
    }
    if k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be at least 1"));
    }
    if k_max > m {
        return Err(Error::InvalidParameter("k_max exceeds grid size"));
    }
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::InvalidParameter("threshold must be positive"));
    }

    let g2 = norm_sq(g);
    if g2 <= 0.0 {
        return Ok(CoarseDetection {
            k_hat: 0,
            peaks: (0..k_max).collect(),
            statistics: vec![0.0; k_max],
            windows: vec![(0, 0); k_max],
            union: Vec::new(),
        });
    }

    let geom = sm.geometry();
    let rho = geom.rayleigh_resolution();
    let h = geom.grid_step();

    let mut residual = g.to_vec();
    let mut used: Vec<usize> = Vec::with_capacity(k_max);
    let mut peaks = Vec::with_capacity(k_max);
    let mut statistics = Vec::with_capacity(k_max);
    let mut windows = Vec::with_capacity(k_max);

    for _ in 0..k_max {
        // Peak of the residual correlation, excluding already-used columns;
        // ties resolve to the lowest index.
        let mut best = 0usize;
        let mut best_mag = -1.0;
        for i in 0..m {
            if used.contains(&i) {
                continue;
            }
            let mag = vdot(sm.column(i), &residual).norm_sqr();
            if mag > best_mag {
                best_mag = mag;
                best = i;
            }
        }
        used.push(best);
        peaks.push(best);

        let cols: Vec<&[C64]> = used.iter().map(|&i| sm.column(i)).collect();
        let (_, res) = least_squares(&cols, g)?;
        let res2 = norm_sq(&res);
        let prev2 = norm_sq(&residual);
        // Degenerate stages: a previous residual that is already an exact
        // cancellation leaves no evidence for this peak (Γ = 0), while a
        // *newly* exact cancellation is infinitely confident.
        let stat = if prev2 <= RESIDUAL_FLOOR * g2 {
            0.0
        } else if res2 <= RESIDUAL_FLOOR * g2 {
            f64::INFINITY
        } else {
            best_mag / (n as f64 * res2)
        };
        statistics.push(stat);

        let pos = sm.position(best);
        let lo = libm::floor((pos - rho) / h).max(0.0) as usize;
        let hi = (libm::ceil((pos + rho) / h) as usize).min(m - 1);
        windows.push((lo, hi));

        residual = res;
    }

    let mut k_hat = 0;
    for k in (1..=k_max).rev() {
        if statistics[k - 1] > threshold {
            k_hat = k;
            break;
        }
    }

    let mut mask = vec![false; m];
    for &(lo, hi) in windows.iter().take(k_hat) {
        for cell in mask.iter_mut().take(hi + 1).skip(lo) {
            *cell = true;
        }
    }
    let union: Vec<usize> = (0..m).filter(|&i| mask[i]).collect();

    Ok(CoarseDetection {
        k_hat,
        peaks,
        statistics,
        windows,
        union,
    })
}

/// Calibrates the CFAR threshold: simulates `trials` noise-only pixels,
/// computes the first-stage statistic `Γ_1` for each, and returns the
/// empirical `(1 - p_fa)` quantile.
///
/// Requires `trials ≥ 10 / p_fa` so the tail quantile is supported by at
/// least ten exceedances.
pub fn calibrate_threshold<R: Rng + ?Sized>(
    sm: &SteeringMatrix,
    p_fa: f64,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::InvalidParameter("p_fa must lie in (0, 1)"));
    }
    if (trials as f64) < 10.0 / p_fa {
        return Err(Error::InvalidParameter("trials must be at least 10 / p_fa"));
    }
    let n = sm.n();
    let m = sm.m();
    let mut stats = Vec::with_capacity(trials);
    let mut noise = vec![C64::new(0.0, 0.0); n];
    let scale = libm::sqrt(0.5);
    for _ in 0..trials {
        for v in noise.iter_mut() {
            let re: f64 = rng.sample(rand_distr::StandardNormal);
            let im: f64 = rng.sample(rand_distr::StandardNormal);
            *v = C64::new(scale * re, scale * im);
        }
        let g2 = norm_sq(&noise);
        let mut matched = 0.0f64;
        for i in 0..m {
            let mag = vdot(sm.column(i), &noise).norm_sqr();
            if mag > matched {
                matched = mag;
            }
        }
        let orth = (g2 - matched / n as f64).max(f64::MIN_POSITIVE);
        stats.push(matched / (n as f64 * orth));
    }
    stats.sort_by(|a, b| a.partial_cmp(b).expect("statistics are finite"));
    let rank = libm::ceil((1.0 - p_fa) * trials as f64) as usize;
    Ok(stats[rank.saturating_sub(1).min(trials - 1)])
}
