//! Synthetic pixel generation and deterministic seed derivation.
//!
//! Pixels are synthesized directly in the post-focusing domain: the
//! measurement of a pixel containing targets `{(s_k, γ_k)}` is
//! `g = Σ_k γ_k·a(s_k) + n` with `n` circular complex Gaussian noise of
//! total per-sample power `σ²`. With unit-modulus steering entries, a
//! target of reflectivity magnitude `|γ| = √(SNR·σ²)` realizes the stated
//! per-acquisition signal-to-noise ratio.
//!
//! Monte Carlo experiments want reproducibility that is independent of
//! scheduling: [`derive_seed`] maps `(master seed, stream path)` to an RNG
//! seed through a SplitMix64-style mixer, so every trial owns a private,
//! deterministic generator no matter which worker runs it.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::TomoGeometry;
use crate::C64;

/// A point scatterer: elevation in meters plus complex reflectivity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub elevation: f64,
    pub reflectivity: C64,
}

impl Target {
    /// Target with reflectivity `amplitude·exp(j·phase)`.
    pub fn from_polar(elevation: f64, amplitude: f64, phase: f64) -> Self {
        Target {
            elevation,
            reflectivity: C64::new(
                amplitude * libm::cos(phase),
                amplitude * libm::sin(phase),
            ),
        }
    }
}

/// Reflectivity magnitude that realizes `snr` (linear) against noise of
/// per-sample power `noise_power`.
pub fn amplitude_for_snr(snr: f64, noise_power: f64) -> f64 {
    libm::sqrt(snr * noise_power)
}

/// Linear SNR from its decibel value.
pub fn snr_from_db(snr_db: f64) -> f64 {
    libm::pow(10.0, snr_db / 10.0)
}

/// Synthesizes one pixel: the coherent sum of all target responses plus
/// circular complex Gaussian noise of per-sample power `noise_power`
/// (set it to zero for noiseless fixtures).
pub fn synthesize_pixel<R: Rng + ?Sized>(
    geom: &TomoGeometry,
    targets: &[Target],
    noise_power: f64,
    rng: &mut R,
) -> Vec<C64> {
    let n = geom.n();
    let mut g = vec![C64::new(0.0, 0.0); n];
    let mut steer = vec![C64::new(0.0, 0.0); n];
    for t in targets {
        geom.steering_into(t.elevation, &mut steer);
        for (gi, si) in g.iter_mut().zip(&steer) {
            *gi += t.reflectivity * si;
        }
    }
    if noise_power > 0.0 {
        let scale = libm::sqrt(noise_power / 2.0);
        for gi in g.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *gi += C64::new(scale * re, scale * im);
        }
    }
    g
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Derives a 256-bit RNG seed from a master seed and a stream path
/// (e.g. `[experiment, sweep point, trial index]`).
///
/// The mapping is a chained SplitMix64 finalizer: deterministic, cheap, and
/// well-spread, so trials can be distributed across workers in any order
/// without changing their random streams.
pub fn derive_seed(master: u64, stream_ids: &[u64]) -> [u8; 32] {
    let mut state = mix(master ^ 0x6A09_E667_F3BC_C908);
    for &id in stream_ids {
        state = mix(state.wrapping_add(GOLDEN_GAMMA).wrapping_add(id));
    }
    let mut out = [0u8; 32];
    for (w, chunk) in out.chunks_exact_mut(8).enumerate() {
        state = state.wrapping_add(GOLDEN_GAMMA);
        let word = mix(state ^ (w as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    out
}
