//! Acquisition geometry, steering vectors, and beamforming correlations.
//!
//! A tomographic stack is described by the orthogonal baselines `b_n` of its
//! `N` acquisitions together with the product `λ·R0` of wavelength and slant
//! range. A scatterer at elevation `s` appears across the stack as the
//! steering vector
//!
//! ```text
//! a(s)[n] = exp(j·2π·ξ_n·s),    ξ_n = 2·b_n / (λ·R0),
//! ```
//!
//! and the elevation search space `[0, Δs]` is discretized into `M` grid
//! points. The Rayleigh resolution `ρ_s = λ·R0 / (2·Δb)` (with `Δb` the
//! baseline span) sets the natural separation unit: scatterers closer than
//! `ρ_s` are unresolvable by plain beamforming and require the fine search.
//!
//! For an equispaced baseline stack the normalized correlation between two
//! steering vectors has a closed form: a Dirichlet kernel in the elevation
//! offset times a unit-modulus phase set by the mean baseline. The
//! [`TomoGeometry::uniform`] constructor centers the baselines on their
//! midpoint, which zeroes the mean and makes grid correlations purely real —
//! the convention assumed by the closed-form detection analysis in
//! [`crate::analytic`].

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::C64;

/// Relative tolerance for classifying a baseline stack as equispaced.
const EQUISPACED_REL_TOL: f64 = 1e-9;

/// Tomographic acquisition geometry plus the elevation search grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TomoGeometry {
    baselines: Vec<f64>,
    lambda_r0: f64,
    extent: f64,
    grid_size: usize,
}

impl TomoGeometry {
    /// Builds a geometry from explicit baselines (meters), the
    /// wavelength–range product `λ·R0` (m²), the elevation extent `Δs` (m),
    /// and the grid size `M`.
    pub fn new(
        baselines: Vec<f64>,
        lambda_r0: f64,
        extent: f64,
        grid_size: usize,
    ) -> Result<Self> {
        if baselines.len() < 2 {
            return Err(Error::InvalidParameter("need at least two baselines"));
        }
        if !baselines.iter().all(|b| b.is_finite()) {
            return Err(Error::InvalidParameter("baselines must be finite"));
        }
        if !(lambda_r0 > 0.0) || !lambda_r0.is_finite() {
            return Err(Error::InvalidParameter("lambda_r0 must be positive"));
        }
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::InvalidParameter("elevation extent must be positive"));
        }
        if grid_size < 2 {
            return Err(Error::InvalidParameter("grid needs at least two points"));
        }
        let geom = TomoGeometry {
            baselines,
            lambda_r0,
            extent,
            grid_size,
        };
        if !(geom.span() > 0.0) {
            return Err(Error::InvalidParameter("baseline span must be positive"));
        }
        Ok(geom)
    }

    /// Equispaced stack of `n` baselines spanning `total_baseline` meters,
    /// centered on the aperture midpoint: `b_i = (i/(n-1) - 1/2)·Δb`.
    ///
    /// Centering zeroes the mean baseline, so correlations between grid
    /// steering vectors are real-valued Dirichlet kernels.
    pub fn uniform(
        n: usize,
        total_baseline: f64,
        lambda_r0: f64,
        extent: f64,
        grid_size: usize,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter("need at least two baselines"));
        }
        if !(total_baseline > 0.0) || !total_baseline.is_finite() {
            return Err(Error::InvalidParameter("baseline span must be positive"));
        }
        let baselines = (0..n)
            .map(|i| (i as f64 / (n - 1) as f64 - 0.5) * total_baseline)
            .collect();
        Self::new(baselines, lambda_r0, extent, grid_size)
    }

    /// Number of acquisitions `N`.
    pub fn n(&self) -> usize {
        self.baselines.len()
    }

    /// Number of elevation grid points `M`.
    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    /// Orthogonal baselines in meters.
    pub fn baselines(&self) -> &[f64] {
        &self.baselines
    }

    /// The wavelength–range product `λ·R0` in m².
    pub fn lambda_r0(&self) -> f64 {
        self.lambda_r0
    }

    /// Elevation search extent `Δs` in meters.
    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// Baseline span `Δb = max(b) - min(b)`.
    pub fn span(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &b in &self.baselines {
            lo = lo.min(b);
            hi = hi.max(b);
        }
        hi - lo
    }

    /// Mean baseline (zero for [`TomoGeometry::uniform`] stacks).
    pub fn mean_baseline(&self) -> f64 {
        self.baselines.iter().sum::<f64>() / self.n() as f64
    }

    /// Rayleigh elevation resolution `ρ_s = λ·R0 / (2·Δb)` in meters.
    pub fn rayleigh_resolution(&self) -> f64 {
        self.lambda_r0 / (2.0 * self.span())
    }

    /// Elevation spacing between adjacent grid points.
    pub fn grid_step(&self) -> f64 {
        self.extent / (self.grid_size - 1) as f64
    }

    /// Elevation of grid point `i`.
    pub fn grid_position(&self, i: usize) -> f64 {
        debug_assert!(i < self.grid_size);
        i as f64 * self.grid_step()
    }

    /// Spatial frequency `ξ_n = 2·b_n / (λ·R0)` of acquisition `n`.
    pub fn spatial_frequency(&self, n: usize) -> f64 {
        2.0 * self.baselines[n] / self.lambda_r0
    }

    /// Writes the steering vector for elevation `s` into `out`
    /// (length `N`): `out[n] = exp(j·2π·ξ_n·s)`.
    pub fn steering_into(&self, s: f64, out: &mut [C64]) {
        debug_assert_eq!(out.len(), self.n());
        for (o, &b) in out.iter_mut().zip(&self.baselines) {
            let phase = 4.0 * core::f64::consts::PI * b * s / self.lambda_r0;
            *o = C64::new(libm::cos(phase), libm::sin(phase));
        }
    }

    /// Steering vector for elevation `s`.
    pub fn steering(&self, s: f64) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.n()];
        self.steering_into(s, &mut out);
        out
    }

    /// Whether the baselines are equispaced (any origin), within a relative
    /// tolerance on the common increment.
    pub fn is_equispaced(&self) -> bool {
        let n = self.n();
        let step = (self.baselines[n - 1] - self.baselines[0]) / (n - 1) as f64;
        let tol = EQUISPACED_REL_TOL * self.span().max(f64::MIN_POSITIVE);
        self.baselines
            .windows(2)
            .all(|w| libm::fabs(w[1] - w[0] - step) <= tol)
    }

    /// Normalized correlation `aᴴ(s)·a(s + δs) / N` between steering vectors
    /// at elevation offset `δs`; independent of the anchor elevation `s`.
    ///
    /// For an equispaced stack this evaluates the closed form
    /// `exp(j·4π·b̄·δs/(λR0)) · D_N(2π·δb·δs/(λR0))` with `δb` the baseline
    /// increment, `b̄` the mean baseline, and `D_N` the Dirichlet kernel;
    /// otherwise it falls back to the direct sum.
    pub fn correlation_at_offset(&self, delta_s: f64) -> C64 {
        let n = self.n();
        if self.is_equispaced() {
            let db = (self.baselines[n - 1] - self.baselines[0]) / (n - 1) as f64;
            let theta = 2.0 * core::f64::consts::PI * db * delta_s / self.lambda_r0;
            let mag = dirichlet_kernel(n, theta);
            let phase = 4.0 * core::f64::consts::PI * self.mean_baseline() * delta_s
                / self.lambda_r0;
            C64::new(libm::cos(phase), libm::sin(phase)) * mag
        } else {
            let mut acc = C64::new(0.0, 0.0);
            for &b in &self.baselines {
                let phase = 4.0 * core::f64::consts::PI * b * delta_s / self.lambda_r0;
                acc += C64::new(libm::cos(phase), libm::sin(phase));
            }
            acc / n as f64
        }
    }

    /// Normalized correlation between grid columns `d` steps apart.
    pub fn correlation_coefficient(&self, d: usize) -> C64 {
        self.correlation_at_offset(d as f64 * self.grid_step())
    }
}

/// The normalized Dirichlet kernel `sin(n·θ) / (n·sin θ)`, evaluated
/// stably for any real `θ` (period-folding plus a series expansion near the
/// removable singularities).
///
/// `dirichlet_kernel(n, 0) = 1`; zeros fall at `θ = k·π/n` for `k` not a
/// multiple of `n`.
pub fn dirichlet_kernel(n: usize, theta: f64) -> f64 {
    debug_assert!(n >= 1);
    let nf = n as f64;
    let k = libm::round(theta / core::f64::consts::PI);
    let delta = theta - k * core::f64::consts::PI;
    // sin(nθ)/sin(θ) picks up (-1)^(k·(n-1)) when θ crosses multiples of π.
    let sign = if (k as i64 * (n as i64 - 1)) % 2 == 0 {
        1.0
    } else {
        -1.0
    };
    if libm::fabs(delta) < 1e-8 {
        sign * (1.0 - (nf * nf - 1.0) * delta * delta / 6.0)
    } else {
        sign * libm::sin(nf * delta) / (nf * libm::sin(delta))
    }
}

/// Precomputed steering vectors for every elevation grid point, shared
/// immutably by all detectors (column-major, `N × M`).
#[derive(Debug, Clone)]
pub struct SteeringMatrix {
    geom: TomoGeometry,
    cols: Vec<C64>,
}

impl SteeringMatrix {
    /// Evaluates the steering vector at every grid elevation.
    pub fn build(geom: &TomoGeometry) -> Self {
        let n = geom.n();
        let m = geom.grid_size();
        let mut cols = vec![C64::new(0.0, 0.0); n * m];
        for i in 0..m {
            geom.steering_into(geom.grid_position(i), &mut cols[i * n..(i + 1) * n]);
        }
        SteeringMatrix {
            geom: geom.clone(),
            cols,
        }
    }

    /// The generating geometry.
    pub fn geometry(&self) -> &TomoGeometry {
        &self.geom
    }

    /// Number of acquisitions `N`.
    pub fn n(&self) -> usize {
        self.geom.n()
    }

    /// Number of grid columns `M`.
    pub fn m(&self) -> usize {
        self.geom.grid_size()
    }

    /// Steering column for grid point `i`.
    pub fn column(&self, i: usize) -> &[C64] {
        let n = self.geom.n();
        &self.cols[i * n..(i + 1) * n]
    }

    /// Elevation of grid point `i`.
    pub fn position(&self, i: usize) -> f64 {
        self.geom.grid_position(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vdot;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// The reference uniform geometry used throughout the simulation
    /// campaign: N = 20, span 903 m, λ·R0 = 46956 m², Δs = 360 m, M = 234.
    fn reference() -> TomoGeometry {
        TomoGeometry::uniform(20, 903.0, 46956.0, 360.0, 234).unwrap()
    }

    #[test]
    fn test_uniform_baselines_are_centered() {
        let g = reference();
        assert_abs_diff_eq!(g.mean_baseline(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(g.span(), 903.0, epsilon = 1e-12);
        assert_relative_eq!(g.baselines()[0], -451.5, epsilon = 1e-12);
        assert_relative_eq!(g.baselines()[19], 451.5, epsilon = 1e-12);
    }

    #[test]
    fn test_rayleigh_resolution_reference_value() {
        // 46956 / (2·903) = 26 m exactly.
        assert_relative_eq!(reference().rayleigh_resolution(), 26.0, epsilon = 1e-12);
    }

    #[test]
    fn test_grid_density_about_17_points_per_resolution_unit() {
        let g = reference();
        let per_rho = g.rayleigh_resolution() / g.grid_step();
        assert!((16.5..17.5).contains(&per_rho), "got {per_rho}");
    }

    #[test]
    fn test_steering_entries_unit_modulus() {
        let g = reference();
        for &s in &[0.0, 13.7, 359.9] {
            for v in g.steering(s) {
                assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn test_steering_at_zero_elevation_is_all_ones() {
        for v in reference().steering(0.0) {
            assert_relative_eq!(v.re, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn test_closed_form_correlation_matches_inner_product() {
        let g = reference();
        let sm = SteeringMatrix::build(&g);
        for &d in &[0usize, 1, 5, 17, 50, 101, 233] {
            let direct = vdot(sm.column(0), sm.column(d)) / g.n() as f64;
            let closed = g.correlation_coefficient(d);
            assert_abs_diff_eq!(direct.re, closed.re, epsilon = 1e-10);
            assert_abs_diff_eq!(direct.im, closed.im, epsilon = 1e-10);
        }
    }

    #[test]
    fn test_centered_stack_correlation_is_real() {
        let g = reference();
        for &d in &[1usize, 9, 40, 120] {
            assert_abs_diff_eq!(g.correlation_coefficient(d).im, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn test_anchor_independence_of_correlation() {
        let g = reference();
        let sm = SteeringMatrix::build(&g);
        let d = 29;
        let at0 = vdot(sm.column(0), sm.column(d));
        let at77 = vdot(sm.column(77), sm.column(77 + d));
        assert_abs_diff_eq!(at0.re, at77.re, epsilon = 1e-9);
        assert_abs_diff_eq!(at0.im, at77.im, epsilon = 1e-9);
    }

    #[test]
    fn test_correlation_magnitude_at_one_resolution_unit() {
        // |correlation| at offset ρ_s equals exactly 1/N for a uniform stack.
        let g = reference();
        let c = g.correlation_at_offset(g.rayleigh_resolution());
        assert_relative_eq!(c.norm(), 1.0 / 20.0, epsilon = 1e-12);
    }

    #[test]
    fn test_correlation_zero_at_dirichlet_null() {
        // First exact null at offset (N-1)/N·ρ_s.
        let g = reference();
        let null = 19.0 / 20.0 * g.rayleigh_resolution();
        assert_abs_diff_eq!(g.correlation_at_offset(null).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn test_off_center_equispaced_stack_same_magnitude_extra_phase() {
        // Shifting all baselines changes only the phase of the correlation.
        let centered = reference();
        let shifted = TomoGeometry::new(
            centered.baselines().iter().map(|b| b + 451.5).collect(),
            46956.0,
            360.0,
            234,
        )
        .unwrap();
        assert!(shifted.is_equispaced());
        for &d in &[3usize, 21, 64] {
            let c0 = centered.correlation_coefficient(d);
            let c1 = shifted.correlation_coefficient(d);
            assert_relative_eq!(c0.norm(), c1.norm(), epsilon = 1e-12);
            assert!(libm::fabs(c1.im) > 0.0 || c1.norm() < 1e-12);
        }
    }

    #[test]
    fn test_is_equispaced_rejects_jittered_baselines() {
        let mut b: Vec<f64> = (0..10).map(|i| i as f64 * 100.0).collect();
        b[4] += 7.5;
        let g = TomoGeometry::new(b, 46956.0, 360.0, 64).unwrap();
        assert!(!g.is_equispaced());
    }

    #[test]
    fn test_dirichlet_kernel_basics() {
        assert_relative_eq!(dirichlet_kernel(20, 0.0), 1.0, epsilon = 1e-15);
        // Continuity across the removable singularity at π.
        let n = 20;
        let at_pi = dirichlet_kernel(n, core::f64::consts::PI);
        let near_pi = dirichlet_kernel(n, core::f64::consts::PI - 1e-6);
        assert_relative_eq!(at_pi, -1.0, epsilon = 1e-12);
        assert_relative_eq!(near_pi, at_pi, epsilon = 1e-9);
        // Zero at θ = π/n.
        assert_abs_diff_eq!(
            dirichlet_kernel(n, core::f64::consts::PI / n as f64),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn test_dirichlet_kernel_matches_naive_ratio() {
        for i in 1..40 {
            let theta = 0.083 * i as f64;
            let naive = libm::sin(20.0 * theta) / (20.0 * libm::sin(theta));
            if libm::fabs(libm::sin(theta)) > 1e-3 {
                assert_relative_eq!(dirichlet_kernel(20, theta), naive, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn test_constructor_rejects_bad_parameters() {
        assert!(TomoGeometry::uniform(1, 903.0, 46956.0, 360.0, 234).is_err());
        assert!(TomoGeometry::uniform(20, 0.0, 46956.0, 360.0, 234).is_err());
        assert!(TomoGeometry::uniform(20, 903.0, -1.0, 360.0, 234).is_err());
        assert!(TomoGeometry::uniform(20, 903.0, 46956.0, 0.0, 234).is_err());
        assert!(TomoGeometry::uniform(20, 903.0, 46956.0, 360.0, 1).is_err());
        assert!(TomoGeometry::new(vec![5.0, 5.0], 46956.0, 360.0, 16).is_err());
    }

    #[test]
    fn test_steering_matrix_layout() {
        let g = reference();
        let sm = SteeringMatrix::build(&g);
        assert_eq!(sm.n(), 20);
        assert_eq!(sm.m(), 234);
        let direct = g.steering(g.grid_position(100));
        for (a, b) in sm.column(100).iter().zip(&direct) {
            assert_relative_eq!(a.re, b.re, epsilon = 1e-15);
            assert_relative_eq!(a.im, b.im, epsilon = 1e-15);
        }
        assert_relative_eq!(sm.position(233), 360.0, epsilon = 1e-12);
    }
}
