//! Run configuration: a single TOML file with every experiment's knobs.
//!
//! Every field has a default, so an empty file is a valid configuration
//! describing the reference single-pixel setup (N = 20 acquisitions,
//! M = 234 grid points, T = 0.8, k_max = 2). Unknown keys are rejected to
//! catch typos early, and validation failures name the offending field.

use anyhow::{bail, Context, Result};
use canls::fine::{ModelSelectionConfig, NoisePower, PenaltyRule};
use canls::geometry::TomoGeometry;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 picks the number of CPUs.
    pub threads: usize,
    pub geometry: GeometryConfig,
    pub detector: DetectorConfig,
    pub pd_sweep: SweepConfig,
    pub rmse_sweep: RmseSweepConfig,
    pub penalty_compare: PenaltyCompareConfig,
    pub layover: LayoverConfig,
    pub reconstruction: ReconstructionConfig,
    pub timing: TimingConfig,
    pub calibration: CalibrationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: crate::experiments::DEFAULT_SEED,
            threads: 0,
            geometry: GeometryConfig::default(),
            detector: DetectorConfig::default(),
            pd_sweep: SweepConfig::default(),
            rmse_sweep: RmseSweepConfig::default(),
            penalty_compare: PenaltyCompareConfig::default(),
            layover: LayoverConfig::default(),
            reconstruction: ReconstructionConfig::default(),
            timing: TimingConfig::default(),
            calibration: CalibrationConfig::default(),
        }
    }
}

/// Elevation aperture and grid. Defaults reproduce the reference
/// single-pixel geometry: ρ_s = 26 m and roughly 17 grid points per
/// resolution unit.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    /// Number of acquisitions.
    pub n: usize,
    /// Total orthogonal-baseline span, meters.
    pub delta_b: f64,
    /// Wavelength × slant range product, m².
    pub lambda_r0: f64,
    /// Elevation extent covered by the grid, meters.
    pub extent: f64,
    /// Number of grid points.
    pub grid_size: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            n: 20,
            delta_b: 903.0,
            lambda_r0: 46_956.0,
            extent: 360.0,
            grid_size: 234,
        }
    }
}

impl GeometryConfig {
    pub fn build(&self) -> Result<TomoGeometry> {
        TomoGeometry::uniform(self.n, self.delta_b, self.lambda_r0, self.extent, self.grid_size)
            .map_err(|e| anyhow::anyhow!("geometry: {e}"))
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// CFAR threshold of the coarse stage.
    pub threshold: f64,
    pub k_max: usize,
    /// `aic` | `bic` | `aicc`.
    pub penalty: String,
    /// `known` | `unknown`.
    pub noise: String,
    /// Per-sample noise power when `noise = "known"`.
    pub noise_power: f64,
    pub fast_path: bool,
    /// Fine-grid subdivision factor inside the coarse windows.
    pub refine: usize,
    /// Scale factor of the universal-threshold rule used by the
    /// sparse-recovery detector.
    pub sl1mmer_c: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            threshold: 0.8,
            k_max: 2,
            penalty: "bic".into(),
            noise: "known".into(),
            noise_power: 1.0,
            fast_path: true,
            refine: 1,
            sl1mmer_c: 2.0,
        }
    }
}

impl DetectorConfig {
    pub fn penalty_rule(&self) -> Result<PenaltyRule> {
        parse_penalty(&self.penalty).context("detector.penalty")
    }

    pub fn noise_power(&self) -> Result<NoisePower> {
        match self.noise.as_str() {
            "known" => Ok(NoisePower::Known(self.noise_power)),
            "unknown" => Ok(NoisePower::Unknown),
            other => bail!("detector.noise: expected \"known\" or \"unknown\", got \"{other}\""),
        }
    }

    pub fn selection(&self) -> Result<ModelSelectionConfig> {
        Ok(ModelSelectionConfig::new(
            self.penalty_rule()?,
            self.noise_power()?,
            self.k_max,
        ))
    }
}

pub fn parse_penalty(name: &str) -> Result<PenaltyRule> {
    match name {
        "aic" => Ok(PenaltyRule::Aic),
        "bic" => Ok(PenaltyRule::Bic),
        "aicc" => Ok(PenaltyRule::Aicc),
        other => bail!("expected \"aic\", \"bic\" or \"aicc\", got \"{other}\""),
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// `snr_db` or `alpha`.
    pub variable: String,
    pub values: Vec<f64>,
    /// Separation in resolution units when sweeping SNR.
    pub alpha: f64,
    /// Per-target SNR in dB when sweeping α.
    pub snr_db: f64,
    pub trials: usize,
    pub detectors: Vec<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            variable: "snr_db".into(),
            values: vec![0.0, 3.0, 6.0, 9.0, 12.0, 15.0],
            alpha: 0.5,
            snr_db: 9.0,
            trials: 2000,
            detectors: vec!["ca-nls".into(), "sglrtc".into(), "sl1mmer".into()],
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct RmseSweepConfig {
    pub variable: String,
    pub values: Vec<f64>,
    pub alpha: f64,
    pub snr_db: f64,
    pub trials: usize,
    pub detectors: Vec<String>,
    /// Estimation benefits from a finer elevation grid, so the accuracy
    /// sweep defaults to a 2× subdivision of the coarse windows.
    pub refine: usize,
}

impl Default for RmseSweepConfig {
    fn default() -> Self {
        RmseSweepConfig {
            variable: "snr_db".into(),
            values: vec![6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0],
            alpha: 0.5,
            snr_db: 14.0,
            trials: 2000,
            detectors: vec!["ca-nls".into(), "sglrtc".into()],
            refine: 2,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyCompareConfig {
    pub snr_db: Vec<f64>,
    pub alpha: f64,
    pub trials: usize,
}

impl Default for PenaltyCompareConfig {
    fn default() -> Self {
        PenaltyCompareConfig {
            snr_db: vec![3.0, 6.0, 9.0, 12.0],
            alpha: 0.5,
            trials: 2000,
        }
    }
}

/// Ground + facade pixels with linearly increasing spacing, on the
/// airborne-style stack (N = 24, ρ_s = 10 m).
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoverConfig {
    pub pixels: usize,
    pub ground: f64,
    pub min_separation: f64,
    pub max_separation: f64,
    pub snr_db: f64,
    /// `zero` or `random` scatterer phase difference.
    pub phase_mode: String,
    pub detectors: Vec<String>,
    /// CFAR threshold for the layover stack (calibrated at P_FA = 1e−3
    /// for the default N = 24 geometry).
    pub threshold: f64,
}

impl Default for LayoverConfig {
    fn default() -> Self {
        LayoverConfig {
            pixels: 204,
            ground: 10.0,
            min_separation: 1.0,
            max_separation: 30.0,
            snr_db: 9.0,
            phase_mode: "random".into(),
            detectors: vec!["ca-nls".into(), "sglrtc".into(), "sl1mmer".into()],
            threshold: 0.585,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructionConfig {
    /// Azimuth columns; 8 gives the 408-pixel desk scene, 15 the full
    /// 765-pixel reference scene.
    pub azimuth: usize,
    pub snr_db: f64,
    /// CFAR threshold for the reconstruction stack (calibrated at
    /// P_FA = 1e−3 for the default N = 24 geometry).
    pub threshold: f64,
    pub k_max: usize,
    pub refine: usize,
    /// The reconstruction searches the full coarse windows so the order
    /// selection may consider more scatterers than accepted coarse peaks.
    pub fast_path: bool,
    pub penalties: Vec<String>,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            azimuth: 8,
            snr_db: 9.0,
            threshold: 0.585,
            k_max: 3,
            refine: 1,
            fast_path: false,
            penalties: vec!["bic".into(), "aic".into(), "aicc".into()],
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConfig {
    pub grid_sizes: Vec<usize>,
    pub trials: usize,
    /// Trials for the exhaustive oracle (much slower than the rest).
    pub exhaustive_trials: usize,
    /// The plain CFAR detector runs on a fixed resolution-level grid of
    /// its own, independent of the sweep grid size.
    pub sglrtc_grid: usize,
    pub alpha: f64,
    pub snr_db: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            grid_sizes: vec![100, 200, 300],
            trials: 100,
            exhaustive_trials: 20,
            sglrtc_grid: 100,
            alpha: 0.5,
            snr_db: 9.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub p_fa: f64,
    pub trials: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            p_fa: 1e-3,
            trials: 40_000,
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if g.n < 2 {
            bail!("geometry.n: need at least 2 acquisitions (got {})", g.n);
        }
        if g.grid_size < 2 {
            bail!("geometry.grid_size: need at least 2 grid points (got {})", g.grid_size);
        }
        if !(g.delta_b > 0.0) {
            bail!("geometry.delta_b: must be positive (got {})", g.delta_b);
        }
        if !(g.lambda_r0 > 0.0) {
            bail!("geometry.lambda_r0: must be positive (got {})", g.lambda_r0);
        }
        if !(g.extent > 0.0) {
            bail!("geometry.extent: must be positive (got {})", g.extent);
        }
        let d = &self.detector;
        if !(d.threshold > 0.0) || !d.threshold.is_finite() {
            bail!("detector.threshold: must be positive and finite (got {})", d.threshold);
        }
        if d.k_max == 0 {
            bail!("detector.k_max: must be at least 1");
        }
        if d.refine == 0 {
            bail!("detector.refine: must be at least 1");
        }
        if !(d.noise_power > 0.0) {
            bail!("detector.noise_power: must be positive (got {})", d.noise_power);
        }
        d.penalty_rule()?;
        d.noise_power()?;
        for (section, variable) in [
            ("pd_sweep", &self.pd_sweep.variable),
            ("rmse_sweep", &self.rmse_sweep.variable),
        ] {
            if variable != "snr_db" && variable != "alpha" {
                bail!("{section}.variable: expected \"snr_db\" or \"alpha\", got \"{variable}\"");
            }
        }
        if self.pd_sweep.values.is_empty() {
            bail!("pd_sweep.values: need at least one sweep point");
        }
        if self.rmse_sweep.values.is_empty() {
            bail!("rmse_sweep.values: need at least one sweep point");
        }
        if self.rmse_sweep.refine == 0 {
            bail!("rmse_sweep.refine: must be at least 1");
        }
        if !(self.pd_sweep.alpha > 0.0) {
            bail!("pd_sweep.alpha: must be positive (got {})", self.pd_sweep.alpha);
        }
        if !(self.rmse_sweep.alpha > 0.0) {
            bail!("rmse_sweep.alpha: must be positive (got {})", self.rmse_sweep.alpha);
        }
        if self.layover.pixels == 0 {
            bail!("layover.pixels: need at least one pixel");
        }
        if self.layover.phase_mode != "zero" && self.layover.phase_mode != "random" {
            bail!(
                "layover.phase_mode: expected \"zero\" or \"random\", got \"{}\"",
                self.layover.phase_mode
            );
        }
        if !(self.layover.min_separation > 0.0)
            || self.layover.max_separation < self.layover.min_separation
        {
            bail!("layover.min_separation/max_separation: need 0 < min <= max");
        }
        if !(self.layover.threshold > 0.0) || !self.layover.threshold.is_finite() {
            bail!(
                "layover.threshold: must be positive and finite (got {})",
                self.layover.threshold
            );
        }
        if !(self.reconstruction.threshold > 0.0) || !self.reconstruction.threshold.is_finite() {
            bail!(
                "reconstruction.threshold: must be positive and finite (got {})",
                self.reconstruction.threshold
            );
        }
        if self.reconstruction.azimuth == 0 {
            bail!("reconstruction.azimuth: need at least one azimuth column");
        }
        if self.reconstruction.k_max == 0 {
            bail!("reconstruction.k_max: must be at least 1");
        }
        if self.reconstruction.refine == 0 {
            bail!("reconstruction.refine: must be at least 1");
        }
        if self.reconstruction.penalties.is_empty() {
            bail!("reconstruction.penalties: need at least one rule");
        }
        for p in &self.reconstruction.penalties {
            parse_penalty(p).context("reconstruction.penalties")?;
        }
        if self.timing.grid_sizes.is_empty() {
            bail!("timing.grid_sizes: need at least one grid size");
        }
        if self.timing.trials == 0 || self.timing.exhaustive_trials == 0 {
            bail!("timing.trials/exhaustive_trials: must be positive");
        }
        if self.timing.sglrtc_grid < 2 {
            bail!("timing.sglrtc_grid: need at least 2 grid points");
        }
        if !(self.calibration.p_fa > 0.0 && self.calibration.p_fa < 1.0) {
            bail!("calibration.p_fa: must lie in (0, 1) (got {})", self.calibration.p_fa);
        }
        Ok(())
    }
}

/// The airborne-style stack used by the layover and reconstruction
/// experiments: N = 24, ρ_s = 10 m, 120 m extent, 205 grid points.
pub fn structure_geometry() -> GeometryConfig {
    let lambda_r0 = 299_792_458.0 / 4.5e9 * 20_000.0;
    GeometryConfig {
        n: 24,
        delta_b: lambda_r0 / 20.0,
        lambda_r0,
        extent: 120.0,
        grid_size: 205,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_empty_config_gives_reference_defaults() {
        let cfg = RunConfig::from_str("").unwrap();
        assert_eq!(cfg.geometry.n, 20);
        assert_eq!(cfg.geometry.grid_size, 234);
        assert_eq!(cfg.detector.threshold, 0.8);
        assert_eq!(cfg.detector.k_max, 2);
        let geom = cfg.geometry.build().unwrap();
        assert!((geom.rayleigh_resolution() - 26.0).abs() < 1e-9);
    }

    #[test]
    fn test_overrides_build_layover_setup() {
        let cfg = RunConfig::from_str(
            "[geometry]\nn = 24\n[pd_sweep]\nsnr_db = 9.0\n",
        )
        .unwrap();
        assert_eq!(cfg.geometry.n, 24);
        assert_eq!(cfg.pd_sweep.snr_db, 9.0);
    }

    #[test]
    fn test_invalid_n_is_rejected_by_name() {
        let err = RunConfig::from_str("[geometry]\nn = 1\n").unwrap_err();
        assert!(format!("{err:#}").contains("geometry.n"), "{err:#}");
    }

    #[test]
    fn test_unknown_keys_are_rejected() {
        assert!(RunConfig::from_str("grid_pionts = 3\n").is_err());
        assert!(RunConfig::from_str("[geometry]\ndelta_bee = 1.0\n").is_err());
    }

    #[test]
    fn test_bad_enumerations_are_rejected() {
        assert!(RunConfig::from_str("[detector]\npenalty = \"ric\"\n").is_err());
        assert!(RunConfig::from_str("[detector]\nnoise = \"maybe\"\n").is_err());
        assert!(RunConfig::from_str("[pd_sweep]\nvariable = \"phase\"\n").is_err());
        assert!(RunConfig::from_str("[layover]\nphase_mode = \"pi\"\n").is_err());
    }

    #[test]
    fn test_structure_geometry_resolution() {
        let geom = structure_geometry().build().unwrap();
        assert!((geom.rayleigh_resolution() - 10.0).abs() < 1e-9);
        assert_eq!(geom.n(), 24);
    }
}
