//! Monte Carlo experiment harness.
//!
//! Every experiment follows the same discipline: a master seed plus a
//! stream-id tuple (experiment, sweep point, trial) derives one
//! independent RNG per trial, so results are bit-reproducible regardless
//! of how trials are scheduled across threads. All detectors inside a
//! trial consume the *same* synthesized measurement (paired comparison),
//! which removes most Monte Carlo noise from detector differences.
//!
//! Detection bookkeeping: a two-target trial counts as detected when the
//! selected order is exactly two and each estimated elevation lies within
//! one resolution unit of a distinct true target; false detection is a
//! two-target report on a single-target pixel. RMSE is computed only over
//! detected trials.

use anyhow::{bail, Result};
use canls::analytic::crlb_single;
use canls::baselines::{exhaustive_nls_detect, sglrtc_detect, sl1mmer_detect, LambdaRule};
use canls::fine::{
    detect_pixel, Detection, DetectorParams, ModelSelectionConfig, NoisePower, PenaltyRule,
};
use canls::geometry::{SteeringMatrix, TomoGeometry};
use canls::scene::{derive_seed, snr_from_db, synthesize_pixel, Target};
use canls::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::time::Instant;

/// Stream ids keeping the experiments' random draws disjoint.
pub mod stream {
    pub const PD_SWEEP: u64 = 1;
    pub const RMSE_SWEEP: u64 = 2;
    pub const PENALTY: u64 = 3;
    pub const LAYOVER: u64 = 4;
    pub const RECONSTRUCTION: u64 = 5;
    pub const TIMING: u64 = 6;
    pub const CALIBRATION: u64 = 7;
}

/// Default master seed; fixed so fresh checkouts reproduce the shipped
/// fixtures.
pub const DEFAULT_SEED: u64 = 20_260_814;

/// One aggregated row of an experiment (one detector at one sweep point).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ExperimentRecord {
    pub detector: String,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub trials: usize,
    /// Probability of detection; absent where not meaningful.
    pub pd: Option<f64>,
    /// Probability of false detection; absent where not meaningful.
    pub pfd: Option<f64>,
    /// RMSE over detected trials, meters; absent when nothing was
    /// detected.
    pub rmse_m: Option<f64>,
    /// Mean wall-clock seconds per pixel; only the timing benchmark
    /// fills this.
    pub mean_elapsed_s: Option<f64>,
    pub seed: u64,
}

/// Detectors selectable from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    CaNls,
    Sglrtc,
    Sl1mmer,
    ExhaustiveNls,
}

impl DetectorKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "ca-nls" => Ok(DetectorKind::CaNls),
            "sglrtc" => Ok(DetectorKind::Sglrtc),
            "sl1mmer" => Ok(DetectorKind::Sl1mmer),
            "exhaustive-nls" => Ok(DetectorKind::ExhaustiveNls),
            other => bail!(
                "unknown detector \"{other}\" (expected ca-nls, sglrtc, sl1mmer or exhaustive-nls)"
            ),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            DetectorKind::CaNls => "ca-nls",
            DetectorKind::Sglrtc => "sglrtc",
            DetectorKind::Sl1mmer => "sl1mmer",
            DetectorKind::ExhaustiveNls => "exhaustive-nls",
        }
    }
}

pub fn parse_detectors(names: &[String]) -> Result<Vec<DetectorKind>> {
    names.iter().map(|n| DetectorKind::parse(n)).collect()
}

/// Detector-side settings shared by the sweep experiments.
#[derive(Debug, Clone, Copy)]
pub struct DetectorSettings {
    pub threshold: f64,
    pub selection: ModelSelectionConfig,
    pub fast_path: bool,
    pub refine: usize,
    pub sl1mmer_c: f64,
}

impl DetectorSettings {
    fn params(&self) -> DetectorParams {
        DetectorParams {
            threshold: self.threshold,
            fast_path: self.fast_path,
            refine: self.refine,
            full_grid: false,
            selection: self.selection,
        }
    }

    fn run(&self, kind: DetectorKind, g: &[C64], sm: &SteeringMatrix) -> Result<Detection> {
        let det = match kind {
            DetectorKind::CaNls => detect_pixel(g, sm, &self.params())?,
            DetectorKind::Sglrtc => sglrtc_detect(g, sm, self.threshold, self.selection.k_max)?,
            DetectorKind::Sl1mmer => sl1mmer_detect(
                g,
                sm,
                &self.selection,
                LambdaRule::Universal { c: self.sl1mmer_c },
            )?,
            DetectorKind::ExhaustiveNls => exhaustive_nls_detect(g, sm, &self.selection)?,
        };
        Ok(det)
    }
}

/// What a sweep varies; the other quantity stays fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    SnrDb,
    Alpha,
}

impl SweepVariable {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "snr_db" => Ok(SweepVariable::SnrDb),
            "alpha" => Ok(SweepVariable::Alpha),
            other => bail!("unknown sweep variable \"{other}\""),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            SweepVariable::SnrDb => "snr_db",
            SweepVariable::Alpha => "alpha",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub fixed_alpha: f64,
    pub fixed_snr_db: f64,
    pub trials: usize,
    pub detectors: Vec<DetectorKind>,
    pub experiment_id: u64,
}

/// Matched-pair root mean square error: each estimated pair is assigned
/// to the true pair by elevation order and the per-target squared errors
/// are averaged. `None` when there are no detections to average.
pub fn rmse(estimates: &[(f64, f64)], truth: (f64, f64)) -> Option<f64> {
    if estimates.is_empty() {
        return None;
    }
    let (t_lo, t_hi) = sort_pair(truth);
    let total: f64 = estimates
        .iter()
        .map(|&e| {
            let (e_lo, e_hi) = sort_pair(e);
            ((e_lo - t_lo).powi(2) + (e_hi - t_hi).powi(2)) / 2.0
        })
        .sum();
    Some((total / estimates.len() as f64).sqrt())
}

fn sort_pair(p: (f64, f64)) -> (f64, f64) {
    if p.0 <= p.1 {
        p
    } else {
        (p.1, p.0)
    }
}

/// Squared matched error of a two-target detection, plus the success
/// verdict (both targets hit within one resolution unit).
fn classify_pair(det: &Detection, truth: (f64, f64), rho: f64) -> (bool, f64) {
    if det.k_hat != 2 {
        return (false, 0.0);
    }
    let (t_lo, t_hi) = sort_pair(truth);
    let e_lo = det.elevations[0];
    let e_hi = det.elevations[1];
    let d_lo = (e_lo - t_lo).abs();
    let d_hi = (e_hi - t_hi).abs();
    let ok = d_lo < rho && d_hi < rho;
    (ok, (d_lo * d_lo + d_hi * d_hi) / 2.0)
}

fn trial_rng(seed: u64, ids: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::from_seed(derive_seed(seed, ids))
}

struct TrialTally {
    detected: usize,
    false_detected: usize,
    sq_err: f64,
    n_err: usize,
}

impl TrialTally {
    fn new() -> Self {
        TrialTally {
            detected: 0,
            false_detected: 0,
            sq_err: 0.0,
            n_err: 0,
        }
    }
}

/// Detection-probability sweep over SNR or separation: for each sweep
/// point, `trials` two-target pixels (for P_D and RMSE) and `trials`
/// one-target pixels (for P_FD) are synthesized with per-trial uniform
/// phases and a half-bin center dither, and every requested detector runs
/// on the same measurements.
pub fn run_detection_sweep(
    geom: &TomoGeometry,
    settings: &DetectorSettings,
    plan: &SweepPlan,
    seed: u64,
) -> Result<Vec<ExperimentRecord>> {
    if plan.trials == 0 {
        bail!("trials: need at least one trial");
    }
    if plan.detectors.is_empty() {
        bail!("detectors: need at least one detector");
    }
    let sm = SteeringMatrix::build(geom);
    let rho = geom.rayleigh_resolution();
    let h = geom.grid_step();
    let center = geom.extent() / 2.0;
    let n_det = plan.detectors.len();

    let mut records = Vec::with_capacity(plan.values.len() * n_det);
    for (pi, &value) in plan.values.iter().enumerate() {
        let (snr_db, alpha) = match plan.variable {
            SweepVariable::SnrDb => (value, plan.fixed_alpha),
            SweepVariable::Alpha => (plan.fixed_snr_db, value),
        };
        let amp = snr_from_db(snr_db).sqrt();

        let outcomes: Result<Vec<Vec<(bool, f64, bool)>>> = (0..plan.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = trial_rng(seed, &[plan.experiment_id, pi as u64, t as u64]);
                let dith: f64 = rng.gen_range(-h / 2.0..h / 2.0);
                let dphi: f64 = rng.gen_range(-PI..PI);
                let ph1: f64 = rng.gen_range(-PI..PI);
                let sc = center + dith;
                let s1 = sc - alpha * rho / 2.0;
                let s2 = sc + alpha * rho / 2.0;
                let pair = [
                    Target::from_polar(s1, amp, ph1),
                    Target::from_polar(s2, amp, ph1 + dphi),
                ];
                let g2 = synthesize_pixel(geom, &pair, 1.0, &mut rng);
                let single = [Target::from_polar(s1, amp, ph1)];
                let g1 = synthesize_pixel(geom, &single, 1.0, &mut rng);

                let mut per_detector = Vec::with_capacity(n_det);
                for &kind in &plan.detectors {
                    let det = settings.run(kind, &g2, &sm)?;
                    let (ok, sq) = classify_pair(&det, (s1, s2), rho);
                    let fd = settings.run(kind, &g1, &sm)?.k_hat == 2;
                    per_detector.push((ok, sq, fd));
                }
                Ok(per_detector)
            })
            .collect();
        let outcomes = outcomes?;

        for (di, &kind) in plan.detectors.iter().enumerate() {
            let mut tally = TrialTally::new();
            for trial in &outcomes {
                let (ok, sq, fd) = trial[di];
                if ok {
                    tally.detected += 1;
                    tally.sq_err += sq;
                    tally.n_err += 1;
                }
                if fd {
                    tally.false_detected += 1;
                }
            }
            records.push(ExperimentRecord {
                detector: kind.tag().to_string(),
                sweep_var: plan.variable.tag().to_string(),
                sweep_value: value,
                trials: plan.trials,
                pd: Some(tally.detected as f64 / plan.trials as f64),
                pfd: Some(tally.false_detected as f64 / plan.trials as f64),
                rmse_m: (tally.n_err > 0).then(|| (tally.sq_err / tally.n_err as f64).sqrt()),
                mean_elapsed_s: None,
                seed,
            });
        }
    }
    Ok(records)
}

/// Model order selection rules compared on identical measurements:
/// {AIC, BIC, AICc} × {known, unknown noise power}, at a fixed
/// separation, swept over SNR. Tags look like `ca-nls-aic-known`.
pub fn run_penalty_comparison(
    geom: &TomoGeometry,
    threshold: f64,
    k_max: usize,
    noise_power: f64,
    alpha: f64,
    snr_db: &[f64],
    trials: usize,
    fast_path: bool,
    refine: usize,
    seed: u64,
) -> Result<Vec<ExperimentRecord>> {
    if trials == 0 {
        bail!("trials: need at least one trial");
    }
    let sm = SteeringMatrix::build(geom);
    let rho = geom.rayleigh_resolution();
    let h = geom.grid_step();
    let center = geom.extent() / 2.0;

    let rules = [
        (PenaltyRule::Aic, "aic"),
        (PenaltyRule::Bic, "bic"),
        (PenaltyRule::Aicc, "aicc"),
    ];
    let noises = [
        (NoisePower::Known(noise_power), "known"),
        (NoisePower::Unknown, "unknown"),
    ];

    let mut records = Vec::new();
    for (pi, &db) in snr_db.iter().enumerate() {
        let amp = snr_from_db(db).sqrt();
        let outcomes: Result<Vec<Vec<(bool, bool)>>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = trial_rng(seed, &[stream::PENALTY, pi as u64, t as u64]);
                let dith: f64 = rng.gen_range(-h / 2.0..h / 2.0);
                let dphi: f64 = rng.gen_range(-PI..PI);
                let ph1: f64 = rng.gen_range(-PI..PI);
                let sc = center + dith;
                let s1 = sc - alpha * rho / 2.0;
                let s2 = sc + alpha * rho / 2.0;
                let pair = [
                    Target::from_polar(s1, amp, ph1),
                    Target::from_polar(s2, amp, ph1 + dphi),
                ];
                let g2 = synthesize_pixel(geom, &pair, noise_power, &mut rng);
                let single = [Target::from_polar(s1, amp, ph1)];
                let g1 = synthesize_pixel(geom, &single, noise_power, &mut rng);

                let mut per_cfg = Vec::with_capacity(rules.len() * noises.len());
                for &(rule, _) in &rules {
                    for &(noise, _) in &noises {
                        let settings = DetectorSettings {
                            threshold,
                            selection: ModelSelectionConfig::new(rule, noise, k_max),
                            fast_path,
                            refine,
                            sl1mmer_c: 2.0,
                        };
                        let det = settings.run(DetectorKind::CaNls, &g2, &sm)?;
                        let (ok, _) = classify_pair(&det, (s1, s2), rho);
                        let fd = settings.run(DetectorKind::CaNls, &g1, &sm)?.k_hat == 2;
                        per_cfg.push((ok, fd));
                    }
                }
                Ok(per_cfg)
            })
            .collect();
        let outcomes = outcomes?;

        for (ri, &(_, rule_tag)) in rules.iter().enumerate() {
            for (ni, &(_, noise_tag)) in noises.iter().enumerate() {
                let idx = ri * noises.len() + ni;
                let detected = outcomes.iter().filter(|o| o[idx].0).count();
                let fd = outcomes.iter().filter(|o| o[idx].1).count();
                records.push(ExperimentRecord {
                    detector: format!("ca-nls-{rule_tag}-{noise_tag}"),
                    sweep_var: "snr_db".into(),
                    sweep_value: db,
                    trials,
                    pd: Some(detected as f64 / trials as f64),
                    pfd: Some(fd as f64 / trials as f64),
                    rmse_m: None,
                    mean_elapsed_s: None,
                    seed,
                });
            }
        }
    }
    Ok(records)
}

/// Per-pixel layover separation experiment: one ground target at a fixed
/// elevation, one facade target whose spacing increases linearly across
/// pixels. Each record is one pixel: `pd` flags a two-scatterer
/// detection, `pfd` flags a detection escaping the ±3·√CRLB₁ margin, and
/// `rmse_m` is that pixel's matched error.
#[allow(clippy::too_many_arguments)]
pub fn run_layover_experiment(
    geom: &TomoGeometry,
    settings: &DetectorSettings,
    detectors: &[DetectorKind],
    pixels: usize,
    ground: f64,
    separations: (f64, f64),
    snr_db: f64,
    random_phase: bool,
    seed: u64,
) -> Result<Vec<ExperimentRecord>> {
    if pixels == 0 {
        bail!("pixels: need at least one pixel");
    }
    let sm = SteeringMatrix::build(geom);
    let rho = geom.rayleigh_resolution();
    let amp = snr_from_db(snr_db).sqrt();
    let margin = 3.0 * crlb_single(geom.n(), snr_from_db(snr_db), rho).sqrt();
    let (sep_lo, sep_hi) = separations;

    let outcomes: Result<Vec<Vec<ExperimentRecord>>> = (0..pixels)
        .into_par_iter()
        .map(|px| {
            let mut rng = trial_rng(seed, &[stream::LAYOVER, px as u64, 0]);
            let sep = if pixels == 1 {
                sep_lo
            } else {
                sep_lo + (sep_hi - sep_lo) * px as f64 / (pixels - 1) as f64
            };
            let ph1: f64 = rng.gen_range(-PI..PI);
            let dphi: f64 = rng.gen_range(-PI..PI);
            let dphi = if random_phase { dphi } else { 0.0 };
            let targets = [
                Target::from_polar(ground, amp, ph1),
                Target::from_polar(ground + sep, amp, ph1 + dphi),
            ];
            let g = synthesize_pixel(geom, &targets, 1.0, &mut rng);

            let mut rows = Vec::with_capacity(detectors.len());
            for &kind in detectors {
                let det = settings.run(kind, &g, &sm)?;
                let double = det.k_hat == 2;
                let escaped = if double {
                    let d0 = (det.elevations[0] - ground).abs();
                    let d1 = (det.elevations[1] - (ground + sep)).abs();
                    d0 > margin || d1 > margin
                } else {
                    false
                };
                let err = double.then(|| {
                    let d0 = det.elevations[0] - ground;
                    let d1 = det.elevations[1] - (ground + sep);
                    ((d0 * d0 + d1 * d1) / 2.0).sqrt()
                });
                rows.push(ExperimentRecord {
                    detector: kind.tag().to_string(),
                    sweep_var: "separation_m".into(),
                    sweep_value: sep,
                    trials: 1,
                    pd: Some(if double { 1.0 } else { 0.0 }),
                    pfd: Some(if escaped { 1.0 } else { 0.0 }),
                    rmse_m: err,
                    mean_elapsed_s: None,
                    seed,
                });
            }
            Ok(rows)
        })
        .collect();

    Ok(outcomes?.into_iter().flatten().collect())
}

/// Wall-clock benchmark across grid densities at a fixed two-target
/// scenario. The plain CFAR detector runs on its own fixed
/// resolution-level grid (its cost does not depend on the fine grid); the
/// exhaustive oracle runs fewer trials because of its cost.
pub fn timing_benchmark(
    base_geometry: &TomoGeometry,
    settings: &DetectorSettings,
    grid_sizes: &[usize],
    sglrtc_grid: usize,
    trials: usize,
    exhaustive_trials: usize,
    alpha: f64,
    snr_db: f64,
    seed: u64,
) -> Result<Vec<ExperimentRecord>> {
    if trials == 0 || exhaustive_trials == 0 {
        bail!("trials: need at least one trial");
    }
    let amp = snr_from_db(snr_db).sqrt();
    let sglrtc_geom = TomoGeometry::uniform(
        base_geometry.n(),
        base_geometry.span(),
        base_geometry.lambda_r0(),
        base_geometry.extent(),
        sglrtc_grid,
    )
    .map_err(|e| anyhow::anyhow!("sglrtc grid: {e}"))?;
    let sglrtc_sm = SteeringMatrix::build(&sglrtc_geom);

    let mut records = Vec::new();
    for (mi, &m) in grid_sizes.iter().enumerate() {
        let geom = TomoGeometry::uniform(
            base_geometry.n(),
            base_geometry.span(),
            base_geometry.lambda_r0(),
            base_geometry.extent(),
            m,
        )
        .map_err(|e| anyhow::anyhow!("timing grid: {e}"))?;
        let sm = SteeringMatrix::build(&geom);
        let rho = geom.rayleigh_resolution();
        let center = geom.extent() / 2.0;

        let make_pixel = |t: usize| -> Vec<C64> {
            let mut rng = trial_rng(seed, &[stream::TIMING, mi as u64, t as u64]);
            let dphi: f64 = rng.gen_range(-PI..PI);
            let ph1: f64 = rng.gen_range(-PI..PI);
            let targets = [
                Target::from_polar(center - alpha * rho / 2.0, amp, ph1),
                Target::from_polar(center + alpha * rho / 2.0, amp, ph1 + dphi),
            ];
            synthesize_pixel(&geom, &targets, 1.0, &mut rng)
        };

        let kinds = [
            (DetectorKind::CaNls, trials),
            (DetectorKind::Sglrtc, trials),
            (DetectorKind::Sl1mmer, trials),
            (DetectorKind::ExhaustiveNls, exhaustive_trials),
        ];
        for (kind, n_trials) in kinds {
            let run_sm = if kind == DetectorKind::Sglrtc {
                &sglrtc_sm
            } else {
                &sm
            };
            // Unmeasured warmup to fault in caches and allocations.
            for t in 0..3.min(n_trials) {
                settings.run(kind, &make_pixel(t), run_sm)?;
            }
            let mut elapsed = 0.0;
            let mut detected = 0usize;
            for t in 0..n_trials {
                let g = make_pixel(t);
                let start = Instant::now();
                let det = settings.run(kind, &g, run_sm)?;
                elapsed += start.elapsed().as_secs_f64();
                if det.k_hat == 2 {
                    detected += 1;
                }
            }
            records.push(ExperimentRecord {
                detector: kind.tag().to_string(),
                sweep_var: "grid_size".into(),
                sweep_value: m as f64,
                trials: n_trials,
                pd: Some(detected as f64 / n_trials as f64),
                pfd: None,
                rmse_m: None,
                mean_elapsed_s: Some(elapsed / n_trials as f64),
                seed,
            });
        }
    }
    Ok(records)
}
