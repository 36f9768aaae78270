//! Command-line front end: parse a run configuration, dispatch to the
//! experiment runners, and write `results.csv`, `manifest.json` and
//! `plot.gp` into the output directory.
//!
//! All experiments are deterministic given configuration and seed; the
//! wall-clock numbers of the timing benchmark go to a separate
//! `timing.json` so `results.csv` stays byte-identical across reruns.

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::path::{Path, PathBuf};

use canls::analytic::{analytic_pd_phase_averaged, crlb_double, ALPHA_VALIDITY_LIMIT};
use canls::coarse::calibrate_threshold;
use canls::fine::penalty;
use canls::geometry::SteeringMatrix;
use canls::scene::{derive_seed, snr_from_db};
use canls_sim::config::{parse_penalty, structure_geometry, RunConfig};
use canls_sim::experiments::{
    parse_detectors, run_detection_sweep, run_layover_experiment, run_penalty_comparison,
    stream, timing_benchmark, DetectorSettings, ExperimentRecord, SweepPlan, SweepVariable,
};
use canls_sim::output;
use canls_sim::scene3d::{run_reconstruction, SceneSpec};

#[derive(Parser)]
#[command(
    name = "canls-sim",
    version,
    about = "Monte Carlo experiments for multi-scatterer elevation detection"
)]
struct Cli {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for results.csv, manifest.json and plot.gp.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads override (also honors CANLS_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Trial-count override for the active subcommand.
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Cmd {
    /// Detection probability vs SNR or separation.
    PdSweep,
    /// Elevation accuracy vs SNR, with the lower-bound overlay.
    RmseSweep,
    /// Model order selection rules on identical measurements.
    PenaltyCompare,
    /// Per-pixel ground+facade separation ramp.
    Layover,
    /// Synthetic building scene, one run per selection rule.
    Reconstruct,
    /// Wall-clock cost vs grid density.
    Timing,
    /// Monte Carlo CFAR threshold calibration.
    CalibrateThreshold,
}

impl Cmd {
    fn tag(self) -> &'static str {
        match self {
            Cmd::PdSweep => "pd-sweep",
            Cmd::RmseSweep => "rmse-sweep",
            Cmd::PenaltyCompare => "penalty-compare",
            Cmd::Layover => "layover",
            Cmd::Reconstruct => "reconstruct",
            Cmd::Timing => "timing",
            Cmd::CalibrateThreshold => "calibrate-threshold",
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        // Machine-readable error record on stderr.
        eprintln!("{}", serde_json::json!({ "error": format!("{e:#}") }));
        std::process::exit(1);
    }
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        if trials == 0 {
            anyhow::bail!("--trials: need at least one trial");
        }
        cfg.pd_sweep.trials = trials;
        cfg.rmse_sweep.trials = trials;
        cfg.penalty_compare.trials = trials;
        cfg.timing.trials = trials;
        cfg.calibration.trials = trials;
    }
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("CANLS_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(cfg.threads);
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("initializing thread pool")?;
    }

    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))?;
    let seed = cfg.seed;

    let records = match cli.cmd {
        Cmd::PdSweep => pd_sweep(&cfg, seed)?,
        Cmd::RmseSweep => rmse_sweep(&cfg, seed)?,
        Cmd::PenaltyCompare => penalty_compare(&cfg, seed)?,
        Cmd::Layover => layover(&cfg, seed)?,
        Cmd::Reconstruct => reconstruct(&cfg, seed)?,
        Cmd::Timing => timing(&cfg, seed, &cli.out)?,
        Cmd::CalibrateThreshold => calibrate(&cfg, seed)?,
    };

    // Measured wall-clock times are inherently non-reproducible, so they
    // live in timing.json; the CSV keeps only deterministic columns.
    let csv_rows: Vec<ExperimentRecord> = records
        .iter()
        .cloned()
        .map(|mut r| {
            r.mean_elapsed_s = None;
            r
        })
        .collect();
    output::write_csv(&cli.out.join("results.csv"), &csv_rows)?;
    output::write_manifest(&cli.out.join("manifest.json"), cli.cmd.tag(), &cfg, seed)?;
    output::write_plot_script(&cli.out.join("plot.gp"), cli.cmd.tag(), &records)?;
    println!(
        "{}: {} records -> {}",
        cli.cmd.tag(),
        records.len(),
        cli.out.display()
    );
    Ok(())
}

fn detector_settings(cfg: &RunConfig) -> Result<DetectorSettings> {
    Ok(DetectorSettings {
        threshold: cfg.detector.threshold,
        selection: cfg.detector.selection()?,
        fast_path: cfg.detector.fast_path,
        refine: cfg.detector.refine,
        sl1mmer_c: cfg.detector.sl1mmer_c,
    })
}

/// Decision-statistic scale factor of the configured penalty rule for a
/// single scatterer (the analytic curves need it).
fn penalty_eta(cfg: &RunConfig, n: usize) -> Result<f64> {
    Ok(penalty(1, n, cfg.detector.penalty_rule()?)? / 3.0)
}

fn pd_sweep(cfg: &RunConfig, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let geom = cfg.geometry.build()?;
    let sweep = &cfg.pd_sweep;
    let plan = SweepPlan {
        variable: SweepVariable::parse(&sweep.variable)?,
        values: sweep.values.clone(),
        fixed_alpha: sweep.alpha,
        fixed_snr_db: sweep.snr_db,
        trials: sweep.trials,
        detectors: parse_detectors(&sweep.detectors)?,
        experiment_id: stream::PD_SWEEP,
    };
    let mut records = run_detection_sweep(&geom, &detector_settings(cfg)?, &plan, seed)?;

    // Analytic overlay where the closed form is valid.
    let eta = penalty_eta(cfg, geom.n())?;
    for &value in &plan.values {
        let (snr_db, alpha) = match plan.variable {
            SweepVariable::SnrDb => (value, plan.fixed_alpha),
            SweepVariable::Alpha => (plan.fixed_snr_db, value),
        };
        if alpha <= 0.0 || alpha >= ALPHA_VALIDITY_LIMIT {
            continue;
        }
        let pd = analytic_pd_phase_averaged(geom.n(), snr_from_db(snr_db), alpha, eta, 181)?;
        records.push(ExperimentRecord {
            detector: "analytic".into(),
            sweep_var: plan.variable.tag().into(),
            sweep_value: value,
            trials: 0,
            pd: Some(pd),
            pfd: None,
            rmse_m: None,
            mean_elapsed_s: None,
            seed,
        });
    }
    Ok(records)
}

fn rmse_sweep(cfg: &RunConfig, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let geom = cfg.geometry.build()?;
    let sweep = &cfg.rmse_sweep;
    let plan = SweepPlan {
        variable: SweepVariable::parse(&sweep.variable)?,
        values: sweep.values.clone(),
        fixed_alpha: sweep.alpha,
        fixed_snr_db: sweep.snr_db,
        trials: sweep.trials,
        detectors: parse_detectors(&sweep.detectors)?,
        experiment_id: stream::RMSE_SWEEP,
    };
    let settings = DetectorSettings {
        refine: sweep.refine,
        ..detector_settings(cfg)?
    };
    let mut records = run_detection_sweep(&geom, &settings, &plan, seed)?;

    // Lower-bound overlay: √CRLB for two interfering scatterers.
    let rho = geom.rayleigh_resolution();
    for &value in &plan.values {
        let (snr_db, alpha) = match plan.variable {
            SweepVariable::SnrDb => (value, plan.fixed_alpha),
            SweepVariable::Alpha => (plan.fixed_snr_db, value),
        };
        if alpha <= 0.0 {
            continue;
        }
        let bound = crlb_double(geom.n(), snr_from_db(snr_db), rho, alpha)?;
        records.push(ExperimentRecord {
            detector: "crlb".into(),
            sweep_var: plan.variable.tag().into(),
            sweep_value: value,
            trials: 0,
            pd: None,
            pfd: None,
            rmse_m: Some(bound.sqrt()),
            mean_elapsed_s: None,
            seed,
        });
    }
    Ok(records)
}

fn penalty_compare(cfg: &RunConfig, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let geom = cfg.geometry.build()?;
    run_penalty_comparison(
        &geom,
        cfg.detector.threshold,
        cfg.detector.k_max,
        cfg.detector.noise_power,
        cfg.penalty_compare.alpha,
        &cfg.penalty_compare.snr_db,
        cfg.penalty_compare.trials,
        cfg.detector.fast_path,
        cfg.detector.refine,
        seed,
    )
}

fn layover(cfg: &RunConfig, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let geom = structure_geometry().build()?;
    let lay = &cfg.layover;
    let settings = DetectorSettings {
        threshold: lay.threshold,
        ..detector_settings(cfg)?
    };
    let records = run_layover_experiment(
        &geom,
        &settings,
        &parse_detectors(&lay.detectors)?,
        lay.pixels,
        lay.ground,
        (lay.min_separation, lay.max_separation),
        lay.snr_db,
        lay.phase_mode == "random",
        seed,
    )?;
    for name in &lay.detectors {
        let rows: Vec<&ExperimentRecord> =
            records.iter().filter(|r| &r.detector == name).collect();
        let detected = rows.iter().filter(|r| r.pd == Some(1.0)).count();
        println!(
            "{name}: {detected}/{} pixels resolved as two scatterers",
            rows.len()
        );
    }
    Ok(records)
}

fn reconstruct(cfg: &RunConfig, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let geom = structure_geometry().build()?;
    let rec = &cfg.reconstruction;
    let rules: Vec<_> = rec
        .penalties
        .iter()
        .map(|p| parse_penalty(p).map(|rule| (rule, p.clone())))
        .collect::<Result<_>>()?;
    let spec = SceneSpec::with_azimuth(rec.azimuth);
    let out = run_reconstruction(
        &geom,
        &spec,
        rec.threshold,
        rec.k_max,
        rec.refine,
        rec.fast_path,
        rec.snr_db,
        &rules,
        seed,
    )?;
    println!(
        "scene: {} double / {} triple pixels",
        out.n_double, out.n_triple
    );
    for s in &out.summaries {
        println!(
            "{:4}: recall2 {:.3}  recall3 {:.3}  k3/true3 {:.3}  orders {:?}",
            s.rule, s.recall_double, s.recall_triple, s.triple_ratio, s.k_counts
        );
    }
    Ok(out.records)
}

fn timing(cfg: &RunConfig, seed: u64, out_dir: &Path) -> Result<Vec<ExperimentRecord>> {
    let geom = cfg.geometry.build()?;
    let t = &cfg.timing;
    let records = timing_benchmark(
        &geom,
        &detector_settings(cfg)?,
        &t.grid_sizes,
        t.sglrtc_grid,
        t.trials,
        t.exhaustive_trials,
        t.alpha,
        t.snr_db,
        seed,
    )?;
    for r in &records {
        println!(
            "{:15} grid {:4}: {:.3} ms/pixel",
            r.detector,
            r.sweep_value,
            r.mean_elapsed_s.unwrap_or(0.0) * 1e3
        );
    }
    let mut text = serde_json::to_string_pretty(&records).context("serializing timings")?;
    text.push('\n');
    std::fs::write(out_dir.join("timing.json"), text).context("writing timing.json")?;
    Ok(records)
}

fn calibrate(cfg: &RunConfig, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let geom = cfg.geometry.build()?;
    let sm = SteeringMatrix::build(&geom);
    let mut rng = ChaCha12Rng::from_seed(derive_seed(seed, &[stream::CALIBRATION, 0, 0]));
    let threshold =
        calibrate_threshold(&sm, cfg.calibration.p_fa, cfg.calibration.trials, &mut rng)?;
    println!("calibrated threshold: {threshold:.4}");
    Ok(vec![ExperimentRecord {
        detector: "calibrate".into(),
        sweep_var: "threshold".into(),
        sweep_value: threshold,
        trials: cfg.calibration.trials,
        pd: Some(cfg.calibration.p_fa),
        pfd: None,
        rmse_m: None,
        mean_elapsed_s: None,
        seed,
    }])
}
