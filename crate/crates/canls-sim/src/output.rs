//! Output artifacts: a stable-schema results CSV, a manifest capturing
//! everything needed to rerun an experiment, and a self-contained
//! gnuplot script.
//!
//! Float formatting uses the shortest round-trip representation, so a
//! rerun with identical configuration and seed produces byte-identical
//! files.

use anyhow::{Context, Result};
use std::path::Path;

use crate::config::RunConfig;
use crate::experiments::ExperimentRecord;

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str =
    "detector,sweep_var,sweep_value,trials,pd,pfd,rmse_m,mean_elapsed_s,seed";

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn render_csv(records: &[ExperimentRecord]) -> String {
    let mut text = String::with_capacity(64 * (records.len() + 1));
    text.push_str(CSV_HEADER);
    text.push('\n');
    for r in records {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.detector,
            r.sweep_var,
            r.sweep_value,
            r.trials,
            opt(r.pd),
            opt(r.pfd),
            opt(r.rmse_m),
            opt(r.mean_elapsed_s),
            r.seed,
        ));
    }
    text
}

pub fn write_csv(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    std::fs::write(path, render_csv(records))
        .with_context(|| format!("writing {}", path.display()))
}

/// Writes `manifest.json`: subcommand, effective seed, resolved
/// configuration, and schema/tool versions. No timestamps, so reruns
/// stay byte-identical.
pub fn write_manifest(
    path: &Path,
    subcommand: &str,
    config: &RunConfig,
    seed: u64,
) -> Result<()> {
    let manifest = serde_json::json!({
        "tool": "canls-sim",
        "version": env!("CARGO_PKG_VERSION"),
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "subcommand": subcommand,
        "seed": seed,
        "config": config,
    });
    let mut text = serde_json::to_string_pretty(&manifest).context("serializing manifest")?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes a self-contained gnuplot script with the records inlined as
/// data blocks, one per detector. Timing records plot mean seconds per
/// pixel on a log axis; everything else plots detection probability.
pub fn write_plot_script(path: &Path, title: &str, records: &[ExperimentRecord]) -> Result<()> {
    let timing = records.iter().any(|r| r.mean_elapsed_s.is_some());
    let mut detectors: Vec<&str> = Vec::new();
    for r in records {
        if !detectors.contains(&r.detector.as_str()) {
            detectors.push(&r.detector);
        }
    }

    let mut text = String::new();
    text.push_str("set datafile missing 'nan'\n");
    text.push_str(&format!("set title '{title}'\n"));
    let sweep_var = records
        .first()
        .map(|r| r.sweep_var.as_str())
        .unwrap_or("sweep_value");
    text.push_str(&format!("set xlabel '{sweep_var}'\n"));
    if timing {
        text.push_str("set ylabel 'mean seconds per pixel'\nset logscale y\n");
    } else {
        text.push_str("set ylabel 'detection probability'\nset yrange [0:1.05]\n");
    }
    text.push_str("set key outside\n\n");

    for (di, name) in detectors.iter().enumerate() {
        text.push_str(&format!("$data{di} << EOD\n"));
        for r in records.iter().filter(|r| r.detector == *name) {
            let y = if timing {
                r.mean_elapsed_s
            } else {
                r.pd
            };
            let y = y.map(|v| v.to_string()).unwrap_or_else(|| "nan".into());
            text.push_str(&format!("{} {}\n", r.sweep_value, y));
        }
        text.push_str("EOD\n");
    }
    text.push_str("\nplot \\\n");
    let plots: Vec<String> = detectors
        .iter()
        .enumerate()
        .map(|(di, name)| format!("  $data{di} using 1:2 with linespoints title '{name}'"))
        .collect();
    text.push_str(&plots.join(", \\\n"));
    text.push('\n');

    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
