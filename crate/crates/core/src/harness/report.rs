//! Tidy CSV and JSON artifacts. Every CSV opens with a `#` comment line that
//! records the config hash and master seed; numbers use the shortest text
//! that round-trips exactly, so reruns are byte-identical.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiment::{MetricsReport, SweepRow};
use crate::detect::DetectorKind;

pub fn fmt_num(x: f64) -> String {
    format!("{x:?}")
}

fn open_csv(path: &Path, cfg: &ExperimentConfig) -> io::Result<csv::Writer<BufWriter<File>>> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "# config_hash={} seed={}", cfg.hash(), cfg.seed)?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn finish(mut w: csv::Writer<BufWriter<File>>) -> io::Result<()> {
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    config: &'a ExperimentConfig,
    config_hash: String,
    seed: u64,
    results: T,
}

fn write_summary<T: Serialize>(path: &Path, cfg: &ExperimentConfig, results: T) -> io::Result<()> {
    let summary = Summary { config: cfg, config_hash: cfg.hash(), seed: cfg.seed, results };
    let text = serde_json::to_string_pretty(&summary).map_err(io::Error::other)?;
    fs::write(path, text + "\n")
}

fn names(kinds: &[DetectorKind], prefix: &str) -> Vec<String> {
    kinds.iter().map(|k| format!("{prefix}{k}")).collect()
}

/// Write the artifacts of a single experiment into `dir`; returns the paths.
pub fn write_experiment(report: &MetricsReport, cfg: &ExperimentConfig, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if let Some(det) = &report.detection {
        let path = dir.join("auc.csv");
        let mut w = open_csv(&path, cfg)?;
        w.write_record(["detector", "auc", "auc_se", "p_fa_at_zero", "p_d_at_zero"])?;
        for d in &det.detectors {
            w.write_record([
                d.kind.to_string(),
                fmt_num(d.auc),
                fmt_num(d.auc_se),
                fmt_num(d.p_fa_at_zero),
                fmt_num(d.p_d_at_zero),
            ])?;
        }
        finish(w)?;
        written.push(path);

        let path = dir.join("roc.csv");
        let mut w = open_csv(&path, cfg)?;
        w.write_record(["detector", "threshold", "p_fa", "p_d"])?;
        for d in &det.detectors {
            for p in &d.roc.points {
                w.write_record([d.kind.to_string(), fmt_num(p.threshold), fmt_num(p.p_fa), fmt_num(p.p_d)])?;
            }
        }
        finish(w)?;
        written.push(path);

        let path = dir.join("scores.csv");
        let mut w = open_csv(&path, cfg)?;
        let kinds: Vec<DetectorKind> = det.detectors.iter().map(|d| d.kind).collect();
        let mut header = vec!["trial".to_string(), "hypothesis".to_string()];
        header.extend(names(&kinds, "llr_"));
        w.write_record(&header)?;
        let half = det.detectors.first().map_or(0, |d| d.h1_scores.len());
        for (hyp, pick) in [("target", true), ("null", false)] {
            for trial in 0..half {
                let mut row = vec![trial.to_string(), hyp.to_string()];
                for d in &det.detectors {
                    row.push(fmt_num(if pick { d.h1_scores[trial] } else { d.h0_scores[trial] }));
                }
                w.write_record(&row)?;
            }
        }
        finish(w)?;
        written.push(path);
    }
    if let Some(filt) = &report.filtering {
        let kinds: Vec<DetectorKind> = filt.trackers.iter().map(|t| t.kind).collect();
        let path = dir.join("rmse_cm.csv");
        let mut w = open_csv(&path, cfg)?;
        let mut header = vec!["t".to_string()];
        header.extend(names(&kinds, "rmse_cm_"));
        w.write_record(&header)?;
        let epochs = filt.trackers.first().map_or(0, |t| t.rmse_cm.len());
        for t in 0..epochs {
            let mut row = vec![t.to_string()];
            row.extend(filt.trackers.iter().map(|k| fmt_num(k.rmse_cm[t])));
            w.write_record(&row)?;
        }
        finish(w)?;
        written.push(path);

        let path = dir.join("rmse_aps.csv");
        let mut w = open_csv(&path, cfg)?;
        w.write_record(["tracker", "rmse_aps", "rmse_aps_se"])?;
        for k in &filt.trackers {
            w.write_record([k.kind.to_string(), fmt_num(k.rmse_aps), fmt_num(k.rmse_aps_se)])?;
        }
        finish(w)?;
        written.push(path);
    }
    let path = dir.join("summary.json");
    write_summary(&path, cfg, report)?;
    written.push(path);
    Ok(written)
}

/// Write the combined sweep tables into `dir`; returns the paths.
///
/// `sweep.csv` has one row per sweep point: the axis values, `beta`, then the
/// detection columns (`auc_<detector>`, `delta_auc`, standard errors) and the
/// filtering columns (`rmse_aps_<tracker>`, paired benefit) when present.
pub fn write_sweep(rows: &[SweepRow], cfg: &ExperimentConfig, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let Some(first) = rows.first() else {
        return Ok(written);
    };
    let axes: Vec<String> = first.key.iter().map(|(a, _)| a.name().to_string()).collect();
    let det_kinds: Option<Vec<DetectorKind>> =
        first.report.detection.as_ref().map(|d| d.detectors.iter().map(|x| x.kind).collect());
    let filt_kinds: Option<Vec<DetectorKind>> =
        first.report.filtering.as_ref().map(|f| f.trackers.iter().map(|x| x.kind).collect());

    let path = dir.join("sweep.csv");
    let mut w = open_csv(&path, cfg)?;
    let mut header = axes.clone();
    header.push("beta".into());
    if let Some(kinds) = &det_kinds {
        header.extend(names(kinds, "auc_"));
        header.extend(["delta_auc".to_string(), "delta_auc_se".to_string()]);
        header.extend(names(kinds, "auc_se_"));
    }
    if let Some(kinds) = &filt_kinds {
        header.extend(names(kinds, "rmse_aps_"));
        header.extend(names(kinds, "rmse_aps_se_"));
        header.extend(["aps_benefit".to_string(), "aps_benefit_se".to_string()]);
    }
    w.write_record(&header)?;
    let na = || "".to_string();
    for row in rows {
        let mut rec: Vec<String> = row.key.iter().map(|&(_, v)| fmt_num(v)).collect();
        rec.push(fmt_num(row.beta));
        if let Some(det) = &row.report.detection {
            rec.extend(det.detectors.iter().map(|d| fmt_num(d.auc)));
            match det.delta_auc {
                Some(e) => rec.extend([fmt_num(e.value), fmt_num(e.se)]),
                None => rec.extend([na(), na()]),
            }
            rec.extend(det.detectors.iter().map(|d| fmt_num(d.auc_se)));
        }
        if let Some(f) = &row.report.filtering {
            rec.extend(f.trackers.iter().map(|t| fmt_num(t.rmse_aps)));
            rec.extend(f.trackers.iter().map(|t| fmt_num(t.rmse_aps_se)));
            match f.aps_benefit {
                Some(e) => rec.extend([fmt_num(e.value), fmt_num(e.se)]),
                None => rec.extend([na(), na()]),
            }
        }
        w.write_record(&rec)?;
    }
    finish(w)?;
    written.push(path);

    if let Some(kinds) = &filt_kinds {
        let path = dir.join("sweep_rmse_cm.csv");
        let mut w = open_csv(&path, cfg)?;
        let mut header = axes.clone();
        header.push("t".into());
        header.extend(names(kinds, "rmse_cm_"));
        w.write_record(&header)?;
        for row in rows {
            let f = row.report.filtering.as_ref().expect("every sweep point has the same metrics");
            for t in 0..f.trackers[0].rmse_cm.len() {
                let mut rec: Vec<String> = row.key.iter().map(|&(_, v)| fmt_num(v)).collect();
                rec.push(t.to_string());
                rec.extend(f.trackers.iter().map(|k| fmt_num(k.rmse_cm[t])));
                w.write_record(&rec)?;
            }
        }
        finish(w)?;
        written.push(path);
    }
    let path = dir.join("summary.json");
    write_summary(&path, cfg, rows)?;
    written.push(path);
    Ok(written)
}
