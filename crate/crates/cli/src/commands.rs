use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use needlet_core::cltlab::{format_float as fmt, run_experiment, write_sweep_csv, ExperimentConfig};
use needlet_core::cubature::NeedletFrame;
use needlet_core::field::NormalizationConstants;
use needlet_core::scaling::{ResolutionContext, ScaleSequence};
use needlet_core::weights::WeightSystem;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::{core_error, CliError};

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| io_err(&path, e))?;
    Ok((path, BufWriter::new(file)))
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<PathBuf, CliError> {
    let (path, mut w) = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(&path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn build(cfg: &RunConfig) -> Result<ScaleSequence, CliError> {
    ScaleSequence::build(cfg.scale.clone()).map_err(|e| core_error(e, "scale"))
}

fn rt(e: serde_json::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn system(cfg: &RunConfig) -> Result<(), CliError> {
    let seq = build(cfg)?;
    let ws = WeightSystem::new(seq.clone());
    let mut frames = Vec::new();
    let mut constants = Vec::new();
    for j in 1..=ws.j_max() {
        let frame = NeedletFrame::new(&ws, j).map_err(|e| core_error(e, "scale"))?;
        frames.push(frame.summary(&ws));
        constants.push(NormalizationConstants::compute(&ws, &frame).map_err(|e| core_error(e, "scale"))?);
    }
    let weights = ws.diagnostics();
    if cfg.format.json() {
        let doc = json!({
            "scale": serde_json::to_value(seq.diagnostics()).map_err(rt)?,
            "weights": serde_json::to_value(&weights).map_err(rt)?,
            "frames": serde_json::to_value(&frames).map_err(rt)?,
            "constants": serde_json::to_value(&constants).map_err(rt)?,
        });
        let path = write_json(&cfg.out_dir, "system.json", &doc)?;
        println!("{}", path.display());
    }
    if cfg.format.csv() {
        let (path, mut w) = create(&cfg.out_dir, "system.csv")?;
        let mut body = String::from("j,center,shift,dilation,localization,sigma_sq,frame_count\n");
        for (i, f) in frames.iter().enumerate() {
            let j = i + 1;
            let shift = seq.shift(j).map_err(|e| core_error(e, "scale"))?;
            let loc = seq.sigma_loc(j).map_err(|e| core_error(e, "scale"))?;
            body.push_str(&format!(
                "{j},{},{},{},{},{},{}\n",
                fmt(Some(seq.center(j))),
                fmt(Some(shift)),
                fmt(Some(seq.dilation(j))),
                fmt(Some(loc)),
                fmt(weights.levels[i].sigma_sq),
                f.count
            ));
        }
        w.write_all(body.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| io_err(&path, e))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn nu_label(nu: f64) -> String {
    format!("{nu}")
}

pub fn clt(cfg: &RunConfig) -> Result<(), CliError> {
    let kind = cfg.kind()?;
    let seq = build(cfg)?;
    let mut reports = Vec::with_capacity(cfg.levels.len() * cfg.nus.len());
    for &j in &cfg.levels {
        for &nu in &cfg.nus {
            let exp = ExperimentConfig {
                kind,
                j,
                nu,
                reps: cfg.reps,
                seed: cfg.seed,
                points: cfg.points,
                delta: cfg.delta,
                slack: cfg.slack,
            };
            let report = run_experiment(&seq, &exp).map_err(|e| core_error(e, "experiment"))?;
            if cfg.format.json() {
                let name = format!("clt_{}_j{}_nu{}.json", kind.name(), j, nu_label(nu));
                let path = write_json(&cfg.out_dir, &name, &serde_json::to_value(&report).map_err(rt)?)?;
                println!("{}", path.display());
            }
            reports.push(report);
        }
    }
    if cfg.format.csv() {
        let (path, mut w) = create(&cfg.out_dir, &format!("clt_{}_sweep.csv", kind.name()))?;
        write_sweep_csv(&reports, &mut w).map_err(|e| io_err(&path, e))?;
        w.flush().map_err(|e| io_err(&path, e))?;
        println!("{}", path.display());
    }
    Ok(())
}

/// Resolution contexts covered by the tables, Sobolev at the configured order.
pub fn contexts(alpha: f64) -> Vec<ResolutionContext> {
    vec![
        ResolutionContext::Coeff1d,
        ResolutionContext::CoeffMultiRaw,
        ResolutionContext::CoeffMultiNormalized,
        ResolutionContext::Fdd,
        ResolutionContext::Sobolev { alpha },
    ]
}

pub fn tables(cfg: &RunConfig) -> Result<(), CliError> {
    let seq = build(cfg)?;
    let mut rows = Vec::new();
    for ctx in contexts(cfg.alpha) {
        for &nu in &cfg.nus {
            let j = match seq.max_resolution(nu, ctx, cfg.slack) {
                Ok(j) => Some(j),
                Err(needlet_core::Error::NoAdmissibleLevel(_)) => None,
                Err(e) => return Err(core_error(e, "experiment")),
            };
            rows.push((ctx, nu, j));
        }
    }
    if cfg.format.json() {
        let items: Vec<Value> = rows
            .iter()
            .map(|(ctx, nu, j)| {
                json!({
                    "context": ctx.name(),
                    "exponent": ctx.exponent(),
                    "nu_t": nu,
                    "j_max": j,
                    "center": j.map(|j| seq.center(j)),
                    "capped": *j == Some(seq.j_max()),
                })
            })
            .collect();
        let doc = json!({
            "scale": serde_json::to_value(seq.params()).map_err(rt)?,
            "slack": cfg.slack,
            "rows": items,
        });
        let path = write_json(&cfg.out_dir, "tables.json", &doc)?;
        println!("{}", path.display());
    }
    if cfg.format.csv() {
        let (path, mut w) = create(&cfg.out_dir, "tables.csv")?;
        let mut body = String::from("context,exponent,nu_t,j_max,center,capped\n");
        for (ctx, nu, j) in &rows {
            body.push_str(&format!(
                "{},{},{},{},{},{}\n",
                ctx.name(),
                fmt(Some(ctx.exponent())),
                fmt(Some(*nu)),
                j.map_or(String::new(), |j| j.to_string()),
                fmt(j.map(|j| seq.center(j))),
                *j == Some(seq.j_max())
            ));
        }
        w.write_all(body.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| io_err(&path, e))?;
        println!("{}", path.display());
    }
    Ok(())
}
