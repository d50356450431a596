use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anyhow::{Context, Result};
use rayon::prelude::*;
use toh_core::analysis::{agentic_cell_metrics, oneshot_cell_metrics, MetricRow};
use toh_core::storage::{
    discover_runs, export_metrics, load_dataset, read_manifest, sort_rows, ManifestStatus, MetricFormat, RunManifest,
    RunMode, TRAJECTORY_FILE,
};
use toh_core::{distance_to_goal, DiskCount};

use crate::args::{AnalyzeArgs, FormatArg};
use crate::common::{config_error, thread_pool, Status};

type Cell = (String, DiskCount);

fn compute_cell(key: &Cell, runs: &[(PathBuf, RunManifest)]) -> Result<Vec<MetricRow>> {
    let (model_id, n) = key;
    let summaries: Vec<_> = runs
        .iter()
        .map(|(dir, m)| m.summary().ok_or_else(|| config_error(format!("{} has no result", dir.display()))))
        .collect::<Result<_>>()?;
    let oneshot = runs.iter().filter(|(_, m)| m.mode == RunMode::Oneshot).count();
    if oneshot == runs.len() {
        return Ok(oneshot_cell_metrics(model_id, *n, &summaries)?);
    }
    if oneshot > 0 {
        return Err(config_error(format!("cell ({model_id}, {n}) mixes one-shot and episode runs")));
    }
    let paths: Vec<_> = runs.iter().map(|(dir, _)| dir.join(TRAJECTORY_FILE)).collect();
    let dataset = load_dataset(&paths)?;
    Ok(agentic_cell_metrics(model_id, *n, &dataset, &summaries, &distance_to_goal(*n))?)
}

pub fn run(args: AnalyzeArgs) -> Result<Status> {
    let pool = thread_pool(args.jobs)?;
    if !args.runs.is_dir() {
        return Err(config_error(format!("{} is not a directory", args.runs.display())));
    }
    let mut cells: BTreeMap<Cell, Vec<(PathBuf, RunManifest)>> = BTreeMap::new();
    for dir in discover_runs(&args.runs)? {
        let manifest = read_manifest(&dir)?;
        if manifest.status != ManifestStatus::Finalized {
            eprintln!("skipping unfinished run {}", dir.display());
            continue;
        }
        let n_ok = args.n.as_ref().is_none_or(|r| r.0.contains(&manifest.n.get()));
        let model_ok = args.models.is_empty() || args.models.contains(&manifest.model_id);
        if n_ok && model_ok {
            cells.entry((manifest.model_id.clone(), manifest.n)).or_default().push((dir, manifest));
        }
    }

    if args.n.is_some() || !args.models.is_empty() {
        let models: BTreeSet<String> = if args.models.is_empty() {
            cells.keys().map(|(m, _)| m.clone()).collect()
        } else {
            args.models.iter().cloned().collect()
        };
        let ns: BTreeSet<u8> = match &args.n {
            Some(r) => r.iter().collect(),
            None => cells.keys().map(|(_, n)| n.get()).collect(),
        };
        let absent: Vec<String> = models
            .iter()
            .flat_map(|m| ns.iter().map(move |n| (m, *n)))
            .filter(|(m, n)| !cells.keys().any(|(cm, cn)| cm == *m && cn.get() == *n))
            .map(|(m, n)| format!("({m}, n={n})"))
            .collect();
        if !absent.is_empty() {
            return Err(config_error(format!("no finished runs for cells: {}", absent.join(", "))));
        }
    }
    if cells.is_empty() {
        return Err(config_error(format!("no finished runs under {}", args.runs.display())));
    }

    let cell_list: Vec<_> = cells.into_iter().collect();
    let per_cell = pool.install(|| {
        cell_list
            .par_iter()
            .map(|(key, runs)| compute_cell(key, runs).with_context(|| format!("cell ({}, n={})", key.0, key.1)))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut rows: Vec<MetricRow> = per_cell.into_iter().flatten().collect();
    sort_rows(&mut rows);

    let extension = match args.format {
        FormatArg::Csv => "csv",
        FormatArg::Json => "json",
    };
    let out = args.out.clone().unwrap_or_else(|| args.runs.join(format!("metrics.{extension}")));
    let format: MetricFormat = args.format.into();
    export_metrics(&rows, format, &out)?;

    for r in &rows {
        let value = r.value.map(|v| format!("{v:.6}")).unwrap_or_else(|| "null".into());
        println!("{:<28} {:>3} {:<18} {value}", r.model_id, r.n, r.metric_name.as_str());
    }
    println!("{} rows over {} cells written to {}", rows.len(), cell_list.len(), out.display());
    Ok(Status::Ok)
}
