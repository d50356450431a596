use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde_json::json;
use toh_core::agents::gateway::TokenUsage;
use toh_core::agents::oneshot::{evaluate_oneshot, run_oneshot, OneShotResult};
use toh_core::analysis::metrics::TokenBudgetModel;
use toh_core::storage::{
    write_manifest, write_oneshot, ManifestStatus, RunManifest, RunMode, RunOutcome, ONESHOT_FILE, TRANSCRIPT_FILE,
};

use crate::args::BaselineArgs;
use crate::common::{config_error, disk, gateway_config, prepare_run_dir, slug, thread_pool, timestamp, ReplySource, Status};

enum Answers {
    Fixture(PathBuf),
    Model(ReplySource),
}

fn fixture_text(path: &Path, n: u8) -> Result<String> {
    let file = if path.is_dir() { path.join(format!("n{n}.txt")) } else { path.to_owned() };
    fs::read_to_string(&file).map_err(|e| config_error(format!("{}: {e}", file.display())))
}

pub fn run(args: BaselineArgs) -> Result<Status> {
    let pool = thread_pool(args.jobs)?;
    let gateway = gateway_config(&args.gateway)?;
    let answers = match &args.fixture {
        Some(path) => {
            for n in args.n.iter() {
                fixture_text(path, n)?;
            }
            Answers::Fixture(path.clone())
        }
        None => {
            let s = ReplySource::new(&gateway, args.replay.as_deref())?;
            s.check_covers(args.n.iter())?;
            Answers::Model(s)
        }
    };

    let model_id = format!("{}:oneshot", gateway.model_name);
    let mut tasks = Vec::new();
    for n in args.n.iter() {
        let run_id = format!("{}-n{n}", slug(&model_id));
        tasks.push((n, run_id.clone(), prepare_run_dir(&args.out, &run_id, args.overwrite)?));
    }

    let run_one = |(n, run_id, dir): &(u8, String, PathBuf)| -> Result<OneShotResult> {
        let dn = disk(*n);
        let mut manifest = RunManifest::new(run_id.clone(), RunMode::Oneshot, model_id.clone(), dn);
        manifest.timestamp = timestamp();
        manifest.artifacts = vec![ONESHOT_FILE.to_owned()];
        manifest.config = json!({
            "fixture": args.fixture.as_ref().map(|p| p.display().to_string()),
            "replay": args.replay.as_ref().map(|p| p.display().to_string()),
            "gateway": args.fixture.is_none().then_some(&gateway),
        });
        if args.fixture.is_none() {
            manifest.artifacts.push(TRANSCRIPT_FILE.to_owned());
        }
        write_manifest(dir, &manifest)?;
        let result = match &answers {
            Answers::Fixture(path) => evaluate_oneshot(&fixture_text(path, *n)?, dn, TokenUsage::default()),
            Answers::Model(source) => {
                let mut client = source.client(&gateway, *n, dir)?;
                run_oneshot(&mut client, dn).with_context(|| format!("one-shot request for n={n}"))?
            }
        };
        write_oneshot(&result, dir)?;
        manifest.result = Some(RunOutcome::from_oneshot(&result));
        manifest.status = ManifestStatus::Finalized;
        write_manifest(dir, &manifest)?;
        Ok(result)
    };
    let results = pool.install(|| tasks.par_iter().map(run_one).collect::<Result<Vec<_>>>())?;

    println!("{:>3} {:>6} {:>8} {:>8} {:>6}  diagnostic", "n", "valid", "solved", "optimal", "moves");
    for r in &results {
        println!(
            "{:>3} {:>6} {:>8} {:>8} {:>6}  {}",
            r.n,
            r.valid,
            r.reached_goal,
            r.optimal,
            r.move_count,
            r.diagnostic.as_deref().unwrap_or("-")
        );
    }
    let solved = results.iter().filter(|r| r.reached_goal).count();
    println!("solved {solved}/{}", results.len());
    println!("token budget: {}", TokenBudgetModel::default().diagnostic().message);
    Ok(Status::Ok)
}
