use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde_json::json;
use toh_core::agents::{run_agentic_episode, Agent, GatewayAgent, OptimalAgent, RandomAgent, ReplayAgent};
use toh_core::qlearn::{train_q, GreedyQAgent, QLearnConfig, QTable};
use toh_core::storage::{
    write_manifest, write_trajectory, ManifestStatus, RunManifest, RunMode, RunOutcome, TRAJECTORY_FILE,
    TRANSCRIPT_FILE,
};
use toh_core::{EpisodeConfig, Outcome};

use crate::args::{AgentKind, AgenticArgs};
use crate::common::{config_error, disk, gateway_config, prepare_run_dir, slug, thread_pool, timestamp, ReplySource, Status};

struct Task {
    n: u8,
    seed: u64,
    run_id: String,
    dir: PathBuf,
}

struct RunLine {
    run_id: String,
    n: u8,
    seed: u64,
    outcome: Outcome,
    moves: u32,
    rejected: usize,
    end_game_called: bool,
}

enum Decisions {
    Shared(String),
    PerN(PathBuf),
}

impl Decisions {
    fn load(path: &Path) -> Result<Self> {
        if path.is_dir() {
            Ok(Decisions::PerN(path.to_owned()))
        } else {
            let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
            Ok(Decisions::Shared(text))
        }
    }

    fn text(&self, n: u8) -> Result<String> {
        match self {
            Decisions::Shared(text) => Ok(text.clone()),
            Decisions::PerN(dir) => {
                let path = dir.join(format!("n{n}.jsonl"));
                fs::read_to_string(&path).map_err(|e| config_error(format!("{}: {e}", path.display())))
            }
        }
    }
}

pub fn run(args: AgenticArgs) -> Result<Status> {
    if args.seeds == 0 {
        return Err(config_error("--seeds must be at least 1"));
    }
    if args.max_steps == Some(0) {
        return Err(config_error("--max-steps must be at least 1"));
    }
    let pool = thread_pool(args.jobs)?;
    let gateway = gateway_config(&args.gateway)?;

    let source = match args.agent {
        AgentKind::Llm => {
            let s = ReplySource::new(&gateway, args.replay.as_deref())?;
            s.check_covers(args.n.iter())?;
            Some(s)
        }
        _ => None,
    };
    let decisions = match (args.agent, &args.replay) {
        (AgentKind::Replay, Some(p)) => Some(Decisions::load(p)?),
        (AgentKind::Replay, None) => return Err(config_error("--agent replay needs --replay <file or directory>")),
        (AgentKind::Llm, _) => None,
        (_, Some(_)) => return Err(config_error("--replay applies only to the llm and replay agents")),
        _ => None,
    };
    if let Some(d) = &decisions {
        for n in args.n.iter() {
            d.text(n)?;
        }
    }

    let label = match args.agent {
        AgentKind::Optimal => "optimal".to_owned(),
        AgentKind::Random => "random".to_owned(),
        AgentKind::Replay => "replay".to_owned(),
        AgentKind::Qlearn => "qlearn".to_owned(),
        AgentKind::Llm => gateway.model_name.clone(),
    };
    let mode = match args.agent {
        AgentKind::Llm => RunMode::Agentic,
        AgentKind::Qlearn => RunMode::Qlearn,
        _ => RunMode::Scripted,
    };

    let mut tasks = Vec::new();
    for n in args.n.iter() {
        for seed in 0..args.seeds {
            let run_id = format!("{}-n{n}-s{seed}", slug(&label));
            let dir = prepare_run_dir(&args.out, &run_id, args.overwrite)?;
            tasks.push(Task { n, seed, run_id, dir });
        }
    }

    let tables: BTreeMap<u8, QTable> = if args.agent == AgentKind::Qlearn {
        pool.install(|| {
            args.n
                .iter()
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|n| {
                    let mut cfg = QLearnConfig::new(disk(n));
                    cfg.episodes = u64::MAX;
                    cfg.step_budget = Some(args.q_steps);
                    Ok((n, train_q(&cfg)?))
                })
                .collect::<Result<_>>()
        })?
    } else {
        BTreeMap::new()
    };

    let run_one = |task: &Task| -> Result<RunLine> {
        let mut episode = EpisodeConfig::new(i64::from(task.n), task.run_id.clone())?
            .with_seed(task.seed)
            .with_record_rejected(!args.hide_rejected);
        if let Some(m) = args.max_steps {
            episode = episode.with_max_steps(m);
        }
        let mut artifacts = vec![TRAJECTORY_FILE.to_owned()];
        let mut agent: Box<dyn Agent> = match args.agent {
            AgentKind::Optimal => Box::new(OptimalAgent::new()),
            AgentKind::Random => Box::new(RandomAgent::new(task.seed)),
            AgentKind::Qlearn => Box::new(GreedyQAgent::new(tables[&task.n].clone())),
            AgentKind::Replay => {
                let text = decisions.as_ref().expect("checked above").text(task.n)?;
                Box::new(ReplayAgent::from_jsonl("replay", &text)?)
            }
            AgentKind::Llm => {
                artifacts.push(TRANSCRIPT_FILE.to_owned());
                let client = source.as_ref().expect("checked above").client(&gateway, task.n, &task.dir)?;
                Box::new(GatewayAgent::new(client))
            }
        };

        let mut manifest = RunManifest::new(task.run_id.clone(), mode, label.clone(), episode.n);
        manifest.timestamp = timestamp();
        manifest.seed = Some(task.seed);
        manifest.artifacts = artifacts;
        manifest.config = json!({
            "agent": format!("{:?}", args.agent).to_lowercase(),
            "episode": episode,
            "gateway": (args.agent == AgentKind::Llm).then_some(&gateway),
            "replay": args.replay.as_ref().map(|p| p.display().to_string()),
            "q_steps": (args.agent == AgentKind::Qlearn).then_some(args.q_steps),
        });
        write_manifest(&task.dir, &manifest)?;

        let result = run_agentic_episode(agent.as_mut(), episode)
            .with_context(|| format!("episode {}", task.run_id))?;
        write_trajectory(&result, &manifest, &task.dir)?;
        manifest.result = Some(RunOutcome::from_episode(&result));
        manifest.status = ManifestStatus::Finalized;
        write_manifest(&task.dir, &manifest)?;
        if let Some(err) = &result.error {
            eprintln!("{}: agent error: {err}", task.run_id);
        }
        Ok(RunLine {
            run_id: task.run_id.clone(),
            n: task.n,
            seed: task.seed,
            outcome: result.outcome,
            moves: result.moves_taken,
            rejected: result.trajectory.rejections().count(),
            end_game_called: result.end_game_called,
        })
    };
    let lines = pool.install(|| tasks.par_iter().map(run_one).collect::<Result<Vec<_>>>())?;

    println!("{:<32} {:>3} {:>5} {:<14} {:>6} {:>8} {:>8}", "run_id", "n", "seed", "outcome", "moves", "rejected", "end_game");
    for l in &lines {
        println!(
            "{:<32} {:>3} {:>5} {:<14} {:>6} {:>8} {:>8}",
            l.run_id, l.n, l.seed, l.outcome.as_str(), l.moves, l.rejected, l.end_game_called
        );
    }
    for n in args.n.iter() {
        let at_n: Vec<_> = lines.iter().filter(|l| l.n == n).collect();
        let solved = at_n.iter().filter(|l| l.outcome == Outcome::Solved).count();
        println!("n={n}: solved {solved}/{} (success rate {:.3})", at_n.len(), solved as f64 / at_n.len() as f64);
    }
    if let Some(s) = &source {
        if !s.is_replay() {
            println!("transcripts written to each run directory under {}", args.out.display());
        }
    }
    let failed = lines.iter().filter(|l| l.outcome == Outcome::AgentError).count();
    if failed > 0 {
        eprintln!("{failed} episode(s) ended with an agent error");
        return Ok(Status::Failed);
    }
    Ok(Status::Ok)
}
