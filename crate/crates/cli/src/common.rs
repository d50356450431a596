use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use toh_core::agents::gateway::{
    GatewayClient, GatewayConfig, HttpTransport, ReplayTransport, RequestLimiter, TranscriptLog,
};
use toh_core::storage::{MANIFEST_FILE, TRANSCRIPT_FILE};
use toh_core::DiskCount;

use crate::args::GatewayArgs;

/// Bad arguments or inputs; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Failed,
}

/// `SOURCE_DATE_EPOCH` when set, otherwise the current time.
pub fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
}

/// A model id reduced to characters safe in a directory name.
pub fn slug(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

pub fn disk(n: u8) -> DiskCount {
    DiskCount::new(i64::from(n)).expect("range parser bounds n")
}

/// Creates an empty run directory, replacing a previous run only when asked.
pub fn prepare_run_dir(out: &Path, run_id: &str, overwrite: bool) -> Result<PathBuf> {
    let dir = out.join(run_id);
    if dir.exists() {
        if !overwrite {
            return Err(config_error(format!("{} already exists (pass --overwrite to replace it)", dir.display())));
        }
        if !dir.join(MANIFEST_FILE).is_file() {
            return Err(config_error(format!("{} exists but is not a run directory", dir.display())));
        }
        fs::remove_dir_all(&dir).with_context(|| format!("removing {}", dir.display()))?;
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

pub fn gateway_config(g: &GatewayArgs) -> Result<GatewayConfig> {
    if !(0.0..=2.0).contains(&g.temperature) {
        return Err(config_error(format!("temperature {} outside 0..=2", g.temperature)));
    }
    if g.max_tokens == 0 || g.max_concurrent == 0 {
        return Err(config_error("--max-tokens and --max-concurrent must be positive"));
    }
    Ok(GatewayConfig {
        endpoint_url: g.endpoint.clone(),
        model_name: g.model.clone(),
        api_key_env_var_name: g.api_key_env.clone(),
        temperature: g.temperature,
        max_output_tokens: g.max_tokens,
        request_timeout_secs: g.timeout_secs,
        max_retries: g.max_retries,
        max_concurrent_requests: g.max_concurrent,
        ..GatewayConfig::default()
    })
}

/// Where model replies come from: recorded transcripts or the live endpoint.
pub enum ReplySource {
    Replay(PathBuf),
    Live(Arc<RequestLimiter>),
}

impl ReplySource {
    pub fn new(cfg: &GatewayConfig, replay: Option<&Path>) -> Result<Self> {
        match replay {
            Some(dir) if dir.is_dir() => Ok(ReplySource::Replay(dir.to_owned())),
            Some(dir) => Err(config_error(format!("{} is not a transcript directory", dir.display()))),
            None => {
                if std::env::var_os(&cfg.api_key_env_var_name).is_none() {
                    return Err(config_error(format!(
                        "environment variable {} with the API key is not set",
                        cfg.api_key_env_var_name
                    )));
                }
                Ok(ReplySource::Live(RequestLimiter::new(cfg.max_concurrent_requests)))
            }
        }
    }

    pub fn check_covers(&self, ns: impl Iterator<Item = u8>) -> Result<()> {
        if let ReplySource::Replay(dir) = self {
            let missing: Vec<_> = ns.filter(|n| !dir.join(format!("n{n}.jsonl")).is_file()).collect();
            if !missing.is_empty() {
                return Err(config_error(format!("{} has no transcript for n = {missing:?}", dir.display())));
            }
        }
        Ok(())
    }

    /// A client for disk count `n` that records its exchanges in `run_dir`.
    pub fn client(&self, cfg: &GatewayConfig, n: u8, run_dir: &Path) -> Result<GatewayClient> {
        let transport: Box<dyn toh_core::agents::gateway::Transport> = match self {
            ReplySource::Replay(dir) => Box::new(ReplayTransport::load(&dir.join(format!("n{n}.jsonl")))?),
            ReplySource::Live(limiter) => Box::new(HttpTransport::new(cfg, Arc::clone(limiter))?),
        };
        let log = TranscriptLog::append_to(run_dir.join(TRANSCRIPT_FILE))?;
        Ok(GatewayClient::new(cfg.clone(), transport).with_transcript(log))
    }

    pub fn is_replay(&self) -> bool {
        matches!(self, ReplySource::Replay(_))
    }
}

pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    if jobs == 0 {
        return Err(config_error("--jobs must be at least 1"));
    }
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("org/model v1:oneshot"), "org_model_v1_oneshot");
        assert_eq!(slug("optimal"), "optimal");
    }
}
