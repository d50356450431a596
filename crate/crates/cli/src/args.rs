use std::ops::RangeInclusive;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use toh_core::puzzle::DEFAULT_MAX_DISKS;
use toh_core::storage::MetricFormat;

#[derive(Debug, Parser)]
#[command(name = "toh", version, about = "Tower of Hanoi agent experiments and policy analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Play episodes move by move with a scripted, learned or model-backed agent.
    RunAgentic(AgenticArgs),
    /// Ask for a complete solution in one reply and score it.
    RunBaseline(BaselineArgs),
    /// Compute metrics over stored runs and export them.
    Analyze(AnalyzeArgs),
    /// Run the Q-value, action-set and divergence verification suites.
    Verify(VerifyArgs),
}

/// Disk counts given as `N`, `A..B` (inclusive) or `A..=B`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiskRange(pub RangeInclusive<u8>);

impl DiskRange {
    pub fn iter(&self) -> impl Iterator<Item = u8> {
        self.0.clone()
    }
}

impl std::fmt::Display for DiskRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..{}", self.0.start(), self.0.end())
    }
}

pub fn parse_disk_range(text: &str) -> Result<DiskRange, String> {
    let num = |s: &str| {
        s.trim()
            .parse::<u8>()
            .map_err(|_| format!("{s:?} is not a disk count"))
            .and_then(|n| {
                if (1..=DEFAULT_MAX_DISKS).contains(&n) {
                    Ok(n)
                } else {
                    Err(format!("disk count {n} outside 1..={DEFAULT_MAX_DISKS}"))
                }
            })
    };
    let (lo, hi) = match text.split_once("..") {
        Some((a, b)) => (num(a)?, num(b.strip_prefix('=').unwrap_or(b))?),
        None => {
            let n = num(text)?;
            (n, n)
        }
    };
    if lo > hi {
        return Err(format!("empty range {text}"));
    }
    Ok(DiskRange(lo..=hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentKind {
    Optimal,
    Random,
    Llm,
    Replay,
    Qlearn,
}

#[derive(Debug, Clone, Args)]
pub struct GatewayArgs {
    /// Chat-completions endpoint URL.
    #[arg(long, default_value = "http://localhost:8000/v1/chat/completions")]
    pub endpoint: String,
    /// Model name sent to the endpoint and used as the model id.
    #[arg(long, default_value = "model")]
    pub model: String,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 30_000)]
    pub max_tokens: u32,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "TOH_API_KEY")]
    pub api_key_env: String,
    #[arg(long, default_value_t = 300)]
    pub timeout_secs: u64,
    #[arg(long, default_value_t = 4)]
    pub max_retries: u32,
    /// Upper bound on requests in flight across all jobs.
    #[arg(long, default_value_t = 4)]
    pub max_concurrent: usize,
}

#[derive(Debug, Clone, Args)]
pub struct AgenticArgs {
    /// Disk counts, e.g. 3 or 1..8.
    #[arg(long, value_parser = parse_disk_range, default_value = "3")]
    pub n: DiskRange,
    /// Episodes per disk count, seeded 0..seeds.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, value_enum, default_value_t = AgentKind::Optimal)]
    pub agent: AgentKind,
    /// For `llm`: directory of recorded transcripts named n<N>.jsonl.
    /// For `replay`: a decision file, or a directory of n<N>.jsonl decision files.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[command(flatten)]
    pub gateway: GatewayArgs,
    /// Tool-call cap per episode; defaults to 8 * (2^n - 1).
    #[arg(long)]
    pub max_steps: Option<u32>,
    /// Leave rejected moves out of the observation history and trajectory.
    #[arg(long)]
    pub hide_rejected: bool,
    /// Q-learning updates before playing greedily (agent `qlearn`).
    #[arg(long, default_value_t = 200_000)]
    pub q_steps: u64,
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Replace run directories that already exist.
    #[arg(long)]
    pub overwrite: bool,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct BaselineArgs {
    #[arg(long, value_parser = parse_disk_range, default_value = "3")]
    pub n: DiskRange,
    /// Scored answer text instead of a live request: a file used for every n,
    /// or a directory of n<N>.txt files.
    #[arg(long, conflicts_with = "replay")]
    pub fixture: Option<PathBuf>,
    /// Directory of recorded transcripts named n<N>.jsonl.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[command(flatten)]
    pub gateway: GatewayArgs,
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    #[arg(long)]
    pub overwrite: bool,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for MetricFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => MetricFormat::Csv,
            FormatArg::Json => MetricFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Directory holding run directories.
    #[arg(long, default_value = "runs")]
    pub runs: PathBuf,
    /// Restrict to these disk counts; every listed (model, n) cell must have data.
    #[arg(long, value_parser = parse_disk_range)]
    pub n: Option<DiskRange>,
    /// Restrict to these model ids (repeatable); every listed cell must have data.
    #[arg(long = "model")]
    pub models: Vec<String>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    /// Output file; defaults to <runs>/metrics.<format>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Largest disk count for the enumeration suite.
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u8).range(1..=DEFAULT_MAX_DISKS as i64))]
    pub n: u8,
    /// Largest disk count for the closed-form Q checks.
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u8).range(1..=DEFAULT_MAX_DISKS as i64))]
    pub q_n: u8,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.9, 0.99])]
    pub gammas: Vec<f64>,
    /// Q-learning updates for the convergence check.
    #[arg(long, default_value_t = 200_000)]
    pub q_steps: u64,
    /// Random distribution pairs in the divergence battery.
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, hide = true)]
    pub inject_bug: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_ranges() {
        assert_eq!(parse_disk_range("3").unwrap(), DiskRange(3..=3));
        assert_eq!(parse_disk_range("1..8").unwrap(), DiskRange(1..=8));
        assert_eq!(parse_disk_range("2..=4").unwrap().iter().count(), 3);
        assert!(parse_disk_range("0").is_err());
        assert!(parse_disk_range("5..2").is_err());
        assert!(parse_disk_range("1..13").is_err());
        assert!(parse_disk_range("x").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
