//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use toh_core::agents::{run_agentic_episode, OptimalAgent, RandomAgent};
use toh_core::analysis::divergence::{jsd, Distribution};
use toh_core::analysis::metrics::{loop_rate, TokenBudgetModel};
use toh_core::analysis::policy::TransitionDataset;
use toh_core::analysis::policy_divergences;
use toh_core::verify::{bellman_violations, jsd_by_entropy, verify_jsd, verify_q_convergence, VerifyOptions};
use toh_core::{
    canonical_solution, create_episode, distance_to_goal, enumerate_states, valid_actions, DiskCount,
    EpisodeConfig, Outcome,
};

const A1_BUDGET: Duration = Duration::from_secs(1);
const A2_BUDGET: Duration = Duration::from_secs(10);
const A4_BUDGET: Duration = Duration::from_secs(30);
const A5_WORKED_VALUE: f64 = 0.3113;
const A5_TOLERANCE: f64 = 1e-4;
const A6_MIN_TRANSITIONS: usize = 10_000;
const A6_MAX_JSD_VS_RANDOM: f64 = 0.05;
const A6_MIN_JSD_VS_OPTIMAL: f64 = 0.1;
const A8_L_MAX: u64 = 64_000;
const A8_TOKENS_PER_MOVE: u64 = 5;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn disks(n: i64) -> DiskCount {
    DiskCount::new(n).unwrap()
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn a1() -> Verdict {
    let start = Instant::now();
    for n in 1..=10 {
        let moves = canonical_solution(disks(n));
        ensure(moves.len() as u64 == (1u64 << n) - 1, format!("n={n}: {} moves", moves.len()))?;
        let mut ep = create_episode(EpisodeConfig::new(n, "a1").unwrap()).unwrap();
        for a in &moves {
            let fb = ep.move_disk(i64::from(a.from_peg()), i64::from(a.to_peg()), None).unwrap();
            ensure(fb.accepted, format!("n={n}: {a} rejected"))?;
        }
        let r = ep.end_game().unwrap();
        ensure(r.outcome == Outcome::Solved, format!("n={n}: outcome {:?}", r.outcome))?;
    }
    let t = start.elapsed();
    ensure(t < A1_BUDGET, format!("took {t:?}"))?;
    Ok(format!("canonical solutions of length 2^n - 1 solve n=1..10 in {t:?}"))
}

fn a2() -> Verdict {
    let start = Instant::now();
    for n in 1..=8 {
        let dn = disks(n);
        let count = enumerate_states(dn).len();
        ensure(count == 3usize.pow(n as u32), format!("n={n}: {count} states"))?;
        let d = distance_to_goal(dn);
        let h = d.get(toh_core::initial_state(dn));
        ensure(h == Some((1u32 << n) - 1), format!("n={n}: H*(initial) = {h:?}"))?;
        let bad = bellman_violations(&d);
        ensure(bad.is_empty(), format!("n={n}: {} Bellman violations", bad.len()))?;
    }
    let t = start.elapsed();
    ensure(t < A2_BUDGET, format!("took {t:?}"))?;
    Ok(format!("3^n states, H*(initial) = 2^n - 1, Bellman-consistent for n=1..8 in {t:?}"))
}

fn a3() -> Verdict {
    for n in 1..=8 {
        let mut two = 0;
        for s in enumerate_states(disks(n)) {
            let k = valid_actions(s).len();
            ensure((2..=3).contains(&k), format!("{s}: {k} actions"))?;
            ensure((k == 2) == (s.occupied_pegs() == 1), format!("{s}: {k} actions, {} pegs", s.occupied_pegs()))?;
            two += usize::from(k == 2);
        }
        ensure(two == 3, format!("n={n}: {two} two-action states"))?;
    }
    Ok("2 <= |V(s)| <= 3, |V(s)| = 2 iff single peg, three such states, n=1..8".into())
}

fn a4() -> Verdict {
    let start = Instant::now();
    let opts = VerifyOptions::default();
    let report = verify_q_convergence(&opts);
    let t = start.elapsed();
    if let Some(f) = report.failures().next() {
        return Err(format!("{}: {}", f.name, f.detail));
    }
    ensure(t < A4_BUDGET, format!("took {t:?}"))?;
    let conv = report.checks.iter().find(|c| c.name.starts_with("convergence")).unwrap();
    Ok(format!(
        "zero residual and ranking for n<=6, gamma in {:?}; {} in {t:?}",
        opts.gammas, conv.detail
    ))
}

fn a5() -> Verdict {
    let report = verify_jsd(&VerifyOptions::default());
    if let Some(f) = report.failures().next() {
        return Err(format!("{}: {}", f.name, f.detail));
    }
    let p = Distribution::from_weights([(0, 1.0), (1, 0.0)]).unwrap();
    let q = Distribution::from_weights([(0, 0.5), (1, 0.5)]).unwrap();
    let ours = jsd(&p, &q);
    let independent = jsd_by_entropy(&[1.0, 0.0], &[0.5, 0.5]);
    ensure((ours - independent).abs() <= A5_TOLERANCE, format!("{ours} vs entropy form {independent}"))?;
    ensure((ours - A5_WORKED_VALUE).abs() <= A5_TOLERANCE, format!("{ours} vs {A5_WORKED_VALUE}"))?;
    Ok(format!("1000-pair battery passes; jsd((1,0),(0.5,0.5)) = {ours:.6}"))
}

fn a6() -> Verdict {
    let mut optimal = Vec::new();
    for n in 1..=8 {
        let r = run_agentic_episode(&mut OptimalAgent::new(), EpisodeConfig::new(n, "opt").unwrap()).unwrap();
        optimal.push(r.trajectory);
    }
    let opt = TransitionDataset::from_trajectories(&optimal);
    for n in 1..=8 {
        let dn = disks(n);
        let lr = loop_rate(&opt, dn).map_err(|e| e.to_string())?;
        ensure(lr == 0.0, format!("optimal n={n}: loop rate {lr}"))?;
        let div = policy_divergences(&opt, dn, &distance_to_goal(dn)).map_err(|e| e.to_string())?;
        match (n, div) {
            // the only states on the 1-disk path have two valid actions
            (1, None) => {}
            (_, Some((j, _))) => ensure(j == 0.0, format!("optimal n={n}: jsd_vs_optimal {j}"))?,
            (_, None) => return Err(format!("optimal n={n}: no three-action states")),
        }
    }

    let n3 = disks(3);
    let mut random = Vec::new();
    let mut total = 0;
    let mut seed = 0u64;
    while total < A6_MIN_TRANSITIONS {
        let r = run_agentic_episode(&mut RandomAgent::new(seed), EpisodeConfig::new(3, format!("r{seed}")).unwrap())
            .unwrap();
        total += r.trajectory.transitions().count();
        random.push(r.trajectory);
        seed += 1;
    }
    let data = TransitionDataset::from_trajectories(&random);
    let (vs_opt, vs_rand) = policy_divergences(&data, n3, &distance_to_goal(n3))
        .map_err(|e| e.to_string())?
        .ok_or("random dataset has no three-action states")?;
    ensure(vs_rand <= A6_MAX_JSD_VS_RANDOM, format!("random jsd_vs_random {vs_rand}"))?;
    ensure(vs_opt >= A6_MIN_JSD_VS_OPTIMAL, format!("random jsd_vs_optimal {vs_opt}"))?;
    Ok(format!(
        "optimal: loop 0 for n=1..8, jsd_vs_optimal 0 for n=2..8; random n=3 seeds 0..{seed} \
         ({total} transitions): jsd_vs_random {vs_rand:.5}, jsd_vs_optimal {vs_opt:.5}"
    ))
}

fn toh(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_toh"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), format!("toh {args:?}: {}", String::from_utf8_lossy(&o.stderr)))
}

fn pipeline(out: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let runs = out.to_str().unwrap();
    let llm = fixtures.join("llm");
    let oneshot = fixtures.join("oneshot");
    toh(&[
        "run-agentic", "--agent", "llm", "--model", "fixture-llm", "--replay", llm.to_str().unwrap(), "--n", "1..4",
        "--out", runs, "--jobs", "4",
    ])?;
    toh(&["run-agentic", "--agent", "random", "--n", "2..3", "--seeds", "5", "--out", runs, "--jobs", "4"])?;
    toh(&["run-baseline", "--fixture", oneshot.to_str().unwrap(), "--model", "fixture-llm", "--n", "1..4", "--out", runs])?;
    toh(&["analyze", "--runs", runs, "--jobs", "4"])?;
    let mut files = BTreeMap::new();
    let mut stack = vec![out.to_owned()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let p = e.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(out).unwrap().to_owned(), fs::read(&p).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(files)
}

fn a7() -> Verdict {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    ensure(first.keys().eq(second.keys()), "different file sets")?;
    for (path, bytes) in &first {
        ensure(&second[path] == bytes, format!("{} differs", path.display()))?;
    }
    let trajectories = first.keys().filter(|p| p.ends_with("trajectory.jsonl")).count();
    ensure(first.contains_key(Path::new("metrics.csv")), "no metrics.csv")?;
    ensure(trajectories == 14, format!("{trajectories} trajectory files"))?;
    Ok(format!("{} files byte-identical across two runs ({trajectories} trajectories, metrics.csv)", first.len()))
}

fn a8() -> Verdict {
    let model = TokenBudgetModel { tokens_per_move: A8_TOKENS_PER_MOVE, constant_c: 0, budget_l_max: A8_L_MAX };
    ensure(model.token_budget(3) == 245, format!("T(3) = {}", model.token_budget(3)))?;
    for c in [1u64, 17, 1000] {
        let t = TokenBudgetModel { constant_c: c, ..model }.token_budget(3);
        ensure(t == 245 + u128::from(c), format!("T(3) with C={c} is {t}"))?;
    }
    ensure(model.n_max() == 6, format!("n_max = {}", model.n_max()))?;
    let diag = model.diagnostic();
    ensure(diag.n_max_direct == 6 && diag.n_max_log_expression == 13, format!("{diag:?}"))?;
    ensure(diag.message.contains("inconsistent"), format!("diagnostic does not flag the discrepancy: {}", diag.message))?;
    Ok(format!("T(3) = 245 + C; {}", diag.message))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [("A1", a1), ("A2", a2), ("A3", a3), ("A4", a4), ("A5", a5), ("A6", a6), ("A7", a7), ("A8", a8)];
    let mut failed = 0;
    for (id, check) in criteria {
        match check() {
            Ok(detail) => println!("{id} PASS: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL: {detail}");
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
