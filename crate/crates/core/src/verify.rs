//! Executable checks of the three structural results: the closed-form Q
//! target, the bounded valid-action set and the bounded Jensen-Shannon
//! divergence.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::divergence::{jsd, Distribution};
use crate::puzzle::{apply_move, goal_state, initial_state, valid_actions, DiskCount, DEFAULT_MAX_DISKS};
use crate::qlearn::{bellman_residual, closed_form_from_distances, max_q_deviation, train_q, QLearnConfig, QTable};
use crate::search::{distance_to_goal, enumerate_states, DistanceMap};

pub const RESIDUAL_TOLERANCE: f64 = 1e-12;
pub const CONVERGENCE_TOLERANCE: f64 = 1e-9;
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
pub const WORKED_VALUE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    fn new(suite: &'static str) -> Self {
        Self { suite, checks: Vec::new() }
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(CheckResult { name: name.into(), passed, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> + '_ {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[{}] {}", if self.passed() { "PASS" } else { "FAIL" }, self.suite)?;
        for c in &self.checks {
            writeln!(f, "  {} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyOptions {
    /// Largest disk count for the enumeration suite.
    pub enumeration_max_n: u8,
    /// Largest disk count for the closed-form Q checks.
    pub q_max_n: u8,
    pub gammas: Vec<f64>,
    pub convergence_n: u8,
    pub convergence_steps: u64,
    pub jsd_pairs: usize,
    pub seed: u64,
    /// Corrupts one distance before the checks run.
    pub inject_bug: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            enumeration_max_n: 6,
            q_max_n: 6,
            gammas: vec![0.5, 0.9, 0.99],
            convergence_n: 3,
            convergence_steps: 200_000,
            jsd_pairs: 1000,
            seed: 7,
            inject_bug: false,
        }
    }
}

impl VerifyOptions {
    pub fn validate(&self) -> Result<(), String> {
        let bound = 1..=DEFAULT_MAX_DISKS;
        for (name, v) in [
            ("enumeration n", self.enumeration_max_n),
            ("q-table n", self.q_max_n),
            ("convergence n", self.convergence_n),
        ] {
            if !bound.contains(&v) {
                return Err(format!("{name} {v} outside 1..={DEFAULT_MAX_DISKS}"));
            }
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
            return Err(format!("gamma {g} not in (0, 1)"));
        }
        if self.jsd_pairs == 0 || self.convergence_steps == 0 {
            return Err("jsd pair count and convergence steps must be positive".into());
        }
        Ok(())
    }
}

fn disks(n: u8) -> DiskCount {
    DiskCount::new(i64::from(n)).expect("validated disk count")
}

fn distances(n: DiskCount, inject_bug: bool) -> DistanceMap {
    let mut d = distance_to_goal(n);
    if inject_bug {
        let s = initial_state(n);
        let h = d.get(s).expect("initial reachable");
        d.set(s, h + 2);
    }
    d
}

/// States where H*(s) differs from 1 + min over successors (0 at the goal).
pub fn bellman_violations(d: &DistanceMap) -> Vec<String> {
    let n = d.disk_count();
    let goal = goal_state(n);
    let mut bad = Vec::new();
    for s in enumerate_states(n) {
        let h = d.get(s);
        let want = if s == goal {
            Some(0)
        } else {
            valid_actions(s)
                .iter()
                .filter_map(|a| d.get(apply_move(s, a).expect("valid")))
                .min()
                .map(|m| m + 1)
        };
        if h != want {
            bad.push(format!("{s}: stored {h:?}, successors imply {want:?}"));
        }
    }
    bad
}

fn ranking_violations(q: &QTable, d: &DistanceMap) -> usize {
    let mut per_state: BTreeMap<_, Vec<(u32, f64)>> = BTreeMap::new();
    for (s, a, v) in q.iter() {
        let h = d.get(apply_move(s, a).expect("valid")).expect("total");
        per_state.entry(s).or_default().push((h, v));
    }
    let mut bad = 0;
    for entries in per_state.values() {
        for &(h1, q1) in entries {
            for &(h2, q2) in entries {
                if (q1 == q2) != (h1 == h2) || (h1 > h2 && q1 >= q2) {
                    bad += 1;
                }
            }
        }
    }
    bad
}

/// Closed-form Q: zero Bellman residual and the ranking properties for every
/// n and gamma, then tabular Q-learning converging to it.
pub fn verify_q_convergence(opts: &VerifyOptions) -> SuiteReport {
    let mut r = SuiteReport::new("q-value convergence");
    for n in 1..=opts.q_max_n {
        let dn = disks(n);
        let d = distances(dn, opts.inject_bug);
        for &gamma in &opts.gammas {
            let q = closed_form_from_distances(&d, gamma);
            let residual = bellman_residual(&q, gamma);
            r.check(
                format!("residual n={n} gamma={gamma}"),
                residual <= RESIDUAL_TOLERANCE,
                format!("max residual {residual:e} over {} pairs", q.len()),
            );
            let bad = ranking_violations(&q, &d);
            r.check(format!("ranking n={n} gamma={gamma}"), bad == 0, format!("{bad} violating pairs"));
        }
    }

    let dn = disks(opts.convergence_n);
    let mut cfg = QLearnConfig::new(dn);
    cfg.episodes = u64::MAX;
    cfg.step_budget = Some(opts.convergence_steps);
    cfg.seed = opts.seed;
    let target = closed_form_from_distances(&distances(dn, opts.inject_bug), cfg.gamma);
    match train_q(&cfg).and_then(|q| max_q_deviation(&q, &target).map(|dev| (q, dev))) {
        Ok((q, dev)) => {
            r.check(
                format!("convergence n={} gamma={}", cfg.n, cfg.gamma),
                dev <= CONVERGENCE_TOLERANCE,
                format!(
                    "max deviation {dev:e} after {} steps (alpha={} epsilon={} seed={})",
                    opts.convergence_steps, cfg.alpha, cfg.epsilon, cfg.seed
                ),
            );
            let d = distance_to_goal(dn);
            let slow = greedy_misses(&q, &d);
            r.check("greedy policy optimal", slow == 0, format!("{slow} starts not solved in H* moves"));
        }
        Err(e) => r.check("convergence", false, e.to_string()),
    }
    r
}

fn greedy_misses(q: &QTable, d: &DistanceMap) -> usize {
    let goal = goal_state(d.disk_count());
    d.iter()
        .filter(|&(start, h)| {
            let mut s = start;
            for _ in 0..h {
                match q.greedy_action(s) {
                    Some(a) => s = apply_move(s, a).expect("valid"),
                    None => return true,
                }
            }
            s != goal
        })
        .count()
}

/// Action-set bounds and H* structure over full enumerations.
pub fn verify_action_sets(opts: &VerifyOptions) -> SuiteReport {
    let mut r = SuiteReport::new("valid action set bounds");
    for n in 1..=opts.enumeration_max_n {
        let dn = disks(n);
        let states = enumerate_states(dn);
        r.check(
            format!("state count n={n}"),
            states.len() == dn.state_count(),
            format!("{} states, expected 3^{n} = {}", states.len(), dn.state_count()),
        );

        let mut out_of_bounds = 0;
        let mut mismatched = 0;
        let mut two_action = 0;
        for &s in &states {
            let k = valid_actions(s).len();
            if !(2..=3).contains(&k) {
                out_of_bounds += 1;
            }
            if (k == 2) != (s.occupied_pegs() == 1) {
                mismatched += 1;
            }
            if k == 2 {
                two_action += 1;
            }
        }
        r.check(format!("2 <= |V(s)| <= 3 n={n}"), out_of_bounds == 0, format!("{out_of_bounds} states outside"));
        r.check(
            format!("|V(s)| = 2 iff single peg n={n}"),
            mismatched == 0 && two_action == 3,
            format!("{two_action} two-action states, {mismatched} mismatches"),
        );

        let d = distances(dn, opts.inject_bug);
        let h0 = d.get(initial_state(dn));
        r.check(
            format!("H*(initial) n={n}"),
            h0 == Some(dn.optimal_length() as u32),
            format!("{h0:?}, expected {}", dn.optimal_length()),
        );
        let bad = bellman_violations(&d);
        r.check(
            format!("bellman consistency n={n}"),
            bad.is_empty(),
            match bad.first() {
                None => "all states consistent".to_owned(),
                Some(first) => format!("{} inconsistent, first {first}", bad.len()),
            },
        );
    }
    r
}

fn random_distribution(rng: &mut ChaCha8Rng, offset: u32) -> Distribution<u32> {
    let size = rng.random_range(1..=8u32);
    let weights: Vec<_> = (0..size)
        .map(|k| {
            let w = if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() };
            (offset + k, w)
        })
        .collect();
    if weights.iter().all(|(_, w)| *w == 0.0) {
        Distribution::from_weights([(offset, 1.0)]).expect("positive")
    } else {
        Distribution::from_weights(weights).expect("positive")
    }
}

/// JSD written as H(M) - (H(P) + H(Q)) / 2 over explicit vectors, in bits.
pub fn jsd_by_entropy(p: &[f64], q: &[f64]) -> f64 {
    fn entropy(v: impl Iterator<Item = f64>) -> f64 {
        -v.filter(|&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>() / std::f64::consts::LN_2
    }
    let m = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b));
    entropy(m) - 0.5 * (entropy(p.iter().copied()) + entropy(q.iter().copied()))
}

/// Range, symmetry, identity and disjoint-support properties over seeded
/// random pairs, plus the worked value.
pub fn verify_jsd(opts: &VerifyOptions) -> SuiteReport {
    let mut r = SuiteReport::new("jensen-shannon divergence bounds");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mut range, mut symmetry, mut identity, mut disjoint) = (0, 0, 0, 0);
    let mut worst_asym = 0.0f64;
    for _ in 0..opts.jsd_pairs {
        let p = random_distribution(&mut rng, 0);
        let q = random_distribution(&mut rng, 0);
        let far = random_distribution(&mut rng, 100);
        let (pq, qp) = (jsd(&p, &q), jsd(&q, &p));
        if !(0.0..=1.0).contains(&pq) {
            range += 1;
        }
        worst_asym = worst_asym.max((pq - qp).abs());
        if (pq - qp).abs() > SYMMETRY_TOLERANCE {
            symmetry += 1;
        }
        if jsd(&p, &p) != 0.0 {
            identity += 1;
        }
        if (jsd(&p, &far) - 1.0).abs() > SYMMETRY_TOLERANCE {
            disjoint += 1;
        }
    }
    let pairs = opts.jsd_pairs;
    r.check("range [0, 1]", range == 0, format!("{range} of {pairs} pairs outside"));
    r.check("symmetry", symmetry == 0, format!("{symmetry} of {pairs} asymmetric, worst {worst_asym:e}"));
    r.check("identity gives 0", identity == 0, format!("{identity} of {pairs} nonzero"));
    r.check("disjoint supports give 1", disjoint == 0, format!("{disjoint} of {pairs} not 1"));

    let p = Distribution::from_weights([(0u32, 1.0), (1, 0.0)]).expect("valid");
    let q = Distribution::from_weights([(0u32, 0.5), (1, 0.5)]).expect("valid");
    let ours = jsd(&p, &q);
    let reference = jsd_by_entropy(&[1.0, 0.0], &[0.5, 0.5]);
    r.check(
        "worked value",
        (ours - reference).abs() <= WORKED_VALUE_TOLERANCE,
        format!("jsd((1,0),(0.5,0.5)) = {ours:.10}, entropy form {reference:.10}"),
    );
    r
}

pub fn run_all(opts: &VerifyOptions) -> Vec<SuiteReport> {
    vec![verify_q_convergence(opts), verify_action_sets(opts), verify_jsd(opts)]
}
