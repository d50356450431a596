//! Tower of Hanoi model: disk counts, states, moves and legal-move sets.
//!
//! A state is stored as a base-3 code where digit `i` is the peg holding disk
//! `i + 1` (disk 1 is the smallest). The stacking order on each peg follows
//! from the size rule. Every code in `0..3^n` is a valid state.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Enumeration cap used unless a caller picks another.
pub const DEFAULT_MAX_DISKS: u8 = 12;

/// Hard limit imposed by the packed state code (3^20 < 2^32).
pub const MAX_SUPPORTED_DISKS: u8 = 20;

pub const PEGS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PuzzleError {
    #[error("disk count {n} outside 1..={bound}")]
    DiskCountOutOfRange { n: i64, bound: u8 },
    #[error("malformed state text: {0}")]
    Malformed(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid move: {0}")]
    InvalidMove(#[from] MoveError),
}

/// The rule violated by a rejected move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveError {
    #[error("empty source")]
    EmptySource,
    #[error("larger on smaller")]
    LargerOnSmaller,
    #[error("same peg")]
    SamePeg,
    #[error("peg out of range")]
    PegOutOfRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct DiskCount(u8);

impl DiskCount {
    pub fn new(n: i64) -> Result<Self, PuzzleError> {
        Self::with_bound(n, DEFAULT_MAX_DISKS)
    }

    /// Like [`DiskCount::new`] with a caller-chosen cap (at most
    /// [`MAX_SUPPORTED_DISKS`]).
    pub fn with_bound(n: i64, bound: u8) -> Result<Self, PuzzleError> {
        let bound = bound.min(MAX_SUPPORTED_DISKS);
        if n < 1 || n > i64::from(bound) {
            return Err(PuzzleError::DiskCountOutOfRange { n, bound });
        }
        Ok(Self(n as u8))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Number of states, 3^n.
    pub fn state_count(self) -> usize {
        3usize.pow(u32::from(self.0))
    }

    /// Length of the optimal solution, 2^n - 1.
    pub fn optimal_length(self) -> u64 {
        (1u64 << self.0) - 1
    }
}

impl TryFrom<u8> for DiskCount {
    type Error = PuzzleError;

    fn try_from(n: u8) -> Result<Self, Self::Error> {
        Self::with_bound(i64::from(n), MAX_SUPPORTED_DISKS)
    }
}

impl From<DiskCount> for u8 {
    fn from(n: DiskCount) -> u8 {
        n.0
    }
}

impl fmt::Display for DiskCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// An ordered peg pair: take the top disk of `from` and place it on `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MoveAction {
    #[serde(rename = "from_peg")]
    from: u8,
    #[serde(rename = "to_peg")]
    to: u8,
}

impl MoveAction {
    /// All six peg pairs in a fixed order.
    pub const ALL: [MoveAction; 6] = [
        MoveAction { from: 0, to: 1 },
        MoveAction { from: 0, to: 2 },
        MoveAction { from: 1, to: 0 },
        MoveAction { from: 1, to: 2 },
        MoveAction { from: 2, to: 0 },
        MoveAction { from: 2, to: 1 },
    ];

    pub fn new(from: i64, to: i64) -> Result<Self, MoveError> {
        if !(0..PEGS as i64).contains(&from) || !(0..PEGS as i64).contains(&to) {
            return Err(MoveError::PegOutOfRange);
        }
        if from == to {
            return Err(MoveError::SamePeg);
        }
        Ok(Self {
            from: from as u8,
            to: to as u8,
        })
    }

    pub fn from_peg(self) -> u8 {
        self.from
    }

    pub fn to_peg(self) -> u8 {
        self.to
    }

    pub fn inverse(self) -> Self {
        Self {
            from: self.to,
            to: self.from,
        }
    }
}

impl fmt::Display for MoveAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "move_disk({}, {})", self.from, self.to)
    }
}

/// Legal moves from a state, in [`MoveAction::ALL`] order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActionSet {
    actions: Vec<MoveAction>,
}

impl ActionSet {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn contains(&self, action: MoveAction) -> bool {
        self.actions.contains(&action)
    }

    pub fn iter(&self) -> impl Iterator<Item = MoveAction> + '_ {
        self.actions.iter().copied()
    }

    pub fn as_slice(&self) -> &[MoveAction] {
        &self.actions
    }
}

impl FromIterator<MoveAction> for ActionSet {
    fn from_iter<I: IntoIterator<Item = MoveAction>>(iter: I) -> Self {
        let mut actions: Vec<_> = iter.into_iter().collect();
        actions.sort();
        actions.dedup();
        Self { actions }
    }
}

impl<'a> IntoIterator for &'a ActionSet {
    type Item = MoveAction;
    type IntoIter = std::iter::Copied<std::slice::Iter<'a, MoveAction>>;

    fn into_iter(self) -> Self::IntoIter {
        self.actions.iter().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PuzzleState {
    n: u8,
    code: u32,
}

impl PuzzleState {
    /// Builds a state from its packed code. `code` must be below 3^n.
    pub fn from_code(n: DiskCount, code: u32) -> Result<Self, PuzzleError> {
        if code as usize >= n.state_count() {
            return Err(PuzzleError::InvalidState(format!(
                "code {code} out of range for {n} disks"
            )));
        }
        Ok(Self { n: n.get(), code })
    }

    /// Builds a state from bottom-to-top peg stacks, checking every invariant.
    pub fn from_pegs<P: AsRef<[u8]>>(pegs: &[P]) -> Result<Self, PuzzleError> {
        if pegs.len() != PEGS {
            return Err(PuzzleError::InvalidState(format!(
                "expected {PEGS} pegs, found {}",
                pegs.len()
            )));
        }
        let total: usize = pegs.iter().map(|p| p.as_ref().len()).sum();
        let n = DiskCount::with_bound(total as i64, MAX_SUPPORTED_DISKS)
            .map_err(|_| PuzzleError::InvalidState(format!("{total} disks")))?;
        let mut owner = vec![None; total];
        for (peg, stack) in pegs.iter().enumerate() {
            let stack = stack.as_ref();
            for w in stack.windows(2) {
                if w[0] <= w[1] {
                    return Err(PuzzleError::InvalidState(format!(
                        "disk {} sits on disk {} on peg {peg}",
                        w[1], w[0]
                    )));
                }
            }
            for &disk in stack {
                if disk == 0 || disk as usize > total {
                    return Err(PuzzleError::InvalidState(format!(
                        "disk id {disk} outside 1..={total}"
                    )));
                }
                let slot = &mut owner[disk as usize - 1];
                if slot.is_some() {
                    return Err(PuzzleError::InvalidState(format!("disk {disk} appears twice")));
                }
                *slot = Some(peg as u32);
            }
        }
        let code = owner
            .iter()
            .rev()
            .fold(0u32, |acc, peg| acc * 3 + peg.expect("all disks placed"));
        Ok(Self { n: n.get(), code })
    }

    pub fn code(self) -> u32 {
        self.code
    }

    pub fn disk_count(self) -> DiskCount {
        DiskCount(self.n)
    }

    /// Peg holding `disk` (1-based).
    pub fn peg_of(self, disk: u8) -> u8 {
        debug_assert!(disk >= 1 && disk <= self.n);
        ((self.code / 3u32.pow(u32::from(disk - 1))) % 3) as u8
    }

    /// Top disk of each peg (smallest disk on it), if any.
    pub fn tops(self) -> [Option<u8>; PEGS] {
        let mut tops = [None; PEGS];
        let mut code = self.code;
        for disk in 1..=self.n {
            let peg = (code % 3) as usize;
            code /= 3;
            if tops[peg].is_none() {
                tops[peg] = Some(disk);
            }
        }
        tops
    }

    /// Bottom-to-top stacks.
    pub fn pegs(self) -> [Vec<u8>; PEGS] {
        let mut pegs: [Vec<u8>; PEGS] = Default::default();
        for disk in (1..=self.n).rev() {
            pegs[self.peg_of(disk) as usize].push(disk);
        }
        pegs
    }

    /// Number of pegs holding at least one disk.
    pub fn occupied_pegs(self) -> usize {
        self.tops().iter().filter(|t| t.is_some()).count()
    }

    fn check_move(self, action: MoveAction) -> Result<u8, MoveError> {
        let tops = self.tops();
        let disk = tops[action.from as usize].ok_or(MoveError::EmptySource)?;
        match tops[action.to as usize] {
            Some(dest) if dest < disk => Err(MoveError::LargerOnSmaller),
            _ => Ok(disk),
        }
    }

    pub fn is_legal(self, action: MoveAction) -> bool {
        self.check_move(action).is_ok()
    }
}

impl fmt::Display for PuzzleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, peg) in self.pegs().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str("[")?;
            for (j, disk) in peg.iter().enumerate() {
                if j > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{disk}")?;
            }
            f.write_str("]")?;
        }
        f.write_str("]")
    }
}

impl FromStr for PuzzleState {
    type Err = PuzzleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // The bracket rendering is a JSON array of arrays.
        let pegs: Vec<Vec<u8>> =
            serde_json::from_str(s).map_err(|e| PuzzleError::Malformed(format!("{s:?}: {e}")))?;
        Self::from_pegs(&pegs)
    }
}

impl Serialize for PuzzleState {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PuzzleState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// All disks on peg 0, largest at the bottom.
pub fn initial_state(n: DiskCount) -> PuzzleState {
    PuzzleState { n: n.get(), code: 0 }
}

/// All disks on peg 2.
pub fn goal_state(n: DiskCount) -> PuzzleState {
    PuzzleState {
        n: n.get(),
        code: (n.state_count() - 1) as u32,
    }
}

pub fn is_goal(s: PuzzleState, n: DiskCount) -> bool {
    s == goal_state(n)
}

pub fn valid_actions(s: PuzzleState) -> ActionSet {
    let tops = s.tops();
    let actions = MoveAction::ALL
        .into_iter()
        .filter(|a| match (tops[a.from as usize], tops[a.to as usize]) {
            (None, _) => false,
            (Some(_), None) => true,
            (Some(moving), Some(dest)) => moving < dest,
        })
        .collect();
    ActionSet { actions }
}

/// The transition function. Deterministic; rejects illegal moves with the
/// rule they break.
pub fn apply_move(s: PuzzleState, a: MoveAction) -> Result<PuzzleState, MoveError> {
    let disk = s.check_move(a)?;
    let place = 3u32.pow(u32::from(disk - 1));
    let code = s.code - u32::from(a.from) * place + u32::from(a.to) * place;
    Ok(PuzzleState { n: s.n, code })
}
