//! Check-digit rules over five-digit strings.
//!
//! Every rule reads the first four digits, reduces them to a residue and
//! demands one specific fifth digit:
//!
//! - `Rule1`: the check digit is the digit sum of the prefix mod 10.
//! - `Rule2`: prefix digits are weighted `1, 2, 4, 8` left to right and summed
//!   mod 11; a residue of 10 maps to check digit 0.
//! - `Rule3`: the whole string is a Luhn string. Positions 2 and 4 (1-based,
//!   i.e. every second digit counting leftwards from the check digit) are
//!   doubled with 9 subtracted from two-digit products.
//!
//! The same rules are also exposed as [`ResidueAutomaton`]s, which makes the
//! expected reward under a factorized distribution computable exactly with a
//! small dynamic program instead of enumerating all 10^5 strings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::ProbTable;
use crate::{NUM_CLASSES, SEQ_LEN};

/// Number of digits that feed the check digit.
pub const PREFIX_LEN: usize = SEQ_LEN - 1;

/// Row-sum slack accepted by [`expected_reward_exact`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("digit value {0} is outside 0..=9")]
    BadDigit(u8),
    #[error("expected {expected} digits, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("unknown rule `{0}` (expected rule1, rule2 or rule3)")]
    UnknownRule(String),
    #[error("probability row {row} is not a distribution (sum error {sum_error:?})")]
    InvalidProbTable { row: usize, sum_error: Option<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Digit(u8);

impl Digit {
    pub fn new(value: u8) -> Result<Self, RuleError> {
        if value < 10 {
            Ok(Self(value))
        } else {
            Err(RuleError::BadDigit(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Digit> {
        (0..10).map(Digit)
    }
}

impl TryFrom<u8> for Digit {
    type Error = RuleError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Digit::new(value)
    }
}

impl From<Digit> for u8 {
    fn from(d: Digit) -> u8 {
        d.0
    }
}

impl fmt::Display for Digit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Exactly five digits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DigitString([u8; SEQ_LEN]);

impl DigitString {
    pub fn new(digits: [u8; SEQ_LEN]) -> Result<Self, RuleError> {
        if let Some(&bad) = digits.iter().find(|&&d| d > 9) {
            return Err(RuleError::BadDigit(bad));
        }
        Ok(Self(digits))
    }

    pub fn from_digits(digits: [Digit; SEQ_LEN]) -> Self {
        Self(digits.map(Digit::value))
    }

    /// Appends a check digit to a four-digit prefix.
    pub fn from_prefix(prefix: [Digit; PREFIX_LEN], check: Digit) -> Self {
        let mut digits = [0u8; SEQ_LEN];
        for (slot, d) in digits.iter_mut().zip(prefix) {
            *slot = d.value();
        }
        digits[PREFIX_LEN] = check.value();
        Self(digits)
    }

    /// The string whose digits spell `n` with leading zeros; `n < 100_000`.
    pub fn from_index(n: u32) -> Self {
        debug_assert!(n < 100_000);
        let mut digits = [0u8; SEQ_LEN];
        let mut rest = n;
        for slot in digits.iter_mut().rev() {
            *slot = (rest % 10) as u8;
            rest /= 10;
        }
        Self(digits)
    }

    /// Iterates all 10^5 strings in lexicographic order.
    pub fn all() -> impl Iterator<Item = DigitString> {
        (0..100_000).map(Self::from_index)
    }

    pub fn values(&self) -> [u8; SEQ_LEN] {
        self.0
    }

    pub fn digit(&self, position: usize) -> Digit {
        Digit(self.0[position])
    }

    pub fn prefix(&self) -> [Digit; PREFIX_LEN] {
        [0, 1, 2, 3].map(|i| Digit(self.0[i]))
    }

    pub fn check(&self) -> Digit {
        Digit(self.0[PREFIX_LEN])
    }
}

impl fmt::Display for DigitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.0 {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl FromStr for DigitString {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = s.trim().as_bytes();
        if bytes.len() != SEQ_LEN {
            return Err(RuleError::BadLength {
                expected: SEQ_LEN,
                got: bytes.len(),
            });
        }
        let mut digits = [0u8; SEQ_LEN];
        for (slot, &b) in digits.iter_mut().zip(bytes) {
            if !b.is_ascii_digit() {
                return Err(RuleError::BadDigit(b));
            }
            *slot = b - b'0';
        }
        Ok(Self(digits))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleId {
    Rule1,
    Rule2,
    Rule3,
}

impl RuleId {
    pub const ALL: [RuleId; 3] = [RuleId::Rule1, RuleId::Rule2, RuleId::Rule3];

    pub fn name(self) -> &'static str {
        match self {
            RuleId::Rule1 => "rule1",
            RuleId::Rule2 => "rule2",
            RuleId::Rule3 => "rule3",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleId {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rule1" | "1" => Ok(RuleId::Rule1),
            "rule2" | "2" => Ok(RuleId::Rule2),
            "rule3" | "3" => Ok(RuleId::Rule3),
            _ => Err(RuleError::UnknownRule(s.to_string())),
        }
    }
}

/// Luhn doubling: `2d`, minus 9 when that has two digits.
fn luhn_double(d: u8) -> u8 {
    let twice = 2 * d;
    if twice > 9 {
        twice - 9
    } else {
        twice
    }
}

/// Contribution of digit `d` at prefix position `pos` (0-based, reading order)
/// to the rule's running residue, already reduced.
fn weighted(rule: RuleId, pos: usize, d: u8) -> u32 {
    match rule {
        RuleId::Rule1 => d as u32,
        RuleId::Rule2 => (d as u32) << pos,
        // 1-based positions 2 and 4 are 0-based 1 and 3.
        RuleId::Rule3 if pos % 2 == 1 => luhn_double(d) as u32,
        RuleId::Rule3 => d as u32,
    }
}

pub fn modulus(rule: RuleId) -> u32 {
    match rule {
        RuleId::Rule1 | RuleId::Rule3 => 10,
        RuleId::Rule2 => 11,
    }
}

/// The unique check digit accepted after a prefix that reduced to `residue`.
fn check_for_residue(rule: RuleId, residue: u32) -> u8 {
    match rule {
        RuleId::Rule1 => residue as u8,
        RuleId::Rule2 if residue == 10 => 0,
        RuleId::Rule2 => residue as u8,
        RuleId::Rule3 => ((10 - residue) % 10) as u8,
    }
}

fn prefix_residue(rule: RuleId, prefix: &[u8]) -> u32 {
    let m = modulus(rule);
    prefix
        .iter()
        .enumerate()
        .fold(0, |acc, (pos, &d)| (acc + weighted(rule, pos, d)) % m)
}

pub fn check_digit(rule: RuleId, prefix: [Digit; PREFIX_LEN]) -> Digit {
    let raw = prefix.map(Digit::value);
    Digit(check_for_residue(rule, prefix_residue(rule, &raw)))
}

pub fn verify(rule: RuleId, s: &DigitString) -> bool {
    let v = s.values();
    check_for_residue(rule, prefix_residue(rule, &v[..PREFIX_LEN])) == v[PREFIX_LEN]
}

/// Binary rule reward: 1 for a conforming string, 0 otherwise.
pub fn reward(rule: RuleId, s: &DigitString) -> f64 {
    if verify(rule, s) {
        1.0
    } else {
        0.0
    }
}

/// Number of conforming strings, by enumerating all 10^5 of them.
pub fn count_valid(rule: RuleId) -> usize {
    DigitString::all().filter(|s| verify(rule, s)).count()
}

/// Deterministic finite-state encoding of a rule.
///
/// States are residues in `0..modulus`; the start state is 0. The four prefix
/// digits drive `transition`, and `accept` decides the check digit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResidueAutomaton {
    modulus: usize,
    // [state][pos][digit] -> state
    transitions: Vec<u8>,
    // [state][check] -> accepted
    accepting: Vec<bool>,
}

impl ResidueAutomaton {
    pub fn modulus(&self) -> usize {
        self.modulus
    }

    pub fn transition(&self, state: usize, pos: usize, digit: Digit) -> usize {
        self.transitions[(state * PREFIX_LEN + pos) * NUM_CLASSES + digit.value() as usize] as usize
    }

    pub fn accept(&self, state: usize, check: Digit) -> bool {
        self.accepting[state * NUM_CLASSES + check.value() as usize]
    }

    /// State reached after reading `prefix` from the start state.
    pub fn run(&self, prefix: &[Digit]) -> usize {
        prefix
            .iter()
            .enumerate()
            .fold(0, |state, (pos, &d)| self.transition(state, pos, d))
    }

    pub fn accepts(&self, s: &DigitString) -> bool {
        let state = self.run(&s.prefix());
        self.accept(state, s.check())
    }

    /// States reachable from the start state after the full prefix.
    pub fn reachable_final_states(&self) -> Vec<usize> {
        let mut frontier = vec![false; self.modulus];
        frontier[0] = true;
        for pos in 0..PREFIX_LEN {
            let mut next = vec![false; self.modulus];
            for state in (0..self.modulus).filter(|&s| frontier[s]) {
                for d in Digit::all() {
                    next[self.transition(state, pos, d)] = true;
                }
            }
            frontier = next;
        }
        (0..self.modulus).filter(|&s| frontier[s]).collect()
    }

    /// Exhaustive structural check: every reachable final state accepts
    /// exactly one check digit.
    pub fn has_unique_checks(&self) -> bool {
        self.reachable_final_states()
            .into_iter()
            .all(|state| Digit::all().filter(|&c| self.accept(state, c)).count() == 1)
    }
}

pub fn residue_automaton(rule: RuleId) -> ResidueAutomaton {
    let m = modulus(rule) as usize;
    let mut transitions = vec![0u8; m * PREFIX_LEN * NUM_CLASSES];
    let mut accepting = vec![false; m * NUM_CLASSES];
    for state in 0..m {
        for pos in 0..PREFIX_LEN {
            for d in 0..NUM_CLASSES as u8 {
                let next = (state as u32 + weighted(rule, pos, d)) % m as u32;
                transitions[(state * PREFIX_LEN + pos) * NUM_CLASSES + d as usize] = next as u8;
            }
        }
        let check = check_for_residue(rule, state as u32);
        accepting[state * NUM_CLASSES + check as usize] = true;
    }
    ResidueAutomaton {
        modulus: m,
        transitions,
        accepting,
    }
}

/// Exact `E_{s ~ p}[reward(rule, s)]` for a factorized distribution, by a
/// forward pass over automaton states: `O(5 * m * 10)`.
pub fn expected_reward_exact(rule: RuleId, p: &ProbTable) -> Result<f64, RuleError> {
    for (row, values) in p.rows.iter().enumerate() {
        let bad = values.iter().any(|v| !v.is_finite() || *v < 0.0);
        let sum_error = (values.iter().sum::<f64>() - 1.0).abs();
        if bad || sum_error > ROW_SUM_TOLERANCE {
            return Err(RuleError::InvalidProbTable {
                row,
                sum_error: (!bad).then_some(sum_error),
            });
        }
    }

    let automaton = residue_automaton(rule);
    let m = automaton.modulus();
    let mut mass = vec![0.0f64; m];
    mass[0] = 1.0;
    for pos in 0..PREFIX_LEN {
        let mut next = vec![0.0f64; m];
        for (state, &w) in mass.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for d in Digit::all() {
                next[automaton.transition(state, pos, d)] += w * p.rows[pos][d.value() as usize];
            }
        }
        mass = next;
    }

    // Written as a reference acceptance probability plus mass-weighted
    // deviations from it, with the prefix mass renormalized: equal check
    // probabilities (e.g. a uniform last row) then come out exactly.
    let accepted: Vec<f64> = (0..m)
        .map(|state| {
            Digit::all()
                .filter(|&c| automaton.accept(state, c))
                .map(|c| p.rows[PREFIX_LEN][c.value() as usize])
                .sum()
        })
        .collect();
    let total: f64 = mass.iter().sum();
    let reference = mass
        .iter()
        .position(|&w| w > 0.0)
        .map_or(0.0, |state| accepted[state]);
    let deviation: f64 = mass
        .iter()
        .zip(&accepted)
        .map(|(&w, &a)| w / total * (a - reference))
        .sum();
    Ok((reference + deviation).clamp(0.0, 1.0))
}
