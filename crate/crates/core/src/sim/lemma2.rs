//! Exhaustive check of the optional-stopping bound for shrinking Bernoulli
//! sets: for independent `b_i ~ Bernoulli(rho)`, nested sets `C_0 ⊇ C_1 ⊇ ...`
//! chosen from `C_t`, `(b_i)_{i ∉ C_t}` and `sum_{i ∈ C_t} b_i`, and a
//! stopping time `T` with respect to the same information,
//! `E[(1 + |C_T|) / (1 + sum_{i ∈ C_T} b_i)] <= 1 / rho`.
//!
//! Rules receive the full outcome so that a rule which peeks at an
//! individual hidden `b_i` can be written down; measurability is then
//! verified by enumeration: every pair of outcomes that agree on the visible
//! information must get the same decision.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{AdaptError, Result};

/// Largest `n` accepted by [`lemma2_check`].
pub const MAX_N: usize = 12;

/// Shrink rules: map `(C_t, b)` to `C_{t+1} ⊆ C_t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShrinkRule {
    /// Drop the largest index while `sum_{C_t} b > 0`.
    DropMaxWhilePositive,
    /// Drop the element at position `#{revealed ones} mod |C_t|`.
    DropByRevealedCount,
    /// Drop the upper half of `C_t` while it contains a zero.
    HalveWhileZeros,
    /// Drop the largest index if its own `b` is zero. Not measurable.
    PeekHidden,
}

impl ShrinkRule {
    pub const MEASURABLE: [ShrinkRule; 3] = [
        ShrinkRule::DropMaxWhilePositive,
        ShrinkRule::DropByRevealedCount,
        ShrinkRule::HalveWhileZeros,
    ];

    fn apply(self, c: &[usize], b: &[bool]) -> Vec<usize> {
        let sum = c.iter().filter(|&&i| b[i]).count();
        let mut next = c.to_vec();
        match self {
            ShrinkRule::DropMaxWhilePositive => {
                if sum > 0 {
                    next.pop();
                }
            }
            ShrinkRule::DropByRevealedCount => {
                if !c.is_empty() {
                    let ones = (0..b.len()).filter(|i| !c.contains(i) && b[*i]).count();
                    next.remove(ones % c.len());
                }
            }
            ShrinkRule::HalveWhileZeros => {
                if sum < c.len() {
                    next.truncate(c.len() / 2);
                }
            }
            ShrinkRule::PeekHidden => {
                if c.last().is_some_and(|&i| !b[i]) {
                    next.pop();
                }
            }
        }
        next
    }
}

/// Stopping rules, evaluated on `(C_t, b)` before each shrink.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// Stop once `sum_{C_t} b <= k`.
    SumAtMost(usize),
    /// Stop once `(1 + |C_t| - sum) / max(sum, 1) <= level`.
    EstimateBelow(f64),
    /// Stop after `k` shrink steps.
    AfterSteps(usize),
    /// Run until the rule stops shrinking.
    Exhaust,
}

impl StopRule {
    fn stop(self, c: &[usize], b: &[bool], step: usize) -> bool {
        let sum = c.iter().filter(|&&i| b[i]).count();
        match self {
            StopRule::SumAtMost(k) => sum <= k,
            StopRule::EstimateBelow(level) => (1 + c.len() - sum) as f64 / sum.max(1) as f64 <= level,
            StopRule::AfterSteps(k) => step >= k,
            StopRule::Exhaust => false,
        }
    }
}

impl fmt::Display for ShrinkRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShrinkRule::DropMaxWhilePositive => "drop-max-while-positive",
            ShrinkRule::DropByRevealedCount => "drop-by-revealed-count",
            ShrinkRule::HalveWhileZeros => "halve-while-zeros",
            ShrinkRule::PeekHidden => "peek-hidden",
        })
    }
}

impl FromStr for ShrinkRule {
    type Err = AdaptError;

    fn from_str(s: &str) -> Result<Self> {
        [
            ShrinkRule::DropMaxWhilePositive,
            ShrinkRule::DropByRevealedCount,
            ShrinkRule::HalveWhileZeros,
            ShrinkRule::PeekHidden,
        ]
        .into_iter()
        .find(|r| r.to_string() == s)
        .ok_or_else(|| AdaptError::InvalidArgument(format!("unknown shrink rule `{s}`")))
    }
}

impl fmt::Display for StopRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopRule::SumAtMost(k) => write!(f, "sum-at-most:{k}"),
            StopRule::EstimateBelow(x) => write!(f, "estimate-below:{x}"),
            StopRule::AfterSteps(k) => write!(f, "after-steps:{k}"),
            StopRule::Exhaust => f.write_str("exhaust"),
        }
    }
}

impl FromStr for StopRule {
    type Err = AdaptError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || AdaptError::InvalidArgument(format!("unknown stopping rule `{s}`"));
        if s == "exhaust" {
            return Ok(StopRule::Exhaust);
        }
        let (name, arg) = s.split_once(':').ok_or_else(bad)?;
        match name {
            "sum-at-most" => arg.parse().map(StopRule::SumAtMost).map_err(|_| bad()),
            "estimate-below" => arg.parse().map(StopRule::EstimateBelow).map_err(|_| bad()),
            "after-steps" => arg.parse().map(StopRule::AfterSteps).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Report {
    pub n: usize,
    /// `rho = rho_num / rho_den` in lowest terms.
    pub rho_num: u64,
    pub rho_den: u64,
    /// Exact expectation as a reduced fraction.
    pub lhs_num: i128,
    pub lhs_den: i128,
    pub lhs: f64,
    pub bound: f64,
    /// `lhs <= 1 / rho`, decided in exact arithmetic.
    pub holds: bool,
}

// Visible information at one step: C_t, b outside C_t, sum inside.
type VisibleKey = (Vec<usize>, Vec<bool>, usize);

fn visible(c: &[usize], b: &[bool]) -> VisibleKey {
    let outside = (0..b.len()).filter(|i| !c.contains(i)).map(|i| b[i]).collect();
    let sum = c.iter().filter(|&&i| b[i]).count();
    (c.to_vec(), outside, sum)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

fn lcm_upto(k: u128) -> u128 {
    (1..=k).fold(1, |acc, j| acc / gcd(acc as u64, j as u64) as u128 * j)
}

fn overflow() -> AdaptError {
    AdaptError::InvalidArgument("rho denominator too large for exact enumeration".into())
}

/// Exact `E[(1 + |C_T|) / (1 + sum_{C_T} b)]` with `C_0 = {0, ..., n-1}` and
/// `b_i ~ Bernoulli(rho_num / rho_den)`, over all `2^n` outcomes.
///
/// Fails with [`AdaptError::NonMeasurable`] if the shrink or stop decision
/// differs between two outcomes with the same visible information.
pub fn lemma2_check_exact(
    n: usize,
    rho_num: u64,
    rho_den: u64,
    rule: ShrinkRule,
    stop: StopRule,
) -> Result<Lemma2Report> {
    if n > MAX_N {
        return Err(AdaptError::InvalidArgument(format!("n = {n} exceeds {MAX_N}")));
    }
    if rho_den == 0 || rho_num == 0 || rho_num > rho_den {
        return Err(AdaptError::InvalidArgument("rho must lie in (0, 1]".into()));
    }
    let g = gcd(rho_num, rho_den);
    let (a, q) = ((rho_num / g) as u128, (rho_den / g) as u128);

    let mut shrink_seen: HashMap<VisibleKey, Vec<usize>> = HashMap::new();
    let mut stop_seen: HashMap<(VisibleKey, usize), bool> = HashMap::new();
    let check = |ok: bool| {
        if ok {
            Ok(())
        } else {
            Err(AdaptError::NonMeasurable(rule.to_string()))
        }
    };

    // E * q^n * L = sum_b a^k (q - a)^(n - k) (1 + |C|) L / (1 + S).
    let l = lcm_upto(n as u128 + 1);
    let mut total: u128 = 0;
    for mask in 0u32..(1u32 << n) {
        let b: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let mut c: Vec<usize> = (0..n).collect();
        let mut step = 0;
        loop {
            let key = visible(&c, &b);
            let halt = stop.stop(&c, &b, step);
            let prev = *stop_seen.entry((key.clone(), step)).or_insert(halt);
            if prev != halt {
                return Err(AdaptError::NonMeasurable(stop.to_string()));
            }
            if halt || c.is_empty() {
                break;
            }
            let next = rule.apply(&c, &b);
            check(*shrink_seen.entry(key).or_insert_with(|| next.clone()) == next)?;
            if !next.iter().all(|i| c.contains(i)) {
                return Err(AdaptError::InvalidArgument(format!("rule `{rule}` grew the set")));
            }
            if next.len() == c.len() {
                break;
            }
            c = next;
            step += 1;
        }
        let k = b.iter().filter(|&&x| x).count() as u32;
        let s = c.iter().filter(|&&i| b[i]).count() as u128;
        let weight = a
            .checked_pow(k)
            .and_then(|w| w.checked_mul((q - a).checked_pow(n as u32 - k)?))
            .ok_or_else(overflow)?;
        let term = weight
            .checked_mul((1 + c.len() as u128) * (l / (1 + s)))
            .ok_or_else(overflow)?;
        total = total.checked_add(term).ok_or_else(overflow)?;
    }

    let den = q.checked_pow(n as u32).and_then(|d| d.checked_mul(l)).ok_or_else(overflow)?;
    // lhs <= q / a  <=>  total * a <= den * q.
    let holds = total.checked_mul(a).ok_or_else(overflow)? <= den.checked_mul(q).ok_or_else(overflow)?;
    let lhs = Ratio::new(
        i128::try_from(total).map_err(|_| overflow())?,
        i128::try_from(den).map_err(|_| overflow())?,
    );
    Ok(Lemma2Report {
        n,
        rho_num: a as u64,
        rho_den: q as u64,
        lhs_num: *lhs.numer(),
        lhs_den: *lhs.denom(),
        lhs: *lhs.numer() as f64 / *lhs.denom() as f64,
        bound: q as f64 / a as f64,
        holds,
    })
}

/// [`lemma2_check_exact`] with `rho` given as a decimal, converted to the
/// nearest fraction with denominator at most 1000.
pub fn lemma2_check(n: usize, rho: f64, rule: ShrinkRule, stop: StopRule) -> Result<Lemma2Report> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(AdaptError::InvalidArgument(format!("rho = {rho} must lie in (0, 1]")));
    }
    let den = 1000u64;
    let num = (rho * den as f64).round().max(1.0) as u64;
    lemma2_check_exact(n, num, den, rule, stop)
}
