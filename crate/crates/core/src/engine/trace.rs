//! Protocol history, q-values and moving-window FDP estimates.

use serde::{Deserialize, Serialize};

use crate::error::{AdaptError, Result};
use crate::masking::compute_fdp_hat;

/// State at step `t` and what happened between `t` and `t + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub t: usize,
    pub a: usize,
    pub r: usize,
    pub fdp_hat: f64,
    /// Hypotheses revealed by the update that leaves step `t`.
    pub revealed: Vec<usize>,
    /// The model was refitted before that update.
    pub refit: bool,
    /// A refit was attempted and failed; the previous fit was kept.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub refit_failed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTrace {
    pub steps: Vec<Step>,
    /// First step at which each hypothesis is revealed; `None` while masked.
    pub reveal_time: Vec<Option<usize>>,
    /// Whether each hypothesis had `p > 0.5` when it was revealed, i.e. it
    /// sat in `A` rather than `R` while masked. Set only on reveal.
    pub revealed_above_half: Vec<Option<bool>>,
    /// Smallest FDP-hat seen so far.
    pub final_alpha_reached: f64,
}

impl ProtocolTrace {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            steps: Vec::new(),
            reveal_time: vec![None; n],
            revealed_above_half: vec![None; n],
            final_alpha_reached: f64::INFINITY,
        }
    }

    pub(crate) fn push(&mut self, a: usize, r: usize) -> &mut Step {
        let fdp_hat = compute_fdp_hat(a, r);
        self.final_alpha_reached = self.final_alpha_reached.min(fdp_hat);
        let t = self.steps.len();
        self.steps.push(Step {
            t,
            a,
            r,
            fdp_hat,
            revealed: Vec::new(),
            refit: false,
            refit_failed: false,
        });
        self.steps.last_mut().expect("just pushed")
    }

    pub(crate) fn mark_revealed(&mut self, i: usize, t: usize, above_half: bool) {
        if self.reveal_time[i].is_none() {
            self.reveal_time[i] = Some(t);
            self.revealed_above_half[i] = Some(above_half);
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.reveal_time.iter().all(Option::is_some)
    }

    /// FDP-hat at each step.
    pub fn fdp_hat(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.fdp_hat).collect()
    }

    /// First step whose FDP-hat is at most `alpha`.
    pub fn first_below(&self, alpha: f64) -> Option<usize> {
        self.steps.iter().position(|s| s.fdp_hat <= alpha)
    }
}

/// `q_i = min_{t < t*_i} FDP-hat_t`, capped at 1; hypotheses revealed with
/// `p > 0.5` were never rejectable and get 1.
pub fn q_values(trace: &ProtocolTrace) -> Result<Vec<f64>> {
    let missing = trace.reveal_time.iter().filter(|t| t.is_none()).count();
    if missing > 0 {
        return Err(AdaptError::IncompleteTrace(missing));
    }
    let mut running = Vec::with_capacity(trace.steps.len() + 1);
    running.push(f64::INFINITY);
    for s in &trace.steps {
        let last = *running.last().expect("non-empty");
        running.push(last.min(s.fdp_hat));
    }
    Ok(trace
        .reveal_time
        .iter()
        .zip(&trace.revealed_above_half)
        .map(|(t, above)| {
            if above.unwrap_or(false) {
                return 1.0;
            }
            let t = t.expect("checked complete");
            running[t.min(running.len() - 1)].min(1.0)
        })
        .collect())
}

/// `(fdp_{t,w}, fdp^+_{t,w})`: the FDP estimate among hypotheses that leave
/// the masked set between steps `t` and `t + w`, without and with the `+1`
/// correction. `w = None` runs to the end of the trace.
pub fn moving_window_fdp(trace: &ProtocolTrace, t: usize, w: Option<usize>) -> Result<(f64, f64)> {
    let last = trace.steps.len().checked_sub(1).ok_or_else(|| {
        AdaptError::InvalidArgument("empty trace".into())
    })?;
    let end = match w {
        Some(w) => t.checked_add(w).filter(|&e| e <= last).ok_or_else(|| {
            AdaptError::InvalidArgument(format!("window {t}+{w} exceeds trace length {}", last + 1))
        })?,
        None => {
            if t > last {
                return Err(AdaptError::InvalidArgument(format!("step {t} is past the trace")));
            }
            last
        }
    };
    let (s0, s1) = (&trace.steps[t], &trace.steps[end]);
    // Running to the end means the remainder is fully unmasked only if the
    // trace is complete; otherwise A and R at the end still count.
    let (a_end, r_end) = if w.is_none() { (0, 0) } else { (s1.a, s1.r) };
    let da = s0.a - a_end;
    let dr = s0.r - r_end;
    Ok((da as f64 / dr.max(1) as f64, (1 + da) as f64 / dr.max(1) as f64))
}
