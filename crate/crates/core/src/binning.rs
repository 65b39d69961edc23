//! Online difficulty classifier: sliding-window pass@k per prompt, bins over the
//! estimate, and a hysteresis margin against bin flapping.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{argument, GdroError, Result};
use crate::grpo::Uid;

/// Bin edges `0 = a_0 < a_1 < ... < a_B = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinPartition {
    edges: Vec<f64>,
}

impl BinPartition {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(argument("a partition needs at least two edges"));
        }
        if edges[0] != 0.0 || *edges.last().unwrap() != 1.0 {
            return Err(argument("partition edges must start at 0 and end at 1"));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(argument("partition edges must be strictly increasing"));
        }
        Ok(Self { edges })
    }

    /// Builds a partition from interior edges only.
    pub fn from_interior(interior: &[f64]) -> Result<Self> {
        let mut edges = Vec::with_capacity(interior.len() + 2);
        edges.push(0.0);
        edges.extend_from_slice(interior);
        edges.push(1.0);
        Self::new(edges)
    }

    /// `count` equal-width bins.
    pub fn uniform(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(argument("bin count must be positive"));
        }
        let interior: Vec<f64> = (1..count).map(|i| i as f64 / count as f64).collect();
        Self::from_interior(&interior)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn bin_count(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn min_width(&self) -> f64 {
        self.edges
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Bin whose half-open interval `[a_b, a_{b+1})` contains `estimate`; the top bin
    /// is closed at 1.
    pub fn bin_of(&self, estimate: f64) -> usize {
        let top = self.bin_count() - 1;
        // Count interior edges at or below the estimate.
        let b = self.edges[1..self.edges.len() - 1]
            .iter()
            .take_while(|&&edge| edge <= estimate)
            .count();
        b.min(top)
    }

    /// Keeps `current` while `estimate` stays inside its interval widened by `margin` on
    /// both sides, otherwise moves to the bin containing `estimate`.
    pub fn reassign(&self, current: Option<usize>, estimate: f64, margin: f64) -> usize {
        let candidate = self.bin_of(estimate);
        match current {
            Some(b) if b < self.bin_count() => {
                let lo = self.edges[b] - margin;
                let hi = self.edges[b + 1] + margin;
                let top = b + 1 == self.bin_count();
                let inside = estimate >= lo && (estimate < hi || (top && estimate <= hi));
                if inside {
                    b
                } else {
                    candidate
                }
            }
            _ => candidate,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct PromptHistory {
    outcomes: VecDeque<bool>,
    bin: Option<usize>,
}

/// Per-prompt sliding-window pass@k tracker with hysteresis state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyTracker {
    window: usize,
    margin: f64,
    k: usize,
    entries: BTreeMap<Uid, PromptHistory>,
}

/// One row of a tracker state dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerRow {
    pub uid: Uid,
    pub bin: Option<usize>,
    pub estimate: f64,
    pub history_len: usize,
}

impl DifficultyTracker {
    pub fn new(window: usize, margin: f64, k: usize, partition: &BinPartition) -> Result<Self> {
        if window == 0 {
            return Err(argument("window length must be positive"));
        }
        if k == 0 {
            return Err(argument("k must be positive"));
        }
        if !(margin >= 0.0 && margin < partition.min_width()) {
            return Err(argument(format!(
                "hysteresis margin {margin} must lie in [0, {})",
                partition.min_width()
            )));
        }
        Ok(Self {
            window,
            margin,
            k,
            entries: BTreeMap::new(),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Appends the any-of indicator for one step's rollouts, evicting beyond the window.
    pub fn record_outcome(&mut self, uid: Uid, correct_flags: &[bool]) -> Result<()> {
        if correct_flags.is_empty() {
            return Err(argument("at least one rollout outcome is required"));
        }
        let hit = correct_flags.iter().any(|&c| c);
        let entry = self.entries.entry(uid).or_default();
        entry.outcomes.push_back(hit);
        while entry.outcomes.len() > self.window {
            entry.outcomes.pop_front();
        }
        Ok(())
    }

    /// Mean of the stored indicators (over the available history for new prompts).
    pub fn pass_at_k(&self, uid: Uid) -> Result<f64> {
        let entry = self
            .entries
            .get(&uid)
            .filter(|e| !e.outcomes.is_empty())
            .ok_or_else(|| GdroError::Lookup(format!("no outcomes recorded for prompt {uid}")))?;
        let hits = entry.outcomes.iter().filter(|&&c| c).count();
        Ok(hits as f64 / entry.outcomes.len() as f64)
    }

    pub fn history_len(&self, uid: Uid) -> usize {
        self.entries.get(&uid).map_or(0, |e| e.outcomes.len())
    }

    pub fn current_bin(&self, uid: Uid) -> Option<usize> {
        self.entries.get(&uid).and_then(|e| e.bin)
    }

    /// Updates and returns the bin of `uid` under the hysteresis rule.
    pub fn assign_bin(&mut self, partition: &BinPartition, uid: Uid) -> Result<usize> {
        let estimate = self.pass_at_k(uid)?;
        let margin = self.margin;
        let entry = self.entries.get_mut(&uid).expect("checked by pass_at_k");
        let bin = partition.reassign(entry.bin, estimate, margin);
        entry.bin = Some(bin);
        Ok(bin)
    }

    /// Realized share of each bin among `uids`, all of which must have a bin.
    pub fn batch_bin_shares(&self, partition: &BinPartition, uids: &[Uid]) -> Result<Vec<f64>> {
        let bins = uids
            .iter()
            .map(|&u| {
                self.current_bin(u)
                    .ok_or_else(|| GdroError::Lookup(format!("prompt {u} has no bin")))
            })
            .collect::<Result<Vec<_>>>()?;
        shares_from_bins(&bins, partition.bin_count())
    }

    pub fn rows(&self) -> Vec<TrackerRow> {
        self.entries
            .iter()
            .map(|(&uid, e)| {
                let hits = e.outcomes.iter().filter(|&&c| c).count();
                let estimate = if e.outcomes.is_empty() {
                    0.0
                } else {
                    hits as f64 / e.outcomes.len() as f64
                };
                TrackerRow {
                    uid,
                    bin: e.bin,
                    estimate,
                    history_len: e.outcomes.len(),
                }
            })
            .collect()
    }

    /// State dump as CSV with header `uid,bin,estimate,history_len`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("uid,bin,estimate,history_len\n");
        for row in self.rows() {
            let bin = row.bin.map(|b| b.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", row.uid, bin, row.estimate, row.history_len));
        }
        out
    }
}

/// Counts per bin divided by the batch size.
pub fn shares_from_bins(bins: &[usize], bin_count: usize) -> Result<Vec<f64>> {
    if bins.is_empty() {
        return Err(argument("cannot compute shares of an empty batch"));
    }
    let counts = counts_from_bins(bins, bin_count)?;
    let total = bins.len() as f64;
    Ok(counts.iter().map(|&c| c as f64 / total).collect())
}

pub fn counts_from_bins(bins: &[usize], bin_count: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; bin_count];
    for &b in bins {
        if b >= bin_count {
            return Err(argument(format!("bin {b} out of range")));
        }
        counts[b] += 1;
    }
    Ok(counts)
}
