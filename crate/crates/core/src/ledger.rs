//! Structural privacy accounting.
//!
//! Every private estimator call is recorded with the half-open range of time
//! steps whose data it consumed. Ranges must be pairwise disjoint, so each
//! datum is charged by at most one mechanism and the whole run costs the
//! largest single charge (parallel composition). Within an entry the budget
//! is split evenly over the estimator's iterations (sequential composition).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::peeling::PrivacyBudget;

const SPLIT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub mechanism: String,
    /// First time step covered (inclusive).
    pub start: u64,
    /// One past the last time step covered.
    pub end: u64,
    pub epsilon: f64,
    pub delta: f64,
    /// Number of sequential sub-mechanisms sharing the charge evenly.
    pub iterations: usize,
}

impl LedgerEntry {
    pub fn new(mechanism: impl Into<String>, start: u64, end: u64, budget: PrivacyBudget, iterations: usize) -> Self {
        Self {
            mechanism: mechanism.into(),
            start,
            end,
            epsilon: budget.epsilon(),
            delta: budget.delta(),
            iterations,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.start >= self.end {
            return Err(invalid(format!("empty data range [{}, {})", self.start, self.end)));
        }
        PrivacyBudget::new(self.epsilon, self.delta)?;
        if self.iterations == 0 {
            return Err(invalid("ledger entry with zero iterations"));
        }
        let (eps_sum, delta_sum) = self.split_sums();
        if !close(eps_sum, self.epsilon) || !close(delta_sum, self.delta) {
            return Err(Error::CompositionViolation(format!(
                "iteration splits sum to ({eps_sum}, {delta_sum}), charge is ({}, {})",
                self.epsilon, self.delta
            )));
        }
        Ok(())
    }

    /// Sum of the per-iteration shares, accumulated with compensation.
    pub fn split_sums(&self) -> (f64, f64) {
        let m = self.iterations as f64;
        let eps_share = self.epsilon / m;
        let delta_share = self.delta / m;
        (
            kahan_sum(std::iter::repeat_n(eps_share, self.iterations)),
            kahan_sum(std::iter::repeat_n(delta_share, self.iterations)),
        )
    }

    pub fn covers(&self, t: u64) -> bool {
        (self.start..self.end).contains(&t)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= SPLIT_TOLERANCE * b.abs().max(f64::MIN_POSITIVE)
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Charges accumulated against a single datum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Charge {
    pub epsilon: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    entries: Vec<LedgerEntry>,
}

impl PrivacyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, entry: LedgerEntry) -> Result<()> {
        entry.validate()?;
        if let Some(other) = self.entries.iter().find(|e| e.start < entry.end && entry.start < e.end) {
            return Err(Error::CompositionViolation(format!(
                "data range [{}, {}) of {} overlaps [{}, {}) of {}",
                entry.start, entry.end, entry.mechanism, other.start, other.end, other.mechanism
            )));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// Total (ε, δ) charged against the datum observed at step `t`.
    pub fn per_user_budget(&self, t: u64) -> Charge {
        self.entries
            .iter()
            .filter(|e| e.covers(t))
            .fold(Charge { epsilon: 0.0, delta: 0.0 }, |acc, e| Charge {
                epsilon: acc.epsilon + e.epsilon,
                delta: acc.delta + e.delta,
            })
    }

    /// Largest per-datum charge over the whole run.
    pub fn max_per_user_budget(&self) -> Charge {
        // Entries are disjoint, so the per-datum maximum is the largest entry.
        self.entries.iter().fold(Charge { epsilon: 0.0, delta: 0.0 }, |acc, e| Charge {
            epsilon: acc.epsilon.max(e.epsilon),
            delta: acc.delta.max(e.delta),
        })
    }

    /// True when no two entries share a time step.
    pub fn is_disjoint(&self) -> bool {
        let mut ranges: Vec<(u64, u64)> = self.entries.iter().map(|e| (e.start, e.end)).collect();
        ranges.sort_unstable();
        ranges.windows(2).all(|w| w[0].1 <= w[1].0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget(eps: f64, delta: f64) -> PrivacyBudget {
        PrivacyBudget::new(eps, delta).unwrap()
    }

    #[test]
    fn disjoint_entries_accepted() {
        let mut l = PrivacyLedger::new();
        l.record(LedgerEntry::new("niht", 2, 4, budget(1.0, 0.01), 10)).unwrap();
        l.record(LedgerEntry::new("niht", 4, 8, budget(1.0, 0.01), 10)).unwrap();
        assert!(l.is_disjoint());
        assert_eq!(l.entries().len(), 2);
    }

    #[test]
    fn overlap_rejected() {
        let mut l = PrivacyLedger::new();
        l.record(LedgerEntry::new("niht", 2, 4, budget(1.0, 0.01), 10)).unwrap();
        let err = l.record(LedgerEntry::new("niht", 3, 5, budget(1.0, 0.01), 10)).unwrap_err();
        assert!(matches!(err, Error::CompositionViolation(_)));
        assert_eq!(l.entries().len(), 1);
    }

    #[test]
    fn exact_split_accepted() {
        let mut l = PrivacyLedger::new();
        let e = LedgerEntry::new("niht", 1, 2, budget(1.0, 0.0), 4);
        assert_eq!(e.split_sums(), (1.0, 0.0));
        l.record(e).unwrap();
    }

    #[test]
    fn odd_splits_sum_back_to_charge() {
        for m in [3, 7, 49, 50, 97] {
            let e = LedgerEntry::new("niht", 1, 2, budget(0.8, 0.01), m);
            let (eps, delta) = e.split_sums();
            assert!(close(eps, 0.8) && close(delta, 0.01), "m={m}");
        }
        let bad = LedgerEntry { epsilon: f64::NAN, ..LedgerEntry::new("niht", 1, 2, budget(1.0, 0.01), 3) };
        assert!(PrivacyLedger::new().record(bad).is_err());
    }

    #[test]
    fn per_user_queries() {
        let mut l = PrivacyLedger::new();
        l.record(LedgerEntry::new("niht", 1, 2, budget(1.0, 0.01), 5)).unwrap();
        l.record(LedgerEntry::new("niht", 2, 4, budget(1.0, 0.01), 5)).unwrap();
        assert_eq!(l.per_user_budget(1), Charge { epsilon: 1.0, delta: 0.01 });
        assert_eq!(l.per_user_budget(3), Charge { epsilon: 1.0, delta: 0.01 });
        assert_eq!(l.per_user_budget(4), Charge { epsilon: 0.0, delta: 0.0 });
        assert_eq!(l.max_per_user_budget(), Charge { epsilon: 1.0, delta: 0.01 });
    }

    #[test]
    fn empty_range_rejected() {
        assert!(PrivacyLedger::new().record(LedgerEntry::new("niht", 3, 3, budget(1.0, 0.1), 1)).is_err());
    }
}
