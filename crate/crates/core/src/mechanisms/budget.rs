use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};

/// Privacy and accuracy parameters of one (sub-)mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    /// `0` for pure differential privacy.
    pub delta: f64,
    /// Failure probability of the accuracy guarantee.
    pub beta: f64,
    /// Per-document contribution cap Δ.
    pub cap: usize,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64, beta: f64, cap: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid_param(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(invalid_param(format!("delta must be in [0, 1), got {delta}")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(invalid_param(format!("beta must be in (0, 1), got {beta}")));
        }
        if cap < 1 {
            return Err(invalid_param("cap must be at least 1"));
        }
        Ok(Self {
            epsilon,
            delta,
            beta,
            cap,
        })
    }

    pub fn pure(epsilon: f64, beta: f64, cap: usize) -> Result<Self> {
        Self::new(epsilon, 0.0, beta, cap)
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }

    /// The share `f` of this budget: ε, δ and β all scale by `f`.
    pub fn share(&self, f: f64) -> Self {
        Self {
            epsilon: self.epsilon * f,
            delta: self.delta * f,
            beta: self.beta * f,
            cap: self.cap,
        }
    }

    /// Checks `1 <= cap <= ell`.
    pub fn check_cap(&self, ell: usize) -> Result<()> {
        if self.cap > ell {
            return Err(invalid_param(format!(
                "cap {} exceeds the document length bound {ell}",
                self.cap
            )));
        }
        Ok(())
    }
}

/// Splits `parent` into children proportional to `shares` (simple
/// composition). Shares must be positive and sum to at most one.
pub fn budget_split(parent: &PrivacyBudget, shares: &[f64]) -> Result<Vec<PrivacyBudget>> {
    if shares.iter().any(|&s| s.is_nan() || s <= 0.0) {
        return Err(invalid_param("budget shares must be positive"));
    }
    let total: f64 = shares.iter().sum();
    if total > 1.0 + SLACK {
        return Err(invalid_param(format!("budget shares sum to {total} > 1")));
    }
    Ok(shares.iter().map(|&s| parent.share(s)).collect())
}

const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    pub epsilon: f64,
    pub delta: f64,
}

/// Tracks spending against a parent budget; rejects any spend that would
/// exceed it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetLedger {
    total: PrivacyBudget,
    entries: Vec<LedgerEntry>,
}

impl BudgetLedger {
    pub fn new(total: PrivacyBudget) -> Self {
        Self {
            total,
            entries: Vec::new(),
        }
    }

    pub fn total(&self) -> &PrivacyBudget {
        &self.total
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn spent(&self) -> (f64, f64) {
        self.entries
            .iter()
            .fold((0.0, 0.0), |(e, d), x| (e + x.epsilon, d + x.delta))
    }

    pub fn remaining(&self) -> (f64, f64) {
        let (e, d) = self.spent();
        ((self.total.epsilon - e).max(0.0), (self.total.delta - d).max(0.0))
    }

    pub fn spend(&mut self, label: impl Into<String>, epsilon: f64, delta: f64) -> Result<()> {
        let (spent_e, spent_d) = self.spent();
        let over_e = spent_e + epsilon > self.total.epsilon * (1.0 + SLACK);
        let over_d = spent_d + delta > self.total.delta * (1.0 + SLACK) + f64::MIN_POSITIVE;
        if over_e || (delta > 0.0 && over_d) {
            let (re, rd) = self.remaining();
            return Err(Error::BudgetExceeded {
                requested_epsilon: epsilon,
                requested_delta: delta,
                remaining_epsilon: re,
                remaining_delta: rd,
            });
        }
        self.entries.push(LedgerEntry {
            label: label.into(),
            epsilon,
            delta,
        });
        Ok(())
    }

    /// Allocates children by share and records each allocation as spent.
    pub fn split(&mut self, label: &str, shares: &[f64]) -> Result<Vec<PrivacyBudget>> {
        let children = budget_split(&self.total, shares)?;
        for (i, c) in children.iter().enumerate() {
            self.spend(format!("{label}[{i}]"), c.epsilon, c.delta)?;
        }
        Ok(children)
    }
}
