//! Named runtime checks with per-name tallies.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CheckTally {
    pub name: String,
    pub checks: usize,
    pub failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<String>,
}

/// Collects check outcomes. In strict mode the first failure is returned as
/// [`Error::InvariantFailure`].
#[derive(Debug, Clone, Default)]
pub struct InvariantLog {
    strict: bool,
    tallies: BTreeMap<String, CheckTally>,
}

impl InvariantLog {
    pub fn strict() -> Self {
        InvariantLog { strict: true, tallies: BTreeMap::new() }
    }

    pub fn lenient() -> Self {
        InvariantLog { strict: false, tallies: BTreeMap::new() }
    }

    pub fn record(&mut self, name: &str, step: &str, ok: bool, detail: impl FnOnce() -> String) -> Result<()> {
        let tally = self.tallies.entry(name.to_string()).or_insert_with(|| CheckTally { name: name.to_string(), ..Default::default() });
        tally.checks += 1;
        if ok {
            return Ok(());
        }
        tally.failures += 1;
        let detail = detail();
        if tally.first_failure.is_none() {
            tally.first_failure = Some(format!("{step}: {detail}"));
        }
        if self.strict {
            return Err(Error::InvariantFailure { name: name.to_string(), step: step.to_string(), detail });
        }
        Ok(())
    }

    /// Records the outcome of a check returning `Err(detail)` on failure.
    pub fn record_result(&mut self, name: &str, step: &str, outcome: std::result::Result<(), String>) -> Result<()> {
        match outcome {
            Ok(()) => self.record(name, step, true, String::new),
            Err(detail) => self.record(name, step, false, || detail),
        }
    }

    pub fn merge(&mut self, other: &InvariantLog) {
        for (name, t) in &other.tallies {
            let mine = self.tallies.entry(name.clone()).or_insert_with(|| CheckTally { name: name.clone(), ..Default::default() });
            mine.checks += t.checks;
            mine.failures += t.failures;
            if mine.first_failure.is_none() {
                mine.first_failure = t.first_failure.clone();
            }
        }
    }

    pub fn tallies(&self) -> Vec<CheckTally> {
        self.tallies.values().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Option<&CheckTally> {
        self.tallies.get(name)
    }

    pub fn all_passed(&self) -> bool {
        self.tallies.values().all(|t| t.failures == 0)
    }
}
