//! Pass/fail bookkeeping for the acceptance run.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u32,
    pub title: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {} {} ({:.3} s): {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

/// Collects outcomes and prints each one as it completes.
#[derive(Debug, Default)]
pub struct Report {
    outcomes: Vec<Outcome>,
}

impl Report {
    /// Runs `check`, which returns (passed, detail), and records the result.
    /// A panic inside `check` counts as a failure.
    pub fn run<F>(&mut self, id: u32, title: &str, check: F)
    where
        F: FnOnce() -> (bool, String) + std::panic::UnwindSafe,
    {
        let start = Instant::now();
        let (passed, detail) = match std::panic::catch_unwind(check) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let outcome = Outcome {
            id,
            title: title.to_string(),
            passed,
            detail,
            elapsed: start.elapsed(),
        };
        println!("{}", outcome.line());
        self.outcomes.push(outcome);
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn summary(&self) -> String {
        let passed = self.outcomes.iter().filter(|o| o.passed).count();
        let mut s = format!("{passed}/{} criteria passed", self.outcomes.len());
        let failed: Vec<String> = self
            .outcomes
            .iter()
            .filter(|o| !o.passed)
            .map(|o| o.id.to_string())
            .collect();
        if !failed.is_empty() {
            let _ = write!(s, "; failing: {}", failed.join(", "));
        }
        s
    }
}

/// Appends `check` to a detail string, tracking the overall verdict.
#[derive(Debug, Default)]
pub struct Checks {
    ok: bool,
    notes: Vec<String>,
}

impl Checks {
    pub fn new() -> Self {
        Checks {
            ok: true,
            notes: Vec::new(),
        }
    }

    pub fn check(&mut self, cond: bool, note: impl Into<String>) {
        let note = note.into();
        self.notes
            .push(if cond { note } else { format!("NOT[{note}]") });
        self.ok &= cond;
    }

    pub fn finish(self) -> (bool, String) {
        (self.ok, self.notes.join("; "))
    }
}
