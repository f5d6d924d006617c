//! Named pass/fail outcomes shared by the verification suites and the CLI.

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    /// Runs `f` and records its detail string or its error.
    pub fn run(name: impl Into<String>, f: impl FnOnce() -> Result<String>) -> Outcome {
        match f() {
            Ok(detail) => Outcome { name: name.into(), passed: true, detail },
            Err(e) => Outcome { name: name.into(), passed: false, detail: e.to_string() },
        }
    }

    pub fn line(&self) -> String {
        format!("[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub fn all_passed(outcomes: &[Outcome]) -> bool {
    outcomes.iter().all(|o| o.passed)
}
