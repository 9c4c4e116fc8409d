//! Runner for the acceptance criteria.
//!
//! Each criterion runs in isolation, is timed against its budget and
//! reported on one line. A panic inside a check counts as a failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

/// Result of one check: whether it held, and what was measured.
pub struct Verdict {
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

pub struct Criterion {
    pub id: u32,
    pub title: &'static str,
    pub budget: Duration,
    pub check: fn() -> Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Line {
    pub id: u32,
    pub passed: bool,
    pub text: String,
}

pub fn run_one(c: &Criterion) -> Line {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(c.check));
    let elapsed = start.elapsed();
    let (held, detail) = match outcome {
        Ok(v) => (v.passed, v.detail),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            (false, format!("panic: {msg}"))
        }
    };
    let in_time = elapsed <= c.budget;
    let passed = held && in_time;
    let timing = format!(
        "{:.2} s of {} s{}",
        elapsed.as_secs_f64(),
        c.budget.as_secs(),
        if in_time { "" } else { ", over budget" }
    );
    Line {
        id: c.id,
        passed,
        text: format!(
            "criterion {:>2} {} {}: {} [{}]",
            c.id,
            if passed { "PASS" } else { "FAIL" },
            c.title,
            detail,
            timing
        ),
    }
}

/// Runs every criterion in order, printing each line as it completes.
/// Returns the failing ids.
pub fn run_all(criteria: &[Criterion]) -> Vec<u32> {
    let mut failed = Vec::new();
    for c in criteria {
        let line = run_one(c);
        println!("{}", line.text);
        if !line.passed {
            failed.push(line.id);
        }
    }
    failed
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_and_overruns_fail() {
        let ok = Criterion {
            id: 1,
            title: "ok",
            budget: Duration::from_secs(5),
            check: || Verdict::new(true, "fine"),
        };
        let boom = Criterion {
            id: 2,
            title: "boom",
            budget: Duration::from_secs(5),
            check: || panic!("bad input"),
        };
        let slow = Criterion {
            id: 3,
            title: "slow",
            budget: Duration::ZERO,
            check: || {
                std::thread::sleep(Duration::from_millis(5));
                Verdict::new(true, "late")
            },
        };
        assert!(run_one(&ok).passed);
        let b = run_one(&boom);
        assert!(!b.passed && b.text.contains("bad input"), "{}", b.text);
        let s = run_one(&slow);
        assert!(!s.passed && s.text.contains("over budget"), "{}", s.text);
    }
}
