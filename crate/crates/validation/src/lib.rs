//! Scorecard for the acceptance target: every check prints one verdict line
//! as soon as it finishes, and a panicking check counts as a failure instead
//! of aborting the remaining ones.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

/// Outcome of one check.
#[derive(Clone, Debug)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }

    /// All `parts` must pass; details are joined.
    pub fn all(parts: &[Verdict]) -> Self {
        Self {
            pass: parts.iter().all(|p| p.pass),
            detail: parts
                .iter()
                .map(|p| if p.pass { p.detail.clone() } else { format!("FAILED {}", p.detail) })
                .collect::<Vec<_>>()
                .join("; "),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Line {
    pub name: String,
    pub verdict: Verdict,
    pub elapsed: Duration,
}

#[derive(Debug, Default)]
pub struct Scorecard {
    lines: Vec<Line>,
}

impl Scorecard {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs `check`, prints its line and keeps the result.
    pub fn run(&mut self, name: &str, check: impl FnOnce() -> Verdict) -> bool {
        let start = Instant::now();
        let verdict = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(v) => v,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Verdict::new(false, format!("panicked: {msg}"))
            }
        };
        let line = Line {
            name: name.to_string(),
            verdict,
            elapsed: start.elapsed(),
        };
        println!("{}", format_line(&line));
        let pass = line.verdict.pass;
        self.lines.push(line);
        pass
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn failures(&self) -> Vec<&Line> {
        self.lines.iter().filter(|l| !l.verdict.pass).collect()
    }
}

pub fn format_line(l: &Line) -> String {
    format!(
        "{} {} ({:.1}s): {}",
        if l.verdict.pass { "PASS" } else { "FAIL" },
        l.name,
        l.elapsed.as_secs_f64(),
        l.verdict.detail
    )
}

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
