//! Shared pieces of the acceptance suite in `tests/acceptance.rs`.
//!
//! The suite lives in its own package so that `cargo test --workspace` runs
//! it after the unit and integration tests of the other crates.

use std::io::Write;
use std::time::Duration;

/// Published analysis rows: `(N, θ, q*, r*, T_c, C_norm, D_crit)`; `T_s` is
/// `1/θ` throughout.
pub const PUBLISHED_ROWS: [(usize, f64, f64, f64, f64, f64, f64); 9] = [
    (3, 0.1, 0.3397, 0.4896, 2.1959, 0.8199, 1.1786),
    (3, 0.2, 0.3397, 0.4896, 2.1959, 0.6948, 1.0899),
    (3, 0.5, 0.3397, 0.4896, 2.1959, 0.4767, 0.9352),
    (10, 0.1, 0.1051, 0.4786, 2.4374, 0.8040, 1.5297),
    (10, 0.2, 0.1051, 0.4786, 2.4374, 0.6723, 1.3978),
    (10, 0.5, 0.1051, 0.4786, 2.4374, 0.4507, 1.1759),
    (50, 0.1, 0.0213, 0.4754, 2.5138, 0.7991, 1.6468),
    (50, 0.2, 0.0213, 0.4754, 2.5138, 0.6654, 1.4995),
    (50, 0.5, 0.0213, 0.4754, 2.5138, 0.4431, 1.2546),
];

/// One acceptance criterion: collects failed sub-checks, then prints a single
/// `PASS`/`FAIL` line (plus the failures) straight to stderr, bypassing the
/// test harness's output capture.
pub struct Criterion {
    id: u32,
    title: &'static str,
    failures: Vec<String>,
}

impl Criterion {
    pub fn new(id: u32, title: &'static str) -> Self {
        Self {
            id,
            title,
            failures: Vec::new(),
        }
    }

    pub fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    pub fn within(&mut self, label: &str, got: f64, want: f64, tol: f64) {
        self.check((got - want).abs() <= tol, || {
            format!("{label}: got {got:.6}, want {want} ± {tol}")
        });
    }

    /// `z` score of `mean ± se` against `want` is at most 3.
    pub fn within_3se(&mut self, label: &str, mean: f64, se: f64, want: f64) {
        let z = (mean - want).abs() / se;
        self.check(z <= 3.0, || {
            format!("{label}: {mean:.4} ± {se:.4} vs {want:.4} (z = {z:.2})")
        });
    }

    pub fn time_limit(&mut self, label: &str, elapsed: Duration, limit: Duration) {
        self.check(elapsed < limit, || {
            format!("{label}: took {elapsed:?}, limit {limit:?}")
        });
    }

    pub fn line(&self) -> String {
        let verdict = if self.failures.is_empty() {
            "PASS"
        } else {
            "FAIL"
        };
        let mut text = format!("AC{:<2} {verdict}  {}\n", self.id, self.title);
        for f in &self.failures {
            text.push_str(&format!("       - {f}\n"));
        }
        text
    }

    /// Prints the verdict and panics if any sub-check failed.
    pub fn finish(self) {
        let _ = std::io::stderr().lock().write_all(self.line().as_bytes());
        assert!(
            self.failures.is_empty(),
            "AC{} failed:\n{}",
            self.id,
            self.failures.join("\n")
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_lines() {
        let mut c = Criterion::new(3, "demo");
        c.within("x", 1.0, 1.0004, 5e-4);
        c.within_3se("m", 1.0, 0.1, 1.25);
        assert_eq!(c.line(), "AC3  PASS  demo\n");
        c.within("y", 1.0, 1.1, 0.01);
        c.within_3se("m", 1.0, 0.1, 1.5);
        let line = c.line();
        assert!(line.starts_with("AC3  FAIL  demo\n"));
        assert_eq!(line.lines().count(), 3);
    }
}
