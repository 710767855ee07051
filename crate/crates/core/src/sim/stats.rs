use serde::{Deserialize, Serialize};

/// A success run or contention period observed in a normal phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub len: u32,
    /// Cut off by the end of the normal phase; the true length is at least
    /// `len`.
    pub truncated: bool,
}

/// Per-round measurements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: u64,
    pub critical_user: usize,
    pub critical_packets: u32,
    pub success_runs: Vec<Run>,
    pub contention_periods: Vec<Run>,
    pub normal_successes: u64,
    pub normal_slots: u64,
    /// Collisions suffered by the critical user in the critical phase.
    pub critical_collisions: u32,
    pub critical_slots: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Standard error of `mean`.
    pub se: f64,
}

impl Estimate {
    /// Sample mean with standard error `sd / sqrt(n)`.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        if samples.is_empty() {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = samples.iter().sum::<f64>() / n;
        if samples.len() < 2 {
            return Self { mean, se: f64::NAN };
        }
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            se: (var / n).sqrt(),
        }
    }

    /// `|mean - target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.se
    }
}

/// Kaplan-Meier estimate of the mean length of runs (all lengths >= 1), with
/// truncated runs treated as right-censored, and its Greenwood standard error.
///
/// A run of length `k` is at risk of ending at `k` if it is complete with
/// length `>= k` or truncated with length `> k`. The mean is the area under
/// the survival curve up to the longest observed length.
pub fn restricted_mean(runs: &[Run]) -> Estimate {
    let max_len = runs.iter().map(|r| r.len).max().unwrap_or(0) as usize;
    if max_len == 0 {
        return Estimate {
            mean: f64::NAN,
            se: f64::NAN,
        };
    }
    let mut ended = vec![0u64; max_len + 2];
    let mut censored = vec![0u64; max_len + 2];
    for r in runs {
        if r.truncated {
            censored[r.len as usize] += 1;
        } else {
            ended[r.len as usize] += 1;
        }
    }
    // at_risk[k] = complete with len >= k + truncated with len > k
    let mut at_risk = vec![0u64; max_len + 2];
    let (mut complete_ge, mut censored_gt) = (0u64, 0u64);
    for k in (1..=max_len).rev() {
        complete_ge += ended[k];
        at_risk[k] = complete_ge + censored_gt;
        censored_gt += censored[k];
    }

    // survival[k] = P(L > k)
    let mut survival = vec![1.0; max_len + 1];
    for k in 1..=max_len {
        let hazard = if at_risk[k] > 0 {
            ended[k] as f64 / at_risk[k] as f64
        } else {
            0.0
        };
        survival[k] = survival[k - 1] * (1.0 - hazard);
    }
    let mean: f64 = survival[..max_len].iter().sum();

    // Greenwood: Var = Σ_k A_k² d_k / (n_k (n_k - d_k)), A_k = Σ_{j>=k} S(j)
    let mut var = 0.0;
    let mut tail = 0.0;
    for k in (1..=max_len).rev() {
        tail += survival[k];
        let (d, n) = (ended[k] as f64, at_risk[k] as f64);
        if ended[k] > 0 && n > d {
            var += tail * tail * d / (n * (n - d));
        }
    }
    Estimate {
        mean,
        se: var.sqrt(),
    }
}

/// Splits the channel outcomes of a normal phase into success runs and
/// contention periods.
#[derive(Debug, Clone)]
pub(crate) struct RunTracker {
    current: Segment,
    pub success_runs: Vec<Run>,
    pub contention_periods: Vec<Run>,
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    /// Before the first success of a phase that started without one.
    Unknown,
    Success {
        len: u32,
        counted: bool,
    },
    Contention {
        len: u32,
    },
}

impl RunTracker {
    /// `after_success`: the slot before the phase was a success, so a run
    /// that continues into the phase is left-truncated and not counted.
    pub(crate) fn new(after_success: bool) -> Self {
        let current = if after_success {
            Segment::Success {
                len: 0,
                counted: false,
            }
        } else {
            Segment::Unknown
        };
        Self {
            current,
            success_runs: Vec::new(),
            contention_periods: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, success: bool) {
        self.current = match (self.current, success) {
            (Segment::Success { len, counted }, true) => Segment::Success {
                len: len + 1,
                counted,
            },
            (Segment::Success { len, counted }, false) => {
                if counted {
                    self.success_runs.push(Run {
                        len,
                        truncated: false,
                    });
                }
                Segment::Contention { len: 1 }
            }
            (Segment::Contention { len }, true) => {
                self.contention_periods.push(Run {
                    len,
                    truncated: false,
                });
                Segment::Success {
                    len: 1,
                    counted: true,
                }
            }
            (Segment::Contention { len }, false) => Segment::Contention { len: len + 1 },
            (Segment::Unknown, true) => Segment::Success {
                len: 1,
                counted: true,
            },
            (Segment::Unknown, false) => Segment::Unknown,
        };
    }

    pub(crate) fn finish(mut self) -> (Vec<Run>, Vec<Run>) {
        match self.current {
            Segment::Success { len, counted: true } if len > 0 => self.success_runs.push(Run {
                len,
                truncated: true,
            }),
            Segment::Contention { len } => self.contention_periods.push(Run {
                len,
                truncated: true,
            }),
            _ => {}
        }
        (self.success_runs, self.contention_periods)
    }
}
