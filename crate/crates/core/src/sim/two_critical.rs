//! Two critical users sharing the channel.
//!
//! A run is a normal phase started from all-idle users, then critical user
//! `i` and, at the time the scenario prescribes, critical user `j`. The run
//! continues until both have delivered their traffic and any post-completion
//! yielding has ended, and is then checked against the sharing properties.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{Action, UserState, YieldState};

use super::engine::play_slot;
use super::rng::{draw_packets, lane, UserLanes, CONTROL_LANE};
use super::stats::{RoundStats, RunTracker};
use super::trace::{Phase, SlotTrace};
use super::{Scenario, SimConfig};

/// Attempts per run to realize a scenario whose trigger may not occur.
pub const MAX_ATTEMPTS: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyChecks {
    /// Each critical user engaged rule `g`, or completed first without
    /// needing it.
    pub inference: bool,
    /// Every inference happened within `B + 2` slots of both users being
    /// critical.
    pub latency_bound: bool,
    /// Simultaneous arrivals only: both inferred after exactly `B + 1` slots.
    pub exact_latency: Option<bool>,
    /// Simultaneous arrivals only: the first rule-`g` slot is a collision.
    pub first_g_collision: Option<bool>,
    /// From the first success with both users under rule `g`, the pair
    /// alternates `(T, W)` / `(W, T)` with a success every slot until the
    /// first completion.
    pub alternation: bool,
    /// When the first finisher was under rule `g`: an idle slot follows its
    /// completion and it waits up to and including the slot after that idle.
    pub idle_then_wait: Option<bool>,
}

impl PropertyChecks {
    pub fn all_hold(&self) -> bool {
        self.inference
            && self.latency_bound
            && self.exact_latency != Some(false)
            && self.first_g_collision != Some(false)
            && self.alternation
            && self.idle_then_wait != Some(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoCriticalRun {
    pub run: u64,
    /// Attempt that realized the scenario.
    pub attempt: u32,
    /// `[i, j]`: the first and the second critical user.
    pub users: [usize; 2],
    pub packets: [u32; 2],
    /// First slot (index into the trace) in which both users are critical.
    pub both_critical_at: usize,
    /// Slots from `both_critical_at` up to and including the slot whose
    /// outcome engaged rule `g`.
    pub inference_latency: [Option<u64>; 2],
    pub completed_at: [usize; 2],
    pub collisions: [u32; 2],
    pub checks: PropertyChecks,
    pub trace: SlotTrace,
}

impl TwoCriticalRun {
    /// 0 if `i` completed first, 1 if `j` did.
    pub fn first_completer(&self) -> usize {
        usize::from(self.completed_at[1] < self.completed_at[0])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub inference: u64,
    pub latency_bound: u64,
    pub exact_latency: u64,
    pub first_g_collision: u64,
    pub alternation: u64,
    pub idle_then_wait: u64,
}

impl ViolationCounts {
    pub fn total(&self) -> u64 {
        self.inference
            + self.latency_bound
            + self.exact_latency
            + self.first_g_collision
            + self.alternation
            + self.idle_then_wait
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoCriticalReport {
    pub scenario: Scenario,
    pub runs: u64,
    pub violations: ViolationCounts,
    /// Runs with at least one violated property.
    pub failed_runs: Vec<u64>,
    pub max_inference_latency: u64,
    pub mean_inference_latency: f64,
    /// Runs in which the second critical user finished first.
    pub second_finished_first: u64,
    /// Runs in which the idle-then-wait property applied.
    pub idle_then_wait_checked: u64,
}

fn check_preconditions(cfg: &SimConfig) -> Result<()> {
    cfg.validate()?;
    if !cfg.scenario.is_two_critical() {
        return Err(Error::ScenarioUnsatisfiable(
            "scenario has a single critical user".into(),
        ));
    }
    if !cfg.enhancement.enabled {
        return Err(Error::ScenarioUnsatisfiable(
            "two critical users can only infer each other with the enhanced protocol".into(),
        ));
    }
    Ok(())
}

/// Simulates and checks one run.
pub fn simulate_two_critical_run(cfg: &SimConfig, run: u64) -> Result<TwoCriticalRun> {
    check_preconditions(cfg)?;
    simulate(cfg, run).map(|(r, _)| r)
}

pub(crate) fn run_with_stats(cfg: &SimConfig, run: u64) -> Result<(SlotTrace, RoundStats)> {
    check_preconditions(cfg)?;
    simulate(cfg, run).map(|(r, s)| (r.trace, s))
}

/// Simulates `cfg.rounds` runs of a two-critical scenario and counts
/// property violations.
pub fn simulate_two_critical(cfg: &SimConfig) -> Result<TwoCriticalReport> {
    check_preconditions(cfg)?;
    let runs: Vec<(u64, PropertyChecks, [Option<u64>; 2], usize)> = (0..cfg.rounds)
        .into_par_iter()
        .map(|r| {
            simulate(cfg, r)
                .map(|(run, _)| (r, run.checks, run.inference_latency, run.first_completer()))
        })
        .collect::<Result<_>>()?;

    let mut v = ViolationCounts::default();
    let mut failed = Vec::new();
    let mut latencies = Vec::new();
    let mut second_first = 0;
    let mut idle_checked = 0;
    for (r, c, lat, first) in &runs {
        v.inference += u64::from(!c.inference);
        v.latency_bound += u64::from(!c.latency_bound);
        v.exact_latency += u64::from(c.exact_latency == Some(false));
        v.first_g_collision += u64::from(c.first_g_collision == Some(false));
        v.alternation += u64::from(!c.alternation);
        v.idle_then_wait += u64::from(c.idle_then_wait == Some(false));
        idle_checked += u64::from(c.idle_then_wait.is_some());
        second_first += u64::from(*first == 1);
        if !c.all_hold() {
            failed.push(*r);
        }
        latencies.extend(lat.iter().flatten().copied());
    }
    Ok(TwoCriticalReport {
        scenario: cfg.scenario,
        runs: cfg.rounds,
        violations: v,
        failed_runs: failed,
        max_inference_latency: latencies.iter().copied().max().unwrap_or(0),
        mean_inference_latency: if latencies.is_empty() {
            f64::NAN
        } else {
            latencies.iter().sum::<u64>() as f64 / latencies.len() as f64
        },
        second_finished_first: second_first,
        idle_then_wait_checked: idle_checked,
    })
}

fn simulate(cfg: &SimConfig, run: u64) -> Result<(TwoCriticalRun, RoundStats)> {
    for attempt in 0..MAX_ATTEMPTS {
        if let Some(done) = attempt_run(cfg, run, attempt)? {
            return Ok(done);
        }
    }
    Err(Error::ScenarioUnsatisfiable(format!(
        "{} not realized in {MAX_ATTEMPTS} attempts for run {run}",
        cfg.scenario.as_str()
    )))
}

fn attempt_run(
    cfg: &SimConfig,
    run: u64,
    attempt: u32,
) -> Result<Option<(TwoCriticalRun, RoundStats)>> {
    let params = &cfg.params;
    let enh = &cfg.enhancement;
    let n = params.n_users();
    let stream = run
        .wrapping_mul(u64::from(MAX_ATTEMPTS))
        .wrapping_add(u64::from(attempt));

    let mut control = lane(cfg.seed, stream, CONTROL_LANE);
    let i = control.random_range(0..n);
    let j = (i + 1 + control.random_range(0..n - 1)) % n;
    let packets = [
        draw_packets(&mut control, &cfg.traffic_model),
        draw_packets(&mut control, &cfg.traffic_model),
    ];
    if cfg.scenario == Scenario::TwoCriticalDuringSuccess && packets[0] < 2 {
        // the first user would finish with its first success
        return Ok(None);
    }

    let mut users = vec![UserState::initial(); n];
    let mut coin = UserLanes::new(cfg.seed, stream, n);
    let mut actions = Vec::with_capacity(n);
    let mut trace = SlotTrace::new(run);

    let mut tracker = RunTracker::new(false);
    let mut successes = 0u64;
    for _ in 0..cfg.normal_phase_slots {
        let out = play_slot(
            params,
            enh,
            &mut users,
            &mut coin,
            &mut actions,
            Some((&mut trace, Phase::Normal)),
        );
        tracker.push(out.winner.is_some());
        successes += u64::from(out.winner.is_some());
    }
    let (success_runs, contention_periods) = tracker.finish();

    let pair = [i, j];
    users[i].begin_critical(packets[0]);
    let mut both_at = None;
    if cfg.scenario == Scenario::TwoCriticalSimultaneous {
        users[j].begin_critical(packets[1]);
        both_at = Some(trace.slots.len());
    }

    let mut latency = [None; 2];
    let mut completed_at: [Option<usize>; 2] = [None, None];
    let mut collisions = [0u32; 2];
    let mut critical_slots = 0u64;
    loop {
        if critical_slots >= cfg.max_critical_slots {
            return Err(Error::Stalled {
                round: run,
                slots: critical_slots,
            });
        }
        critical_slots += 1;
        let slot = trace.slots.len();
        let out = play_slot(
            params,
            enh,
            &mut users,
            &mut coin,
            &mut actions,
            Some((&mut trace, Phase::Critical)),
        );
        for k in 0..2 {
            if actions[pair[k]] == Action::Transmit
                && out.transmitters > 1
                && completed_at[k].is_none()
            {
                collisions[k] += 1;
            }
            if out.completed == Some(pair[k]) {
                completed_at[k] = Some(slot);
            }
        }

        match both_at {
            None => {
                if completed_at[0].is_some() {
                    // the first user finished before the scenario could start
                    return Ok(None);
                }
                let inject = match cfg.scenario {
                    Scenario::TwoCriticalDuringSuccess => out.winner == Some(i),
                    Scenario::TwoCriticalDuringCollision => {
                        actions[i] == Action::Transmit && out.transmitters > 1
                    }
                    _ => false,
                };
                if inject {
                    users[j].begin_critical(packets[1]);
                    both_at = Some(slot + 1);
                }
            }
            Some(start) => {
                for k in 0..2 {
                    if latency[k].is_none() && users[pair[k]].two_crit_mode {
                        latency[k] = Some((slot + 1 - start) as u64);
                    }
                }
            }
        }

        if completed_at.iter().all(Option::is_some)
            && users.iter().all(|u| u.yield_state == YieldState::None)
        {
            break;
        }
    }

    let both_critical_at = both_at.expect("both users became critical");
    let completed_at = completed_at.map(|c| c.expect("both users completed"));
    let checks = check_properties(cfg, &trace, pair, both_critical_at, latency, completed_at);
    let stats = RoundStats {
        round: run,
        critical_user: i,
        critical_packets: packets[0],
        success_runs,
        contention_periods,
        normal_successes: successes,
        normal_slots: u64::from(cfg.normal_phase_slots),
        critical_collisions: collisions[0],
        critical_slots,
    };
    let result = TwoCriticalRun {
        run,
        attempt,
        users: pair,
        packets,
        both_critical_at,
        inference_latency: latency,
        completed_at,
        collisions,
        checks,
        trace,
    };
    Ok(Some((result, stats)))
}

fn check_properties(
    cfg: &SimConfig,
    trace: &SlotTrace,
    pair: [usize; 2],
    start: usize,
    latency: [Option<u64>; 2],
    completed_at: [usize; 2],
) -> PropertyChecks {
    let b = u64::from(cfg.enhancement.backoff_bound);
    let first = usize::from(completed_at[1] < completed_at[0]);
    let first_done = completed_at[first];
    let slots = &trace.slots;

    let inference = (0..2).all(|k| latency[k].is_some() || k == first);
    let latency_bound = latency.iter().flatten().all(|&l| l <= b + 2);

    let simultaneous = cfg.scenario == Scenario::TwoCriticalSimultaneous;
    let exact_latency = simultaneous.then(|| latency == [Some(b + 1), Some(b + 1)]);
    let first_g_collision = simultaneous.then(|| {
        let g_slot = start + (b + 1) as usize;
        g_slot <= first_done
            && slots.get(g_slot).is_some_and(|s| {
                pair.iter()
                    .all(|&u| s.users[u].rule_g && s.users[u].action == Action::Transmit)
            })
    });

    let pair_winner = |s: usize| slots[s].winner().filter(|w| pair.contains(w));
    let shared_success = (start..=first_done)
        .find(|&s| pair.iter().all(|&u| slots[s].users[u].rule_g) && pair_winner(s).is_some());
    let alternation = match shared_success {
        None => true,
        Some(u) => (u + 1..=first_done).all(|s| match (pair_winner(s), pair_winner(s - 1)) {
            (Some(now), Some(before)) => now != before,
            _ => false,
        }),
    };

    let finisher = pair[first];
    let idle_then_wait = slots[first_done].users[finisher].rule_g.then(|| {
        match (first_done + 1..slots.len()).find(|&s| slots[s].is_idle()) {
            Some(idle) if idle + 1 < slots.len() => {
                (first_done + 1..=idle + 1).all(|s| slots[s].users[finisher].action == Action::Wait)
            }
            _ => false,
        }
    });

    PropertyChecks {
        inference,
        latency_bound,
        exact_latency,
        first_g_collision,
        alternation,
        idle_then_wait,
    }
}
