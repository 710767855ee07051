use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{Action, Observation, TrafficType, UserState};

use super::engine::play_slot;
use super::rng::{draw_packets, lane, UserLanes, CONTROL_LANE};
use super::stats::{restricted_mean, Estimate, RoundStats, RunTracker};
use super::trace::{Phase, SlotTrace};
use super::{two_critical, SimConfig};

/// Aggregate over all rounds of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rounds: u64,
    pub t_s: Estimate,
    pub t_c: Estimate,
    pub c_norm: Estimate,
    pub d_crit: Estimate,
    pub max_d_crit: u32,
    pub success_runs: usize,
    pub truncated_success_runs: usize,
    pub contention_periods: usize,
    pub truncated_contention_periods: usize,
}

fn critical_user(cfg: &SimConfig, round: u64) -> usize {
    lane(cfg.seed, round, CONTROL_LANE).random_range(0..cfg.params.n_users())
}

/// Memory of all users when `round` starts, and whether the slot before it
/// was a success.
fn start_state(cfg: &SimConfig, round: u64) -> (Vec<UserState>, bool) {
    let n = cfg.params.n_users();
    if round == 0 {
        return (vec![UserState::initial(); n], false);
    }
    let finished = critical_user(cfg, round - 1);
    let users = (0..n)
        .map(|i| {
            let seen = if i == finished {
                Observation::Success
            } else {
                Observation::Busy
            };
            UserState {
                last_observation: seen,
                prev_observation: seen,
                prev_traffic: if i == finished {
                    TrafficType::Critical
                } else {
                    TrafficType::Normal
                },
                ..UserState::initial()
            }
        })
        .collect();
    (users, true)
}

fn simulate_single(
    cfg: &SimConfig,
    round: u64,
    mut trace: Option<&mut SlotTrace>,
) -> Result<RoundStats> {
    let params = &cfg.params;
    let enh = &cfg.enhancement;
    let (mut users, after_success) = start_state(cfg, round);
    let mut coin = UserLanes::new(cfg.seed, round, users.len());
    let mut actions = Vec::with_capacity(users.len());

    let mut tracker = RunTracker::new(after_success);
    let mut successes = 0u64;
    for _ in 0..cfg.normal_phase_slots {
        let out = play_slot(
            params,
            enh,
            &mut users,
            &mut coin,
            &mut actions,
            trace.as_deref_mut().map(|t| (t, Phase::Normal)),
        );
        tracker.push(out.winner.is_some());
        successes += u64::from(out.winner.is_some());
    }
    let (success_runs, contention_periods) = tracker.finish();

    let mut control = lane(cfg.seed, round, CONTROL_LANE);
    let crit = control.random_range(0..users.len());
    let packets = draw_packets(&mut control, &cfg.traffic_model);
    users[crit].begin_critical(packets);

    let mut collisions = 0u32;
    let mut slots = 0u64;
    loop {
        if slots >= cfg.max_critical_slots {
            return Err(Error::Stalled { round, slots });
        }
        slots += 1;
        let out = play_slot(
            params,
            enh,
            &mut users,
            &mut coin,
            &mut actions,
            trace.as_deref_mut().map(|t| (t, Phase::Critical)),
        );
        if actions[crit] == Action::Transmit && out.transmitters > 1 {
            collisions += 1;
        }
        if out.completed == Some(crit) {
            break;
        }
    }

    Ok(RoundStats {
        round,
        critical_user: crit,
        critical_packets: packets,
        success_runs,
        contention_periods,
        normal_successes: successes,
        normal_slots: u64::from(cfg.normal_phase_slots),
        critical_collisions: collisions,
        critical_slots: slots,
    })
}

/// Simulates one round with its full slot trace.
pub fn run_round(cfg: &SimConfig, round: u64) -> Result<(SlotTrace, RoundStats)> {
    cfg.validate()?;
    if cfg.scenario.is_two_critical() {
        return two_critical::run_with_stats(cfg, round);
    }
    let mut trace = SlotTrace::new(round);
    let stats = simulate_single(cfg, round, Some(&mut trace))?;
    Ok((trace, stats))
}

/// Per-round statistics for rounds `0..cfg.rounds`, in round order.
pub fn round_stats(cfg: &SimConfig) -> Result<Vec<RoundStats>> {
    cfg.validate()?;
    if cfg.scenario.is_two_critical() {
        return (0..cfg.rounds)
            .into_par_iter()
            .map(|r| two_critical::run_with_stats(cfg, r).map(|(_, s)| s))
            .collect();
    }
    (0..cfg.rounds)
        .into_par_iter()
        .map(|r| simulate_single(cfg, r, None))
        .collect()
}

/// Runs all rounds and aggregates them.
///
/// `T_s` and `T_c` are Kaplan-Meier means over all success runs and
/// contention periods, treating those cut off by the end of a normal phase as
/// censored. `C_norm` is the fraction of normal-phase slots with a success
/// and `D_crit` the mean number of critical-phase collisions; their standard
/// errors come from the spread across rounds.
pub fn run_experiment(cfg: &SimConfig) -> Result<ExperimentReport> {
    let stats = round_stats(cfg)?;
    Ok(aggregate(&stats))
}

pub(crate) fn aggregate(stats: &[RoundStats]) -> ExperimentReport {
    let successes: Vec<_> = stats
        .iter()
        .flat_map(|s| s.success_runs.iter().copied())
        .collect();
    let contention: Vec<_> = stats
        .iter()
        .flat_map(|s| s.contention_periods.iter().copied())
        .collect();
    let utilization: Vec<f64> = stats
        .iter()
        .map(|s| s.normal_successes as f64 / s.normal_slots as f64)
        .collect();
    let delays: Vec<f64> = stats
        .iter()
        .map(|s| f64::from(s.critical_collisions))
        .collect();
    let total_successes: u64 = stats.iter().map(|s| s.normal_successes).sum();
    let total_slots: u64 = stats.iter().map(|s| s.normal_slots).sum();
    let mut c_norm = Estimate::from_samples(&utilization);
    c_norm.mean = total_successes as f64 / total_slots as f64;
    ExperimentReport {
        rounds: stats.len() as u64,
        t_s: restricted_mean(&successes),
        t_c: restricted_mean(&contention),
        c_norm,
        d_crit: Estimate::from_samples(&delays),
        max_d_crit: stats
            .iter()
            .map(|s| s.critical_collisions)
            .max()
            .unwrap_or(0),
        success_runs: successes.len(),
        truncated_success_runs: successes.iter().filter(|r| r.truncated).count(),
        contention_periods: contention.len(),
        truncated_contention_periods: contention.iter().filter(|r| r.truncated).count(),
    }
}
