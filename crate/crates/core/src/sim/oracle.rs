//! Long-run estimator of `T_c`, `C_norm` and `D_crit` for the baseline
//! protocol, used to cross-check the closed forms.
//!
//! Independent streams each run one long normal phase. After a burn-in, a
//! critical phase is branched off a copy of the state every few slots and
//! played until the critical user's first success, so the delay samples see
//! the stationary distribution of the last normal slot while the main chain
//! stays undisturbed. Standard errors come from the spread of the per-stream
//! estimates.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{Action, EnhancementConfig, ProtocolParams};

use super::engine::play_slot;
use super::rng::{lane, BRANCH_LANE, FIRST_USER_LANE};
use super::stats::{restricted_mean, Estimate, RunTracker};
use crate::protocol::UserState;

pub const ORACLE_STREAMS: u64 = 64;
const BURN_IN_SLOTS: u64 = 1000;
const BRANCH_SPACING: u64 = 10;
const MAX_BRANCH_SLOTS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    /// Number of branched critical phases.
    pub rounds: u64,
    pub t_c: Estimate,
    pub c_norm: Estimate,
    pub d_crit: Estimate,
}

struct StreamResult {
    t_c: f64,
    c_norm: f64,
    d_crit: f64,
}

fn run_stream(
    params: &ProtocolParams,
    branches: u64,
    seed: u64,
    stream: u64,
) -> Result<StreamResult> {
    let cfg = EnhancementConfig::disabled();
    let n = params.n_users();
    let mut users = vec![UserState::initial(); n];
    let mut main = lane(seed, stream, FIRST_USER_LANE);
    let mut branch_rng = lane(seed, stream, BRANCH_LANE);
    let mut actions = Vec::with_capacity(n);

    for _ in 0..BURN_IN_SLOTS {
        play_slot(params, &cfg, &mut users, &mut main, &mut actions, None);
    }

    let mut tracker = RunTracker::new(false);
    let (mut successes, mut slots) = (0u64, 0u64);
    let mut collisions = 0u64;
    for b in 0..branches {
        for _ in 0..BRANCH_SPACING {
            let out = play_slot(params, &cfg, &mut users, &mut main, &mut actions, None);
            tracker.push(out.winner.is_some());
            successes += u64::from(out.winner.is_some());
            slots += 1;
        }

        let mut copy = users.clone();
        let crit = branch_rng.random_range(0..n);
        copy[crit].begin_critical(1);
        let mut played = 0u64;
        loop {
            if played >= MAX_BRANCH_SLOTS {
                return Err(Error::Stalled {
                    round: b,
                    slots: played,
                });
            }
            played += 1;
            let out = play_slot(params, &cfg, &mut copy, &mut branch_rng, &mut actions, None);
            if actions[crit] == Action::Transmit && out.transmitters > 1 {
                collisions += 1;
            }
            if out.completed == Some(crit) {
                break;
            }
        }
    }

    let (_, contention) = tracker.finish();
    Ok(StreamResult {
        t_c: restricted_mean(&contention).mean,
        c_norm: successes as f64 / slots as f64,
        d_crit: collisions as f64 / branches as f64,
    })
}

/// Estimates `(T_c, C_norm, D_crit)` from `rounds` branched critical phases
/// spread over [`ORACLE_STREAMS`] independent streams.
pub fn estimate_metrics_oracle(
    params: &ProtocolParams,
    rounds: u64,
    seed: u64,
) -> Result<OracleEstimate> {
    if rounds < ORACLE_STREAMS {
        return Err(Error::BadParams(format!(
            "oracle needs at least {ORACLE_STREAMS} rounds, got {rounds}"
        )));
    }
    let per_stream = rounds / ORACLE_STREAMS;
    let results: Vec<StreamResult> = (0..ORACLE_STREAMS)
        .into_par_iter()
        .map(|s| run_stream(params, per_stream, seed, s))
        .collect::<Result<_>>()?;
    let column = |f: fn(&StreamResult) -> f64| {
        Estimate::from_samples(&results.iter().map(f).collect::<Vec<_>>())
    };
    Ok(OracleEstimate {
        rounds: per_stream * ORACLE_STREAMS,
        t_c: column(|r| r.t_c),
        c_norm: column(|r| r.c_norm),
        d_crit: column(|r| r.d_crit),
    })
}
