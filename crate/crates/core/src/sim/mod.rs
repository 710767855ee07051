//! Seeded slot-level Monte Carlo simulation.
//!
//! A round is a normal phase of `normal_phase_slots` slots followed by a
//! critical phase that lasts until the critical traffic has been delivered.
//! Every round draws from its own ChaCha stream, with one lane per user and a
//! control lane for the round-level choices, so rounds can be replayed one by
//! one and simulated in parallel with identical results.
//!
//! Single-critical rounds are chained: round `k > 0` starts in the state the
//! critical phase of round `k - 1` left behind (its critical user has just
//! succeeded, everybody else saw the channel busy). Round 0 and every
//! two-critical run start with all users idle.

mod engine;
mod experiment;
mod oracle;
mod rng;
mod stats;
mod trace;
mod two_critical;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{EnhancementConfig, ProtocolParams};

pub use experiment::{round_stats, run_experiment, run_round, ExperimentReport};
pub use oracle::{estimate_metrics_oracle, OracleEstimate, ORACLE_STREAMS};
pub use stats::{restricted_mean, Estimate, RoundStats, Run};
pub use trace::{Phase, SlotRecord, SlotTrace, UserSlot};
pub use two_critical::{
    simulate_two_critical, simulate_two_critical_run, PropertyChecks, TwoCriticalReport,
    TwoCriticalRun, ViolationCounts, MAX_ATTEMPTS,
};

/// Distribution of the number of critical packets `X` (one per slot).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CriticalTrafficModel {
    Fixed(u32),
    /// Geometric on `{1, 2, ...}` with the given mean.
    Geometric(f64),
}

impl Default for CriticalTrafficModel {
    fn default() -> Self {
        CriticalTrafficModel::Fixed(20)
    }
}

impl CriticalTrafficModel {
    fn validate(&self) -> Result<()> {
        match *self {
            CriticalTrafficModel::Fixed(0) => Err(Error::BadParams(
                "critical traffic needs at least one packet".into(),
            )),
            CriticalTrafficModel::Geometric(mean) if !(mean >= 1.0 && mean.is_finite()) => Err(
                Error::BadParams(format!("geometric mean must be at least 1, got {mean}")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    SingleCritical,
    /// The second critical event arrives right after the first critical
    /// user's first success.
    TwoCriticalDuringSuccess,
    /// Both critical events arrive at the start of the critical phase.
    TwoCriticalSimultaneous,
    /// The second critical event arrives right after the first critical
    /// user's first collision.
    TwoCriticalDuringCollision,
}

impl Scenario {
    pub fn is_two_critical(self) -> bool {
        self != Scenario::SingleCritical
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::SingleCritical => "single-critical",
            Scenario::TwoCriticalDuringSuccess => "two-critical-during-success",
            Scenario::TwoCriticalSimultaneous => "two-critical-simultaneous",
            Scenario::TwoCriticalDuringCollision => "two-critical-during-collision",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ProtocolParams,
    pub enhancement: EnhancementConfig,
    pub normal_phase_slots: u32,
    pub rounds: u64,
    pub traffic_model: CriticalTrafficModel,
    pub seed: u64,
    pub scenario: Scenario,
    /// Guard on the length of one critical phase.
    pub max_critical_slots: u64,
}

impl SimConfig {
    pub const DEFAULT_NORMAL_PHASE_SLOTS: u32 = 100;
    pub const DEFAULT_ROUNDS: u64 = 1000;
    pub const DEFAULT_MAX_CRITICAL_SLOTS: u64 = 1_000_000;

    pub fn new(params: ProtocolParams) -> Self {
        Self {
            params,
            enhancement: EnhancementConfig::disabled(),
            normal_phase_slots: Self::DEFAULT_NORMAL_PHASE_SLOTS,
            rounds: Self::DEFAULT_ROUNDS,
            traffic_model: CriticalTrafficModel::default(),
            seed: 0,
            scenario: Scenario::SingleCritical,
            max_critical_slots: Self::DEFAULT_MAX_CRITICAL_SLOTS,
        }
    }

    pub fn with_enhancement(mut self, enhancement: EnhancementConfig) -> Self {
        self.enhancement = enhancement;
        self
    }

    pub fn with_rounds(mut self, rounds: u64) -> Self {
        self.rounds = rounds;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_scenario(mut self, scenario: Scenario) -> Self {
        self.scenario = scenario;
        self
    }

    pub fn with_traffic_model(mut self, model: CriticalTrafficModel) -> Self {
        self.traffic_model = model;
        self
    }

    pub fn with_normal_phase_slots(mut self, slots: u32) -> Self {
        self.normal_phase_slots = slots;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::BadParams("rounds must be at least 1".into()));
        }
        if self.normal_phase_slots == 0 {
            return Err(Error::BadParams(
                "normal_phase_slots must be at least 1".into(),
            ));
        }
        if self.max_critical_slots == 0 {
            return Err(Error::BadParams(
                "max_critical_slots must be at least 1".into(),
            ));
        }
        self.enhancement.validate()?;
        self.traffic_model.validate()?;
        if self.scenario.is_two_critical() && self.params.n_users() < 2 {
            return Err(Error::BadParams(
                "two critical users need at least 2 users".into(),
            ));
        }
        Ok(())
    }
}
