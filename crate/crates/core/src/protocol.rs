//! Observations, traffic types and the per-slot decision rules of
//! θ-fair non-intrusive adaptive protocols with 1-slot memory.
//!
//! A baseline protocol is the four-entry map `f(y, z)`:
//!
//! | observation | normal  | critical |
//! |-------------|---------|----------|
//! | idle        | `q`     | 1        |
//! | busy        | 0       | 1        |
//! | success     | `1 - θ` | 1        |
//! | failure     | `r`     | 1        |
//!
//! The enhanced protocol adds three overrides for normal users (wait after a
//! success/failure pattern, wait after `B` consecutive failures, wait right
//! after critical traffic ends) and, for pairs of critical users, the channel
//! sharing rule [`rule_g`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Local feedback a user obtains in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observation {
    /// Nobody transmitted.
    Idle,
    /// The user waited and at least one other user transmitted.
    Busy,
    /// The user transmitted alone.
    Success,
    /// The user transmitted together with someone else.
    Failure,
}

impl Observation {
    pub fn code(self) -> char {
        match self {
            Observation::Idle => 'I',
            Observation::Busy => 'B',
            Observation::Success => 'S',
            Observation::Failure => 'F',
        }
    }

    /// Feedback seen by a user given its own action and the total number of
    /// transmitters in the slot (including itself).
    pub fn from_outcome(action: Action, transmitters: usize) -> Self {
        match (action, transmitters) {
            (Action::Transmit, 1) => Observation::Success,
            (Action::Transmit, _) => Observation::Failure,
            (Action::Wait, 0) => Observation::Idle,
            (Action::Wait, _) => Observation::Busy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrafficType {
    Normal,
    Critical,
}

impl TrafficType {
    pub fn code(self) -> char {
        match self {
            TrafficType::Normal => 'N',
            TrafficType::Critical => 'C',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Transmit,
    Wait,
}

impl Action {
    pub fn code(self) -> char {
        match self {
            Action::Transmit => 'T',
            Action::Wait => 'W',
        }
    }
}

/// Parameters `(N, θ, q, r)` of a θ-fair non-intrusive adaptive protocol.
///
/// The remaining entries of the decision map are implied:
/// `f(·, critical) = 1`, `f(busy, normal) = 0`, `f(success, normal) = 1 - θ`.
///
/// A single-user population is accepted so that simulations can be sanity
/// checked without contention; the Markov analysis requires `N >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    n_users: usize,
    theta: f64,
    q: f64,
    r: f64,
}

impl ProtocolParams {
    pub fn new(n_users: usize, theta: f64, q: f64, r: f64) -> Result<Self> {
        if n_users == 0 {
            return Err(Error::BadParams("n_users must be positive".into()));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::BadParams(format!(
                "theta must lie in (0, 1], got {theta}"
            )));
        }
        for (name, v) in [("q", q), ("r", r)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::BadParams(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(Self {
            n_users,
            theta,
            q,
            r,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `f(idle, normal)`.
    pub fn q(&self) -> f64 {
        self.q
    }

    /// `f(failure, normal)`.
    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn with_qr(&self, q: f64, r: f64) -> Result<Self> {
        Self::new(self.n_users, self.theta, q, r)
    }

    pub fn with_n_users(&self, n_users: usize) -> Result<Self> {
        Self::new(n_users, self.theta, self.q, self.r)
    }
}

/// Switches for the enhanced protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnhancementConfig {
    pub enabled: bool,
    /// Number of consecutive collisions after which a normal user backs off.
    pub backoff_bound: u32,
    /// Make a user whose critical traffic just ended wait in the next slot.
    pub suppress_after_critical: bool,
}

impl EnhancementConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            backoff_bound: 5,
            suppress_after_critical: false,
        }
    }

    pub fn enhanced(backoff_bound: u32) -> Self {
        Self {
            enabled: true,
            backoff_bound,
            suppress_after_critical: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.backoff_bound < 2 {
            return Err(Error::BadParams(format!(
                "backoff bound must be at least 2, got {}",
                self.backoff_bound
            )));
        }
        Ok(())
    }
}

impl Default for EnhancementConfig {
    fn default() -> Self {
        Self::disabled()
    }
}

/// Post-completion courtesy of a user that finished critical traffic while
/// sharing the channel under [`rule_g`]: it stays silent up to and including
/// the slot that follows the first idle slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum YieldState {
    None,
    UntilIdle,
    OneMore,
}

/// The memory a user keeps between slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    /// `y^{t-1}`.
    pub last_observation: Observation,
    /// `y^{t-2}`.
    pub prev_observation: Observation,
    /// Length of the current run of `Failure` observations.
    pub consecutive_failures: u32,
    /// `z^t`, the traffic type for the upcoming slot.
    pub traffic: TrafficType,
    /// `z^{t-1}`.
    pub prev_traffic: TrafficType,
    /// Packets of critical traffic still to deliver.
    pub critical_remaining: u32,
    /// Rule `g` is engaged.
    pub two_crit_mode: bool,
    /// Consecutive failures counted since the traffic became critical.
    pub critical_failures: u32,
    /// Critical packets delivered in the current critical phase.
    pub critical_sent: u32,
    /// The next rule-`g` decision uses the `idle` initialization.
    pub g_fresh: bool,
    pub yield_state: YieldState,
}

impl Default for UserState {
    fn default() -> Self {
        Self::initial()
    }
}

impl UserState {
    /// State before the first slot: `y^0 = idle`, normal traffic.
    pub fn initial() -> Self {
        Self {
            last_observation: Observation::Idle,
            prev_observation: Observation::Idle,
            consecutive_failures: 0,
            traffic: TrafficType::Normal,
            prev_traffic: TrafficType::Normal,
            critical_remaining: 0,
            two_crit_mode: false,
            critical_failures: 0,
            critical_sent: 0,
            g_fresh: false,
            yield_state: YieldState::None,
        }
    }

    /// Marks the start of a critical phase carrying `packets` packets.
    pub fn begin_critical(&mut self, packets: u32) {
        debug_assert!(packets >= 1);
        self.traffic = TrafficType::Critical;
        self.critical_remaining = packets;
        self.critical_failures = 0;
        self.critical_sent = 0;
        self.two_crit_mode = false;
        self.g_fresh = false;
        self.yield_state = YieldState::None;
    }

    /// Updates the memory with the outcome of the slot just played.
    ///
    /// Returns `true` when the user's critical traffic completed in this slot.
    pub fn record_slot(&mut self, obs: Observation, cfg: &EnhancementConfig) -> bool {
        self.prev_observation = self.last_observation;
        self.last_observation = obs;
        self.consecutive_failures = if obs == Observation::Failure {
            self.consecutive_failures + 1
        } else {
            0
        };
        self.prev_traffic = self.traffic;

        self.yield_state = match (self.yield_state, obs) {
            (YieldState::OneMore, _) => YieldState::None,
            (YieldState::UntilIdle, Observation::Idle) => YieldState::OneMore,
            (s, _) => s,
        };

        if self.traffic != TrafficType::Critical {
            return false;
        }

        if self.two_crit_mode {
            self.g_fresh = false;
        }
        match obs {
            Observation::Failure => self.critical_failures += 1,
            Observation::Success => {
                self.critical_failures = 0;
                self.critical_sent += 1;
                self.critical_remaining = self.critical_remaining.saturating_sub(1);
            }
            _ => self.critical_failures = 0,
        }

        if self.critical_remaining == 0 {
            let was_sharing = self.two_crit_mode;
            self.traffic = TrafficType::Normal;
            self.two_crit_mode = false;
            self.g_fresh = false;
            self.critical_failures = 0;
            self.critical_sent = 0;
            if cfg.enabled && was_sharing {
                self.yield_state = YieldState::UntilIdle;
            }
            return true;
        }

        if cfg.enabled {
            if self.two_crit_mode {
                // An idle slot right after our own success is impossible while the
                // partner still runs rule g (it saw busy and must transmit).
                if self.prev_observation == Observation::Success && obs == Observation::Idle {
                    self.two_crit_mode = false;
                }
            } else if two_critical_mode_trigger(self, cfg) {
                self.two_crit_mode = true;
                self.g_fresh = true;
            }
        }
        false
    }
}

/// Baseline decision map `f(y, z)`.
pub fn transmission_probability(params: &ProtocolParams, y: Observation, z: TrafficType) -> f64 {
    match z {
        TrafficType::Critical => 1.0,
        TrafficType::Normal => match y {
            Observation::Idle => params.q,
            Observation::Busy => 0.0,
            Observation::Success => 1.0 - params.theta,
            Observation::Failure => params.r,
        },
    }
}

/// Enhanced decision rules for a user, applied in order:
///
/// 1. normal user that saw `(success, failure)` waits;
/// 2. normal user with `B` consecutive failures waits;
/// 3. user whose traffic just switched from critical to normal waits
///    (when `suppress_after_critical` is set);
/// 4. otherwise the baseline map.
pub fn enhanced_transmission_probability(
    params: &ProtocolParams,
    cfg: &EnhancementConfig,
    state: &UserState,
) -> f64 {
    let normal = state.traffic == TrafficType::Normal;
    if normal
        && state.prev_observation == Observation::Success
        && state.last_observation == Observation::Failure
    {
        return 0.0;
    }
    if normal && state.consecutive_failures >= cfg.backoff_bound {
        return 0.0;
    }
    if normal && cfg.suppress_after_critical && state.prev_traffic == TrafficType::Critical {
        return 0.0;
    }
    transmission_probability(params, state.last_observation, state.traffic)
}

/// Channel sharing rule for two critical users.
pub fn rule_g(y: Observation) -> f64 {
    match y {
        Observation::Idle | Observation::Busy => 1.0,
        Observation::Success => 0.0,
        Observation::Failure => 0.5,
    }
}

/// Whether a critical user has evidence of a second critical user.
///
/// Two patterns are impossible when at most one critical user exists under
/// the enhanced protocol: more than `B` consecutive failures since becoming
/// critical, and a failure immediately after one of its own critical
/// successes.
pub fn two_critical_mode_trigger(state: &UserState, cfg: &EnhancementConfig) -> bool {
    if state.traffic != TrafficType::Critical {
        return false;
    }
    let long_run = state.critical_failures > cfg.backoff_bound;
    let interrupted = state.critical_sent >= 1
        && state.prev_observation == Observation::Success
        && state.last_observation == Observation::Failure;
    long_run || interrupted
}

/// Transmission probability a user applies in the upcoming slot, covering
/// baseline, enhanced and two-critical behavior.
pub fn decision_probability(
    params: &ProtocolParams,
    cfg: &EnhancementConfig,
    state: &UserState,
) -> f64 {
    if !cfg.enabled {
        return transmission_probability(params, state.last_observation, state.traffic);
    }
    match state.traffic {
        TrafficType::Critical if state.two_crit_mode => rule_g(if state.g_fresh {
            Observation::Idle
        } else {
            state.last_observation
        }),
        TrafficType::Critical => 1.0,
        TrafficType::Normal if state.yield_state != YieldState::None => 0.0,
        TrafficType::Normal => enhanced_transmission_probability(params, cfg, state),
    }
}
