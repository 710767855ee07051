use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::protocol::{Action, Observation, TrafficType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Normal,
    Critical,
}

impl Phase {
    pub fn code(self) -> char {
        match self {
            Phase::Normal => 'N',
            Phase::Critical => 'C',
        }
    }
}

/// What one user did and saw in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSlot {
    pub action: Action,
    pub observation: Observation,
    /// Traffic type in effect when the user decided.
    pub traffic: TrafficType,
    /// Rule `g` was in charge of the decision.
    pub rule_g: bool,
}

impl UserSlot {
    /// Three-letter code: action, observation, traffic (e.g. `TSC`).
    pub fn code(&self) -> [char; 3] {
        [
            self.action.code(),
            self.observation.code(),
            self.traffic.code(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub phase: Phase,
    pub users: Vec<UserSlot>,
}

impl SlotRecord {
    pub fn transmitters(&self) -> usize {
        self.users
            .iter()
            .filter(|u| u.action == Action::Transmit)
            .count()
    }

    pub fn is_idle(&self) -> bool {
        self.transmitters() == 0
    }

    /// The user that transmitted alone, if any.
    pub fn winner(&self) -> Option<usize> {
        let mut tx = self
            .users
            .iter()
            .enumerate()
            .filter(|(_, u)| u.action == Action::Transmit);
        match (tx.next(), tx.next()) {
            (Some((i, _)), None) => Some(i),
            _ => None,
        }
    }

    /// Checks the feedback rules: a lone transmitter succeeds and the rest
    /// are busy; several transmitters all fail; an empty slot is idle for all.
    pub fn is_consistent(&self) -> bool {
        let k = self.transmitters();
        self.users
            .iter()
            .all(|u| u.observation == Observation::from_outcome(u.action, k))
    }
}

/// Per-slot record of one simulated round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotTrace {
    pub round: u64,
    pub slots: Vec<SlotRecord>,
}

impl SlotTrace {
    pub fn new(round: u64) -> Self {
        Self {
            round,
            slots: Vec::new(),
        }
    }

    /// Index of the first slot violating the feedback rules.
    pub fn first_inconsistency(&self) -> Option<usize> {
        self.slots.iter().position(|s| !s.is_consistent())
    }

    /// Header line of the export format.
    pub fn header(users: usize) -> String {
        let mut h = String::from("round,slot,phase");
        for u in 0..users {
            h.push_str(&format!(",u{u}"));
        }
        h
    }

    /// Writes one line per slot: `round,slot,phase,` then one
    /// action/observation/traffic code per user, e.g. `0,17,N,WBN,TSN`.
    pub fn write_records(&self, out: &mut impl Write) -> io::Result<()> {
        for (i, slot) in self.slots.iter().enumerate() {
            write!(out, "{},{},{}", self.round, i, slot.phase.code())?;
            for u in &slot.users {
                let [a, o, t] = u.code();
                write!(out, ",{a}{o}{t}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}
