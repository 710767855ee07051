use crate::protocol::{
    decision_probability, Action, EnhancementConfig, Observation, ProtocolParams, UserState,
};

use super::rng::Coin;
use super::trace::{Phase, SlotRecord, SlotTrace, UserSlot};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct SlotOutcome {
    pub transmitters: usize,
    /// The lone transmitter.
    pub winner: Option<usize>,
    /// User whose critical traffic completed in this slot.
    pub completed: Option<usize>,
}

/// Plays one slot for all users and updates their memory.
pub(crate) fn play_slot<C: Coin>(
    params: &ProtocolParams,
    cfg: &EnhancementConfig,
    users: &mut [UserState],
    coin: &mut C,
    actions: &mut Vec<Action>,
    trace: Option<(&mut SlotTrace, Phase)>,
) -> SlotOutcome {
    actions.clear();
    actions.extend(users.iter().enumerate().map(|(i, u)| {
        if coin.transmit(i, decision_probability(params, cfg, u)) {
            Action::Transmit
        } else {
            Action::Wait
        }
    }));
    let transmitters = actions.iter().filter(|&&a| a == Action::Transmit).count();
    let winner = if transmitters == 1 {
        actions.iter().position(|&a| a == Action::Transmit)
    } else {
        None
    };

    if let Some((trace, phase)) = trace {
        let users = users
            .iter()
            .zip(actions.iter())
            .map(|(u, &action)| UserSlot {
                action,
                observation: Observation::from_outcome(action, transmitters),
                traffic: u.traffic,
                rule_g: u.two_crit_mode,
            })
            .collect();
        trace.slots.push(SlotRecord { phase, users });
    }

    let mut completed = None;
    for (i, (u, &a)) in users.iter_mut().zip(actions.iter()).enumerate() {
        if u.record_slot(Observation::from_outcome(a, transmitters), cfg) {
            completed = Some(i);
        }
    }
    SlotOutcome {
        transmitters,
        winner,
        completed,
    }
}
