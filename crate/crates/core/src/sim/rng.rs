//! Random stream layout.
//!
//! A stream is a ChaCha8 key (from the seed) plus a stream id (the round or
//! run). Inside a stream, each lane starts `2^40` words apart, far more than
//! one round ever consumes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use super::CriticalTrafficModel;

const LANE_SPACING_BITS: u32 = 40;
pub(crate) const CONTROL_LANE: u64 = 0;
pub(crate) const BRANCH_LANE: u64 = 1;
pub(crate) const FIRST_USER_LANE: u64 = 2;

pub(crate) fn lane(seed: u64, stream: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(lane) << LANE_SPACING_BITS);
    rng
}

/// Where the transmit/wait decisions of a slot come from.
pub(crate) trait Coin {
    fn transmit(&mut self, user: usize, p: f64) -> bool;
}

fn flip(rng: &mut ChaCha8Rng, p: f64) -> bool {
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rng.random::<f64>() < p
    }
}

/// One independent lane per user.
pub(crate) struct UserLanes(Vec<ChaCha8Rng>);

impl UserLanes {
    pub(crate) fn new(seed: u64, stream: u64, users: usize) -> Self {
        Self(
            (0..users as u64)
                .map(|u| lane(seed, stream, FIRST_USER_LANE + u))
                .collect(),
        )
    }
}

impl Coin for UserLanes {
    fn transmit(&mut self, user: usize, p: f64) -> bool {
        flip(&mut self.0[user], p)
    }
}

/// All users share one generator, consumed in user order.
impl Coin for ChaCha8Rng {
    fn transmit(&mut self, _user: usize, p: f64) -> bool {
        flip(self, p)
    }
}

pub(crate) fn draw_packets(rng: &mut ChaCha8Rng, model: &CriticalTrafficModel) -> u32 {
    match *model {
        CriticalTrafficModel::Fixed(len) => len,
        CriticalTrafficModel::Geometric(mean) if mean <= 1.0 => 1,
        CriticalTrafficModel::Geometric(mean) => {
            let extra = Geometric::new(1.0 / mean)
                .expect("validated mean")
                .sample(rng);
            u32::try_from(extra.saturating_add(1)).unwrap_or(u32::MAX)
        }
    }
}
