use serde::{Deserialize, Serialize};

use super::layout::{NUM_LANES, NUM_PHASES, STATE_DIM};

/// Fixed lane-count scale used when feeding states to networks.
pub const LANE_COUNT_SCALE: f64 = 50.0;

/// Per-lane vehicle counts plus the controlling phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrafficState {
    pub lane_counts: [u32; NUM_LANES],
    pub phase: usize,
}

impl TrafficState {
    pub fn empty(phase: usize) -> Self {
        Self {
            lane_counts: [0; NUM_LANES],
            phase,
        }
    }

    pub fn phase_onehot(&self) -> [f64; NUM_PHASES] {
        let mut v = [0.0; NUM_PHASES];
        v[self.phase] = 1.0;
        v
    }

    /// Raw counts followed by the one-hot phase.
    pub fn to_vector(&self) -> [f64; STATE_DIM] {
        let mut v = [0.0; STATE_DIM];
        for (o, c) in v.iter_mut().zip(&self.lane_counts) {
            *o = f64::from(*c);
        }
        v[NUM_LANES + self.phase] = 1.0;
        v
    }

    /// As [`to_vector`](Self::to_vector) with counts divided by
    /// [`LANE_COUNT_SCALE`].
    pub fn features(&self) -> [f64; STATE_DIM] {
        let mut v = self.to_vector();
        v[..NUM_LANES]
            .iter_mut()
            .for_each(|c| *c /= LANE_COUNT_SCALE);
        v
    }

    pub fn total_vehicles(&self) -> u32 {
        self.lane_counts.iter().sum()
    }

    /// Stable 64-bit FNV-1a fingerprint, used in audit logs.
    pub fn hash64(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        self.lane_counts.iter().for_each(|c| eat(u64::from(*c)));
        eat(self.phase as u64);
        h
    }
}
