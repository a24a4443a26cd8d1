//! Single four-leg intersection: 4 approaches x (left, through, right),
//! one incoming lane per movement, and the 8-phase signal plan.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const NUM_LANES: usize = 12;
pub const NUM_PHASES: usize = 8;
pub const STATE_DIM: usize = NUM_LANES + NUM_PHASES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Approach {
    North,
    South,
    East,
    West,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Turn {
    Left,
    Through,
    Right,
}

impl Approach {
    pub const ALL: [Approach; 4] = [
        Approach::North,
        Approach::South,
        Approach::East,
        Approach::West,
    ];

    fn axis(self) -> u8 {
        match self {
            Approach::North | Approach::South => 0,
            Approach::East | Approach::West => 1,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Approach::North => "N",
            Approach::South => "S",
            Approach::East => "E",
            Approach::West => "W",
        }
    }
}

impl Turn {
    pub const ALL: [Turn; 3] = [Turn::Left, Turn::Through, Turn::Right];

    pub fn code(self) -> &'static str {
        match self {
            Turn::Left => "left",
            Turn::Through => "through",
            Turn::Right => "right",
        }
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" => Ok(Approach::North),
            "S" => Ok(Approach::South),
            "E" => Ok(Approach::East),
            "W" => Ok(Approach::West),
            other => Err(Error::Input(format!("unknown approach {other:?}"))),
        }
    }
}

impl FromStr for Turn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Turn::Left),
            "through" => Ok(Turn::Through),
            "right" => Ok(Turn::Right),
            other => Err(Error::Input(format!("unknown movement {other:?}"))),
        }
    }
}

/// A turning movement; each has its own incoming lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Movement {
    pub approach: Approach,
    pub turn: Turn,
}

impl Movement {
    pub fn all() -> impl Iterator<Item = Movement> {
        Approach::ALL.into_iter().flat_map(|approach| {
            Turn::ALL
                .into_iter()
                .map(move |turn| Movement { approach, turn })
        })
    }

    /// Lane index `approach * 3 + turn`.
    pub fn lane(self) -> usize {
        let a = Approach::ALL
            .iter()
            .position(|x| *x == self.approach)
            .unwrap();
        let t = Turn::ALL.iter().position(|x| *x == self.turn).unwrap();
        a * 3 + t
    }

    pub fn from_lane(lane: usize) -> Movement {
        Movement {
            approach: Approach::ALL[lane / 3],
            turn: Turn::ALL[lane % 3],
        }
    }

    /// Whether the two movements' paths cross inside the box. Right turns
    /// are treated as conflict-free.
    pub fn conflicts_with(self, other: Movement) -> bool {
        if self.approach == other.approach || self.turn == Turn::Right || other.turn == Turn::Right
        {
            return false;
        }
        if self.approach.axis() == other.approach.axis() {
            // Opposing legs: through/through and left/left coexist.
            self.turn != other.turn
        } else {
            true
        }
    }
}

impl fmt::Display for Movement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.approach.code(), self.turn.code())
    }
}

fn mv(approach: Approach, turn: Turn) -> Movement {
    Movement { approach, turn }
}

/// Non-right movements served by each phase.
pub fn phase_movements(phase: usize) -> [Movement; 2] {
    use Approach::*;
    use Turn::*;
    match phase {
        0 => [mv(North, Through), mv(South, Through)],
        1 => [mv(North, Left), mv(South, Left)],
        2 => [mv(East, Through), mv(West, Through)],
        3 => [mv(East, Left), mv(West, Left)],
        4 => [mv(North, Through), mv(North, Left)],
        5 => [mv(South, Through), mv(South, Left)],
        6 => [mv(East, Through), mv(East, Left)],
        7 => [mv(West, Through), mv(West, Left)],
        _ => panic!("phase {phase} out of range"),
    }
}

/// Lane permission mask while `phase` is green (right turns always on).
pub fn phase_mask(phase: usize) -> [bool; NUM_LANES] {
    let mut mask = all_red_mask();
    for m in phase_movements(phase) {
        mask[m.lane()] = true;
    }
    mask
}

/// Permission mask during the yellow / all-red interlude.
pub fn all_red_mask() -> [bool; NUM_LANES] {
    let mut mask = [false; NUM_LANES];
    for lane in 0..NUM_LANES {
        mask[lane] = Movement::from_lane(lane).turn == Turn::Right;
    }
    mask
}

/// Geometry of the intersection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntersectionLayout {
    /// Incoming lane length up to the stop line, m.
    pub lane_length: f64,
    /// Distance from the stop line to the exit point, m.
    pub exit_length: f64,
}

impl Default for IntersectionLayout {
    fn default() -> Self {
        Self {
            lane_length: 300.0,
            exit_length: 30.0,
        }
    }
}

impl IntersectionLayout {
    pub fn validate(&self) -> Result<()> {
        if !(self.lane_length > 0.0 && self.exit_length > 0.0) {
            return Err(Error::Config(
                "lane and exit lengths must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn route_length(&self) -> f64 {
        self.lane_length + self.exit_length
    }
}
