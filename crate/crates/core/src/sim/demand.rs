//! Vehicle arrival schedules and their plain-text file format.
//!
//! ```text
//! # ugatlab-demand v1: arrival_time_s,entry_approach,movement
//! 0.8731,N,through
//! 2.114,E,left
//! ```

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::layout::{Approach, Movement, Turn};
use crate::{Error, Result};

pub const DEMAND_FORMAT_VERSION: u32 = 1;
const HEADER_PREFIX: &str = "# ugatlab-demand v";
const COLUMNS: &str = "arrival_time_s,entry_approach,movement";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub time: f64,
    pub movement: Movement,
}

/// Arrivals in nondecreasing time order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DemandSchedule {
    arrivals: Vec<Arrival>,
}

impl DemandSchedule {
    pub fn new(arrivals: Vec<Arrival>) -> Result<Self> {
        if arrivals
            .iter()
            .any(|a| !(a.time >= 0.0) || !a.time.is_finite())
        {
            return Err(Error::Input(
                "arrival times must be finite and nonnegative".into(),
            ));
        }
        if arrivals.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(Error::Input("arrival times must be nondecreasing".into()));
        }
        Ok(Self { arrivals })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Poisson arrivals at `vehicles_per_hour`, movements drawn uniformly
    /// over the 12 movements, until `duration` seconds.
    pub fn generate<R: Rng + ?Sized>(vehicles_per_hour: f64, duration: f64, rng: &mut R) -> Self {
        let mut arrivals = Vec::new();
        if vehicles_per_hour <= 0.0 {
            return Self { arrivals };
        }
        let gaps = Exp::new(vehicles_per_hour / 3600.0).expect("positive rate");
        let movements: Vec<Movement> = Movement::all().collect();
        let mut t = 0.0;
        loop {
            t += gaps.sample(rng);
            if t >= duration {
                break;
            }
            let movement = movements[rng.random_range(0..movements.len())];
            arrivals.push(Arrival { time: t, movement });
        }
        Self { arrivals }
    }

    pub fn arrivals(&self) -> &[Arrival] {
        &self.arrivals
    }

    pub fn len(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER_PREFIX}{DEMAND_FORMAT_VERSION}: {COLUMNS}\n");
        for a in &self.arrivals {
            out.push_str(&format!(
                "{},{},{}\n",
                a.time,
                a.movement.approach.code(),
                a.movement.turn.code()
            ));
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or_default();
        let version = header
            .strip_prefix(HEADER_PREFIX)
            .and_then(|rest| rest.split(':').next())
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| parse_err(1, format!("missing header {HEADER_PREFIX}N")))?;
        if version != DEMAND_FORMAT_VERSION {
            return Err(parse_err(
                1,
                format!("unsupported demand format version {version}"),
            ));
        }
        let mut arrivals = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(parse_err(
                    i + 1,
                    format!("expected 3 fields, got {}", fields.len()),
                ));
            }
            let time: f64 = fields[0]
                .parse()
                .map_err(|_| parse_err(i + 1, format!("bad time {:?}", fields[0])))?;
            let approach: Approach = fields[1]
                .parse()
                .map_err(|e: Error| parse_err(i + 1, e.to_string()))?;
            let turn: Turn = fields[2]
                .parse()
                .map_err(|e: Error| parse_err(i + 1, e.to_string()))?;
            arrivals.push(Arrival {
                time,
                movement: Movement { approach, turn },
            });
        }
        Self::new(arrivals).map_err(|e| parse_err(0, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, &path.display().to_string())
    }
}
