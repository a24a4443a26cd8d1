use super::state::TrafficState;

/// Fixed-time plan: cycles through `phases`, holding each for `hold`
/// decisions regardless of traffic.
#[derive(Debug, Clone)]
pub struct FixedCycle {
    phases: Vec<usize>,
    hold: usize,
    step: usize,
}

impl FixedCycle {
    pub fn new(phases: Vec<usize>, hold: usize) -> Self {
        assert!(!phases.is_empty() && hold > 0);
        Self {
            phases,
            hold,
            step: 0,
        }
    }

    /// NS-through, NS-left, EW-through, EW-left, 20 s each.
    pub fn standard() -> Self {
        Self::new(vec![0, 1, 2, 3], 2)
    }

    pub fn reset(&mut self) {
        self.step = 0;
    }

    pub fn act(&mut self, _state: &TrafficState) -> usize {
        let phase = self.phases[(self.step / self.hold) % self.phases.len()];
        self.step += 1;
        phase
    }
}
