use crate::state::QubitState;

/// Time series of one qubit trajectory plus how it ended.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    /// `(tau, state)` samples, always including the initial and final state.
    pub samples: Vec<(f64, QubitState)>,
    /// Eigenstate index the trajectory was absorbed into; `None` if the
    /// evolution-parameter budget ran out first.
    pub outcome: Option<usize>,
    pub final_state: QubitState,
    pub final_tau: f64,
    pub steps: u64,
    /// Evolution parameter at which a quantum jump occurred (jump model only).
    pub jump_tau: Option<f64>,
}

impl TrajectoryRecord {
    pub fn absorbed(&self) -> bool {
        self.outcome.is_some()
    }
}

/// Collects samples at a fixed stride.
#[derive(Debug)]
pub(crate) struct Recorder {
    stride: u64,
    samples: Vec<(f64, QubitState)>,
}

impl Recorder {
    pub(crate) fn new(stride: u64, tau: f64, initial: QubitState) -> Self {
        Self { stride, samples: vec![(tau, initial)] }
    }

    #[inline]
    pub(crate) fn wants(&self, step: u64) -> bool {
        self.stride > 0 && step % self.stride == 0
    }

    pub(crate) fn push(&mut self, tau: f64, state: QubitState) {
        self.samples.push((tau, state));
    }

    pub(crate) fn finish(mut self, tau: f64, state: QubitState) -> Vec<(f64, QubitState)> {
        if self.samples.last().map(|(t, _)| *t) != Some(tau) {
            self.samples.push((tau, state));
        }
        self.samples
    }
}
