//! Information-locality instrumentation.
//!
//! The distributed solvers claim to read nothing beyond two-hop flow state
//! and one-hop multipliers. Their state accessors report every read through
//! an [`AccessRecorder`], so a test can run a whole solve and then check the
//! claim against the actual access log. The default recorder compiles to
//! nothing.

use std::collections::HashSet;
use std::sync::Mutex;

/// Receives one event per remote-state read performed on behalf of `viewer`.
///
/// Flow reads are keyed by the arc being read; the arc's tail node is the
/// owner of that flow variable. Multiplier reads are keyed by the owning
/// node.
pub trait AccessRecorder: Sync {
    #[inline]
    fn flow_read(&self, _viewer: usize, _arc_from: usize, _arc_to: usize) {}
    #[inline]
    fn multiplier_read(&self, _viewer: usize, _owner: usize) {}
}

/// Recorder that ignores everything; the zero-cost default.
pub struct NoAudit;

impl AccessRecorder for NoAudit {}

/// Recorder that keeps the deduplicated set of observed accesses.
#[derive(Default)]
pub struct RecordingAudit {
    flows: Mutex<HashSet<(usize, usize, usize)>>,
    multipliers: Mutex<HashSet<(usize, usize)>>,
}

impl RecordingAudit {
    pub fn new() -> Self {
        Self::default()
    }

    /// Distinct `(viewer, arc_from, arc_to)` flow reads.
    pub fn flow_reads(&self) -> Vec<(usize, usize, usize)> {
        let mut v: Vec<_> = self.flows.lock().unwrap().iter().copied().collect();
        v.sort_unstable();
        v
    }

    /// Distinct `(viewer, owner)` multiplier reads.
    pub fn multiplier_reads(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<_> = self.multipliers.lock().unwrap().iter().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn is_empty(&self) -> bool {
        self.flows.lock().unwrap().is_empty() && self.multipliers.lock().unwrap().is_empty()
    }
}

impl AccessRecorder for RecordingAudit {
    fn flow_read(&self, viewer: usize, arc_from: usize, arc_to: usize) {
        self.flows.lock().unwrap().insert((viewer, arc_from, arc_to));
    }

    fn multiplier_read(&self, viewer: usize, owner: usize) {
        self.multipliers.lock().unwrap().insert((viewer, owner));
    }
}
