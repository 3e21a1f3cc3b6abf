//! Shared fixtures for the benchmark targets.

use kronsim::case::{NetworkCase, SimConfig};

/// The 9-bus reference case.
pub fn nine_bus() -> NetworkCase {
    NetworkCase::nine_bus()
}

/// The case's simulation settings truncated to a short horizon so a
/// single benchmark iteration stays in the millisecond range.
pub fn short_config(case: &NetworkCase, t_end: f64) -> SimConfig {
    let mut cfg = case.sim.clone();
    cfg.t_end = t_end;
    cfg.record_stride = usize::MAX; // record only the initial sample
    cfg
}
