//! Dynamic simulation of converter-dominated power networks.
//!
//! The inductive network — lines plus every source's series inductance
//! — is reduced to an instantaneous algebraic map (a Kron-reduced
//! "voltage divider") from source internal voltages to bus terminal
//! voltages, so only device states need integrating. An independent
//! full-branch-state reference simulator integrates every inductor
//! current individually and serves as the equivalence oracle: both
//! simulators must produce the same trajectories.
//!
//! Modules:
//!
//! * [`case`] — JSON case schema, validation, shipped reference cases
//! * [`network`] — nodal admittance assembly, Kron reduction, divider
//! * [`device`] — VSC (current control + PLL), RL load, slack models
//! * [`sim`] — RK4 integration, Newton equilibrium, both simulators
//! * [`timeseries`] — trajectories, CSV round-tripping, comparison
//! * [`plot`] — SVG figures

pub mod case;
pub mod device;
pub mod network;
pub mod plot;
pub mod sim;
pub mod timeseries;
pub mod xy;

pub use case::{
    load_case, parse_case, BranchSpec, CaseError, DeviceParams, Event, Integrator, NetworkCase,
    NodeSpec, SemanticError, SimConfig,
};
pub use device::{DeviceError, LoadParams, LoadState, SlackParams, VscParams, VscState};
pub use network::{
    dae_counts, slack_injection, AttachmentKind, FullAdmittance, NetworkError, NodeOrdering,
    ReducedNetwork, SourceAttachment,
};
pub use plot::{emit_plot_svg, render_svg, PlotError, PlotSeries};
pub use sim::{
    apply_event, find_equilibrium, plan_events, reduced_derivative, reference_initial_state,
    reference_state_from_equilibrium, simulate_reduced, simulate_reference,
    source_terminal_voltages, step_rk4, Equilibrium, EventError, SimError, SimState, StateLayout,
};
pub use timeseries::{compare, ComparisonReport, SignalDeviation, TimeSeries, TsError};
pub use xy::{dq_to_xy, xy_to_dq, XYPair};
