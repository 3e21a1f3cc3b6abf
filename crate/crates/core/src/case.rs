//! Case files: the declarative description of a network, its devices,
//! events and simulation settings.
//!
//! A case is a single JSON document; one file fully determines a run.
//! The schema is documented in the repository README, and two reference
//! cases ship with the crate: [`NetworkCase::single_vsc`] (one bus, one
//! converter against an infinite bus) and [`NetworkCase::nine_bus`]
//! (a 9-bus grid with two converters, three RL loads and a slack).
//!
//! [`parse_case`] validates exhaustively and reports *all* semantic
//! problems, not just the first one.

use crate::device::{LoadParams, SlackParams, VscParams};
use crate::network;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use thiserror::Error;

/// A bus. Nodes with at least one attachment are source nodes; nodes
/// with an empty attachment list are intermediate nodes and get
/// eliminated by the network reduction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    /// Device ids attached to this bus, in declaration order. A bus may
    /// carry several attachments (e.g. a converter and the grid source
    /// sharing one bus).
    #[serde(default)]
    pub attachments: Vec<String>,
}

/// A pure-inductance branch between two buses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchSpec {
    pub from: String,
    pub to: String,
    /// Series inductance in pu.
    pub inductance: f64,
}

/// Device parameter sets, keyed by device id in the case file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviceParams {
    Vsc(VscParams),
    Load(LoadParams),
    Slack(SlackParams),
}

impl DeviceParams {
    pub fn kind_name(&self) -> &'static str {
        match self {
            DeviceParams::Vsc(_) => "vsc",
            DeviceParams::Load(_) => "load",
            DeviceParams::Slack(_) => "slack",
        }
    }

    /// Series inductance between the device's internal voltage and its bus.
    pub fn series_inductance(&self) -> f64 {
        match self {
            DeviceParams::Vsc(p) => p.lf,
            DeviceParams::Load(p) => p.l_load,
            DeviceParams::Slack(p) => p.lg,
        }
    }

    /// Number of differential state variables contributed by the device.
    pub fn state_dim(&self) -> usize {
        match self {
            DeviceParams::Vsc(_) => VscParams::STATE_DIM,
            DeviceParams::Load(_) => LoadParams::STATE_DIM,
            DeviceParams::Slack(_) => 0,
        }
    }
}

/// A step change of one device parameter at a given time. Events are
/// applied at the first integration step boundary at or after `time`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    /// Device id the event applies to.
    pub target: String,
    /// Parameter name, e.g. `id_ref`.
    pub field: String,
    pub value: f64,
}

/// Integration method. Fixed-step classical Runge-Kutta is the only
/// option; the enum exists so case files state it explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Rk4,
}

fn default_stride() -> usize {
    1
}
fn default_newton_tol() -> f64 {
    1e-10
}
fn default_newton_max_iter() -> usize {
    50
}

/// Simulation settings carried by the case file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    /// Fixed step size in seconds.
    pub dt: f64,
    /// End of the simulation horizon in seconds.
    pub t_end: f64,
    /// Record every `record_stride`-th step (>= 1).
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default)]
    pub integrator: Integrator,
    /// Residual tolerance for the equilibrium solver.
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max_iter")]
    pub newton_max_iter: usize,
}

/// A complete, declarative simulation case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkCase {
    /// Free-form notes; the shipped cases use this to document which
    /// parameter values are assumptions rather than reference data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub base_frequency_hz: f64,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub branches: Vec<BranchSpec>,
    pub devices: BTreeMap<String, DeviceParams>,
    #[serde(default)]
    pub events: Vec<Event>,
    pub sim: SimConfig,
}

const SINGLE_VSC_JSON: &str = include_str!("../../../cases/single_vsc.json");
const NINE_BUS_JSON: &str = include_str!("../../../cases/nine_bus.json");

impl NetworkCase {
    /// Base angular frequency `ω0 = 2π·f0` in rad/s.
    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.base_frequency_hz
    }

    /// Reference case: one bus shared by a converter (behind `Lf`) and
    /// the grid source (behind `Lg`), with a current-reference step.
    pub fn single_vsc() -> NetworkCase {
        parse_case(SINGLE_VSC_JSON).expect("embedded single-VSC case is valid")
    }

    /// Reference case: 9-bus grid with a slack at node 1, converters at
    /// nodes 2 and 3, RL loads at nodes 5, 7 and 9, and intermediate
    /// nodes 4, 6 and 8.
    pub fn nine_bus() -> NetworkCase {
        parse_case(NINE_BUS_JSON).expect("embedded 9-bus case is valid")
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn device(&self, id: &str) -> Option<&DeviceParams> {
        self.devices.get(id)
    }

    /// Run the full semantic validation suite, collecting every problem.
    pub fn validate(&self) -> Result<(), Vec<SemanticError>> {
        let mut errors = Vec::new();

        if !(self.base_frequency_hz.is_finite() && self.base_frequency_hz > 0.0) {
            errors.push(SemanticError::InvalidFrequency {
                value: self.base_frequency_hz,
            });
        }

        // node ids unique
        let mut seen = HashSet::new();
        for node in &self.nodes {
            if !seen.insert(node.id.as_str()) {
                errors.push(SemanticError::DuplicateNodeId {
                    node: node.id.clone(),
                });
            }
        }

        // attachments reference known devices, each device attached once
        let mut attached = HashSet::new();
        let mut slack_count = 0usize;
        for node in &self.nodes {
            for dev in &node.attachments {
                match self.devices.get(dev) {
                    None => errors.push(SemanticError::MissingDevice {
                        node: node.id.clone(),
                        device: dev.clone(),
                    }),
                    Some(params) => {
                        if !attached.insert(dev.as_str()) {
                            errors.push(SemanticError::DuplicateAttachment {
                                device: dev.clone(),
                            });
                        }
                        if matches!(params, DeviceParams::Slack(_)) {
                            slack_count += 1;
                        }
                    }
                }
            }
        }
        match slack_count {
            0 => errors.push(SemanticError::NoSlack),
            1 => {}
            n => errors.push(SemanticError::MultipleSlack { count: n }),
        }
        for id in self.devices.keys() {
            if !attached.contains(id.as_str()) {
                errors.push(SemanticError::UnattachedDevice { device: id.clone() });
            }
        }

        // device parameter sanity
        for (id, params) in &self.devices {
            let l = params.series_inductance();
            if !(l.is_finite() && l > 0.0) {
                errors.push(SemanticError::NonpositiveInductance {
                    element: format!("device {id}"),
                    value: l,
                });
            }
            match params {
                DeviceParams::Vsc(p) => {
                    for (name, g) in [
                        ("kp_acc", p.kp_acc),
                        ("ki_acc", p.ki_acc),
                        ("kp_pll", p.kp_pll),
                        ("ki_pll", p.ki_pll),
                    ] {
                        if !(g.is_finite() && g >= 0.0) {
                            errors.push(SemanticError::InvalidParameter {
                                device: id.clone(),
                                field: name.to_string(),
                                detail: format!("gain must be finite and >= 0, got {g}"),
                            });
                        }
                    }
                }
                DeviceParams::Load(p) => {
                    if !(p.r_load.is_finite() && p.r_load >= 0.0) {
                        errors.push(SemanticError::InvalidParameter {
                            device: id.clone(),
                            field: "r_load".to_string(),
                            detail: format!("resistance must be finite and >= 0, got {}", p.r_load),
                        });
                    }
                }
                DeviceParams::Slack(p) => {
                    if !p.u_g.is_finite() || p.u_g.magnitude() == 0.0 {
                        errors.push(SemanticError::InvalidParameter {
                            device: id.clone(),
                            field: "u_g".to_string(),
                            detail: "grid voltage must be finite and nonzero".to_string(),
                        });
                    }
                }
            }
        }

        // branches
        for branch in &self.branches {
            if !(branch.inductance.is_finite() && branch.inductance > 0.0) {
                errors.push(SemanticError::NonpositiveInductance {
                    element: format!("branch {}-{}", branch.from, branch.to),
                    value: branch.inductance,
                });
            }
            for end in [&branch.from, &branch.to] {
                if self.node(end).is_none() {
                    errors.push(SemanticError::UnknownBranchEndpoint {
                        branch: format!("{}-{}", branch.from, branch.to),
                        node: end.clone(),
                    });
                }
            }
        }

        // sim settings
        if !(self.sim.dt.is_finite() && self.sim.dt > 0.0) {
            errors.push(SemanticError::InvalidSimSetting {
                field: "dt".to_string(),
                detail: format!("must be > 0, got {}", self.sim.dt),
            });
        }
        if !(self.sim.t_end.is_finite() && self.sim.t_end > 0.0) {
            errors.push(SemanticError::InvalidSimSetting {
                field: "t_end".to_string(),
                detail: format!("must be > 0, got {}", self.sim.t_end),
            });
        }
        if self.sim.record_stride == 0 {
            errors.push(SemanticError::InvalidSimSetting {
                field: "record_stride".to_string(),
                detail: "must be >= 1".to_string(),
            });
        }

        // events: targets exist and fields are adjustable; times not negative
        for event in &self.events {
            if !(event.time.is_finite() && event.time >= 0.0) {
                errors.push(SemanticError::InvalidEventTime { time: event.time });
            }
            if !event.value.is_finite() {
                errors.push(SemanticError::InvalidParameter {
                    device: event.target.clone(),
                    field: event.field.clone(),
                    detail: format!("event value must be finite, got {}", event.value),
                });
            }
            match self.devices.get(&event.target) {
                None => errors.push(SemanticError::UnknownEventTarget {
                    target: event.target.clone(),
                }),
                Some(params) => {
                    if !crate::sim::event_field_exists(params, &event.field) {
                        errors.push(SemanticError::UnknownEventField {
                            target: event.target.clone(),
                            field: event.field.clone(),
                        });
                    }
                }
            }
        }

        // structural validation (connectivity, duplicate branches) via assembly,
        // only worthwhile once the pieces above are individually sound
        if errors.is_empty() {
            if let Err(e) = network::FullAdmittance::assemble(self) {
                errors.push(SemanticError::Network(e));
            }
        }

        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

/// Parse and fully validate a case document.
pub fn parse_case(text: &str) -> Result<NetworkCase, CaseError> {
    let case: NetworkCase = serde_json::from_str(text).map_err(|e| CaseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    case.validate().map_err(CaseError::Semantic)?;
    Ok(case)
}

/// Read a case from a file path.
pub fn load_case(path: &std::path::Path) -> Result<NetworkCase, CaseError> {
    let text = std::fs::read_to_string(path).map_err(|e| CaseError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_case(&text)
}

/// Top-level case parsing failure.
#[derive(Debug, Error)]
pub enum CaseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    /// All semantic problems found in the document.
    #[error("{} validation error(s)", .0.len())]
    Semantic(Vec<SemanticError>),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CaseError {
    pub fn kind(&self) -> &'static str {
        match self {
            CaseError::Syntax { .. } => "SyntaxError",
            CaseError::Semantic(_) => "SemanticError",
            CaseError::Io { .. } => "IoError",
        }
    }
}

/// One semantic defect in a case document.
#[derive(Debug, Error)]
pub enum SemanticError {
    #[error("base frequency must be finite and > 0, got {value}")]
    InvalidFrequency { value: f64 },
    #[error("node id {node:?} declared more than once")]
    DuplicateNodeId { node: String },
    #[error("node {node:?} references unknown device {device:?}")]
    MissingDevice { node: String, device: String },
    #[error("device {device:?} attached to more than one node")]
    DuplicateAttachment { device: String },
    #[error("device {device:?} is declared but not attached to any node")]
    UnattachedDevice { device: String },
    #[error("case must contain exactly one slack attachment, found none")]
    NoSlack,
    #[error("case must contain exactly one slack attachment, found {count}")]
    MultipleSlack { count: usize },
    #[error("{element}: inductance must be > 0, got {value}")]
    NonpositiveInductance { element: String, value: f64 },
    #[error("branch {branch}: unknown endpoint node {node:?}")]
    UnknownBranchEndpoint { branch: String, node: String },
    #[error("device {device}, field {field}: {detail}")]
    InvalidParameter {
        device: String,
        field: String,
        detail: String,
    },
    #[error("sim.{field}: {detail}")]
    InvalidSimSetting { field: String, detail: String },
    #[error("event time must be finite and >= 0, got {time}")]
    InvalidEventTime { time: f64 },
    #[error("event targets unknown device {target:?}")]
    UnknownEventTarget { target: String },
    #[error("event field {field:?} does not exist on device {target:?} or is not adjustable")]
    UnknownEventField { target: String, field: String },
    #[error(transparent)]
    Network(network::NetworkError),
}

impl SemanticError {
    pub fn kind(&self) -> &'static str {
        match self {
            SemanticError::InvalidFrequency { .. } => "InvalidFrequency",
            SemanticError::DuplicateNodeId { .. } => "DuplicateNodeId",
            SemanticError::MissingDevice { .. } => "MissingDevice",
            SemanticError::DuplicateAttachment { .. } => "DuplicateAttachment",
            SemanticError::UnattachedDevice { .. } => "UnattachedDevice",
            SemanticError::NoSlack => "NoSlack",
            SemanticError::MultipleSlack { .. } => "MultipleSlack",
            SemanticError::NonpositiveInductance { .. } => "NonpositiveInductance",
            SemanticError::UnknownBranchEndpoint { .. } => "UnknownBranchEndpoint",
            SemanticError::InvalidParameter { .. } => "InvalidParameter",
            SemanticError::InvalidSimSetting { .. } => "InvalidSimSetting",
            SemanticError::InvalidEventTime { .. } => "InvalidEventTime",
            SemanticError::UnknownEventTarget { .. } => "UnknownEventTarget",
            SemanticError::UnknownEventField { .. } => "UnknownEventField",
            SemanticError::Network(e) => e.kind(),
        }
    }
}
