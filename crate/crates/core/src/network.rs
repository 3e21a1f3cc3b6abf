//! Algebraization of the dynamic inductive network.
//!
//! The network of pure inductances, together with every device's series
//! inductance, satisfies a static linear relation between the device
//! internal voltages `e` and the bus terminal voltages `u_t`, per axis:
//!
//! ```text
//!     Y · u_t = Y_fr · e
//! ```
//!
//! where `Y` is the nodal admittance matrix built from reciprocal
//! inductances (`ω0` cancels between both sides and is factored out)
//! and `Y_fr` maps each attachment's internal voltage onto its bus with
//! weight `1/L`. Partitioning rows into source nodes (buses with at
//! least one attachment) and intermediate nodes (zero injection), the
//! intermediate block is eliminated by a Schur complement:
//!
//! ```text
//!     Yr = Ya − Yb · Yd⁻¹ · Yc,      u_t,s = Yr⁻¹ · Yf · e = M · e
//! ```
//!
//! `M` is the **divider matrix**: a row-stochastic, nonnegative map that
//! produces every source-bus terminal voltage instantaneously from the
//! internal voltages. It is all the simulator needs from the network;
//! intermediate voltages are recovered on demand by back-substitution.
//!
//! Matrices are dense with direct factorizations; cases here are tens
//! of nodes at most, and dense keeps oracle comparisons exact.

use crate::case::{DeviceParams, NetworkCase};
use crate::xy::XYPair;
use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;
use thiserror::Error;

/// Kind of source attached to a bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttachmentKind {
    Vsc,
    Load,
    Slack,
}

/// A device attachment resolved against the node ordering.
#[derive(Debug, Clone)]
pub struct SourceAttachment {
    pub device: String,
    pub kind: AttachmentKind,
    /// Row of the bus in the network ordering (always a source row).
    pub node_row: usize,
    /// Series inductance in pu.
    pub inductance: f64,
    /// `1 / inductance`.
    pub admittance: f64,
}

/// Stable node ordering: source nodes first in case declaration order,
/// then intermediate nodes in declaration order.
#[derive(Debug, Clone)]
pub struct NodeOrdering {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    source_count: usize,
}

impl NodeOrdering {
    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn source_count(&self) -> usize {
        self.source_count
    }

    pub fn intermediate_count(&self) -> usize {
        self.ids.len() - self.source_count
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id_of(&self, row: usize) -> &str {
        &self.ids[row]
    }

    /// Source node ids in row order.
    pub fn source_ids(&self) -> &[String] {
        &self.ids[..self.source_count]
    }

    /// Intermediate node ids in row order.
    pub fn intermediate_ids(&self) -> &[String] {
        &self.ids[self.source_count..]
    }
}

/// The unreduced nodal description: `Y`, the attachment admittances and
/// the node ordering.
#[derive(Debug, Clone)]
pub struct FullAdmittance {
    y: DMatrix<f64>,
    /// Per-node sum of attachment admittances (the `Y_fr` diagonal;
    /// zero on intermediate rows).
    attachment_diag: DVector<f64>,
    /// Attachments in declaration order (nodes first, then the node's
    /// own attachment order); this fixes the ordering of the internal
    /// voltage vector `e` and of the divider-matrix columns.
    attachments: Vec<SourceAttachment>,
    ordering: NodeOrdering,
    /// Branches as (row_from, row_to, inductance).
    branches: Vec<(usize, usize, f64)>,
}

impl FullAdmittance {
    /// Build the nodal admittance description of a case.
    pub fn assemble(case: &NetworkCase) -> Result<FullAdmittance, NetworkError> {
        // partition nodes: sources first, then intermediates
        let mut ids = Vec::with_capacity(case.nodes.len());
        for node in &case.nodes {
            if !node.attachments.is_empty() {
                ids.push(node.id.clone());
            }
        }
        let source_count = ids.len();
        for node in &case.nodes {
            if node.attachments.is_empty() {
                ids.push(node.id.clone());
            }
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (row, id) in ids.iter().enumerate() {
            index.insert(id.clone(), row);
        }
        let ordering = NodeOrdering {
            ids,
            index,
            source_count,
        };
        let n = ordering.node_count();

        // resolve attachments against the device table
        let mut attachments = Vec::new();
        for node in &case.nodes {
            let node_row = ordering.row_of(&node.id).expect("node was just indexed");
            for dev in &node.attachments {
                let params = case.devices.get(dev).ok_or_else(|| NetworkError::UnknownDevice {
                    node: node.id.clone(),
                    device: dev.clone(),
                })?;
                let kind = match params {
                    DeviceParams::Vsc(_) => AttachmentKind::Vsc,
                    DeviceParams::Load(_) => AttachmentKind::Load,
                    DeviceParams::Slack(_) => AttachmentKind::Slack,
                };
                let inductance = params.series_inductance();
                if !(inductance.is_finite() && inductance > 0.0) {
                    return Err(NetworkError::NonpositiveInductance {
                        element: format!("device {dev}"),
                        value: inductance,
                    });
                }
                attachments.push(SourceAttachment {
                    device: dev.clone(),
                    kind,
                    node_row,
                    inductance,
                    admittance: 1.0 / inductance,
                });
            }
        }

        // validate branches and map to rows
        let mut branches = Vec::with_capacity(case.branches.len());
        let mut seen_pairs = HashMap::new();
        for branch in &case.branches {
            if !(branch.inductance.is_finite() && branch.inductance > 0.0) {
                return Err(NetworkError::NonpositiveInductance {
                    element: format!("branch {}-{}", branch.from, branch.to),
                    value: branch.inductance,
                });
            }
            let from = ordering
                .row_of(&branch.from)
                .ok_or_else(|| NetworkError::UnknownBranchEndpoint {
                    branch: format!("{}-{}", branch.from, branch.to),
                    node: branch.from.clone(),
                })?;
            let to = ordering
                .row_of(&branch.to)
                .ok_or_else(|| NetworkError::UnknownBranchEndpoint {
                    branch: format!("{}-{}", branch.from, branch.to),
                    node: branch.to.clone(),
                })?;
            if from == to {
                return Err(NetworkError::SelfLoopBranch {
                    node: branch.from.clone(),
                });
            }
            let key = (from.min(to), from.max(to));
            if seen_pairs.insert(key, ()).is_some() {
                return Err(NetworkError::DuplicateBranch {
                    from: branch.from.clone(),
                    to: branch.to.clone(),
                });
            }
            branches.push((from, to, branch.inductance));
        }

        // connectivity: every branch-connected component must contain at
        // least one attachment; a bare node is its own island
        let mut component = (0..n).collect::<Vec<usize>>();
        fn root(component: &mut [usize], mut i: usize) -> usize {
            while component[i] != i {
                component[i] = component[component[i]];
                i = component[i];
            }
            i
        }
        for &(a, b, _) in &branches {
            let (ra, rb) = (root(&mut component, a), root(&mut component, b));
            if ra != rb {
                component[ra] = rb;
            }
        }
        let mut component_has_source = vec![false; n];
        for att in &attachments {
            let r = root(&mut component, att.node_row);
            component_has_source[r] = true;
        }
        let mut orphans = Vec::new();
        for row in 0..n {
            let r = root(&mut component, row);
            if !component_has_source[r] {
                orphans.push(ordering.id_of(row).to_string());
            }
        }
        if !orphans.is_empty() {
            return Err(NetworkError::DisconnectedNode {
                nodes: orphans.join(", "),
            });
        }

        // stamp the matrix
        let mut y = DMatrix::zeros(n, n);
        for &(a, b, l) in &branches {
            let adm = 1.0 / l;
            y[(a, a)] += adm;
            y[(b, b)] += adm;
            y[(a, b)] -= adm;
            y[(b, a)] -= adm;
        }
        let mut attachment_diag = DVector::zeros(n);
        for att in &attachments {
            y[(att.node_row, att.node_row)] += att.admittance;
            attachment_diag[att.node_row] += att.admittance;
        }

        Ok(FullAdmittance {
            y,
            attachment_diag,
            attachments,
            ordering,
            branches,
        })
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// Diagonal of `Y_fr`: per-node attachment admittance sums.
    pub fn attachment_diag(&self) -> &DVector<f64> {
        &self.attachment_diag
    }

    pub fn attachments(&self) -> &[SourceAttachment] {
        &self.attachments
    }

    pub fn ordering(&self) -> &NodeOrdering {
        &self.ordering
    }

    /// Branches as `(row_from, row_to, inductance)` in declaration order.
    pub fn branches(&self) -> &[(usize, usize, f64)] {
        &self.branches
    }

    /// Right-hand side of `Y·u = Y_fr·e` for a per-attachment internal
    /// voltage vector, one column per axis.
    pub fn rhs_from_internal(&self, e: &[XYPair]) -> Result<DMatrix<f64>, NetworkError> {
        if e.len() != self.attachments.len() {
            return Err(NetworkError::DimensionMismatch {
                what: "internal voltage vector".to_string(),
                expected: self.attachments.len(),
                got: e.len(),
            });
        }
        let mut rhs = DMatrix::zeros(self.ordering.node_count(), 2);
        for (att, ek) in self.attachments.iter().zip(e) {
            rhs[(att.node_row, 0)] += att.admittance * ek.x;
            rhs[(att.node_row, 1)] += att.admittance * ek.y;
        }
        Ok(rhs)
    }

    /// Solve the unreduced system for all node voltages. This is the
    /// direct dense route used by the reference simulator and by the
    /// reduction-equivalence oracles; it never touches the Schur path.
    pub fn solve_all_voltages(&self, e: &[XYPair]) -> Result<Vec<XYPair>, NetworkError> {
        let rhs = self.rhs_from_internal(e)?;
        let lu = self.y.clone().lu();
        let sol = lu.solve(&rhs).ok_or(NetworkError::SingularSystem {
            what: "full nodal admittance matrix".to_string(),
        })?;
        Ok((0..self.ordering.node_count())
            .map(|row| XYPair::new(sol[(row, 0)], sol[(row, 1)]))
            .collect())
    }
}

/// The Kron-reduced network: the divider matrix plus the recovery map
/// for eliminated intermediate voltages.
#[derive(Debug, Clone)]
pub struct ReducedNetwork {
    /// Schur complement `Yr = Ya − Yb·Yd⁻¹·Yc`, source × source.
    yr: DMatrix<f64>,
    /// Divider matrix `M = Yr⁻¹·Yf`, source-nodes × attachments.
    divider: DMatrix<f64>,
    /// `−Yd⁻¹·Yc`: recovers intermediate voltages from source voltages.
    int_recovery: DMatrix<f64>,
    attachments: Vec<SourceAttachment>,
    ordering: NodeOrdering,
}

impl ReducedNetwork {
    /// Eliminate the intermediate nodes of an assembled network.
    pub fn reduce(full: &FullAdmittance) -> Result<ReducedNetwork, NetworkError> {
        let n = full.ordering.node_count();
        let s = full.ordering.source_count();
        let m = n - s;

        let ya = full.y.view((0, 0), (s, s)).into_owned();
        let (yr, int_recovery) = if m == 0 {
            (ya, DMatrix::zeros(0, s))
        } else {
            let yb = full.y.view((0, s), (s, m)).into_owned();
            let yc = full.y.view((s, 0), (m, s)).into_owned();
            let yd = full.y.view((s, s), (m, m)).into_owned();
            let lu = yd.lu();
            let x = lu
                .solve(&yc)
                .ok_or(NetworkError::SingularIntermediateBlock)?;
            (ya - &yb * &x, -x)
        };

        // Yf: admittance-weighted incidence of attachments onto source
        // rows. With one attachment per node this is the usual diagonal;
        // a bus carrying several attachments contributes one column each.
        let a = full.attachments.len();
        let mut yf = DMatrix::zeros(s, a);
        for (col, att) in full.attachments.iter().enumerate() {
            yf[(att.node_row, col)] = att.admittance;
        }
        let divider = yr
            .clone()
            .lu()
            .solve(&yf)
            .ok_or(NetworkError::SingularSystem {
                what: "reduced admittance matrix".to_string(),
            })?;

        Ok(ReducedNetwork {
            yr,
            divider,
            int_recovery,
            attachments: full.attachments.clone(),
            ordering: full.ordering.clone(),
        })
    }

    /// Schur complement of the intermediate block.
    pub fn yr(&self) -> &DMatrix<f64> {
        &self.yr
    }

    /// The divider matrix `M` (source nodes × attachments).
    pub fn divider(&self) -> &DMatrix<f64> {
        &self.divider
    }

    /// Back-substitution map `−Yd⁻¹·Yc` (intermediates × source nodes).
    pub fn intermediate_recovery(&self) -> &DMatrix<f64> {
        &self.int_recovery
    }

    pub fn attachments(&self) -> &[SourceAttachment] {
        &self.attachments
    }

    pub fn ordering(&self) -> &NodeOrdering {
        &self.ordering
    }

    /// Terminal voltages of the source nodes: `u = M·e`, applied per axis.
    pub fn terminal_voltages(&self, e: &[XYPair]) -> Result<Vec<XYPair>, NetworkError> {
        if e.len() != self.attachments.len() {
            return Err(NetworkError::DimensionMismatch {
                what: "internal voltage vector".to_string(),
                expected: self.attachments.len(),
                got: e.len(),
            });
        }
        let s = self.ordering.source_count();
        let mut out = vec![XYPair::ZERO; s];
        for (row, u) in out.iter_mut().enumerate() {
            let mut acc = XYPair::ZERO;
            for (col, ek) in e.iter().enumerate() {
                let w = self.divider[(row, col)];
                acc.x += w * ek.x;
                acc.y += w * ek.y;
            }
            *u = acc;
        }
        Ok(out)
    }

    /// Recover the eliminated intermediate voltages from the source-node
    /// terminal voltages.
    pub fn intermediate_voltages(&self, u_source: &[XYPair]) -> Result<Vec<XYPair>, NetworkError> {
        let s = self.ordering.source_count();
        if u_source.len() != s {
            return Err(NetworkError::DimensionMismatch {
                what: "source terminal voltage vector".to_string(),
                expected: s,
                got: u_source.len(),
            });
        }
        let m = self.ordering.intermediate_count();
        let mut out = vec![XYPair::ZERO; m];
        for (row, um) in out.iter_mut().enumerate() {
            let mut acc = XYPair::ZERO;
            for (col, u) in u_source.iter().enumerate() {
                let w = self.int_recovery[(row, col)];
                acc.x += w * u.x;
                acc.y += w * u.y;
            }
            *um = acc;
        }
        Ok(out)
    }
}

/// Kirchhoff boundary condition: the slack injection balances every
/// other source current, `i_g = −(Σ i_vsc + Σ i_load)` per axis.
pub fn slack_injection(vsc_currents: &[XYPair], load_currents: &[XYPair]) -> XYPair {
    let mut sum = XYPair::ZERO;
    for i in vsc_currents.iter().chain(load_currents) {
        sum += *i;
    }
    -sum
}

/// Count the differential and algebraic variables of a case:
/// differential states come from the devices (six per VSC, two per
/// load), algebraic variables are the two terminal-voltage components
/// of every source node plus the two slack-injection boundary
/// conditions.
pub fn dae_counts(case: &NetworkCase) -> (usize, usize) {
    let mut n_diff = 0;
    let mut source_nodes = 0;
    for node in &case.nodes {
        if !node.attachments.is_empty() {
            source_nodes += 1;
        }
        for dev in &node.attachments {
            if let Some(params) = case.devices.get(dev) {
                n_diff += params.state_dim();
            }
        }
    }
    (n_diff, 2 * source_nodes + 2)
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("node {node:?} references unknown device {device:?}")]
    UnknownDevice { node: String, device: String },
    #[error("{element}: inductance must be > 0, got {value}")]
    NonpositiveInductance { element: String, value: f64 },
    #[error("duplicate branch between {from:?} and {to:?}; combine parallel branches first")]
    DuplicateBranch { from: String, to: String },
    #[error("branch connects node {node:?} to itself")]
    SelfLoopBranch { node: String },
    #[error("branch {branch}: unknown endpoint node {node:?}")]
    UnknownBranchEndpoint { branch: String, node: String },
    #[error("node(s) {nodes} unreachable from any source attachment")]
    DisconnectedNode { nodes: String },
    #[error("intermediate-node block is singular (floating intermediate island)")]
    SingularIntermediateBlock,
    #[error("{what} is singular")]
    SingularSystem { what: String },
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
}

impl NetworkError {
    pub fn kind(&self) -> &'static str {
        match self {
            NetworkError::UnknownDevice { .. } => "UnknownDevice",
            NetworkError::NonpositiveInductance { .. } => "NonpositiveInductance",
            NetworkError::DuplicateBranch { .. } => "DuplicateBranch",
            NetworkError::SelfLoopBranch { .. } => "SelfLoopBranch",
            NetworkError::UnknownBranchEndpoint { .. } => "UnknownBranchEndpoint",
            NetworkError::DisconnectedNode { .. } => "DisconnectedNode",
            NetworkError::SingularIntermediateBlock => "SingularIntermediateBlock",
            NetworkError::SingularSystem { .. } => "SingularSystem",
            NetworkError::DimensionMismatch { .. } => "DimensionMismatch",
        }
    }
}
