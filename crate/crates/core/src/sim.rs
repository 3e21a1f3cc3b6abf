//! Time-domain integration, equilibrium initialization and events.
//!
//! Two simulators integrate the same case:
//!
//! * [`simulate_reduced`] — the production model. Device states are the
//!   only differential variables; at every derivative evaluation the
//!   source-bus terminal voltages come instantaneously from the divider
//!   matrix of the Kron-reduced network.
//! * [`simulate_reference`] — the full-branch-state verification model.
//!   Every inductor current (lines, filters, loads, the slack branch)
//!   is integrated individually and the bus voltages are solved from
//!   the unreduced nodal system each evaluation. It shares the raw
//!   admittance assembly with the reduced path but none of the
//!   reduction linear algebra, so agreement between the two is a real
//!   cross-check, not a tautology.
//!
//! Both use fixed-step classical Runge-Kutta. Events snap to step
//! boundaries. [`find_equilibrium`] locates the operating point by a
//! damped Newton iteration on the reduced-model derivative with a
//! finite-difference Jacobian, and also provides consistent branch
//! currents to start the reference simulator on its constraint
//! manifold.

use crate::case::{DeviceParams, Event, NetworkCase, SimConfig};
use crate::device::{inductor_rate, VscParams, VscState};
use crate::network::{slack_injection, FullAdmittance, NetworkError, ReducedNetwork};
use crate::timeseries::TimeSeries;
use crate::xy::{xy_to_dq, XYPair};
use nalgebra::{DMatrix, DVector, Dyn, LU};
use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

/// Maximum node-current-sum residual accepted in a user-supplied
/// reference-model initial state.
pub const KCL_INIT_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// state layout

/// Maps `(device id, state name)` pairs — joined as `device.state`, the
/// same strings used for CSV columns — onto offsets in the flat state
/// vector.
#[derive(Debug, Clone)]
pub struct StateLayout {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl StateLayout {
    fn from_names(names: Vec<String>) -> StateLayout {
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        StateLayout { names, index }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn offset(&self, device: &str, state: &str) -> Option<usize> {
        self.index.get(&format!("{device}.{state}")).copied()
    }

    pub fn offset_of(&self, full_name: &str) -> Option<usize> {
        self.index.get(full_name).copied()
    }
}

/// A flat state snapshot with its layout.
#[derive(Debug, Clone)]
pub struct SimState {
    pub time: f64,
    pub values: DVector<f64>,
    pub layout: Arc<StateLayout>,
}

impl SimState {
    pub fn get(&self, device: &str, state: &str) -> Option<f64> {
        self.layout.offset(device, state).map(|i| self.values[i])
    }
}

/// Result of the equilibrium search.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub state: SimState,
    /// Final `‖f‖∞` of the reduced-model derivative.
    pub residual: f64,
    pub iterations: usize,
}

// ---------------------------------------------------------------------------
// events

/// Check whether `field` names an event-adjustable parameter of the
/// device. Inductances are deliberately not adjustable: they are baked
/// into the network matrices.
pub(crate) fn event_field_exists(params: &DeviceParams, field: &str) -> bool {
    match params {
        DeviceParams::Vsc(_) => matches!(
            field,
            "id_ref" | "iq_ref" | "kp_acc" | "ki_acc" | "kp_pll" | "ki_pll"
        ),
        DeviceParams::Load(_) => field == "r_load",
        DeviceParams::Slack(_) => matches!(field, "ug_x" | "ug_y"),
    }
}

fn apply_field(params: &mut DeviceParams, target: &str, field: &str, value: f64) -> Result<(), EventError> {
    let unknown = || EventError::UnknownField {
        target: target.to_string(),
        field: field.to_string(),
    };
    match params {
        DeviceParams::Vsc(p) => match field {
            "id_ref" => p.id_ref = value,
            "iq_ref" => p.iq_ref = value,
            "kp_acc" => p.kp_acc = value,
            "ki_acc" => p.ki_acc = value,
            "kp_pll" => p.kp_pll = value,
            "ki_pll" => p.ki_pll = value,
            "lf" => {
                return Err(EventError::FieldNotAdjustable {
                    target: target.to_string(),
                    field: field.to_string(),
                })
            }
            _ => return Err(unknown()),
        },
        DeviceParams::Load(p) => match field {
            "r_load" => p.r_load = value,
            "l_load" => {
                return Err(EventError::FieldNotAdjustable {
                    target: target.to_string(),
                    field: field.to_string(),
                })
            }
            _ => return Err(unknown()),
        },
        DeviceParams::Slack(p) => match field {
            "ug_x" => p.u_g.x = value,
            "ug_y" => p.u_g.y = value,
            "lg" => {
                return Err(EventError::FieldNotAdjustable {
                    target: target.to_string(),
                    field: field.to_string(),
                })
            }
            _ => return Err(unknown()),
        },
    }
    Ok(())
}

/// Pure form of event application: returns the updated parameter set,
/// leaving integrator states untouched by definition.
pub fn apply_event(params: &DeviceParams, event: &Event) -> Result<DeviceParams, EventError> {
    let mut updated = params.clone();
    apply_field(&mut updated, &event.target, &event.field, event.value)?;
    Ok(updated)
}

/// Sort events by time (stable, so later-listed wins ties) and report
/// schedule oddities: events past the horizon never apply, and
/// same-time writes to the same field are shadowed by the last one.
pub fn plan_events(events: &[Event], t_end: f64) -> (Vec<Event>, Vec<String>) {
    let mut warnings = Vec::new();
    let mut kept: Vec<Event> = Vec::new();
    for event in events {
        if event.time > t_end {
            warnings.push(format!(
                "event at t={} on {}.{} is beyond t_end={} and will never apply",
                event.time, event.target, event.field, t_end
            ));
        } else {
            kept.push(event.clone());
        }
    }
    kept.sort_by(|a, b| a.time.total_cmp(&b.time));
    for pair in kept.windows(2) {
        if pair[0].time == pair[1].time
            && pair[0].target == pair[1].target
            && pair[0].field == pair[1].field
        {
            warnings.push(format!(
                "two events at t={} both set {}.{}; the later-listed value ({}) wins",
                pair[0].time, pair[0].target, pair[0].field, pair[1].value
            ));
        }
    }
    (kept, warnings)
}

// ---------------------------------------------------------------------------
// integrator

/// One classical fixed-step Runge-Kutta step.
pub fn step_rk4<F>(
    f: &mut F,
    state: &DVector<f64>,
    t: f64,
    dt: f64,
) -> Result<DVector<f64>, SimError>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let check = |k: &DVector<f64>, at: f64| {
        if k.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(SimError::NonFiniteDerivative { time: at })
        }
    };
    let k1 = f(t, state);
    check(&k1, t)?;
    let k2 = f(t + 0.5 * dt, &(state + &k1 * (0.5 * dt)));
    check(&k2, t + 0.5 * dt)?;
    let k3 = f(t + 0.5 * dt, &(state + &k2 * (0.5 * dt)));
    check(&k3, t + 0.5 * dt)?;
    let k4 = f(t + dt, &(state + &k3 * dt));
    check(&k4, t + dt)?;
    Ok(state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

struct Rk4Scratch {
    k1: DVector<f64>,
    k2: DVector<f64>,
    k3: DVector<f64>,
    k4: DVector<f64>,
    tmp: DVector<f64>,
}

impl Rk4Scratch {
    fn new(dim: usize) -> Rk4Scratch {
        Rk4Scratch {
            k1: DVector::zeros(dim),
            k2: DVector::zeros(dim),
            k3: DVector::zeros(dim),
            k4: DVector::zeros(dim),
            tmp: DVector::zeros(dim),
        }
    }

    /// Allocation-free step used by the simulation drivers.
    fn step<M: Model>(&mut self, model: &mut M, t: f64, dt: f64, x: &mut DVector<f64>) {
        model.derivative(t, x, &mut self.k1);
        self.tmp.copy_from(x);
        self.tmp.axpy(0.5 * dt, &self.k1, 1.0);
        model.derivative(t + 0.5 * dt, &self.tmp, &mut self.k2);
        self.tmp.copy_from(x);
        self.tmp.axpy(0.5 * dt, &self.k2, 1.0);
        model.derivative(t + 0.5 * dt, &self.tmp, &mut self.k3);
        self.tmp.copy_from(x);
        self.tmp.axpy(dt, &self.k3, 1.0);
        model.derivative(t + dt, &self.tmp, &mut self.k4);
        x.axpy(dt / 6.0, &self.k1, 1.0);
        x.axpy(dt / 3.0, &self.k2, 1.0);
        x.axpy(dt / 3.0, &self.k3, 1.0);
        x.axpy(dt / 6.0, &self.k4, 1.0);
    }
}

// ---------------------------------------------------------------------------
// device bookkeeping shared by both models

#[derive(Debug, Clone)]
struct DeviceEntry {
    id: String,
    params: DeviceParams,
    /// Row of the attachment's bus in the network ordering.
    node_row: usize,
    /// Offset of the device's states in the flat vector. For the slack
    /// this points at its branch-current pair in the reference layout
    /// and is unused in the reduced layout.
    offset: usize,
    /// `1/L` of the attachment.
    admittance: f64,
}

fn read_vsc(x: &DVector<f64>, offset: usize) -> VscState {
    VscState {
        i: XYPair::new(x[offset], x[offset + 1]),
        acc_xd: x[offset + 2],
        acc_xq: x[offset + 3],
        pll_xi: x[offset + 4],
        pll_delta: x[offset + 5],
    }
}

/// Internal voltages excluding feedforward; this is the part that does
/// not depend on terminal voltages and therefore feeds the network.
fn fill_internal_core(
    entries: &[DeviceEntry],
    x: &DVector<f64>,
    omega0: f64,
    out: &mut [XYPair],
) {
    for (k, entry) in entries.iter().enumerate() {
        out[k] = match &entry.params {
            DeviceParams::Vsc(p) => {
                let state = read_vsc(x, entry.offset);
                p.internal_voltage_core(&state, omega0)
            }
            DeviceParams::Load(p) => {
                XYPair::new(x[entry.offset], x[entry.offset + 1]) * -p.r_load
            }
            DeviceParams::Slack(p) => p.u_g,
        };
    }
}

/// The six derived VSC signals recorded next to the raw states:
/// local-frame currents, the full internal voltage, and the two phase
/// definitions relative to the slack angle.
fn vsc_record_signals(
    p: &VscParams,
    state: &VscState,
    u_t: XYPair,
    omega0: f64,
    ug_angle: f64,
) -> [f64; 6] {
    let (i_d, i_q) = xy_to_dq(state.i, state.pll_delta);
    let mut e = p.internal_voltage_core(state, omega0);
    if p.feedforward {
        e += u_t;
    }
    [
        i_d,
        i_q,
        e.x,
        e.y,
        state.pll_delta - ug_angle,
        e.angle() - ug_angle,
    ]
}

fn device_state_names(entries: &[DeviceEntry]) -> Vec<String> {
    let mut names = Vec::new();
    for entry in entries {
        match entry.params {
            DeviceParams::Vsc(_) => {
                for n in VscState::NAMES {
                    names.push(format!("{}.{}", entry.id, n));
                }
            }
            DeviceParams::Load(_) => {
                names.push(format!("{}.i_x", entry.id));
                names.push(format!("{}.i_y", entry.id));
            }
            DeviceParams::Slack(_) => {}
        }
    }
    names
}

/// Build the per-attachment device entries. Offsets are assigned in
/// attachment order: six slots per VSC, two per load, none for the
/// slack (the caller decides where slack branch states live).
fn build_entries(case: &NetworkCase, full: &FullAdmittance) -> Vec<DeviceEntry> {
    let mut entries = Vec::new();
    let mut offset = 0;
    for att in full.attachments() {
        let params = case
            .devices
            .get(&att.device)
            .expect("assembly resolved all devices")
            .clone();
        let dim = params.state_dim();
        entries.push(DeviceEntry {
            id: att.device.clone(),
            params,
            node_row: att.node_row,
            offset,
            admittance: att.admittance,
        });
        offset += dim;
    }
    entries
}

fn slack_entry(entries: &[DeviceEntry]) -> &DeviceEntry {
    entries
        .iter()
        .find(|e| matches!(e.params, DeviceParams::Slack(_)))
        .expect("validated cases carry exactly one slack")
}

fn apply_event_to_entries(entries: &mut [DeviceEntry], event: &Event) -> Result<(), EventError> {
    let entry = entries
        .iter_mut()
        .find(|e| e.id == event.target)
        .ok_or_else(|| EventError::UnknownTarget {
            target: event.target.clone(),
        })?;
    apply_field(&mut entry.params, &event.target, &event.field, event.value)
}

// ---------------------------------------------------------------------------
// the two models

trait Model {
    fn derivative(&mut self, t: f64, x: &DVector<f64>, out: &mut DVector<f64>);
    fn signal_names(&self) -> Vec<String>;
    fn record(&mut self, x: &DVector<f64>, out: &mut Vec<f64>);
    fn apply_event(&mut self, event: &Event) -> Result<(), EventError>;
}

/// Reduced model: device ODEs plus the instantaneous divider map.
struct ReducedModel {
    omega0: f64,
    entries: Vec<DeviceEntry>,
    layout: Arc<StateLayout>,
    net: ReducedNetwork,
    /// Effective divider: equals `M` without feedforward; with
    /// feedforward enabled on some converter the algebraic loop
    /// `u = M(a + S·u)` is pre-solved into `u = (I − M·S)⁻¹·M·a`.
    eff_divider: DMatrix<f64>,
    ug_angle: f64,
    e_buf: Vec<XYPair>,
    u_buf: Vec<XYPair>,
}

impl ReducedModel {
    fn new(case: &NetworkCase) -> Result<ReducedModel, SimError> {
        let full = FullAdmittance::assemble(case)?;
        let net = ReducedNetwork::reduce(&full)?;
        let entries = build_entries(case, &full);
        let layout = Arc::new(StateLayout::from_names(device_state_names(&entries)));
        let eff_divider = effective_divider(&net, &entries)?;
        let ug_angle = match &slack_entry(&entries).params {
            DeviceParams::Slack(p) => p.u_g.angle(),
            _ => unreachable!(),
        };
        let s = net.ordering().source_count();
        let a = entries.len();
        Ok(ReducedModel {
            omega0: case.omega0(),
            entries,
            layout,
            net,
            eff_divider,
            ug_angle,
            e_buf: vec![XYPair::ZERO; a],
            u_buf: vec![XYPair::ZERO; s],
        })
    }

    /// Fill `e_buf` with core internal voltages and `u_buf` with the
    /// resulting source-bus terminal voltages.
    fn solve_terminal(&mut self, x: &DVector<f64>) {
        fill_internal_core(&self.entries, x, self.omega0, &mut self.e_buf);
        for (row, u) in self.u_buf.iter_mut().enumerate() {
            let mut acc = XYPair::ZERO;
            for (col, e) in self.e_buf.iter().enumerate() {
                let w = self.eff_divider[(row, col)];
                acc.x += w * e.x;
                acc.y += w * e.y;
            }
            *u = acc;
        }
    }
}

/// `(I − M·S)⁻¹·M` where `S` marks feedforward converters; reduces to a
/// clone of `M` when no converter uses feedforward. The feedforward
/// rotation blocks collapse to identity because mapping the local-frame
/// terminal voltage back to the common frame undoes the PLL rotation.
fn effective_divider(
    net: &ReducedNetwork,
    entries: &[DeviceEntry],
) -> Result<DMatrix<f64>, SimError> {
    let m = net.divider();
    let s = net.ordering().source_count();
    let any_ff = entries
        .iter()
        .any(|e| matches!(&e.params, DeviceParams::Vsc(p) if p.feedforward));
    if !any_ff {
        return Ok(m.clone());
    }
    let mut selection = DMatrix::zeros(entries.len(), s);
    for (k, entry) in entries.iter().enumerate() {
        if matches!(&entry.params, DeviceParams::Vsc(p) if p.feedforward) {
            selection[(k, entry.node_row)] = 1.0;
        }
    }
    let system = DMatrix::identity(s, s) - m * &selection;
    system
        .lu()
        .solve(m)
        .ok_or_else(|| SimError::Network(NetworkError::SingularSystem {
            what: "feedforward fixed-point system".to_string(),
        }))
}

impl Model for ReducedModel {
    fn derivative(&mut self, _t: f64, x: &DVector<f64>, out: &mut DVector<f64>) {
        self.solve_terminal(x);
        for entry in &self.entries {
            let u_t = self.u_buf[entry.node_row];
            match &entry.params {
                DeviceParams::Vsc(p) => {
                    let state = read_vsc(x, entry.offset);
                    let d = p.derivative(&state, u_t, self.omega0);
                    d.write_to(&mut out.as_mut_slice()[entry.offset..entry.offset + 6]);
                }
                DeviceParams::Load(p) => {
                    let i = XYPair::new(x[entry.offset], x[entry.offset + 1]);
                    let e = i * -p.r_load;
                    let di = inductor_rate(e - u_t, i, p.l_load, self.omega0);
                    out[entry.offset] = di.x;
                    out[entry.offset + 1] = di.y;
                }
                DeviceParams::Slack(_) => {}
            }
        }
    }

    fn signal_names(&self) -> Vec<String> {
        let mut names = self.layout.names().to_vec();
        let slack = slack_entry(&self.entries);
        names.push(format!("{}.i_x", slack.id));
        names.push(format!("{}.i_y", slack.id));
        for id in self.net.ordering().source_ids() {
            names.push(format!("node{id}.ut_x"));
            names.push(format!("node{id}.ut_y"));
        }
        for entry in &self.entries {
            if matches!(entry.params, DeviceParams::Vsc(_)) {
                for n in ["i_d", "i_q", "e_x", "e_y", "phi", "e_angle"] {
                    names.push(format!("{}.{}", entry.id, n));
                }
            }
        }
        names
    }

    fn record(&mut self, x: &DVector<f64>, out: &mut Vec<f64>) {
        self.solve_terminal(x);
        out.extend(x.iter());
        // slack injection from the KCL boundary condition
        let mut vsc_currents = Vec::new();
        let mut load_currents = Vec::new();
        for entry in &self.entries {
            match entry.params {
                DeviceParams::Vsc(_) => {
                    vsc_currents.push(XYPair::new(x[entry.offset], x[entry.offset + 1]))
                }
                DeviceParams::Load(_) => {
                    load_currents.push(XYPair::new(x[entry.offset], x[entry.offset + 1]))
                }
                DeviceParams::Slack(_) => {}
            }
        }
        let i_g = slack_injection(&vsc_currents, &load_currents);
        out.push(i_g.x);
        out.push(i_g.y);
        for u in &self.u_buf {
            out.push(u.x);
            out.push(u.y);
        }
        for entry in &self.entries {
            if let DeviceParams::Vsc(p) = &entry.params {
                let state = read_vsc(x, entry.offset);
                let u_t = self.u_buf[entry.node_row];
                out.extend(vsc_record_signals(p, &state, u_t, self.omega0, self.ug_angle));
            }
        }
    }

    fn apply_event(&mut self, event: &Event) -> Result<(), EventError> {
        apply_event_to_entries(&mut self.entries, event)
    }
}

/// Reference model: every branch current is a state; node voltages come
/// from a factorization of the full unreduced admittance matrix.
struct ReferenceModel {
    omega0: f64,
    entries: Vec<DeviceEntry>,
    layout: Arc<StateLayout>,
    full: FullAdmittance,
    lu: LU<f64, Dyn, Dyn>,
    /// Offset of the first line-branch state.
    line_base: usize,
    /// Offset of the slack branch-current pair.
    slack_offset: usize,
    ug_angle: f64,
    e_buf: Vec<XYPair>,
    rhs: DMatrix<f64>,
    u_all: Vec<XYPair>,
}

impl ReferenceModel {
    fn new(case: &NetworkCase) -> Result<ReferenceModel, SimError> {
        let full = FullAdmittance::assemble(case)?;
        let mut entries = build_entries(case, &full);
        let mut names = device_state_names(&entries);
        let line_base = names.len();
        for &(from, to, _) in full.branches() {
            let fid = full.ordering().id_of(from);
            let tid = full.ordering().id_of(to);
            names.push(format!("branch{fid}-{tid}.i_x"));
            names.push(format!("branch{fid}-{tid}.i_y"));
        }
        let slack_offset = names.len();
        let slack_id = slack_entry(&entries).id.clone();
        names.push(format!("{slack_id}.i_x"));
        names.push(format!("{slack_id}.i_y"));
        // the slack entry owns its branch-current pair in this layout
        for entry in entries.iter_mut() {
            if entry.id == slack_id {
                entry.offset = slack_offset;
            }
        }
        let layout = Arc::new(StateLayout::from_names(names));

        // feedforward converters make the nodal right-hand side depend on
        // the voltages themselves; fold that into the factored matrix
        let n = full.ordering().node_count();
        let mut matrix = full.y().clone();
        for entry in &entries {
            if matches!(&entry.params, DeviceParams::Vsc(p) if p.feedforward) {
                matrix[(entry.node_row, entry.node_row)] -= entry.admittance;
            }
        }
        let lu = matrix.lu();
        if !lu.is_invertible() {
            return Err(SimError::Network(NetworkError::SingularSystem {
                what: "reference nodal system".to_string(),
            }));
        }

        let ug_angle = match &slack_entry(&entries).params {
            DeviceParams::Slack(p) => p.u_g.angle(),
            _ => unreachable!(),
        };
        let a = entries.len();
        Ok(ReferenceModel {
            omega0: case.omega0(),
            entries,
            layout,
            full,
            lu,
            line_base,
            slack_offset,
            ug_angle,
            e_buf: vec![XYPair::ZERO; a],
            rhs: DMatrix::zeros(n, 2),
            u_all: vec![XYPair::ZERO; n],
        })
    }

    /// Solve the unreduced nodal system for all bus voltages.
    fn solve_voltages(&mut self, x: &DVector<f64>) {
        fill_internal_core(&self.entries, x, self.omega0, &mut self.e_buf);
        self.rhs.fill(0.0);
        for (entry, e) in self.entries.iter().zip(&self.e_buf) {
            self.rhs[(entry.node_row, 0)] += entry.admittance * e.x;
            self.rhs[(entry.node_row, 1)] += entry.admittance * e.y;
        }
        let solved = self.lu.solve(&self.rhs).expect("factorization checked at build");
        for (row, u) in self.u_all.iter_mut().enumerate() {
            *u = XYPair::new(solved[(row, 0)], solved[(row, 1)]);
        }
    }

    /// Net current inflow per node: attachment injections plus signed
    /// line-branch flows. Zero (to integrator accuracy) on the exact
    /// constraint manifold.
    fn kcl_residuals(&self, x: &DVector<f64>) -> Vec<XYPair> {
        let n = self.full.ordering().node_count();
        let mut res = vec![XYPair::ZERO; n];
        for entry in &self.entries {
            res[entry.node_row] += XYPair::new(x[entry.offset], x[entry.offset + 1]);
        }
        for (k, &(from, to, _)) in self.full.branches().iter().enumerate() {
            let off = self.line_base + 2 * k;
            let i = XYPair::new(x[off], x[off + 1]);
            res[from] -= i;
            res[to] += i;
        }
        res
    }
}

impl Model for ReferenceModel {
    fn derivative(&mut self, _t: f64, x: &DVector<f64>, out: &mut DVector<f64>) {
        self.solve_voltages(x);
        for entry in &self.entries {
            let u_t = self.u_all[entry.node_row];
            match &entry.params {
                DeviceParams::Vsc(p) => {
                    let state = read_vsc(x, entry.offset);
                    let d = p.derivative(&state, u_t, self.omega0);
                    d.write_to(&mut out.as_mut_slice()[entry.offset..entry.offset + 6]);
                }
                DeviceParams::Load(p) => {
                    let i = XYPair::new(x[entry.offset], x[entry.offset + 1]);
                    let e = i * -p.r_load;
                    let di = inductor_rate(e - u_t, i, p.l_load, self.omega0);
                    out[entry.offset] = di.x;
                    out[entry.offset + 1] = di.y;
                }
                DeviceParams::Slack(p) => {
                    let i = XYPair::new(x[entry.offset], x[entry.offset + 1]);
                    let di = inductor_rate(p.u_g - u_t, i, p.lg, self.omega0);
                    out[entry.offset] = di.x;
                    out[entry.offset + 1] = di.y;
                }
            }
        }
        for (k, &(from, to, l)) in self.full.branches().iter().enumerate() {
            let off = self.line_base + 2 * k;
            let i = XYPair::new(x[off], x[off + 1]);
            let di = inductor_rate(self.u_all[from] - self.u_all[to], i, l, self.omega0);
            out[off] = di.x;
            out[off + 1] = di.y;
        }
    }

    fn signal_names(&self) -> Vec<String> {
        let mut names = self.layout.names().to_vec();
        for id in self.full.ordering().source_ids() {
            names.push(format!("node{id}.ut_x"));
            names.push(format!("node{id}.ut_y"));
        }
        for entry in &self.entries {
            if matches!(entry.params, DeviceParams::Vsc(_)) {
                for n in ["i_d", "i_q", "e_x", "e_y", "phi", "e_angle"] {
                    names.push(format!("{}.{}", entry.id, n));
                }
            }
        }
        for id in self.full.ordering().intermediate_ids() {
            names.push(format!("node{id}.kcl_x"));
            names.push(format!("node{id}.kcl_y"));
        }
        names
    }

    fn record(&mut self, x: &DVector<f64>, out: &mut Vec<f64>) {
        self.solve_voltages(x);
        out.extend(x.iter());
        for row in 0..self.full.ordering().source_count() {
            out.push(self.u_all[row].x);
            out.push(self.u_all[row].y);
        }
        for entry in &self.entries {
            if let DeviceParams::Vsc(p) = &entry.params {
                let state = read_vsc(x, entry.offset);
                let u_t = self.u_all[entry.node_row];
                out.extend(vsc_record_signals(p, &state, u_t, self.omega0, self.ug_angle));
            }
        }
        let res = self.kcl_residuals(x);
        let s = self.full.ordering().source_count();
        for r in &res[s..] {
            out.push(r.x);
            out.push(r.y);
        }
    }

    fn apply_event(&mut self, event: &Event) -> Result<(), EventError> {
        apply_event_to_entries(&mut self.entries, event)
    }
}

// ---------------------------------------------------------------------------
// shared simulation driver

fn check_config(cfg: &SimConfig) -> Result<(), SimError> {
    if !(cfg.dt.is_finite() && cfg.dt > 0.0) {
        return Err(SimError::InvalidConfig {
            detail: format!("dt must be > 0, got {}", cfg.dt),
        });
    }
    if !(cfg.t_end.is_finite() && cfg.t_end > 0.0) {
        return Err(SimError::InvalidConfig {
            detail: format!("t_end must be > 0, got {}", cfg.t_end),
        });
    }
    if cfg.record_stride == 0 {
        return Err(SimError::InvalidConfig {
            detail: "record_stride must be >= 1".to_string(),
        });
    }
    Ok(())
}

fn run_simulation<M: Model>(
    model: &mut M,
    init: &DVector<f64>,
    cfg: &SimConfig,
    events: &[Event],
) -> Result<TimeSeries, SimError> {
    check_config(cfg)?;
    let n_steps = (cfg.t_end / cfg.dt).round() as usize;
    let (schedule, _) = plan_events(events, cfg.t_end);

    let mut ts = TimeSeries::new(model.signal_names());
    let mut x = init.clone();
    let mut scratch = Rk4Scratch::new(x.len());
    let mut row = Vec::with_capacity(ts.names().len());
    let mut next_event = 0;

    for step in 0..=n_steps {
        let t = step as f64 * cfg.dt;
        while next_event < schedule.len() && schedule[next_event].time <= t {
            model.apply_event(&schedule[next_event])?;
            next_event += 1;
        }
        if step % cfg.record_stride == 0 {
            row.clear();
            model.record(&x, &mut row);
            ts.push_sample(t, &row);
        }
        if step < n_steps {
            scratch.step(model, t, cfg.dt, &mut x);
            if !x.iter().all(|v| v.is_finite()) {
                return Err(SimError::NonFiniteState {
                    time: (step + 1) as f64 * cfg.dt,
                });
            }
        }
    }
    Ok(ts)
}

fn check_init_layout(init: &SimState, layout: &StateLayout) -> Result<(), SimError> {
    if init.layout.names() != layout.names() {
        return Err(SimError::LayoutMismatch {
            detail: format!(
                "initial state has {} states, model expects {}",
                init.layout.len(),
                layout.len()
            ),
        });
    }
    Ok(())
}

/// Integrate the reduced (divider-network) model. Starts from
/// [`find_equilibrium`] unless an initial state is supplied.
pub fn simulate_reduced(
    case: &NetworkCase,
    cfg: &SimConfig,
    init: Option<&SimState>,
) -> Result<TimeSeries, SimError> {
    let mut model = ReducedModel::new(case)?;
    let x0 = match init {
        Some(state) => {
            check_init_layout(state, &model.layout)?;
            state.values.clone()
        }
        None => find_equilibrium(case)?.state.values,
    };
    run_simulation(&mut model, &x0, cfg, &case.events)
}

/// Integrate the full-branch-state reference model. Starts from the
/// equilibrium back-substitution unless an initial state is supplied;
/// either way the initial branch currents must satisfy Kirchhoff's
/// current law at every node to within [`KCL_INIT_TOL`].
pub fn simulate_reference(
    case: &NetworkCase,
    cfg: &SimConfig,
    init: Option<&SimState>,
) -> Result<TimeSeries, SimError> {
    let mut model = ReferenceModel::new(case)?;
    let x0 = match init {
        Some(state) => {
            check_init_layout(state, &model.layout)?;
            state.values.clone()
        }
        None => reference_initial_state(case)?.values,
    };
    let worst = model
        .kcl_residuals(&x0)
        .iter()
        .map(|r| r.x.abs().max(r.y.abs()))
        .fold(0.0, f64::max);
    if worst > KCL_INIT_TOL {
        return Err(SimError::InconsistentInitialState { residual: worst });
    }
    run_simulation(&mut model, &x0, cfg, &case.events)
}

// ---------------------------------------------------------------------------
// equilibrium

/// Forward-difference Jacobian with the solver's step rule
/// `h_j = 1e-7·(1 + |x_j|)`.
pub fn fd_jacobian<F>(f: &mut F, x: &DVector<f64>) -> DMatrix<f64>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let f0 = f(x);
    let mut jac = DMatrix::zeros(f0.len(), x.len());
    let mut xp = x.clone();
    for col in 0..x.len() {
        let h = 1e-7 * (1.0 + x[col].abs());
        xp[col] = x[col] + h;
        let fp = f(&xp);
        for row in 0..f0.len() {
            jac[(row, col)] = (fp[row] - f0[row]) / h;
        }
        xp[col] = x[col];
    }
    jac
}

fn norm_inf(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Newton iteration with halving-damped steps on the reduced-model
/// derivative vector.
fn newton(
    model: &mut ReducedModel,
    mut x: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, f64, usize), SimError> {
    let dim = x.len();
    let mut fx = DVector::zeros(dim);
    model.derivative(0.0, &x, &mut fx);
    let mut res = norm_inf(&fx);
    let mut iterations = 0;

    while res >= tol {
        if iterations >= max_iter || !res.is_finite() {
            return Err(SimError::NewtonDivergence {
                residual: res,
                iterations,
            });
        }
        let jac = {
            let mut eval = |v: &DVector<f64>| {
                let mut out = DVector::zeros(dim);
                model.derivative(0.0, v, &mut out);
                out
            };
            fd_jacobian(&mut eval, &x)
        };
        let step = jac.lu().solve(&(-&fx)).ok_or(SimError::NewtonDivergence {
            residual: res,
            iterations,
        })?;

        // halving line search on the residual norm
        let mut lambda = 1.0;
        loop {
            let candidate = &x + &step * lambda;
            let mut f_new = DVector::zeros(dim);
            model.derivative(0.0, &candidate, &mut f_new);
            let res_new = norm_inf(&f_new);
            if res_new.is_finite() && res_new < res {
                x = candidate;
                fx = f_new;
                res = res_new;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                return Err(SimError::NewtonDivergence {
                    residual: res,
                    iterations,
                });
            }
        }
        iterations += 1;
    }
    Ok((x, res, iterations))
}

/// Find the operating point of the reduced model with event-free
/// (pre-event) parameters: a state where every device derivative
/// vanishes to within `sim.newton_tol`.
pub fn find_equilibrium(case: &NetworkCase) -> Result<Equilibrium, SimError> {
    let mut model = ReducedModel::new(case)?;

    // flat start: PLL angles on the grid voltage, converter currents at
    // their references, integrators preloaded with the grid magnitude
    let slack = slack_entry(&model.entries);
    let (ug_mag, ug_angle) = match &slack.params {
        DeviceParams::Slack(p) => (p.u_g.magnitude(), p.u_g.angle()),
        _ => unreachable!(),
    };
    let mut x0 = DVector::zeros(model.layout.len());
    for entry in &model.entries {
        if let DeviceParams::Vsc(p) = &entry.params {
            let i = crate::xy::dq_to_xy(p.id_ref, p.iq_ref, ug_angle);
            let state = VscState {
                i,
                acc_xd: ug_mag,
                acc_xq: 0.0,
                pll_xi: 0.0,
                pll_delta: ug_angle,
            };
            state.write_to(&mut x0.as_mut_slice()[entry.offset..entry.offset + 6]);
        }
    }

    let (values, residual, iterations) =
        newton(&mut model, x0, case.sim.newton_tol, case.sim.newton_max_iter)?;
    Ok(Equilibrium {
        state: SimState {
            time: 0.0,
            values,
            layout: model.layout.clone(),
        },
        residual,
        iterations,
    })
}

/// Extend a reduced-model equilibrium to the reference layout: line and
/// slack branch currents follow from setting the branch dynamics to
/// zero, `i_x = (u_f,y − u_t,y)/L`, `i_y = −(u_f,x − u_t,x)/L`.
pub fn reference_state_from_equilibrium(
    case: &NetworkCase,
    reduced: &SimState,
) -> Result<SimState, SimError> {
    let mut model = ReducedModel::new(case)?;
    check_init_layout(reduced, &model.layout)?;
    model.solve_terminal(&reduced.values);
    let u_int = model
        .net
        .intermediate_voltages(&model.u_buf)
        .map_err(SimError::Network)?;
    let mut u_all = model.u_buf.clone();
    u_all.extend(u_int);

    let reference = ReferenceModel::new(case)?;
    let mut values = DVector::zeros(reference.layout.len());
    values
        .as_mut_slice()[..reduced.values.len()]
        .copy_from_slice(reduced.values.as_slice());

    let steady = |drive_from: XYPair, drive_to: XYPair, l: f64| {
        XYPair::new(
            (drive_from.y - drive_to.y) / l,
            -(drive_from.x - drive_to.x) / l,
        )
    };
    for (k, &(from, to, l)) in reference.full.branches().iter().enumerate() {
        let i = steady(u_all[from], u_all[to], l);
        let off = reference.line_base + 2 * k;
        values[off] = i.x;
        values[off + 1] = i.y;
    }
    let slack = slack_entry(&reference.entries);
    if let DeviceParams::Slack(p) = &slack.params {
        let i = steady(p.u_g, u_all[slack.node_row], p.lg);
        values[reference.slack_offset] = i.x;
        values[reference.slack_offset + 1] = i.y;
    }

    Ok(SimState {
        time: reduced.time,
        values,
        layout: reference.layout.clone(),
    })
}

/// Equilibrium start state for the reference simulator.
pub fn reference_initial_state(case: &NetworkCase) -> Result<SimState, SimError> {
    let eq = find_equilibrium(case)?;
    reference_state_from_equilibrium(case, &eq.state)
}

/// Evaluate the reduced-model derivative vector at a state. This is the
/// function whose root [`find_equilibrium`] searches for.
pub fn reduced_derivative(case: &NetworkCase, state: &SimState) -> Result<DVector<f64>, SimError> {
    let mut model = ReducedModel::new(case)?;
    check_init_layout(state, &model.layout)?;
    let mut out = DVector::zeros(state.values.len());
    model.derivative(state.time, &state.values, &mut out);
    Ok(out)
}

/// Source-node terminal voltages of the reduced model at a state, as
/// `(node id, voltage)` pairs in network row order.
pub fn source_terminal_voltages(
    case: &NetworkCase,
    state: &SimState,
) -> Result<Vec<(String, XYPair)>, SimError> {
    let mut model = ReducedModel::new(case)?;
    check_init_layout(state, &model.layout)?;
    model.solve_terminal(&state.values);
    Ok(model
        .net
        .ordering()
        .source_ids()
        .iter()
        .zip(&model.u_buf)
        .map(|(id, u)| (id.clone(), *u))
        .collect())
}

/// Layout of the reduced-model state vector for a case.
pub fn reduced_layout(case: &NetworkCase) -> Result<Arc<StateLayout>, SimError> {
    Ok(ReducedModel::new(case)?.layout)
}

/// Layout of the reference-model state vector for a case.
pub fn reference_layout(case: &NetworkCase) -> Result<Arc<StateLayout>, SimError> {
    Ok(ReferenceModel::new(case)?.layout)
}

// ---------------------------------------------------------------------------
// errors

#[derive(Debug, Error)]
pub enum EventError {
    #[error("event targets unknown device {target:?}")]
    UnknownTarget { target: String },
    #[error("device {target:?} has no event-adjustable field {field:?}")]
    UnknownField { target: String, field: String },
    #[error("field {field:?} of {target:?} cannot be changed by an event")]
    FieldNotAdjustable { target: String, field: String },
}

impl EventError {
    pub fn kind(&self) -> &'static str {
        match self {
            EventError::UnknownTarget { .. } => "UnknownTarget",
            EventError::UnknownField { .. } => "UnknownField",
            EventError::FieldNotAdjustable { .. } => "FieldNotAdjustable",
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("non-finite derivative at t={time}")]
    NonFiniteDerivative { time: f64 },
    #[error("state became non-finite at t={time} (numerical blow-up)")]
    NonFiniteState { time: f64 },
    #[error("Newton iteration did not converge; final residual {residual:.3e} after {iterations} iteration(s)")]
    NewtonDivergence { residual: f64, iterations: usize },
    #[error("initial branch currents violate KCL; worst node residual {residual:.3e}")]
    InconsistentInitialState { residual: f64 },
    #[error("state layout mismatch: {detail}")]
    LayoutMismatch { detail: String },
    #[error("invalid simulation config: {detail}")]
    InvalidConfig { detail: String },
}

impl SimError {
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::Network(e) => e.kind(),
            SimError::Event(e) => e.kind(),
            SimError::NonFiniteDerivative { .. } => "NonFiniteDerivative",
            SimError::NonFiniteState { .. } => "NonFiniteState",
            SimError::NewtonDivergence { .. } => "NewtonDivergence",
            SimError::InconsistentInitialState { .. } => "InconsistentInitialState",
            SimError::LayoutMismatch { .. } => "LayoutMismatch",
            SimError::InvalidConfig { .. } => "InvalidConfig",
        }
    }
}
