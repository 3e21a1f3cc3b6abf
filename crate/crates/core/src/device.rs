//! Differential models of the source devices.
//!
//! Every device presents the same two faces to the rest of the engine:
//!
//! * an **internal voltage** `e` behind its series inductance — the
//!   quantity the algebraic network consumes, and
//! * a **derivative function** of its own states given the terminal
//!   voltage `u_t` of the bus it is attached to.
//!
//! The VSC carries a filter-current pair, two current-loop integrators
//! and a synchronous-reference-frame PLL (integrator + angle): six
//! states. An RL load carries its branch current pair: two states. The
//! slack (infinite bus) is a constant voltage behind `Lg` and has no
//! states of its own; in the reduced model its injection is recovered
//! algebraically from Kirchhoff's current law.
//!
//! Sign convention: every device current is the injection *into* the
//! network node. A load at steady state therefore absorbs power,
//! `u_t·i = −r_load·|i|² ≤ 0`.

use crate::xy::{dq_to_xy, xy_to_dq, XYPair};
use serde::{Deserialize, Serialize};
use thiserror::Error;

fn default_true() -> bool {
    true
}

/// Voltage-source converter: PI current control in the PLL's local dq
/// frame, internal voltage behind the filter inductance `lf`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VscParams {
    /// Filter inductance in pu.
    pub lf: f64,
    /// Current-loop PI gains.
    pub kp_acc: f64,
    pub ki_acc: f64,
    /// PLL PI gains, rad/s per pu volt.
    pub kp_pll: f64,
    pub ki_pll: f64,
    /// Cross-coupling compensation `±ω·lf·i` in the current loop.
    #[serde(default = "default_true")]
    pub decoupling: bool,
    /// Add the measured terminal voltage (in dq) to the current-loop
    /// output. Off by default: feedforward closes an algebraic loop
    /// through the network, which the simulators then resolve with a
    /// linear fixed-point solve.
    #[serde(default)]
    pub feedforward: bool,
    /// Use the PLL frequency estimate (its integrator state) instead of
    /// the nominal 1 pu in the decoupling terms.
    #[serde(default)]
    pub decoupling_pll_frequency: bool,
    /// dq-frame current references in pu.
    pub id_ref: f64,
    #[serde(default)]
    pub iq_ref: f64,
}

/// VSC differential states. `pll_delta` is kept unwrapped so phase
/// trajectories stay continuous.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VscState {
    /// Filter current in the common frame (injection into the node).
    pub i: XYPair,
    /// Current-loop integrator states (pu voltage).
    pub acc_xd: f64,
    pub acc_xq: f64,
    /// PLL integrator state (rad/s).
    pub pll_xi: f64,
    /// PLL angle relative to the common frame (rad).
    pub pll_delta: f64,
}

impl VscState {
    pub const NAMES: [&'static str; 6] = ["i_x", "i_y", "acc_xd", "acc_xq", "pll_xi", "pll_delta"];

    pub fn from_slice(v: &[f64]) -> VscState {
        VscState {
            i: XYPair::new(v[0], v[1]),
            acc_xd: v[2],
            acc_xq: v[3],
            pll_xi: v[4],
            pll_delta: v[5],
        }
    }

    pub fn write_to(&self, out: &mut [f64]) {
        out[0] = self.i.x;
        out[1] = self.i.y;
        out[2] = self.acc_xd;
        out[3] = self.acc_xq;
        out[4] = self.pll_xi;
        out[5] = self.pll_delta;
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DeviceError {
    #[error("terminal-voltage feedforward is enabled but no terminal voltage was supplied")]
    MissingFeedforwardInput,
}

impl VscParams {
    pub const STATE_DIM: usize = 6;

    /// pu frequency used by the decoupling terms.
    fn decoupling_omega_pu(&self, state: &VscState, omega0: f64) -> f64 {
        if self.decoupling_pll_frequency {
            // frequency estimate read from the PLL integrator; the
            // proportional path is an angle correction, not a frequency
            1.0 + state.pll_xi / omega0
        } else {
            1.0
        }
    }

    /// Current-loop output voltage in the local dq frame.
    ///
    /// `i_dq` is the measured converter current in the local frame.
    /// `u_t_dq` must be supplied iff feedforward is enabled.
    pub fn acc_output(
        &self,
        state: &VscState,
        i_dq: (f64, f64),
        u_t_dq: Option<(f64, f64)>,
        omega0: f64,
    ) -> Result<(f64, f64), DeviceError> {
        let (mut e_d, mut e_q) = self.acc_core(state, i_dq, omega0);
        if self.feedforward {
            let (u_d, u_q) = u_t_dq.ok_or(DeviceError::MissingFeedforwardInput)?;
            e_d += u_d;
            e_q += u_q;
        }
        Ok((e_d, e_q))
    }

    /// PI + decoupling part of the current-loop output, excluding the
    /// feedforward term. This is the contribution that does not depend
    /// on the terminal voltage.
    pub fn acc_core(&self, state: &VscState, i_dq: (f64, f64), omega0: f64) -> (f64, f64) {
        let (i_d, i_q) = i_dq;
        let err_d = self.id_ref - i_d;
        let err_q = self.iq_ref - i_q;
        let mut e_d = self.kp_acc * err_d + state.acc_xd;
        let mut e_q = self.kp_acc * err_q + state.acc_xq;
        if self.decoupling {
            let w = self.decoupling_omega_pu(state, omega0);
            e_d -= w * self.lf * i_q;
            e_q += w * self.lf * i_d;
        }
        (e_d, e_q)
    }

    /// Rates of the current-loop integrators.
    pub fn acc_rates(&self, i_dq: (f64, f64)) -> (f64, f64) {
        (
            self.ki_acc * (self.id_ref - i_dq.0),
            self.ki_acc * (self.iq_ref - i_dq.1),
        )
    }

    /// PLL rates `(d pll_delta/dt, d pll_xi/dt)` given the terminal
    /// voltage in the common frame.
    pub fn pll_rates(&self, state: &VscState, u_t: XYPair) -> (f64, f64) {
        let (_, u_tq) = xy_to_dq(u_t, state.pll_delta);
        (
            self.kp_pll * u_tq + state.pll_xi,
            self.ki_pll * u_tq,
        )
    }

    /// Internal voltage in the common frame, excluding the feedforward
    /// contribution; this is the network input that does not depend on
    /// the terminal voltage.
    pub fn internal_voltage_core(&self, state: &VscState, omega0: f64) -> XYPair {
        let i_dq = xy_to_dq(state.i, state.pll_delta);
        let (e_d, e_q) = self.acc_core(state, i_dq, omega0);
        dq_to_xy(e_d, e_q, state.pll_delta)
    }

    /// Internal voltage in the common frame. When feedforward is
    /// enabled the terminal voltage must be supplied; the feedforward
    /// term then adds exactly `u_t` (the local-frame rotation cancels).
    pub fn internal_voltage(
        &self,
        state: &VscState,
        u_t: Option<XYPair>,
        omega0: f64,
    ) -> Result<XYPair, DeviceError> {
        let core = self.internal_voltage_core(state, omega0);
        if self.feedforward {
            let u = u_t.ok_or(DeviceError::MissingFeedforwardInput)?;
            Ok(core + u)
        } else {
            Ok(core)
        }
    }

    /// Full state derivative given the terminal voltage of the bus.
    pub fn derivative(&self, state: &VscState, u_t: XYPair, omega0: f64) -> VscState {
        let i_dq = xy_to_dq(state.i, state.pll_delta);
        let (mut e_d, mut e_q) = self.acc_core(state, i_dq, omega0);
        if self.feedforward {
            let (u_d, u_q) = xy_to_dq(u_t, state.pll_delta);
            e_d += u_d;
            e_q += u_q;
        }
        let e = dq_to_xy(e_d, e_q, state.pll_delta);
        let di = inductor_rate(e - u_t, state.i, self.lf, omega0);
        let (dxd, dxq) = self.acc_rates(i_dq);
        let (ddelta, dxi) = self.pll_rates(state, u_t);
        VscState {
            i: di,
            acc_xd: dxd,
            acc_xq: dxq,
            pll_xi: dxi,
            pll_delta: ddelta,
        }
    }
}

/// Series RL load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadParams {
    /// Resistance in pu (>= 0).
    pub r_load: f64,
    /// Inductance in pu (> 0).
    pub l_load: f64,
}

/// Load branch current (injection into the node).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadState {
    pub i: XYPair,
}

impl LoadState {
    pub const NAMES: [&'static str; 2] = ["i_x", "i_y"];
}

impl LoadParams {
    pub const STATE_DIM: usize = 2;

    /// Equivalent internal voltage `e = −r_load·i`.
    pub fn internal_voltage(&self, state: &LoadState) -> XYPair {
        state.i * -self.r_load
    }

    pub fn derivative(&self, state: &LoadState, u_t: XYPair, omega0: f64) -> LoadState {
        let e = self.internal_voltage(state);
        LoadState {
            i: inductor_rate(e - u_t, state.i, self.l_load, omega0),
        }
    }
}

/// Infinite bus: a constant voltage source behind the grid inductance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlackParams {
    /// Grid inductance in pu.
    pub lg: f64,
    /// Constant grid voltage in the common frame.
    pub u_g: XYPair,
}

impl SlackParams {
    pub fn internal_voltage(&self) -> XYPair {
        self.u_g
    }
}

/// Current rate of an inductive branch in the common rotating frame:
/// `di/dt = (ω0/L)·drive + ω0·(i_y, −i_x)` where `drive` is the voltage
/// across the inductor in the current direction.
///
/// All branch types reuse this: VSC filter (`drive = e − u_t`), load
/// branch (`drive = −r·i − u_t`), slack branch (`drive = u_g − u_t`)
/// and network lines (`drive = u_from − u_to`).
pub fn inductor_rate(drive: XYPair, i: XYPair, inductance: f64, omega0: f64) -> XYPair {
    XYPair {
        x: omega0 / inductance * drive.x + omega0 * i.y,
        y: omega0 / inductance * drive.y - omega0 * i.x,
    }
}
