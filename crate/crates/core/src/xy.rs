//! Two-component quantities in the common synchronous reference frame.
//!
//! All electrical variables (voltages, currents) are carried as `x`/`y`
//! components of a frame rotating at the base angular frequency `ω0`.
//! Devices with their own phase-locked loop work in a local `dq` frame
//! rotated by the PLL angle `δ`; [`xy_to_dq`] / [`dq_to_xy`] convert
//! between the two.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// A per-unit quantity on the common synchronous x/y axes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct XYPair {
    pub x: f64,
    pub y: f64,
}

impl XYPair {
    pub const ZERO: XYPair = XYPair { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        XYPair { x, y }
    }

    pub fn magnitude(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Angle of the vector in radians, `atan2(y, x)`.
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Counterclockwise rotation by `angle` radians.
    pub fn rotated(self, angle: f64) -> XYPair {
        let (sin, cos) = angle.sin_cos();
        XYPair {
            x: self.x * cos - self.y * sin,
            y: self.x * sin + self.y * cos,
        }
    }
}

impl Add for XYPair {
    type Output = XYPair;
    fn add(self, rhs: XYPair) -> XYPair {
        XYPair::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for XYPair {
    fn add_assign(&mut self, rhs: XYPair) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for XYPair {
    type Output = XYPair;
    fn sub(self, rhs: XYPair) -> XYPair {
        XYPair::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for XYPair {
    fn sub_assign(&mut self, rhs: XYPair) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Neg for XYPair {
    type Output = XYPair;
    fn neg(self) -> XYPair {
        XYPair::new(-self.x, -self.y)
    }
}

impl Mul<f64> for XYPair {
    type Output = XYPair;
    fn mul(self, rhs: f64) -> XYPair {
        XYPair::new(self.x * rhs, self.y * rhs)
    }
}

/// Project a common-frame vector onto a local frame rotated by `delta`.
///
/// `d = x·cos δ + y·sin δ`, `q = −x·sin δ + y·cos δ`.
pub fn xy_to_dq(v: XYPair, delta: f64) -> (f64, f64) {
    let (sin, cos) = delta.sin_cos();
    (v.x * cos + v.y * sin, -v.x * sin + v.y * cos)
}

/// Inverse of [`xy_to_dq`]: rotate a local-frame vector back to the
/// common frame.
pub fn dq_to_xy(d: f64, q: f64, delta: f64) -> XYPair {
    let (sin, cos) = delta.sin_cos();
    XYPair {
        x: d * cos - q * sin,
        y: d * sin + q * cos,
    }
}
