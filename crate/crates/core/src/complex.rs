use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Complex power: active power (watts) on the real axis, reactive power
/// (vars) on the imaginary axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct ComplexPower {
    pub re: f64,
    pub im: f64,
}

impl ComplexPower {
    pub const ZERO: ComplexPower = ComplexPower { re: 0.0, im: 0.0 };

    pub const fn new(re: f64, im: f64) -> Self {
        ComplexPower { re, im }
    }

    /// Builds a value from magnitude and argument.
    pub fn from_polar(magnitude: f64, arg: f64) -> Self {
        ComplexPower::new(magnitude * arg.cos(), magnitude * arg.sin())
    }

    /// Apparent power.
    pub fn norm(self) -> f64 {
        self.re.hypot(self.im)
    }

    /// Argument in `[-pi, pi]`.
    pub fn arg(self) -> f64 {
        self.im.atan2(self.re)
    }

    pub fn dot(self, other: ComplexPower) -> f64 {
        self.re * other.re + self.im * other.im
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    /// Multiplies by the unit complex number `e^{i rho}`.
    pub fn rotate(self, rho: f64) -> Self {
        let (s, c) = rho.sin_cos();
        ComplexPower::new(self.re * c - self.im * s, self.re * s + self.im * c)
    }

    /// True for values in the closed upper half-plane with argument in `[0, pi)`.
    pub fn in_upper_half_plane(self) -> bool {
        self.im >= 0.0 && !(self.im == 0.0 && self.re < 0.0)
    }

    /// Angle between two nonzero vectors, in `[0, pi]`.
    pub fn angle_to(self, other: ComplexPower) -> f64 {
        let cross = self.re * other.im - self.im * other.re;
        cross.abs().atan2(self.dot(other)).clamp(0.0, PI)
    }
}

impl From<[f64; 2]> for ComplexPower {
    fn from([re, im]: [f64; 2]) -> Self {
        ComplexPower { re, im }
    }
}

impl From<ComplexPower> for [f64; 2] {
    fn from(c: ComplexPower) -> Self {
        [c.re, c.im]
    }
}

impl Add for ComplexPower {
    type Output = ComplexPower;
    fn add(self, rhs: ComplexPower) -> ComplexPower {
        ComplexPower::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl AddAssign for ComplexPower {
    fn add_assign(&mut self, rhs: ComplexPower) {
        self.re += rhs.re;
        self.im += rhs.im;
    }
}

impl Sub for ComplexPower {
    type Output = ComplexPower;
    fn sub(self, rhs: ComplexPower) -> ComplexPower {
        ComplexPower::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl Neg for ComplexPower {
    type Output = ComplexPower;
    fn neg(self) -> ComplexPower {
        ComplexPower::new(-self.re, -self.im)
    }
}

impl Mul<f64> for ComplexPower {
    type Output = ComplexPower;
    fn mul(self, rhs: f64) -> ComplexPower {
        ComplexPower::new(self.re * rhs, self.im * rhs)
    }
}
