//! Receiver-centred planar geometry.
//!
//! The local frame puts antenna 1 at the origin with the array lying along
//! the negative x axis, so antenna `i` sits at `(-p_i, 0)` and the tracked
//! half-plane is `y > 0`. Angles are measured from the +y (broadside) axis
//! towards +x, which makes the path to antenna `i` approximately
//! `d_1 + p_i * sin(theta)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const ORIGIN: Position = Position { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Angle from broadside, radians, in `(-pi, pi]`.
    pub fn bearing(&self) -> f64 {
        self.x.atan2(self.y)
    }

    pub fn from_polar(range: f64, theta: f64) -> Self {
        Self {
            x: range * theta.sin(),
            y: range * theta.cos(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Sub for Position {
    type Output = Position;
    fn sub(self, o: Position) -> Position {
        Position::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Add for Position {
    type Output = Position;
    fn add(self, o: Position) -> Position {
        Position::new(self.x + o.x, self.y + o.y)
    }
}

/// Maps world coordinates into the receiver frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayFrame {
    pub antenna1: Position,
    /// Unit vector pointing from antenna 1 towards antennas 2 and 3.
    pub axis: (f64, f64),
}

impl ArrayFrame {
    pub fn new(antenna1: Position, axis: (f64, f64)) -> Result<Self> {
        let n = axis.0.hypot(axis.1);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidParameter("array axis must be a nonzero vector".into()));
        }
        Ok(Self {
            antenna1,
            axis: (axis.0 / n, axis.1 / n),
        })
    }

    pub fn to_local(&self, p: Position) -> Position {
        let d = p - self.antenna1;
        let (ex, ey) = (-self.axis.0, -self.axis.1);
        Position::new(d.x * ex + d.y * ey, -d.x * ey + d.y * ex)
    }

    pub fn to_world(&self, p: Position) -> Position {
        let (ex, ey) = (-self.axis.0, -self.axis.1);
        self.antenna1 + Position::new(p.x * ex - p.y * ey, p.x * ey + p.y * ex)
    }

    /// World position of an antenna `offset` metres along the array.
    pub fn antenna(&self, offset: f64) -> Position {
        self.antenna1 + Position::new(offset * self.axis.0, offset * self.axis.1)
    }
}

/// Bistatic parameters of a person as seen from antenna 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BistaticGeometry {
    /// Person AoA, radians.
    pub theta_x: f64,
    /// TX to person to antenna 1 path length, m.
    pub d_x: f64,
    /// Transmitter AoA, radians.
    pub theta_s: f64,
    /// TX to antenna 1 direct path, m.
    pub d_s1: f64,
}

/// Exact bistatic parameters for a person and transmitter in the receiver frame.
pub fn forward_geometry(person: Position, tx: Position) -> BistaticGeometry {
    BistaticGeometry {
        theta_x: person.bearing(),
        d_x: person.distance(&tx) + person.norm(),
        theta_s: tx.bearing(),
        d_s1: tx.norm(),
    }
}

/// Person to receiver range from the bistatic path length and both AoAs.
pub fn receiver_range(theta_x: f64, d_x: f64, theta_s: f64, d_s1: f64) -> Result<f64> {
    let den = d_x - d_s1 * (theta_x - theta_s).cos();
    if den.abs() < 1e-6 {
        return Err(Error::GeometricDegeneracy);
    }
    Ok((d_x * d_x - d_s1 * d_s1) / (2.0 * den))
}

/// Solves the bistatic triangle for the person position (angles in radians).
pub fn localize(theta_x: f64, d_x: f64, theta_s: f64, d_s1: f64) -> Result<Position> {
    if !(theta_x.is_finite() && d_x.is_finite() && theta_s.is_finite() && d_s1.is_finite()) {
        return Err(Error::InvalidParameter("non-finite localization input".into()));
    }
    if d_x <= d_s1 {
        return Err(Error::InvalidParameter(format!(
            "reflection distance {d_x} m must exceed the direct path {d_s1} m"
        )));
    }
    let r = receiver_range(theta_x, d_x, theta_s, d_s1)?;
    Ok(Position::from_polar(r, theta_x))
}
