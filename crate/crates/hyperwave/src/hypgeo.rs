//! Upper half-plane model of the hyperbolic plane.
//!
//! Points are [`HPoint`]s with `y > 0`, isometries are [`Moebius`] elements of
//! PSL(2,R) under a canonical sign normalization, and unit tangent vectors
//! carry their direction as a Euclidean angle at the base point.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SIGN_EPS: f64 = 1e-12;
const DET_DRIFT: f64 = 1e-12;
const DET_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HPoint {
    x: f64,
    y: f64,
}

impl HPoint {
    pub const I: HPoint = HPoint { x: 0.0, y: 1.0 };

    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(y > 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(Error::InvalidPoint { x, y });
        }
        Ok(HPoint { x, y })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }
}

/// Hyperbolic distance for the metric `(dx² + dy²)/y²`.
///
/// Uses `sinh(d/2) = |z − w| / (2√(y_z y_w))`, which is the cosh identity
/// rewritten so that small separations keep full relative precision.
pub fn dist(z: HPoint, w: HPoint) -> f64 {
    let dx = z.x - w.x;
    let dy = z.y - w.y;
    let s = dx.hypot(dy) / (2.0 * (z.y * w.y).sqrt());
    2.0 * s.asinh()
}

/// `cosh d(z, w)` without going through `d`.
pub fn cosh_dist(z: HPoint, w: HPoint) -> f64 {
    let dx = z.x - w.x;
    let dy = z.y - w.y;
    1.0 + (dx * dx + dy * dy) / (2.0 * z.y * w.y)
}

/// Area of a hyperbolic disc of radius `r`.
pub fn ball_volume(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidParams(format!("ball radius must be >= 0, got {r}")));
    }
    let s = (0.5 * r).sinh();
    Ok(4.0 * PI * s * s)
}

/// An element of PSL(2,R), stored with `ad − bc = 1` and the first entry of
/// magnitude above 1e−12 positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moebius {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl Moebius {
    pub const IDENTITY: Moebius = Moebius { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    /// Checked constructor: rejects matrices whose determinant is not 1 within 1e−10.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let det = a * d - b * c;
        if !det.is_finite() || (det - 1.0).abs() > DET_TOL {
            return Err(Error::NotUnimodular { det });
        }
        Ok(Moebius { a, b, c, d }.normalized())
    }

    pub fn from_entries(e: [f64; 4]) -> Result<Self> {
        Self::new(e[0], e[1], e[2], e[3])
    }

    /// Renormalize determinant drift and fix the sign representative.
    pub fn normalized(self) -> Self {
        let Moebius { mut a, mut b, mut c, mut d } = self;
        let det = a * d - b * c;
        if (det - 1.0).abs() > DET_DRIFT && det > 0.0 {
            let s = det.sqrt().recip();
            a *= s;
            b *= s;
            c *= s;
            d *= s;
        }
        let lead = [a, b, c, d]
            .into_iter()
            .find(|v| v.abs() > SIGN_EPS)
            .unwrap_or(1.0);
        if lead < 0.0 {
            Moebius { a: -a, b: -b, c: -c, d: -d }
        } else {
            Moebius { a, b, c, d }
        }
    }

    pub fn entries(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn inverse(&self) -> Self {
        Moebius { a: self.d, b: -self.b, c: -self.c, d: self.a }.normalized()
    }

    /// Translation length `2 arccosh(|tr|/2)` of a hyperbolic element; 0 otherwise.
    pub fn translation_length(&self) -> f64 {
        let h = 0.5 * self.trace().abs();
        if h > 1.0 {
            2.0 * h.acosh()
        } else {
            0.0
        }
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.trace().abs() > 2.0
    }

    /// Largest entrywise deviation from ±identity.
    pub fn identity_defect(&self) -> f64 {
        let plus = (self.a - 1.0).abs().max(self.b.abs()).max(self.c.abs()).max((self.d - 1.0).abs());
        let minus = (self.a + 1.0).abs().max(self.b.abs()).max(self.c.abs()).max((self.d + 1.0).abs());
        plus.min(minus)
    }

    pub fn apply(&self, z: HPoint) -> HPoint {
        let nr = self.a * z.x + self.b;
        let dr = self.c * z.x + self.d;
        let di = self.c * z.y;
        let den = dr * dr + di * di;
        HPoint {
            x: (nr * dr + self.a * self.c * z.y * z.y) / den,
            y: z.y / den,
        }
    }

    /// Angle added to tangent directions at `z`: `arg 1/(cz+d)²`.
    pub fn rotation_at(&self, z: HPoint) -> f64 {
        -2.0 * (self.c * z.y).atan2(self.c * z.x + self.d)
    }

    pub fn apply_tangent(&self, v: UnitTangent) -> UnitTangent {
        UnitTangent::new(self.apply(v.base), v.angle + self.rotation_at(v.base))
    }

    /// Elliptic rotation about `i` turning tangent directions at `i` by `theta`.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = (0.5 * theta).sin_cos();
        Moebius { a: c, b: s, c: -s, d: c }.normalized()
    }

    /// Geodesic flow generator `diag(e^{t/2}, e^{−t/2})`.
    pub fn geodesic(t: f64) -> Self {
        let e = (0.5 * t).exp();
        Moebius { a: e, b: 0.0, c: 0.0, d: e.recip() }
    }

    pub fn translation(x: f64) -> Self {
        Moebius { a: 1.0, b: x, c: 0.0, d: 1.0 }
    }

    /// The frame `g` with `g·(i, up) = (z, angle)`.
    pub fn frame(v: UnitTangent) -> Self {
        let s = v.base.y.sqrt();
        let n = Moebius { a: s, b: v.base.x / s, c: 0.0, d: s.recip() };
        n * Moebius::rotation(v.angle - FRAC_PI_2)
    }

    /// Inverse of [`Moebius::frame`].
    pub fn to_tangent(&self) -> UnitTangent {
        self.apply_tangent(UnitTangent::new(HPoint::I, FRAC_PI_2))
    }

    /// `d(i, g·i)` via `cosh d = (a² + b² + c² + d²)/2`.
    pub fn displacement_at_i(&self) -> f64 {
        dist(HPoint::I, self.apply(HPoint::I))
    }
}

impl Mul for Moebius {
    type Output = Moebius;

    fn mul(self, o: Moebius) -> Moebius {
        Moebius {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
        .normalized()
    }
}

/// A unit tangent vector; `angle` is the Euclidean direction at `base`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitTangent {
    pub base: HPoint,
    pub angle: f64,
}

impl UnitTangent {
    pub fn new(base: HPoint, angle: f64) -> Self {
        UnitTangent { base, angle: reduce_angle(angle) }
    }
}

pub fn reduce_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// The point at distance `r` from `center` in direction `ref_angle + theta`.
pub fn polar_to_point(center: HPoint, ref_angle: f64, r: f64, theta: f64) -> HPoint {
    let g = Moebius::frame(UnitTangent::new(center, ref_angle + theta));
    g.apply(HPoint { x: 0.0, y: r.exp() })
}

/// Geodesic polar coordinates `(r, θ)` of `z` about `center`, with `θ`
/// measured from `ref_angle`.
pub fn point_to_polar(center: HPoint, ref_angle: f64, z: HPoint) -> (f64, f64) {
    let r = dist(center, z);
    let g = Moebius::frame(UnitTangent::new(center, FRAC_PI_2)).inverse();
    let w = g.apply(z);
    // Cayley map sends i to 0 and rotates directions at i by −π/2.
    let (nx, ny) = (w.x, w.y - 1.0);
    let (dx, dy) = (w.x, w.y + 1.0);
    let den = dx * dx + dy * dy;
    let zx = (nx * dx + ny * dy) / den;
    let zy = (ny * dx - nx * dy) / den;
    let alpha = zy.atan2(zx) + FRAC_PI_2;
    (r, reduce_angle(alpha - ref_angle))
}
