//! Quaternion algebra on `(w, x, y, z)` component order.
//!
//! Quaternions are identified with vectors in R⁴ so that left and right
//! multiplication become the 4×4 matrices [`Quaternion::omega_l`] and
//! [`Quaternion::omega_r`]. Unit quaternions double-cover SO(3): `q` and `-q`
//! map to the same rotation matrix.

use std::ops::{Mul, Neg};

use nalgebra::{Matrix3, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{BinghamError, Result};

/// Inputs with a norm at or below this have no usable direction.
pub const NORMALIZE_EPS: f64 = 1e-12;

/// Allowed deviation of `‖q‖` from one for a [`UnitQuaternion`].
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// A quaternion `w + xi + yj + zk`, serialized as `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    /// Builds a quaternion, rejecting NaN or infinite components.
    pub fn try_new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        if q.to_array().iter().all(|c| c.is_finite()) {
            Ok(q)
        } else {
            Err(BinghamError::invalid(format!(
                "quaternion components must be finite, got {:?}",
                q.to_array()
            )))
        }
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Quaternion::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn conjugate(&self) -> Quaternion {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Projects onto S³. Fails when `‖q‖ ≤ 1e-12`.
    pub fn normalize(&self) -> Result<UnitQuaternion> {
        let n = self.norm();
        if !(n > NORMALIZE_EPS) {
            return Err(BinghamError::DegenerateInput(format!(
                "cannot normalize quaternion with norm {n:e}"
            )));
        }
        Ok(UnitQuaternion(Quaternion::new(
            self.w / n,
            self.x / n,
            self.y / n,
            self.z / n,
        )))
    }

    /// Matrix of left multiplication: `omega_l(a) * b == a ⊙ b`.
    pub fn omega_l(&self) -> Matrix4<f64> {
        let (a, b, c, d) = (self.w, self.x, self.y, self.z);
        #[rustfmt::skip]
        let m = Matrix4::new(
            a, -b, -c, -d,
            b,  a, -d,  c,
            c,  d,  a, -b,
            d, -c,  b,  a,
        );
        m
    }

    /// Matrix of right multiplication: `omega_r(b) * a == a ⊙ b`.
    pub fn omega_r(&self) -> Matrix4<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        #[rustfmt::skip]
        let m = Matrix4::new(
            w, -x, -y, -z,
            x,  w,  z, -y,
            y, -z,  w,  x,
            z,  y, -x,  w,
        );
        m
    }
}

impl From<[f64; 4]> for Quaternion {
    fn from(c: [f64; 4]) -> Self {
        Quaternion::new(c[0], c[1], c[2], c[3])
    }
}

impl From<Quaternion> for [f64; 4] {
    fn from(q: Quaternion) -> Self {
        q.to_array()
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    /// Hamilton product, `i² = j² = k² = ijk = -1`.
    fn mul(self, rhs: Quaternion) -> Quaternion {
        let (a, b, c, d) = (self.w, self.x, self.y, self.z);
        let (w, x, y, z) = (rhs.w, rhs.x, rhs.y, rhs.z);
        Quaternion::new(
            a * w - b * x - c * y - d * z,
            a * x + b * w + c * z - d * y,
            a * y - b * z + c * w + d * x,
            a * z + b * y - c * x + d * w,
        )
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;

    fn neg(self) -> Quaternion {
        Quaternion::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Quaternion product `a ⊙ b`.
pub fn qmul(a: &Quaternion, b: &Quaternion) -> Quaternion {
    *a * *b
}

/// A quaternion with `|‖q‖ - 1| ≤ 1e-9`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion(Quaternion);

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion(Quaternion::IDENTITY);

    /// Wraps `q` after checking it already has unit norm.
    pub fn new(q: Quaternion) -> Result<Self> {
        let q = Quaternion::try_new(q.w, q.x, q.y, q.z)?;
        let n = q.norm();
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(BinghamError::invalid(format!(
                "expected a unit quaternion, norm is {n}"
            )));
        }
        Ok(UnitQuaternion(q))
    }

    pub fn from_vector(v: &Vector4<f64>) -> Result<Self> {
        Quaternion::from_vector(v).normalize()
    }

    /// Keeps `q` bit for bit when it already passes [`UnitQuaternion::new`],
    /// normalizes it otherwise.
    pub fn coerce(q: Quaternion) -> Result<Self> {
        UnitQuaternion::new(q).or_else(|_| q.normalize())
    }

    pub fn quaternion(&self) -> &Quaternion {
        &self.0
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        self.0.to_vector()
    }

    pub fn to_array(&self) -> [f64; 4] {
        self.0.to_array()
    }

    pub fn conjugate(&self) -> UnitQuaternion {
        UnitQuaternion(self.0.conjugate())
    }

    pub fn negate(&self) -> UnitQuaternion {
        UnitQuaternion(-self.0)
    }

    /// Rotation matrix `R(q)`; `R(-q) == R(q)`.
    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let Quaternion { w, x, y, z } = self.0;
        #[rustfmt::skip]
        let m = Matrix3::new(
            1.0 - 2.0 * y * y - 2.0 * z * z, -2.0 * w * z + 2.0 * x * y,       2.0 * w * y + 2.0 * x * z,
            2.0 * w * z + 2.0 * x * y,       1.0 - 2.0 * x * x - 2.0 * z * z, -2.0 * w * x + 2.0 * y * z,
            -2.0 * w * y + 2.0 * x * z,      2.0 * w * x + 2.0 * y * z,       1.0 - 2.0 * x * x - 2.0 * y * y,
        );
        m
    }

    /// Representative of `±q` on the hemisphere `w ≥ 0`; when `w == 0` the
    /// first nonzero component is made positive.
    pub fn canonical_hemisphere(&self) -> UnitQuaternion {
        let first = self
            .to_array()
            .into_iter()
            .find(|c| *c != 0.0)
            .unwrap_or(1.0);
        if first < 0.0 {
            self.negate()
        } else {
            *self
        }
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = BinghamError;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        UnitQuaternion::new(Quaternion::from(c))
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        q.to_array()
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        UnitQuaternion(self.0 * rhs.0)
    }
}

/// Rotation angle between `q` and `q_gt` in `[0, π]`: `2 acos(|q_gtᵀ q|)`.
///
/// Evaluated through the half-angle form `4 atan2(‖q − ±q_gt‖, ‖q + ±q_gt‖)`,
/// which equals the arccos expression but stays accurate near zero; the
/// result never leaves `[0, π]` and is never NaN for unit inputs.
pub fn delta_q(q: &UnitQuaternion, q_gt: &UnitQuaternion) -> f64 {
    let a = q.to_vector();
    let mut b = q_gt.to_vector();
    if a.dot(&b) < 0.0 {
        b = -b;
    }
    let angle = 4.0 * (a - b).norm().atan2((a + b).norm());
    angle.clamp(0.0, std::f64::consts::PI)
}
