//! Rigid-body geometry: vectors, rotation matrices, Euler poses, SE(3)
//! transforms, and unit quaternions.
//!
//! Conventions used throughout the crate:
//!
//! * A pose transforms **points**: `apply(P) = R * P + t`. The translation
//!   stored in [`SE3Pose`] is therefore not the camera position; the camera
//!   center in the target frame is `-R^T * t` (see [`SE3Pose::camera_center`]).
//! * Euler angles compose as `R = R_z(gamma) * R_y(beta) * R_x(alpha)`.
//! * Quaternions are kept unit-norm with a canonical sign: `w >= 0`, and when
//!   `w == 0` the first nonzero of `(x, y, z)` is non-negative. All
//!   constructors normalize and canonicalize, so two quaternions describing
//!   the same rotation compare equal component-wise up to rounding.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Orthonormality tolerance accepted when ingesting a rotation matrix from
/// outside the crate (file parsers, user-supplied poses).
pub const ROTATION_INGEST_TOL: f64 = 1e-6;

/// Tolerance used by slerp: below this value of `sin(angle)` the quaternions
/// are nearly parallel and normalized linear interpolation is used instead.
pub const SLERP_PARALLEL_TOL: f64 = 1e-9;

/// Three-component column vector.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, rhs: Vec3) -> f64 {
        self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    pub fn cross(self, rhs: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * rhs.z - self.z * rhs.y,
            y: self.z * rhs.x - self.x * rhs.z,
            z: self.x * rhs.y - self.y * rhs.x,
        }
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3 { x: self.x * s, y: self.y * s, z: self.z * s }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3 { x: self.x + rhs.x, y: self.y + rhs.y, z: self.z + rhs.z }
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3 { x: self.x - rhs.x, y: self.y - rhs.y, z: self.z - rhs.z }
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3 { x: -self.x, y: -self.y, z: -self.z }
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        self.scale(s)
    }
}

/// 3x3 matrix, row-major storage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3 {
    pub m: [f64; 9],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 { m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0] };

    pub const ZERO: Mat3 = Mat3 { m: [0.0; 9] };

    pub fn from_rows(r0: [f64; 3], r1: [f64; 3], r2: [f64; 3]) -> Self {
        Mat3 { m: [r0[0], r0[1], r0[2], r1[0], r1[1], r1[2], r2[0], r2[1], r2[2]] }
    }

    /// Entry at row `r`, column `c`.
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.m[r * 3 + c]
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.m;
        Mat3 { m: [m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]] }
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3 {
            x: m[0] * v.x + m[1] * v.y + m[2] * v.z,
            y: m[3] * v.x + m[4] * v.y + m[5] * v.z,
            z: m[6] * v.x + m[7] * v.y + m[8] * v.z,
        }
    }

    pub fn mul_mat(&self, rhs: &Mat3) -> Mat3 {
        let a = &self.m;
        let b = &rhs.m;
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] =
                    a[r * 3] * b[c] + a[r * 3 + 1] * b[3 + c] + a[r * 3 + 2] * b[6 + c];
            }
        }
        Mat3 { m: out }
    }

    pub fn add_mat(&self, rhs: &Mat3) -> Mat3 {
        let mut out = [0.0; 9];
        for i in 0..9 {
            out[i] = self.m[i] + rhs.m[i];
        }
        Mat3 { m: out }
    }

    pub fn scale(&self, s: f64) -> Mat3 {
        let mut out = [0.0; 9];
        for i in 0..9 {
            out[i] = self.m[i] * s;
        }
        Mat3 { m: out }
    }

    /// Largest absolute deviation of `R^T R` from the identity, plus the
    /// deviation of the determinant from one. Zero for an exact rotation.
    pub fn rotation_deviation(&self) -> f64 {
        let gram = self.transpose().mul_mat(self);
        let mut dev: f64 = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                let expect = if r == c { 1.0 } else { 0.0 };
                dev = dev.max((gram.at(r, c) - expect).abs());
            }
        }
        dev.max((self.det() - 1.0).abs())
    }

    pub fn is_rotation(&self, tol: f64) -> bool {
        self.m.iter().all(|v| v.is_finite()) && self.rotation_deviation() <= tol
    }
}

/// Rotation of `angle` radians about the x axis.
pub fn rot_x(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::from_rows([1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c])
}

/// Rotation of `angle` radians about the y axis.
pub fn rot_y(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::from_rows([c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c])
}

/// Rotation of `angle` radians about the z axis.
pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::from_rows([c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0])
}

/// Six-parameter pose: three Euler angles (radians) and a translation.
///
/// The rotation composes as `R = R_z(gamma) * R_y(beta) * R_x(alpha)` and the
/// translation enters the point transform directly: `P' = R * P + (tx, ty, tz)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerPose6 {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl EulerPose6 {
    pub fn new(alpha: f64, beta: f64, gamma: f64, tx: f64, ty: f64, tz: f64) -> Self {
        EulerPose6 { alpha, beta, gamma, tx, ty, tz }
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.tx, self.ty, self.tz)
    }

    pub fn angles(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }
}

/// Builds the rotation matrix `R_z(gamma) * R_y(beta) * R_x(alpha)`.
pub fn euler_to_rotation(alpha: f64, beta: f64, gamma: f64) -> Mat3 {
    rot_z(gamma).mul_mat(&rot_y(beta)).mul_mat(&rot_x(alpha))
}

/// Recovers `(alpha, beta, gamma)` from a rotation matrix, inverse of
/// [`euler_to_rotation`]. Unique for `|beta| < pi/2`; at the gimbal-lock
/// boundary (`|R[2][0]| = 1`) `gamma` is fixed to zero and the remaining
/// freedom is folded into `alpha`.
pub fn euler_from_rotation(r: &Mat3) -> (f64, f64, f64) {
    let sb = -r.at(2, 0);
    if sb.abs() >= 1.0 - 1e-12 {
        let beta = if sb > 0.0 { std::f64::consts::FRAC_PI_2 } else { -std::f64::consts::FRAC_PI_2 };
        let alpha = (-r.at(1, 2)).atan2(r.at(1, 1));
        (alpha, beta, 0.0)
    } else {
        let beta = sb.asin();
        let alpha = r.at(2, 1).atan2(r.at(2, 2));
        let gamma = r.at(1, 0).atan2(r.at(0, 0));
        (alpha, beta, gamma)
    }
}

/// Rigid transform acting on points: `apply(P) = rotation * P + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SE3Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl SE3Pose {
    pub const IDENTITY: SE3Pose = SE3Pose { rotation: Mat3::IDENTITY, translation: Vec3::ZERO };

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    /// Builds a pose from parts, rejecting rotation matrices that deviate
    /// from orthonormality by more than [`ROTATION_INGEST_TOL`].
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let deviation = if rotation.m.iter().all(|v| v.is_finite()) {
            rotation.rotation_deviation()
        } else {
            f64::INFINITY
        };
        if deviation > ROTATION_INGEST_TOL || !translation.is_finite() {
            return Err(Error::InvalidRotation { deviation });
        }
        Ok(SE3Pose { rotation, translation })
    }

    /// Builds a pose from parts known to be valid by construction.
    pub(crate) fn from_parts(rotation: Mat3, translation: Vec3) -> Self {
        SE3Pose { rotation, translation }
    }

    pub fn from_euler(e: &EulerPose6) -> Self {
        SE3Pose {
            rotation: euler_to_rotation(e.alpha, e.beta, e.gamma),
            translation: e.translation(),
        }
    }

    /// Decomposes into Euler angles and translation; inverse of
    /// [`SE3Pose::from_euler`] for `|beta| < pi/2`.
    pub fn to_euler(&self) -> EulerPose6 {
        let (alpha, beta, gamma) = euler_from_rotation(&self.rotation);
        EulerPose6 {
            alpha,
            beta,
            gamma,
            tx: self.translation.x,
            ty: self.translation.y,
            tz: self.translation.z,
        }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.translation
    }

    /// Composition `self o rhs`: applies `rhs` first, then `self`.
    pub fn compose(&self, rhs: &SE3Pose) -> SE3Pose {
        SE3Pose {
            rotation: self.rotation.mul_mat(&rhs.rotation),
            translation: self.rotation.mul_vec(rhs.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> SE3Pose {
        let rt = self.rotation.transpose();
        SE3Pose { rotation: rt, translation: -rt.mul_vec(self.translation) }
    }

    /// Position of the target frame's camera expressed in source-frame
    /// coordinates: the point that `apply` maps to the origin, `-R^T * t`.
    pub fn camera_center(&self) -> Vec3 {
        -self.rotation.transpose().mul_vec(self.translation)
    }

    /// Exact identity check (bit equality). Used to short-circuit warps so
    /// the identity transform reproduces pixel coordinates exactly.
    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

/// Unit quaternion `w + xi + yj + zk` with canonical sign (see module docs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    /// Normalizes and canonicalizes the given components.
    /// Fails on a near-zero norm, where no direction is defined.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::DegenerateInput(format!(
                "quaternion norm {n} too small to normalize"
            )));
        }
        Ok(UnitQuaternion { w: w / n, x: x / n, y: y / n, z: z / n }.canonicalized())
    }

    fn canonicalized(self) -> Self {
        let UnitQuaternion { w, x, y, z } = self;
        let flip = if w != 0.0 {
            w < 0.0
        } else if x != 0.0 {
            x < 0.0
        } else if y != 0.0 {
            y < 0.0
        } else {
            z < 0.0
        };
        if flip {
            UnitQuaternion { w: -w, x: -x, y: -y, z: -z }
        } else {
            // Normalize negative zeros so canonical forms compare equal.
            UnitQuaternion { w: w + 0.0, x: x + 0.0, y: y + 0.0, z: z + 0.0 }
        }
    }

    /// Axis-angle constructor; the axis need not be unit length.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if n < 1e-12 {
            return Err(Error::DegenerateInput("rotation axis has near-zero norm".into()));
        }
        let half = 0.5 * angle;
        let s = half.sin() / n;
        Self::new(half.cos(), axis.x * s, axis.y * s, axis.z * s)
    }

    /// Converts a rotation matrix to a quaternion. The matrix must be
    /// orthonormal within [`ROTATION_INGEST_TOL`].
    pub fn from_rotation(r: &Mat3) -> Result<Self> {
        if !r.is_rotation(ROTATION_INGEST_TOL) {
            return Err(Error::InvalidRotation { deviation: r.rotation_deviation() });
        }
        // Shepperd's method: pick the largest of trace and diagonal entries
        // so the divisor stays well away from zero.
        let m = &r.m;
        let trace = m[0] + m[4] + m[8];
        let (w, x, y, z);
        if trace > m[0] && trace > m[4] && trace > m[8] {
            let s = (trace + 1.0).sqrt() * 2.0;
            w = 0.25 * s;
            x = (m[7] - m[5]) / s;
            y = (m[2] - m[6]) / s;
            z = (m[3] - m[1]) / s;
        } else if m[0] > m[4] && m[0] > m[8] {
            let s = (1.0 + m[0] - m[4] - m[8]).sqrt() * 2.0;
            w = (m[7] - m[5]) / s;
            x = 0.25 * s;
            y = (m[1] + m[3]) / s;
            z = (m[2] + m[6]) / s;
        } else if m[4] > m[8] {
            let s = (1.0 + m[4] - m[0] - m[8]).sqrt() * 2.0;
            w = (m[2] - m[6]) / s;
            x = (m[1] + m[3]) / s;
            y = 0.25 * s;
            z = (m[5] + m[7]) / s;
        } else {
            let s = (1.0 + m[8] - m[0] - m[4]).sqrt() * 2.0;
            w = (m[3] - m[1]) / s;
            x = (m[2] + m[6]) / s;
            y = (m[5] + m[7]) / s;
            z = 0.25 * s;
        }
        Self::new(w, x, y, z)
    }

    pub fn to_rotation(&self) -> Mat3 {
        let UnitQuaternion { w, x, y, z } = *self;
        let (xx, yy, zz) = (x * x, y * y, z * z);
        let (xy, xz, yz) = (x * y, x * z, y * z);
        let (wx, wy, wz) = (w * x, w * y, w * z);
        Mat3::from_rows(
            [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
            [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
            [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
        )
    }

    /// Hamilton product. `a.multiply(b)` represents rotating by `b` first,
    /// then by `a`: `R(a * b) = R(a) * R(b)`.
    pub fn multiply(&self, rhs: &UnitQuaternion) -> UnitQuaternion {
        let (aw, ax, ay, az) = (self.w, self.x, self.y, self.z);
        let (bw, bx, by, bz) = (rhs.w, rhs.x, rhs.y, rhs.z);
        UnitQuaternion {
            w: aw * bw - ax * bx - ay * by - az * bz,
            x: aw * bx + ax * bw + ay * bz - az * by,
            y: aw * by - ax * bz + ay * bw + az * bx,
            z: aw * bz + ax * by - ay * bx + az * bw,
        }
        .renormalized()
        .canonicalized()
    }

    fn renormalized(self) -> Self {
        let n = (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        UnitQuaternion { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn conjugate(&self) -> UnitQuaternion {
        UnitQuaternion { w: self.w, x: -self.x, y: -self.y, z: -self.z }.canonicalized()
    }

    /// Inverse rotation; equals the conjugate for unit quaternions.
    pub fn inverse(&self) -> UnitQuaternion {
        self.conjugate()
    }

    /// Rotates a vector: the vector part of `q * (0, v) * q^-1`.
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        // Expanded sandwich product: v + 2w(u x v) + 2(u x (u x v)).
        let u = Vec3::new(self.x, self.y, self.z);
        let uv = u.cross(v);
        v + (uv * self.w + u.cross(uv)) * 2.0
    }

    pub fn dot(&self, rhs: &UnitQuaternion) -> f64 {
        self.w * rhs.w + self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.w.clamp(-1.0, 1.0).acos()
    }
}

/// Spherical linear interpolation from `a` (at `u = 0`) to `b` (at `u = 1`)
/// along the shorter arc. Falls back to normalized linear interpolation when
/// the quaternions are nearly parallel.
pub fn slerp(a: &UnitQuaternion, b: &UnitQuaternion, u: f64) -> UnitQuaternion {
    let mut d = a.dot(b);
    let mut bw = *b;
    if d < 0.0 {
        bw = UnitQuaternion { w: -b.w, x: -b.x, y: -b.y, z: -b.z };
        d = -d;
    }
    let d = d.min(1.0);
    let angle = d.acos();
    let sin_angle = angle.sin();
    let (ka, kb) = if sin_angle < SLERP_PARALLEL_TOL {
        (1.0 - u, u)
    } else {
        (((1.0 - u) * angle).sin() / sin_angle, (u * angle).sin() / sin_angle)
    };
    let q = UnitQuaternion {
        w: ka * a.w + kb * bw.w,
        x: ka * a.x + kb * bw.x,
        y: ka * a.y + kb * bw.y,
        z: ka * a.z + kb * bw.z,
    };
    q.renormalized().canonicalized()
}
