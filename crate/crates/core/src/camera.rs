//! Pinhole camera model and depth-based pixel warping.
//!
//! The warp chain is: back-project a pixel with its depth into the source
//! camera frame, move the point with a rigid transform into the target
//! frame, and project it back onto the image plane. All functions work in
//! continuous pixel coordinates; integer pixel centers sit at integer
//! coordinates.

use crate::error::{Error, Result};
use crate::geometry::{rot_x, rot_y, rot_z, EulerPose6, Mat3, SE3Pose, Vec3};
use crate::image::DepthMap;

/// Minimum camera-frame z accepted by projection. Points closer to (or
/// behind) the principal plane than this are rejected.
pub const MIN_PROJECT_Z: f64 = 1e-6;

/// Pinhole intrinsics: focal lengths and principal point, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx.is_finite() && fy.is_finite() && cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidIntrinsics("intrinsics must be finite".into()));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx = {fx}, fy = {fy}"
            )));
        }
        Ok(Intrinsics { fx, fy, cx, cy })
    }

    /// Rescales for a raster resized from `(from_w, from_h)` to
    /// `(to_w, to_h)`: fx and cx scale by the width ratio, fy and cy by the
    /// height ratio.
    pub fn rescaled(
        &self,
        from_w: usize,
        from_h: usize,
        to_w: usize,
        to_h: usize,
    ) -> Result<Intrinsics> {
        if from_w == 0 || from_h == 0 || to_w == 0 || to_h == 0 {
            return Err(Error::InvalidIntrinsics("raster dimensions must be nonzero".into()));
        }
        let sw = to_w as f64 / from_w as f64;
        let sh = to_h as f64 / from_h as f64;
        Intrinsics::new(self.fx * sw, self.fy * sh, self.cx * sw, self.cy * sh)
    }
}

/// Continuous image-plane coordinate (u along width, v along height).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl PixelCoord {
    pub fn new(u: f64, v: f64) -> Self {
        PixelCoord { u, v }
    }
}

/// Lifts a pixel with known depth into the camera frame:
/// `X = depth * ((u - cx)/fx, (v - cy)/fy, 1)`.
pub fn backproject(p: PixelCoord, depth: f64, k: &Intrinsics) -> Result<Vec3> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(Error::InvalidDepth(depth));
    }
    Ok(Vec3::new(
        depth * (p.u - k.cx) / k.fx,
        depth * (p.v - k.cy) / k.fy,
        depth,
    ))
}

/// Projects a camera-frame point onto the image plane. Fails when the point
/// is behind (or numerically on) the principal plane.
pub fn project(point: Vec3, k: &Intrinsics) -> Result<PixelCoord> {
    if !(point.z > MIN_PROJECT_Z) {
        return Err(Error::BehindCamera { z: point.z });
    }
    Ok(PixelCoord::new(
        k.fx * point.x / point.z + k.cx,
        k.fy * point.y / point.z + k.cy,
    ))
}

/// Warps a source pixel into the target view: back-project, transform,
/// project. The identity transform returns `p` unchanged, bit for bit,
/// because back-projection and projection cancel exactly in that case.
pub fn warp_pixel(p: PixelCoord, depth: f64, k: &Intrinsics, t: &SE3Pose) -> Result<PixelCoord> {
    if t.is_identity() {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::InvalidDepth(depth));
        }
        return Ok(p);
    }
    let x = backproject(p, depth, k)?;
    project(t.apply(x), k)
}

/// Dense warp of every pixel of a depth map. Entries are `None` where the
/// source depth is invalid, the transformed point falls behind the camera,
/// or the warped coordinate leaves `[0, w-1] x [0, h-1]`.
#[derive(Debug, Clone)]
pub struct WarpField {
    pub width: usize,
    pub height: usize,
    points: Vec<Option<PixelCoord>>,
}

impl WarpField {
    pub fn get(&self, u: usize, v: usize) -> Option<PixelCoord> {
        self.points[v * self.width + u]
    }

    pub fn points(&self) -> &[Option<PixelCoord>] {
        &self.points
    }

    pub fn valid_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_some()).count()
    }
}

/// Warps the full pixel grid of `depth` into the target view described by
/// `t`, marking invalid pixels rather than failing.
pub fn warp_field(depth: &DepthMap, k: &Intrinsics, t: &SE3Pose) -> WarpField {
    let (w, h) = (depth.width, depth.height);
    let max_u = (w - 1) as f64;
    let max_v = (h - 1) as f64;
    let identity = t.is_identity();
    let mut points = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let d = depth.at(u, v);
            if !(d.is_finite() && d > 0.0) {
                points.push(None);
                continue;
            }
            let p1 = PixelCoord::new(u as f64, v as f64);
            if identity {
                points.push(Some(p1));
                continue;
            }
            let warped = backproject(p1, d, k)
                .and_then(|x| project(t.apply(x), k))
                .ok()
                .filter(|p2| p2.u >= 0.0 && p2.u <= max_u && p2.v >= 0.0 && p2.v <= max_v);
            points.push(warped);
        }
    }
    WarpField { width: w, height: h, points }
}

/// Jacobian of the warped coordinate with respect to the six pose
/// parameters, evaluated analytically. Rows are `(u2, v2)`; columns are
/// `(alpha, beta, gamma, tx, ty, tz)`.
pub fn warp_jacobian(
    p: PixelCoord,
    depth: f64,
    k: &Intrinsics,
    e: &EulerPose6,
) -> Result<[[f64; 6]; 2]> {
    let x = backproject(p, depth, k)?;

    let rx = rot_x(e.alpha);
    let ry = rot_y(e.beta);
    let rz = rot_z(e.gamma);
    let r = rz.mul_mat(&ry).mul_mat(&rx);

    let y = r.mul_vec(x) + e.translation();
    if !(y.z > MIN_PROJECT_Z) {
        return Err(Error::BehindCamera { z: y.z });
    }

    // Derivatives of the transformed point. Rotation factors differentiate
    // in place: d(Rz Ry Rx)/dalpha = Rz Ry Rx', and so on.
    let d_rx = d_rot_x(e.alpha);
    let d_ry = d_rot_y(e.beta);
    let d_rz = d_rot_z(e.gamma);
    let dy = [
        rz.mul_mat(&ry).mul_mat(&d_rx).mul_vec(x),
        rz.mul_mat(&d_ry).mul_mat(&rx).mul_vec(x),
        d_rz.mul_mat(&ry).mul_mat(&rx).mul_vec(x),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
    ];

    // Projection derivative at Y: du/dY = (fx/z, 0, -fx x/z^2),
    // dv/dY = (0, fy/z, -fy y/z^2).
    let inv_z = 1.0 / y.z;
    let du = Vec3::new(k.fx * inv_z, 0.0, -k.fx * y.x * inv_z * inv_z);
    let dv = Vec3::new(0.0, k.fy * inv_z, -k.fy * y.y * inv_z * inv_z);

    let mut jac = [[0.0; 6]; 2];
    for (col, dyk) in dy.iter().enumerate() {
        jac[0][col] = du.dot(*dyk);
        jac[1][col] = dv.dot(*dyk);
    }
    Ok(jac)
}

/// Derivative of [`rot_x`] with respect to its angle.
pub(crate) fn d_rot_x(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::from_rows([0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s])
}

/// Derivative of [`rot_y`] with respect to its angle.
pub(crate) fn d_rot_y(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::from_rows([-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s])
}

/// Derivative of [`rot_z`] with respect to its angle.
pub(crate) fn d_rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::from_rows([-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0])
}
