//! Synthetic scenes with exact geometry for tests, benchmarks, and demo
//! fixtures.
//!
//! [`render_plane_snippet`] images a textured fronto-parallel plane from
//! three nearby camera poses. The outer frames are built by pushing each
//! pixel through the same backproject/transform/project/interpolate chain
//! the photometric loss evaluates, so at the true poses the warp
//! reconstructs the middle frame to the last bit and those residuals are
//! exactly zero. Depth maps store the true ray lengths of the plane
//! intersections, which makes every remaining term geometrically exact as
//! well — only interpolation error is left.

use crate::camera::{backproject, project, Intrinsics, PixelCoord};
use crate::error::{Error, Result};
use crate::geometry::{EulerPose6, SE3Pose, Vec3};
use crate::image::{sample_bilinear, DepthMap, ImageGray};
use crate::loss::{Snippet, SnippetPoses};

/// A fronto-parallel textured plane `z = plane_depth` in the middle frame's
/// coordinates, imaged at a given raster size.
#[derive(Debug, Clone)]
pub struct PlaneScene {
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
    /// Distance of the plane from the middle camera along its optical axis.
    pub plane_depth: f64,
    /// Width of the ring of pixels whose depth is written as invalid in
    /// every frame. A few pixels of inset keep the set of scanned pixels
    /// stable under small pose perturbations, which finite-difference
    /// checks of the loss gradient rely on.
    pub border: usize,
    /// Intensity over plane coordinates, [`smooth_texture`] by default.
    pub texture: fn(f64, f64) -> f64,
}

impl Default for PlaneScene {
    /// 416x128 raster, 200px focal length, principal point at the center,
    /// plane ten units ahead, twenty-pixel invalid ring.
    ///
    /// The ring is wider than [`PlaneScene::sized`]'s because at this focal
    /// length a pose pair with degree-scale rotations can displace corner
    /// pixels by around fifteen pixels between the outer frames; every
    /// scanned pixel must stay inside the target frame across such warps or
    /// the set of valid pixels (and with it the mean loss) jumps
    /// discontinuously under tiny pose changes.
    fn default() -> Self {
        PlaneScene { border: 20, ..PlaneScene::sized(416, 128, 200.0, 10.0) }
    }
}

impl PlaneScene {
    /// Scene with a centered principal point and a six-pixel invalid ring.
    pub fn sized(width: usize, height: usize, focal: f64, plane_depth: f64) -> Self {
        let intrinsics = Intrinsics::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0)
            .expect("positive focal length");
        PlaneScene { width, height, intrinsics, plane_depth, border: 6, texture: smooth_texture }
    }

    fn validate(&self) -> Result<()> {
        if self.width < 3 || self.height < 3 {
            return Err(Error::RasterTooSmall { width: self.width, height: self.height });
        }
        if !(self.plane_depth.is_finite() && self.plane_depth > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "plane depth must be positive, got {}",
                self.plane_depth
            )));
        }
        if 2 * self.border >= self.width.min(self.height) {
            return Err(Error::InvalidConfig(format!(
                "border {} leaves no valid pixels in a {}x{} raster",
                self.border, self.width, self.height
            )));
        }
        Ok(())
    }

    fn in_border(&self, u: usize, v: usize) -> bool {
        u < self.border
            || v < self.border
            || u >= self.width - self.border
            || v >= self.height - self.border
    }
}

/// Band-limited test texture over plane coordinates, bounded away from the
/// intensity range limits.
pub fn smooth_texture(x: f64, y: f64) -> f64 {
    0.5 + 0.18 * (0.9 * x).sin() + 0.15 * (1.3 * y).cos() + 0.12 * (0.7 * x + 1.1 * y).sin()
}

/// Broadband test texture: eight plane waves with spread directions,
/// incommensurate frequencies, and a natural `1/k` amplitude falloff,
/// bounded away from the intensity range limits.
///
/// With only a few smooth waves, every image region shares one slowly
/// varying interpolation-error phase, and a sub-pixel pose shift can align
/// the warp with the pixel grid across the whole raster at once — under an
/// absolute-residual photometric loss that carves spurious minima a few
/// thousandths of a pose unit from the truth. Mixing many frequencies pins
/// a different error phase on every patch, so no rigid motion can lower the
/// interpolation floor and the photometric minimum stays at the true poses.
pub fn rich_texture(x: f64, y: f64) -> f64 {
    const WAVES: [(f64, f64, f64, f64); 8] = [
        // (k, direction, phase, amplitude), amplitudes summing to 0.45
        (0.5, 0.64, 0.9, 0.1516),
        (0.8, 1.95, 4.2, 0.0948),
        (1.1, 2.93, 2.6, 0.0689),
        (1.7, 0.40, 5.3, 0.0446),
        (2.3, 1.66, 1.4, 0.0330),
        (3.1, 2.46, 3.8, 0.0245),
        (4.1, 1.05, 0.3, 0.0185),
        (5.3, 0.16, 5.9, 0.0143),
    ];
    let mut t = 0.5;
    for (k, dir, phase, amp) in WAVES {
        t += amp * (k * (dir.cos() * x + dir.sin() * y) + phase).sin();
    }
    t
}

/// Renders the three snippet frames of `scene` for cameras at the given
/// relative poses (middle camera at the plane-facing origin).
pub fn render_plane_snippet(scene: &PlaneScene, poses: &SnippetPoses) -> Result<Snippet> {
    scene.validate()?;
    let k = &scene.intrinsics;
    let d0 = scene.plane_depth;

    let mid_img = ImageGray::from_fn(scene.width, scene.height, |u, v| {
        let x = d0 * (u as f64 - k.cx) / k.fx;
        let y = d0 * (v as f64 - k.cy) / k.fy;
        (scene.texture)(x, y)
    })?;
    let mid_depth = DepthMap::from_fn(scene.width, scene.height, |u, v| {
        if scene.in_border(u, v) {
            0.0
        } else {
            d0
        }
    })?;

    let (prev_img, prev_depth) = render_outer_frame(scene, &mid_img, &poses.prev_to_mid)?;
    let (next_img, next_depth) = render_outer_frame(scene, &mid_img, &poses.next_to_mid)?;
    Snippet::new([prev_img, mid_img, next_img], [prev_depth, mid_depth, next_depth])
}

/// Images the plane from a camera whose `to_mid` transform carries its
/// coordinates into the middle frame. Pixels whose rays leave the middle
/// frame's field of view fall back to the analytic texture at the plane
/// intersection, a seamless extension of the resampled interior.
fn render_outer_frame(
    scene: &PlaneScene,
    mid_img: &ImageGray,
    to_mid: &SE3Pose,
) -> Result<(ImageGray, DepthMap)> {
    render_chained_frame(scene, mid_img, to_mid, to_mid)
}

/// Images the plane from one camera of a frame chain: depths come from the
/// exact ray intersection with the plane `z = plane_depth` of the anchor
/// frame (reached through `to_anchor`), while intensities are resampled
/// from `sample_img`, the raster of the neighboring frame reached through
/// `to_sample`. Pixels whose rays leave that raster fall back to the
/// analytic texture at the plane intersection, a seamless extension of the
/// resampled interior.
fn render_chained_frame(
    scene: &PlaneScene,
    sample_img: &ImageGray,
    to_sample: &SE3Pose,
    to_anchor: &SE3Pose,
) -> Result<(ImageGray, DepthMap)> {
    let k = &scene.intrinsics;
    let d0 = scene.plane_depth;
    let mut img = vec![0.5; scene.width * scene.height];
    let mut depth = vec![0.0; scene.width * scene.height];
    for v in 0..scene.height {
        for u in 0..scene.width {
            let idx = v * scene.width + u;
            let p = PixelCoord { u: u as f64, v: v as f64 };
            let ray = Vec3::new((p.u - k.cx) / k.fx, (p.v - k.cy) / k.fy, 1.0);
            let denom = to_anchor.rotation.mul_vec(ray).z;
            if denom <= 1e-9 {
                continue; // ray parallel to or away from the plane
            }
            let d = (d0 - to_anchor.translation.z) / denom;
            if !(d.is_finite() && d > 1e-6) {
                continue;
            }
            // Identical call chain to the loss scan, so resampled pixels
            // reproduce the warp values bit for bit.
            let x = backproject(p, d, k)?;
            let y = to_sample.apply(x);
            let fallback = || {
                let w = to_anchor.apply(x);
                (scene.texture)(w.x, w.y)
            };
            let value = match project(y, k) {
                Ok(p2) => match sample_bilinear(sample_img, p2.u, p2.v) {
                    Ok(value) => value,
                    Err(_) => fallback(),
                },
                Err(_) => fallback(),
            };
            img[idx] = value;
            if !scene.in_border(u, v) {
                depth[idx] = d;
            }
        }
    }
    Ok((
        ImageGray::new(scene.width, scene.height, img)?,
        DepthMap::new(scene.width, scene.height, depth)?,
    ))
}

/// Renders the plane scene from every camera of a pose chain, for sequence
/// fixtures longer than one snippet.
///
/// `world` holds camera-to-world poses; the plane sits at `z = plane_depth`
/// in the coordinates of frame `anchor`, which is rendered analytically.
/// The remaining frames are resampled along the chain, each from its
/// anchor-side neighbor, so every adjacent pair shares the exact
/// backproject/transform/project/interpolate relationship the photometric
/// loss measures: at the true relative poses, warping a frame onto its
/// anchor-side neighbor reproduces that neighbor bit for bit. Depth maps
/// hold the exact plane intersections in every frame.
pub fn render_plane_sequence(
    scene: &PlaneScene,
    world: &[SE3Pose],
    anchor: usize,
) -> Result<Vec<(ImageGray, DepthMap)>> {
    scene.validate()?;
    if anchor >= world.len() {
        return Err(Error::IndexOutOfRange { index: anchor, len: world.len() });
    }
    let k = &scene.intrinsics;
    let d0 = scene.plane_depth;
    let anchor_img = ImageGray::from_fn(scene.width, scene.height, |u, v| {
        let x = d0 * (u as f64 - k.cx) / k.fx;
        let y = d0 * (v as f64 - k.cy) / k.fy;
        (scene.texture)(x, y)
    })?;
    let anchor_depth = DepthMap::from_fn(scene.width, scene.height, |u, v| {
        if scene.in_border(u, v) {
            0.0
        } else {
            d0
        }
    })?;
    let mut frames: Vec<Option<(ImageGray, DepthMap)>> = vec![None; world.len()];
    frames[anchor] = Some((anchor_img, anchor_depth));
    for i in anchor + 1..world.len() {
        let pair = {
            let neighbor = &frames[i - 1].as_ref().expect("chain fills in order").0;
            render_chained_frame(
                scene,
                neighbor,
                &relative_pose(world, i, i - 1),
                &relative_pose(world, i, anchor),
            )?
        };
        frames[i] = Some(pair);
    }
    for i in (0..anchor).rev() {
        let pair = {
            let neighbor = &frames[i + 1].as_ref().expect("chain fills in order").0;
            render_chained_frame(
                scene,
                neighbor,
                &relative_pose(world, i, i + 1),
                &relative_pose(world, i, anchor),
            )?
        };
        frames[i] = Some(pair);
    }
    Ok(frames.into_iter().map(|f| f.expect("every frame rendered")).collect())
}

/// Images the plane analytically from every camera of a pose chain: each
/// pixel ray is intersected with the plane `z = plane_depth` of the camera
/// frame given by `plane` (a camera-to-world pose, e.g. `&world[k]` to
/// attach the plane fronto-parallel to frame `k`) and the texture is
/// evaluated exactly at the intersection point. Composing a rotation into
/// `plane` slants the surface relative to the whole chain, which gives the
/// views genuine depth variation.
///
/// Unlike [`render_plane_sequence`], no frame is a resample of another, so
/// no warp reproduces its target bit for bit — but no image carries another
/// raster's interpolation error either. That makes these views the closest
/// synthetic analogue of independently captured photographs of one static
/// scene: every photometric term sees the same unbiased interpolation
/// noise, and none of them tilts a flat direction of the loss away from the
/// true poses. Depth maps hold the exact plane intersections.
pub fn render_plane_views(
    scene: &PlaneScene,
    world: &[SE3Pose],
    plane: &SE3Pose,
) -> Result<Vec<(ImageGray, DepthMap)>> {
    scene.validate()?;
    let to_plane = plane.inverse();
    world.iter().map(|w| render_plane_view(scene, &to_plane.compose(w))).collect()
}

/// Analytic view of the plane from a camera whose `to_plane` transform
/// carries its coordinates into the frame the plane is defined in.
fn render_plane_view(scene: &PlaneScene, to_plane: &SE3Pose) -> Result<(ImageGray, DepthMap)> {
    let k = &scene.intrinsics;
    let d0 = scene.plane_depth;
    let mut img = vec![0.5; scene.width * scene.height];
    let mut depth = vec![0.0; scene.width * scene.height];
    for v in 0..scene.height {
        for u in 0..scene.width {
            let idx = v * scene.width + u;
            let p = PixelCoord { u: u as f64, v: v as f64 };
            let ray = Vec3::new((p.u - k.cx) / k.fx, (p.v - k.cy) / k.fy, 1.0);
            let denom = to_plane.rotation.mul_vec(ray).z;
            if denom <= 1e-9 {
                continue; // ray parallel to or away from the plane
            }
            let d = (d0 - to_plane.translation.z) / denom;
            if !(d.is_finite() && d > 1e-6) {
                continue;
            }
            let w = to_plane.apply(backproject(p, d, k)?);
            img[idx] = (scene.texture)(w.x, w.y);
            if !scene.in_border(u, v) {
                depth[idx] = d;
            }
        }
    }
    Ok((
        ImageGray::new(scene.width, scene.height, img)?,
        DepthMap::new(scene.width, scene.height, depth)?,
    ))
}

/// Camera-to-world poses of a gently arcing forward drive: unit steps of
/// about 0.8 along the optical axis with slowly varying yaw, pitch, roll,
/// and lateral sway, so consecutive frames overlap strongly but the path
/// is genuinely three-dimensional.
pub fn arc_trajectory(n: usize) -> Vec<SE3Pose> {
    let mut world = Vec::with_capacity(n);
    world.push(SE3Pose::identity());
    for kk in 1..n {
        let kf = kk as f64;
        let step = SE3Pose::from_euler(&EulerPose6::new(
            0.0008 * (0.05 * kf).sin(),
            0.0025,
            0.0004 * (0.07 * kf).cos(),
            0.01 * (0.03 * kf).sin(),
            0.006 * (0.045 * kf).cos(),
            0.8,
        ));
        let prev = world[kk - 1];
        world.push(prev.compose(&step));
    }
    world
}

/// Transform taking frame `from` coordinates to frame `to` coordinates,
/// given camera-to-world poses.
pub fn relative_pose(world: &[SE3Pose], from: usize, to: usize) -> SE3Pose {
    world[to].inverse().compose(&world[from])
}

/// Exact snippet measurements for every interior frame of a camera-to-world
/// chain, keyed by center frame index — the input shape the trajectory
/// splicer consumes.
pub fn snippet_measurements(world: &[SE3Pose]) -> Vec<(usize, SnippetPoses)> {
    if world.len() < 3 {
        return Vec::new();
    }
    (1..world.len() - 1)
        .map(|c| {
            (
                c,
                SnippetPoses {
                    prev_to_mid: relative_pose(world, c - 1, c),
                    next_to_mid: relative_pose(world, c + 1, c),
                },
            )
        })
        .collect()
}
