//! File formats: KITTI odometry pose files, PGM images, raw depth rasters,
//! snippet pose files, intrinsics files, and trajectory exports (CSV, SVG).
//!
//! Every reader and writer here is a pure function over strings or byte
//! buffers; only [`SequenceDataset`] touches the file system. Floats are
//! serialized with Rust's shortest round-trip formatting, so every text
//! format parses back to the exact value that was written.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::camera::Intrinsics;
use crate::error::{Error, Result};
use crate::geometry::{Mat3, SE3Pose, Vec3};
use crate::image::{resize_bilinear, resize_nearest, DepthMap, ImageGray};
use crate::loss::{Snippet, SnippetPoses};
use crate::trajectory::GlobalTrajectory;

/// Orthonormality slack accepted from pose files before a row is rejected;
/// anything within it is re-orthonormalized on ingestion.
pub const KITTI_ROTATION_TOL: f64 = 1e-3;

/// Flushes negative zero, which signed trig and `-R^T t` produce freely, so
/// writers never print "-0".
fn plain(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

fn parse_real(token: &str, line: usize) -> Result<f64> {
    let value: f64 = token
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("not a number: {token:?}") })?;
    if !value.is_finite() {
        return Err(Error::Parse { line, msg: format!("non-finite value: {token:?}") });
    }
    Ok(value)
}

/// Rebuilds an exact rotation from one that drifted: the first two rows are
/// Gram-Schmidt orthonormalized and the third is their cross product, so the
/// result is right-handed and orthonormal to machine precision.
fn reorthonormalize(r: &Mat3) -> Mat3 {
    let r0 = Vec3::new(r.at(0, 0), r.at(0, 1), r.at(0, 2));
    let r1 = Vec3::new(r.at(1, 0), r.at(1, 1), r.at(1, 2));
    let e0 = r0.scale(1.0 / r0.norm());
    let p = r1 - e0.scale(r1.dot(e0));
    let e1 = p.scale(1.0 / p.norm());
    let e2 = e0.cross(e1);
    Mat3::from_rows([e0.x, e0.y, e0.z], [e1.x, e1.y, e1.z], [e2.x, e2.y, e2.z])
}

/// Parses a KITTI odometry pose file: one camera-to-world pose per line as
/// twelve whitespace-separated reals, the row-major upper 3x4 of the
/// homogeneous matrix `[R | t]`. Blank lines are ignored. Rotations may
/// deviate from orthonormality by up to [`KITTI_ROTATION_TOL`] (files store
/// limited digits) and are re-orthonormalized on ingestion.
pub fn read_kitti_poses(text: &str) -> Result<Vec<SE3Pose>> {
    let mut poses = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.len() != 12 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 12 values per pose, found {}", tokens.len()),
            });
        }
        let mut v = [0.0; 12];
        for (slot, token) in v.iter_mut().zip(&tokens) {
            *slot = parse_real(token, line)?;
        }
        let rotation = Mat3::from_rows([v[0], v[1], v[2]], [v[4], v[5], v[6]], [v[8], v[9], v[10]]);
        let deviation = rotation.rotation_deviation();
        if !(deviation <= KITTI_ROTATION_TOL) {
            return Err(Error::Parse {
                line,
                msg: format!("rotation deviates from orthonormal by {deviation:.3e}"),
            });
        }
        let translation = Vec3::new(v[3], v[7], v[11]);
        poses.push(SE3Pose::new(reorthonormalize(&rotation), translation)?);
    }
    Ok(poses)
}

/// Serializes camera-to-world poses in KITTI odometry layout; inverse of
/// [`read_kitti_poses`].
pub fn write_kitti_poses(poses: &[SE3Pose]) -> String {
    let mut out = String::new();
    for p in poses {
        let r = &p.rotation;
        let t = p.translation;
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {} {} {} {}",
            plain(r.at(0, 0)),
            plain(r.at(0, 1)),
            plain(r.at(0, 2)),
            plain(t.x),
            plain(r.at(1, 0)),
            plain(r.at(1, 1)),
            plain(r.at(1, 2)),
            plain(t.y),
            plain(r.at(2, 0)),
            plain(r.at(2, 1)),
            plain(r.at(2, 2)),
            plain(t.z),
        );
    }
    out
}

/// Relative pose between two frames of a camera-to-world trajectory: the
/// returned transform maps frame-`i` camera coordinates into frame-`j`
/// camera coordinates (`W_j^-1 . W_i`).
pub fn gt_relative_pose(world: &[SE3Pose], i: usize, j: usize) -> Result<SE3Pose> {
    let len = world.len();
    let fetch = |index: usize| {
        world.get(index).copied().ok_or(Error::IndexOutOfRange { index, len })
    };
    let wi = fetch(i)?;
    let wj = fetch(j)?;
    Ok(wj.inverse().compose(&wi))
}

/// Streams whitespace-separated header tokens of a PGM, treating `#` as a
/// comment that runs to end of line.
struct PgmTokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PgmTokens<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        PgmTokens { bytes, pos: 0 }
    }

    fn next(&mut self) -> Option<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos >= self.bytes.len() {
                return None;
            }
            if self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            let start = self.pos;
            while self.pos < self.bytes.len()
                && !self.bytes[self.pos].is_ascii_whitespace()
                && self.bytes[self.pos] != b'#'
            {
                self.pos += 1;
            }
            return Some(&self.bytes[start..self.pos]);
        }
    }

    fn next_usize(&mut self, what: &str) -> Result<usize> {
        let token = self
            .next()
            .ok_or_else(|| Error::MalformedPayload(format!("missing {what} in PGM header")))?;
        std::str::from_utf8(token)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedPayload(format!("bad {what} in PGM header")))
    }
}

/// Decodes a PGM image (ASCII `P2` or binary `P5`, maxval up to 65535;
/// binary samples above 255 are big-endian byte pairs) and normalizes
/// intensities to `[0, 1]` by the stated maxval.
pub fn read_image_pgm(bytes: &[u8]) -> Result<ImageGray> {
    let mut tokens = PgmTokens::new(bytes);
    let magic = tokens
        .next()
        .ok_or_else(|| Error::MalformedPayload("empty PGM".into()))?;
    let binary = match magic {
        b"P2" => false,
        b"P5" => true,
        other => {
            return Err(Error::MalformedPayload(format!(
                "bad PGM magic {:?}, expected P2 or P5",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = tokens.next_usize("width")?;
    let height = tokens.next_usize("height")?;
    let maxval = tokens.next_usize("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedPayload(format!("empty PGM raster {width}x{height}")));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(Error::MalformedPayload(format!("PGM maxval {maxval} outside 1..=65535")));
    }
    let count = width * height;
    let mut data = Vec::with_capacity(count);
    if binary {
        // A single whitespace byte separates the maxval from the payload.
        let start = tokens.pos + 1;
        let wide = maxval > 255;
        let expected = count * if wide { 2 } else { 1 };
        let payload = bytes.get(start..).unwrap_or(&[]);
        if payload.len() < expected {
            return Err(Error::MalformedPayload(format!(
                "PGM payload holds {} bytes, expected {expected}",
                payload.len()
            )));
        }
        for px in 0..count {
            let raw = if wide {
                u16::from_be_bytes([payload[2 * px], payload[2 * px + 1]]) as usize
            } else {
                payload[px] as usize
            };
            if raw > maxval {
                return Err(Error::MalformedPayload(format!(
                    "PGM sample {raw} exceeds maxval {maxval}"
                )));
            }
            data.push(raw as f64 / maxval as f64);
        }
    } else {
        for _ in 0..count {
            let raw = tokens.next_usize("sample")?;
            if raw > maxval {
                return Err(Error::MalformedPayload(format!(
                    "PGM sample {raw} exceeds maxval {maxval}"
                )));
            }
            data.push(raw as f64 / maxval as f64);
        }
    }
    ImageGray::new(width, height, data)
}

/// Encodes an image as binary PGM (`P5`), quantizing intensities to
/// `round(value * maxval)`; maxval above 255 switches to big-endian byte
/// pairs. Inverse of [`read_image_pgm`] up to that quantization.
pub fn write_image_pgm(img: &ImageGray, maxval: u16) -> Vec<u8> {
    let maxval = maxval.max(1);
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, maxval).into_bytes();
    for &value in img.data() {
        let q = (value * maxval as f64).round().clamp(0.0, maxval as f64) as u16;
        if maxval > 255 {
            out.extend_from_slice(&q.to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    out
}

/// Decodes a raw depth raster: a header line `DEPTH <width> <height>`
/// followed by width x height little-endian IEEE-754 32-bit reals in
/// row-major order. Values at or below zero mark invalid pixels.
pub fn read_depth_raster(bytes: &[u8]) -> Result<DepthMap> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedPayload("depth raster has no header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::MalformedPayload("depth raster header is not UTF-8".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 || fields[0] != "DEPTH" {
        return Err(Error::MalformedPayload(format!(
            "bad depth raster header {header:?}, expected \"DEPTH <width> <height>\""
        )));
    }
    let width: usize = fields[1]
        .parse()
        .map_err(|_| Error::MalformedPayload(format!("bad depth raster width {:?}", fields[1])))?;
    let height: usize = fields[2]
        .parse()
        .map_err(|_| Error::MalformedPayload(format!("bad depth raster height {:?}", fields[2])))?;
    let payload = &bytes[newline + 1..];
    let expected = width * height * 4;
    if payload.len() != expected {
        return Err(Error::MalformedPayload(format!(
            "depth raster payload holds {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    DepthMap::new(width, height, data)
}

/// Encodes a depth raster; inverse of [`read_depth_raster`]. Depths are
/// stored as 32-bit reals, so a write-then-read round trip is bit-exact for
/// maps whose values carry 32-bit precision (any map previously read from
/// this format does).
pub fn write_depth_raster(depth: &DepthMap) -> Vec<u8> {
    let mut out = format!("DEPTH {} {}\n", depth.width, depth.height).into_bytes();
    for &value in depth.data() {
        out.extend_from_slice(&(value as f32).to_le_bytes());
    }
    out
}

/// Serializes per-snippet pose pairs, two lines per snippet:
/// `<center> prev <alpha> <beta> <gamma> <tx> <ty> <tz>` then the same with
/// the `next` tag. Angles are radians; order matches the pose parameter
/// vector.
pub fn write_snippet_poses(items: &[(usize, SnippetPoses)]) -> String {
    let mut out = String::new();
    for (center, poses) in items {
        for (tag, pose) in [("prev", &poses.prev_to_mid), ("next", &poses.next_to_mid)] {
            let e = pose.to_euler();
            let _ = writeln!(
                out,
                "{center} {tag} {} {} {} {} {} {}",
                plain(e.alpha),
                plain(e.beta),
                plain(e.gamma),
                plain(e.tx),
                plain(e.ty),
                plain(e.tz)
            );
        }
    }
    out
}

/// Parses the output of [`write_snippet_poses`]: for every snippet a `prev`
/// line immediately followed by a `next` line with the same center index.
pub fn read_snippet_poses(text: &str) -> Result<Vec<(usize, SnippetPoses)>> {
    let mut halves: Vec<(usize, usize, bool, SE3Pose)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.len() != 8 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 8 fields per pose line, found {}", tokens.len()),
            });
        }
        let center: usize = tokens[0].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad snippet center {:?}", tokens[0]),
        })?;
        let is_prev = match tokens[1] {
            "prev" => true,
            "next" => false,
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("bad pose tag {other:?}, expected prev or next"),
                })
            }
        };
        let mut v = [0.0; 6];
        for (slot, token) in v.iter_mut().zip(&tokens[2..]) {
            *slot = parse_real(token, line)?;
        }
        let pose = SE3Pose::from_euler(&crate::geometry::EulerPose6::new(
            v[0], v[1], v[2], v[3], v[4], v[5],
        ));
        halves.push((line, center, is_prev, pose));
    }
    let mut items = Vec::with_capacity(halves.len() / 2);
    let mut iter = halves.into_iter();
    while let Some((line, center, is_prev, prev_pose)) = iter.next() {
        if !is_prev {
            return Err(Error::Parse {
                line,
                msg: format!("next line for snippet {center} without a prev line"),
            });
        }
        let Some((line2, center2, is_prev2, next_pose)) = iter.next() else {
            return Err(Error::Parse {
                line,
                msg: format!("snippet {center} has a prev line but no next line"),
            });
        };
        if is_prev2 || center2 != center {
            return Err(Error::Parse {
                line: line2,
                msg: format!("expected the next line of snippet {center}"),
            });
        }
        items.push((center, SnippetPoses { prev_to_mid: prev_pose, next_to_mid: next_pose }));
    }
    Ok(items)
}

/// Parses an intrinsics file: a single line `fx fy cx cy`.
pub fn read_intrinsics(text: &str) -> Result<Intrinsics> {
    let line = text
        .lines()
        .enumerate()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or(Error::Parse { line: 1, msg: "empty intrinsics file".into() })?;
    let (n, raw) = line;
    let tokens: Vec<&str> = raw.split_whitespace().collect();
    if tokens.len() != 4 {
        return Err(Error::Parse {
            line: n + 1,
            msg: format!("expected \"fx fy cx cy\", found {} fields", tokens.len()),
        });
    }
    let mut v = [0.0; 4];
    for (slot, token) in v.iter_mut().zip(&tokens) {
        *slot = parse_real(token, n + 1)?;
    }
    Intrinsics::new(v[0], v[1], v[2], v[3])
}

/// Serializes intrinsics as the single line `fx fy cx cy`.
pub fn write_intrinsics(k: &Intrinsics) -> String {
    format!("{} {} {} {}\n", k.fx, k.fy, k.cx, k.cy)
}

/// Output encodings for [`export_trajectory`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// `frame,x,y,z` header plus one row per frame.
    Csv,
    /// Top-down SVG plot of the camera path.
    Svg,
}

/// Renders a trajectory for external tools. CSV lists the camera position
/// per frame. SVG draws the path top-down, the horizontal axis along world
/// x and forward motion (world z) pointing up the page, auto-scaled with a
/// five-percent margin; `ground_truth` positions, when given, are drawn
/// underneath as a dashed polyline (CSV ignores them).
pub fn export_trajectory(
    traj: &GlobalTrajectory,
    format: ExportFormat,
    ground_truth: Option<&[Vec3]>,
) -> Result<Vec<u8>> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let positions = traj.positions();
    match format {
        ExportFormat::Csv => {
            let mut out = String::from("frame,x,y,z\n");
            for (frame, p) in positions.iter().enumerate() {
                let _ = writeln!(out, "{frame},{},{},{}", plain(p.x), plain(p.y), plain(p.z));
            }
            Ok(out.into_bytes())
        }
        ExportFormat::Svg => Ok(trajectory_svg(&positions, ground_truth).into_bytes()),
    }
}

fn svg_points(positions: &[Vec3]) -> String {
    let mut out = String::new();
    for (i, p) in positions.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{},{}", plain(p.x), plain(-p.z));
    }
    out
}

fn trajectory_svg(positions: &[Vec3], ground_truth: Option<&[Vec3]>) -> String {
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    let all = positions.iter().chain(ground_truth.into_iter().flatten());
    for p in all {
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(-p.z);
        max_y = max_y.max(-p.z);
    }
    // Pad degenerate extents so a single point or an axis-aligned segment
    // still gets a nonzero viewport.
    if max_x - min_x < 1e-12 {
        min_x -= 1.0;
        max_x += 1.0;
    }
    if max_y - min_y < 1e-12 {
        min_y -= 1.0;
        max_y += 1.0;
    }
    let span = (max_x - min_x).max(max_y - min_y);
    let margin = 0.05 * span;
    let view_x = min_x - margin;
    let view_y = min_y - margin;
    let view_w = (max_x - min_x) + 2.0 * margin;
    let view_h = (max_y - min_y) + 2.0 * margin;
    let stroke = span / 300.0;
    let mut out = String::new();
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{view_x} {view_y} {view_w} {view_h}\">\n"
    );
    if let Some(gt) = ground_truth {
        let _ = write!(
            out,
            "  <polyline fill=\"none\" stroke=\"#999999\" stroke-width=\"{stroke}\" \
             stroke-dasharray=\"{} {}\" points=\"{}\"/>\n",
            stroke * 4.0,
            stroke * 3.0,
            svg_points(gt)
        );
    }
    let _ = write!(
        out,
        "  <polyline fill=\"none\" stroke=\"#1a6fb4\" stroke-width=\"{stroke}\" points=\"{}\"/>\n",
        svg_points(positions)
    );
    out.push_str("</svg>\n");
    out
}

/// Image and depth paths of one sequence frame.
#[derive(Debug, Clone)]
pub struct FramePaths {
    pub image: PathBuf,
    pub depth: PathBuf,
}

/// A directory of consecutive frames ready for snippet processing: sorted
/// `*.pgm` images, a matching `<stem>.depth` raster per image, an
/// `intrinsics.txt` (`fx fy cx cy`, at the images' native resolution), and
/// optionally a `poses.txt` with KITTI-format ground-truth world poses.
///
/// Rasters are rescaled to the working size on access — images bilinearly,
/// depths nearest-neighbor so no depths are invented across discontinuities
/// — and the stored intrinsics are pre-scaled to match.
#[derive(Debug, Clone)]
pub struct SequenceDataset {
    frames: Vec<FramePaths>,
    intrinsics: Intrinsics,
    ground_truth: Option<Vec<SE3Pose>>,
    width: usize,
    height: usize,
}

impl SequenceDataset {
    /// Scans `dir` and validates the sequence layout; `width` x `height` is
    /// the working raster size every frame is scaled to. Intrinsics come
    /// from `dir/intrinsics.txt`.
    pub fn load(dir: &Path, width: usize, height: usize) -> Result<Self> {
        Self::load_with(dir, &dir.join("intrinsics.txt"), width, height)
    }

    /// Like [`SequenceDataset::load`] with the intrinsics file at an
    /// explicit path instead of inside the sequence directory.
    pub fn load_with(
        dir: &Path,
        intrinsics_path: &Path,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(Error::InvalidConfig(format!(
                "working size {width}x{height} is smaller than the 3x3 stencil"
            )));
        }
        let mut image_paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
            .collect();
        image_paths.sort();
        if image_paths.len() < 3 {
            return Err(Error::IncompleteInput(format!(
                "sequence needs at least 3 frames, found {} in {}",
                image_paths.len(),
                dir.display()
            )));
        }
        let mut frames = Vec::with_capacity(image_paths.len());
        for image in image_paths {
            let depth = image.with_extension("depth");
            if !depth.exists() {
                return Err(Error::IncompleteInput(format!(
                    "no depth raster {} for image {}",
                    depth.display(),
                    image.display()
                )));
            }
            frames.push(FramePaths { image, depth });
        }
        let k_native = read_intrinsics(&std::fs::read_to_string(intrinsics_path)?)?;
        let first = read_image_pgm(&std::fs::read(&frames[0].image)?)?;
        let sx = width as f64 / first.width as f64;
        let sy = height as f64 / first.height as f64;
        let intrinsics =
            Intrinsics::new(k_native.fx * sx, k_native.fy * sy, k_native.cx * sx, k_native.cy * sy)?;
        let gt_path = dir.join("poses.txt");
        let ground_truth = if gt_path.exists() {
            let poses = read_kitti_poses(&std::fs::read_to_string(gt_path)?)?;
            if poses.len() != frames.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} ground-truth poses for {} frames",
                    poses.len(),
                    frames.len()
                )));
            }
            Some(poses)
        } else {
            None
        };
        Ok(SequenceDataset { frames, intrinsics, ground_truth, width, height })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Intrinsics scaled to the working raster size.
    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    /// Ground-truth camera-to-world poses, when the directory provides them.
    pub fn ground_truth(&self) -> Option<&[SE3Pose]> {
        self.ground_truth.as_deref()
    }

    /// Working raster size as `(width, height)`.
    pub fn working_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Loads one frame, scaled to the working size.
    pub fn frame(&self, index: usize) -> Result<(ImageGray, DepthMap)> {
        let paths = self
            .frames
            .get(index)
            .ok_or(Error::IndexOutOfRange { index, len: self.frames.len() })?;
        let img = read_image_pgm(&std::fs::read(&paths.image)?)?;
        let depth = read_depth_raster(&std::fs::read(&paths.depth)?)?;
        if img.width != depth.width || img.height != depth.height {
            return Err(Error::DimensionMismatch(format!(
                "frame {index}: image is {}x{} but depth is {}x{}",
                img.width, img.height, depth.width, depth.height
            )));
        }
        let img = if (img.width, img.height) == (self.width, self.height) {
            img
        } else {
            resize_bilinear(&img, self.width, self.height)?
        };
        let depth = if (depth.width, depth.height) == (self.width, self.height) {
            depth
        } else {
            resize_nearest(&depth, self.width, self.height)?
        };
        Ok((img, depth))
    }

    /// Loads the three-frame snippet centered on `center`.
    pub fn snippet(&self, center: usize) -> Result<Snippet> {
        if center == 0 || center + 1 >= self.frames.len() {
            return Err(Error::IndexOutOfRange { index: center, len: self.frames.len() });
        }
        let (prev_img, prev_depth) = self.frame(center - 1)?;
        let (mid_img, mid_depth) = self.frame(center)?;
        let (next_img, next_depth) = self.frame(center + 1)?;
        Snippet::new([prev_img, mid_img, next_img], [prev_depth, mid_depth, next_depth])
    }
}
