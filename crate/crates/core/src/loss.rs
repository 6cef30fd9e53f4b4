//! Photometric snippet losses.
//!
//! A snippet is three consecutive frames (`prev`, `mid`, `next`) with per-
//! pixel depth. Two relative poses describe the motion: `prev_to_mid` and
//! `next_to_mid`, both mapping points of the outer frame into the middle
//! frame. The loss warps pixels between every ordered frame pair reachable
//! from those two poses and scores absolute intensity differences:
//!
//! * `l_t`: both outer frames warped onto `mid`.
//! * `l_prev`: `mid` and `next` warped onto `prev` (through the inverse and
//!   the composed transform).
//! * `l_next`: `prev` and `mid` warped onto `next`.
//! * `l_smooth`: depth smoothness, independent of the poses.
//! * `l_edge`: the two `l_t` warps restricted to edge pixels of their
//!   source frames, emphasizing alignment where the texture is sharp.
//!
//! `l_intensity = l_t + l_prev + l_next + lambda_s * l_smooth` and
//! `l_final = l_intensity + lambda_e * l_edge`.
//!
//! Every photometric term is reduced with the same deterministic row-major
//! accumulation, so repeated evaluations are bit-identical and the fused
//! loss-plus-gradient path in the optimizer reproduces these values exactly.

use crate::camera::{Intrinsics, MIN_PROJECT_Z};
use crate::error::{Error, Result};
use crate::geometry::{SE3Pose, Vec3};
use crate::image::{self, DepthMap, EdgeMask, ImageGray, LaplaceKernel, DEFAULT_EDGE_PERCENTILE};

/// Frame roles within a snippet, in temporal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameId {
    Prev = 0,
    Mid = 1,
    Next = 2,
}

/// Three consecutive frames with depth, all rasters sharing one shape.
#[derive(Debug, Clone)]
pub struct Snippet {
    images: [ImageGray; 3],
    depths: [DepthMap; 3],
}

impl Snippet {
    pub fn new(images: [ImageGray; 3], depths: [DepthMap; 3]) -> Result<Self> {
        let (w, h) = (images[0].width, images[0].height);
        let image_shapes_ok = images.iter().all(|i| i.width == w && i.height == h);
        let depth_shapes_ok = depths.iter().all(|d| d.width == w && d.height == h);
        if !image_shapes_ok || !depth_shapes_ok {
            return Err(Error::DimensionMismatch(
                "snippet rasters must all share one shape".into(),
            ));
        }
        Ok(Snippet { images, depths })
    }

    pub fn image(&self, f: FrameId) -> &ImageGray {
        &self.images[f as usize]
    }

    pub fn depth(&self, f: FrameId) -> &DepthMap {
        &self.depths[f as usize]
    }

    pub fn width(&self) -> usize {
        self.images[0].width
    }

    pub fn height(&self) -> usize {
        self.images[0].height
    }

    /// True when no frame carries a single valid depth measurement.
    pub fn all_depths_invalid(&self) -> bool {
        self.depths.iter().all(|d| d.valid_count() == 0)
    }
}

/// Relative poses of a snippet: point transforms from each outer frame into
/// the middle frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnippetPoses {
    pub prev_to_mid: SE3Pose,
    pub next_to_mid: SE3Pose,
}

impl SnippetPoses {
    pub fn identity() -> Self {
        SnippetPoses { prev_to_mid: SE3Pose::identity(), next_to_mid: SE3Pose::identity() }
    }
}

/// Loss term weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Smoothness weight, default 0.5.
    pub lambda_s: f64,
    /// Edge-term weight, default 20.
    pub lambda_e: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_s: 0.5, lambda_e: 20.0 }
    }
}

/// How a photometric sum is reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Mean over contributing pixels; terms stay comparable when validity
    /// masks differ between frames.
    #[default]
    Mean,
    /// Raw sum over contributing pixels.
    Sum,
}

/// Depth-smoothness stencil order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmoothOrder {
    /// Absolute first differences.
    First,
    /// Absolute second differences (default).
    #[default]
    Second,
}

/// Full loss configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub kernel: LaplaceKernel,
    /// Percentile of |Laplace response| kept as edge pixels, default 90.
    pub edge_percentile: f64,
    pub smooth_order: SmoothOrder,
    /// When set, every warped term gets an edge-weighted companion, not
    /// just the two terms targeting the middle frame.
    pub edge_all_targets: bool,
    pub normalization: Normalization,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            weights: LossWeights::default(),
            kernel: LaplaceKernel::Four,
            edge_percentile: DEFAULT_EDGE_PERCENTILE,
            smooth_order: SmoothOrder::Second,
            edge_all_targets: false,
            normalization: Normalization::Mean,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.weights.lambda_s >= 0.0 && self.weights.lambda_s.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda_s must be finite and non-negative, got {}",
                self.weights.lambda_s
            )));
        }
        if !(self.weights.lambda_e >= 0.0 && self.weights.lambda_e.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda_e must be finite and non-negative, got {}",
                self.weights.lambda_e
            )));
        }
        if !self.edge_percentile.is_finite() {
            return Err(Error::InvalidConfig("edge percentile must be finite".into()));
        }
        Ok(())
    }
}

/// Accumulated photometric error: raw sum of absolute residuals and the
/// number of pixels that contributed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhotoStat {
    pub sum: f64,
    pub count: usize,
}

impl PhotoStat {
    #[inline]
    pub(crate) fn add(&mut self, abs_residual: f64) {
        self.sum += abs_residual;
        self.count += 1;
    }

    /// Mean residual, zero when no pixel contributed.
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    pub fn normalized(&self, norm: Normalization) -> f64 {
        match norm {
            Normalization::Mean => self.mean(),
            Normalization::Sum => self.sum,
        }
    }
}

/// Per-term contributing-pixel counts of one loss evaluation. Edge counts
/// cover the edge-weighted companions that were active.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TermCounts {
    pub prev_to_mid: usize,
    pub next_to_mid: usize,
    pub mid_to_prev: usize,
    pub next_to_prev: usize,
    pub prev_to_next: usize,
    pub mid_to_next: usize,
    pub edge: usize,
}

/// One full loss evaluation, split by term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_t: f64,
    pub l_prev: f64,
    pub l_next: f64,
    pub l_smooth: f64,
    pub l_edge: f64,
    /// `l_t + l_prev + l_next + lambda_s * l_smooth`.
    pub l_intensity: f64,
    /// `l_intensity + lambda_e * l_edge`.
    pub l_final: f64,
    pub counts: TermCounts,
}

/// The six warped frame pairs of one snippet evaluation, in the fixed order
/// used everywhere: the two `l_t` terms, the two `l_prev` terms, the two
/// `l_next` terms.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TermSpec {
    pub src: FrameId,
    pub tgt: FrameId,
    pub transform: SE3Pose,
}

pub(crate) const TERM_COUNT: usize = 6;

/// Builds the six term transforms from the two snippet poses. The composed
/// transforms route through the middle frame: for example `next -> prev`
/// applies `next_to_mid`, then the inverse of `prev_to_mid`.
pub(crate) fn term_plan(p: &SnippetPoses) -> [TermSpec; TERM_COUNT] {
    let t_p = p.prev_to_mid;
    let t_n = p.next_to_mid;
    let inv_p = t_p.inverse();
    let inv_n = t_n.inverse();
    [
        TermSpec { src: FrameId::Prev, tgt: FrameId::Mid, transform: t_p },
        TermSpec { src: FrameId::Next, tgt: FrameId::Mid, transform: t_n },
        TermSpec { src: FrameId::Mid, tgt: FrameId::Prev, transform: inv_p },
        TermSpec { src: FrameId::Next, tgt: FrameId::Prev, transform: inv_p.compose(&t_n) },
        TermSpec { src: FrameId::Prev, tgt: FrameId::Next, transform: inv_n.compose(&t_p) },
        TermSpec { src: FrameId::Mid, tgt: FrameId::Next, transform: inv_n },
    ]
}

/// Index pairs of [`term_plan`] entries per aggregate: `(l_t, l_prev, l_next)`.
pub(crate) const TERM_GROUPS: [(usize, usize); 3] = [(0, 1), (2, 3), (4, 5)];

/// Core photometric scan: warps every usable source pixel into the target
/// view and accumulates `|I_src(p1) - I_tgt(p2)|` in row-major order.
///
/// Pixels are skipped when masked out, when the source depth is invalid,
/// when the transformed point lands behind the camera, or when the warped
/// coordinate leaves the target raster. For each contributing pixel the
/// visitor receives the pixel index, the back-projected source point, the
/// transformed target-frame point, the signed residual, and the spatial
/// gradient of the target image at the warped coordinate; loss-only callers
/// pass a no-op visitor, which the compiler removes.
pub(crate) fn photometric_scan<F>(
    src_img: &ImageGray,
    src_depth: &DepthMap,
    tgt_img: &ImageGray,
    k: &Intrinsics,
    t: &SE3Pose,
    mask: Option<&EdgeMask>,
    mut visit: F,
) -> PhotoStat
where
    F: FnMut(usize, Vec3, Vec3, f64, f64, f64),
{
    let (w, h) = (src_img.width, src_img.height);
    let max_u = (tgt_img.width - 1) as f64;
    let max_v = (tgt_img.height - 1) as f64;
    let identity = t.is_identity();
    let src = src_img.data();
    let dep = src_depth.data();
    let mut stat = PhotoStat::default();
    for v in 0..h {
        let vf = v as f64;
        for u in 0..w {
            let idx = v * w + u;
            if let Some(m) = mask {
                if !m.data()[idx] {
                    continue;
                }
            }
            let d = dep[idx];
            if !(d > 0.0) {
                continue;
            }
            let uf = u as f64;
            let x = Vec3::new(d * (uf - k.cx) / k.fx, d * (vf - k.cy) / k.fy, d);
            let (y, p2u, p2v) = if identity {
                (x, uf, vf)
            } else {
                let y = t.apply(x);
                if !(y.z > MIN_PROJECT_Z) {
                    continue;
                }
                (y, k.fx * y.x / y.z + k.cx, k.fy * y.y / y.z + k.cy)
            };
            if !(p2u >= 0.0 && p2u <= max_u && p2v >= 0.0 && p2v <= max_v) {
                continue;
            }
            let (value, gu, gv) = image::bilinear_cell(tgt_img, p2u, p2v);
            let r = src[idx] - value;
            stat.add(r.abs());
            visit(idx, x, y, r, gu, gv);
        }
    }
    stat
}

fn check_term_shapes(
    src_img: &ImageGray,
    src_depth: &DepthMap,
    mask: Option<&EdgeMask>,
) -> Result<()> {
    if src_depth.width != src_img.width || src_depth.height != src_img.height {
        return Err(Error::DimensionMismatch(format!(
            "source image {}x{} vs depth {}x{}",
            src_img.width, src_img.height, src_depth.width, src_depth.height
        )));
    }
    if let Some(m) = mask {
        if m.width != src_img.width || m.height != src_img.height {
            return Err(Error::DimensionMismatch(format!(
                "source image {}x{} vs mask {}x{}",
                src_img.width, src_img.height, m.width, m.height
            )));
        }
    }
    Ok(())
}

/// Photometric error of warping `src` into `tgt` under `t`, optionally
/// restricted to masked source pixels. Returns the raw sum and pixel count;
/// use [`PhotoStat::mean`] or [`PhotoStat::normalized`] to reduce.
pub fn photometric_term(
    src_img: &ImageGray,
    src_depth: &DepthMap,
    tgt_img: &ImageGray,
    k: &Intrinsics,
    t: &SE3Pose,
    mask: Option<&EdgeMask>,
) -> Result<PhotoStat> {
    check_term_shapes(src_img, src_depth, mask)?;
    Ok(photometric_scan(src_img, src_depth, tgt_img, k, t, mask, |_, _, _, _, _, _| {}))
}

fn term_stat(s: &Snippet, k: &Intrinsics, spec: &TermSpec, mask: Option<&EdgeMask>) -> PhotoStat {
    photometric_scan(
        s.image(spec.src),
        s.depth(spec.src),
        s.image(spec.tgt),
        k,
        &spec.transform,
        mask,
        |_, _, _, _, _, _| {},
    )
}

/// Photometric loss against the middle frame: both outer frames warped onto
/// `mid`, each reduced independently, then summed.
pub fn loss_t(s: &Snippet, p: &SnippetPoses, k: &Intrinsics, norm: Normalization) -> f64 {
    let plan = term_plan(p);
    term_stat(s, k, &plan[0], None).normalized(norm)
        + term_stat(s, k, &plan[1], None).normalized(norm)
}

/// Photometric loss against the previous frame: `mid` and `next` warped
/// onto `prev`.
pub fn loss_prev(s: &Snippet, p: &SnippetPoses, k: &Intrinsics, norm: Normalization) -> f64 {
    let plan = term_plan(p);
    term_stat(s, k, &plan[2], None).normalized(norm)
        + term_stat(s, k, &plan[3], None).normalized(norm)
}

/// Photometric loss against the next frame: `prev` and `mid` warped onto
/// `next`.
pub fn loss_next(s: &Snippet, p: &SnippetPoses, k: &Intrinsics, norm: Normalization) -> f64 {
    let plan = term_plan(p);
    term_stat(s, k, &plan[4], None).normalized(norm)
        + term_stat(s, k, &plan[5], None).normalized(norm)
}

/// Depth-smoothness loss: mean absolute difference stencil along rows and
/// columns, evaluated where every stencil tap has a valid depth, averaged
/// over the three maps. Independent of the poses.
pub fn smooth_loss(depths: &[DepthMap; 3], order: SmoothOrder) -> f64 {
    let mut total = 0.0;
    for d in depths {
        total += smooth_loss_single(d, order);
    }
    total / 3.0
}

/// Mean absolute stencil response along one direction; each direction is
/// reduced on its own and the two means are summed per map.
fn smooth_loss_single(d: &DepthMap, order: SmoothOrder) -> f64 {
    struct Acc {
        sum: f64,
        count: usize,
    }
    impl Acc {
        fn add(&mut self, taps: &[f64]) {
            if taps.iter().all(|t| *t > 0.0) {
                let r = match taps {
                    [a, b] => b - a,
                    [a, b, c] => a - 2.0 * b + c,
                    _ => unreachable!(),
                };
                self.sum += r.abs();
                self.count += 1;
            }
        }
        fn mean(&self) -> f64 {
            if self.count == 0 {
                0.0
            } else {
                self.sum / self.count as f64
            }
        }
    }
    let (w, h) = (d.width, d.height);
    let mut along_u = Acc { sum: 0.0, count: 0 };
    let mut along_v = Acc { sum: 0.0, count: 0 };
    match order {
        SmoothOrder::First => {
            for v in 0..h {
                for u in 1..w {
                    along_u.add(&[d.at(u - 1, v), d.at(u, v)]);
                }
            }
            for v in 1..h {
                for u in 0..w {
                    along_v.add(&[d.at(u, v - 1), d.at(u, v)]);
                }
            }
        }
        SmoothOrder::Second => {
            for v in 0..h {
                for u in 1..w.saturating_sub(1) {
                    along_u.add(&[d.at(u - 1, v), d.at(u, v), d.at(u + 1, v)]);
                }
            }
            for v in 1..h.saturating_sub(1) {
                for u in 0..w {
                    along_v.add(&[d.at(u, v - 1), d.at(u, v), d.at(u, v + 1)]);
                }
            }
        }
    }
    along_u.mean() + along_v.mean()
}

/// Edge masks of the snippet frames used by the edge-weighted terms.
#[derive(Debug, Clone)]
pub struct SnippetMasks {
    pub prev: EdgeMask,
    pub next: EdgeMask,
    /// Only computed when edge weighting extends to all targets.
    pub mid: Option<EdgeMask>,
}

impl SnippetMasks {
    /// Thresholds each needed frame's Laplace response into a mask.
    pub fn compute(s: &Snippet, cfg: &LossConfig) -> Result<Self> {
        let (w, h) = (s.width(), s.height());
        let mask_of = |f: FrameId| -> Result<EdgeMask> {
            let response = image::laplace(s.image(f), cfg.kernel)?;
            image::edge_mask(&response, w, h, cfg.edge_percentile)
        };
        Ok(SnippetMasks {
            prev: mask_of(FrameId::Prev)?,
            next: mask_of(FrameId::Next)?,
            mid: if cfg.edge_all_targets { Some(mask_of(FrameId::Mid)?) } else { None },
        })
    }

    pub(crate) fn for_frame(&self, f: FrameId) -> Option<&EdgeMask> {
        match f {
            FrameId::Prev => Some(&self.prev),
            FrameId::Next => Some(&self.next),
            FrameId::Mid => self.mid.as_ref(),
        }
    }

    pub(crate) fn check_shapes(&self, s: &Snippet) -> Result<()> {
        let (w, h) = (s.width(), s.height());
        let ok = |m: &EdgeMask| m.width == w && m.height == h;
        if !ok(&self.prev) || !ok(&self.next) || !self.mid.as_ref().map(&ok).unwrap_or(true) {
            return Err(Error::DimensionMismatch("edge masks must match snippet shape".into()));
        }
        Ok(())
    }
}

/// Edge-weighted photometric loss: the two middle-frame warps restricted to
/// edge pixels of their source frames.
pub fn edge_loss(
    s: &Snippet,
    p: &SnippetPoses,
    k: &Intrinsics,
    masks: &SnippetMasks,
    norm: Normalization,
) -> Result<f64> {
    masks.check_shapes(s)?;
    let plan = term_plan(p);
    Ok(term_stat(s, k, &plan[0], Some(&masks.prev)).normalized(norm)
        + term_stat(s, k, &plan[1], Some(&masks.next)).normalized(norm))
}

/// Which term-plan entries carry an edge-weighted companion.
pub(crate) fn edge_slots(cfg: &LossConfig) -> &'static [usize] {
    if cfg.edge_all_targets {
        &[0, 1, 2, 3, 4, 5]
    } else {
        &[0, 1]
    }
}

/// Assembles a [`LossBreakdown`] from the six term stats, their edge
/// companions, and the smoothness value. Shared by the plain evaluation and
/// the optimizer's fused loss-plus-gradient pass so both produce identical
/// numbers.
pub(crate) fn assemble_breakdown(
    stats: &[PhotoStat; TERM_COUNT],
    edge_stats: &[PhotoStat; TERM_COUNT],
    l_smooth: f64,
    cfg: &LossConfig,
) -> LossBreakdown {
    let norm = cfg.normalization;
    let group = |(a, b): (usize, usize)| stats[a].normalized(norm) + stats[b].normalized(norm);
    let l_t = group(TERM_GROUPS[0]);
    let l_prev = group(TERM_GROUPS[1]);
    let l_next = group(TERM_GROUPS[2]);
    let mut l_edge = 0.0;
    let mut edge_count = 0usize;
    for &slot in edge_slots(cfg) {
        l_edge += edge_stats[slot].normalized(norm);
        edge_count += edge_stats[slot].count;
    }
    let l_intensity = l_t + l_prev + l_next + cfg.weights.lambda_s * l_smooth;
    let l_final = l_intensity + cfg.weights.lambda_e * l_edge;
    LossBreakdown {
        l_t,
        l_prev,
        l_next,
        l_smooth,
        l_edge,
        l_intensity,
        l_final,
        counts: TermCounts {
            prev_to_mid: stats[0].count,
            next_to_mid: stats[1].count,
            mid_to_prev: stats[2].count,
            next_to_prev: stats[3].count,
            prev_to_next: stats[4].count,
            mid_to_next: stats[5].count,
            edge: edge_count,
        },
    }
}

/// Full loss with caller-provided edge masks. Masks are computed once per
/// snippet and held fixed while poses change, which keeps the objective
/// continuous during optimization.
pub fn total_loss_with_masks(
    s: &Snippet,
    p: &SnippetPoses,
    k: &Intrinsics,
    cfg: &LossConfig,
    masks: &SnippetMasks,
) -> Result<LossBreakdown> {
    cfg.validate()?;
    masks.check_shapes(s)?;
    if cfg.edge_all_targets && masks.mid.is_none() {
        return Err(Error::IncompleteInput(
            "edge weighting over all targets needs a middle-frame mask".into(),
        ));
    }
    let plan = term_plan(p);
    let edge_active = edge_slots(cfg);
    let mut stats = [PhotoStat::default(); TERM_COUNT];
    let mut edge_stats = [PhotoStat::default(); TERM_COUNT];
    for (i, spec) in plan.iter().enumerate() {
        if edge_active.contains(&i) {
            // One scan feeds both the plain term and its edge companion;
            // masked pixels accumulate in the same row-major order a
            // separate masked scan would use, so the sums match bit for bit.
            let mask = masks.for_frame(spec.src).expect("mask presence checked above");
            let edge = &mut edge_stats[i];
            stats[i] = photometric_scan(
                s.image(spec.src),
                s.depth(spec.src),
                s.image(spec.tgt),
                k,
                &spec.transform,
                None,
                |idx, _, _, r, _, _| {
                    if mask.data()[idx] {
                        edge.add(r.abs());
                    }
                },
            );
        } else {
            stats[i] = term_stat(s, k, spec, None);
        }
    }
    let l_smooth = smooth_loss(
        &[s.depth(FrameId::Prev).clone(), s.depth(FrameId::Mid).clone(), s.depth(FrameId::Next).clone()],
        cfg.smooth_order,
    );
    Ok(assemble_breakdown(&stats, &edge_stats, l_smooth, cfg))
}

/// Full loss: computes edge masks from the snippet frames, then evaluates
/// every term. See [`total_loss_with_masks`] to reuse masks across calls.
pub fn total_loss(
    s: &Snippet,
    p: &SnippetPoses,
    k: &Intrinsics,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    cfg.validate()?;
    let masks = SnippetMasks::compute(s, cfg)?;
    total_loss_with_masks(s, p, k, cfg, &masks)
}

/// Component-wise mean of several breakdowns, used to report a dataset
/// loss as the mean of per-snippet losses. The aggregate `l_intensity` and
/// `l_final` are re-derived from the averaged components so the breakdown
/// identities hold exactly; counts accumulate.
pub fn average_breakdowns(items: &[LossBreakdown], weights: &LossWeights) -> Option<LossBreakdown> {
    if items.is_empty() {
        return None;
    }
    let n = items.len() as f64;
    let mean = |f: fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
    let l_t = mean(|b| b.l_t);
    let l_prev = mean(|b| b.l_prev);
    let l_next = mean(|b| b.l_next);
    let l_smooth = mean(|b| b.l_smooth);
    let l_edge = mean(|b| b.l_edge);
    let l_intensity = l_t + l_prev + l_next + weights.lambda_s * l_smooth;
    let l_final = l_intensity + weights.lambda_e * l_edge;
    let mut counts = TermCounts::default();
    for b in items {
        counts.prev_to_mid += b.counts.prev_to_mid;
        counts.next_to_mid += b.counts.next_to_mid;
        counts.mid_to_prev += b.counts.mid_to_prev;
        counts.next_to_prev += b.counts.next_to_prev;
        counts.prev_to_next += b.counts.prev_to_next;
        counts.mid_to_next += b.counts.mid_to_next;
        counts.edge += b.counts.edge;
    }
    Some(LossBreakdown { l_t, l_prev, l_next, l_smooth, l_edge, l_intensity, l_final, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mat3;
    use approx::assert_abs_diff_eq;

    fn texture(u: usize, v: usize) -> f64 {
        0.5 + 0.25 * ((u as f64) * 0.37).sin() + 0.2 * ((v as f64) * 0.53).cos()
    }

    fn flat_snippet(w: usize, h: usize, depth: f64) -> Snippet {
        let img = ImageGray::from_fn(w, h, texture).unwrap();
        let d = DepthMap::constant(w, h, depth).unwrap();
        Snippet::new([img.clone(), img.clone(), img], [d.clone(), d.clone(), d]).unwrap()
    }

    fn k_simple() -> Intrinsics {
        Intrinsics::new(50.0, 50.0, 7.5, 5.5).unwrap()
    }

    #[test]
    fn identity_poses_on_identical_frames_give_zero_photometric_loss() {
        let s = flat_snippet(16, 12, 10.0);
        let k = k_simple();
        let p = SnippetPoses::identity();
        let stat = photometric_term(
            s.image(FrameId::Prev),
            s.depth(FrameId::Prev),
            s.image(FrameId::Mid),
            &k,
            &SE3Pose::identity(),
            None,
        )
        .unwrap();
        assert_eq!(stat.sum, 0.0);
        assert_eq!(stat.count, 16 * 12);
        assert_eq!(loss_t(&s, &p, &k, Normalization::Mean), 0.0);
        assert_eq!(loss_prev(&s, &p, &k, Normalization::Mean), 0.0);
        assert_eq!(loss_next(&s, &p, &k, Normalization::Mean), 0.0);
    }

    #[test]
    fn one_pixel_shift_with_matching_translation_is_exact() {
        // Target equals source shifted one pixel right; a point transform
        // with tx = depth / fx warps source pixels onto their twins.
        let (w, h) = (20, 10);
        let depth = 8.0;
        let k = k_simple();
        let src = ImageGray::from_fn(w, h, texture).unwrap();
        let tgt = ImageGray::from_fn(w, h, |u, v| if u == 0 { texture(0, v) } else { texture(u - 1, v) })
            .unwrap();
        let d = DepthMap::constant(w, h, depth).unwrap();
        let t = SE3Pose::new(Mat3::IDENTITY, Vec3::new(depth / k.fx, 0.0, 0.0)).unwrap();
        let stat = photometric_term(&src, &d, &tgt, &k, &t, None).unwrap();
        assert!(stat.mean() < 1e-6, "mean residual {}", stat.mean());
        // Last column warps out of bounds, everything else contributes.
        assert_eq!(stat.count, (w - 1) * h);
    }

    #[test]
    fn photometric_term_skips_invalid_depths() {
        let s = flat_snippet(8, 8, 5.0);
        let k = k_simple();
        let mut vals = s.depth(FrameId::Prev).data().to_vec();
        vals[10] = 0.0;
        vals[20] = -3.0;
        let d = DepthMap::new(8, 8, vals).unwrap();
        let stat =
            photometric_term(s.image(FrameId::Prev), &d, s.image(FrameId::Mid), &k, &SE3Pose::identity(), None)
                .unwrap();
        assert_eq!(stat.count, 62);
    }

    #[test]
    fn photometric_term_checks_shapes() {
        let s = flat_snippet(8, 8, 5.0);
        let k = k_simple();
        let d = DepthMap::constant(7, 8, 5.0).unwrap();
        assert!(matches!(
            photometric_term(s.image(FrameId::Prev), &d, s.image(FrameId::Mid), &k, &SE3Pose::identity(), None),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn swapping_outer_frames_and_poses_keeps_l_t() {
        let w = 14;
        let h = 9;
        let img_a = ImageGray::from_fn(w, h, texture).unwrap();
        let img_b = ImageGray::from_fn(w, h, |u, v| texture(u + 3, v + 1)).unwrap();
        let img_m = ImageGray::from_fn(w, h, |u, v| texture(u + 1, v + 2)).unwrap();
        let d = DepthMap::constant(w, h, 6.0).unwrap();
        let k = k_simple();
        let t_a = SE3Pose::new(Mat3::IDENTITY, Vec3::new(0.05, 0.0, 0.01)).unwrap();
        let t_b = SE3Pose::new(Mat3::IDENTITY, Vec3::new(-0.04, 0.02, 0.0)).unwrap();

        let s1 = Snippet::new(
            [img_a.clone(), img_m.clone(), img_b.clone()],
            [d.clone(), d.clone(), d.clone()],
        )
        .unwrap();
        let p1 = SnippetPoses { prev_to_mid: t_a, next_to_mid: t_b };
        let s2 = Snippet::new([img_b, img_m, img_a], [d.clone(), d.clone(), d]).unwrap();
        let p2 = SnippetPoses { prev_to_mid: t_b, next_to_mid: t_a };

        assert_eq!(
            loss_t(&s1, &p1, &k, Normalization::Mean),
            loss_t(&s2, &p2, &k, Normalization::Mean)
        );
    }

    #[test]
    fn smooth_loss_of_quadratic_depth_row() {
        // depth(u) = (u + 1)^2: second difference along u is exactly 2,
        // flat along v.
        let d = DepthMap::from_fn(8, 5, |u, _| ((u + 1) * (u + 1)) as f64).unwrap();
        let l = smooth_loss(&[d.clone(), d.clone(), d], SmoothOrder::Second);
        assert_abs_diff_eq!(l, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn smooth_loss_skips_invalid_taps() {
        let mut vals = vec![4.0; 25];
        vals[12] = -1.0;
        let d = DepthMap::new(5, 5, vals).unwrap();
        let l = smooth_loss(&[d.clone(), d.clone(), d], SmoothOrder::Second);
        assert_eq!(l, 0.0);
        let empty = DepthMap::constant(4, 4, -1.0).unwrap();
        assert_eq!(smooth_loss(&[empty.clone(), empty.clone(), empty], SmoothOrder::Second), 0.0);
    }

    #[test]
    fn smooth_loss_first_order_of_linear_ramp() {
        let d = DepthMap::from_fn(6, 4, |u, _| (u + 1) as f64).unwrap();
        let l = smooth_loss(&[d.clone(), d.clone(), d], SmoothOrder::First);
        // Horizontal steps are 1; vertical steps are 0; means combine as 1 + 0.
        assert_abs_diff_eq!(l, 1.0, epsilon = 1e-12);
    }

    fn step_snippet() -> (Snippet, Intrinsics) {
        // Vertical step edge with identical frames; misalignment along u is
        // visible exactly at the step.
        let (w, h) = (12, 10);
        let img = ImageGray::from_fn(w, h, |u, _| if u < 6 { 0.2 } else { 0.8 }).unwrap();
        let d = DepthMap::constant(w, h, 10.0).unwrap();
        let s = Snippet::new([img.clone(), img.clone(), img], [d.clone(), d.clone(), d]).unwrap();
        (s, Intrinsics::new(40.0, 40.0, 5.5, 4.5).unwrap())
    }

    #[test]
    fn edge_loss_penalizes_misregistration_at_edges() {
        let (s, k) = step_snippet();
        let cfg = LossConfig::default();
        let masks = SnippetMasks::compute(&s, &cfg).unwrap();
        assert!(masks.prev.count() > 0);

        let aligned = edge_loss(&s, &SnippetPoses::identity(), &k, &masks, Normalization::Mean).unwrap();
        assert_eq!(aligned, 0.0);

        // Half-pixel sideways motion leaves the smooth regions cheap but
        // lights up the edge pixels.
        let t = SE3Pose::new(Mat3::IDENTITY, Vec3::new(0.5 * 10.0 / k.fx, 0.0, 0.0)).unwrap();
        let shifted = SnippetPoses { prev_to_mid: t, next_to_mid: t };
        let misaligned = edge_loss(&s, &shifted, &k, &masks, Normalization::Mean).unwrap();
        assert!(misaligned > 0.05, "edge loss {misaligned}");
    }

    #[test]
    fn breakdown_identities_hold_exactly() {
        let (s, k) = k_and_textured_snippet();
        let p = SnippetPoses {
            prev_to_mid: SE3Pose::new(Mat3::IDENTITY, Vec3::new(0.03, -0.01, 0.02)).unwrap(),
            next_to_mid: SE3Pose::new(Mat3::IDENTITY, Vec3::new(-0.02, 0.015, -0.01)).unwrap(),
        };
        let cfg = LossConfig::default();
        let b = total_loss(&s, &p, &k, &cfg).unwrap();
        assert_eq!(
            b.l_intensity,
            b.l_t + b.l_prev + b.l_next + cfg.weights.lambda_s * b.l_smooth
        );
        assert_eq!(b.l_final, b.l_intensity + cfg.weights.lambda_e * b.l_edge);
        assert!(b.l_final >= 0.0);

        // The component entry points agree with the breakdown.
        assert_eq!(b.l_t, loss_t(&s, &p, &k, cfg.normalization));
        assert_eq!(b.l_prev, loss_prev(&s, &p, &k, cfg.normalization));
        assert_eq!(b.l_next, loss_next(&s, &p, &k, cfg.normalization));
        let masks = SnippetMasks::compute(&s, &cfg).unwrap();
        assert_eq!(b.l_edge, edge_loss(&s, &p, &k, &masks, cfg.normalization).unwrap());
    }

    fn k_and_textured_snippet() -> (Snippet, Intrinsics) {
        let (w, h) = (24, 16);
        let mk = |shift: usize| ImageGray::from_fn(w, h, move |u, v| texture(u + shift, v)).unwrap();
        let d = DepthMap::from_fn(w, h, |u, v| 8.0 + 0.1 * ((u + v) as f64)).unwrap();
        let s = Snippet::new([mk(0), mk(1), mk(2)], [d.clone(), d.clone(), d]).unwrap();
        (s, Intrinsics::new(30.0, 30.0, 11.5, 7.5).unwrap())
    }

    #[test]
    fn final_loss_is_affine_in_edge_weight() {
        let (s, k) = k_and_textured_snippet();
        let p = SnippetPoses {
            prev_to_mid: SE3Pose::new(Mat3::IDENTITY, Vec3::new(0.02, 0.0, 0.0)).unwrap(),
            next_to_mid: SE3Pose::new(Mat3::IDENTITY, Vec3::new(-0.02, 0.0, 0.0)).unwrap(),
        };
        let eval = |lambda_e: f64| {
            let cfg = LossConfig {
                weights: LossWeights { lambda_s: 0.5, lambda_e },
                ..LossConfig::default()
            };
            total_loss(&s, &p, &k, &cfg).unwrap().l_final
        };
        let base = eval(0.0);
        let unit = eval(1.0) - base;
        for lambda in [2.0, 10.0, 55.5, 100.0] {
            assert_abs_diff_eq!(eval(lambda) - base, lambda * unit, epsilon = 1e-12);
        }
    }

    #[test]
    fn average_breakdowns_keeps_identities() {
        let (s, k) = k_and_textured_snippet();
        let cfg = LossConfig::default();
        let p1 = SnippetPoses::identity();
        let p2 = SnippetPoses {
            prev_to_mid: SE3Pose::new(Mat3::IDENTITY, Vec3::new(0.01, 0.0, 0.0)).unwrap(),
            next_to_mid: SE3Pose::identity(),
        };
        let items = [
            total_loss(&s, &p1, &k, &cfg).unwrap(),
            total_loss(&s, &p2, &k, &cfg).unwrap(),
        ];
        let avg = average_breakdowns(&items, &cfg.weights).unwrap();
        assert_eq!(
            avg.l_intensity,
            avg.l_t + avg.l_prev + avg.l_next + cfg.weights.lambda_s * avg.l_smooth
        );
        assert_eq!(avg.counts.prev_to_mid, items[0].counts.prev_to_mid + items[1].counts.prev_to_mid);
        assert!(average_breakdowns(&[], &cfg.weights).is_none());
    }

    #[test]
    fn rejects_negative_weights() {
        let cfg = LossConfig {
            weights: LossWeights { lambda_s: -0.1, lambda_e: 1.0 },
            ..LossConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }
}
