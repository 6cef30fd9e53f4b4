//! Splicing per-snippet relative poses into a global trajectory.
//!
//! Snippet optimization yields, for the snippet centered on frame `t`, the
//! transforms `prev_to_mid` (frame `t-1` into `t`) and `next_to_mid` (frame
//! `t+1` into `t`). Re-expressed as forward steps these give, per start
//! frame `k`, a one-step transform `T_{k,k+1}` and a two-step transform
//! `T_{k,k+2}` (both point transforms into the later frame).
//!
//! Because consecutive snippets overlap, frame `k` is reached twice while
//! accumulating: through the one-step chain ending at `k-1` and through the
//! two-step chain ending at `k-2`. The splice averages the two candidates:
//! rotations as quaternions interpolated halfway, translations
//! arithmetically. For self-consistent inputs both routes agree and the
//! result equals plain sequential composition.

use crate::error::{Error, Result};
use crate::geometry::{slerp, SE3Pose, UnitQuaternion, Vec3};
use crate::loss::SnippetPoses;

/// Forward step measurements starting at `frame`: the transform to the next
/// frame and, when the source snippet provides it, to the frame after that.
#[derive(Debug, Clone, Copy)]
pub struct ForwardPosePair {
    pub frame: usize,
    /// Point transform from frame `frame` into frame `frame + 1`.
    pub one_step: SE3Pose,
    /// Point transform from frame `frame` into frame `frame + 2`.
    pub two_step: Option<SE3Pose>,
}

/// Converts one snippet result into forward steps anchored at `center - 1`.
///
/// `prev_to_mid` is already the one-step transform from `center - 1`. The
/// two-step transform chains `prev_to_mid` with the inverse of
/// `next_to_mid`: into the middle frame, then out to `center + 1`.
pub fn snippet_to_forward(p: &SnippetPoses, center: usize) -> Result<ForwardPosePair> {
    if center == 0 {
        return Err(Error::IndexOutOfRange { index: 0, len: 0 });
    }
    Ok(ForwardPosePair {
        frame: center - 1,
        one_step: p.prev_to_mid,
        two_step: Some(p.next_to_mid.inverse().compose(&p.prev_to_mid)),
    })
}

/// How the one-step transform of an interior frame is chosen when two
/// overlapping snippets both measure it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverlapPolicy {
    /// Use `prev_to_mid` of the later snippet; the earlier snippet's
    /// measurement only feeds the two-step term.
    #[default]
    PrevToMid,
    /// Blend both measurements: rotations interpolated halfway,
    /// translations averaged.
    Blend,
}

/// Builds the forward-step list for frames `0..n-1` from per-snippet poses.
///
/// `results` holds `(center, poses)` pairs whose centers must be the
/// consecutive run `1..=n-2`; every interior frame is then covered. The
/// final frame step, which no snippet measures forward, comes from the
/// inverse of the last snippet's `next_to_mid`.
pub fn gather_sequence(
    results: &[(usize, SnippetPoses)],
    policy: OverlapPolicy,
) -> Result<Vec<ForwardPosePair>> {
    if results.is_empty() {
        return Err(Error::IncompleteInput("no snippet results to gather".into()));
    }
    for (i, (center, _)) in results.iter().enumerate() {
        if *center != i + 1 {
            return Err(Error::IncompleteInput(format!(
                "snippet centers must run 1, 2, ... without gaps; entry {i} has center {center}"
            )));
        }
    }
    let n_frames = results.len() + 2;
    let mut pairs = Vec::with_capacity(n_frames - 1);
    for (center, poses) in results {
        let mut pair = snippet_to_forward(poses, *center)?;
        if policy == OverlapPolicy::Blend && *center >= 2 {
            // The snippet centered one frame earlier measured this same
            // step as the inverse of its next_to_mid.
            let other = results[*center - 2].1.next_to_mid.inverse();
            pair.one_step = blend_poses(&pair.one_step, &other)?;
        }
        pairs.push(pair);
    }
    let last = &results[results.len() - 1].1;
    pairs.push(ForwardPosePair {
        frame: n_frames - 2,
        one_step: last.next_to_mid.inverse(),
        two_step: None,
    });
    Ok(pairs)
}

/// Halfway blend of two nearby rigid transforms.
fn blend_poses(a: &SE3Pose, b: &SE3Pose) -> Result<SE3Pose> {
    let qa = UnitQuaternion::from_rotation(&a.rotation)?;
    let qb = UnitQuaternion::from_rotation(&b.rotation)?;
    let q = slerp(&qa, &qb, 0.5);
    let t = (a.translation + b.translation) * 0.5;
    Ok(SE3Pose::from_parts(q.to_rotation(), t))
}

/// One accumulated trajectory frame.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryFrame {
    /// Rotation of the accumulated point transform from frame 0 into this
    /// frame.
    pub rotation: UnitQuaternion,
    /// Translation of the accumulated point transform.
    pub translation: Vec3,
    /// Camera position expressed in frame-0 coordinates.
    pub position: Vec3,
}

/// Accumulated global trajectory over frames `0..len`.
#[derive(Debug, Clone)]
pub struct GlobalTrajectory {
    frames: Vec<TrajectoryFrame>,
}

impl GlobalTrajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, k: usize) -> &TrajectoryFrame {
        &self.frames[k]
    }

    pub fn frames(&self) -> &[TrajectoryFrame] {
        &self.frames
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.frames.iter().map(|f| f.position).collect()
    }

    /// Camera-to-frame-0 pose of each frame (the inverse of the accumulated
    /// point transform); its translation is the camera position.
    pub fn world_poses(&self) -> Vec<SE3Pose> {
        self.frames
            .iter()
            .map(|f| SE3Pose::from_parts(f.rotation.to_rotation(), f.translation).inverse())
            .collect()
    }
}

/// Accumulates forward steps into the global trajectory for `n_frames`
/// frames.
///
/// Frame 0 is the identity and frame 1 copies its single one-step
/// measurement. Every later frame `k` fuses two accumulation routes:
///
/// * two-step route: `T_{k-2,k}` applied to the accumulated frame `k-2`,
/// * one-step route: `T_{k-1,k}` applied to the accumulated frame `k-1`.
///
/// Rotations combine by quaternion products and are fused with a halfway
/// slerp; translations accumulate as `q * t' * q^-1 + step_translation` per
/// route and are averaged. Positions are recovered as `-R^T * t'`.
pub fn splice(pairs: &[ForwardPosePair], n_frames: usize) -> Result<GlobalTrajectory> {
    if n_frames == 0 {
        return Err(Error::IncompleteInput("trajectory needs at least one frame".into()));
    }
    // Index the measurements by start frame.
    let mut one_step: Vec<Option<&SE3Pose>> = vec![None; n_frames.saturating_sub(1)];
    let mut two_step: Vec<Option<&SE3Pose>> = vec![None; n_frames.saturating_sub(2)];
    for pair in pairs {
        if pair.frame + 1 < n_frames {
            one_step[pair.frame] = Some(&pair.one_step);
        }
        if let Some(two) = &pair.two_step {
            if pair.frame + 2 < n_frames {
                two_step[pair.frame] = Some(two);
            }
        }
    }
    for (k, slot) in one_step.iter().enumerate() {
        if slot.is_none() {
            return Err(Error::IncompleteInput(format!("missing one-step transform at frame {k}")));
        }
    }
    for (k, slot) in two_step.iter().enumerate() {
        if slot.is_none() {
            return Err(Error::IncompleteInput(format!("missing two-step transform at frame {k}")));
        }
    }

    let mut frames = Vec::with_capacity(n_frames);
    frames.push(TrajectoryFrame {
        rotation: UnitQuaternion::identity(),
        translation: Vec3::ZERO,
        position: Vec3::ZERO,
    });
    if n_frames >= 2 {
        let step = one_step[0].expect("checked above");
        let q = UnitQuaternion::from_rotation(&step.rotation)?;
        frames.push(accumulated_frame(q, step.translation));
    }
    for k in 2..n_frames {
        let two = two_step[k - 2].expect("checked above");
        let one = one_step[k - 1].expect("checked above");
        let q_two = UnitQuaternion::from_rotation(&two.rotation)?;
        let q_one = UnitQuaternion::from_rotation(&one.rotation)?;

        let via_two = q_two.multiply(&frames[k - 2].rotation);
        let via_one = q_one.multiply(&frames[k - 1].rotation);
        let rotation = slerp(&via_two, &via_one, 0.5);

        let t_two = q_two.rotate(frames[k - 2].translation) + two.translation;
        let t_one = q_one.rotate(frames[k - 1].translation) + one.translation;
        let translation = (t_two + t_one) * 0.5;

        frames.push(accumulated_frame(rotation, translation));
    }
    Ok(GlobalTrajectory { frames })
}

fn accumulated_frame(rotation: UnitQuaternion, translation: Vec3) -> TrajectoryFrame {
    let position = -rotation.to_rotation().transpose().mul_vec(translation);
    TrajectoryFrame { rotation, translation, position }
}

/// Convenience: gather snippet results and splice them in one call.
pub fn splice_snippets(
    results: &[(usize, SnippetPoses)],
    policy: OverlapPolicy,
) -> Result<GlobalTrajectory> {
    let pairs = gather_sequence(results, policy)?;
    splice(&pairs, results.len() + 2)
}
