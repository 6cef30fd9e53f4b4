//! Trajectory evaluation: closed-form similarity alignment and absolute
//! trajectory error over sliding windows.
//!
//! The alignment solves `min sum ||b_i - (s R a_i + t)||^2` in closed form:
//! the rotation comes from the largest eigenvector of the quaternion
//! profile matrix built from the point cross-covariance, scale and
//! translation follow from the centroids. The window error re-bases both
//! trajectories to each window's first frame, fits a least-squares scale,
//! and reports the root-mean-square position residual.

use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::{Mat3, SE3Pose, UnitQuaternion, Vec3};
use crate::loss::SnippetPoses;

/// Similarity transform `p -> scale * rotation * p + translation`.
#[derive(Debug, Clone, Copy)]
pub struct Alignment {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Alignment {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) * self.scale + self.translation
    }

    /// Mean squared residual of mapping `source` onto `target`.
    pub fn mean_squared_residual(&self, source: &[Vec3], target: &[Vec3]) -> f64 {
        if source.is_empty() {
            return 0.0;
        }
        let sum: f64 = source
            .iter()
            .zip(target)
            .map(|(a, b)| (*b - self.apply(*a)).norm_squared())
            .sum();
        sum / source.len() as f64
    }
}

/// Least-squares similarity aligning `source` points onto `target` points.
///
/// Needs at least three point pairs in general position; collinear or
/// coincident sources leave the rotation underdetermined and are rejected.
pub fn horn_align(source: &[Vec3], target: &[Vec3]) -> Result<Alignment> {
    if source.len() != target.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} source points vs {} target points",
            source.len(),
            target.len()
        )));
    }
    let n = source.len();
    if n < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "similarity alignment needs at least 3 point pairs, got {n}"
        )));
    }
    let nf = n as f64;
    let mut a_bar = Vec3::ZERO;
    let mut b_bar = Vec3::ZERO;
    for i in 0..n {
        a_bar = a_bar + source[i];
        b_bar = b_bar + target[i];
    }
    a_bar = a_bar * (1.0 / nf);
    b_bar = b_bar * (1.0 / nf);

    // Source scatter decides solvability; rank must exceed one.
    let mut scatter = [[0.0; 3]; 3];
    let mut cross = [[0.0; 3]; 3]; // cross[r][c] = sum a_c[r] * b_c[c]
    let mut a_norm2 = 0.0;
    for i in 0..n {
        let a = source[i] - a_bar;
        let b = target[i] - b_bar;
        let av = [a.x, a.y, a.z];
        let bv = [b.x, b.y, b.z];
        for r in 0..3 {
            for c in 0..3 {
                scatter[r][c] += av[r] * av[c];
                cross[r][c] += av[r] * bv[c];
            }
        }
        a_norm2 += a.norm_squared();
    }
    let (scatter_eigs, _) = jacobi_eigen::<3>(scatter);
    let mut eigs = scatter_eigs;
    eigs.sort_by(|x, y| y.partial_cmp(x).expect("finite eigenvalues"));
    if !(eigs[0] > 0.0) || eigs[1] <= eigs[0] * 1e-12 {
        return Err(Error::DegenerateGeometry(
            "source points are coincident or collinear".into(),
        ));
    }

    // Quaternion profile matrix; its top eigenvector is the rotation taking
    // centered source points onto centered target points.
    let s = &cross;
    let profile = [
        [
            s[0][0] + s[1][1] + s[2][2],
            s[1][2] - s[2][1],
            s[2][0] - s[0][2],
            s[0][1] - s[1][0],
        ],
        [
            s[1][2] - s[2][1],
            s[0][0] - s[1][1] - s[2][2],
            s[0][1] + s[1][0],
            s[2][0] + s[0][2],
        ],
        [
            s[2][0] - s[0][2],
            s[0][1] + s[1][0],
            -s[0][0] + s[1][1] - s[2][2],
            s[1][2] + s[2][1],
        ],
        [
            s[0][1] - s[1][0],
            s[2][0] + s[0][2],
            s[1][2] + s[2][1],
            -s[0][0] - s[1][1] + s[2][2],
        ],
    ];
    let (vals, vecs) = jacobi_eigen::<4>(profile);
    let mut best = 0;
    for i in 1..4 {
        if vals[i] > vals[best] {
            best = i;
        }
    }
    let q = UnitQuaternion::new(vecs[0][best], vecs[1][best], vecs[2][best], vecs[3][best])?;
    let rotation = q.to_rotation();

    // Least-squares scale for fixed rotation.
    let mut num = 0.0;
    for i in 0..n {
        let a = source[i] - a_bar;
        let b = target[i] - b_bar;
        num += b.dot(rotation.mul_vec(a));
    }
    let scale = num / a_norm2;
    let translation = b_bar - rotation.mul_vec(a_bar) * scale;
    Ok(Alignment { scale, rotation, translation })
}

/// Cyclic Jacobi eigensolver for small symmetric matrices. Returns the
/// eigenvalues and the matching eigenvectors as columns of the second
/// result.
fn jacobi_eigen<const N: usize>(mut a: [[f64; N]; N]) -> ([f64; N], [[f64; N]; N]) {
    let mut v = [[0.0; N]; N];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..N {
            for q in p + 1..N {
                off += a[p][q] * a[p][q];
            }
        }
        if off <= f64::MIN_POSITIVE {
            break;
        }
        for p in 0..N - 1 {
            for q in p + 1..N {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..N {
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for i in 0..N {
                    let api = a[p][i];
                    let aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
                for row in v.iter_mut() {
                    let vip = row[p];
                    let viq = row[q];
                    row[p] = c * vip - s * viq;
                    row[q] = s * vip + c * viq;
                }
            }
        }
    }
    let mut vals = [0.0; N];
    for (i, val) in vals.iter_mut().enumerate() {
        *val = a[i][i];
    }
    (vals, v)
}

/// Camera positions of a snippet's three frames expressed in the first
/// frame's coordinates: the first frame sits at the origin, the others are
/// the camera centers of the accumulated transforms out of it.
pub fn snippet_positions(p: &SnippetPoses) -> [Vec3; 3] {
    let first_to_last = p.next_to_mid.inverse().compose(&p.prev_to_mid);
    [Vec3::ZERO, p.prev_to_mid.camera_center(), first_to_last.camera_center()]
}

/// Root-mean-square trajectory error between matched position lists that
/// share their first frame as origin. A least-squares scale on the
/// predictions absorbs the global scale ambiguity; when the predictions are
/// all zero the scale is fixed to zero and the error is the target's own
/// magnitude.
pub fn snippet_ate(pred: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted vs {} reference positions",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::DegenerateInput("no positions to compare".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        num += g.dot(*p);
        den += p.dot(*p);
    }
    let scale = if den > 0.0 { num / den } else { 0.0 };
    let mut sum = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        sum += (*g - *p * scale).norm_squared();
    }
    Ok((sum / pred.len() as f64).sqrt())
}

/// Per-window trajectory errors with their mean and population standard
/// deviation.
#[derive(Debug, Clone)]
pub struct AteReport {
    pub per_window: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl AteReport {
    fn from_errors(per_window: Vec<f64>) -> Self {
        let n = per_window.len() as f64;
        let mean = per_window.iter().sum::<f64>() / n;
        let var = per_window.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
        AteReport { per_window, mean, std: var.sqrt() }
    }
}

impl fmt::Display for AteReport {
    /// Formats as `mean±std` with four decimals, e.g. `0.0163±0.0059`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}\u{b1}{:.4}", self.mean, self.std)
    }
}

/// Sliding-window absolute trajectory error between two camera-to-world
/// pose lists of equal length.
///
/// Every window of `window` consecutive frames (stride one) is re-based to
/// its first frame, scale-aligned, and scored with [`snippet_ate`].
pub fn sequence_ate(pred: &[SE3Pose], gt: &[SE3Pose], window: usize) -> Result<AteReport> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted vs {} reference poses",
            pred.len(),
            gt.len()
        )));
    }
    if window < 2 {
        return Err(Error::InvalidConfig(format!("window must span at least 2 frames, got {window}")));
    }
    if pred.len() < window {
        return Err(Error::DegenerateInput(format!(
            "{} poses cannot fill a window of {window}",
            pred.len()
        )));
    }
    let rebase = |poses: &[SE3Pose], start: usize| -> Vec<Vec3> {
        let inv = poses[start].inverse();
        (0..window).map(|j| inv.compose(&poses[start + j]).translation).collect()
    };
    let mut errors = Vec::with_capacity(pred.len() - window + 1);
    for start in 0..=pred.len() - window {
        let p = rebase(pred, start);
        let g = rebase(gt, start);
        errors.push(snippet_ate(&p, &g)?);
    }
    Ok(AteReport::from_errors(errors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euler_to_rotation, rot_z, EulerPose6};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
        let q = UnitQuaternion::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        match q {
            Ok(q) => q.to_rotation(),
            Err(_) => Mat3::IDENTITY,
        }
    }

    #[test]
    fn horn_recovers_known_similarity() {
        let source = [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.4, -0.3, 0.2),
        ];
        let r = rot_z(FRAC_PI_2);
        let s = 2.0;
        let t = Vec3::new(1.0, 0.0, 0.0);
        let target: Vec<Vec3> = source.iter().map(|p| r.mul_vec(*p) * s + t).collect();
        let align = horn_align(&source, &target).unwrap();
        assert_abs_diff_eq!(align.scale, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(align.translation.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(align.translation.y, 0.0, epsilon = 1e-12);
        for i in 0..9 {
            assert_abs_diff_eq!(align.rotation.m[i], r.m[i], epsilon = 1e-12);
        }
        assert!(align.mean_squared_residual(&source, &target) < 1e-28);
    }

    #[test]
    fn horn_recovers_random_similarities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let r = random_rotation(&mut rng);
            let s = rng.gen_range(0.5..2.0);
            let t = Vec3::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            );
            let source: Vec<Vec3> = (0..12)
                .map(|_| {
                    Vec3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect();
            let target: Vec<Vec3> = source.iter().map(|p| r.mul_vec(*p) * s + t).collect();
            let align = horn_align(&source, &target).unwrap();
            assert_abs_diff_eq!(align.scale, s, epsilon = 1e-9);
            assert!((align.translation - t).norm() < 1e-9);
            for i in 0..9 {
                assert_abs_diff_eq!(align.rotation.m[i], r.m[i], epsilon = 1e-9);
            }
            assert!(align.mean_squared_residual(&source, &target) < 1e-15);
        }
    }

    /// Independent rotation estimate: Newton iteration for the orthogonal
    /// polar factor of the target-source cross-covariance.
    fn polar_rotation(source: &[Vec3], target: &[Vec3]) -> Mat3 {
        let nf = source.len() as f64;
        let mut a_bar = Vec3::ZERO;
        let mut b_bar = Vec3::ZERO;
        for i in 0..source.len() {
            a_bar = a_bar + source[i];
            b_bar = b_bar + target[i];
        }
        a_bar = a_bar * (1.0 / nf);
        b_bar = b_bar * (1.0 / nf);
        // m = sum (b - b_bar)(a - a_bar)^T so that R ~ polar(m).
        let mut m = Mat3::ZERO;
        for i in 0..source.len() {
            let a = source[i] - a_bar;
            let b = target[i] - b_bar;
            let av = [a.x, a.y, a.z];
            let bv = [b.x, b.y, b.z];
            let mut vals = m.m;
            for r in 0..3 {
                for c in 0..3 {
                    vals[r * 3 + c] += bv[r] * av[c];
                }
            }
            m = Mat3 { m: vals };
        }
        fn inverse(m: &Mat3) -> Mat3 {
            let d = m.det();
            let a = &m.m;
            let adj = [
                a[4] * a[8] - a[5] * a[7],
                a[2] * a[7] - a[1] * a[8],
                a[1] * a[5] - a[2] * a[4],
                a[5] * a[6] - a[3] * a[8],
                a[0] * a[8] - a[2] * a[6],
                a[2] * a[3] - a[0] * a[5],
                a[3] * a[7] - a[4] * a[6],
                a[1] * a[6] - a[0] * a[7],
                a[0] * a[4] - a[1] * a[3],
            ];
            let mut out = [0.0; 9];
            for i in 0..9 {
                out[i] = adj[i] / d;
            }
            Mat3 { m: out }
        }
        let mut x = m;
        for _ in 0..60 {
            let next = x.add_mat(&inverse(&x).transpose()).scale(0.5);
            x = next;
        }
        x
    }

    #[test]
    fn horn_rotation_matches_polar_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let r = random_rotation(&mut rng);
            let source: Vec<Vec3> = (0..9)
                .map(|_| {
                    Vec3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect();
            let target: Vec<Vec3> =
                source.iter().map(|p| r.mul_vec(*p) * 1.3 + Vec3::new(0.2, -0.4, 1.0)).collect();
            let align = horn_align(&source, &target).unwrap();
            let polar = polar_rotation(&source, &target);
            for i in 0..9 {
                assert_abs_diff_eq!(align.rotation.m[i], polar.m[i], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn horn_rejects_degenerate_configurations() {
        let line: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let target = line.clone();
        assert!(matches!(
            horn_align(&line, &target),
            Err(Error::DegenerateGeometry(_))
        ));
        let two = [Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)];
        assert!(horn_align(&two, &two).is_err());
        let a = [Vec3::ZERO; 4];
        assert!(horn_align(&a, &a).is_err());
        let three = [Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        assert!(matches!(
            horn_align(&three, &two),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn snippet_ate_of_exact_prediction_is_zero() {
        let gt = [Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.1, 0.0)];
        assert_eq!(snippet_ate(&gt, &gt).unwrap(), 0.0);
    }

    #[test]
    fn snippet_ate_absorbs_global_scale() {
        let gt = [Vec3::ZERO, Vec3::new(1.0, 0.2, 0.0), Vec3::new(2.0, 0.3, 0.4)];
        let pred: Vec<Vec3> = gt.iter().map(|p| *p * 0.37).collect();
        assert!(snippet_ate(&pred, &gt).unwrap() < 1e-12);
    }

    #[test]
    fn snippet_ate_of_rotated_straight_line() {
        // Prediction rotated 90 degrees: the optimal scale is zero and the
        // error is the reference magnitude, sqrt(5/3).
        let gt = [Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        let pred = [Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 2.0, 0.0)];
        let e = snippet_ate(&pred, &gt).unwrap();
        assert_abs_diff_eq!(e, (5.0f64 / 3.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn snippet_ate_all_zero_prediction_uses_zero_scale() {
        let gt = [Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        let pred = [Vec3::ZERO; 3];
        let e = snippet_ate(&pred, &gt).unwrap();
        assert_abs_diff_eq!(e, (5.0f64 / 3.0).sqrt(), epsilon = 1e-12);
    }

    fn chain(n: usize) -> Vec<SE3Pose> {
        let mut world = vec![SE3Pose::identity()];
        for k in 1..n {
            let kf = k as f64;
            let step = SE3Pose::from_euler(&EulerPose6::new(
                0.001 * (0.1 * kf).sin(),
                0.002,
                0.0,
                0.05 * (0.2 * kf).cos(),
                0.01,
                0.5,
            ));
            let prev = world[k - 1];
            world.push(prev.compose(&step));
        }
        world
    }

    #[test]
    fn sequence_ate_of_identical_trajectories_is_zero() {
        let world = chain(40);
        let report = sequence_ate(&world, &world, 3).unwrap();
        assert_eq!(report.per_window.len(), 38);
        assert!(report.mean < 1e-15);
        assert_eq!(format!("{report}"), "0.0000\u{b1}0.0000");
    }

    #[test]
    fn sequence_ate_ignores_global_rigid_offset() {
        let world = chain(30);
        let offset = SE3Pose::new(
            euler_to_rotation(0.3, -0.2, 1.0),
            Vec3::new(100.0, -50.0, 3.0),
        )
        .unwrap();
        let moved: Vec<SE3Pose> = world.iter().map(|w| offset.compose(w)).collect();
        let report = sequence_ate(&moved, &world, 3).unwrap();
        assert!(report.mean < 1e-10, "mean {}", report.mean);
    }

    #[test]
    fn sequence_ate_validates_inputs() {
        let world = chain(5);
        assert!(sequence_ate(&world, &world[..4], 3).is_err());
        assert!(sequence_ate(&world[..2], &world[..2], 3).is_err());
        assert!(sequence_ate(&world, &world, 1).is_err());
    }

    #[test]
    fn snippet_positions_match_centers() {
        let p = SnippetPoses {
            prev_to_mid: SE3Pose::from_euler(&EulerPose6::new(0.01, 0.0, 0.02, 0.1, 0.0, 0.5)),
            next_to_mid: SE3Pose::from_euler(&EulerPose6::new(0.0, -0.01, 0.0, -0.1, 0.02, -0.5)),
        };
        let pos = snippet_positions(&p);
        assert_eq!(pos[0], Vec3::ZERO);
        assert!((pos[1] - p.prev_to_mid.camera_center()).norm() < 1e-15);
        // The third frame position, pushed through the transform chain into
        // the last frame, lands on the origin.
        let first_to_last = p.next_to_mid.inverse().compose(&p.prev_to_mid);
        assert!(first_to_last.apply(pos[2]).norm() < 1e-12);
    }
}
