//! Direct visual odometry on three-frame snippets.
//!
//! The crate estimates camera motion without learned components: pixels are
//! warped between neighboring frames through the pinhole model and known
//! depth, a photometric loss with edge weighting scores the alignment, a
//! first-order optimizer fits the two relative poses of each snippet, and
//! overlapping snippet results are spliced into a full trajectory whose
//! error against a reference can be measured.
//!
//! Modules mirror the pipeline:
//!
//! * [`geometry`]: vectors, rotations, SE(3) poses, quaternions.
//! * [`camera`]: pinhole projection and depth-based warping.
//! * [`image`]: rasters, bilinear sampling, Laplace edge response.
//! * [`loss`]: photometric, smoothness, and edge-weighted losses.
//! * [`optimizer`]: Adam-based pose fitting and the edge-weight sweep.
//! * [`trajectory`]: splicing snippet poses into a global trajectory.
//! * [`evaluation`]: similarity alignment and trajectory error.
//! * [`io`]: text and binary codecs for poses, rasters, and exports.
//! * [`synth`]: synthetic scenes used by tests, benches, and demos.

pub mod camera;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod image;
pub mod io;
pub mod loss;
pub mod optimizer;
pub mod synth;
pub mod trajectory;

pub use camera::{backproject, project, warp_field, warp_jacobian, warp_pixel, Intrinsics, PixelCoord, WarpField};
pub use error::{Error, Result};
pub use evaluation::{horn_align, sequence_ate, snippet_ate, snippet_positions, Alignment, AteReport};
pub use geometry::{
    euler_from_rotation, euler_to_rotation, slerp, EulerPose6, Mat3, SE3Pose, UnitQuaternion, Vec3,
};
pub use image::{
    edge_mask, laplace, resize_bilinear, resize_nearest, sample_bilinear,
    sample_bilinear_with_gradient, sample_gradient, DepthMap, EdgeMask, ImageGray, LaplaceKernel,
};
pub use io::{
    export_trajectory, gt_relative_pose, read_depth_raster, read_image_pgm, read_intrinsics,
    read_kitti_poses, read_snippet_poses, write_depth_raster, write_image_pgm, write_intrinsics,
    write_kitti_poses, write_snippet_poses, ExportFormat, FramePaths, SequenceDataset,
};
pub use loss::{
    average_breakdowns, edge_loss, loss_next, loss_prev, loss_t, photometric_term, smooth_loss,
    total_loss, total_loss_with_masks, FrameId, LossBreakdown, LossConfig, LossWeights,
    Normalization, PhotoStat, SmoothOrder, Snippet, SnippetMasks, SnippetPoses, TermCounts,
};
pub use optimizer::{
    lambda_sweep, loss_gradient, loss_gradient_with_masks, optimize_snippet, parallel_map,
    OptimizationOutcome, OptimizerConfig, PoseParams12, SweepItem, Termination,
};
pub use synth::{
    arc_trajectory, relative_pose, render_plane_sequence, render_plane_snippet,
    render_plane_views, rich_texture, smooth_texture, snippet_measurements, PlaneScene,
};
pub use trajectory::{
    gather_sequence, snippet_to_forward, splice, splice_snippets, ForwardPosePair,
    GlobalTrajectory, OverlapPolicy, TrajectoryFrame,
};
