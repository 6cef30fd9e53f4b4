//! Temporary helper: dump the sweep fixture to /tmp/sweepfix for manual runs.

use std::path::Path;

use snipvo::{
    gt_relative_pose, render_plane_views, total_loss, write_depth_raster, write_image_pgm,
    write_intrinsics, write_kitti_poses, write_snippet_poses, EulerPose6, LossConfig, PlaneScene,
    SE3Pose, Snippet, SnippetPoses,
};

#[test]
fn dump_fixture() {
    let dir = Path::new("/tmp/sweepfix");
    std::fs::create_dir_all(dir).unwrap();
    let scene = PlaneScene {
        border: 8,
        texture: snipvo::rich_texture,
        ..PlaneScene::sized(160, 120, 120.0, 4.0)
    };
    let steps = [
        EulerPose6::new(0.0, -0.003, 0.022, 0.008, 0.0, 0.028),
        EulerPose6::new(0.0, 0.002, -0.028, -0.006, 0.0, 0.025),
        EulerPose6::new(0.0, 0.002, 0.025, 0.007, 0.0, 0.030),
    ];
    let mut world = vec![SE3Pose::identity()];
    for s in &steps {
        let last = *world.last().unwrap();
        world.push(last.compose(&SE3Pose::from_euler(s)));
    }
    let frames = render_plane_views(&scene, &world, &world[1]).unwrap();
    for (i, (img, depth)) in frames.iter().enumerate() {
        std::fs::write(dir.join(format!("{i:03}.pgm")), write_image_pgm(img, 65535)).unwrap();
        std::fs::write(dir.join(format!("{i:03}.depth")), write_depth_raster(depth)).unwrap();
    }
    std::fs::write(dir.join("intrinsics.txt"), write_intrinsics(&scene.intrinsics)).unwrap();
    std::fs::write(dir.join("poses.txt"), write_kitti_poses(&world)).unwrap();

    let truth: Vec<(usize, SnippetPoses)> = (1..world.len() - 1)
        .map(|c| {
            (
                c,
                SnippetPoses {
                    prev_to_mid: gt_relative_pose(&world, c - 1, c).unwrap(),
                    next_to_mid: gt_relative_pose(&world, c + 1, c).unwrap(),
                },
            )
        })
        .collect();
    std::fs::write(dir.join("truth.txt"), write_snippet_poses(&truth)).unwrap();

    // In-memory loss floor at the true poses, bypassing the file round trip.
    let mut cfg = LossConfig::default();
    cfg.weights.lambda_e = 1.0;
    for (c, poses) in &truth {
        let snippet = Snippet::new(
            [frames[c - 1].0.clone(), frames[*c].0.clone(), frames[c + 1].0.clone()],
            [frames[c - 1].1.clone(), frames[*c].1.clone(), frames[c + 1].1.clone()],
        )
        .unwrap();
        let b = total_loss(&snippet, poses, &scene.intrinsics, &cfg).unwrap();
        println!(
            "center {c}: l_t {:.3e} l_prev {:.3e} l_next {:.3e} l_smooth {:.3e} l_edge {:.3e}",
            b.l_t, b.l_prev, b.l_next, b.l_smooth, b.l_edge
        );
    }

    // Manual replay of the prev->mid warp of snippet 1 at truth: residual
    // between I_prev(v) and bilerp(I_mid)(w(v)), plus the interpolation
    // error isolated at the exact warped points.
    let (c, poses) = &truth[0];
    let k = &scene.intrinsics;
    let prev_img = &frames[c - 1].0;
    let prev_depth = &frames[c - 1].1;
    let mid_img = &frames[*c].0;
    let to_anchor_prev = gt_relative_pose(&world, c - 1, 1).unwrap();
    let (mut rms_resid, mut rms_interp, mut max_geo, mut n) = (0.0f64, 0.0f64, 0.0f64, 0u64);
    for v in 0..scene.height {
        for u in 0..scene.width {
            let d = prev_depth.at(u, v);
            if d <= 0.0 {
                continue;
            }
            let p = snipvo::PixelCoord { u: u as f64, v: v as f64 };
            let x = snipvo::backproject(p, d, k).unwrap();
            let y = poses.prev_to_mid.apply(x);
            let p2 = match snipvo::project(y, k) {
                Ok(p2) => p2,
                Err(_) => continue,
            };
            let warped = match snipvo::sample_bilinear(mid_img, p2.u, p2.v) {
                Ok(w) => w,
                Err(_) => continue,
            };
            let src = prev_img.at(u, v);
            // Texture value at the exact world point seen through prev.
            let w_pt = to_anchor_prev.apply(x);
            let exact = snipvo::smooth_texture(w_pt.x, w_pt.y);
            rms_resid += (src - warped) * (src - warped);
            rms_interp += (exact - warped) * (exact - warped);
            max_geo = max_geo.max((src - exact).abs());
            n += 1;
        }
    }
    let nf = n as f64;
    println!(
        "replay: n {n} rms_resid {:.3e} rms_interp {:.3e} max|src-exact| {:.3e}",
        (rms_resid / nf).sqrt(),
        (rms_interp / nf).sqrt(),
        max_geo
    );
}
