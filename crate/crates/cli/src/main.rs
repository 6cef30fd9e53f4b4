//! Command-line surface for the snippet visual-odometry pipeline.
//!
//! Subcommands cover each pipeline stage: `edges` (Laplace edge masks),
//! `loss` (score a snippet under given poses), `optimize` (fit snippet
//! poses over a sequence), `stitch` (splice snippet poses into a
//! trajectory), `ate` (trajectory error), `align` (similarity alignment),
//! `plot` (CSV/SVG export), and `sweep` (edge-weight study).
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags or values,
//! prefixed `usage error:`), 2 on data errors (unreadable or malformed
//! inputs, prefixed `data error:` and naming the offending file). All
//! subcommands are deterministic: identical invocations on identical
//! inputs write byte-identical outputs, whatever the worker count.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use snipvo::{
    export_trajectory, gt_relative_pose, horn_align, lambda_sweep, optimize_snippet, parallel_map,
    read_image_pgm, read_kitti_poses, read_snippet_poses, sequence_ate, splice, splice_snippets,
    total_loss, write_image_pgm, write_kitti_poses, write_snippet_poses, EdgeMask, ExportFormat,
    ForwardPosePair, ImageGray, LaplaceKernel, LossConfig, OptimizerConfig,
    OverlapPolicy, PoseParams12, SE3Pose, SequenceDataset, SnippetPoses, SweepItem, Termination,
    Vec3,
};

#[derive(Parser)]
#[command(
    name = "snipvo",
    version,
    about = "Direct visual odometry on three-frame snippets",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract a Laplace edge mask from a grayscale image
    Edges(EdgesArgs),
    /// Evaluate the snippet loss under given (or identity) poses
    Loss(LossArgs),
    /// Fit the relative poses of every snippet in a sequence
    Optimize(OptimizeArgs),
    /// Splice per-snippet poses into a global trajectory
    Stitch(StitchArgs),
    /// Absolute trajectory error between two pose files
    Ate(AteArgs),
    /// Similarity-align a trajectory to a reference
    Align(AlignArgs),
    /// Export a trajectory as CSV or a top-down SVG plot
    Plot(PlotArgs),
    /// Optimize under several edge weights and score each trajectory
    Sweep(SweepArgs),
}

/// Loss settings shared by the scoring subcommands.
#[derive(Args)]
struct LossFlags {
    /// Depth smoothness weight
    #[arg(long, default_value_t = 0.5)]
    lambda_s: f64,
    /// Edge alignment weight
    #[arg(long, default_value_t = 20.0)]
    lambda_e: f64,
    /// Laplace stencil: 4 or 8 neighbors
    #[arg(long, default_value = "4", value_parser = parse_kernel)]
    kernel: LaplaceKernel,
    /// Edge response percentile above which a pixel counts as an edge
    #[arg(long, default_value_t = 90.0)]
    percentile: f64,
}

impl LossFlags {
    fn config(&self) -> LossConfig {
        let mut cfg = LossConfig::default();
        cfg.weights.lambda_s = self.lambda_s;
        cfg.weights.lambda_e = self.lambda_e;
        cfg.kernel = self.kernel;
        cfg.edge_percentile = self.percentile;
        cfg
    }
}

/// Working raster size; every frame is rescaled to it on ingestion.
#[derive(Args)]
struct SizeFlags {
    /// Working raster width in pixels
    #[arg(long, default_value_t = 416)]
    width: usize,
    /// Working raster height in pixels
    #[arg(long, default_value_t = 128)]
    height: usize,
}

/// Optimizer settings shared by `optimize` and `sweep`.
#[derive(Args)]
struct OptFlags {
    /// Adam learning rate
    #[arg(long, default_value_t = 2e-4)]
    lr: f64,
    /// Iteration budget per snippet
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Relative improvement under which iterations count toward convergence
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,
    /// Worker threads; results are ordered by snippet index regardless
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl OptFlags {
    fn config(&self, loss: &LossFlags) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.lr,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            loss: loss.config(),
            ..OptimizerConfig::default()
        }
    }
}

/// Sequence directory input shared by the dataset-driven subcommands.
#[derive(Args)]
struct SeqFlags {
    /// Sequence directory: sorted *.pgm frames, matching *.depth rasters,
    /// intrinsics.txt, optional poses.txt ground truth
    #[arg(long)]
    seq: PathBuf,
    /// Intrinsics file at the frames' native resolution
    /// (default: intrinsics.txt inside --seq)
    #[arg(long)]
    intrinsics: Option<PathBuf>,
}

impl SeqFlags {
    fn load(&self, size: &SizeFlags) -> Result<SequenceDataset, Failure> {
        let k_path = self
            .intrinsics
            .clone()
            .unwrap_or_else(|| self.seq.join("intrinsics.txt"));
        SequenceDataset::load_with(&self.seq, &k_path, size.width, size.height)
            .map_err(|e| Failure::Data(format!("{}: {e}", self.seq.display())))
    }
}

#[derive(Args)]
struct EdgesArgs {
    /// Input PGM image (P2 or P5)
    #[arg(long = "in")]
    input: PathBuf,
    /// Laplace stencil: 4 or 8 neighbors
    #[arg(long, default_value = "4", value_parser = parse_kernel)]
    kernel: LaplaceKernel,
    /// Edge response percentile above which a pixel counts as an edge
    #[arg(long, default_value_t = 90.0)]
    percentile: f64,
    /// Output PGM mask (255 = edge, 0 = background)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LossArgs {
    #[command(flatten)]
    seq: SeqFlags,
    /// Center frame index of the snippet to score
    #[arg(long, default_value_t = 1)]
    center: usize,
    /// Snippet pose file; the entry matching --center is used
    /// (default: identity poses)
    #[arg(long)]
    poses: Option<PathBuf>,
    #[command(flatten)]
    loss: LossFlags,
    #[command(flatten)]
    size: SizeFlags,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    seq: SeqFlags,
    /// Snippet pose file used as the starting point where present
    /// (default: identity poses)
    #[arg(long)]
    init: Option<PathBuf>,
    #[command(flatten)]
    loss: LossFlags,
    #[command(flatten)]
    opt: OptFlags,
    #[command(flatten)]
    size: SizeFlags,
    /// Output snippet pose file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StitchArgs {
    /// Snippet pose file covering consecutive centers
    #[arg(long)]
    poses: PathBuf,
    /// How overlapping snippet measurements of one step are fused
    #[arg(long, value_enum, default_value_t = OverlapFlag::Prev)]
    overlap: OverlapFlag,
    /// Output pose file (camera-to-world, one line per frame)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AteArgs {
    /// Predicted camera-to-world pose file
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth camera-to-world pose file
    #[arg(long)]
    gt: PathBuf,
    /// Frames per scoring window
    #[arg(long, default_value_t = 3)]
    window: usize,
}

#[derive(Args)]
struct AlignArgs {
    /// Predicted camera-to-world pose file
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth camera-to-world pose file
    #[arg(long)]
    gt: PathBuf,
    /// When set, the aligned predicted poses are written here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Camera-to-world pose file to draw
    #[arg(long)]
    traj: PathBuf,
    /// Ground-truth pose file drawn underneath as a dashed line (SVG only)
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Output encoding
    #[arg(long, value_enum, default_value_t = FormatFlag::Svg)]
    format: FormatFlag,
    /// Output file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    seq: SeqFlags,
    /// Comma-separated edge weights to try
    /// (default: 1 and 10 through 100 every 10)
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    /// Frames per scoring window
    #[arg(long, default_value_t = 3)]
    window: usize,
    #[command(flatten)]
    loss: LossFlags,
    #[command(flatten)]
    opt: OptFlags,
    #[command(flatten)]
    size: SizeFlags,
    /// Output CSV: lambda_e,mean_ate,std_ate
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatFlag {
    Csv,
    Svg,
}

#[derive(Clone, Copy, ValueEnum)]
enum OverlapFlag {
    /// Later snippet's measurement wins
    Prev,
    /// Halfway blend of both measurements
    Blend,
}

fn parse_kernel(s: &str) -> Result<LaplaceKernel, String> {
    match s {
        "4" | "four" => Ok(LaplaceKernel::Four),
        "8" | "eight" => Ok(LaplaceKernel::Eight),
        other => Err(format!("unknown kernel {other:?}, expected 4 or 8")),
    }
}

/// A failed run, split by whose fault it is: the invocation or the data.
enum Failure {
    Usage(String),
    Data(String),
}

/// Attaches the file behind an I/O or format error to the message.
trait WithPath<T> {
    fn at(self, path: &Path) -> Result<T, Failure>;
}

impl<T> WithPath<T> for snipvo::Result<T> {
    fn at(self, path: &Path) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
    }
}

impl<T> WithPath<T> for std::io::Result<T> {
    fn at(self, path: &Path) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
    }
}

fn usage_check(r: snipvo::Result<()>) -> Result<(), Failure> {
    r.map_err(|e| Failure::Usage(e.to_string()))
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("data error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<(), Failure> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let text = e.to_string();
            let text = text.strip_prefix("error: ").unwrap_or(&text);
            return Err(Failure::Usage(text.trim_end().to_string()));
        }
    };
    match cli.command {
        Command::Edges(args) => cmd_edges(args),
        Command::Loss(args) => cmd_loss(args),
        Command::Optimize(args) => cmd_optimize(args),
        Command::Stitch(args) => cmd_stitch(args),
        Command::Ate(args) => cmd_ate(args),
        Command::Align(args) => cmd_align(args),
        Command::Plot(args) => cmd_plot(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn mask_to_image(mask: &EdgeMask) -> ImageGray {
    ImageGray::from_fn(mask.width, mask.height, |u, v| if mask.get(u, v) { 1.0 } else { 0.0 })
        .expect("mask dimensions are valid image dimensions")
}

fn cmd_edges(args: EdgesArgs) -> Result<(), Failure> {
    let bytes = std::fs::read(&args.input).at(&args.input)?;
    let img = read_image_pgm(&bytes).at(&args.input)?;
    let response = snipvo::laplace(&img, args.kernel).at(&args.input)?;
    let mask = snipvo::edge_mask(&response, img.width, img.height, args.percentile)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    std::fs::write(&args.out, write_image_pgm(&mask_to_image(&mask), 255)).at(&args.out)?;
    println!("{} of {} pixels marked as edges", mask.count(), img.width * img.height);
    Ok(())
}

/// Reads a snippet pose file into a center-indexed map.
fn poses_by_center(path: &Path) -> Result<HashMap<usize, SnippetPoses>, Failure> {
    let text = std::fs::read_to_string(path).at(path)?;
    Ok(read_snippet_poses(&text).at(path)?.into_iter().collect())
}

fn cmd_loss(args: LossArgs) -> Result<(), Failure> {
    let cfg = args.loss.config();
    usage_check(cfg.validate())?;
    let dataset = args.seq.load(&args.size)?;
    let snippet = dataset.snippet(args.center).map_err(|e| Failure::Usage(e.to_string()))?;
    let poses = match &args.poses {
        Some(path) => *poses_by_center(path)?.get(&args.center).ok_or_else(|| {
            Failure::Data(format!(
                "{}: no poses for snippet center {}",
                path.display(),
                args.center
            ))
        })?,
        None => SnippetPoses::identity(),
    };
    let b = total_loss(&snippet, &poses, dataset.intrinsics(), &cfg)
        .at(&args.seq.seq)?;
    println!("l_t {}", b.l_t);
    println!("l_prev {}", b.l_prev);
    println!("l_next {}", b.l_next);
    println!("l_smooth {}", b.l_smooth);
    println!("l_edge {}", b.l_edge);
    println!("l_intensity {}", b.l_intensity);
    println!("l_final {}", b.l_final);
    Ok(())
}

fn describe(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::Stalled => "stalled",
        Termination::MaxIters => "budget exhausted",
    }
}

fn cmd_optimize(args: OptimizeArgs) -> Result<(), Failure> {
    let cfg = args.opt.config(&args.loss);
    usage_check(cfg.validate())?;
    let dataset = args.seq.load(&args.size)?;
    let inits = match &args.init {
        Some(path) => poses_by_center(path)?,
        None => HashMap::new(),
    };
    let k = *dataset.intrinsics();
    let centers: Vec<usize> = (1..dataset.len() - 1).collect();
    let outcomes = parallel_map(&centers, args.opt.jobs, &|&center: &usize| {
        let snippet = dataset.snippet(center)?;
        let init = inits
            .get(&center)
            .map(PoseParams12::from_poses)
            .unwrap_or_else(PoseParams12::identity);
        optimize_snippet(&snippet, &k, &init, &cfg)
    });
    let mut results = Vec::with_capacity(centers.len());
    for (center, outcome) in centers.iter().zip(outcomes) {
        let outcome = outcome.at(&args.seq.seq)?;
        println!(
            "snippet {center}: loss {} -> {} in {} iterations ({})",
            outcome.initial_loss,
            outcome.final_loss,
            outcome.iterations,
            describe(outcome.termination)
        );
        results.push((*center, outcome.poses));
    }
    std::fs::write(&args.out, write_snippet_poses(&results)).at(&args.out)?;
    println!("wrote {} snippet poses to {}", results.len(), args.out.display());
    Ok(())
}

fn cmd_stitch(args: StitchArgs) -> Result<(), Failure> {
    let items = {
        let text = std::fs::read_to_string(&args.poses).at(&args.poses)?;
        read_snippet_poses(&text).at(&args.poses)?
    };
    let policy = match args.overlap {
        OverlapFlag::Prev => OverlapPolicy::PrevToMid,
        OverlapFlag::Blend => OverlapPolicy::Blend,
    };
    let traj = splice_snippets(&items, policy).at(&args.poses)?;
    std::fs::write(&args.out, write_kitti_poses(&traj.world_poses())).at(&args.out)?;
    println!("spliced {} snippets into {} frames", items.len(), traj.len());
    Ok(())
}

fn read_pose_file(path: &Path) -> Result<Vec<SE3Pose>, Failure> {
    let text = std::fs::read_to_string(path).at(path)?;
    read_kitti_poses(&text).at(path)
}

fn cmd_ate(args: AteArgs) -> Result<(), Failure> {
    if args.window < 2 {
        return Err(Failure::Usage(format!(
            "window must span at least 2 frames, got {}",
            args.window
        )));
    }
    let pred = read_pose_file(&args.pred)?;
    let gt = read_pose_file(&args.gt)?;
    let report = sequence_ate(&pred, &gt, args.window)
        .map_err(|e| Failure::Data(format!("{} vs {}: {e}", args.pred.display(), args.gt.display())))?;
    println!("{report}");
    Ok(())
}

fn cmd_align(args: AlignArgs) -> Result<(), Failure> {
    let pred = read_pose_file(&args.pred)?;
    let gt = read_pose_file(&args.gt)?;
    let pred_pos: Vec<Vec3> = pred.iter().map(|p| p.translation).collect();
    let gt_pos: Vec<Vec3> = gt.iter().map(|p| p.translation).collect();
    let alignment = horn_align(&pred_pos, &gt_pos)
        .map_err(|e| Failure::Data(format!("{} vs {}: {e}", args.pred.display(), args.gt.display())))?;
    let (a, b, g) = snipvo::euler_from_rotation(&alignment.rotation);
    println!("scale {}", alignment.scale);
    println!("rotation {a} {b} {g}");
    println!(
        "translation {} {} {}",
        alignment.translation.x, alignment.translation.y, alignment.translation.z
    );
    println!("rms {}", alignment.mean_squared_residual(&pred_pos, &gt_pos).sqrt());
    if let Some(out) = &args.out {
        let mut aligned = Vec::with_capacity(pred.len());
        for p in &pred {
            aligned.push(
                SE3Pose::new(alignment.rotation.mul_mat(&p.rotation), alignment.apply(p.translation))
                    .at(&args.pred)?,
            );
        }
        std::fs::write(out, write_kitti_poses(&aligned)).at(out)?;
        println!("wrote aligned poses to {}", out.display());
    }
    Ok(())
}

/// Rebuilds the accumulated trajectory of a camera-to-world pose list by
/// splicing its exact relative steps, putting frame 0 at the origin.
fn trajectory_of(world: &[SE3Pose], path: &Path) -> Result<snipvo::GlobalTrajectory, Failure> {
    let n = world.len();
    let pairs: Vec<ForwardPosePair> = (0..n.saturating_sub(1))
        .map(|i| {
            Ok(ForwardPosePair {
                frame: i,
                one_step: gt_relative_pose(world, i, i + 1)?,
                two_step: if i + 2 < n { Some(gt_relative_pose(world, i, i + 2)?) } else { None },
            })
        })
        .collect::<snipvo::Result<_>>()
        .at(path)?;
    splice(&pairs, n).at(path)
}

fn cmd_plot(args: PlotArgs) -> Result<(), Failure> {
    let world = read_pose_file(&args.traj)?;
    let traj = trajectory_of(&world, &args.traj)?;
    let gt_positions: Option<Vec<Vec3>> = match &args.gt {
        Some(path) => {
            let gt = read_pose_file(path)?;
            // Rebase to the reference's own first frame so both lines
            // start at the origin.
            let inv = gt[0].inverse();
            Some(gt.iter().map(|p| inv.apply(p.translation)).collect())
        }
        None => None,
    };
    let format = match args.format {
        FormatFlag::Csv => ExportFormat::Csv,
        FormatFlag::Svg => ExportFormat::Svg,
    };
    let bytes = export_trajectory(&traj, format, gt_positions.as_deref()).at(&args.traj)?;
    std::fs::write(&args.out, bytes).at(&args.out)?;
    println!("plotted {} frames to {}", traj.len(), args.out.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let cfg = args.opt.config(&args.loss);
    usage_check(cfg.validate())?;
    if args.window < 2 {
        return Err(Failure::Usage(format!(
            "window must span at least 2 frames, got {}",
            args.window
        )));
    }
    let lambdas: Vec<f64> = if args.grid.is_empty() {
        std::iter::once(1.0).chain((1..=10).map(|i| 10.0 * i as f64)).collect()
    } else {
        args.grid.clone()
    };
    let dataset = args.seq.load(&args.size)?;
    let gt = dataset.ground_truth().ok_or_else(|| {
        Failure::Data(format!(
            "{}: sweep needs ground truth, but the sequence has no poses.txt",
            args.seq.seq.display()
        ))
    })?;
    let gt = gt.to_vec();
    let mut items = Vec::with_capacity(dataset.len() - 2);
    for center in 1..dataset.len() - 1 {
        items.push(SweepItem {
            center,
            snippet: dataset.snippet(center).at(&args.seq.seq)?,
            init: PoseParams12::identity(),
        });
    }
    let k = *dataset.intrinsics();
    let rows = lambda_sweep(&items, &k, &gt, args.window, &lambdas, &cfg, args.opt.jobs)
        .at(&args.seq.seq)?;
    let mut csv = String::from("lambda_e,mean_ate,std_ate\n");
    for (lambda_e, report) in &rows {
        println!("lambda_e {lambda_e}: {report}");
        csv.push_str(&format!("{lambda_e},{},{}\n", report.mean, report.std));
    }
    std::fs::write(&args.out, csv).at(&args.out)?;
    println!("wrote {} sweep rows to {}", rows.len(), args.out.display());
    Ok(())
}
