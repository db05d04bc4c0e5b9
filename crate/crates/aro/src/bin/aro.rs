//! Command-line front end. Every run writes a manifest JSON next to its
//! primary output recording the merged configuration, the seeds in play,
//! sha256 hashes of all written artifacts, and wall time.
//!
//! Seed policy: one run-level `--seed S` feeds every consumer through fixed
//! offsets (anchors S, point/sample generation S+1, training S+2,
//! metrics S+3), so artifacts are reproducible from the manifest alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use aro::anchors::{self, Strategy};
use aro::bvh::MeshBvh;
use aro::error::{AroError, Result};
use aro::field::{evaluate_grid, OccupancyGrid};
use aro::geom::{Aabb, PointCloud, Vec3};
use aro::metrics::{chamfer, emd, hausdorff, occupancy_iou, sample_mesh_surface, subsample, MetricReport};
use aro::nn2d::net::{AttentionNetParams, NetConfig};
use aro::nn2d::shape::{generate_samples, Box2D};
use aro::nn2d::train::{anchor_activation_map, reconstruct_image, train, TrainConfig};
use aro::obs::{extract_aro, heuristic_occupancy_exterior};
use aro::spatial::{default_half_angle, ConeQuery, SpatialIndex};
use aro::visibility::{parity_inside, CellLabel};
use aro::io;

const SEED_ANCHORS: u64 = 0;
const SEED_SAMPLING: u64 = 1;
const SEED_TRAINING: u64 = 2;
const SEED_METRICS: u64 = 3;

#[derive(Parser)]
#[command(name = "aro", about = "Anchored radial observations toolkit", version)]
struct Cli {
    /// Optional key=value config file; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run-level seed; consumers derive their streams by fixed offsets.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap worker threads (default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an anchor set and write it as ASCII.
    Anchors(AnchorsArgs),
    /// Encode per-query radial observations from a point cloud.
    Encode(EncodeArgs),
    /// Visibility-oracle occupancy of a watertight mesh on a grid.
    Oracle(OracleArgs),
    /// Heuristic occupancy of a point cloud from exterior anchors.
    Heuristic(HeuristicArgs),
    /// Train the 2D attention model on a polygon.
    Train2d(Train2dArgs),
    /// Render a trained model's occupancy image.
    Infer2d(Infer2dArgs),
    /// Render a single-anchor activation map.
    Activation(ActivationArgs),
    /// Compare a reconstruction against ground truth (CD/HD/EMD/IOU).
    Eval(EvalArgs),
    /// Time cone queries and print queries/second as JSON.
    Bench(BenchArgs),
}

#[derive(Args)]
struct AnchorsArgs {
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    anchors: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    /// Cone half-angle in degrees.
    #[arg(long)]
    half_angle: Option<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    anchors: PathBuf,
    #[arg(long)]
    res: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct HeuristicArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    anchors: PathBuf,
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    half_angle: Option<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct Train2dArgs {
    #[arg(long)]
    shape: PathBuf,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct Infer2dArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    shape: PathBuf,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    res: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ActivationArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    shape: PathBuf,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    anchor: usize,
    #[arg(long)]
    res: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    recon: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Cloud size for the synthetic benchmark.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
}

/// key=value overlay from an optional config file; flags win over it.
struct Settings {
    file: BTreeMap<String, String>,
    seed: u64,
    /// merged values actually used, recorded into the manifest
    used: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>, seed_flag: Option<u64>) -> Result<Settings> {
        let mut file = BTreeMap::new();
        if let Some(p) = path {
            for line in std::fs::read_to_string(p)?.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| AroError::Parse {
                    path: p.display().to_string(),
                    msg: format!("expected key=value, got '{line}'"),
                })?;
                file.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let seed = match seed_flag {
            Some(s) => s,
            None => match file.get("seed") {
                Some(v) => v.parse().map_err(|_| AroError::InvalidArgument("bad seed in config".into()))?,
                None => 0,
            },
        };
        let mut s = Settings { file, seed, used: BTreeMap::new() };
        s.used.insert("seed".into(), seed.to_string());
        Ok(s)
    }

    fn get<T: std::str::FromStr + ToString>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T> {
        let v = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(raw) => raw.parse().map_err(|_| {
                    AroError::InvalidArgument(format!("bad config value for '{key}': '{raw}'"))
                })?,
                None => default,
            },
        };
        self.used.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.used.insert(key.to_string(), value.to_string());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let start = Instant::now();
    let mut settings = Settings::load(cli.config.as_deref(), cli.seed)?;
    if let Some(n) = cli.threads {
        settings.note("threads", n);
        init_threads(n)?;
    }
    let (name, outputs) = match cli.cmd {
        Cmd::Anchors(a) => ("anchors", cmd_anchors(a, &mut settings)?),
        Cmd::Encode(a) => ("encode", cmd_encode(a, &mut settings)?),
        Cmd::Oracle(a) => ("oracle", cmd_oracle(a, &mut settings)?),
        Cmd::Heuristic(a) => ("heuristic", cmd_heuristic(a, &mut settings)?),
        Cmd::Train2d(a) => ("train2d", cmd_train2d(a, &mut settings)?),
        Cmd::Infer2d(a) => ("infer2d", cmd_infer2d(a, &mut settings)?),
        Cmd::Activation(a) => ("activation", cmd_activation(a, &mut settings)?),
        Cmd::Eval(a) => ("eval", cmd_eval(a, &mut settings)?),
        Cmd::Bench(a) => ("bench", cmd_bench(a, &mut settings)?),
    };
    if let Some(primary) = outputs.first().cloned() {
        write_manifest(name, &settings, &outputs, start.elapsed().as_secs_f64(), &primary)?;
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn init_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| AroError::InvalidArgument(format!("thread pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn init_threads(_n: usize) -> Result<()> {
    Ok(())
}

fn write_manifest(
    command: &str,
    settings: &Settings,
    outputs: &[PathBuf],
    wall_time_s: f64,
    primary: &Path,
) -> Result<()> {
    let mut hashes = BTreeMap::new();
    for p in outputs {
        let bytes = std::fs::read(p)?;
        let digest = Sha256::digest(&bytes);
        hashes.insert(p.display().to_string(), format!("{digest:x}"));
    }
    let manifest = serde_json::json!({
        "command": command,
        "config": settings.used,
        "seed": settings.seed,
        "seed_offsets": {
            "anchors": SEED_ANCHORS,
            "sampling": SEED_SAMPLING,
            "training": SEED_TRAINING,
            "metrics": SEED_METRICS,
        },
        "outputs": hashes,
        "wall_time_s": wall_time_s,
    });
    let path = primary.with_extension(format!(
        "{}manifest.json",
        primary
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| format!("{e}."))
            .unwrap_or_default()
    ));
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn domain_unit() -> Aabb {
    Aabb::centered_cube(1.0)
}

fn cmd_anchors(a: AnchorsArgs, s: &mut Settings) -> Result<Vec<PathBuf>> {
    let m = s.get("m", a.m, 48)?;
    let strategy = Strategy::parse(&s.get("strategy", a.strategy, "fibonacci".to_string())?)?;
    let seed = s.seed.wrapping_add(SEED_ANCHORS);
    let set = match strategy {
        Strategy::LayeredFibonacci => anchors::layered_fibonacci(m)?,
        Strategy::UniformBall => anchors::uniform_ball(m, seed)?,
        Strategy::GridSample => anchors::grid_sample(m, seed)?,
        Strategy::Ring2D => anchors::ring_anchors_2d(m)?,
    };
    io::write_anchors(&a.output, &set)?;
    Ok(vec![a.output])
}

fn cmd_encode(a: EncodeArgs, s: &mut Settings) -> Result<Vec<PathBuf>> {
    let k = s.get("k", a.k, 16)?;
    let half_deg = s.get("half_angle", a.half_angle, 24.0)?;
    let half_angle = half_deg.to_radians();
    let cloud = io::read_cloud(&a.cloud)?;
    let set = io::read_anchors(&a.anchors)?;
    let queries = io::read_queries(&a.queries)?;
    let index = SpatialIndex::build(&cloud)?;
    let sets = queries
        .iter()
        .map(|&q| extract_aro(&index, &set.positions, q, half_angle, k))
        .collect::<Result<Vec<_>>>()?;
    io::write_encoded(&a.output, set.positions.len(), k, &sets)?;
    Ok(vec![a.output])
}

fn cmd_oracle(a: OracleArgs, s: &mut Settings) -> Result<Vec<PathBuf>> {
    let res = s.get("res", a.res, 64)?;
    let mut mesh = io::read_obj(&a.mesh)?;
    mesh.check_watertight()?;
    let set = io::read_anchors(&a.anchors)?;
    let bvh = MeshBvh::build(&mesh);
    let domain = domain_unit();
    let grid = aro::visibility::oracle_occupancy_mixed(
        &mesh,
        &bvh,
        &set.positions,
        [res, res, res],
        &domain,
    )?;
    // cell labels -> occupancy samples at cell centers
    let ext = domain.max - domain.min;
    let spacing = ext.x / res as f64;
    let occ = OccupancyGrid {
        resolution: grid.resolution,
        origin: domain.min + aro::geom::vec3(0.5, 0.5, 0.5) * spacing,
        spacing,
        values: grid
            .labels
            .iter()
            .map(|l| if *l == CellLabel::Inside { 1.0 } else { 0.0 })
            .collect(),
    };
    io::write_grid(&a.output, &occ)?;
    Ok(vec![a.output])
}

fn cmd_heuristic(a: HeuristicArgs, s: &mut Settings) -> Result<Vec<PathBuf>> {
    let res = s.get("res", a.res, 64)?;
    let k = s.get("k", a.k, 16)?;
    let half_angle = s.get("half_angle", a.half_angle, 24.0)?.to_radians();
    let cloud = io::read_cloud(&a.cloud)?;
    let set = io::read_anchors(&a.anchors)?;
    let index = SpatialIndex::build(&cloud)?;
    let grid = evaluate_grid(
        |x| match heuristic_occupancy_exterior(&index, &set.positions, x, half_angle, k) {
            Ok(true) => 1.0,
            _ => 0.0, // outside, or every anchor abstained
        },
        &domain_unit(),
        [res, res, res],
    )?;
    io::write_grid(&a.output, &grid)?;
    Ok(vec![a.output])
}

fn ring_anchors(m: usize) -> Result<Vec<aro::geom::Vec2>> {
    Ok(anchors::ring_anchors_2d(m)?.positions_2d())
}

fn cmd_train2d(a: Train2dArgs, s: &mut Settings) -> Result<Vec<PathBuf>> {
    let m = s.get("m", a.m, 7)?;
    let epochs = s.get("epochs", a.epochs, 300)?;
    let n_samples = s.get("samples", a.samples, 20_000)?;
    let batch = s.get("batch", a.batch, 256)?;
    let lr = s.get("lr", a.lr, 3e-4)?;
    let shape = io::read_poly(&a.shape)?;
    let anchors = ring_anchors(m)?;
    let samples = generate_samples(&shape, n_samples, s.seed.wrapping_add(SEED_SAMPLING));
    let mut params = AttentionNetParams::init(NetConfig::default(), s.seed.wrapping_add(SEED_TRAINING))?;
    let cfg = TrainConfig {
        learning_rate: lr,
        epochs,
        batch_size: batch,
        seed: s.seed.wrapping_add(SEED_TRAINING),
        ..TrainConfig::default()
    };
    train(&mut params, &shape, &anchors, &samples, &cfg)?;
    io::write_params(&a.output, &params)?;
    Ok(vec![a.output])
}

fn cmd_infer2d(a: Infer2dArgs, s: &mut Settings) -> Result<Vec<PathBuf>> {
    let m = s.get("m", a.m, 7)?;
    let res = s.get("res", a.res, 128)?;
    let shape = io::read_poly(&a.shape)?;
    let params = io::read_params(&a.model)?;
    let anchors = ring_anchors(m)?;
    let img = reconstruct_image(&params, &shape, &anchors, Box2D::unit(), res)?;
    io::write_pgm(&a.output, &img)?;
    Ok(vec![a.output])
}

fn cmd_activation(a: ActivationArgs, s: &mut Settings) -> Result<Vec<PathBuf>> {
    let m = s.get("m", a.m, 7)?;
    let res = s.get("res", a.res, 128)?;
    s.note("anchor", a.anchor);
    let shape = io::read_poly(&a.shape)?;
    let params = io::read_params(&a.model)?;
    let anchors = ring_anchors(m)?;
    let img = anchor_activation_map(&params, &shape, &anchors, a.anchor, Box2D::unit(), res)?;
    io::write_pgm(&a.output, &img)?;
    Ok(vec![a.output])
}

fn cmd_eval(a: EvalArgs, s: &mut Settings) -> Result<Vec<PathBuf>> {
    let n = s.get("samples", a.samples, 10_000)?;
    let seed = s.seed.wrapping_add(SEED_METRICS);
    let recon = io::read_obj(&a.recon)?;
    let gt = io::read_obj(&a.gt)?;
    let xs = sample_mesh_surface(&recon, n, seed)?;
    let ys = sample_mesh_surface(&gt, n, seed.wrapping_add(1))?;
    let emd_n = n.min(512);
    let emd_val = emd(&subsample(&xs, emd_n, seed)?, &subsample(&ys, emd_n, seed)?)?;
    let bvh_r = MeshBvh::build(&recon);
    let bvh_g = MeshBvh::build(&gt);
    let domain = {
        let (a1, b1) = (recon.bounds(), gt.bounds());
        Aabb::new(a1.min.min_c(b1.min), a1.max.max_c(b1.max))
    };
    let iou = occupancy_iou(
        |p| parity_inside(&bvh_r, p, 0),
        |p| parity_inside(&bvh_g, p, 0),
        &domain,
        n,
        seed,
    )?;
    let report = MetricReport {
        cd: chamfer(&xs, &ys),
        hd: hausdorff(&xs, &ys),
        emd: emd_val,
        iou,
        samples: n,
        seed,
        convention: "symmetric mean Euclidean CD; exact-assignment EMD on ≤512-point subsamples; Monte-Carlo ray-parity IOU".into(),
    };
    std::fs::write(&a.output, serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(vec![a.output])
}

fn cmd_bench(a: BenchArgs, s: &mut Settings) -> Result<Vec<PathBuf>> {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let n_points = s.get("points", a.points, 2048)?;
    let n_queries = s.get("queries", a.queries, 1000)?;
    let k = s.get("k", a.k, 16)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(SEED_SAMPLING));
    let mut pt = || {
        aro::geom::vec3(
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        )
    };
    let points: Vec<Vec3> = (0..n_points).map(|_| pt()).collect();
    let queries: Vec<(Vec3, Vec3)> = (0..n_queries).map(|_| (pt(), pt())).collect();
    let cloud = PointCloud::new(points)?;
    let index = SpatialIndex::build(&cloud)?;
    let start = Instant::now();
    let mut selected = 0usize;
    for &(apex, toward) in &queries {
        let axis = toward - apex;
        let q = ConeQuery { apex, axis, half_angle: default_half_angle(), k };
        selected += index.cone_top_k(&q)?.len();
    }
    let secs = start.elapsed().as_secs_f64();
    println!(
        "{}",
        serde_json::json!({
            "points": n_points,
            "queries": n_queries,
            "k": k,
            "selected": selected,
            "seconds": secs,
            "queries_per_second": n_queries as f64 / secs,
        })
    );
    Ok(vec![])
}
