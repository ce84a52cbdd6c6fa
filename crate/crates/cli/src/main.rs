//! `radioplan`: batch front end for scenes, radio maps and placement plans.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid
//! input. Failures print one `error[<kind>]: <message>` line to stderr.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use radioplan_core::export::{
    cdf_csv, overlay_png, read_radio_map, read_weight_map, slice_csv, slice_png, write_atomic, write_radio_map, write_weight_map,
};
use radioplan_core::planner::{plan_with, PlanOptions};
use radioplan_core::projection::OverlayOptions;
use radioplan_core::{
    build_radio_map, build_weight_map, coverage_cdf, horizontal_slice, project_radio_map, received_power_dbm, trace_paths,
    CameraPose, DeploymentRegion, Error, GridSpec, Intrinsics, PlanConfig, Scene, Vec3,
};
use radioplan_service::{ServiceConfig, Versioned};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "radioplan", version, about = "Indoor radio maps and access-point placement")]
struct Cli {
    /// Worker threads for tracing and planning (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Planning configuration, JSON or TOML.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the planner seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scene document and summarize it.
    Validate { scene: PathBuf },
    /// Propagation paths and received power at one point.
    Trace(TraceArgs),
    /// Build a radio map for a fixed antenna position.
    Map(MapArgs),
    /// Optimize the antenna position within a region.
    Plan(PlanArgs),
    /// Export one horizontal layer of a radio map (CSV, JSON or PNG by extension).
    Slice(SliceArgs),
    /// Coverage CDF of a radio map as CSV.
    Cdf(CdfArgs),
    /// Project a radio map into a camera frame.
    Overlay(OverlayArgs),
    /// Run the HTTP planning service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Antenna position `x,y,z` in metres.
    #[arg(long, value_parser = parse_point)]
    antenna: Vec3,
    /// Receive point `x,y,z` in metres.
    #[arg(long, value_parser = parse_point)]
    rx: Vec3,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MapArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, value_parser = parse_point)]
    antenna: Vec3,
    /// Voxel edge in metres; overrides the configuration.
    #[arg(long)]
    resolution: Option<f64>,
    /// Map container; the sidecar goes next to it with a `.json` extension.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    weights_out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    scene: PathBuf,
    /// `full`, `box:x0,y0,z0,x1,y1,z1` or `ceiling:z=H:x0,y0,x1,y1`.
    #[arg(long, value_parser = parse_region)]
    region: DeploymentRegion,
    #[arg(long)]
    resolution: Option<f64>,
    /// Plan result JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Radio map at the best position.
    #[arg(long)]
    map_out: Option<PathBuf>,
    #[arg(long)]
    weights_out: Option<PathBuf>,
}

#[derive(Args)]
struct SliceArgs {
    #[arg(long)]
    map: PathBuf,
    /// Height in metres; the layer containing it is exported.
    #[arg(long)]
    z: f64,
    /// `.csv` (default), `.json` or `.png`; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grayscale PNG instead of the color ramp.
    #[arg(long)]
    gray: bool,
}

#[derive(Args)]
struct CdfArgs {
    #[arg(long)]
    map: PathBuf,
    /// Only count voxels with positive weight in this weight map.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OverlayArgs {
    #[arg(long)]
    map: PathBuf,
    /// JSON with `pose`, `intrinsics` and optional `options`.
    #[arg(long)]
    camera: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also render the overlay as an RGBA PNG.
    #[arg(long)]
    png: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "radioplan-data")]
    data_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Require `Authorization: Bearer <token>`.
    #[arg(long)]
    token: Option<String>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 8)]
    queue_depth: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraFile {
    pose: CameraPose,
    intrinsics: Intrinsics,
    #[serde(default)]
    options: OverlayOptions,
}

#[derive(Serialize)]
struct TraceReport {
    rx: Vec3,
    rsrp_dbm: f64,
    paths: Vec<radioplan_core::PropagationPath>,
}

fn parse_point(s: &str) -> Result<Vec3, String> {
    let v: Vec<f64> = s.split(',').map(|c| c.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    match v[..] {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Vec3::new(x, y, z)),
        _ => Err(format!("expected x,y,z, got `{s}`")),
    }
}

fn parse_region(s: &str) -> Result<DeploymentRegion, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

struct Context {
    config: PlanConfig,
}

impl Context {
    fn grid(&self, scene: &Scene, resolution: Option<f64>) -> Result<GridSpec, Error> {
        GridSpec::new(scene.bounds, resolution.unwrap_or(self.config.resolution_m))
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, Error> {
    let mut bytes = serde_json::to_vec_pretty(&Versioned::new(value))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Error> {
    match out {
        Some(path) => write_atomic(path, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn validate(scene: &Path) -> Result<(), Error> {
    let scene = Scene::from_path(scene)?;
    let line = format!(
        "ok name={:?} obstacles={} machines={} trajectories={}\n",
        scene.name,
        scene.obstacles.len(),
        scene.machines.len(),
        scene.trajectories.len()
    );
    emit(None, line.as_bytes())
}

fn trace(ctx: &Context, args: &TraceArgs) -> Result<(), Error> {
    let scene = Scene::from_path(&args.scene)?;
    let antenna = ctx.config.antenna.at(args.antenna);
    let paths = trace_paths(&scene, &antenna, &args.rx, &ctx.config.trace)?;
    let rsrp_dbm = received_power_dbm(&paths, &antenna, ctx.config.trace.min_power_dbm);
    emit(args.out.as_deref(), &json_bytes(&TraceReport { rx: args.rx, rsrp_dbm, paths })?)
}

fn map(ctx: &Context, args: &MapArgs) -> Result<(), Error> {
    let scene = Scene::from_path(&args.scene)?;
    let grid = ctx.grid(&scene, args.resolution)?;
    let map = build_radio_map(&scene, &ctx.config.antenna.at(args.antenna), &grid, &ctx.config.trace)?;
    write_radio_map(&map, &args.out)?;
    if let Some(path) = &args.weights_out {
        write_weight_map(&build_weight_map(&scene, &grid, &ctx.config.weights), path)?;
    }
    Ok(())
}

fn plan(ctx: &Context, args: &PlanArgs) -> Result<(), Error> {
    let scene = Scene::from_path(&args.scene)?;
    let cfg = &ctx.config;
    let grid = ctx.grid(&scene, args.resolution)?;
    let weights = build_weight_map(&scene, &grid, &cfg.weights);
    let options = PlanOptions { scale: cfg.utility_scale, progress: None };
    let result = plan_with(&scene, &args.region, &weights, &grid, &cfg.antenna, &cfg.trace, &cfg.planner, options)?;
    if let (Some(path), Some(best)) = (&args.map_out, &result.radio_map) {
        write_radio_map(best, path)?;
    }
    if let Some(path) = &args.weights_out {
        write_weight_map(&weights, path)?;
    }
    emit(args.out.as_deref(), &json_bytes(&result)?)
}

fn slice(args: &SliceArgs) -> Result<(), Error> {
    let map = read_radio_map(&args.map)?;
    let slice = horizontal_slice(&map, args.z)?;
    let ext = args.out.as_deref().and_then(|p| p.extension()).and_then(|e| e.to_str()).unwrap_or("csv");
    let bytes = match ext {
        "png" => slice_png(&slice, !args.gray)?,
        "json" => json_bytes(&slice)?,
        _ => slice_csv(&slice).into_bytes(),
    };
    emit(args.out.as_deref(), &bytes)
}

fn cdf(args: &CdfArgs) -> Result<(), Error> {
    let map = read_radio_map(&args.map)?;
    let mask = args.weights.as_deref().map(read_weight_map).transpose()?;
    let cdf = coverage_cdf(&map, mask.as_ref())?;
    emit(args.out.as_deref(), cdf_csv(&cdf).as_bytes())
}

fn overlay(args: &OverlayArgs) -> Result<(), Error> {
    let map = read_radio_map(&args.map)?;
    let camera: CameraFile = serde_json::from_slice(&std::fs::read(&args.camera)?)?;
    let overlay = project_radio_map(&map, &camera.pose, &camera.intrinsics, &camera.options)?;
    if let Some(path) = &args.png {
        write_atomic(path, &overlay_png(&overlay)?)?;
    }
    emit(args.out.as_deref(), &json_bytes(&overlay)?)
}

fn serve(args: &ServeArgs) -> Result<(), Error> {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .try_init();
    let config = ServiceConfig {
        data_dir: args.data_dir.clone(),
        bind: args.bind,
        token: args.token.clone(),
        workers: args.workers.max(1),
        queue_depth: args.queue_depth,
    };
    radioplan_service::run(config, |addr| {
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
    })
    .map_err(|e| match e {
        radioplan_service::ServiceError::Io(e) => Error::Io(e),
        radioplan_service::ServiceError::Core(e) => e,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Format(format!("thread pool: {e}")))?;
    }
    let mut config = match &cli.config {
        Some(path) => PlanConfig::from_path(path)?,
        None => PlanConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.planner.seed = seed;
    }
    let ctx = Context { config };
    match &cli.command {
        Command::Validate { scene } => validate(scene),
        Command::Trace(args) => trace(&ctx, args),
        Command::Map(args) => map(&ctx, args),
        Command::Plan(args) => plan(&ctx, args),
        Command::Slice(args) => slice(args),
        Command::Cdf(args) => cdf(args),
        Command::Overlay(args) => overlay(args),
        Command::Serve(args) => serve(args),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        "parse" | "validation" | "region" => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.kind());
            ExitCode::from(exit_code(&e))
        }
    }
}
