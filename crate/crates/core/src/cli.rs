//! `volray` command line.
//!
//! Exit codes: 0 success, 1 a verified property failed, 2 bad configuration,
//! 3 I/O failure, 4 the points admit no split plane.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::distsim::{bench_protocols, render_image, spawn, Protocol, RenderOptions, Schedule};
use crate::error::Error;
use crate::geom::{Aabb, Rgb, Vec3};
use crate::io::parse_points;
use crate::partitioner::{balance_report, build_tree, rays_to_points, PartitionTree};
use crate::scenes::SceneConfig;
use crate::verify::{self, Fault, VerifyOptions};

#[derive(Debug, Parser)]
#[command(name = "volray", version, about = "Partitioned volume rendering with exact tile composition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scene to a PPM image plus JSON communication stats.
    Render(RenderArgs),
    /// Build a partition tree from points or from camera rays.
    Partition(PartitionArgs),
    /// Run the randomized property suites.
    Verify(VerifyArgs),
    /// Compare protocol communication over a dt sweep.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct TileSource {
    /// Partition tree JSON written by `volray partition`.
    #[arg(long, conflicts_with = "points")]
    pub tree: Option<PathBuf>,
    /// Point cloud (ASCII PLY or `x y z` lines) to partition on the fly.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Tree depth; `2^depth` tiles. Defaults to the scene's depth.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Seed for points sampled from the scene when neither tree nor points are given.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct Execution {
    /// Worker threads; 1 runs serially.
    #[arg(long, env = "VOLRAY_THREADS", default_value_t = 1)]
    pub threads: usize,
    /// Run workers and deliver replies in a seeded random order.
    #[arg(long)]
    pub shuffle: Option<u64>,
}

impl Execution {
    fn schedule(&self) -> Schedule {
        match (self.shuffle, self.threads) {
            (Some(seed), _) => Schedule::Shuffled(seed),
            (None, n) if n > 1 => Schedule::Threads(n),
            _ => Schedule::Serial,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Mono,
    #[value(alias = "sample_broadcast")]
    Sample,
    #[value(alias = "tile_aggregate")]
    Tile,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Mono => Protocol::Mono,
            ProtocolArg::Sample => Protocol::SampleBroadcast,
            ProtocolArg::Tile => Protocol::TileAggregate,
        }
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[command(flatten)]
    pub tiles: TileSource,
    #[arg(long, value_enum, default_value_t = ProtocolArg::Tile)]
    pub protocol: ProtocolArg,
    /// Quadrature step; defaults to the scene's.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Background as `r,g,b`; defaults to the scene's.
    #[arg(long)]
    pub background: Option<String>,
    /// Send every tile packet to every worker and check they all agree.
    #[arg(long)]
    pub broadcast_all: bool,
    #[command(flatten)]
    pub exec: Execution,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    /// Point cloud (ASCII PLY or `x y z` lines).
    #[arg(long, required_unless_present = "from_rays", conflicts_with = "from_rays")]
    pub points: Option<PathBuf>,
    /// Derive points from quadrature midpoints of the scene camera's rays.
    #[arg(long, requires = "scene")]
    pub from_rays: bool,
    /// Scene supplying the root box (and camera for `--from-rays`).
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Root box `xmin,ymin,zmin,xmax,ymax,zmax`; defaults to the scene's, else
    /// the points' bounds grown by 1%.
    #[arg(long)]
    pub root: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 100_000)]
    pub max_points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Balance report JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    None,
    SingleCross,
    UnattenuatedColor,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub cases: usize,
    /// Deliberately break one identity; the suites must then fail.
    #[arg(long, value_enum, default_value_t = FaultArg::None)]
    pub inject_fault: FaultArg,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[command(flatten)]
    pub tiles: TileSource,
    /// Comma separated quadrature steps.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub dts: Vec<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[command(flatten)]
    pub exec: Execution,
    /// CSV of `dt,s_bar,protocol,scalars_total`.
    #[arg(long)]
    pub out: PathBuf,
    /// Ratio fit JSON.
    #[arg(long)]
    pub fit: Option<PathBuf>,
}

/// A failed command: exit code and message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) => 3,
            Error::DegenerateSplit => 4,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<String, Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    })
}

fn load_scene(path: &Path) -> Result<SceneConfig, Failure> {
    SceneConfig::from_json(&read_text(path)?).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn floats(text: &str, n: usize, what: &str) -> Result<Vec<f64>, Failure> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::config(format!("{what}: expected {n} comma separated numbers")))?;
    if v.len() != n || v.iter().any(|x| !x.is_finite()) {
        return Err(Failure::config(format!("{what}: expected {n} finite numbers")));
    }
    Ok(v)
}

fn positive_dt(dt: f64) -> Result<f64, Failure> {
    if dt > 0.0 && dt.is_finite() {
        Ok(dt)
    } else {
        Err(Failure::config(format!("dt must be positive, got {dt}")))
    }
}

fn resolve_tree(scene: &SceneConfig, src: &TileSource) -> Result<PartitionTree, Failure> {
    let depth = src.depth.unwrap_or(scene.depth);
    if let Some(path) = &src.tree {
        return PartitionTree::from_json(&read_text(path)?)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())));
    }
    let points = match &src.points {
        Some(path) => parse_points(&read_text(path)?)?,
        None => scene.sample_points(4096.max(1 << depth.min(20)), src.seed),
    };
    Ok(build_tree(&points, scene.root_box, depth)?)
}

pub fn cmd_render(a: &RenderArgs) -> CmdResult {
    let scene = load_scene(&a.scene)?;
    let tree = resolve_tree(&scene, &a.tiles)?;
    let dt = positive_dt(a.dt.unwrap_or(scene.dt))?;
    let background = match &a.background {
        Some(s) => Rgb::from(<[f64; 3]>::try_from(floats(s, 3, "--background")?).expect("three values")),
        None => scene.background,
    };
    let cam = scene.camera_or_default(64, 64);
    let cam = scene.camera_or_default(a.width.unwrap_or(cam.width), a.height.unwrap_or(cam.height));
    let pool = spawn(&tree, &scene.field);
    let mut opts = RenderOptions::new(dt, a.protocol.into()).with_schedule(a.exec.schedule());
    opts.broadcast_all = a.broadcast_all;
    let (img, stats) = render_image(&pool, &cam, &opts, background)?;
    write_bytes(&a.out, &img.to_ppm())?;
    if let Some(path) = &a.stats {
        write_bytes(path, (serde_json::to_string_pretty(&stats).map_err(Error::from)? + "\n").as_bytes())?;
    }
    Ok(format!(
        "{}x{} {} tiles={} scalars={} -> {}",
        img.width,
        img.height,
        stats.protocol.name(),
        stats.num_workers,
        stats.scalars_sent_total,
        a.out.display()
    ))
}

pub fn cmd_partition(a: &PartitionArgs) -> CmdResult {
    let scene = a.scene.as_deref().map(load_scene).transpose()?;
    let explicit_root = match &a.root {
        Some(s) => {
            let v = floats(s, 6, "--root")?;
            Some(Aabb::new(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]))?)
        }
        None => None,
    };
    let (points, root) = if a.from_rays {
        let scene = scene.as_ref().expect("clap requires --scene");
        let root = explicit_root.unwrap_or(scene.root_box);
        let dt = positive_dt(a.dt.unwrap_or(scene.dt))?;
        let cam = scene.camera_or_default(a.width, a.height);
        cam.validate()?;
        let cloud = rays_to_points(&cam.rays(), &root, dt, a.max_points, a.seed)?;
        (cloud.points, root)
    } else {
        let path = a.points.as_ref().expect("clap requires --points");
        let points = parse_points(&read_text(path)?)?;
        let root = match (explicit_root, &scene) {
            (Some(r), _) => r,
            (None, Some(s)) => s.root_box,
            (None, None) => Aabb::bounding(&points, 0.01)?,
        };
        (points, root)
    };
    let tree = build_tree(&points, root, a.depth)?;
    write_bytes(&a.out, tree.to_json()?.as_bytes())?;
    let report = balance_report(&tree, &points, None);
    if let Some(path) = &a.report {
        write_bytes(path, (serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n").as_bytes())?;
    }
    Ok(format!(
        "{} points -> {} tiles, leaf points {:?}, max split imbalance {} -> {}",
        points.len(),
        report.num_tiles,
        report.leaf_points,
        report.max_split_imbalance,
        a.out.display()
    ))
}

pub fn cmd_verify(a: &VerifyArgs) -> CmdResult {
    let opts = VerifyOptions {
        seed: a.seed,
        cases: a.cases,
        fault: match a.inject_fault {
            FaultArg::None => Fault::None,
            FaultArg::SingleCross => Fault::SingleCross,
            FaultArg::UnattenuatedColor => Fault::UnattenuatedColor,
        },
    };
    let reports = verify::run_all(&opts);
    let mut out = String::new();
    for r in &reports {
        let _ = writeln!(out, "{}", r.line());
    }
    if reports.iter().all(|r| r.passed()) {
        Ok(out.trim_end().to_string())
    } else {
        Err(Failure {
            code: 1,
            message: out.trim_end().to_string(),
        })
    }
}

pub fn cmd_bench(a: &BenchArgs) -> CmdResult {
    if a.dts.is_empty() {
        return Err(Failure::config("empty dt sweep"));
    }
    for &dt in &a.dts {
        positive_dt(dt)?;
    }
    let scene = load_scene(&a.scene)?;
    let tree = resolve_tree(&scene, &a.tiles)?;
    let cam = scene.camera_or_default(64, 64);
    let cam = scene.camera_or_default(a.width.unwrap_or(cam.width), a.height.unwrap_or(cam.height));
    let pool = spawn(&tree, &scene.field);
    let report = bench_protocols(&pool, &cam, &a.dts, a.exec.schedule())?;
    let mut csv = String::from("dt,s_bar,protocol,scalars_total\n");
    for r in &report.rows {
        let _ = writeln!(csv, "{},{:.6},{},{}", r.dt, r.samples_per_payload, r.protocol.name(), r.scalars_total);
    }
    write_bytes(&a.out, csv.as_bytes())?;
    if let Some(path) = &a.fit {
        write_bytes(path, (serde_json::to_string_pretty(&report.fit).map_err(Error::from)? + "\n").as_bytes())?;
    }
    let slope = report.fit.slope.map_or("n/a".to_string(), |s| format!("{s:.4}"));
    Ok(format!(
        "{} rows -> {}; ratio slope {} (model {:.4}), max model error {:.2}%",
        report.rows.len(),
        a.out.display(),
        slope,
        report.fit.predicted_slope,
        100.0 * report.fit.max_model_error
    ))
}

/// Parses `args` (program name first), runs the command and reports on
/// stdout/stderr. Returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Render(a) => cmd_render(a),
        Command::Partition(a) => cmd_partition(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(f) if f.code == 1 => {
            println!("{}", f.message);
            1
        }
        Err(f) => {
            eprintln!("volray: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_protocol_aliases() {
        for (name, want) in [("tile", Protocol::TileAggregate), ("tile_aggregate", Protocol::TileAggregate), ("sample_broadcast", Protocol::SampleBroadcast), ("mono", Protocol::Mono)] {
            let cli = Cli::try_parse_from(["volray", "render", "--scene", "s.json", "--out", "o.ppm", "--protocol", name]).unwrap();
            let Command::Render(a) = cli.command else { panic!() };
            assert_eq!(Protocol::from(a.protocol), want);
        }
    }

    #[test]
    fn schedule_selection() {
        let e = Execution { threads: 4, shuffle: None };
        assert_eq!(e.schedule(), Schedule::Threads(4));
        let e = Execution { threads: 4, shuffle: Some(9) };
        assert_eq!(e.schedule(), Schedule::Shuffled(9));
        let e = Execution { threads: 1, shuffle: None };
        assert_eq!(e.schedule(), Schedule::Serial);
    }

    #[test]
    fn error_codes() {
        assert_eq!(Failure::from(Error::DegenerateSplit).code, 4);
        assert_eq!(Failure::from(Error::Io(std::io::Error::other("x"))).code, 3);
        assert_eq!(Failure::from(Error::NoPoints).code, 2);
        assert!(floats("1,2", 3, "x").is_err());
        assert_eq!(floats("1, 2,3", 3, "x").unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn bad_flags_exit_two() {
        assert_eq!(run(["volray", "render"]), 2);
        assert_eq!(run(["volray", "frobnicate"]), 2);
    }
}
