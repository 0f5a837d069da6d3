//! Message-passing simulation of tile workers rendering one scene together.
//!
//! One worker owns each leaf tile and sees only the scene restricted to it. For
//! every ray the orchestrator notifies the workers whose tiles the ray crosses;
//! each worker shades its own quadrature bins and replies either with every
//! shaded bin (`SampleBroadcast`) or with a single segment packet
//! (`TileAggregate`). The orchestrator orders replies by distance along the ray,
//! never by arrival, so the output does not depend on scheduling.
//!
//! Communication is counted in payload scalars: a sample payload carries
//! `1 + 6 * bins` scalars (ray id plus `t0, t1, sigma, r, g, b` per bin) and a
//! tile payload carries 9 (ray id, entry distance, `T`, three color channels,
//! `A`, `D`, `L`). Ray assignments are control traffic and are not counted.

use std::sync::mpsc;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{Field, Radiance, Region};
use crate::geom::{Aabb, Point3, Ray, Rgb, Vec3};
use crate::io::Image;
use crate::num::Real;
use crate::partitioner::PartitionTree;
use crate::quadrature::{self, RayAggregate, SampleInterval};
use crate::segrender::{self, SegmentAggregate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Single-worker oracle over the unpartitioned scene.
    Mono,
    /// Every shaded bin is shipped to the compositor.
    SampleBroadcast,
    /// One segment packet per ray per crossed tile.
    TileAggregate,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Mono => "mono",
            Protocol::SampleBroadcast => "sample_broadcast",
            Protocol::TileAggregate => "tile_aggregate",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mono" => Ok(Protocol::Mono),
            "sample" | "sample_broadcast" => Ok(Protocol::SampleBroadcast),
            "tile" | "tile_aggregate" => Ok(Protocol::TileAggregate),
            _ => Err(invalid(format!("unknown protocol {s:?}"))),
        }
    }
}

/// Worker execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// Workers in tile order on the calling thread.
    Serial,
    /// Workers in a seeded random order, replies delivered in a seeded random order.
    Shuffled(u64),
    /// Workers spread over this many OS threads; replies arrive as produced.
    Threads(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message<S = f64> {
    RayAssignment {
        ray_id: usize,
        ray: Ray<S>,
    },
    SamplePayload {
        ray_id: usize,
        samples: Vec<[S; 6]>,
    },
    TilePayload {
        ray_id: usize,
        tile_id: usize,
        segment: SegmentAggregate<S>,
    },
    Result {
        ray_id: usize,
        aggregate: RayAggregate<S>,
    },
}

impl<S: Real> Message<S> {
    /// Scalars counted against the communication budget.
    pub fn payload_scalars(&self) -> usize {
        match self {
            Message::SamplePayload { samples, .. } => 1 + 6 * samples.len(),
            Message::TilePayload { .. } => 9,
            Message::RayAssignment { .. } | Message::Result { .. } => 0,
        }
    }

    pub fn ray_id(&self) -> usize {
        match self {
            Message::RayAssignment { ray_id, .. }
            | Message::SamplePayload { ray_id, .. }
            | Message::TilePayload { ray_id, .. }
            | Message::Result { ray_id, .. } => *ray_id,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointStats {
    pub scalars_sent: usize,
    pub scalars_received: usize,
    pub messages_sent: usize,
    pub messages_received: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerStats {
    pub tile_id: usize,
    #[serde(flatten)]
    pub io: EndpointStats,
    /// Bins this worker shaded.
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommStats {
    pub protocol: Protocol,
    pub num_workers: usize,
    pub rays: usize,
    pub scalars_sent_total: usize,
    pub per_worker: Vec<WorkerStats>,
    pub samples_per_ray_mean: f64,
    pub scalars_received_total: usize,
    pub messages_total: usize,
    pub payload_messages: usize,
    pub samples_total: usize,
    /// Mean bins per payload message: samples per ray per worker.
    pub samples_per_payload_mean: f64,
    pub orchestrator: EndpointStats,
    /// Wall-clock seconds of (dispatch, workers, compose). Not serialized so
    /// that stats files stay byte-reproducible.
    #[serde(skip)]
    pub phase_seconds: [f64; 3],
}

impl CommStats {
    fn new(protocol: Protocol, num_workers: usize, rays: usize) -> Self {
        Self {
            protocol,
            num_workers,
            rays,
            scalars_sent_total: 0,
            per_worker: (0..num_workers)
                .map(|tile_id| WorkerStats {
                    tile_id,
                    ..Default::default()
                })
                .collect(),
            samples_per_ray_mean: 0.0,
            scalars_received_total: 0,
            messages_total: 0,
            payload_messages: 0,
            samples_total: 0,
            samples_per_payload_mean: 0.0,
            orchestrator: EndpointStats::default(),
            phase_seconds: [0.0; 3],
        }
    }

    fn finish(&mut self) {
        let workers = self.per_worker.iter().map(|w| w.io);
        let all: Vec<EndpointStats> = workers.chain(std::iter::once(self.orchestrator)).collect();
        self.scalars_sent_total = all.iter().map(|e| e.scalars_sent).sum();
        self.scalars_received_total = all.iter().map(|e| e.scalars_received).sum();
        self.messages_total = all.iter().map(|e| e.messages_sent).sum();
        self.samples_total = self.per_worker.iter().map(|w| w.samples).sum::<usize>().max(self.samples_total);
        self.samples_per_ray_mean = if self.rays > 0 {
            self.samples_total as f64 / self.rays as f64
        } else {
            0.0
        };
        self.samples_per_payload_mean = if self.payload_messages > 0 {
            self.samples_total as f64 / self.payload_messages as f64
        } else {
            0.0
        };
    }
}

/// Pinhole camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct Camera<S = f64> {
    pub position: Point3<S>,
    pub look_at: Point3<S>,
    pub up: Vec3<S>,
    /// Degrees.
    pub vertical_fov: S,
    pub width: usize,
    pub height: usize,
}

impl<S: Real> Camera<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.vertical_fov > S::zero() && self.vertical_fov < S::lit(180.0)) {
            return Err(invalid("camera fov must lie in (0, 180) degrees"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid("camera resolution must be at least 1x1"));
        }
        let fwd = (self.look_at - self.position)
            .normalized()
            .ok_or_else(|| invalid("camera look_at equals position"))?;
        if fwd.cross(self.up).normalized().is_none() {
            return Err(invalid("camera up is parallel to the view direction"));
        }
        Ok(())
    }

    /// Ray through the center of pixel `(x, y)`, row 0 at the top.
    pub fn ray(&self, x: usize, y: usize) -> Ray<S> {
        let fwd = (self.look_at - self.position).normalized().expect("validated camera");
        let right = fwd.cross(self.up).normalized().expect("validated camera");
        let up = right.cross(fwd);
        let half_h = (self.vertical_fov.to_radians() * S::half()).tan();
        let aspect = S::from_usize_lossy(self.width) / S::from_usize_lossy(self.height);
        let u = ((S::from_usize_lossy(x) + S::half()) / S::from_usize_lossy(self.width) * S::two() - S::one())
            * half_h
            * aspect;
        let v = (S::one() - (S::from_usize_lossy(y) + S::half()) / S::from_usize_lossy(self.height) * S::two()) * half_h;
        Ray::unbounded(self.position, fwd + right * u + up * v).expect("non-degenerate pixel ray")
    }

    pub fn rays(&self) -> Vec<Ray<S>> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .map(|(x, y)| self.ray(x, y))
            .collect()
    }

    /// Camera outside `root` looking at its center from the `-z` side, slightly
    /// raised.
    pub fn looking_at(root: &Aabb<S>, width: usize, height: usize) -> Self {
        let c = root.center();
        let e = root.extent();
        let reach = e.x.max(e.y).max(e.z);
        Self {
            position: c + Vec3::new(S::lit(0.15) * reach, S::lit(0.35) * reach, -S::lit(1.8) * reach),
            look_at: c,
            up: Vec3::new(S::zero(), S::one(), S::zero()),
            vertical_fov: S::lit(40.0),
            width,
            height,
        }
    }
}

/// Tile owner: a masked copy of the scene plus its inbox.
#[derive(Clone, Debug)]
pub struct Worker<S = f64> {
    pub tile_id: usize,
    pub region: Region<S>,
    pub field: Field<S>,
    inbox: Vec<Message<S>>,
}

impl<S: Real> Worker<S> {
    pub fn box_(&self) -> Aabb<S> {
        self.region.aabb
    }

    /// Bins of `ray` owned by this worker, shaded with its own field.
    pub fn shade_own(&self, tree: &PartitionTree<S>, ray: &Ray<S>, dt: S) -> Vec<SampleInterval<S>> {
        let mut bins: Vec<_> = tree
            .tile_samples(ray, dt)
            .into_iter()
            .filter(|b| b.tile_id == Some(self.tile_id))
            .collect();
        quadrature::shade(&self.field, ray, &mut bins);
        bins
    }

    /// Segment packet for `ray`; `entry` orders an empty segment.
    pub fn segment(&self, tree: &PartitionTree<S>, ray: &Ray<S>, dt: S, entry: S) -> (SegmentAggregate<S>, usize) {
        let bins = self.shade_own(tree, ray, dt);
        let mut seg = SegmentAggregate::from_shaded(&bins);
        if bins.is_empty() {
            seg.order_t = entry;
        }
        (seg, bins.len())
    }

    fn handle(&self, tree: &PartitionTree<S>, dt: S, protocol: Protocol, msg: &Message<S>) -> (Message<S>, usize) {
        let Message::RayAssignment { ray_id, ray } = msg else {
            unreachable!("workers only receive assignments");
        };
        match protocol {
            Protocol::SampleBroadcast => {
                let bins = self.shade_own(tree, ray, dt);
                let n = bins.len();
                let samples = bins
                    .iter()
                    .map(|b| [b.t0, b.t1, b.sigma, b.rgb.r, b.rgb.g, b.rgb.b])
                    .collect();
                (
                    Message::SamplePayload {
                        ray_id: *ray_id,
                        samples,
                    },
                    n,
                )
            }
            Protocol::TileAggregate => {
                let entry = tree
                    .ray_spans(ray)
                    .into_iter()
                    .find(|s| s.tile_id == self.tile_id)
                    .map_or(S::zero(), |s| s.t_enter);
                let (segment, n) = self.segment(tree, ray, dt, entry);
                (
                    Message::TilePayload {
                        ray_id: *ray_id,
                        tile_id: self.tile_id,
                        segment,
                    },
                    n,
                )
            }
            Protocol::Mono => unreachable!("mono renders without workers"),
        }
    }

    fn run(&self, tree: &PartitionTree<S>, dt: S, protocol: Protocol) -> Vec<(Message<S>, usize)> {
        self.inbox.iter().map(|m| self.handle(tree, dt, protocol, m)).collect()
    }
}

/// One worker per leaf tile of `tree`.
#[derive(Clone, Debug)]
pub struct WorkerPool<S = f64> {
    pub tree: Arc<PartitionTree<S>>,
    pub scene: Field<S>,
    pub workers: Vec<Worker<S>>,
}

/// Spawns one worker per leaf, each holding the scene masked to its tile.
pub fn spawn<S: Real>(tree: &PartitionTree<S>, scene: &Field<S>) -> WorkerPool<S> {
    let workers = tree
        .leaves()
        .into_iter()
        .map(|leaf| Worker {
            tile_id: leaf.tile_id,
            region: leaf.region,
            field: scene.clone().masked(leaf.region, tree.root_box),
            inbox: Vec::new(),
        })
        .collect();
    WorkerPool {
        tree: Arc::new(tree.clone()),
        scene: scene.clone(),
        workers,
    }
}

/// The tiled scene seen as one field: every point is answered by the worker
/// owning it.
pub struct AssembledField<'a, S: Real> {
    pool: &'a WorkerPool<S>,
}

impl<S: Real> Radiance<S> for AssembledField<'_, S> {
    fn sigma(&self, p: Point3<S>) -> S {
        self.pool.workers[self.pool.tree.locate_clamped(p)].field.eval_sigma(p)
    }
    fn rgb(&self, p: Point3<S>, dir: Vec3<S>) -> Rgb<S> {
        self.pool.workers[self.pool.tree.locate_clamped(p)].field.eval_rgb(p, dir)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RenderOptions<S = f64> {
    pub dt: S,
    pub protocol: Protocol,
    pub schedule: Schedule,
    /// Also send every payload to every other worker and check that each worker
    /// composes the same result as the orchestrator.
    pub broadcast_all: bool,
}

impl<S: Real> RenderOptions<S> {
    pub fn new(dt: S, protocol: Protocol) -> Self {
        Self {
            dt,
            protocol,
            schedule: Schedule::Serial,
            broadcast_all: false,
        }
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }
}

impl<S: Real> WorkerPool<S> {
    pub fn num_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn assembled(&self) -> AssembledField<'_, S> {
        AssembledField { pool: self }
    }

    /// Monolithic render of `ray` over the unpartitioned scene. The bins are the
    /// tile-split grid so every protocol integrates the same quadrature.
    pub fn render_mono(&self, ray: &Ray<S>, dt: S) -> (RayAggregate<S>, usize) {
        let bins = self.tree.tile_samples(ray, dt);
        (quadrature::integrate_ray(&self.scene, ray, &bins), bins.len())
    }

    pub fn render_ray(&self, ray: &Ray<S>, opts: &RenderOptions<S>) -> Result<(RayAggregate<S>, CommStats)> {
        let (mut aggs, stats) = self.render_rays(std::slice::from_ref(ray), opts)?;
        Ok((aggs.pop().expect("one ray"), stats))
    }

    pub fn render_rays(&self, rays: &[Ray<S>], opts: &RenderOptions<S>) -> Result<(Vec<RayAggregate<S>>, CommStats)> {
        if self.workers.is_empty() {
            return Err(Error::ProtocolMismatch);
        }
        if !(opts.dt > S::zero()) {
            return Err(invalid("dt must be positive"));
        }
        match opts.protocol {
            Protocol::Mono => Ok(self.render_mono_batch(rays, opts)),
            _ => self.render_distributed(rays, opts),
        }
    }

    fn render_mono_batch(&self, rays: &[Ray<S>], opts: &RenderOptions<S>) -> (Vec<RayAggregate<S>>, CommStats) {
        let start = Instant::now();
        let run = |chunk: &[Ray<S>]| chunk.iter().map(|r| self.render_mono(r, opts.dt)).collect::<Vec<_>>();
        let results: Vec<(RayAggregate<S>, usize)> = match opts.schedule {
            Schedule::Threads(n) if n > 1 && rays.len() > 1 => {
                let chunk = rays.len().div_ceil(n);
                std::thread::scope(|scope| {
                    let handles: Vec<_> = rays.chunks(chunk).map(|c| scope.spawn(move || run(c))).collect();
                    handles
                        .into_iter()
                        .flat_map(|h| h.join().expect("render thread panicked"))
                        .collect()
                })
            }
            _ => run(rays),
        };
        let mut stats = CommStats::new(Protocol::Mono, self.workers.len(), rays.len());
        stats.samples_total = results.iter().map(|r| r.1).sum();
        stats.phase_seconds[1] = start.elapsed().as_secs_f64();
        stats.finish();
        (results.into_iter().map(|r| r.0).collect(), stats)
    }

    fn render_distributed(&self, rays: &[Ray<S>], opts: &RenderOptions<S>) -> Result<(Vec<RayAggregate<S>>, CommStats)> {
        let k = self.workers.len();
        let mut stats = CommStats::new(opts.protocol, k, rays.len());
        let t0 = Instant::now();

        // dispatch
        let mut workers = self.workers.clone();
        for w in &mut workers {
            w.inbox.clear();
        }
        for (ray_id, ray) in rays.iter().enumerate() {
            for span in self.tree.ray_spans(ray) {
                workers[span.tile_id].inbox.push(Message::RayAssignment { ray_id, ray: *ray });
                stats.orchestrator.messages_sent += 1;
                stats.per_worker[span.tile_id].io.messages_received += 1;
            }
        }
        let t1 = Instant::now();

        // workers
        let tree = &*self.tree;
        let (dt, protocol) = (opts.dt, opts.protocol);
        let mut replies: Vec<(usize, Message<S>, usize)> = match opts.schedule {
            Schedule::Serial => workers
                .iter()
                .flat_map(|w| w.run(tree, dt, protocol).into_iter().map(move |(m, n)| (w.tile_id, m, n)))
                .collect(),
            Schedule::Shuffled(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut order: Vec<usize> = (0..k).collect();
                order.shuffle(&mut rng);
                let mut out: Vec<_> = order
                    .into_iter()
                    .flat_map(|i| {
                        let w = &workers[i];
                        w.run(tree, dt, protocol).into_iter().map(move |(m, n)| (w.tile_id, m, n))
                    })
                    .collect();
                out.shuffle(&mut rng);
                out
            }
            Schedule::Threads(n) => {
                let n = n.max(1);
                let (tx, rx) = mpsc::channel();
                std::thread::scope(|scope| {
                    for group in 0..n {
                        let tx = tx.clone();
                        let workers = &workers;
                        scope.spawn(move || {
                            for w in workers.iter().skip(group).step_by(n) {
                                for m in &w.inbox {
                                    let (reply, cnt) = w.handle(tree, dt, protocol, m);
                                    // receiver outlives the scope
                                    tx.send((w.tile_id, reply, cnt)).expect("compositor inbox open");
                                }
                            }
                        });
                    }
                });
                drop(tx);
                rx.into_iter().collect()
            }
        };
        let t2 = Instant::now();

        // accounting
        for (tile, msg, n) in &replies {
            let scalars = msg.payload_scalars();
            let w = &mut stats.per_worker[*tile];
            w.samples += n;
            w.io.scalars_sent += scalars;
            w.io.messages_sent += 1;
            stats.orchestrator.scalars_received += scalars;
            stats.orchestrator.messages_received += 1;
            stats.payload_messages += 1;
            if opts.broadcast_all {
                for peer in 0..k {
                    if peer != *tile {
                        stats.per_worker[*tile].io.scalars_sent += scalars;
                        stats.per_worker[*tile].io.messages_sent += 1;
                        stats.per_worker[peer].io.scalars_received += scalars;
                        stats.per_worker[peer].io.messages_received += 1;
                    }
                }
            }
        }

        // compose
        let mut per_ray: Vec<Vec<(usize, Message<S>)>> = vec![Vec::new(); rays.len()];
        for (tile, msg, _) in replies.drain(..) {
            per_ray[msg.ray_id()].push((tile, msg));
        }
        let results = per_ray
            .iter()
            .map(|msgs| compose_replies(msgs.iter().map(|(t, m)| (*t, m))))
            .collect::<Result<Vec<_>>>()?;

        if opts.broadcast_all {
            // each worker composes from its own reply plus every peer's copy; the
            // copies are the same immutable payloads
            for w in 0..k {
                for (ray_id, msgs) in per_ray.iter().enumerate() {
                    if msgs.is_empty() {
                        continue;
                    }
                    let mut view: Vec<(usize, &Message<S>)> = msgs.iter().map(|(t, m)| (*t, m)).collect();
                    let shift = w % view.len();
                    view.rotate_left(shift);
                    let mine = compose_replies(view.into_iter())?;
                    if mine != results[ray_id] {
                        return Err(Error::BroadcastMismatch { worker: w, ray_id });
                    }
                }
            }
        }
        let t3 = Instant::now();
        stats.phase_seconds = [
            (t1 - t0).as_secs_f64(),
            (t2 - t1).as_secs_f64(),
            (t3 - t2).as_secs_f64(),
        ];
        stats.finish();
        Ok((results, stats))
    }
}

/// Orders one ray's replies geometrically and composes them.
fn compose_replies<'a, S: Real>(msgs: impl Iterator<Item = (usize, &'a Message<S>)>) -> Result<RayAggregate<S>> {
    let mut segments: Vec<(usize, SegmentAggregate<S>)> = Vec::new();
    let mut samples: Vec<SampleInterval<S>> = Vec::new();
    for (tile, msg) in msgs {
        match msg {
            Message::TilePayload { segment, .. } => segments.push((tile, *segment)),
            Message::SamplePayload { samples: s, .. } => samples.extend(s.iter().map(|v| {
                let mut b = SampleInterval::new(v[0], v[1]);
                b.sigma = v[2];
                b.rgb = Rgb::new(v[3], v[4], v[5]);
                b.tile_id = Some(tile);
                b
            })),
            _ => return Err(invalid("unexpected message at compositor")),
        }
    }
    if !samples.is_empty() || segments.is_empty() {
        samples.sort_by(|a, b| a.t0.total_cmp(&b.t0));
        return Ok(quadrature::composite(&samples));
    }
    segrender::sort_segments(&mut segments);
    let ordered: Vec<_> = segments.into_iter().map(|(_, s)| s).collect();
    segrender::compose(&ordered)
}

/// Renders one primary ray per pixel; pixels are `C + T * background` clamped.
pub fn render_image<S: Real>(
    pool: &WorkerPool<S>,
    camera: &Camera<S>,
    opts: &RenderOptions<S>,
    background: Rgb<S>,
) -> Result<(Image<S>, CommStats)> {
    camera.validate()?;
    let (aggs, stats) = pool.render_rays(&camera.rays(), opts)?;
    let pixels = aggs.iter().map(|a| a.over(background).clamped()).collect();
    Ok((
        Image {
            width: camera.width,
            height: camera.height,
            pixels,
        },
        stats,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub dt: f64,
    pub samples_per_payload: f64,
    pub protocol: Protocol,
    pub scalars_total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioFit {
    /// Least-squares slope of `sample_scalars / tile_scalars` against mean bins
    /// per payload; absent with fewer than two distinct sweep points.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Slope implied by the payload sizes: 6 / 9.
    pub predicted_slope: f64,
    /// Largest relative gap between measured `tile/sample` ratios and `9 / (1 + 6 S)`.
    pub max_model_error: f64,
    pub slope_within_30pct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub fit: RatioFit,
}

/// Renders the camera view with both distributed protocols at every `dt`.
pub fn bench_protocols<S: Real>(
    pool: &WorkerPool<S>,
    camera: &Camera<S>,
    dts: &[S],
    schedule: Schedule,
) -> Result<BenchReport> {
    if dts.is_empty() {
        return Err(invalid("empty dt sweep"));
    }
    camera.validate()?;
    let rays = camera.rays();
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &dt in dts {
        let opts = RenderOptions::new(dt, Protocol::SampleBroadcast).with_schedule(schedule);
        let (_, sample) = pool.render_rays(&rays, &opts)?;
        let opts = RenderOptions::new(dt, Protocol::TileAggregate).with_schedule(schedule);
        let (_, tile) = pool.render_rays(&rays, &opts)?;
        let s_bar = sample.samples_per_payload_mean;
        for st in [&sample, &tile] {
            rows.push(BenchRow {
                dt: dt.to_f64_lossy(),
                samples_per_payload: s_bar,
                protocol: st.protocol,
                scalars_total: st.scalars_sent_total,
            });
        }
        if tile.scalars_sent_total > 0 {
            points.push((s_bar, sample.scalars_sent_total as f64 / tile.scalars_sent_total as f64));
        }
    }
    let predicted_slope = 6.0 / 9.0;
    let max_model_error = points
        .iter()
        .map(|&(s, r)| {
            let model = 9.0 / (1.0 + 6.0 * s);
            ((1.0 / r) - model).abs() / model
        })
        .fold(0.0, f64::max);
    let (slope, intercept) = linear_fit(&points).unzip();
    let slope_within_30pct = match slope {
        Some(b) => (b - predicted_slope).abs() <= 0.3 * predicted_slope,
        None => max_model_error <= 0.3,
    };
    Ok(BenchReport {
        rows,
        fit: RatioFit {
            slope,
            intercept,
            predicted_slope,
            max_model_error,
            slope_within_30pct,
        },
    })
}

fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if points.len() < 2 || sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    Some((b, my - b * mx))
}
