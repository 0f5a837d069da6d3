//! Balanced axis-aligned tiling of a scene from a point cloud.
//!
//! Every split puts its plane at the empirical median of the points along the
//! chosen axis, so sibling tiles receive the same number of points (within one).
//! Among the three candidate axes the one giving the most cube-like children
//! wins. Tiles are half-open, `[min, max)`, on split faces: a point exactly on a
//! plane belongs to the high side when locating.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::Region;
use crate::geom::{Aabb, Axis, Point3, Ray};
use crate::num::Real;
use crate::quadrature::{generate_samples, ray_box_intersect, split_at_planes, SampleInterval};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSource {
    Sfm,
    RayDiscretized,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<S = f64> {
    pub points: Vec<Point3<S>>,
    pub source: PointSource,
}

/// Tree node. Serialized with a fixed field order so written trees are
/// byte-stable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound = "S: Real")]
pub enum Node<S = f64> {
    Split {
        axis: Axis,
        plane: S,
        /// Build points under this node.
        points: usize,
        low: Box<Node<S>>,
        high: Box<Node<S>>,
    },
    Leaf {
        tile_id: usize,
        #[serde(rename = "box")]
        aabb: Aabb<S>,
        points: usize,
    },
}

impl<S: Real> Node<S> {
    pub fn points(&self) -> usize {
        match self {
            Node::Split { points, .. } | Node::Leaf { points, .. } => *points,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Leaf<S = f64> {
    pub tile_id: usize,
    pub aabb: Aabb<S>,
    pub region: Region<S>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct PartitionTree<S = f64> {
    pub root_box: Aabb<S>,
    pub depth: usize,
    pub root: Node<S>,
}

/// Entry/exit of a ray through one tile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TileSpan<S = f64> {
    pub tile_id: usize,
    pub t_enter: S,
    pub t_exit: S,
}

impl<S: Real> PartitionTree<S> {
    /// Single tile covering `root_box`.
    pub fn single(root_box: Aabb<S>) -> Self {
        Self {
            root_box,
            depth: 0,
            root: Node::Leaf {
                tile_id: 0,
                aabb: root_box,
                points: 0,
            },
        }
    }

    pub fn num_tiles(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |node| {
            if matches!(node, Node::Leaf { .. }) {
                n += 1;
            }
        });
        n
    }

    fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Node<S>)) {
        fn rec<'a, S: Real>(n: &'a Node<S>, f: &mut dyn FnMut(&'a Node<S>)) {
            f(n);
            if let Node::Split { low, high, .. } = n {
                rec(low, f);
                rec(high, f);
            }
        }
        rec(&self.root, f)
    }

    /// Leaves in tile-id (depth-first) order.
    pub fn leaves(&self) -> Vec<Leaf<S>> {
        let mut out = Vec::new();
        self.walk(&mut |node| {
            if let Node::Leaf { tile_id, aabb, .. } = node {
                out.push(Leaf {
                    tile_id: *tile_id,
                    aabb: *aabb,
                    region: self.region_of(aabb),
                });
            }
        });
        out.sort_by_key(|l| l.tile_id);
        out
    }

    fn region_of(&self, aabb: &Aabb<S>) -> Region<S> {
        let mut closed_hi = [false; 3];
        for (d, a) in Axis::ALL.into_iter().enumerate() {
            closed_hi[d] = aabb.max[a] >= self.root_box.max[a];
        }
        Region {
            aabb: *aabb,
            closed_hi,
        }
    }

    /// Split nodes as `(axis, plane, low count, high count)` in depth-first order.
    pub fn splits(&self) -> Vec<(Axis, S, usize, usize)> {
        let mut out = Vec::new();
        self.walk(&mut |node| {
            if let Node::Split {
                axis,
                plane,
                low,
                high,
                ..
            } = node
            {
                out.push((*axis, *plane, low.points(), high.points()));
            }
        });
        out
    }

    /// Tile containing `p`. Points on a split plane go to the high side.
    pub fn locate(&self, p: Point3<S>) -> Result<usize> {
        if !self.root_box.contains(p) {
            return Err(Error::OutOfBounds {
                x: p.x.to_f64_lossy(),
                y: p.y.to_f64_lossy(),
                z: p.z.to_f64_lossy(),
            });
        }
        Ok(self.descend(p, false))
    }

    /// [`Self::locate`] after clamping `p` into the root box; total on all of space.
    pub fn locate_clamped(&self, p: Point3<S>) -> usize {
        self.descend(self.root_box.clamp(p), false)
    }

    /// Side a point took while the tree was built: ties go to the low side.
    pub fn build_tile(&self, p: Point3<S>) -> usize {
        self.descend(p, true)
    }

    fn descend(&self, p: Point3<S>, ties_low: bool) -> usize {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { tile_id, .. } => return *tile_id,
                Node::Split {
                    axis,
                    plane,
                    low,
                    high,
                    ..
                } => {
                    let v = p[*axis];
                    let go_low = v < *plane || (ties_low && v == *plane);
                    node = if go_low { low } else { high };
                }
            }
        }
    }

    /// Tiles crossed by `ray` inside the root box, in ray order.
    pub fn ray_spans(&self, ray: &Ray<S>) -> Vec<TileSpan<S>> {
        let mut out = Vec::new();
        if let Some((lo, hi)) = ray_box_intersect(ray, &self.root_box) {
            self.spans_rec(&self.root, ray, lo, hi, &mut out);
        }
        out.sort_by(|a, b| a.t_enter.total_cmp(&b.t_enter).then(a.tile_id.cmp(&b.tile_id)));
        out
    }

    fn spans_rec(&self, node: &Node<S>, ray: &Ray<S>, lo: S, hi: S, out: &mut Vec<TileSpan<S>>) {
        if !(lo < hi) {
            return;
        }
        match node {
            Node::Leaf { tile_id, .. } => out.push(TileSpan {
                tile_id: *tile_id,
                t_enter: lo,
                t_exit: hi,
            }),
            Node::Split {
                axis,
                plane,
                low,
                high,
                ..
            } => {
                let d = ray.dir[*axis];
                let o = ray.origin[*axis];
                if d == S::zero() {
                    let child = if o < *plane { low } else { high };
                    self.spans_rec(child, ray, lo, hi, out);
                    return;
                }
                let t = (*plane - o) / d;
                let (first, second) = if d > S::zero() { (low, high) } else { (high, low) };
                self.spans_rec(first, ray, lo, hi.min(t), out);
                self.spans_rec(second, ray, lo.max(t), hi, out);
            }
        }
    }

    /// Distances at which `ray` crosses from one tile into another.
    pub fn ray_cuts(&self, ray: &Ray<S>) -> Vec<S> {
        let spans = self.ray_spans(ray);
        let mut cuts: Vec<S> = spans.iter().skip(1).map(|s| s.t_enter).collect();
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();
        cuts
    }

    /// Global `dt` grid for `ray`, split at tile crossings, each bin tagged with
    /// the tile owning its midpoint.
    pub fn tile_samples(&self, ray: &Ray<S>, dt: S) -> Vec<SampleInterval<S>> {
        let base = generate_samples(ray, &self.root_box, dt);
        let mut bins = split_at_planes(&base, &self.ray_cuts(ray));
        for b in &mut bins {
            b.tile_id = Some(self.locate_clamped(ray.at(b.m)));
        }
        bins
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let tree: Self = serde_json::from_str(s)?;
        tree.validate()?;
        Ok(tree)
    }

    /// Checks that ids are `0..2^depth` in depth-first order and that child boxes
    /// tile their parent.
    pub fn validate(&self) -> Result<()> {
        self.root_box.validate()?;
        let mut next = 0usize;
        check_node(&self.root, &self.root_box, self.depth, &mut next)?;
        Ok(())
    }
}

fn check_node<S: Real>(node: &Node<S>, bx: &Aabb<S>, depth: usize, next: &mut usize) -> Result<()> {
    match node {
        Node::Leaf { tile_id, aabb, .. } => {
            if depth != 0 {
                return Err(invalid("leaf above the declared tree depth"));
            }
            if *tile_id != *next {
                return Err(invalid(format!("expected tile id {next}, found {tile_id}")));
            }
            if aabb != bx {
                return Err(invalid(format!("leaf {tile_id} box does not match its splits")));
            }
            *next += 1;
            Ok(())
        }
        Node::Split {
            axis,
            plane,
            low,
            high,
            ..
        } => {
            if depth == 0 {
                return Err(invalid("split below the declared tree depth"));
            }
            if !(bx.min[*axis] < *plane && *plane < bx.max[*axis]) {
                return Err(invalid("split plane outside its node box"));
            }
            let (lb, hb) = split_box(bx, *axis, *plane);
            check_node(low, &lb, depth - 1, next)?;
            check_node(high, &hb, depth - 1, next)
        }
    }
}

fn split_box<S: Real>(bx: &Aabb<S>, axis: Axis, plane: S) -> (Aabb<S>, Aabb<S>) {
    let mut low = *bx;
    let mut high = *bx;
    low.max[axis] = plane;
    high.min[axis] = plane;
    (low, high)
}

/// Sum over the three edges of `|ln(edge / geometric mean)|`; zero for a cube.
fn aspect_score<S: Real>(b: &Aabb<S>) -> S {
    let e = b.extent();
    let mut edges = [e.x, e.y, e.z];
    edges.sort_by(|a, b| a.total_cmp(b));
    let logs = edges.map(|v| v.ln());
    let mean = (logs[0] + logs[1] + logs[2]) / S::lit(3.0);
    logs.iter().fold(S::zero(), |acc, &l| acc + (l - mean).abs())
}

fn median<S: Real>(sorted: &[S]) -> S {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) * S::half()
    }
}

/// Median plane on the axis whose children are closest to cubes.
pub fn choose_split<S: Real>(points: &[Point3<S>], bx: &Aabb<S>) -> Result<(Axis, S)> {
    if points.len() < 2 {
        return Err(Error::InsufficientPoints {
            need: 2,
            got: points.len(),
        });
    }
    let mut best: Option<(S, Axis, S)> = None;
    for axis in Axis::ALL {
        let mut coords: Vec<S> = points.iter().map(|p| p[axis]).collect();
        coords.sort_by(|a, b| a.total_cmp(b));
        if coords[0] == coords[coords.len() - 1] {
            continue;
        }
        let plane = median(&coords);
        if !(bx.min[axis] < plane && plane < bx.max[axis]) {
            continue;
        }
        let (lb, hb) = split_box(bx, axis, plane);
        let score = aspect_score(&lb) + aspect_score(&hb);
        if best.map_or(true, |(s, _, _)| score < s) {
            best = Some((score, axis, plane));
        }
    }
    best.map(|(_, a, p)| (a, p)).ok_or(Error::DegenerateSplit)
}

/// Recursive median split into `2^depth` tiles.
pub fn build_tree<S: Real>(points: &[Point3<S>], root_box: Aabb<S>, depth: usize) -> Result<PartitionTree<S>> {
    root_box.validate()?;
    let need = 1usize
        .checked_shl(depth as u32)
        .ok_or_else(|| invalid("partition depth too large"))?;
    if points.len() < need {
        return Err(Error::InsufficientPoints {
            need,
            got: points.len(),
        });
    }
    if let Some(p) = points.iter().find(|p| !p.is_finite() || !root_box.contains(**p)) {
        return Err(invalid(format!(
            "point ({}, {}, {}) is not finite or lies outside the root box",
            p.x, p.y, p.z
        )));
    }
    let mut next_id = 0;
    let root = build_node(points.to_vec(), root_box, depth, &mut next_id)?;
    Ok(PartitionTree {
        root_box,
        depth,
        root,
    })
}

fn build_node<S: Real>(points: Vec<Point3<S>>, bx: Aabb<S>, depth: usize, next_id: &mut usize) -> Result<Node<S>> {
    let count = points.len();
    if depth == 0 {
        let tile_id = *next_id;
        *next_id += 1;
        return Ok(Node::Leaf {
            tile_id,
            aabb: bx,
            points: count,
        });
    }
    let need = 1usize << depth;
    if count < need {
        return Err(Error::InsufficientPoints { need, got: count });
    }
    let (axis, plane) = choose_split(&points, &bx)?;
    let (lo_pts, hi_pts): (Vec<_>, Vec<_>) = points.into_iter().partition(|p| p[axis] <= plane);
    let (lb, hb) = split_box(&bx, axis, plane);
    let low = build_node(lo_pts, lb, depth - 1, next_id)?;
    let high = build_node(hi_pts, hb, depth - 1, next_id)?;
    Ok(Node::Split {
        axis,
        plane,
        points: count,
        low: Box::new(low),
        high: Box::new(high),
    })
}

/// Midpoints of the `dt` grid along every ray, uniformly subsampled to at most
/// `max_points` with a seeded generator.
pub fn rays_to_points<S: Real>(
    rays: &[Ray<S>],
    root_box: &Aabb<S>,
    dt: S,
    max_points: usize,
    seed: u64,
) -> Result<PointCloud<S>> {
    if rays.is_empty() {
        return Err(invalid("no rays to discretize"));
    }
    if max_points == 0 {
        return Err(invalid("max_points must be positive"));
    }
    if !(dt > S::zero()) {
        return Err(invalid("dt must be positive"));
    }
    let mut candidates = Vec::new();
    for ray in rays {
        candidates.extend(generate_samples(ray, root_box, dt).iter().map(|s| root_box.clamp(ray.at(s.m))));
    }
    if candidates.is_empty() {
        return Err(Error::NoPoints);
    }
    let points = if candidates.len() <= max_points {
        candidates
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, candidates.len(), max_points).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| candidates[i]).collect()
    };
    Ok(PointCloud {
        points,
        source: PointSource::RayDiscretized,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub num_tiles: usize,
    pub leaf_points: Vec<usize>,
    /// Max over min leaf point count; absent when some leaf is empty.
    pub point_ratio: Option<f64>,
    /// Largest sibling count difference over all splits.
    pub max_split_imbalance: usize,
    pub leaf_samples: Option<Vec<usize>>,
    pub sample_ratio: Option<f64>,
}

fn ratio(counts: &[usize]) -> Option<f64> {
    let max = *counts.iter().max()?;
    let min = *counts.iter().min()?;
    (min > 0).then(|| max as f64 / min as f64)
}

/// Per-tile workload: build points (assigned with the build's tie rule) and,
/// when rays are given, render-time quadrature bins.
pub fn balance_report<S: Real>(
    tree: &PartitionTree<S>,
    points: &[Point3<S>],
    rays: Option<(&[Ray<S>], S)>,
) -> BalanceReport {
    let n = tree.num_tiles();
    let mut leaf_points = vec![0usize; n];
    for p in points {
        leaf_points[tree.build_tile(*p)] += 1;
    }
    let max_split_imbalance = split_counts(tree, points)
        .into_iter()
        .map(|(l, h)| l.abs_diff(h))
        .max()
        .unwrap_or(0);
    let leaf_samples = rays.map(|(rays, dt)| {
        let mut counts = vec![0usize; n];
        for ray in rays {
            for b in tree.tile_samples(ray, dt) {
                counts[b.tile_id.expect("tile assigned")] += 1;
            }
        }
        counts
    });
    BalanceReport {
        num_tiles: n,
        point_ratio: ratio(&leaf_points),
        leaf_points,
        max_split_imbalance,
        sample_ratio: leaf_samples.as_deref().and_then(ratio),
        leaf_samples,
    }
}

/// Recounts `(low, high)` children of every split by pushing `points` down the
/// tree with the build tie rule, in depth-first order.
pub fn split_counts<S: Real>(tree: &PartitionTree<S>, points: &[Point3<S>]) -> Vec<(usize, usize)> {
    fn rec<S: Real>(node: &Node<S>, pts: Vec<Point3<S>>, out: &mut Vec<(usize, usize)>) {
        if let Node::Split {
            axis,
            plane,
            low,
            high,
            ..
        } = node
        {
            let (l, h): (Vec<_>, Vec<_>) = pts.into_iter().partition(|p| p[*axis] <= *plane);
            out.push((l.len(), h.len()));
            rec(low, l, out);
            rec(high, h, out);
        }
    }
    let mut out = Vec::new();
    rec(&tree.root, points.to_vec(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use rand::Rng;

    fn pts(v: &[[f64; 3]]) -> Vec<Point3<f64>> {
        v.iter().map(|&p| p.into()).collect()
    }

    fn random_points(n: usize, seed: u64, lo: f64, hi: f64) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vec3::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi)))
            .collect()
    }

    #[test]
    fn elongated_box_splits_on_x_median() {
        let p = pts(&[[0.0, 0.5, 0.5], [1.0, 0.5, 0.5], [2.0, 0.5, 0.5], [3.0, 0.5, 0.5]]);
        let bx = Aabb::lit([0.0; 3], [4.0, 1.0, 1.0]);
        assert_eq!(choose_split(&p, &bx).unwrap(), (Axis::X, 1.5));
    }

    #[test]
    fn symmetric_tie_prefers_x() {
        let p = pts(&[[0.25, 0.25, 0.5], [0.75, 0.75, 0.5], [0.25, 0.75, 0.5], [0.75, 0.25, 0.5]]);
        let bx = Aabb::lit([0.0; 3], [1.0, 1.0, 0.5]);
        assert_eq!(choose_split(&p, &bx).unwrap(), (Axis::X, 0.5));
    }

    #[test]
    fn two_points_split_between_them() {
        let p = pts(&[[0.2, 0.5, 0.5], [0.6, 0.5, 0.5]]);
        let (axis, plane) = choose_split(&p, &Aabb::lit([0.0; 3], [1.0; 3])).unwrap();
        assert_eq!(axis, Axis::X);
        assert!((plane - 0.4).abs() < 1e-15);
    }

    #[test]
    fn odd_count_uses_middle_value() {
        let p = pts(&[[0.1, 0.5, 0.5], [0.4, 0.5, 0.5], [0.9, 0.5, 0.5]]);
        let (_, plane) = choose_split(&p, &Aabb::lit([0.0; 3], [1.0, 0.2, 0.2])).unwrap();
        assert_eq!(plane, 0.4);
        let tree = build_tree(&p, Aabb::lit([0.0; 3], [1.0, 1.0, 1.0]), 1).unwrap();
        assert_eq!(tree.splits()[0].2, 2);
        assert_eq!(tree.splits()[0].3, 1);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let p = pts(&[[0.5; 3], [0.5; 3], [0.5; 3]]);
        assert!(matches!(choose_split(&p, &Aabb::lit([0.0; 3], [1.0; 3])), Err(Error::DegenerateSplit)));
        assert!(matches!(
            build_tree(&p, Aabb::lit([0.0; 3], [1.0; 3]), 1),
            Err(Error::DegenerateSplit)
        ));
    }

    #[test]
    fn depth_zero_is_root() {
        let p = random_points(5, 1, 0.0, 1.0);
        let tree = build_tree(&p, Aabb::lit([0.0; 3], [1.0; 3]), 0).unwrap();
        assert_eq!(tree.num_tiles(), 1);
        assert_eq!(tree.leaves()[0].aabb, tree.root_box);
        assert_eq!(tree.locate(Vec3::lit(0.3, 0.3, 0.3)).unwrap(), 0);
    }

    #[test]
    fn insufficient_points() {
        let p = random_points(3, 2, 0.0, 1.0);
        assert!(matches!(
            build_tree(&p, Aabb::lit([0.0; 3], [1.0; 3]), 2),
            Err(Error::InsufficientPoints { need: 4, got: 3 })
        ));
    }

    #[test]
    fn eight_points_split_evenly() {
        let p = random_points(8, 3, 0.0, 1.0);
        let tree = build_tree(&p, Aabb::lit([0.0; 3], [1.0; 3]), 1).unwrap();
        let s = tree.splits();
        assert_eq!((s[0].2, s[0].3), (4, 4));
    }

    #[test]
    fn clustered_cloud_balances_and_refines_inside_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p: Vec<_> = (0..1000)
            .map(|_| Vec3::new(rng.gen_range(0.0..0.25), rng.gen_range(0.0..0.25), rng.gen_range(0.0..0.25)))
            .collect();
        let root = Aabb::lit([0.0; 3], [1.0; 3]);
        let tree = build_tree(&p, root, 3).unwrap();
        let report = balance_report(&tree, &p, None);
        assert!(report.leaf_points.iter().all(|&c| c == 125));
        let volumes: Vec<f64> = tree
            .leaves()
            .iter()
            .map(|l| {
                let e = l.aabb.extent();
                e.x * e.y * e.z
            })
            .collect();
        let cluster_leaf = tree.locate(Vec3::lit(0.1, 0.1, 0.1)).unwrap();
        let outer_leaf = tree.locate(Vec3::lit(0.9, 0.9, 0.9)).unwrap();
        assert!(volumes[cluster_leaf] < volumes[outer_leaf]);
    }

    #[test]
    fn locate_boundary_rule_and_bounds() {
        let p = pts(&[[0.0, 0.5, 0.5], [1.0, 0.5, 0.5], [2.0, 0.5, 0.5], [3.0, 0.5, 0.5]]);
        let tree = build_tree(&p, Aabb::lit([0.0; 3], [4.0, 1.0, 1.0]), 1).unwrap();
        assert_eq!(tree.locate(Vec3::lit(1.5, 0.5, 0.5)).unwrap(), 1);
        assert_eq!(tree.locate(Vec3::lit(1.4999, 0.5, 0.5)).unwrap(), 0);
        assert_eq!(tree.locate(Vec3::lit(4.0, 1.0, 1.0)).unwrap(), 1);
        assert!(matches!(tree.locate(Vec3::lit(4.1, 0.5, 0.5)), Err(Error::OutOfBounds { .. })));
        assert_eq!(tree.locate_clamped(Vec3::lit(-3.0, 0.5, 0.5)), 0);
    }

    #[test]
    fn locate_matches_leaf_scan() {
        let p = random_points(300, 5, 0.0, 2.0);
        let root = Aabb::lit([0.0; 3], [2.0; 3]);
        let tree = build_tree(&p, root, 3).unwrap();
        let leaves = tree.leaves();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..2000 {
            let q = Vec3::new(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
            let owners: Vec<_> = leaves.iter().filter(|l| l.region.contains(q)).map(|l| l.tile_id).collect();
            assert_eq!(owners, vec![tree.locate(q).unwrap()]);
        }
    }

    #[test]
    fn ray_spans_cover_clipped_range() {
        let p = random_points(64, 8, 0.0, 1.0);
        let tree = build_tree(&p, Aabb::lit([0.0; 3], [1.0; 3]), 3).unwrap();
        let ray = Ray::new(Vec3::lit(-0.5, 0.13, 0.71), Vec3::lit(1.0, 0.37, -0.2), 0.0, 10.0).unwrap();
        let spans = tree.ray_spans(&ray);
        let (lo, hi) = ray_box_intersect(&ray, &tree.root_box).unwrap();
        assert_eq!(spans.first().unwrap().t_enter, lo);
        assert_eq!(spans.last().unwrap().t_exit, hi);
        for w in spans.windows(2) {
            assert!((w[0].t_exit - w[1].t_enter).abs() < 1e-12);
        }
        for s in &spans {
            let mid = ray.at((s.t_enter + s.t_exit) / 2.0);
            assert_eq!(tree.locate_clamped(mid), s.tile_id);
        }
        let bins = tree.tile_samples(&ray, 0.05);
        for b in &bins {
            let span = spans.iter().find(|s| s.tile_id == b.tile_id.unwrap()).unwrap();
            assert!(b.t0 >= span.t_enter - 1e-12 && b.t1 <= span.t_exit + 1e-12);
        }
    }

    #[test]
    fn json_round_trip_is_fixed_point() {
        let p = random_points(100, 9, -1.0, 1.0);
        let tree = build_tree(&p, Aabb::lit([-1.0; 3], [1.0; 3]), 2).unwrap();
        let s = tree.to_json().unwrap();
        let back = PartitionTree::from_json(&s).unwrap();
        assert_eq!(back, tree);
        assert_eq!(back.to_json().unwrap(), s);
    }

    #[test]
    fn rejects_tampered_tree() {
        let p = random_points(16, 10, 0.0, 1.0);
        let tree = build_tree(&p, Aabb::lit([0.0; 3], [1.0; 3]), 1).unwrap();
        let s = tree.to_json().unwrap().replacen("\"tile_id\": 1", "\"tile_id\": 7", 1);
        assert!(PartitionTree::<f64>::from_json(&s).is_err());
    }

    #[test]
    fn ray_discretization() {
        let root = Aabb::lit([0.0; 3], [1.0; 3]);
        let ray = Ray::new(Vec3::lit(-1.0, 0.5, 0.5), Vec3::lit(1.0, 0.0, 0.0), 0.0, 10.0).unwrap();
        let cloud = rays_to_points(&[ray], &root, 0.1, 100, 0).unwrap();
        assert_eq!(cloud.points.len(), 10);
        assert!(cloud.points.iter().all(|p| p.y == 0.5 && p.z == 0.5));
        let a = rays_to_points(&[ray], &root, 0.1, 5, 42).unwrap();
        let b = rays_to_points(&[ray], &root, 0.1, 5, 42).unwrap();
        assert_eq!(a.points.len(), 5);
        assert_eq!(a, b);
        let miss = Ray::new(Vec3::lit(-1.0, 5.0, 0.5), Vec3::lit(1.0, 0.0, 0.0), 0.0, 10.0).unwrap();
        assert!(matches!(rays_to_points(&[miss], &root, 0.1, 5, 0), Err(Error::NoPoints)));
    }

    #[test]
    fn uniform_grid_points_balance_exactly() {
        let mut p = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    p.push(Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5));
                }
            }
        }
        let tree = build_tree(&p, Aabb::lit([0.0; 3], [4.0; 3]), 2).unwrap();
        let r = balance_report(&tree, &p, None);
        assert_eq!(r.leaf_points, vec![16; 4]);
        assert_eq!(r.point_ratio, Some(1.0));
    }
}
