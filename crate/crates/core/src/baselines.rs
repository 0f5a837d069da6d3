//! Blending baselines over overlapping tiles, where each tile carries its own
//! independently obtained field. Unlike segment composition these do not
//! reproduce the monolithic render in general.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Radiance, Region};
use crate::geom::{Aabb, Axis, Point3, Ray, Rgb, Vec3};
use crate::io::Image;
use crate::num::Real;
use crate::partitioner::PartitionTree;
use crate::quadrature::{self, RayAggregate};

/// Leaf boxes grown by `f` times their edge length on every side, clamped to
/// the root box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct OverlappedTiles<S = f64> {
    pub root: Aabb<S>,
    pub tiles: Vec<Region<S>>,
    pub f: S,
}

pub fn expand_tiles<S: Real>(tree: &PartitionTree<S>, f: S) -> Result<OverlappedTiles<S>> {
    if !(f >= S::zero()) || !f.is_finite() {
        return Err(crate::error::invalid("overlap fraction must be finite and non-negative"));
    }
    let root = tree.root_box;
    let tiles = tree
        .leaves()
        .into_iter()
        .map(|leaf| {
            if f == S::zero() {
                return leaf.region;
            }
            let grow = leaf.aabb.extent() * f;
            let aabb = Aabb {
                min: (leaf.aabb.min - grow).max(root.min),
                max: (leaf.aabb.max + grow).min(root.max),
            };
            let mut closed_hi = [false; 3];
            for (d, a) in Axis::ALL.into_iter().enumerate() {
                closed_hi[d] = aabb.max[a] >= root.max[a];
            }
            Region { aabb, closed_hi }
        })
        .collect();
    Ok(OverlappedTiles { root, tiles, f })
}

impl<S: Real> OverlappedTiles<S> {
    /// Distance from `p` to the nearest face of tile `i` that is interior to
    /// the root box; `None` when every face lies on the root box.
    pub fn boundary_distance(&self, i: usize, p: Point3<S>) -> Option<S> {
        let b = &self.tiles[i].aabb;
        let mut best: Option<S> = None;
        for a in Axis::ALL {
            if b.min[a] > self.root.min[a] {
                let d = p[a] - b.min[a];
                best = Some(best.map_or(d, |x| x.min(d)));
            }
            if b.max[a] < self.root.max[a] {
                let d = b.max[a] - p[a];
                best = Some(best.map_or(d, |x| x.min(d)));
            }
        }
        best.map(|d| d.max(S::zero()))
    }

    /// Normalized blend weights of the tiles containing `p` (after clamping into
    /// the root box). Uniform when every containing tile has zero weight.
    pub fn blend_weights(&self, p: Point3<S>) -> Vec<(usize, S)> {
        let q = self.root.clamp(p);
        let mut raw: Vec<(usize, S)> = self
            .tiles
            .iter()
            .enumerate()
            .filter(|(_, t)| t.contains(q))
            .map(|(i, _)| (i, self.boundary_distance(i, q).unwrap_or(S::one())))
            .collect();
        let total: S = raw.iter().map(|r| r.1).sum();
        let n = S::from_usize_lossy(raw.len());
        for r in &mut raw {
            r.1 = if total > S::zero() { r.1 / total } else { S::one() / n };
        }
        raw
    }

    /// Share of bins counted in some tile but lying outside that tile's leaf:
    /// `(memberships - bins) / memberships` over the given rays.
    pub fn redundancy(&self, tree: &PartitionTree<S>, rays: &[Ray<S>], dt: S) -> f64 {
        let mut bins = 0usize;
        let mut memberships = 0usize;
        for ray in rays {
            for b in tree.tile_samples(ray, dt) {
                let q = self.root.clamp(ray.at(b.m));
                bins += 1;
                memberships += self.tiles.iter().filter(|t| t.contains(q)).count();
            }
        }
        if memberships == 0 {
            0.0
        } else {
            (memberships - bins) as f64 / memberships as f64
        }
    }
}

/// Blends density and color of the per-tile fields at every bin midpoint, then
/// integrates. Bins are the tile-split grid of `tree`.
pub fn render_blend3d<S: Real>(
    fields: &[Field<S>],
    tiles: &OverlappedTiles<S>,
    tree: &PartitionTree<S>,
    ray: &Ray<S>,
    dt: S,
) -> Result<RayAggregate<S>> {
    if fields.len() != tiles.tiles.len() {
        return Err(crate::error::invalid(format!(
            "{} fields for {} tiles",
            fields.len(),
            tiles.tiles.len()
        )));
    }
    let blended = Blended { fields, tiles };
    Ok(quadrature::integrate_ray(&blended, ray, &tree.tile_samples(ray, dt)))
}

struct Blended<'a, S: Real> {
    fields: &'a [Field<S>],
    tiles: &'a OverlappedTiles<S>,
}

impl<S: Real> Radiance<S> for Blended<'_, S> {
    fn sigma(&self, p: Point3<S>) -> S {
        self.tiles
            .blend_weights(p)
            .into_iter()
            .fold(S::zero(), |acc, (i, w)| acc + w * self.fields[i].eval_sigma(p))
    }
    fn rgb(&self, p: Point3<S>, dir: Vec3<S>) -> Rgb<S> {
        self.tiles
            .blend_weights(p)
            .into_iter()
            .fold(Rgb::black(), |acc, (i, w)| acc + self.fields[i].eval_rgb(p, dir) * w)
    }
}

/// Each tile's field: the scene restricted to its overlapped box.
pub fn masked_fields<S: Real>(scene: &Field<S>, tiles: &OverlappedTiles<S>) -> Vec<Field<S>> {
    tiles
        .tiles
        .iter()
        .map(|r| scene.clone().masked(*r, tiles.root))
        .collect()
}

/// Each tile's field when a tile has only learned its own leaf: the scene
/// restricted to the leaf, empty over the overlap margin.
pub fn leaf_fields<S: Real>(scene: &Field<S>, tree: &PartitionTree<S>) -> Vec<Field<S>> {
    tree.leaves()
        .into_iter()
        .map(|l| scene.clone().masked(l.region, tree.root_box))
        .collect()
}

/// Normalized inverse distances from `eye` to the tile centers.
pub fn blend2d_weights<S: Real>(eye: Point3<S>, tiles: &OverlappedTiles<S>) -> Vec<S> {
    let inv: Vec<S> = tiles
        .tiles
        .iter()
        .map(|t| S::one() / (t.aabb.center() - eye).norm().max(S::sliver()))
        .collect();
    let total: S = inv.iter().copied().sum();
    inv.into_iter().map(|w| w / total).collect()
}

/// Pixelwise weighted average of per-tile images.
pub fn render_blend2d<S: Real>(images: &[Image<S>], weights: &[S]) -> Result<Image<S>> {
    let total: S = weights.iter().copied().sum();
    if images.is_empty() || images.len() != weights.len() || (total - S::one()).abs() > S::lit(1e-9) {
        return Err(Error::WeightMismatch(total.to_f64_lossy()));
    }
    let (w, h) = (images[0].width, images[0].height);
    if images.iter().any(|im| im.width != w || im.height != h) {
        return Err(crate::error::invalid("blended images differ in size"));
    }
    let pixels = (0..w * h)
        .map(|i| {
            images
                .iter()
                .zip(weights)
                .fold(Rgb::black(), |acc, (im, &k)| acc + im.pixels[i] * k)
        })
        .collect();
    Ok(Image {
        width: w,
        height: h,
        pixels,
    })
}
