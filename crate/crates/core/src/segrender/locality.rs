//! Finite-difference check that a worker's parameters only need that worker's
//! own recomputation: other workers' packets enter the composed loss as
//! constants, so no gradient has to cross worker boundaries.

use std::collections::BTreeSet;

use crate::distsim::WorkerPool;
use crate::error::{invalid, Error, Result};
use crate::geom::{Ray, Rgb};
use crate::num::Real;
use crate::quadrature::{self, RayAggregate, SampleInterval};

use super::{compose, sort_segments, SegmentAggregate};

/// One voxel density in a worker's copy of the scene grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamRef {
    pub voxel: usize,
}

/// Per-ray photometric targets plus a distortion penalty.
///
/// `loss = mean_rays( mean_channels((C + T * background - target)^2) + distortion_weight * L )`
#[derive(Clone, Debug, PartialEq)]
pub struct LossSpec<S = f64> {
    pub targets: Vec<Rgb<S>>,
    pub background: Rgb<S>,
    pub distortion_weight: S,
    pub dt: S,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdGradient<S = f64> {
    pub local: S,
    pub global: S,
}

impl<S: Real> FdGradient<S> {
    /// `|local - global| <= tol * (1 + |global|)`.
    pub fn agrees(&self, tol: S) -> bool {
        crate::num::close_mixed(self.local, self.global, tol)
    }
}

pub fn loss_for_aggregates<S: Real>(aggs: &[RayAggregate<S>], spec: &LossSpec<S>) -> Result<S> {
    if aggs.len() != spec.targets.len() {
        return Err(invalid(format!(
            "{} rays but {} loss targets",
            aggs.len(),
            spec.targets.len()
        )));
    }
    if aggs.is_empty() {
        return Ok(S::zero());
    }
    let third = S::one() / S::lit(3.0);
    let total = aggs.iter().zip(&spec.targets).fold(S::zero(), |acc, (a, t)| {
        let px = a.over(spec.background);
        let mse = px
            .channels()
            .into_iter()
            .zip(t.channels())
            .fold(S::zero(), |m, (p, q)| m + (p - q) * (p - q))
            * third;
        acc + mse + spec.distortion_weight * a.distortion
    });
    Ok(total / S::from_usize_lossy(aggs.len()))
}

/// Cached forward pass of every worker over a ray batch.
pub struct LocalityProbe<'a, S: Real> {
    pool: &'a WorkerPool<S>,
    rays: &'a [Ray<S>],
    spec: &'a LossSpec<S>,
    /// Unshaded tile-split bins per ray.
    bins: Vec<Vec<SampleInterval<S>>>,
    /// Packets of every crossed tile per ray, keyed by tile id.
    packets: Vec<Vec<(usize, SegmentAggregate<S>)>>,
}

impl<'a, S: Real> LocalityProbe<'a, S> {
    pub fn new(pool: &'a WorkerPool<S>, rays: &'a [Ray<S>], spec: &'a LossSpec<S>) -> Result<Self> {
        if !(spec.dt > S::zero()) {
            return Err(invalid("dt must be positive"));
        }
        if rays.len() != spec.targets.len() {
            return Err(invalid("one loss target per ray required"));
        }
        let mut bins = Vec::with_capacity(rays.len());
        let mut packets = Vec::with_capacity(rays.len());
        for ray in rays {
            let b = pool.tree.tile_samples(ray, spec.dt);
            let p = pool
                .tree
                .ray_spans(ray)
                .into_iter()
                .map(|span| {
                    let (seg, _) = pool.workers[span.tile_id].segment(&pool.tree, ray, spec.dt, span.t_enter);
                    (span.tile_id, seg)
                })
                .collect();
            bins.push(b);
            packets.push(p);
        }
        Ok(Self {
            pool,
            rays,
            spec,
            bins,
            packets,
        })
    }

    fn owned_voxel(&self, worker: usize, param: ParamRef) -> Result<()> {
        let not_owned = || Error::ParamNotOwned {
            worker,
            index: param.voxel,
        };
        let w = self.pool.workers.get(worker).ok_or_else(|| invalid("no such worker"))?;
        let grid = w.field.voxel_grid().ok_or_else(not_owned)?;
        if param.voxel >= grid.len() || self.pool.tree.locate_clamped(grid.cell_center(param.voxel)) != worker {
            return Err(not_owned());
        }
        Ok(())
    }

    /// Voxels owned by `worker` that some bin of the batch samples with a
    /// positive interpolation weight, in increasing order.
    pub fn touched(&self, worker: usize) -> Vec<usize> {
        let Some(grid) = self.pool.workers.get(worker).and_then(|w| w.field.voxel_grid()) else {
            return Vec::new();
        };
        let mut seen = BTreeSet::new();
        for (ray, bins) in self.rays.iter().zip(&self.bins) {
            for b in bins.iter().filter(|b| b.tile_id == Some(worker)) {
                seen.extend(grid.stencil(ray.at(b.m)).into_iter().map(|(i, _)| i));
            }
        }
        seen.into_iter()
            .filter(|&i| self.owned_voxel(worker, ParamRef { voxel: i }).is_ok())
            .collect()
    }

    fn perturbed(&self, worker: usize, param: ParamRef, delta: S) -> WorkerPool<S> {
        let mut pool = self.pool.clone();
        let grid = pool.workers[worker].field.voxel_grid_mut().expect("ownership checked");
        grid.densities[param.voxel] = grid.densities[param.voxel] + delta;
        pool
    }

    /// Loss after rerunning the whole batch monolithically on the tiled scene.
    fn global_loss(&self, pool: &WorkerPool<S>) -> Result<S> {
        let field = pool.assembled();
        let aggs: Vec<_> = self
            .rays
            .iter()
            .zip(&self.bins)
            .map(|(ray, bins)| quadrature::integrate_ray(&field, ray, bins))
            .collect();
        loss_for_aggregates(&aggs, self.spec)
    }

    /// Loss after recomputing only `worker`'s packets and recomposing them with
    /// the cached packets of everyone else.
    fn local_loss(&self, pool: &WorkerPool<S>, worker: usize) -> Result<S> {
        let w = &pool.workers[worker];
        let aggs = self
            .rays
            .iter()
            .zip(&self.packets)
            .map(|(ray, cached)| {
                let mut segs: Vec<(usize, SegmentAggregate<S>)> = cached
                    .iter()
                    .map(|&(tile, seg)| {
                        if tile == worker {
                            (tile, w.segment(&pool.tree, ray, self.spec.dt, seg.order_t).0)
                        } else {
                            (tile, seg)
                        }
                    })
                    .collect();
                sort_segments(&mut segs);
                let ordered: Vec<_> = segs.into_iter().map(|(_, s)| s).collect();
                compose(&ordered)
            })
            .collect::<Result<Vec<_>>>()?;
        loss_for_aggregates(&aggs, self.spec)
    }

    pub fn gradient(&self, worker: usize, param: ParamRef, h: S) -> Result<FdGradient<S>> {
        if !(h > S::zero()) {
            return Err(invalid("finite-difference step must be positive"));
        }
        self.owned_voxel(worker, param)?;
        let plus = self.perturbed(worker, param, h);
        let minus = self.perturbed(worker, param, -h);
        let two_h = S::two() * h;
        Ok(FdGradient {
            local: (self.local_loss(&plus, worker)? - self.local_loss(&minus, worker)?) / two_h,
            global: (self.global_loss(&plus)? - self.global_loss(&minus)?) / two_h,
        })
    }
}

/// Central-difference gradient of the batch loss with respect to one of
/// `worker`'s voxel densities, computed both by full rerun and by local
/// recomputation.
pub fn local_gradient_fd<S: Real>(
    pool: &WorkerPool<S>,
    rays: &[Ray<S>],
    spec: &LossSpec<S>,
    worker: usize,
    param: ParamRef,
    h: S,
) -> Result<FdGradient<S>> {
    LocalityProbe::new(pool, rays, spec)?.gradient(worker, param, h)
}

pub fn touched_voxels<S: Real>(
    pool: &WorkerPool<S>,
    rays: &[Ray<S>],
    spec: &LossSpec<S>,
    worker: usize,
) -> Result<Vec<usize>> {
    Ok(LocalityProbe::new(pool, rays, spec)?.touched(worker))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distsim::spawn;
    use crate::field::{Field, Interpolation, VoxelGrid};
    use crate::geom::{Aabb, Vec3};
    use crate::partitioner::{build_tree, PartitionTree};

    fn grid_scene() -> Field<f64> {
        let n = 4;
        let len = n * n * n;
        Field::VoxelGrid(VoxelGrid {
            aabb: Aabb::lit([0.0; 3], [1.0; 3]),
            resolution: [n, n, n],
            densities: (0..len).map(|i| 0.5 + (i % 7) as f64 * 0.4).collect(),
            colors: (0..len)
                .map(|i| Rgb::new((i % 3) as f64 / 2.0, (i % 5) as f64 / 4.0, 0.3))
                .collect(),
            interpolation: Interpolation::Trilinear,
        })
    }

    fn rays() -> Vec<Ray<f64>> {
        (0..6)
            .map(|i| {
                let y = 0.1 + 0.15 * i as f64;
                Ray::new(Vec3::lit(-0.5, y, 0.3 + 0.05 * i as f64), Vec3::lit(1.0, 0.05, 0.02), 0.0, 10.0).unwrap()
            })
            .collect()
    }

    fn spec(n: usize) -> LossSpec<f64> {
        LossSpec {
            targets: vec![Rgb::lit(0.2, 0.4, 0.6); n],
            background: Rgb::lit(1.0, 1.0, 1.0),
            distortion_weight: 0.1,
            dt: 0.05,
        }
    }

    fn two_tiles() -> PartitionTree<f64> {
        let pts = vec![Vec3::lit(0.25, 0.5, 0.5), Vec3::lit(0.75, 0.5, 0.5)];
        build_tree(&pts, Aabb::lit([0.0; 3], [1.0; 3]), 1).unwrap()
    }

    #[test]
    fn local_matches_global_on_two_tiles() {
        let pool = spawn(&two_tiles(), &grid_scene());
        let rays = rays();
        let spec = spec(rays.len());
        let probe = LocalityProbe::new(&pool, &rays, &spec).unwrap();
        for worker in 0..2 {
            let touched = probe.touched(worker);
            assert!(!touched.is_empty());
            for &v in touched.iter().take(5) {
                let g = probe.gradient(worker, ParamRef { voxel: v }, 1e-4).unwrap();
                assert!(g.agrees(1e-6), "{g:?}");
            }
        }
    }

    #[test]
    fn untouched_voxel_has_zero_gradient() {
        let pool = spawn(&two_tiles(), &grid_scene());
        let rays = rays();
        let spec = spec(rays.len());
        let probe = LocalityProbe::new(&pool, &rays, &spec).unwrap();
        let touched = probe.touched(0);
        let grid = pool.workers[0].field.voxel_grid().unwrap();
        let free = (0..grid.len())
            .find(|&i| !touched.contains(&i) && pool.tree.locate_clamped(grid.cell_center(i)) == 0)
            .expect("some untouched voxel in tile 0");
        let g = probe.gradient(0, ParamRef { voxel: free }, 1e-4).unwrap();
        assert_eq!(g.local, 0.0);
        assert_eq!(g.global, 0.0);
    }

    #[test]
    fn single_tile_modes_coincide() {
        let pool = spawn(&PartitionTree::single(Aabb::lit([0.0; 3], [1.0; 3])), &grid_scene());
        let rays = rays();
        let spec = spec(rays.len());
        let probe = LocalityProbe::new(&pool, &rays, &spec).unwrap();
        let v = probe.touched(0)[3];
        let g = probe.gradient(0, ParamRef { voxel: v }, 1e-4).unwrap();
        assert!(g.global != 0.0);
        assert!(g.agrees(1e-9), "{g:?}");
    }

    #[test]
    fn foreign_voxel_is_rejected() {
        let pool = spawn(&two_tiles(), &grid_scene());
        let rays = rays();
        let spec = spec(rays.len());
        // voxel 3 is at x = 0.875, inside tile 1
        let err = local_gradient_fd(&pool, &rays, &spec, 0, ParamRef { voxel: 3 }, 1e-4).unwrap_err();
        assert!(matches!(err, Error::ParamNotOwned { worker: 0, index: 3 }));
        assert!(local_gradient_fd(&pool, &rays, &spec, 1, ParamRef { voxel: 999 }, 1e-4).is_err());
    }

    #[test]
    fn loss_of_perfect_render_is_zero() {
        let agg = RayAggregate {
            color: Rgb::lit(0.5, 0.5, 0.5),
            alpha: 0.5,
            depth: 1.0,
            transmittance: 0.5,
            distortion: 0.0,
        };
        let spec = LossSpec {
            targets: vec![Rgb::lit(0.5, 0.5, 0.5)],
            background: Rgb::black(),
            distortion_weight: 1.0,
            dt: 0.1,
        };
        assert_eq!(loss_for_aggregates(&[agg], &spec).unwrap(), 0.0);
        assert!(loss_for_aggregates(&[agg, agg], &spec).is_err());
    }
}
