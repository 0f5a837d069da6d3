//! Analytic volumetric scenes: density and color at any point.
//!
//! Fields are immutable values; evaluation is a pure function of the point so
//! any number of workers may share one.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geom::{Aabb, Axis, Point3, Rgb, Vec3};
use crate::num::Real;

/// Anything that can be queried for density and emitted color.
pub trait Radiance<S: Real> {
    fn sigma(&self, p: Point3<S>) -> S;
    fn rgb(&self, p: Point3<S>, dir: Vec3<S>) -> Rgb<S>;
}

impl<S: Real, R: Radiance<S> + ?Sized> Radiance<S> for &R {
    fn sigma(&self, p: Point3<S>) -> S {
        (**self).sigma(p)
    }
    fn rgb(&self, p: Point3<S>, dir: Vec3<S>) -> Rgb<S> {
        (**self).rgb(p, dir)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct Blob<S = f64> {
    pub center: Point3<S>,
    pub amplitude: S,
    pub scale: S,
    pub color: Rgb<S>,
}

impl<S: Real> Blob<S> {
    #[inline]
    pub fn density(&self, p: Point3<S>) -> S {
        let d2 = (p - self.center).norm_squared();
        self.amplitude * (-d2 / (S::two() * self.scale * self.scale)).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Nearest,
    Trilinear,
}

/// Regular grid of density/color values stored at cell centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct VoxelGrid<S = f64> {
    #[serde(rename = "box")]
    pub aabb: Aabb<S>,
    pub resolution: [usize; 3],
    pub densities: Vec<S>,
    pub colors: Vec<Rgb<S>>,
    pub interpolation: Interpolation,
}

impl<S: Real> VoxelGrid<S> {
    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.resolution;
        i + nx * (j + ny * k)
    }

    pub fn cell_center(&self, index: usize) -> Point3<S> {
        let [nx, ny, _] = self.resolution;
        let (i, j, k) = (index % nx, (index / nx) % ny, index / (nx * ny));
        let ext = self.aabb.extent();
        let c = |lo: S, e: S, n: usize, idx: usize| {
            lo + e * (S::from_usize_lossy(idx) + S::half()) / S::from_usize_lossy(n)
        };
        Vec3::new(
            c(self.aabb.min.x, ext.x, nx, i),
            c(self.aabb.min.y, ext.y, self.resolution[1], j),
            c(self.aabb.min.z, ext.z, self.resolution[2], k),
        )
    }

    /// Interpolation stencil at `p`: up to eight `(flat index, weight)` pairs with
    /// weights summing to one. Empty outside the grid box.
    pub fn stencil(&self, p: Point3<S>) -> Vec<(usize, S)> {
        if !self.aabb.contains(p) {
            return Vec::new();
        }
        let ext = self.aabb.extent();
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut frac = [S::zero(); 3];
        for (d, a) in Axis::ALL.into_iter().enumerate() {
            let n = self.resolution[d];
            let u = (p[a] - self.aabb.min[a]) / ext[a] * S::from_usize_lossy(n);
            match self.interpolation {
                Interpolation::Nearest => {
                    let i = u.floor().max(S::zero()).to_usize().unwrap_or(0).min(n - 1);
                    lo[d] = i;
                    hi[d] = i;
                }
                Interpolation::Trilinear => {
                    let u = (u - S::half())
                        .max(S::zero())
                        .min(S::from_usize_lossy(n - 1));
                    let i = u.floor().to_usize().unwrap_or(0).min(n - 1);
                    lo[d] = i;
                    hi[d] = (i + 1).min(n - 1);
                    frac[d] = u - S::from_usize_lossy(i);
                }
            }
        }
        let mut out = Vec::with_capacity(8);
        for corner in 0..8usize {
            let mut w = S::one();
            let mut idx = [0usize; 3];
            for d in 0..3 {
                let upper = corner >> d & 1 == 1;
                if lo[d] == hi[d] {
                    if upper {
                        w = S::zero();
                    }
                    idx[d] = lo[d];
                } else if upper {
                    w = w * frac[d];
                    idx[d] = hi[d];
                } else {
                    w = w * (S::one() - frac[d]);
                    idx[d] = lo[d];
                }
            }
            if w > S::zero() {
                out.push((self.flat_index(idx[0], idx[1], idx[2]), w));
            }
        }
        out
    }

    fn sigma(&self, p: Point3<S>) -> S {
        self.stencil(p)
            .into_iter()
            .fold(S::zero(), |acc, (i, w)| acc + w * self.densities[i])
    }

    fn rgb(&self, p: Point3<S>) -> Rgb<S> {
        let q = self.aabb.clamp(p);
        self.stencil(q)
            .into_iter()
            .fold(Rgb::black(), |acc, (i, w)| acc + self.colors[i] * w)
    }
}

/// Half-open box used as a tile mask: `[min, max)` on every axis except where
/// `closed_hi` marks the max face as closed (faces lying on the root box).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct Region<S = f64> {
    #[serde(rename = "box")]
    pub aabb: Aabb<S>,
    pub closed_hi: [bool; 3],
}

impl<S: Real> Region<S> {
    pub fn closed(aabb: Aabb<S>) -> Self {
        Self {
            aabb,
            closed_hi: [true; 3],
        }
    }

    pub fn contains(&self, p: Point3<S>) -> bool {
        Axis::ALL.into_iter().enumerate().all(|(d, a)| {
            let v = p[a];
            v >= self.aabb.min[a]
                && if self.closed_hi[d] {
                    v <= self.aabb.max[a]
                } else {
                    v < self.aabb.max[a]
                }
        })
    }
}

/// Scene description. Colors are view-independent for every built-in variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", bound = "S: Real")]
pub enum Field<S = f64> {
    GaussianBlobs {
        blobs: Vec<Blob<S>>,
    },
    ConstantBox {
        #[serde(rename = "box")]
        aabb: Aabb<S>,
        density: S,
        color: Rgb<S>,
    },
    VoxelGrid(VoxelGrid<S>),
    Sum {
        children: Vec<Field<S>>,
    },
    /// `inner` restricted to `region`; points are clamped into `root` before the
    /// ownership test so that the masks of a tile set cover all of space.
    Masked {
        region: Region<S>,
        root: Aabb<S>,
        inner: Box<Field<S>>,
    },
}

/// Density-weighted mean of colors, uniform mean when all weights vanish.
fn weighted_color<S: Real>(parts: impl Iterator<Item = (S, Rgb<S>)>) -> Rgb<S> {
    let mut total = S::zero();
    let mut acc = Rgb::black();
    let mut plain = Rgb::black();
    let mut n = 0usize;
    for (w, c) in parts {
        total = total + w;
        acc += c * w;
        plain += c;
        n += 1;
    }
    if n == 0 {
        Rgb::black()
    } else if total > S::zero() {
        acc * (S::one() / total)
    } else {
        plain * (S::one() / S::from_usize_lossy(n))
    }
}

impl<S: Real> Field<S> {
    pub fn empty() -> Self {
        Field::Sum {
            children: Vec::new(),
        }
    }

    pub fn masked(self, region: Region<S>, root: Aabb<S>) -> Self {
        Field::Masked {
            region,
            root,
            inner: Box::new(self),
        }
    }

    pub fn eval_sigma(&self, p: Point3<S>) -> S {
        match self {
            Field::GaussianBlobs { blobs } => blobs
                .iter()
                .fold(S::zero(), |acc, b| acc + b.density(p)),
            Field::ConstantBox { aabb, density, .. } => {
                if aabb.contains(p) {
                    *density
                } else {
                    S::zero()
                }
            }
            Field::VoxelGrid(g) => g.sigma(p),
            Field::Sum { children } => children
                .iter()
                .fold(S::zero(), |acc, c| acc + c.eval_sigma(p)),
            Field::Masked {
                region,
                root,
                inner,
            } => {
                if region.contains(root.clamp(p)) {
                    inner.eval_sigma(p)
                } else {
                    S::zero()
                }
            }
        }
    }

    pub fn eval_rgb(&self, p: Point3<S>, dir: Vec3<S>) -> Rgb<S> {
        match self {
            Field::GaussianBlobs { blobs } => {
                weighted_color(blobs.iter().map(|b| (b.density(p), b.color)))
            }
            Field::ConstantBox { color, .. } => *color,
            Field::VoxelGrid(g) => g.rgb(p),
            Field::Sum { children } => weighted_color(
                children
                    .iter()
                    .map(|c| (c.eval_sigma(p), c.eval_rgb(p, dir))),
            ),
            Field::Masked { inner, .. } => inner.eval_rgb(p, dir),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let density_ok = |d: S| d.is_finite() && d >= S::zero();
        match self {
            Field::GaussianBlobs { blobs } => {
                for (i, b) in blobs.iter().enumerate() {
                    if !b.center.is_finite() || !density_ok(b.amplitude) {
                        return Err(invalid(format!("blob {i}: bad center or amplitude")));
                    }
                    if !(b.scale > S::zero() && b.scale.is_finite()) {
                        return Err(invalid(format!("blob {i}: scale must be positive")));
                    }
                    if !b.color.in_unit_range() {
                        return Err(invalid(format!("blob {i}: color outside [0,1]")));
                    }
                }
                Ok(())
            }
            Field::ConstantBox {
                aabb,
                density,
                color,
            } => {
                aabb.validate()?;
                if !density_ok(*density) {
                    return Err(invalid("constant box density must be finite and >= 0"));
                }
                if !color.in_unit_range() {
                    return Err(invalid("constant box color outside [0,1]"));
                }
                Ok(())
            }
            Field::VoxelGrid(g) => {
                g.aabb.validate()?;
                if g.resolution.contains(&0) {
                    return Err(invalid("voxel resolution must be positive"));
                }
                if g.densities.len() != g.len() || g.colors.len() != g.len() {
                    return Err(invalid(format!(
                        "voxel grid expects {} densities and colors, got {} and {}",
                        g.len(),
                        g.densities.len(),
                        g.colors.len()
                    )));
                }
                if !g.densities.iter().all(|&d| density_ok(d)) {
                    return Err(invalid("voxel densities must be finite and >= 0"));
                }
                if !g.colors.iter().all(|c| c.in_unit_range()) {
                    return Err(invalid("voxel colors outside [0,1]"));
                }
                Ok(())
            }
            Field::Sum { children } => children.iter().try_for_each(|c| c.validate()),
            Field::Masked { region, root, inner } => {
                region.aabb.validate()?;
                root.validate()?;
                inner.validate()
            }
        }
    }

    /// First voxel grid in depth-first order.
    pub fn voxel_grid(&self) -> Option<&VoxelGrid<S>> {
        match self {
            Field::VoxelGrid(g) => Some(g),
            Field::Sum { children } => children.iter().find_map(|c| c.voxel_grid()),
            Field::Masked { inner, .. } => inner.voxel_grid(),
            _ => None,
        }
    }

    pub fn voxel_grid_mut(&mut self) -> Option<&mut VoxelGrid<S>> {
        match self {
            Field::VoxelGrid(g) => Some(g),
            Field::Sum { children } => children.iter_mut().find_map(|c| c.voxel_grid_mut()),
            Field::Masked { inner, .. } => inner.voxel_grid_mut(),
            _ => None,
        }
    }
}

impl<S: Real> Radiance<S> for Field<S> {
    #[inline]
    fn sigma(&self, p: Point3<S>) -> S {
        self.eval_sigma(p)
    }
    #[inline]
    fn rgb(&self, p: Point3<S>, dir: Vec3<S>) -> Rgb<S> {
        self.eval_rgb(p, dir)
    }
}
