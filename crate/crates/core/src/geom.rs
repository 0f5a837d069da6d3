//! Points, boxes, rays and colors.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::num::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[S; 3]", into = "[S; 3]", bound = "S: Real")]
pub struct Vec3<S = f64> {
    pub x: S,
    pub y: S,
    pub z: S,
}

/// Positions share the vector representation.
pub type Point3<S = f64> = Vec3<S>;

impl<S: Real> From<[S; 3]> for Vec3<S> {
    fn from(v: [S; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl<S: Real> From<Vec3<S>> for [S; 3] {
    fn from(v: Vec3<S>) -> Self {
        [v.x, v.y, v.z]
    }
}

impl<S: Real> Vec3<S> {
    #[inline]
    pub fn new(x: S, y: S, z: S) -> Self {
        Self { x, y, z }
    }

    pub fn lit(x: f64, y: f64, z: f64) -> Self {
        Self::new(S::lit(x), S::lit(y), S::lit(z))
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero(), S::zero())
    }

    pub fn splat(v: S) -> Self {
        Self::new(v, v, v)
    }

    #[inline]
    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> S {
        self.dot(self)
    }

    pub fn norm(self) -> S {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, `None` for the zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > S::zero() && n.is_finite() {
            Some(self * (S::one() / n))
        } else {
            None
        }
    }

    pub fn min(self, o: Self) -> Self {
        Self::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Self) -> Self {
        Self::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [S; 3] {
        [self.x, self.y, self.z]
    }

    pub fn cast<T: Real>(self) -> Vec3<T> {
        Vec3::new(
            T::lit(self.x.to_f64_lossy()),
            T::lit(self.y.to_f64_lossy()),
            T::lit(self.z.to_f64_lossy()),
        )
    }
}

impl<S: Real> Add for Vec3<S> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<S: Real> Sub for Vec3<S> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<S: Real> Mul<S> for Vec3<S> {
    type Output = Self;
    #[inline]
    fn mul(self, s: S) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<S: Real> Neg for Vec3<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<S> Index<Axis> for Vec3<S> {
    type Output = S;
    #[inline]
    fn index(&self, a: Axis) -> &S {
        match a {
            Axis::X => &self.x,
            Axis::Y => &self.y,
            Axis::Z => &self.z,
        }
    }
}

impl<S> IndexMut<Axis> for Vec3<S> {
    #[inline]
    fn index_mut(&mut self, a: Axis) -> &mut S {
        match a {
            Axis::X => &mut self.x,
            Axis::Y => &mut self.y,
            Axis::Z => &mut self.z,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
}

/// Axis-aligned box with `min < max` on every axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct Aabb<S = f64> {
    pub min: Point3<S>,
    pub max: Point3<S>,
}

impl<S: Real> Aabb<S> {
    pub fn new(min: Point3<S>, max: Point3<S>) -> Result<Self> {
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    /// Unchecked constructor for literals known to be valid.
    pub fn lit(min: [f64; 3], max: [f64; 3]) -> Self {
        let b = Self {
            min: Vec3::lit(min[0], min[1], min[2]),
            max: Vec3::lit(max[0], max[1], max[2]),
        };
        debug_assert!(b.validate().is_ok());
        b
    }

    pub fn validate(&self) -> Result<()> {
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(invalid("box corners must be finite"));
        }
        for a in Axis::ALL {
            if !(self.min[a] < self.max[a]) {
                return Err(invalid(format!("box min must be below max on axis {a:?}")));
            }
        }
        Ok(())
    }

    pub fn extent(&self) -> Vec3<S> {
        self.max - self.min
    }

    pub fn center(&self) -> Point3<S> {
        (self.min + self.max) * S::half()
    }

    /// Closed containment.
    pub fn contains(&self, p: Point3<S>) -> bool {
        Axis::ALL
            .iter()
            .all(|&a| self.min[a] <= p[a] && p[a] <= self.max[a])
    }

    pub fn clamp(&self, p: Point3<S>) -> Point3<S> {
        p.max(self.min).min(self.max)
    }

    /// Intersection with another box, `None` when it has no volume.
    pub fn intersect(&self, o: &Self) -> Option<Self> {
        let b = Self {
            min: self.min.max(o.min),
            max: self.max.min(o.max),
        };
        b.validate().ok().map(|_| b)
    }

    /// Bounding box of `points`, inflated by `frac` of each edge on every side.
    /// Zero-width edges are widened using the largest edge so the box stays valid.
    pub fn bounding(points: &[Point3<S>], frac: S) -> Result<Self> {
        let first = *points
            .first()
            .ok_or_else(|| invalid("cannot bound an empty point set"))?;
        let (lo, hi) = points
            .iter()
            .fold((first, first), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        let ext = hi - lo;
        let largest = ext.x.max(ext.y).max(ext.z);
        let fallback = if largest > S::zero() { largest } else { S::one() };
        let mut pad = Vec3::zero();
        for a in Axis::ALL {
            let e = if ext[a] > S::zero() { ext[a] } else { fallback };
            pad[a] = e * frac.max(S::lit(1e-6));
        }
        Self::new(lo - pad, hi + pad)
    }
}

/// Linear RGB triple. Field colors live in `[0, 1]`; accumulated colors are
/// carried unclamped in the same type.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[S; 3]", into = "[S; 3]", bound = "S: Real")]
pub struct Rgb<S = f64> {
    pub r: S,
    pub g: S,
    pub b: S,
}

impl<S: Real> From<[S; 3]> for Rgb<S> {
    fn from(v: [S; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl<S: Real> From<Rgb<S>> for [S; 3] {
    fn from(c: Rgb<S>) -> Self {
        [c.r, c.g, c.b]
    }
}

impl<S: Real> Rgb<S> {
    #[inline]
    pub fn new(r: S, g: S, b: S) -> Self {
        Self { r, g, b }
    }

    pub fn lit(r: f64, g: f64, b: f64) -> Self {
        Self::new(S::lit(r), S::lit(g), S::lit(b))
    }

    pub fn black() -> Self {
        Self::new(S::zero(), S::zero(), S::zero())
    }

    pub fn channels(self) -> [S; 3] {
        [self.r, self.g, self.b]
    }

    pub fn clamped(self) -> Self {
        let c = |v: S| v.max(S::zero()).min(S::one());
        Self::new(c(self.r), c(self.g), c(self.b))
    }

    pub fn in_unit_range(self) -> bool {
        self.channels()
            .iter()
            .all(|&v| v >= S::zero() && v <= S::one())
    }

    pub fn is_finite(self) -> bool {
        self.channels().iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(self, o: Self) -> S {
        (self.r - o.r)
            .abs()
            .max((self.g - o.g).abs())
            .max((self.b - o.b).abs())
    }
}

impl<S: Real> Add for Rgb<S> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.r + o.r, self.g + o.g, self.b + o.b)
    }
}

impl<S: Real> AddAssign for Rgb<S> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Real> Mul<S> for Rgb<S> {
    type Output = Self;
    #[inline]
    fn mul(self, s: S) -> Self {
        Self::new(self.r * s, self.g * s, self.b * s)
    }
}

/// Ray restricted to `[t_near, t_far]` with a unit direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct Ray<S = f64> {
    pub origin: Point3<S>,
    pub dir: Vec3<S>,
    pub t_near: S,
    pub t_far: S,
}

impl<S: Real> Ray<S> {
    /// Builds a ray, normalizing `dir`.
    pub fn new(origin: Point3<S>, dir: Vec3<S>, t_near: S, t_far: S) -> Result<Self> {
        let dir = dir
            .normalized()
            .ok_or_else(|| invalid("ray direction must be non-zero"))?;
        if !origin.is_finite() {
            return Err(invalid("ray origin must be finite"));
        }
        if !(t_near >= S::zero() && t_near < t_far) {
            return Err(invalid("ray range must satisfy 0 <= t_near < t_far"));
        }
        Ok(Self {
            origin,
            dir,
            t_near,
            t_far,
        })
    }

    /// Unbounded ray starting at the origin.
    pub fn unbounded(origin: Point3<S>, dir: Vec3<S>) -> Result<Self> {
        Self::new(origin, dir, S::zero(), S::max_value())
    }

    #[inline]
    pub fn at(&self, t: S) -> Point3<S> {
        self.origin + self.dir * t
    }
}
