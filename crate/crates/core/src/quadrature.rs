//! Deterministic ray sampling and the single-worker renderer.
//!
//! Each quadrature bin is shaded at its midpoint and contributes
//! `alpha = 1 - exp(-sigma * delta)`. The monolithic result computed here is the
//! ground truth every distributed path is compared against.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::field::Radiance;
use crate::geom::{Aabb, Axis, Ray, Rgb};
use crate::num::Real;

/// One quadrature bin `[t0, t1]` on a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleInterval<S = f64> {
    pub t0: S,
    pub t1: S,
    /// Midpoint `(t0 + t1) / 2`, where the bin is shaded.
    pub m: S,
    pub sigma: S,
    pub rgb: Rgb<S>,
    pub tile_id: Option<usize>,
}

impl<S: Real> SampleInterval<S> {
    pub fn new(t0: S, t1: S) -> Self {
        Self {
            t0,
            t1,
            m: (t0 + t1) * S::half(),
            sigma: S::zero(),
            rgb: Rgb::black(),
            tile_id: None,
        }
    }

    #[inline]
    pub fn delta(&self) -> S {
        self.t1 - self.t0
    }

    /// Optical depth `sigma * delta` of the bin.
    #[inline]
    pub fn optical_depth(&self) -> S {
        self.sigma * self.delta()
    }
}

/// Composited result for a ray or a run of bins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct RayAggregate<S = f64> {
    pub color: Rgb<S>,
    /// Accumulated weight.
    pub alpha: S,
    pub depth: S,
    pub transmittance: S,
    pub distortion: S,
}

impl<S: Real> RayAggregate<S> {
    pub fn empty() -> Self {
        Self {
            color: Rgb::black(),
            alpha: S::zero(),
            depth: S::zero(),
            transmittance: S::one(),
            distortion: S::zero(),
        }
    }

    /// Final pixel color over `background`, unclamped.
    pub fn over(&self, background: Rgb<S>) -> Rgb<S> {
        self.color + background * self.transmittance
    }

    /// Largest `|a - b| / (1 + |b|)` across color, alpha, depth and transmittance.
    pub fn max_mixed_err(&self, reference: &Self) -> S {
        let e = |a: S, b: S| (a - b).abs() / (S::one() + b.abs());
        let c = self.color.channels();
        let r = reference.color.channels();
        (0..3)
            .map(|i| e(c[i], r[i]))
            .chain([
                e(self.alpha, reference.alpha),
                e(self.depth, reference.depth),
                e(self.transmittance, reference.transmittance),
            ])
            .fold(S::zero(), S::max)
    }
}

/// Slab intersection of the ray's `[t_near, t_far]` range with `b`.
pub fn ray_box_intersect<S: Real>(ray: &Ray<S>, b: &Aabb<S>) -> Option<(S, S)> {
    let mut lo = ray.t_near;
    let mut hi = ray.t_far;
    for a in Axis::ALL {
        let o = ray.origin[a];
        let d = ray.dir[a];
        if d == S::zero() {
            if o < b.min[a] || o > b.max[a] {
                return None;
            }
            continue;
        }
        let inv = S::one() / d;
        let t1 = (b.min[a] - o) * inv;
        let t2 = (b.max[a] - o) * inv;
        lo = lo.max(t1.min(t2));
        hi = hi.min(t1.max(t2));
    }
    (lo < hi).then_some((lo, hi))
}

/// Fixed grid of `dt`-wide bins from the ray's entry into `root`; the last bin is
/// truncated at the exit and dropped if it is a sliver.
pub fn generate_samples<S: Real>(ray: &Ray<S>, root: &Aabb<S>, dt: S) -> Vec<SampleInterval<S>> {
    assert!(dt > S::zero(), "dt must be positive");
    let Some((enter, exit)) = ray_box_intersect(ray, root) else {
        return Vec::new();
    };
    grid_from(enter, enter, exit, dt)
}

/// Same as [`generate_samples`] with the grid origin shifted by a random
/// fraction of `dt`. Not used by any equivalence check.
pub fn generate_samples_jittered<S: Real, R: Rng + ?Sized>(
    ray: &Ray<S>,
    root: &Aabb<S>,
    dt: S,
    rng: &mut R,
) -> Vec<SampleInterval<S>> {
    assert!(dt > S::zero(), "dt must be positive");
    let Some((enter, exit)) = ray_box_intersect(ray, root) else {
        return Vec::new();
    };
    let shift = S::lit(rng.gen::<f64>()) * dt;
    grid_from(enter - dt + shift, enter, exit, dt)
}

fn grid_from<S: Real>(origin: S, enter: S, exit: S, dt: S) -> Vec<SampleInterval<S>> {
    let mut out = Vec::new();
    let mut i = 0usize;
    loop {
        let t0 = (origin + dt * S::from_usize_lossy(i)).max(enter);
        if t0 >= exit {
            break;
        }
        let t1 = (origin + dt * S::from_usize_lossy(i + 1)).min(exit);
        if t1 - t0 >= S::sliver() {
            out.push(SampleInterval::new(t0, t1));
        }
        i += 1;
    }
    out
}

/// Splits every bin that straddles one of `cuts` (sorted ascending). Split
/// pieces get fresh midpoints and lose any shading; slivers are dropped.
pub fn split_at_planes<S: Real>(
    samples: &[SampleInterval<S>],
    cuts: &[S],
) -> Vec<SampleInterval<S>> {
    let mut out = Vec::with_capacity(samples.len() + cuts.len());
    let mut c = 0usize;
    for s in samples {
        while c < cuts.len() && cuts[c] <= s.t0 {
            c += 1;
        }
        let mut j = c;
        let mut start = s.t0;
        let mut split = false;
        while j < cuts.len() && cuts[j] < s.t1 {
            if cuts[j] - start >= S::sliver() {
                out.push(SampleInterval::new(start, cuts[j]));
            }
            start = cuts[j];
            split = true;
            j += 1;
        }
        if !split {
            out.push(*s);
        } else if s.t1 - start >= S::sliver() {
            out.push(SampleInterval::new(start, s.t1));
        }
    }
    out
}

/// Fills `sigma` and `rgb` of every bin from `field` at the bin midpoint.
pub fn shade<S: Real, F: Radiance<S> + ?Sized>(
    field: &F,
    ray: &Ray<S>,
    samples: &mut [SampleInterval<S>],
) {
    for s in samples {
        let p = ray.at(s.m);
        s.sigma = field.sigma(p);
        s.rgb = field.rgb(p, ray.dir);
    }
}

/// Front-to-back compositing of already shaded bins.
pub fn composite<S: Real>(samples: &[SampleInterval<S>]) -> RayAggregate<S> {
    let mut color = Rgb::black();
    let mut alpha = S::zero();
    let mut depth = S::zero();
    let mut trans = S::one();
    let mut weights = Vec::with_capacity(samples.len());
    for s in samples {
        let pass = (-s.optical_depth()).exp();
        let w = trans * (S::one() - pass);
        color += s.rgb * w;
        alpha = alpha + w;
        depth = depth + w * s.m;
        trans = trans * pass;
        weights.push(w);
    }
    let mids: Vec<S> = samples.iter().map(|s| s.m).collect();
    RayAggregate {
        color,
        alpha,
        depth,
        transmittance: trans,
        distortion: distortion_bruteforce(&weights, &mids),
    }
}

/// Compositing weights `T_i * alpha_i` of shaded bins.
pub fn weights<S: Real>(samples: &[SampleInterval<S>]) -> Vec<S> {
    let mut trans = S::one();
    samples
        .iter()
        .map(|s| {
            let pass = (-s.optical_depth()).exp();
            let w = trans * (S::one() - pass);
            trans = trans * pass;
            w
        })
        .collect()
}

/// Monolithic render of `samples` (sorted, disjoint) against `field`.
pub fn integrate_ray<S: Real, F: Radiance<S> + ?Sized>(
    field: &F,
    ray: &Ray<S>,
    samples: &[SampleInterval<S>],
) -> RayAggregate<S> {
    let mut shaded = samples.to_vec();
    shade(field, ray, &mut shaded);
    composite(&shaded)
}

/// `sum_i sum_j w_i w_j |m_i - m_j|` over all ordered pairs.
pub fn distortion_bruteforce<S: Real>(weights: &[S], midpoints: &[S]) -> S {
    assert_eq!(weights.len(), midpoints.len(), "weights/midpoints length mismatch");
    let mut acc = S::zero();
    for (wi, mi) in weights.iter().zip(midpoints) {
        for (wj, mj) in weights.iter().zip(midpoints) {
            acc = acc + *wi * *wj * (*mi - *mj).abs();
        }
    }
    acc
}

/// Same double sum restricted to `i < j`.
pub fn distortion_strict_pairs<S: Real>(weights: &[S], midpoints: &[S]) -> S {
    assert_eq!(weights.len(), midpoints.len(), "weights/midpoints length mismatch");
    let mut acc = S::zero();
    for i in 0..weights.len() {
        for j in i + 1..weights.len() {
            acc = acc + weights[i] * weights[j] * (midpoints[i] - midpoints[j]).abs();
        }
    }
    acc
}
