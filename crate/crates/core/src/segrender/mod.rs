//! Per-segment aggregation and ordered composition.
//!
//! A ray cut into contiguous segments can be rendered by integrating each
//! segment on its own (starting from full transmittance) and then alpha
//! compositing the per-segment packets front to back:
//!
//! ```text
//! C   += T_prefix * C_seg          A   += T_prefix * A_seg
//! D   += T_prefix * D_seg          T_prefix *= T_seg
//! L   += T_prefix^2 * L_seg + 2 * T_prefix * (D_seg * A_prefix - A_seg * D_prefix)
//! ```
//!
//! where `A_prefix`/`D_prefix` are the weight and depth already accumulated in
//! front of the segment. The result equals the monolithic render of all bins.

mod locality;

pub use locality::{local_gradient_fd, loss_for_aggregates, touched_voxels, FdGradient, LocalityProbe, LossSpec, ParamRef};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Radiance;
use crate::geom::{Ray, Rgb};
use crate::num::Real;
use crate::quadrature::{self, RayAggregate, SampleInterval};

/// Packet summarizing one segment of one ray.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct SegmentAggregate<S = f64> {
    pub transmittance: S,
    pub color: Rgb<S>,
    pub alpha: S,
    pub depth: S,
    pub distortion: S,
    /// Entry distance of the segment along the ray; composition order key.
    pub order_t: S,
}

impl<S: Real> SegmentAggregate<S> {
    /// Identity packet: transmits everything, contributes nothing.
    pub fn identity(order_t: S) -> Self {
        Self {
            transmittance: S::one(),
            color: Rgb::black(),
            alpha: S::zero(),
            depth: S::zero(),
            distortion: S::zero(),
            order_t,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.transmittance.is_finite()
            && self.color.is_finite()
            && self.alpha.is_finite()
            && self.depth.is_finite()
            && self.distortion.is_finite()
            && self.order_t.is_finite()
    }

    /// Packet of already shaded bins.
    pub fn from_shaded(samples: &[SampleInterval<S>]) -> Self {
        let Some(first) = samples.first() else {
            return Self::identity(S::zero());
        };
        let agg = quadrature::composite(samples);
        Self {
            transmittance: agg.transmittance,
            color: agg.color,
            alpha: agg.alpha,
            depth: agg.depth,
            distortion: agg.distortion,
            order_t: first.t0,
        }
    }

    /// Merges `self` with the segment `next` directly behind it.
    pub fn then(&self, next: &Self) -> Self {
        let t = self.transmittance;
        let cross = next.depth * self.alpha - next.alpha * self.depth;
        Self {
            transmittance: t * next.transmittance,
            color: self.color + next.color * t,
            alpha: self.alpha + t * next.alpha,
            depth: self.depth + t * next.depth,
            distortion: self.distortion + t * t * next.distortion + S::two() * t * cross,
            order_t: self.order_t.min(next.order_t),
        }
    }
}

/// Local integration of one segment's bins (sorted, disjoint, one tile).
pub fn aggregate_segment<S: Real, F: Radiance<S> + ?Sized>(
    field: &F,
    ray: &Ray<S>,
    samples_in_tile: &[SampleInterval<S>],
) -> SegmentAggregate<S> {
    let mut shaded = samples_in_tile.to_vec();
    quadrature::shade(field, ray, &mut shaded);
    SegmentAggregate::from_shaded(&shaded)
}

/// Running prefix of a front-to-back composition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComposeState<S = f64> {
    pub transmittance: S,
    pub alpha: S,
    pub depth: S,
    pub color: Rgb<S>,
    pub distortion: S,
}

impl<S: Real> Default for ComposeState<S> {
    fn default() -> Self {
        Self {
            transmittance: S::one(),
            alpha: S::zero(),
            depth: S::zero(),
            color: Rgb::black(),
            distortion: S::zero(),
        }
    }
}

/// How the cross-segment distortion term is weighted. Only `Exact` is correct;
/// `SingleCross` is the factor-one variant kept as a fault-injection control.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossTerm {
    Exact,
    SingleCross,
}

impl<S: Real> ComposeState<S> {
    /// Appends the next segment in ray order.
    #[inline]
    pub fn push(&mut self, seg: &SegmentAggregate<S>) {
        self.push_with(seg, CrossTerm::Exact)
    }

    pub fn push_with(&mut self, seg: &SegmentAggregate<S>, cross_term: CrossTerm) {
        let t = self.transmittance;
        let s = seg.depth * self.alpha - seg.alpha * self.depth;
        let k = match cross_term {
            CrossTerm::Exact => S::two(),
            CrossTerm::SingleCross => S::one(),
        };
        self.distortion = self.distortion + t * t * seg.distortion + k * t * s;
        self.color += seg.color * t;
        self.alpha = self.alpha + t * seg.alpha;
        self.depth = self.depth + t * seg.depth;
        self.transmittance = t * seg.transmittance;
    }

    pub fn to_aggregate(&self) -> RayAggregate<S> {
        RayAggregate {
            color: self.color,
            alpha: self.alpha,
            depth: self.depth,
            transmittance: self.transmittance,
            distortion: self.distortion,
        }
    }
}

/// Color, weight, depth and transmittance of segments sorted by `order_t`.
/// The returned distortion is zero; see [`compose_distortion`].
pub fn compose_render<S: Real>(segments: &[SegmentAggregate<S>]) -> RayAggregate<S> {
    let mut st = ComposeState::default();
    for seg in segments {
        st.color += seg.color * st.transmittance;
        st.alpha = st.alpha + st.transmittance * seg.alpha;
        st.depth = st.depth + st.transmittance * seg.depth;
        st.transmittance = st.transmittance * seg.transmittance;
    }
    st.to_aggregate()
}

/// Global distortion loss of segments sorted by `order_t`.
pub fn compose_distortion<S: Real>(segments: &[SegmentAggregate<S>]) -> Result<S> {
    compose_distortion_with(segments, CrossTerm::Exact)
}

pub fn compose_distortion_with<S: Real>(
    segments: &[SegmentAggregate<S>],
    cross_term: CrossTerm,
) -> Result<S> {
    let mut st = ComposeState::default();
    for seg in segments {
        if !seg.is_finite() {
            return Err(Error::NonFiniteInput("segment aggregate"));
        }
        st.push_with(seg, cross_term);
    }
    finish_loss(st.distortion)
}

fn finish_loss<S: Real>(l: S) -> Result<S> {
    if !l.is_finite() {
        return Err(Error::NonFiniteInput("composed distortion"));
    }
    if l < S::zero() {
        if l < -S::sliver() {
            return Err(Error::NegativeLoss(l.to_f64_lossy()));
        }
        return Ok(S::zero());
    }
    Ok(l)
}

/// Full composition of sorted segments: render terms plus distortion.
pub fn compose<S: Real>(segments: &[SegmentAggregate<S>]) -> Result<RayAggregate<S>> {
    let mut st = ComposeState::default();
    for seg in segments {
        if !seg.is_finite() {
            return Err(Error::NonFiniteInput("segment aggregate"));
        }
        st.push(seg);
    }
    let mut agg = st.to_aggregate();
    agg.distortion = finish_loss(st.distortion)?;
    Ok(agg)
}

/// Sorts packets into ray order (entry distance, then `key` for ties).
pub fn sort_segments<S: Real, K: Ord + Copy>(segments: &mut [(K, SegmentAggregate<S>)]) {
    segments.sort_by(|a, b| a.1.order_t.total_cmp(&b.1.order_t).then(a.0.cmp(&b.0)));
}
