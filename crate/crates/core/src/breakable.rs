//! Integrals along a ray that can be evaluated segment by segment.
//!
//! An integral is breakable when each contiguous run of bins reduces to a
//! small packet and packets fold front to back through a running state. The
//! fold over any cut then equals the direct evaluation over all bins. Ordinary
//! volume rendering quantities (transmittance, color, weight, depth) and the
//! pairwise distortion loss are all members of this family.

use std::fmt::Debug;

use crate::geom::Rgb;
use crate::num::Real;
use crate::quadrature::{distortion_bruteforce, weights, SampleInterval};

/// Result type of a breakable integral.
pub trait BreakValue: Copy + Debug {
    /// Relative discrepancy `|a - b| / max(1, |b|)`, maximized over components.
    fn discrepancy(&self, reference: &Self) -> f64;
}

macro_rules! scalar_value {
    ($($t:ty),*) => {$(
        impl BreakValue for $t {
            fn discrepancy(&self, reference: &Self) -> f64 {
                let (a, b) = (*self as f64, *reference as f64);
                (a - b).abs() / b.abs().max(1.0)
            }
        }
        impl BreakValue for Rgb<$t> {
            fn discrepancy(&self, reference: &Self) -> f64 {
                self.channels()
                    .iter()
                    .zip(reference.channels())
                    .map(|(a, b)| a.discrepancy(&b))
                    .fold(0.0, f64::max)
            }
        }
    )*};
}

scalar_value!(f32, f64);

impl<A: BreakValue, B: BreakValue> BreakValue for (A, B) {
    fn discrepancy(&self, reference: &Self) -> f64 {
        self.0.discrepancy(&reference.0).max(self.1.discrepancy(&reference.1))
    }
}

/// Values that can be scaled and added, as required by [`Sum`].
pub trait Linear<S>: BreakValue {
    fn plus(self, other: Self) -> Self;
    fn times(self, k: S) -> Self;
}

impl<S: Real + BreakValue> Linear<S> for S {
    fn plus(self, other: Self) -> Self {
        self + other
    }
    fn times(self, k: S) -> Self {
        self * k
    }
}

impl<S: Real> Linear<S> for Rgb<S>
where
    Rgb<S>: BreakValue,
{
    fn plus(self, other: Self) -> Self {
        self + other
    }
    fn times(self, k: S) -> Self {
        self * k
    }
}

pub trait Breakable<S: Real> {
    /// Summary of one segment, computed from that segment's bins alone.
    type Packet: Copy + Debug;
    /// Running front-to-back state.
    type State: Copy + Debug;
    type Value: BreakValue;

    fn name(&self) -> String;
    fn identity(&self) -> Self::State;
    fn seg_eval(&self, bins: &[SampleInterval<S>]) -> Self::Packet;
    fn combine(&self, state: &Self::State, packet: &Self::Packet) -> Self::State;
    fn finish(&self, state: &Self::State) -> Self::Value;
    /// Single pass over all bins, written independently of the packet algebra.
    fn direct(&self, bins: &[SampleInterval<S>]) -> Self::Value;
}

/// Folds the segments delimited by `cuts` (strictly increasing bin indices in
/// `1..bins.len()`) front to back.
pub fn fold<S: Real, B: Breakable<S> + ?Sized>(b: &B, bins: &[SampleInterval<S>], cuts: &[usize]) -> B::Value {
    let mut state = b.identity();
    let mut start = 0;
    for &end in cuts.iter().chain(std::iter::once(&bins.len())) {
        let packet = b.seg_eval(&bins[start..end]);
        state = b.combine(&state, &packet);
        start = end;
    }
    b.finish(&state)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitCheck {
    pub name: String,
    pub discrepancy: f64,
    pub passed: bool,
}

/// Compares the fold over `cuts` with the direct evaluation.
pub fn check_split_invariance<S: Real, B: Breakable<S> + ?Sized>(
    b: &B,
    bins: &[SampleInterval<S>],
    cuts: &[usize],
    tol: f64,
) -> SplitCheck {
    assert!(
        cuts.windows(2).all(|w| w[0] < w[1]) && cuts.iter().all(|&c| c > 0 && c < bins.len().max(1)),
        "cuts must be increasing interior indices"
    );
    let discrepancy = fold(b, bins, cuts).discrepancy(&b.direct(bins));
    SplitCheck {
        name: b.name(),
        discrepancy,
        passed: discrepancy <= tol,
    }
}

/// Packet shared by the alpha-compositing instances: segment transmittance plus
/// one accumulated quantity.
fn over_packet<S: Real, V: Linear<S>>(bins: &[SampleInterval<S>], zero: V, f: impl Fn(&SampleInterval<S>) -> V) -> (S, V) {
    let mut t = S::one();
    let mut acc = zero;
    for s in bins {
        let pass = (-s.optical_depth()).exp();
        acc = acc.plus(f(s).times(t * (S::one() - pass)));
        t = t * pass;
    }
    (t, acc)
}

fn direct_weighted<S: Real, V: Linear<S>>(bins: &[SampleInterval<S>], zero: V, f: impl Fn(&SampleInterval<S>) -> V) -> V {
    weights(bins)
        .into_iter()
        .zip(bins)
        .fold(zero, |acc, (w, s)| acc.plus(f(s).times(w)))
}

/// `exp(-sum sigma * delta)`; packets are optical depths and add.
#[derive(Clone, Copy, Debug, Default)]
pub struct Transmittance;

impl<S: Real + BreakValue> Breakable<S> for Transmittance {
    type Packet = S;
    type State = S;
    type Value = S;
    fn name(&self) -> String {
        "transmittance".into()
    }
    fn identity(&self) -> S {
        S::zero()
    }
    fn seg_eval(&self, bins: &[SampleInterval<S>]) -> S {
        bins.iter().map(|s| s.optical_depth()).sum()
    }
    fn combine(&self, tau: &S, packet: &S) -> S {
        *tau + *packet
    }
    fn finish(&self, tau: &S) -> S {
        (-*tau).exp()
    }
    fn direct(&self, bins: &[SampleInterval<S>]) -> S {
        bins.iter().fold(S::one(), |t, s| t * (-s.optical_depth()).exp())
    }
}

macro_rules! over_instance {
    ($name:ident, $label:literal, $value:ty, $zero:expr, $f:expr) => {
        #[derive(Clone, Copy, Debug, Default)]
        pub struct $name;

        impl<S: Real + BreakValue> Breakable<S> for $name
        where
            $value: Linear<S>,
        {
            type Packet = (S, $value);
            /// (prefix transmittance, accumulated value)
            type State = (S, $value);
            type Value = $value;
            fn name(&self) -> String {
                $label.into()
            }
            fn identity(&self) -> Self::State {
                (S::one(), $zero)
            }
            fn seg_eval(&self, bins: &[SampleInterval<S>]) -> Self::Packet {
                over_packet(bins, $zero, $f)
            }
            fn combine(&self, st: &Self::State, p: &Self::Packet) -> Self::State {
                (st.0 * p.0, st.1.plus(p.1.times(st.0)))
            }
            fn finish(&self, st: &Self::State) -> $value {
                st.1
            }
            fn direct(&self, bins: &[SampleInterval<S>]) -> $value {
                direct_weighted(bins, $zero, $f)
            }
        }
    };
}

over_instance!(Color, "color", Rgb<S>, Rgb::black(), |s: &SampleInterval<S>| s.rgb);
over_instance!(Weight, "weight", S, S::zero(), |_: &SampleInterval<S>| S::one());
over_instance!(Depth, "depth", S, S::zero(), |s: &SampleInterval<S>| s.m);

/// Pairwise distortion `sum_ij w_i w_j |m_i - m_j|`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Distortion;

/// `(T, A, D, L)` of a segment or of the prefix.
pub type DistortionTerms<S> = (S, S, S, S);

impl<S: Real + BreakValue> Breakable<S> for Distortion {
    type Packet = DistortionTerms<S>;
    type State = DistortionTerms<S>;
    type Value = S;
    fn name(&self) -> String {
        "distortion".into()
    }
    fn identity(&self) -> Self::State {
        (S::one(), S::zero(), S::zero(), S::zero())
    }
    fn seg_eval(&self, bins: &[SampleInterval<S>]) -> Self::Packet {
        let w = weights(bins);
        let m: Vec<S> = bins.iter().map(|s| s.m).collect();
        let (t, a) = over_packet(bins, S::zero(), |_| S::one());
        let d = w.iter().zip(&m).fold(S::zero(), |acc, (w, m)| acc + *w * *m);
        (t, a, d, distortion_bruteforce(&w, &m))
    }
    fn combine(&self, st: &Self::State, p: &Self::Packet) -> Self::State {
        let (t, a, d, l) = *st;
        let cross = p.2 * a - p.1 * d;
        (t * p.0, a + t * p.1, d + t * p.2, l + t * t * p.3 + S::two() * t * cross)
    }
    fn finish(&self, st: &Self::State) -> S {
        st.3
    }
    fn direct(&self, bins: &[SampleInterval<S>]) -> S {
        let m: Vec<S> = bins.iter().map(|s| s.m).collect();
        distortion_bruteforce(&weights(bins), &m)
    }
}

/// Two integrals evaluated side by side.
#[derive(Clone, Copy, Debug, Default)]
pub struct Product<A, B>(pub A, pub B);

impl<S: Real, A: Breakable<S>, B: Breakable<S>> Breakable<S> for Product<A, B> {
    type Packet = (A::Packet, B::Packet);
    type State = (A::State, B::State);
    type Value = (A::Value, B::Value);
    fn name(&self) -> String {
        format!("{} x {}", self.0.name(), self.1.name())
    }
    fn identity(&self) -> Self::State {
        (self.0.identity(), self.1.identity())
    }
    fn seg_eval(&self, bins: &[SampleInterval<S>]) -> Self::Packet {
        (self.0.seg_eval(bins), self.1.seg_eval(bins))
    }
    fn combine(&self, st: &Self::State, p: &Self::Packet) -> Self::State {
        (self.0.combine(&st.0, &p.0), self.1.combine(&st.1, &p.1))
    }
    fn finish(&self, st: &Self::State) -> Self::Value {
        (self.0.finish(&st.0), self.1.finish(&st.1))
    }
    fn direct(&self, bins: &[SampleInterval<S>]) -> Self::Value {
        (self.0.direct(bins), self.1.direct(bins))
    }
}

/// `a * first + b * second` for two integrals with the same value type.
#[derive(Clone, Copy, Debug)]
pub struct Sum<S, A, B> {
    pub first: A,
    pub second: B,
    pub a: S,
    pub b: S,
}

impl<S: Real, A, B> Breakable<S> for Sum<S, A, B>
where
    A: Breakable<S>,
    B: Breakable<S, Value = A::Value>,
    A::Value: Linear<S>,
{
    type Packet = (A::Packet, B::Packet);
    type State = (A::State, B::State);
    type Value = A::Value;
    fn name(&self) -> String {
        format!("{} + {}", self.first.name(), self.second.name())
    }
    fn identity(&self) -> Self::State {
        (self.first.identity(), self.second.identity())
    }
    fn seg_eval(&self, bins: &[SampleInterval<S>]) -> Self::Packet {
        (self.first.seg_eval(bins), self.second.seg_eval(bins))
    }
    fn combine(&self, st: &Self::State, p: &Self::Packet) -> Self::State {
        (self.first.combine(&st.0, &p.0), self.second.combine(&st.1, &p.1))
    }
    fn finish(&self, st: &Self::State) -> Self::Value {
        self.first.finish(&st.0).times(self.a).plus(self.second.finish(&st.1).times(self.b))
    }
    fn direct(&self, bins: &[SampleInterval<S>]) -> Self::Value {
        self.first.direct(bins).times(self.a).plus(self.second.direct(bins).times(self.b))
    }
}

/// Color folded without attenuating by the prefix transmittance. Agrees with
/// [`Color`] only when the ray is uncut or everything in front is transparent.
#[derive(Clone, Copy, Debug, Default)]
pub struct UnattenuatedColor;

impl<S: Real + BreakValue> Breakable<S> for UnattenuatedColor
where
    Rgb<S>: Linear<S>,
{
    type Packet = (S, Rgb<S>);
    type State = (S, Rgb<S>);
    type Value = Rgb<S>;
    fn name(&self) -> String {
        "color (no prefix attenuation)".into()
    }
    fn identity(&self) -> Self::State {
        (S::one(), Rgb::black())
    }
    fn seg_eval(&self, bins: &[SampleInterval<S>]) -> Self::Packet {
        Color.seg_eval(bins)
    }
    fn combine(&self, st: &Self::State, p: &Self::Packet) -> Self::State {
        (st.0 * p.0, st.1 + p.1)
    }
    fn finish(&self, st: &Self::State) -> Rgb<S> {
        st.1
    }
    fn direct(&self, bins: &[SampleInterval<S>]) -> Rgb<S> {
        Color.direct(bins)
    }
}
