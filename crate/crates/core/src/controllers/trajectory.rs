//! Piecewise rest-to-rest joint trajectories, continuous through the fourth
//! derivative.
//!
//! Each move uses the degree-9 blend `s(τ) = 126τ⁵ - 420τ⁶ + 540τ⁷ - 315τ⁸ +
//! 70τ⁹`, whose first four derivatives vanish at both ends, so joining moves
//! and holds yields a globally C⁴ reference.

use crate::error::{Error, Result};
use crate::rigid_dynamics::JointVector;

/// `[q, q̇, q̈, q⁽³⁾, q⁽⁴⁾]` at one instant.
pub type DerivativeChain<const N: usize> = [JointVector<N>; 5];

/// Anything that can produce a joint reference and its derivatives.
pub trait ReferenceSource<const N: usize> {
    fn chain(&self, t: f64) -> DerivativeChain<N>;
}

const BLEND: [f64; 10] = [0.0, 0.0, 0.0, 0.0, 0.0, 126.0, -420.0, 540.0, -315.0, 70.0];

/// Blend value and derivatives with respect to normalized time, `[s, s', s'', s''', s'''']`.
fn blend(tau: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    for (k, o) in out.iter_mut().enumerate() {
        // k-th derivative of Σ c_n τ^n, evaluated by Horner on the derived coefficients.
        let mut acc = 0.0;
        for n in (k..BLEND.len()).rev() {
            let falling: f64 = (0..k).map(|j| (n - j) as f64).product();
            acc = acc * tau + BLEND[n] * falling;
        }
        *o = acc;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment<const N: usize> {
    pub start_time: f64,
    pub duration: f64,
    pub from: JointVector<N>,
    pub to: JointVector<N>,
}

impl<const N: usize> Segment<N> {
    fn chain(&self, t: f64) -> DerivativeChain<N> {
        let tau = ((t - self.start_time) / self.duration).clamp(0.0, 1.0);
        let s = blend(tau);
        let span = self.to - self.from;
        let mut chain = [JointVector::<N>::zeros(); 5];
        chain[0] = self.from + span * s[0];
        let mut scale = 1.0;
        for k in 1..5 {
            scale /= self.duration;
            chain[k] = span * (s[k] * scale);
        }
        chain
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointTrajectory<const N: usize> {
    start: JointVector<N>,
    segments: Vec<Segment<N>>,
}

impl<const N: usize> JointTrajectory<N> {
    /// Builds a trajectory from a start pose and a list of `(target, move
    /// duration, hold after arrival)`. A hold is a segment with all
    /// derivatives zero.
    pub fn from_waypoints(start: JointVector<N>, moves: &[(JointVector<N>, f64, f64)]) -> Result<Self> {
        let mut segments = Vec::new();
        let mut t = 0.0;
        let mut from = start;
        for (i, &(to, duration, hold)) in moves.iter().enumerate() {
            if !(duration > 0.0 && duration.is_finite()) || !(hold >= 0.0 && hold.is_finite()) {
                return Err(Error::Config(format!(
                    "segment {i}: move duration must be positive and hold non-negative, got {duration} and {hold}"
                )));
            }
            segments.push(Segment { start_time: t, duration, from, to });
            t += duration;
            if hold > 0.0 {
                segments.push(Segment { start_time: t, duration: hold, from: to, to });
                t += hold;
            }
            from = to;
        }
        Ok(Self { start, segments })
    }

    pub fn segments(&self) -> &[Segment<N>] {
        &self.segments
    }

    pub fn duration(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.start_time + s.duration)
    }

    pub fn final_pose(&self) -> JointVector<N> {
        self.segments.last().map_or(self.start, |s| s.to)
    }
}

impl<const N: usize> ReferenceSource<N> for JointTrajectory<N> {
    /// Before the first segment the start pose is held; after the last, the
    /// final pose.
    fn chain(&self, t: f64) -> DerivativeChain<N> {
        let rest = |q: JointVector<N>| {
            let mut c = [JointVector::<N>::zeros(); 5];
            c[0] = q;
            c
        };
        if self.segments.is_empty() || t <= 0.0 {
            return rest(self.start);
        }
        let idx = self.segments.partition_point(|s| s.start_time <= t);
        let seg = &self.segments[idx.saturating_sub(1)];
        if t >= seg.start_time + seg.duration && idx == self.segments.len() {
            return rest(seg.to);
        }
        seg.chain(t)
    }
}

/// A constant pose, for static tests.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StaticPose<const N: usize>(pub JointVector<N>);

impl<const N: usize> ReferenceSource<N> for StaticPose<N> {
    fn chain(&self, _t: f64) -> DerivativeChain<N> {
        let mut c = [JointVector::<N>::zeros(); 5];
        c[0] = self.0;
        c
    }
}
