//! Reference generation, feed-forward and the two tracking control laws.
//!
//! Control I feeds forward the full-order torque on a motor reference that
//! is shifted by the predicted torsion and closes a PD loop about that
//! reference. Control II uses a rigid-body feed-forward and injects the
//! torsion predicted by the virtual sensor into the proportional path.

pub mod trajectory;
pub mod transform;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rigid_dynamics::JointVector;

pub use trajectory::{DerivativeChain, JointTrajectory, ReferenceSource, Segment, StaticPose};
pub use transform::{
    feedforward_full, feedforward_reduced, reference_torques, FeedforwardFriction, MotorAcceleration, ReferenceSample,
    ReferenceTransformer, TorqueDerivatives, TransformOptions,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainSet<const N: usize> {
    /// Proportional gains (N·m/rad).
    pub kp: JointVector<N>,
    /// Derivative gains (N·m·s/rad).
    pub kd: JointVector<N>,
}

impl<const N: usize> GainSet<N> {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: &JointVector<N>| v.iter().all(|&g| g > 0.0 && g.is_finite());
        if !ok(&self.kp) || !ok(&self.kd) {
            return Err(Error::InvalidParameter(format!(
                "PD gains must be positive, got kp = {}, kd = {}",
                self.kp.transpose(),
                self.kd.transpose()
            )));
        }
        Ok(())
    }
}

/// Controller configurations compared in the tracking experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ControllerSpec {
    /// Open loop, `u = 0`.
    None,
    ControlI(ControlIVariant),
    ControlII(ControlIIVariant),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ControlIVariant {
    /// Full feed-forward only.
    Ff,
    /// Full feed-forward plus PD about the untransformed link reference.
    FfPd,
    /// Full feed-forward plus PD about the transformed motor reference.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ControlIIVariant {
    /// Reduced feed-forward only.
    Ff,
    /// Reduced feed-forward plus PD on `q_r - θ`.
    FfPd,
    /// As `FfPd`, plus proportional injection of the virtual-sensor torsion.
    FfPdVs,
}

impl ControllerSpec {
    pub const ALL: [ControllerSpec; 7] = [
        ControllerSpec::None,
        ControllerSpec::ControlI(ControlIVariant::Ff),
        ControllerSpec::ControlI(ControlIVariant::FfPd),
        ControllerSpec::ControlI(ControlIVariant::Full),
        ControllerSpec::ControlII(ControlIIVariant::Ff),
        ControllerSpec::ControlII(ControlIIVariant::FfPd),
        ControllerSpec::ControlII(ControlIIVariant::FfPdVs),
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ControllerSpec::None => "none",
            ControllerSpec::ControlI(ControlIVariant::Ff) => "i-ff",
            ControllerSpec::ControlI(ControlIVariant::FfPd) => "i-ff-pd",
            ControllerSpec::ControlI(ControlIVariant::Full) => "i-full",
            ControllerSpec::ControlII(ControlIIVariant::Ff) => "ii-ff",
            ControllerSpec::ControlII(ControlIIVariant::FfPd) => "ii-ff-pd",
            ControllerSpec::ControlII(ControlIIVariant::FfPdVs) => "ii-ff-pd-vs",
        }
    }

    pub fn needs_reference(&self) -> bool {
        !matches!(self, ControllerSpec::None)
    }

    /// Control output for the current measurements and reference sample.
    /// `delta_est` is the virtual-sensor torsion (rad); only the VS variant
    /// uses it.
    pub fn output<const N: usize>(
        &self,
        theta: &JointVector<N>,
        thetad: &JointVector<N>,
        reference: Option<&ReferenceSample<N>>,
        delta_est: &JointVector<N>,
        gains: &GainSet<N>,
    ) -> JointVector<N> {
        let Some(s) = reference else {
            return JointVector::zeros();
        };
        match self {
            ControllerSpec::None => JointVector::zeros(),
            ControllerSpec::ControlI(ControlIVariant::Ff) => s.u_r,
            ControllerSpec::ControlI(ControlIVariant::FfPd) => pd(&s.q[0], &s.q[1], theta, thetad, gains) + s.u_r,
            ControllerSpec::ControlI(ControlIVariant::Full) => control_i(theta, thetad, s, gains),
            ControllerSpec::ControlII(ControlIIVariant::Ff) => s.u_tilde,
            ControllerSpec::ControlII(ControlIIVariant::FfPd) => {
                control_ii(theta, thetad, s, &JointVector::zeros(), gains)
            }
            ControllerSpec::ControlII(ControlIIVariant::FfPdVs) => control_ii(theta, thetad, s, delta_est, gains),
        }
    }
}

impl fmt::Display for ControllerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['+', '_', ' '], "-");
        Self::ALL.into_iter().find(|c| c.name() == key).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|c| c.name()).collect();
            Error::Config(format!("unknown controller '{s}', expected one of {}", names.join(", ")))
        })
    }
}

impl TryFrom<String> for ControllerSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ControllerSpec> for String {
    fn from(c: ControllerSpec) -> Self {
        c.name().to_string()
    }
}

fn pd<const N: usize>(
    pos_ref: &JointVector<N>,
    vel_ref: &JointVector<N>,
    theta: &JointVector<N>,
    thetad: &JointVector<N>,
    gains: &GainSet<N>,
) -> JointVector<N> {
    gains.kp.component_mul(&(pos_ref - theta)) + gains.kd.component_mul(&(vel_ref - thetad))
}

/// `u = Kp (θ_r - θ) + Kd (θ̇_r - θ̇) + u_r`.
pub fn control_i<const N: usize>(
    theta: &JointVector<N>,
    thetad: &JointVector<N>,
    sample: &ReferenceSample<N>,
    gains: &GainSet<N>,
) -> JointVector<N> {
    pd(&sample.theta, &sample.theta_dot, theta, thetad, gains) + sample.u_r
}

/// `u = Kp e + Kd ė + Kp Δ̃ + ũ_r` with `e = q_r - θ`.
pub fn control_ii<const N: usize>(
    theta: &JointVector<N>,
    thetad: &JointVector<N>,
    sample: &ReferenceSample<N>,
    delta_est: &JointVector<N>,
    gains: &GainSet<N>,
) -> JointVector<N> {
    pd(&sample.q[0], &sample.q[1], theta, thetad, gains) + gains.kp.component_mul(delta_est) + sample.u_tilde
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ReferenceSample<2> {
        let v = |a: f64, b: f64| JointVector::<2>::new(a, b);
        ReferenceSample {
            t: 0.0,
            q: [v(0.1, 0.2), v(0.3, 0.4), v(0.0, 0.0), v(0.0, 0.0), v(0.0, 0.0)],
            tau: v(5.0, 6.0),
            tau_dot: v(0.0, 0.0),
            tau_ddot: v(0.0, 0.0),
            theta: v(0.11, 0.21),
            theta_dot: v(0.31, 0.41),
            theta_ddot: v(0.0, 0.0),
            u_r: v(7.0, 8.0),
            u_tilde: v(9.0, 10.0),
        }
    }

    fn gains() -> GainSet<2> {
        GainSet {
            kp: JointVector::<2>::new(1.3, 1.3),
            kd: JointVector::<2>::new(0.43, 0.43),
        }
    }

    #[test]
    fn zero_errors_give_feedforward() {
        let s = sample();
        let g = gains();
        assert_eq!(control_i(&s.theta, &s.theta_dot, &s, &g), s.u_r);
        assert_eq!(control_ii(&s.q[0], &s.q[1], &s, &JointVector::zeros(), &g), s.u_tilde);
    }

    #[test]
    fn virtual_sensor_shifts_proportional_error() {
        // With θ - Δ̃ = q the proportional term acts on q_r - q.
        let s = sample();
        let g = gains();
        let q = JointVector::<2>::new(0.05, 0.15);
        let delta = JointVector::<2>::new(0.002, -0.001);
        let theta = q + delta;
        let u = control_ii(&theta, &s.q[1], &s, &delta, &g);
        let expected = g.kp.component_mul(&(s.q[0] - q)) + s.u_tilde;
        assert!((u - expected).norm() < 1e-14);
    }

    #[test]
    fn names_round_trip() {
        for c in ControllerSpec::ALL {
            assert_eq!(c.name().parse::<ControllerSpec>().unwrap(), c);
        }
        assert_eq!("FF+PD+VS".parse::<ControllerSpec>().is_err(), true);
        assert_eq!("ii-FF+PD+VS".parse::<ControllerSpec>().unwrap(), ControllerSpec::ControlII(ControlIIVariant::FfPdVs));
        assert!("bogus".parse::<ControllerSpec>().is_err());
    }

    #[test]
    fn gains_must_be_positive() {
        assert!(gains().validate().is_ok());
        let mut g = gains();
        g.kd[1] = 0.0;
        assert!(g.validate().is_err());
    }
}
