//! Generalized-momentum torque observer and the torsion "virtual sensor".
//!
//! With `p = J θ̇` the motor dynamics read `ṗ = u - f(θ̇) - τ`. The observer
//! integrates `dp̂/dt = u - f(θ̇) - r` with residual `r = L (p̂ - p)`, so that
//! `ṙ + L r = L τ`: the residual is the joint torque seen through a
//! first-order lag of time constant `1/L`. Feeding `r` through the inverse
//! hysteresis model predicts the joint torsion without a link-side sensor.

use crate::error::{Error, Result};
use crate::nonlinear::{friction_torque, FrictionParams, HysteresisParams, InverseHysteresis, InverseScheme};
use crate::rigid_dynamics::JointVector;
use crate::units::deg_to_rad;
use serde::{Deserialize, Serialize};

/// Discretization of the observer between controller samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObserverScheme {
    /// Zero-order hold on `u - f`, motor velocity linear between samples; the
    /// lag `ṙ = L (u - f - ṗ - r)` is then integrated in closed form. Exact
    /// for a constant joint torque at any sample rate.
    #[default]
    ExactLag,
    /// Trapezoidal rule on `dp̂/dt`, residual solved implicitly at the new
    /// sample. Its pole `(1 - hL/2)/(1 + hL/2)` only approximates `e^{-hL}`.
    Trapezoidal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObserverGains<const N: usize> {
    /// Diagonal residual gains (1/s).
    pub l: JointVector<N>,
    pub scheme: ObserverScheme,
}

impl<const N: usize> ObserverGains<N> {
    pub fn new(l: JointVector<N>) -> Self {
        Self { l, scheme: ObserverScheme::default() }
    }
}

impl<const N: usize> ObserverGains<N> {
    pub fn validate(&self) -> Result<()> {
        if self.l.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter(format!("observer gains must be positive, got {}", self.l.transpose())));
        }
        Ok(())
    }
}

/// Motor-side model the observer relies on. Defaults to the plant's own
/// values; perturb it to study model mismatch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveModel<const N: usize> {
    pub motor_inertia: JointVector<N>,
    pub friction: [FrictionParams; N],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObserverState<const N: usize> {
    /// Estimated generalized momenta (kg m² rad/s).
    pub p_hat: JointVector<N>,
    /// Motor velocity of the previous sample, needed to rebuild `r` there.
    pub thetad_prev: JointVector<N>,
    /// Inverse-hysteresis memory of the virtual sensor.
    pub vs: [InverseHysteresis; N],
}

impl<const N: usize> ObserverState<N> {
    /// Starts with zero residual at the measured velocity.
    pub fn new(thetad: &JointVector<N>, drive: &DriveModel<N>) -> Self {
        Self {
            p_hat: thetad.component_mul(&drive.motor_inertia),
            thetad_prev: *thetad,
            vs: [InverseHysteresis::default(); N],
        }
    }

    pub fn residual(&self, drive: &DriveModel<N>, gains: &ObserverGains<N>) -> JointVector<N> {
        gains.l.component_mul(&(self.p_hat - self.thetad_prev.component_mul(&drive.motor_inertia)))
    }
}

/// Advances the observer over one sample interval during which `u` was held
/// constant, given the velocity measured at the end of the interval.
/// Returns the new state and the residual `r` at the new sample.
pub fn observer_step<const N: usize>(
    obs: &ObserverState<N>,
    u: &JointVector<N>,
    thetad_meas: &JointVector<N>,
    dt: f64,
    gains: &ObserverGains<N>,
    drive: &DriveModel<N>,
) -> Result<(ObserverState<N>, JointVector<N>)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidTimeStep(dt));
    }
    let r_prev = obs.residual(drive, gains);
    let f_prev = friction_torque(&obs.thetad_prev, &drive.friction);
    let f_next = friction_torque(thetad_meas, &drive.friction);
    let p_next = thetad_meas.component_mul(&drive.motor_inertia);

    let p_hat = match gains.scheme {
        ObserverScheme::Trapezoidal => {
            let half = 0.5 * dt;
            let numerator = obs.p_hat + (u - f_prev - r_prev + u - f_next + gains.l.component_mul(&p_next)) * half;
            numerator.component_div(&gains.l.map(|l| 1.0 + half * l))
        }
        ObserverScheme::ExactLag => {
            let p_prev = obs.thetad_prev.component_mul(&drive.motor_inertia);
            let forcing = u - (f_prev + f_next) * 0.5 - (p_next - p_prev) / dt;
            let mut r = JointVector::<N>::zeros();
            for i in 0..N {
                let decay = (-gains.l[i] * dt).exp();
                r[i] = decay * r_prev[i] + (1.0 - decay) * forcing[i];
            }
            p_next + r.component_div(&gains.l)
        }
    };
    let next = ObserverState {
        p_hat,
        thetad_prev: *thetad_meas,
        vs: obs.vs,
    };
    let r = next.residual(drive, gains);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observer residual".into()));
    }
    Ok((next, r))
}

/// Maps the observed torque through the inverse hysteresis model of each
/// joint; returns the predicted torsion in rad.
pub fn virtual_sensor_step<const N: usize>(
    obs: &ObserverState<N>,
    r: &JointVector<N>,
    dt: f64,
    hysteresis: &[HysteresisParams; N],
    scheme: InverseScheme,
) -> Result<(ObserverState<N>, JointVector<N>)> {
    let mut next = *obs;
    let mut delta = JointVector::<N>::zeros();
    for i in 0..N {
        delta[i] = deg_to_rad(next.vs[i].step(r[i], dt, &hysteresis[i], scheme)?);
    }
    Ok((next, delta))
}
