//! Motor-side reference for a link trajectory through hysteretic joints.
//!
//! The link reference `q_r` requires the joint torque `τ_r` of the rigid
//! inverse dynamics. The motor must lead the link by the torsion that
//! produces this torque, `θ_r = q_r + χ⁻¹(τ_r)`, where `χ⁻¹` is the inverse
//! hysteresis map marched along the reference with its own memory. Motor
//! velocity follows from the rate-independent Jacobian `∂χ⁻¹/∂τ = 1/χ'`,
//! `θ̇_r = q̇_r + τ̇_r / χ'`. Differentiating once more along the branch gives
//!
//! ```text
//! θ̈_r = q̈_r + (τ̈_r - χ'' Δ̇_r²) / χ'
//! ```
//!
//! The curvature term is large wherever the branch stiffness changes quickly,
//! that is right after every load reversal. Dropping it
//! ([`MotorAcceleration::JacobianOnly`]) leaves a motor acceleration that does
//! not integrate to the motor velocity, and a feed-forward built on it drifts.

use serde::{Deserialize, Serialize};

use super::trajectory::{DerivativeChain, ReferenceSource};
use crate::error::{Error, Result};
use crate::nonlinear::{chi_curvature, chi_derivative, friction_torque, HysteresisParams, InverseHysteresis, InverseScheme};
use crate::observer::DriveModel;
use crate::rigid_dynamics::{JointVector, ManipulatorModel};
use crate::units::deg_to_rad;

/// How `τ̇_r` and `τ̈_r` are obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TorqueDerivatives {
    /// Five-point central differences of `τ_r(t)`.
    #[default]
    Stencil,
    /// Closed-form derivatives supplied by the manipulator model.
    Analytic,
}

/// How the torsion part of the motor acceleration is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotorAcceleration {
    /// Exact second derivative of the transformed reference along the branch.
    #[default]
    Consistent,
    /// `τ̈_r / χ'` only, without the branch-curvature term.
    JacobianOnly,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceSample<const N: usize> {
    pub t: f64,
    /// `[q_r, q̇_r, q̈_r, q_r⁽³⁾, q_r⁽⁴⁾]`.
    pub q: DerivativeChain<N>,
    pub tau: JointVector<N>,
    pub tau_dot: JointVector<N>,
    pub tau_ddot: JointVector<N>,
    pub theta: JointVector<N>,
    pub theta_dot: JointVector<N>,
    pub theta_ddot: JointVector<N>,
    /// Full feed-forward torque on the transformed reference.
    pub u_r: JointVector<N>,
    /// Reduced feed-forward torque that ignores joint elasticity.
    pub u_tilde: JointVector<N>,
}

/// `(τ_r, τ̇_r, τ̈_r)` at time `t`. The stencil uses spacing `h`.
pub fn reference_torques<M, S, const N: usize>(
    arm: &M,
    source: &S,
    t: f64,
    method: TorqueDerivatives,
    h: f64,
) -> Result<(JointVector<N>, JointVector<N>, JointVector<N>)>
where
    M: ManipulatorModel<N>,
    S: ReferenceSource<N> + ?Sized,
{
    match method {
        TorqueDerivatives::Analytic => arm
            .inverse_dynamics_chain(&source.chain(t))
            .ok_or_else(|| Error::Config("the manipulator model has no closed-form torque derivatives".into())),
        TorqueDerivatives::Stencil => {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidTimeStep(h));
            }
            let tau_at = |s: f64| {
                let c = source.chain(s);
                arm.rigid_inverse_dynamics(&c[0], &c[1], &c[2])
            };
            let (m2, m1, z, p1, p2) = (tau_at(t - 2.0 * h), tau_at(t - h), tau_at(t), tau_at(t + h), tau_at(t + 2.0 * h));
            let d1 = (m2 - p2 + (p1 - m1) * 8.0) / (12.0 * h);
            let d2 = ((p1 + m1) * 16.0 - (p2 + m2) - z * 30.0) / (12.0 * h * h);
            Ok((z, d1, d2))
        }
    }
}

/// Reduced feed-forward `(H(q_r) + J) q̈_r + C(q_r, q̇_r) + G(q_r) + f(q̇_r)`.
pub fn feedforward_reduced<M: ManipulatorModel<N>, const N: usize>(
    arm: &M,
    q: &DerivativeChain<N>,
    drive: &DriveModel<N>,
) -> JointVector<N> {
    arm.rigid_inverse_dynamics(&q[0], &q[1], &q[2])
        + drive.motor_inertia.component_mul(&q[2])
        + friction_torque(&q[1], &drive.friction)
}

/// Velocity at which the full feed-forward evaluates motor friction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedforwardFriction {
    /// `f(q̇_r)`: the link velocity stands in for the motor velocity.
    #[default]
    LinkVelocity,
    /// `f(θ̇_r)`: the transformed motor velocity.
    MotorVelocity,
}

/// Full feed-forward `J θ̈_r + τ_r + f(v)` with friction evaluated at `v`.
pub fn feedforward_full<const N: usize>(
    theta_ddot: &JointVector<N>,
    tau: &JointVector<N>,
    friction_velocity: &JointVector<N>,
    drive: &DriveModel<N>,
) -> JointVector<N> {
    drive.motor_inertia.component_mul(theta_ddot) + tau + friction_torque(friction_velocity, &drive.friction)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformOptions {
    pub inverse_scheme: InverseScheme,
    pub torque_derivatives: TorqueDerivatives,
    pub motor_acceleration: MotorAcceleration,
    pub feedforward_friction: FeedforwardFriction,
    /// Spacing of the torque stencil (s).
    pub stencil_step: f64,
}

impl Default for TransformOptions {
    fn default() -> Self {
        Self {
            inverse_scheme: InverseScheme::default(),
            torque_derivatives: TorqueDerivatives::default(),
            motor_acceleration: MotorAcceleration::default(),
            feedforward_friction: FeedforwardFriction::default(),
            stencil_step: 1e-4,
        }
    }
}

/// Stateful reference transformation; owns the inverse-hysteresis memory of
/// the reference, which is independent of the plant's.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTransformer<const N: usize> {
    memory: [InverseHysteresis; N],
    options: TransformOptions,
}

impl<const N: usize> ReferenceTransformer<N> {
    pub fn new(options: TransformOptions) -> Result<Self> {
        if !(options.stencil_step > 0.0 && options.stencil_step.is_finite()) {
            return Err(Error::InvalidTimeStep(options.stencil_step));
        }
        Ok(Self {
            memory: [InverseHysteresis::default(); N],
            options,
        })
    }

    pub fn options(&self) -> &TransformOptions {
        &self.options
    }

    pub fn memory(&self) -> &[InverseHysteresis; N] {
        &self.memory
    }

    /// Produces the sample at `t`, advancing the reference memory by one step
    /// of length `dt`. Must be called at successive sample times.
    pub fn sample<M, S>(
        &mut self,
        t: f64,
        dt: f64,
        arm: &M,
        source: &S,
        hysteresis: &[HysteresisParams; N],
        drive: &DriveModel<N>,
    ) -> Result<ReferenceSample<N>>
    where
        M: ManipulatorModel<N>,
        S: ReferenceSource<N> + ?Sized,
    {
        let q = source.chain(t);
        let opts = self.options;
        let (tau, tau_dot, tau_ddot) = reference_torques(arm, source, t, opts.torque_derivatives, opts.stencil_step)?;

        let mut theta = q[0];
        let mut theta_dot = q[1];
        let mut theta_ddot = q[2];
        for i in 0..N {
            let p = &hysteresis[i];
            let delta = self.memory[i].step(tau[i], dt, p, opts.inverse_scheme)?;
            let slope = chi_derivative(delta, &self.memory[i].hyst, tau_dot[i], p).map_err(|e| match e {
                Error::NotInvertible { slope, .. } => Error::NotInvertible { joint: i, slope },
                other => other,
            })?;
            // Torsion rate and acceleration in deg/s and deg/s².
            let delta_dot = tau_dot[i] / slope;
            let delta_ddot = match opts.motor_acceleration {
                MotorAcceleration::Consistent => {
                    (tau_ddot[i] - chi_curvature(delta, &self.memory[i].hyst, tau_dot[i], p) * delta_dot * delta_dot)
                        / slope
                }
                MotorAcceleration::JacobianOnly => tau_ddot[i] / slope,
            };
            theta[i] += deg_to_rad(delta);
            theta_dot[i] += deg_to_rad(delta_dot);
            theta_ddot[i] += deg_to_rad(delta_ddot);
        }

        Ok(ReferenceSample {
            t,
            q,
            tau,
            tau_dot,
            tau_ddot,
            theta,
            theta_dot,
            theta_ddot,
            u_r: feedforward_full(
                &theta_ddot,
                &tau,
                match opts.feedforward_friction {
                    FeedforwardFriction::LinkVelocity => &q[1],
                    FeedforwardFriction::MotorVelocity => &theta_dot,
                },
                drive,
            ),
            u_tilde: feedforward_reduced(arm, &q, drive),
        })
    }
}
