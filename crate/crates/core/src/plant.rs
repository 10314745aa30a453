//! Coupled link/motor dynamics of a manipulator with hysteretic joints.
//!
//! Link side: `H(q) q̈ + C(q, q̇) + G(q) = τ`; motor side:
//! `J θ̈ + τ = u - f(θ̇)`, with joint torque `τ = χ(Δ) + D Δ̇` and torsion
//! `Δ = θ - q`. Motor positions are reflected through the gear ratio.

use crate::error::{Error, Result};
use crate::nonlinear::{friction_torque, hysteresis_rate, hysteresis_torque, FrictionParams, HysteresisParams, HysteresisState};
use crate::ode::{rk4_step, OdeState};
use crate::rigid_dynamics::{JointVector, ManipulatorModel};
use crate::units::{rad_to_deg, DEG_PER_RAD};

#[derive(Clone, Debug, PartialEq)]
pub struct PlantParams<M, const N: usize> {
    pub arm: M,
    /// Motor inertias reflected to the joint side (kg m²).
    pub motor_inertia: JointVector<N>,
    pub friction: [FrictionParams; N],
    pub hysteresis: [HysteresisParams; N],
    /// Additional viscous joint damping (N·m·s/deg).
    pub joint_damping: JointVector<N>,
    /// Encoder resolution (bits per revolution).
    pub encoder_bits: u32,
}

impl<M, const N: usize> PlantParams<M, N> {
    pub fn validate(&self) -> Result<()> {
        if self.motor_inertia.iter().any(|&j| !(j > 0.0 && j.is_finite())) {
            return Err(Error::InvalidParameter(format!("motor inertias must be positive, got {}", self.motor_inertia.transpose())));
        }
        if self.joint_damping.iter().any(|&d| !(d >= 0.0 && d.is_finite())) {
            return Err(Error::InvalidParameter("joint damping must be non-negative".into()));
        }
        if self.encoder_bits < 1 || self.encoder_bits > 52 {
            return Err(Error::InvalidParameter(format!("encoder resolution of {} bits is out of range", self.encoder_bits)));
        }
        for f in &self.friction {
            f.validate()?;
        }
        for h in &self.hysteresis {
            h.validate()?;
        }
        Ok(())
    }
}

/// Full plant state. Angles in rad; hysteresis memory in deg.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantState<const N: usize> {
    pub q: JointVector<N>,
    pub qd: JointVector<N>,
    pub theta: JointVector<N>,
    pub thetad: JointVector<N>,
    pub hyst: [HysteresisState; N],
}

impl<const N: usize> PlantState<N> {
    /// At rest with zero torsion and virgin hysteresis memory.
    pub fn at_rest(q: JointVector<N>) -> Self {
        Self {
            q,
            qd: JointVector::zeros(),
            theta: q,
            thetad: JointVector::zeros(),
            hyst: [HysteresisState::virgin(); N],
        }
    }

    /// Joint torsion `θ - q` (rad).
    pub fn torsion(&self) -> JointVector<N> {
        self.theta - self.q
    }

    pub fn torsion_rate(&self) -> JointVector<N> {
        self.thetad - self.qd
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qd).chain(&self.theta).chain(&self.thetad).all(|v| v.is_finite())
            && self.hyst.iter().all(HysteresisState::is_finite)
    }
}

impl<const N: usize> OdeState for PlantState<N> {
    fn add_scaled(&self, rate: &Self, h: f64) -> Self {
        let mut hyst = self.hyst;
        for (s, r) in hyst.iter_mut().zip(&rate.hyst) {
            s.x += h * r.x;
            s.x_int += h * r.x_int;
        }
        Self {
            q: self.q + rate.q * h,
            qd: self.qd + rate.qd * h,
            theta: self.theta + rate.theta * h,
            thetad: self.thetad + rate.thetad * h,
            hyst,
        }
    }
}

impl<M: ManipulatorModel<N>, const N: usize> PlantParams<M, N> {
    /// `τ = χ(Δ) + D Δ̇` per joint (N·m).
    pub fn joint_torque(&self, state: &PlantState<N>) -> JointVector<N> {
        let delta = state.torsion();
        let delta_dot = state.torsion_rate();
        JointVector::<N>::from_fn(|i, _| {
            hysteresis_torque(rad_to_deg(delta[i]), &state.hyst[i], &self.hysteresis[i])
                + self.joint_damping[i] * rad_to_deg(delta_dot[i])
        })
    }

    /// Time derivative of the full state under motor torques `u`.
    pub fn derivatives(&self, state: &PlantState<N>, u: &JointVector<N>) -> Result<PlantState<N>> {
        let tau = self.joint_torque(state);
        let h = self.arm.inertia_matrix(&state.q);
        let rhs = tau - self.arm.coriolis_vector(&state.q, &state.qd) - self.arm.gravity_vector(&state.q);
        let qdd = h.cholesky().ok_or(Error::SingularInertia)?.solve(&rhs);
        let thetadd = (u - friction_torque(&state.thetad, &self.friction) - tau).component_div(&self.motor_inertia);

        let delta_dot = state.torsion_rate();
        let hyst = std::array::from_fn(|i| hysteresis_rate(&state.hyst[i], rad_to_deg(delta_dot[i]), &self.hysteresis[i]));
        Ok(PlantState {
            q: state.qd,
            qd: qdd,
            theta: state.thetad,
            thetad: thetadd,
            hyst,
        })
    }

    /// One RK4 step with `u` held constant.
    pub fn step(&self, state: &PlantState<N>, u: &JointVector<N>, dt: f64) -> Result<PlantState<N>> {
        if !(dt > 0.0) {
            return Err(Error::InvalidTimeStep(dt));
        }
        let next = rk4_step(state, dt, |s| self.derivatives(s, u))?;
        if !next.is_finite() {
            return Err(Error::NonFinite("plant state after integration step".into()));
        }
        Ok(next)
    }

    /// Kinetic energy of links and motors, gravity potential, and the energy
    /// stored in the elastic part `w α(Δ)` of each joint (J). Conserved when
    /// friction and damping are disabled and `w = 1`.
    pub fn mechanical_energy(&self, state: &PlantState<N>) -> f64 {
        let kinetic = self.arm.kinetic_energy(&state.q, &state.qd)
            + 0.5 * state.thetad.component_mul(&self.motor_inertia).dot(&state.thetad);
        let delta = state.torsion();
        let elastic: f64 = (0..N)
            .map(|i| {
                let p = &self.hysteresis[i];
                let d = rad_to_deg(delta[i]);
                p.w * (0.5 * p.k1 * d * d + 0.25 * p.k3 * d.powi(4)) / DEG_PER_RAD
            })
            .sum();
        kinetic + self.arm.potential_energy(&state.q) + elastic
    }
}

/// Encoder reading of an angle: `floor(θ / Δq) Δq` with `Δq = 2π / 2^bits`.
pub fn quantize_encoder(theta: f64, bits: u32) -> f64 {
    let step = encoder_step(bits);
    (theta / step).floor() * step
}

pub fn encoder_step(bits: u32) -> f64 {
    std::f64::consts::TAU / 2f64.powi(bits as i32)
}
