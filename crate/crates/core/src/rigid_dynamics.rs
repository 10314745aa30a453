//! Rigid-link manipulator models.
//!
//! Controllers and the plant only talk to [`ManipulatorModel`]; the planar
//! two-link arm under gravity is the one concrete model shipped here.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type JointVector<const N: usize> = SVector<f64, N>;
pub type InertiaMatrix<const N: usize> = SMatrix<f64, N, N>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartesianPoint {
    pub x: f64,
    pub z: f64,
}

/// Joint-space dynamics `H(q) q̈ + C(q, q̇) + G(q) = τ` of an `N`-joint arm.
pub trait ManipulatorModel<const N: usize> {
    fn inertia_matrix(&self, q: &JointVector<N>) -> InertiaMatrix<N>;

    /// Coriolis and centrifugal torques (already multiplied by the velocities).
    fn coriolis_vector(&self, q: &JointVector<N>, qd: &JointVector<N>) -> JointVector<N>;

    fn gravity_vector(&self, q: &JointVector<N>) -> JointVector<N>;

    fn forward_kinematics(&self, q: &JointVector<N>) -> CartesianPoint;

    /// Gravitational potential energy, zero at the lowest reachable pose.
    fn potential_energy(&self, q: &JointVector<N>) -> f64;

    fn rigid_inverse_dynamics(
        &self,
        q: &JointVector<N>,
        qd: &JointVector<N>,
        qdd: &JointVector<N>,
    ) -> JointVector<N> {
        self.inertia_matrix(q) * qdd + self.coriolis_vector(q, qd) + self.gravity_vector(q)
    }

    fn kinetic_energy(&self, q: &JointVector<N>, qd: &JointVector<N>) -> f64 {
        0.5 * qd.dot(&(self.inertia_matrix(q) * qd))
    }

    /// Closed-form `(τ, τ̇, τ̈)` along a trajectory given as `[q, q̇, q̈, q⁽³⁾,
    /// q⁽⁴⁾]`, for models that provide one.
    fn inverse_dynamics_chain(
        &self,
        _chain: &[JointVector<N>; 5],
    ) -> Option<(JointVector<N>, JointVector<N>, JointVector<N>)> {
        None
    }
}

/// Geometry of the symmetric planar arm: equal link lengths `l`, centres of
/// mass at mid-link, equal link inertias and equal link masses `m`.
///
/// Equal masses are what the tabulated gravity, Coriolis and off-diagonal
/// inertia terms correspond to; the stiffer `h11 = m l² (1.5 + cos q2) + 2I`
/// follows from the same assumptions and keeps `H(q)` positive definite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmGeometry {
    /// Mass of each link (kg).
    pub m: f64,
    /// Length of each link (m).
    pub l: f64,
    /// Link inertia about its centre of mass (kg m²).
    pub i_link: f64,
    /// Gravitational acceleration (m/s²).
    pub g: f64,
}

impl Default for ArmGeometry {
    fn default() -> Self {
        Self {
            m: 10.0,
            l: 0.5,
            i_link: 0.5,
            g: 9.8,
        }
    }
}

impl ArmGeometry {
    pub fn validate(&self) -> Result<()> {
        let ok = self.m > 0.0 && self.l > 0.0 && self.i_link > 0.0 && self.g >= 0.0;
        if !ok || ![self.m, self.l, self.i_link, self.g].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "arm geometry requires m, l, I > 0 and g >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Planar two-link arm with revolute joints moving in the vertical plane.
/// `q1` is measured from the horizontal, `q2` relative to link 1.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct TwoLinkArm {
    pub geometry: ArmGeometry,
}

impl TwoLinkArm {
    pub fn new(geometry: ArmGeometry) -> Result<Self> {
        geometry.validate()?;
        Ok(Self { geometry })
    }

    fn ml2(&self) -> f64 {
        self.geometry.m * self.geometry.l * self.geometry.l
    }

    /// Closed-form first and second time derivatives of the inverse dynamics
    /// along a smooth joint trajectory given by its derivatives `[q, q̇, q̈,
    /// q⁽³⁾, q⁽⁴⁾]`. Returns `(τ, τ̇, τ̈)`.
    pub fn inverse_dynamics_derivatives(
        &self,
        chain: &[JointVector<2>; 5],
    ) -> (JointVector<2>, JointVector<2>, JointVector<2>) {
        let [q, qd, qdd, q3, q4] = chain;
        let a = self.ml2();
        let mlg = self.geometry.m * self.geometry.l * self.geometry.g;
        let (s2, c2) = q[1].sin_cos();

        // H = H0 + c2 * a * E with E = [[1, 0.5], [0.5, 0]].
        let e = InertiaMatrix::<2>::new(1.0, 0.5, 0.5, 0.0);
        let h = self.inertia_matrix(q);
        let dc2 = -s2 * qd[1];
        let ddc2 = -c2 * qd[1] * qd[1] - s2 * qdd[1];
        let hd = e * (a * dc2);
        let hdd = e * (a * ddc2);

        // C = a * s2 * [-(2 q̇1 q̇2 + q̇2²) / 2, q̇1² / 2] = a * s2 * v(q̇)
        let v = |w: &JointVector<2>| JointVector::<2>::new(-0.5 * (2.0 * w[0] * w[1] + w[1] * w[1]), 0.5 * w[0] * w[0]);
        let v0 = v(qd);
        let v1 = JointVector::<2>::new(
            -(qdd[0] * qd[1] + qd[0] * qdd[1] + qd[1] * qdd[1]),
            qd[0] * qdd[0],
        );
        let v2 = JointVector::<2>::new(
            -(q3[0] * qd[1] + 2.0 * qdd[0] * qdd[1] + qd[0] * q3[1] + qdd[1] * qdd[1] + qd[1] * q3[1]),
            qdd[0] * qdd[0] + qd[0] * q3[0],
        );
        let ds2 = c2 * qd[1];
        let dds2 = -s2 * qd[1] * qd[1] + c2 * qdd[1];
        let c = v0 * (a * s2);
        let cd = (v1 * s2 + v0 * ds2) * a;
        let cdd = (v2 * s2 + v1 * (2.0 * ds2) + v0 * dds2) * a;

        // G = mlg * [1.5 cos q1 + 0.5 cos q12, 0.5 cos q12]
        let q12 = q[0] + q[1];
        let (w1, w12) = (qd[0], qd[0] + qd[1]);
        let (a1, a12) = (qdd[0], qdd[0] + qdd[1]);
        let (s1, c1) = q[0].sin_cos();
        let (s12, c12) = q12.sin_cos();
        let g = JointVector::<2>::new(mlg * (1.5 * c1 + 0.5 * c12), 0.5 * mlg * c12);
        let dcos1 = -s1 * w1;
        let dcos12 = -s12 * w12;
        let gd = JointVector::<2>::new(mlg * (1.5 * dcos1 + 0.5 * dcos12), 0.5 * mlg * dcos12);
        let ddcos1 = -c1 * w1 * w1 - s1 * a1;
        let ddcos12 = -c12 * w12 * w12 - s12 * a12;
        let gdd = JointVector::<2>::new(mlg * (1.5 * ddcos1 + 0.5 * ddcos12), 0.5 * mlg * ddcos12);

        let tau = h * qdd + c + g;
        let tau_d = h * q3 + hd * qdd + cd + gd;
        let tau_dd = h * q4 + hd * q3 * 2.0 + hdd * qdd + cdd + gdd;
        (tau, tau_d, tau_dd)
    }
}

impl ManipulatorModel<2> for TwoLinkArm {
    fn inverse_dynamics_chain(
        &self,
        chain: &[JointVector<2>; 5],
    ) -> Option<(JointVector<2>, JointVector<2>, JointVector<2>)> {
        Some(self.inverse_dynamics_derivatives(chain))
    }

    fn inertia_matrix(&self, q: &JointVector<2>) -> InertiaMatrix<2> {
        let a = self.ml2();
        let i = self.geometry.i_link;
        let c2 = q[1].cos();
        let h11 = a * (1.5 + c2) + 2.0 * i;
        let h12 = a * (0.25 + 0.5 * c2) + i;
        let h22 = 0.25 * a + i;
        InertiaMatrix::<2>::new(h11, h12, h12, h22)
    }

    fn coriolis_vector(&self, q: &JointVector<2>, qd: &JointVector<2>) -> JointVector<2> {
        let a = self.ml2();
        let s2 = q[1].sin();
        JointVector::<2>::new(
            -0.5 * a * s2 * (2.0 * qd[1] * qd[0] + qd[1] * qd[1]),
            0.5 * a * s2 * qd[0] * qd[0],
        )
    }

    fn gravity_vector(&self, q: &JointVector<2>) -> JointVector<2> {
        let ArmGeometry { m, l, g, .. } = self.geometry;
        let c12 = (q[0] + q[1]).cos();
        JointVector::<2>::new(m * l * g * (1.5 * q[0].cos() + 0.5 * c12), 0.5 * m * l * g * c12)
    }

    fn forward_kinematics(&self, q: &JointVector<2>) -> CartesianPoint {
        let l = self.geometry.l;
        let q12 = q[0] + q[1];
        CartesianPoint {
            x: l * q[0].cos() + l * q12.cos(),
            z: l * q[0].sin() + l * q12.sin(),
        }
    }

    fn potential_energy(&self, q: &JointVector<2>) -> f64 {
        let ArmGeometry { m, l, g, .. } = self.geometry;
        m * g * l * (1.5 * q[0].sin() + 0.5 * (q[0] + q[1]).sin() + 2.0)
    }
}
