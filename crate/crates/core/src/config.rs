//! TOML scenario description for the two-link arm. Angles are given in
//! degrees; every field has a default, so an empty file is a valid
//! configuration that reproduces the reference setup.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controllers::{
    ControlIVariant, ControllerSpec, FeedforwardFriction, GainSet, JointTrajectory, MotorAcceleration, TorqueDerivatives,
    TransformOptions,
};
use crate::error::{Error, Result};
use crate::linear::LinearJointModel;
use crate::nonlinear::{FrictionParams, HysteresisParams, InverseScheme};
use crate::observer::{DriveModel, ObserverGains, ObserverScheme};
use crate::plant::{PlantParams, PlantState};
use crate::rigid_dynamics::{ArmGeometry, JointVector, ManipulatorModel, TwoLinkArm};
use crate::sim::{ControllerSetup, SimSettings};
use crate::units::deg_to_rad;

pub type Vec2 = [f64; 2];

fn jv(v: Vec2) -> JointVector<2> {
    JointVector::<2>::new(v[0], v[1])
}

fn jv_deg(v: Vec2) -> JointVector<2> {
    JointVector::<2>::new(deg_to_rad(v[0]), deg_to_rad(v[1]))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub plant: PlantConfig,
    pub simulation: SimulationConfig,
    pub reference: ReferenceConfig,
    pub controller: ControllerConfig,
    pub free_fall: FreeFallConfig,
    pub tracking: TrackingConfig,
    pub curves: CurvesConfig,
    pub root_locus: RootLocusConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub arm: ArmGeometry,
    /// Motor inertias (kg m²).
    pub motor_inertia: Vec2,
    /// Viscous joint damping (N·m·s/deg).
    pub joint_damping: Vec2,
    pub encoder_bits: u32,
    pub friction: [FrictionParams; 2],
    pub hysteresis: [HysteresisParams; 2],
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            arm: ArmGeometry::default(),
            motor_inertia: [1.0, 1.0],
            joint_damping: [1.0, 1.0],
            encoder_bits: 14,
            friction: [FrictionParams::default(); 2],
            hysteresis: [HysteresisParams::default(); 2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Integrator step (s).
    pub dt: f64,
    /// Controller sample period (s).
    pub control_period: f64,
    /// Keep every n-th controller sample in the written trace. When absent,
    /// runs longer than 100 s are thinned to about 100 000 records.
    pub record_every: Option<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            control_period: 1e-3,
            record_every: None,
        }
    }
}

impl SimulationConfig {
    pub fn settings(&self, duration: f64) -> SimSettings {
        SimSettings {
            dt: self.dt,
            control_period: self.control_period,
            duration,
        }
    }

    pub fn record_every(&self, duration: f64) -> usize {
        self.record_every
            .unwrap_or_else(|| (duration / 100.0).ceil().max(1.0) as usize)
            .max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoveConfig {
    /// Target pose (deg).
    pub to_deg: Vec2,
    /// Move duration (s).
    pub duration: f64,
    /// Rest at the target after arrival (s).
    #[serde(default)]
    pub hold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub start_deg: Vec2,
    pub moves: Vec<MoveConfig>,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            start_deg: [-90.0, 0.0],
            moves: vec![
                MoveConfig { to_deg: [0.0, 90.0], duration: 1.1, hold: 0.5 },
                MoveConfig { to_deg: [-90.0, 0.0], duration: 1.1, hold: 0.5 },
            ],
        }
    }
}

impl ReferenceConfig {
    pub fn trajectory(&self) -> Result<JointTrajectory<2>> {
        let moves: Vec<_> = self.moves.iter().map(|m| (jv_deg(m.to_deg), m.duration, m.hold)).collect();
        JointTrajectory::from_waypoints(jv_deg(self.start_deg), &moves)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub variant: ControllerSpec,
    /// Proportional gains (N·m/rad).
    pub kp: Vec2,
    /// Derivative gains (N·m·s/rad).
    pub kd: Vec2,
    /// Observer gains (1/s).
    pub observer_gain: Vec2,
    pub observer_scheme: ObserverScheme,
    pub inverse_scheme: InverseScheme,
    pub torque_derivatives: TorqueDerivatives,
    pub motor_acceleration: MotorAcceleration,
    pub feedforward_friction: FeedforwardFriction,
    /// Torque stencil spacing as a fraction of the control period.
    pub stencil_fraction: f64,
    /// Friction model assumed by the controller and observer; defaults to the
    /// plant's.
    pub model_friction: Option<[FrictionParams; 2]>,
    /// Motor inertias assumed by the controller and observer; defaults to the
    /// plant's.
    pub model_motor_inertia: Option<Vec2>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            variant: ControllerSpec::ControlI(ControlIVariant::Full),
            kp: [1.3, 1.3],
            kd: [0.43, 0.43],
            observer_gain: [100.0, 100.0],
            observer_scheme: ObserverScheme::default(),
            inverse_scheme: InverseScheme::default(),
            torque_derivatives: TorqueDerivatives::default(),
            motor_acceleration: MotorAcceleration::default(),
            feedforward_friction: FeedforwardFriction::default(),
            stencil_fraction: 0.1,
            model_friction: None,
            model_motor_inertia: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreeFallConfig {
    /// Initial pose, links and motors aligned (deg).
    pub initial_pose_deg: Vec2,
    pub duration: f64,
    /// Creep is measured from this time to the end of the run (s).
    pub creep_from: f64,
    /// Velocity below which the arm counts as settled (rad/s).
    pub settle_velocity: f64,
}

impl Default for FreeFallConfig {
    fn default() -> Self {
        Self {
            initial_pose_deg: [0.0, 0.0],
            duration: 1000.0,
            creep_from: 5.0,
            settle_velocity: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub duration: f64,
    /// Window over which the terminal error is averaged (s).
    pub terminal_window: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            duration: 4.0,
            terminal_window: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesConfig {
    /// Friction sweep range (rad/s).
    pub velocity_range: Vec2,
    pub velocity_points: usize,
    /// Amplitude of the cyclic torsion sweep (deg).
    pub torsion_amplitude: f64,
    pub cycles: usize,
    pub points_per_cycle: usize,
}

impl Default for CurvesConfig {
    fn default() -> Self {
        Self {
            velocity_range: [-10.0, 10.0],
            velocity_points: 2001,
            torsion_amplitude: 0.25,
            cycles: 2,
            points_per_cycle: 4000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RootLocusConfig {
    pub kp_min: f64,
    pub kp_max: f64,
    pub points: usize,
    /// Joint whose parameters are linearized (1-based).
    pub joint: usize,
    /// Decoupled link inertia (kg m²); defaults to `h11` at the outstretched
    /// pose.
    pub link_inertia: Option<f64>,
}

impl Default for RootLocusConfig {
    fn default() -> Self {
        Self {
            kp_min: 0.1,
            kp_max: 100.0,
            points: 200,
            joint: 1,
            link_inertia: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.plant_params()?.validate()?;
        self.controller_setup()?.observer.validate()?;
        GainSet::<2> { kp: jv(self.controller.kp), kd: jv(self.controller.kd) }.validate()?;
        if !(self.controller.stencil_fraction > 0.0 && self.controller.stencil_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "stencil_fraction must lie in (0, 1], got {}",
                self.controller.stencil_fraction
            )));
        }
        self.reference.trajectory()?;
        self.simulation.settings(self.tracking.duration).substeps()?;
        self.simulation.settings(self.free_fall.duration).substeps()?;
        let rl = &self.root_locus;
        if !(rl.kp_min > 0.0 && rl.kp_max >= rl.kp_min && rl.kp_max.is_finite() && rl.points >= 1) {
            return Err(Error::Config("root locus grid needs 0 < kp_min <= kp_max and at least one point".into()));
        }
        if !(1..=2).contains(&rl.joint) {
            return Err(Error::Config(format!("root locus joint must be 1 or 2, got {}", rl.joint)));
        }
        self.linear_model()?;
        let c = &self.curves;
        if c.velocity_points < 2 || c.points_per_cycle < 4 || c.cycles < 1 || !(c.torsion_amplitude > 0.0) {
            return Err(Error::Config("curve sweeps need at least 2 velocity points, 4 points per cycle, one cycle and a positive amplitude".into()));
        }
        Ok(())
    }

    pub fn arm(&self) -> Result<TwoLinkArm> {
        TwoLinkArm::new(self.plant.arm)
    }

    pub fn plant_params(&self) -> Result<PlantParams<TwoLinkArm, 2>> {
        let p = PlantParams {
            arm: self.arm()?,
            motor_inertia: jv(self.plant.motor_inertia),
            friction: self.plant.friction,
            hysteresis: self.plant.hysteresis,
            joint_damping: jv(self.plant.joint_damping),
            encoder_bits: self.plant.encoder_bits,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn drive_model(&self) -> DriveModel<2> {
        DriveModel {
            motor_inertia: jv(self.controller.model_motor_inertia.unwrap_or(self.plant.motor_inertia)),
            friction: self.controller.model_friction.unwrap_or(self.plant.friction),
        }
    }

    pub fn controller_setup(&self) -> Result<ControllerSetup<2>> {
        let c = &self.controller;
        Ok(ControllerSetup {
            spec: c.variant,
            gains: GainSet { kp: jv(c.kp), kd: jv(c.kd) },
            observer: ObserverGains { l: jv(c.observer_gain), scheme: c.observer_scheme },
            drive: self.drive_model(),
            inverse_scheme: c.inverse_scheme,
            transform: TransformOptions {
                inverse_scheme: c.inverse_scheme,
                torque_derivatives: c.torque_derivatives,
                motor_acceleration: c.motor_acceleration,
                feedforward_friction: c.feedforward_friction,
                stencil_step: c.stencil_fraction * self.simulation.control_period,
            },
        })
    }

    /// Decoupled linear model of the root-locus joint: stiffness `k1`
    /// converted to N·m/rad, viscous friction as motor damping.
    pub fn linear_model(&self) -> Result<LinearJointModel> {
        let i = self.root_locus.joint - 1;
        let h_hat = match self.root_locus.link_inertia {
            Some(h) => h,
            None => self.arm()?.inertia_matrix(&JointVector::<2>::zeros())[(i, i)],
        };
        let m = LinearJointModel {
            h_hat,
            j: self.plant.motor_inertia[i],
            b: self.plant.friction[i].b,
            k: self.plant.hysteresis[i].k1 * 180.0 / std::f64::consts::PI,
            l: self.controller.observer_gain[i],
        };
        m.validate()?;
        Ok(m)
    }

    /// Links and motors at rest in the given pose (deg), virgin hysteresis.
    pub fn rest_state(pose_deg: Vec2) -> PlantState<2> {
        PlantState::at_rest(jv_deg(pose_deg))
    }
}
