//! Sampled-data closed loop: the plant is integrated with fixed RK4 steps
//! while the controller, observer and virtual sensor run at the control
//! period with zero-order hold on the actuator torque.

use std::io::Write;

use crate::controllers::{ControllerSpec, GainSet, ReferenceSource, ReferenceTransformer, TransformOptions};
use crate::error::{Error, Result};
use crate::nonlinear::InverseScheme;
use crate::observer::{observer_step, virtual_sensor_step, DriveModel, ObserverGains, ObserverState};
use crate::plant::{quantize_encoder, PlantParams, PlantState};
use crate::rigid_dynamics::{JointVector, ManipulatorModel};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimSettings {
    /// Integrator step (s).
    pub dt: f64,
    /// Controller sample period (s); an integer multiple of `dt`.
    pub control_period: f64,
    /// Simulated time span (s). The last controller sample lies at or
    /// beyond it.
    pub duration: f64,
}

impl SimSettings {
    /// Integrator steps per control period.
    pub fn substeps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidTimeStep(self.dt));
        }
        if !(self.control_period > 0.0 && self.control_period.is_finite()) {
            return Err(Error::InvalidTimeStep(self.control_period));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!("duration must be non-negative, got {}", self.duration)));
        }
        let ratio = self.control_period / self.dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
            return Err(Error::Config(format!(
                "control period {} is not an integer multiple of the integrator step {}",
                self.control_period, self.dt
            )));
        }
        Ok(n as usize)
    }

    /// Number of controller samples recorded, including `t = 0`.
    pub fn samples(&self) -> usize {
        (self.duration / self.control_period - 1e-9).ceil().max(0.0) as usize + 1
    }
}

/// Everything the discrete controller needs besides the reference.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerSetup<const N: usize> {
    pub spec: ControllerSpec,
    pub gains: GainSet<N>,
    pub observer: ObserverGains<N>,
    /// Motor-side model used by the feed-forward and the observer.
    pub drive: DriveModel<N>,
    /// Inverse-hysteresis scheme of the virtual sensor.
    pub inverse_scheme: InverseScheme,
    pub transform: TransformOptions,
}

/// One controller-rate sample of the closed loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Record<const N: usize> {
    pub t: f64,
    pub q: JointVector<N>,
    pub qd: JointVector<N>,
    pub theta: JointVector<N>,
    pub thetad: JointVector<N>,
    /// Torsion (rad).
    pub delta: JointVector<N>,
    /// Joint torque (N·m).
    pub tau: JointVector<N>,
    /// Actuator torque applied over the following control period (N·m).
    pub u: JointVector<N>,
    /// Observer residual (N·m).
    pub r: JointVector<N>,
    /// Virtual-sensor torsion (rad).
    pub delta_est: JointVector<N>,
    /// Link reference at `t`, zero when the controller uses none.
    pub q_ref: JointVector<N>,
}

/// Runs the closed loop and hands every controller sample to `sink`.
/// Returns the final plant state.
pub fn simulate<M, S, F, const N: usize>(
    plant: &PlantParams<M, N>,
    initial: PlantState<N>,
    reference: &S,
    setup: &ControllerSetup<N>,
    settings: &SimSettings,
    mut sink: F,
) -> Result<PlantState<N>>
where
    M: ManipulatorModel<N>,
    S: ReferenceSource<N> + ?Sized,
    F: FnMut(&Record<N>),
{
    plant.validate()?;
    setup.observer.validate()?;
    if matches!(setup.spec, ControllerSpec::ControlI(_) | ControllerSpec::ControlII(_)) {
        setup.gains.validate()?;
    }
    if !initial.is_finite() {
        return Err(Error::NonFinite("initial state".into()));
    }
    let substeps = settings.substeps()?;
    let samples = settings.samples();
    let tc = settings.control_period;
    let dt = tc / substeps as f64;

    let mut transformer = ReferenceTransformer::<N>::new(setup.transform)?;
    let mut state = initial;
    let mut obs = ObserverState::new(&state.thetad, &setup.drive);
    let mut r = JointVector::<N>::zeros();
    let mut delta_est = JointVector::<N>::zeros();
    let mut u = JointVector::<N>::zeros();

    for k in 0..samples {
        let t = k as f64 * tc;
        let theta_meas = state.theta.map(|th| quantize_encoder(th, plant.encoder_bits));
        let thetad_meas = state.thetad;

        if k > 0 {
            let (next, res) = observer_step(&obs, &u, &thetad_meas, tc, &setup.observer, &setup.drive)?;
            let (next, d) = virtual_sensor_step(&next, &res, tc, &plant.hysteresis, setup.inverse_scheme)?;
            obs = next;
            r = res;
            delta_est = d;
        }

        // The torque is held over [t, t + tc); the planned reference is
        // evaluated mid-interval, which cancels the half-sample delay of the
        // hold to first order.
        let sample = if setup.spec.needs_reference() {
            Some(transformer.sample(t + 0.5 * tc, tc, &plant.arm, reference, &plant.hysteresis, &setup.drive)?)
        } else {
            None
        };
        u = setup.spec.output(&theta_meas, &thetad_meas, sample.as_ref(), &delta_est, &setup.gains);

        sink(&Record {
            t,
            q: state.q,
            qd: state.qd,
            theta: state.theta,
            thetad: state.thetad,
            delta: state.torsion(),
            tau: plant.joint_torque(&state),
            u,
            r,
            delta_est,
            q_ref: if setup.spec.needs_reference() {
                reference.chain(t)[0]
            } else {
                JointVector::zeros()
            },
        });

        if k + 1 < samples {
            for _ in 0..substeps {
                state = plant.step(&state, &u, dt).map_err(|e| match e {
                    Error::NonFinite(_) => Error::Unstable { t },
                    other => other,
                })?;
            }
            if diverged(&state) {
                return Err(Error::Unstable { t: t + tc });
            }
        }
    }
    Ok(state)
}

/// Torsion (rad) and speed (rad/s) beyond which a run is treated as numerically
/// diverged. Both are orders of magnitude outside anything the joint model
/// describes, and catching them early keeps the inverse models from chasing
/// runaway torques.
pub const DIVERGENCE_TORSION: f64 = 1.0;
pub const DIVERGENCE_SPEED: f64 = 1e3;

fn diverged<const N: usize>(s: &PlantState<N>) -> bool {
    s.torsion().iter().any(|d| d.abs() > DIVERGENCE_TORSION)
        || s.qd.iter().chain(s.thetad.iter()).any(|v| v.abs() > DIVERGENCE_SPEED)
}

/// Time-indexed record of a run at a uniform sample period.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimTrace<const N: usize> {
    pub records: Vec<Record<N>>,
}

impl<const N: usize> SimTrace<N> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV header for an `N`-joint trace.
    pub fn header() -> Vec<String> {
        let mut cols = vec!["t".to_string()];
        for name in ["q", "qd", "th", "thd", "d", "tau", "u", "r", "dest"] {
            cols.extend((1..=N).map(|i| format!("{name}{i}")));
        }
        cols
    }

    /// Writes the trace as CSV with full round-trip precision.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::header())?;
        let mut row = Vec::with_capacity(1 + 9 * N);
        for rec in &self.records {
            row.clear();
            row.push(fmt_float(rec.t));
            for v in [&rec.q, &rec.qd, &rec.theta, &rec.thetad, &rec.delta, &rec.tau, &rec.u, &rec.r, &rec.delta_est] {
                row.extend(v.iter().map(|&x| fmt_float(x)));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scientific notation with 16 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.15e}")
}

/// Simulates and keeps every `record_every`-th controller sample.
pub fn simulate_trace<M, S, const N: usize>(
    plant: &PlantParams<M, N>,
    initial: PlantState<N>,
    reference: &S,
    setup: &ControllerSetup<N>,
    settings: &SimSettings,
    record_every: usize,
) -> Result<SimTrace<N>>
where
    M: ManipulatorModel<N>,
    S: ReferenceSource<N> + ?Sized,
{
    let every = record_every.max(1);
    let mut trace = SimTrace::default();
    let mut k = 0usize;
    simulate(plant, initial, reference, setup, settings, |rec| {
        if k % every == 0 {
            trace.records.push(*rec);
        }
        k += 1;
    })?;
    Ok(trace)
}
