//! Experiment runners behind the command-line tool. Each run resolves a
//! [`ScenarioConfig`], writes its CSV artifacts into an output directory
//! together with `manifest.toml` (the fully resolved configuration), and
//! returns a summary.

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config::ScenarioConfig;
use crate::controllers::{ControllerSpec, ReferenceSource, StaticPose};
use crate::error::{Error, Result};
use crate::linear::{critical_branch, log_grid, root_locus, LinearJointModel, LocusForm, LocusPoint, C64};
use crate::nonlinear::{hysteresis_torque, HysteresisParams, HysteresisState};
use crate::rigid_dynamics::JointVector;
use crate::sim::{fmt_float, simulate, Record, SimTrace};
use crate::units::rad_to_deg;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Experiment {
    FreeFall,
    Track,
    Curves,
    RootLocus,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [Experiment::FreeFall, Experiment::Track, Experiment::Curves, Experiment::RootLocus];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::FreeFall => "free-fall",
            Experiment::Track => "track",
            Experiment::Curves => "curves",
            Experiment::RootLocus => "rootlocus",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|e| e.name() == key || (key == "root-locus" && *e == Experiment::RootLocus))
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}', expected free-fall, track, curves or rootlocus")))
    }
}

/// Overrides applied on top of a configuration file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub control_period: Option<f64>,
    /// Duration of the selected experiment (s).
    pub duration: Option<f64>,
    pub controller: Option<ControllerSpec>,
    pub kp: Option<[f64; 2]>,
    pub kd: Option<[f64; 2]>,
}

impl Overrides {
    /// Returns the resolved, validated configuration.
    pub fn apply(&self, experiment: Experiment, cfg: &ScenarioConfig) -> Result<ScenarioConfig> {
        let mut c = cfg.clone();
        if let Some(dt) = self.dt {
            c.simulation.dt = dt;
        }
        if let Some(tc) = self.control_period {
            c.simulation.control_period = tc;
        }
        if let Some(d) = self.duration {
            match experiment {
                Experiment::FreeFall => c.free_fall.duration = d,
                Experiment::Track => c.tracking.duration = d,
                Experiment::Curves | Experiment::RootLocus => {
                    return Err(Error::Config(format!("--duration does not apply to {experiment}")))
                }
            }
        }
        if let Some(v) = self.controller {
            c.controller.variant = v;
        }
        if let Some(kp) = self.kp {
            c.controller.kp = kp;
        }
        if let Some(kd) = self.kd {
            c.controller.kd = kd;
        }
        c.validate()?;
        Ok(c)
    }
}

fn create_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

/// Writes the resolved configuration; running it again reproduces the run.
pub fn write_manifest(cfg: &ScenarioConfig, out: &Path) -> Result<PathBuf> {
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, cfg.to_toml_string()?)?;
    Ok(path)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn write_trace(trace: &SimTrace<2>, path: &Path) -> Result<()> {
    trace.write_csv(BufWriter::new(File::create(path)?))
}

fn opt_float(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt_float)
}

// ---------------------------------------------------------------- free fall

#[derive(Clone, Debug, PartialEq)]
pub struct FreeFallSummary {
    /// Motor displacement between `creep_from` and the end of the run (deg).
    pub creep_deg: [f64; 2],
    /// Start of the final interval in which link and motor speeds stay below
    /// the settling threshold; `None` if still moving at the end.
    pub settling_time: [Option<f64>; 2],
    pub residual_torsion_deg: [f64; 2],
    pub final_theta_deg: [f64; 2],
    pub final_q_deg: [f64; 2],
    pub duration: f64,
    pub samples: usize,
}

impl FreeFallSummary {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(["joint", "creep_deg", "settling_time_s", "residual_torsion_deg", "final_theta_deg", "final_q_deg"])?;
        for i in 0..2 {
            w.write_record([
                (i + 1).to_string(),
                fmt_float(self.creep_deg[i]),
                opt_float(self.settling_time[i]),
                fmt_float(self.residual_torsion_deg[i]),
                fmt_float(self.final_theta_deg[i]),
                fmt_float(self.final_q_deg[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Streaming reduction of a free-fall run.
#[derive(Clone, Debug)]
struct FreeFallAccumulator {
    creep_from: f64,
    threshold: f64,
    theta_at_creep: Option<JointVector<2>>,
    last_moving: [Option<f64>; 2],
    last: Option<Record<2>>,
    samples: usize,
}

impl FreeFallAccumulator {
    fn push(&mut self, rec: &Record<2>) {
        if self.theta_at_creep.is_none() && rec.t >= self.creep_from - 1e-12 {
            self.theta_at_creep = Some(rec.theta);
        }
        for i in 0..2 {
            if rec.qd[i].abs().max(rec.thetad[i].abs()) >= self.threshold {
                self.last_moving[i] = Some(rec.t);
            }
        }
        self.last = Some(*rec);
        self.samples += 1;
    }

    fn finish(self, control_period: f64) -> Result<FreeFallSummary> {
        let last = self.last.ok_or_else(|| Error::Config("free-fall run produced no samples".into()))?;
        let start = self.theta_at_creep.unwrap_or(last.theta);
        let mut s = FreeFallSummary {
            creep_deg: [0.0; 2],
            settling_time: [None; 2],
            residual_torsion_deg: [0.0; 2],
            final_theta_deg: [0.0; 2],
            final_q_deg: [0.0; 2],
            duration: last.t,
            samples: self.samples,
        };
        for i in 0..2 {
            s.creep_deg[i] = rad_to_deg(last.theta[i] - start[i]).abs();
            s.settling_time[i] = match self.last_moving[i] {
                None => Some(0.0),
                Some(t) if t < last.t => Some(t + control_period),
                Some(_) => None,
            };
            s.residual_torsion_deg[i] = rad_to_deg(last.delta[i]);
            s.final_theta_deg[i] = rad_to_deg(last.theta[i]);
            s.final_q_deg[i] = rad_to_deg(last.q[i]);
        }
        Ok(s)
    }
}

/// Unactuated release from the configured pose. Writes `trace.csv` and
/// `summary.csv`.
pub fn run_free_fall(cfg: &ScenarioConfig, out: &Path) -> Result<FreeFallSummary> {
    create_out_dir(out)?;
    write_manifest(cfg, out)?;
    let ff = &cfg.free_fall;
    let plant = cfg.plant_params()?;
    let mut setup = cfg.controller_setup()?;
    setup.spec = ControllerSpec::None;
    let settings = cfg.simulation.settings(ff.duration);
    let every = cfg.simulation.record_every(ff.duration);
    let initial = ScenarioConfig::rest_state(ff.initial_pose_deg);
    let reference = StaticPose(initial.q);

    let mut acc = FreeFallAccumulator {
        creep_from: ff.creep_from,
        threshold: ff.settle_velocity,
        theta_at_creep: None,
        last_moving: [None; 2],
        last: None,
        samples: 0,
    };
    let mut trace = SimTrace::default();
    simulate(&plant, initial, &reference, &setup, &settings, |rec| {
        if acc.samples % every == 0 {
            trace.records.push(*rec);
        }
        acc.push(rec);
    })?;
    let summary = acc.finish(settings.control_period)?;
    write_trace(&trace, &out.join("trace.csv"))?;
    summary.write_csv(&out.join("summary.csv"))?;
    Ok(summary)
}

// ----------------------------------------------------------------- tracking

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingSummary {
    pub controller: ControllerSpec,
    /// Maximum `|q_r - q|` over the motion window (deg).
    pub max_error_deg: [f64; 2],
    /// RMS of `q_r - q` over the motion window (deg).
    pub rms_error_deg: [f64; 2],
    /// Maximum `|q_r - q|` over the terminal window (deg).
    pub terminal_error_deg: [f64; 2],
    /// Peak `|Δ|` over the whole run (deg).
    pub peak_torsion_deg: [f64; 2],
    /// Maximum `|Δ̃ - Δ|` of the virtual sensor over the whole run (deg).
    pub max_vs_error_deg: [f64; 2],
    pub motion_end: f64,
    pub duration: f64,
}

impl TrackingSummary {
    pub fn csv_header() -> [&'static str; 8] {
        [
            "controller",
            "joint",
            "max_error_deg",
            "rms_error_deg",
            "terminal_error_deg",
            "peak_torsion_deg",
            "max_vs_error_deg",
            "motion_end_s",
        ]
    }

    pub fn csv_rows(&self) -> Vec<[String; 8]> {
        (0..2)
            .map(|i| {
                [
                    self.controller.name().to_string(),
                    (i + 1).to_string(),
                    fmt_float(self.max_error_deg[i]),
                    fmt_float(self.rms_error_deg[i]),
                    fmt_float(self.terminal_error_deg[i]),
                    fmt_float(self.peak_torsion_deg[i]),
                    fmt_float(self.max_vs_error_deg[i]),
                    fmt_float(self.motion_end),
                ]
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_tracking_table(std::slice::from_ref(self), path)
    }
}

/// One table for several tracking runs.
pub fn write_tracking_table(summaries: &[TrackingSummary], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(TrackingSummary::csv_header())?;
    for s in summaries {
        for row in s.csv_rows() {
            w.write_record(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// End of the planned motion including holds (s).
pub fn motion_end(cfg: &ScenarioConfig) -> f64 {
    cfg.reference.moves.iter().map(|m| m.duration + m.hold).sum()
}

/// Closed-loop run of the configured reference under the configured
/// controller, starting at rest on the first reference pose. Writes
/// `trace.csv`, `error.csv` (`t,qr1,qr2,e1,e2`, rad) and `summary.csv`.
pub fn run_tracking(cfg: &ScenarioConfig, out: &Path) -> Result<TrackingSummary> {
    create_out_dir(out)?;
    write_manifest(cfg, out)?;
    let (summary, trace) = tracking_run(cfg)?;
    write_trace(&trace, &out.join("trace.csv"))?;
    let mut w = csv_writer(&out.join("error.csv"))?;
    w.write_record(["t", "qr1", "qr2", "e1", "e2"])?;
    for r in &trace.records {
        let e = r.q_ref - r.q;
        w.write_record([r.t, r.q_ref[0], r.q_ref[1], e[0], e[1]].map(fmt_float))?;
    }
    w.flush()?;
    summary.write_csv(&out.join("summary.csv"))?;
    Ok(summary)
}

/// Runs a tracking experiment in memory and returns the summary and the
/// trace thinned by the configured `record_every`.
pub fn tracking_run(cfg: &ScenarioConfig) -> Result<(TrackingSummary, SimTrace<2>)> {
    let plant = cfg.plant_params()?;
    let setup = cfg.controller_setup()?;
    let reference = cfg.reference.trajectory()?;
    let duration = cfg.tracking.duration;
    let settings = cfg.simulation.settings(duration);
    let every = cfg.simulation.record_every(duration);
    let initial = ScenarioConfig::rest_state(cfg.reference.start_deg);
    let motion = motion_end(cfg).min(duration);
    let terminal_from = duration - cfg.tracking.terminal_window;

    let mut s = TrackingSummary {
        controller: setup.spec,
        max_error_deg: [0.0; 2],
        rms_error_deg: [0.0; 2],
        terminal_error_deg: [0.0; 2],
        peak_torsion_deg: [0.0; 2],
        max_vs_error_deg: [0.0; 2],
        motion_end: motion,
        duration,
    };
    let mut sq = [0.0; 2];
    let mut n_motion = 0usize;
    let mut k = 0usize;
    let mut trace = SimTrace::default();
    simulate(&plant, initial, &reference, &setup, &settings, |rec| {
        // The error is measured against the planned reference even for the
        // open-loop variant, whose record carries no reference.
        let e = reference.chain(rec.t)[0] - rec.q;
        let in_motion = rec.t <= motion + 1e-9;
        if in_motion {
            n_motion += 1;
        }
        for i in 0..2 {
            let ed = rad_to_deg(e[i]).abs();
            if in_motion {
                s.max_error_deg[i] = s.max_error_deg[i].max(ed);
                sq[i] += ed * ed;
            }
            if rec.t >= terminal_from - 1e-9 {
                s.terminal_error_deg[i] = s.terminal_error_deg[i].max(ed);
            }
            s.peak_torsion_deg[i] = s.peak_torsion_deg[i].max(rad_to_deg(rec.delta[i]).abs());
            s.max_vs_error_deg[i] = s.max_vs_error_deg[i].max(rad_to_deg(rec.delta_est[i] - rec.delta[i]).abs());
        }
        if k % every == 0 {
            let mut r = *rec;
            r.q_ref = reference.chain(rec.t)[0];
            trace.records.push(r);
        }
        k += 1;
    })?;
    for i in 0..2 {
        s.rms_error_deg[i] = (sq[i] / n_motion.max(1) as f64).sqrt();
    }
    Ok((s, trace))
}

// ------------------------------------------------------------------- curves

/// `(Δ, τ)` samples of the torsion sweep `Δ(k) = A sin(2π k / n)` applied
/// from the virgin state, `cycles · n + 1` points.
pub fn hysteresis_loop(
    p: &HysteresisParams,
    amplitude_deg: f64,
    cycles: usize,
    points_per_cycle: usize,
) -> Vec<(f64, f64)> {
    let n = points_per_cycle.max(1);
    let mut state = HysteresisState::virgin();
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(cycles * n + 1);
    for k in 0..=cycles * n {
        let delta = amplitude_deg * (std::f64::consts::TAU * k as f64 / n as f64).sin();
        state = p.advance(&state, delta - prev);
        prev = delta;
        out.push((delta, hysteresis_torque(delta, &state, p)));
    }
    out
}

/// Work `∮ τ dΔ` (N·m·deg) over a closed sample path, trapezoidal rule.
pub fn loop_work(path: &[(f64, f64)]) -> f64 {
    path.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvesSummary {
    pub friction_at_zero: [f64; 2],
    /// `|τ|` mismatch between the ends of the last two cycles (N·m).
    pub loop_closure: [f64; 2],
    /// Work dissipated over the last cycle (N·m·deg).
    pub loop_work: [f64; 2],
}

/// Writes `friction.csv` (`thetad,f1,f2`, rad/s and N·m),
/// `hysteresis.csv` (`delta_deg,tau1,tau2`) and `summary.csv`.
pub fn run_curves(cfg: &ScenarioConfig, out: &Path) -> Result<CurvesSummary> {
    create_out_dir(out)?;
    write_manifest(cfg, out)?;
    let c = &cfg.curves;
    let fr = &cfg.plant.friction;

    let mut w = csv_writer(&out.join("friction.csv"))?;
    w.write_record(["thetad", "f1", "f2"])?;
    let [lo, hi] = c.velocity_range;
    for k in 0..c.velocity_points {
        let v = lo + (hi - lo) * k as f64 / (c.velocity_points - 1) as f64;
        w.write_record([v, fr[0].torque(v), fr[1].torque(v)].map(fmt_float))?;
    }
    w.flush()?;

    let loops: Vec<_> = cfg
        .plant
        .hysteresis
        .iter()
        .map(|p| hysteresis_loop(p, c.torsion_amplitude, c.cycles, c.points_per_cycle))
        .collect();
    let mut w = csv_writer(&out.join("hysteresis.csv"))?;
    w.write_record(["delta_deg", "tau1", "tau2"])?;
    for k in 0..loops[0].len() {
        w.write_record([loops[0][k].0, loops[0][k].1, loops[1][k].1].map(fmt_float))?;
    }
    w.flush()?;

    let n = c.points_per_cycle;
    let mut s = CurvesSummary {
        friction_at_zero: [fr[0].torque(0.0), fr[1].torque(0.0)],
        loop_closure: [0.0; 2],
        loop_work: [0.0; 2],
    };
    for (i, l) in loops.iter().enumerate() {
        let last = &l[l.len() - 1 - n..];
        s.loop_closure[i] = if c.cycles >= 2 { (last[n].1 - last[0].1).abs() } else { f64::NAN };
        s.loop_work[i] = loop_work(last);
    }
    let mut w = csv_writer(&out.join("summary.csv"))?;
    w.write_record(["joint", "friction_at_zero", "loop_closure", "loop_work"])?;
    for i in 0..2 {
        w.write_record([
            (i + 1).to_string(),
            fmt_float(s.friction_at_zero[i]),
            fmt_float(s.loop_closure[i]),
            fmt_float(s.loop_work[i]),
        ])?;
    }
    w.flush()?;
    Ok(s)
}

// --------------------------------------------------------------- root locus

#[derive(Clone, Debug, PartialEq)]
pub struct RootLocusSummary {
    pub model: LinearJointModel,
    pub points: usize,
    /// Largest real part among derived-form roots off the origin.
    pub derived_max_real: f64,
    /// Roots of the derived form that sit exactly at the origin at every
    /// gain (`Pm(0) Pl(0) = K²`).
    pub derived_origin_roots: usize,
    pub literal_max_real: f64,
    /// Distance of the least damped derived-form branch to the upper nominal
    /// zero, first and last grid point.
    pub critical_distance: (f64, f64),
    pub critical_distance_monotone: bool,
}

/// Largest real part of the roots that are not exactly at the origin.
pub fn max_real_off_origin(locus: &[LocusPoint]) -> f64 {
    locus
        .iter()
        .flat_map(|p| p.roots.iter())
        .filter(|z| z.norm() != 0.0)
        .fold(f64::NEG_INFINITY, |m, z| m.max(z.re))
}

/// Distance of branch `branch` to the nominal zero in the same half-plane.
pub fn branch_zero_distance(model: &LinearJointModel, locus: &[LocusPoint], branch: usize) -> Vec<f64> {
    let [up, down] = model.nominal_zeros();
    locus
        .iter()
        .map(|p| {
            let z: C64 = p.roots[branch];
            (z - if z.im >= 0.0 { up } else { down }).norm()
        })
        .collect()
}

pub fn write_locus_csv(locus: &[LocusPoint], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let n = locus.first().map_or(0, |p| p.roots.len());
    let mut header = vec!["Kp".to_string()];
    for i in 1..=n {
        header.push(format!("re{i}"));
        header.push(format!("im{i}"));
    }
    w.write_record(&header)?;
    for p in locus {
        let mut row = vec![fmt_float(p.kp)];
        for z in &p.roots {
            row.push(fmt_float(z.re));
            row.push(fmt_float(z.im));
        }
        // Lower-degree polynomials (degenerate gains) pad to the header.
        row.resize(header.len(), String::new());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Root loci of both characteristic polynomials over the configured
/// log-spaced gain grid. Writes `rootlocus_derived.csv`,
/// `rootlocus_literal.csv` and `summary.csv`.
pub fn run_rootlocus(cfg: &ScenarioConfig, out: &Path) -> Result<RootLocusSummary> {
    create_out_dir(out)?;
    write_manifest(cfg, out)?;
    let rl = &cfg.root_locus;
    let model = cfg.linear_model()?;
    let grid = log_grid(rl.kp_min, rl.kp_max, rl.points);
    let derived = root_locus(&model, &grid, LocusForm::Derived)?;
    let literal = root_locus(&model, &grid, LocusForm::Literal)?;
    write_locus_csv(&derived, &out.join("rootlocus_derived.csv"))?;
    write_locus_csv(&literal, &out.join("rootlocus_literal.csv"))?;

    let crit = critical_branch(&derived).ok_or_else(|| Error::RootFinding("no oscillatory branch in the locus".into()))?;
    let dist = branch_zero_distance(&model, &derived, crit);
    let s = RootLocusSummary {
        model,
        points: derived.len(),
        derived_max_real: max_real_off_origin(&derived),
        derived_origin_roots: derived[0].roots.iter().filter(|z| z.norm() == 0.0).count(),
        literal_max_real: max_real_off_origin(&literal),
        critical_distance: (dist[0], dist[dist.len() - 1]),
        critical_distance_monotone: dist.windows(2).all(|w| w[1] < w[0]),
    };
    let mut w = csv_writer(&out.join("summary.csv"))?;
    w.write_record(["quantity", "value"])?;
    for (k, v) in [
        ("points", s.points.to_string()),
        ("derived_max_real", fmt_float(s.derived_max_real)),
        ("derived_origin_roots", s.derived_origin_roots.to_string()),
        ("literal_max_real", fmt_float(s.literal_max_real)),
        ("critical_distance_first", fmt_float(s.critical_distance.0)),
        ("critical_distance_last", fmt_float(s.critical_distance.1)),
        ("critical_distance_monotone", s.critical_distance_monotone.to_string()),
    ] {
        w.write_record([k, v.as_str()])?;
    }
    w.flush()?;
    Ok(s)
}
