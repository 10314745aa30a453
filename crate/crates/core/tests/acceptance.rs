//! Acceptance suite. Prints one `criterion N: PASS|FAIL (...)` line per
//! criterion. Failures are reported without failing the process, so that a
//! workspace test run still reaches the remaining test targets; set
//! `FLEXJOINT_ACCEPTANCE_STRICT=1` to exit non-zero when any criterion fails.
//!
//! Run with `cargo test --release -p flexjoint --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use flexjoint::config::ScenarioConfig;
use flexjoint::controllers::{ControllerSpec, ReferenceTransformer, TransformOptions};
use flexjoint::harness::{
    branch_zero_distance, hysteresis_loop, max_real_off_origin, run_free_fall, tracking_run, TrackingSummary,
};
use flexjoint::linear::{critical_branch, log_grid, root_locus, LocusForm};
use flexjoint::nonlinear::{
    hysteresis_rate, hysteresis_torque, FrictionParams, HysteresisParams, HysteresisState, InverseHysteresis,
    InverseScheme,
};
use flexjoint::observer::{observer_step, DriveModel, ObserverGains, ObserverScheme, ObserverState};
use flexjoint::plant::{PlantParams, PlantState};
use flexjoint::rigid_dynamics::{ArmGeometry, CartesianPoint, JointVector, ManipulatorModel, TwoLinkArm};

type V1 = JointVector<1>;
type V2 = JointVector<2>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------- 1

/// Max deviation of the residual from `10 (1 - e^{-100 t})` over 0.1 s for a
/// frictionless motor loaded by 10 N·m, sampled every `dt`.
fn observer_step_error(scheme: ObserverScheme, dt: f64) -> f64 {
    let (tau, l, j) = (10.0, 100.0, 1.0);
    let drive = DriveModel { motor_inertia: V1::new(j), friction: [FrictionParams::frictionless()] };
    let gains = ObserverGains { l: V1::new(l), scheme };
    let mut obs = ObserverState::new(&V1::zeros(), &drive);
    let n = (0.1 / dt).round() as usize;
    let mut worst: f64 = 0.0;
    for k in 1..=n {
        let t = k as f64 * dt;
        // u = 0: p(t) = -τ t.
        let v = V1::new(-tau * t / j);
        let (next, r) = observer_step(&obs, &V1::zeros(), &v, dt, &gains, &drive).unwrap();
        obs = next;
        worst = worst.max((r[0] - tau * (1.0 - (-l * t).exp())).abs());
    }
    worst
}

fn criterion_1() -> Outcome {
    let cfg = ScenarioConfig::default();
    let dt = cfg.simulation.control_period;
    let exact = observer_step_error(ObserverScheme::ExactLag, dt);
    let trap = observer_step_error(ObserverScheme::Trapezoidal, dt);
    let trap_fine = observer_step_error(ObserverScheme::Trapezoidal, 1e-4);
    outcome(
        exact <= 1e-3,
        format!(
            "max |r - 10(1-e^-100t)| = {exact:.2e} N·m at the {dt} s controller period (default exact-lag scheme), \
             limit 1e-3; trapezoidal scheme {trap:.2e} at {dt} s, {trap_fine:.2e} at 1e-4 s"
        ),
    )
}

// ---------------------------------------------------------------- 2

/// Triangular torsion wave `0 → A → -A → A` at `rate` deg/s, memory integrated
/// by RK4 in time with step `dt`. Returns `(Δ, τ)` at every step.
fn timed_loop(p: &HysteresisParams, amplitude: f64, rate: f64, dt: f64) -> Vec<(f64, f64)> {
    let mut state = HysteresisState::virgin();
    let mut delta = 0.0;
    let mut out = vec![(0.0, 0.0)];
    for (target, v) in [(amplitude, rate), (-amplitude, -rate), (amplitude, rate)] {
        let start = delta;
        let steps = ((target - delta) / v / dt).round() as usize;
        for step in 1..=steps {
            let f = |s: &HysteresisState| hysteresis_rate(s, v, p);
            let add = |s: &HysteresisState, k: &HysteresisState, h: f64| HysteresisState { x: s.x + h * k.x, x_int: s.x_int + h * k.x_int };
            let k1 = f(&state);
            let k2 = f(&add(&state, &k1, 0.5 * dt));
            let k3 = f(&add(&state, &k2, 0.5 * dt));
            let k4 = f(&add(&state, &k3, dt));
            state.x += dt / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x);
            state.x_int += dt / 6.0 * (k1.x_int + 2.0 * k2.x_int + 2.0 * k3.x_int + k4.x_int);
            delta = start + v * dt * step as f64;
            out.push((delta, hysteresis_torque(delta, &state, p)));
        }
        delta = target;
    }
    out
}

/// Max τ gap between the 1 and 10 deg/s loops, both integrated with step
/// `dt`, compared where the two sample grids coincide.
fn rate_gap(p: &HysteresisParams, dt: f64) -> (f64, usize) {
    let slow = timed_loop(p, 0.25, 1.0, dt);
    let fast = timed_loop(p, 0.25, 10.0, dt);
    let mut worst: f64 = 0.0;
    for (k, f) in fast.iter().enumerate() {
        let s = slow[10 * k];
        assert!((s.0 - f.0).abs() < 1e-12);
        worst = worst.max((s.1 - f.1).abs());
    }
    (worst, fast.len())
}

fn criterion_2() -> Outcome {
    // The fast run takes ten times larger torsion steps; 1e-5 s keeps them
    // at 1e-4 deg.
    let p = HysteresisParams::default();
    let (gap, points) = rate_gap(&p, 1e-5);
    let (coarse, _) = rate_gap(&p, 1e-4);
    outcome(
        gap <= 1e-6,
        format!(
            "max τ deviation between 1 and 10 deg/s loops = {gap:.2e} N·m over {points} points at dt 1e-5 s, limit 1e-6; \
             {coarse:.2e} at dt 1e-4 s (integration error of the coarser torsion steps)"
        ),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let p = HysteresisParams::default();
    let (amplitude, freq, dt, n) = (0.3, 0.5, 1e-4, 100_000);
    let mut forward = HysteresisState::virgin();
    let mut inverse = InverseHysteresis::default();
    let mut prev = 0.0;
    let mut sq = 0.0;
    for k in 1..=n {
        let d = amplitude * (std::f64::consts::TAU * freq * k as f64 * dt).sin();
        forward = p.advance(&forward, d - prev);
        prev = d;
        let tau = hysteresis_torque(d, &forward, &p);
        let est = inverse.step(tau, dt, &p, InverseScheme::default()).unwrap();
        sq += (est - d).powi(2);
    }
    let rms = (sq / n as f64).sqrt();
    outcome(
        rms <= 0.02 * amplitude,
        format!("round-trip RMS error {:.3e} deg = {:.3}% of the 0.3 deg amplitude, limit 2%", rms, 100.0 * rms / amplitude),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let cfg = ScenarioConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let s = run_free_fall(&cfg, dir.path()).unwrap();
    let equilibrium = s.settling_time.iter().all(Option::is_some) && s.residual_torsion_deg.iter().all(|d| d.abs() > 0.0);
    let creep_ok = [1.0, 9.0].iter().zip(&s.creep_deg).map(|(target, c)| *c >= target / 3.0 && *c <= target * 3.0).collect::<Vec<_>>();
    let settle_ok = s.settling_time.iter().map(|t| t.is_some_and(|t| (100.0..=1000.0).contains(&t))).collect::<Vec<_>>();
    let mark = |b: bool| if b { "ok" } else { "out of band" };
    let fmt_t = |t: Option<f64>| t.map_or("not settled".to_string(), |t| format!("{t:.1} s"));
    outcome(
        equilibrium && creep_ok.iter().all(|&b| b) && settle_ok.iter().all(|&b| b),
        format!(
            "(a) residual torsion [{:.4}, {:.4}] deg, equilibrium {}; \
             (b) creep after 5 s [{:.3} deg {}, {:.3} deg {}] against [1, 9] deg within a factor of 3; \
             (c) settling [{} {}, {} {}] against 100..1000 s",
            s.residual_torsion_deg[0],
            s.residual_torsion_deg[1],
            if equilibrium { "reached" } else { "not reached" },
            s.creep_deg[0],
            mark(creep_ok[0]),
            s.creep_deg[1],
            mark(creep_ok[1]),
            fmt_t(s.settling_time[0]),
            mark(settle_ok[0]),
            fmt_t(s.settling_time[1]),
            mark(settle_ok[1]),
        ),
    )
}

// ---------------------------------------------------------------- 5, 6

fn tracking(variant: &str) -> TrackingSummary {
    let mut cfg = ScenarioConfig::default();
    cfg.controller.variant = variant.parse::<ControllerSpec>().unwrap();
    tracking_run(&cfg).unwrap().0
}

fn criterion_5(runs: &[(&str, TrackingSummary)]) -> Outcome {
    let get = |name: &str| &runs.iter().find(|(n, _)| *n == name).unwrap().1.max_error_deg;
    let checks = [
        ("i-full < i-ff-pd", get("i-full"), get("i-ff-pd")),
        ("ii-ff-pd-vs < ii-ff-pd", get("ii-ff-pd-vs"), get("ii-ff-pd")),
        ("i-ff < ii-ff", get("i-ff"), get("ii-ff")),
    ];
    let mut pass = true;
    let parts: Vec<String> = checks
        .iter()
        .map(|(label, a, b)| {
            let ok: Vec<bool> = (0..2).map(|i| a[i] < b[i]).collect();
            pass &= ok.iter().all(|&o| o);
            format!(
                "{label}: joint 1 {:.4} vs {:.4} {}, joint 2 {:.4} vs {:.4} {}",
                a[0],
                b[0],
                if ok[0] { "ok" } else { "violated" },
                a[1],
                b[1],
                if ok[1] { "ok" } else { "violated" }
            )
        })
        .collect();
    outcome(pass, format!("max |q_r - q| (deg); {}", parts.join("; ")))
}

/// Torsion left at zero torque on the unloading branch of a loop of the given
/// amplitude, after one conditioning cycle (deg).
fn lost_motion(p: &HysteresisParams, amplitude_deg: f64) -> f64 {
    let n = 4000;
    let path = hysteresis_loop(p, amplitude_deg, 2, n);
    // Unloading from +A (k = 5n/4) to -A (k = 7n/4).
    path[5 * n / 4..=7 * n / 4]
        .windows(2)
        .find(|w| w[0].1 > 0.0 && w[1].1 <= 0.0)
        .map(|w| (w[0].0 - w[0].1 * (w[1].0 - w[0].0) / (w[1].1 - w[0].1)).abs())
        .unwrap_or(0.0)
}

fn criterion_6(runs: &[(&str, TrackingSummary)]) -> Outcome {
    let cfg = ScenarioConfig::default();
    let full = &runs.iter().find(|(n, _)| *n == "i-full").unwrap().1;
    let hyst = cfg.plant_params().unwrap().hysteresis;
    let lm: Vec<f64> = (0..2).map(|i| lost_motion(&hyst[i], full.peak_torsion_deg[i])).collect();
    let ok: Vec<bool> = (0..2).map(|i| full.max_error_deg[i] <= 2.0 * lm[i]).collect();
    outcome(
        ok.iter().all(|&b| b),
        format!(
            "i-full max error [{:.4}, {:.4}] deg against 2 x lost motion [{:.4}, {:.4}] deg \
             (lost motion of a loop at the run's peak torsion [{:.4}, {:.4}] deg)",
            full.max_error_deg[0],
            full.max_error_deg[1],
            2.0 * lm[0],
            2.0 * lm[1],
            full.peak_torsion_deg[0],
            full.peak_torsion_deg[1],
        ),
    )
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let cfg = ScenarioConfig::default();
    let arm = cfg.arm().unwrap();
    let traj = cfg.reference.trajectory().unwrap();
    let drive = cfg.drive_model();
    let k1 = HysteresisParams::default().k1;
    let hyst = [HysteresisParams::linear(k1); 2];
    let k = k1 * 180.0 / std::f64::consts::PI;
    let mut tr = ReferenceTransformer::<2>::new(TransformOptions::default()).unwrap();
    let dt = cfg.simulation.control_period;
    let mut worst: f64 = 0.0;
    let n = (3.4 / dt).round() as usize;
    for step in 0..=n {
        let s = tr.sample(step as f64 * dt, dt, &arm, &traj, &hyst, &drive).unwrap();
        let tau = arm.rigid_inverse_dynamics(&s.q[0], &s.q[1], &s.q[2]);
        worst = worst.max((s.theta - (s.q[0] + tau / k)).amax());
    }
    outcome(worst <= 1e-9, format!("max |θ_r - (q_r + τ_r/K)| = {worst:.2e} rad over {} samples, limit 1e-9", n + 1))
}

// ---------------------------------------------------------------- 8

fn conservative_plant() -> PlantParams<TwoLinkArm, 2> {
    let cfg = ScenarioConfig::default();
    let mut plant = cfg.plant_params().unwrap();
    plant.friction = [FrictionParams::frictionless(); 2];
    plant.hysteresis = [HysteresisParams::linear(HysteresisParams::default().k1); 2];
    plant.joint_damping = V2::zeros();
    plant
}

fn integrate(plant: &PlantParams<TwoLinkArm, 2>, start: PlantState<2>, dt: f64, t_end: f64, mut visit: impl FnMut(&PlantState<2>)) -> PlantState<2> {
    let n = (t_end / dt).round() as usize;
    let mut s = start;
    for _ in 0..n {
        s = plant.step(&s, &V2::zeros(), dt).unwrap();
        visit(&s);
    }
    s
}

fn state_distance(a: &PlantState<2>, b: &PlantState<2>) -> f64 {
    (a.q - b.q).amax().max((a.theta - b.theta).amax())
}

fn criterion_8() -> Outcome {
    let plant = conservative_plant();
    // Released from the outstretched pose: the links fall under gravity and
    // the joints ring.
    let start = PlantState::at_rest(V2::zeros());
    let e0 = plant.mechanical_energy(&start);
    let mut drift: f64 = 0.0;
    let mut peak_kinetic: f64 = 0.0;
    integrate(&plant, start, 1e-4, 10.0, |s| {
        drift = drift.max((plant.mechanical_energy(s) - e0).abs());
        let at_rest = PlantState { qd: V2::zeros(), thetad: V2::zeros(), ..*s };
        peak_kinetic = peak_kinetic.max(plant.mechanical_energy(s) - plant.mechanical_energy(&at_rest));
    });
    let scale = e0.abs().max(peak_kinetic);
    let rel = drift / scale;

    let t_end = 1.0;
    let reference = integrate(&plant, start, 1e-5, t_end, |_| {});
    let dts = [4e-4, 2e-4, 1e-4, 5e-5];
    let errs: Vec<f64> = dts.iter().map(|&dt| state_distance(&integrate(&plant, start, dt, t_end, |_| {}), &reference)).collect();
    // Least-squares slope of log(err) against log(dt).
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    outcome(
        rel <= 1e-6 && slope >= 3.5,
        format!(
            "energy drift {rel:.2e} of the motion energy scale {scale:.3} J over 10 s, limit 1e-6; \
             RK4 order fit {slope:.2} from errors [{:.2e}, {:.2e}, {:.2e}, {:.2e}] rad, limit 3.5",
            errs[0], errs[1], errs[2], errs[3]
        ),
    )
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let cfg = ScenarioConfig::default();
    let model = cfg.linear_model().unwrap();
    let grid = log_grid(0.1, 100.0, cfg.root_locus.points);
    let locus = root_locus(&model, &grid, LocusForm::Derived).unwrap();
    let max_re = max_real_off_origin(&locus);
    let origin = locus.iter().map(|p| p.roots.iter().filter(|z| z.norm() == 0.0).count()).max().unwrap_or(0);
    let Some(branch) = critical_branch(&locus) else {
        return outcome(false, "no complex branch found".into());
    };
    let dist = branch_zero_distance(&model, &locus, branch);
    let monotone = dist.windows(2).all(|w| w[1] < w[0]);
    outcome(
        max_re < 0.0 && monotone,
        format!(
            "{} gains in [0.1, 100]: max Re of non-origin roots {max_re:.4} (plus {origin} structural root at s = 0); \
             critical-branch distance to ±i·sqrt(K/Ĥ) {:.4} → {:.4}, strictly decreasing: {monotone}",
            grid.len(),
            dist[0],
            dist[dist.len() - 1],
        ),
    )
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Outcome {
    let g = ArmGeometry::default();
    let arm = TwoLinkArm::new(g).unwrap();
    let mut worst: f64 = 0.0;
    let mut check = |a: f64, b: f64| worst = worst.max((a - b).abs());
    let half_pi = std::f64::consts::FRAC_PI_2;
    let gv = |q: V2| arm.gravity_vector(&q);
    for (q, expected) in [
        (V2::new(0.0, 0.0), V2::new(98.0, 24.5)),
        (V2::new(-half_pi, 0.0), V2::new(0.0, 0.0)),
        (V2::new(0.0, std::f64::consts::PI), V2::new(49.0, -24.5)),
    ] {
        let v = gv(q);
        check(v[0], expected[0]);
        check(v[1], expected[1]);
    }
    let c = arm.coriolis_vector(&V2::new(0.0, half_pi), &V2::new(1.0, 0.0));
    check(c[0], 0.0);
    check(c[1], 1.25);
    for q in [V2::new(0.0, 0.0), V2::new(0.7, half_pi)] {
        let h = arm.inertia_matrix(&q);
        check(h[(0, 1)], g.m * g.l * g.l * (0.25 + 0.5 * q[1].cos()) + g.i_link);
        check(h[(1, 1)], 0.25 * g.m * g.l * g.l + g.i_link);
        check(h[(0, 0)], g.m * g.l * g.l * (1.5 + q[1].cos()) + 2.0 * g.i_link);
    }
    for (q, (x, z)) in [(V2::new(0.0, 0.0), (1.0, 0.0)), (V2::new(-half_pi, 0.0), (0.0, -1.0)), (V2::new(0.0, half_pi), (0.5, 0.5))] {
        let CartesianPoint { x: px, z: pz } = arm.forward_kinematics(&q);
        check(px, x);
        check(pz, z);
    }

    let mut grad_worst: f64 = 0.0;
    let h = 1e-6;
    for a in 0..8 {
        for b in 0..8 {
            let q = V2::new(-3.0 + 0.8 * a as f64, -3.0 + 0.8 * b as f64);
            let gq = arm.gravity_vector(&q);
            for i in 0..2 {
                let mut e = V2::zeros();
                e[i] = h;
                let fd = (arm.potential_energy(&(q + e)) - arm.potential_energy(&(q - e))) / (2.0 * h);
                grad_worst = grad_worst.max((fd - gq[i]).abs() / gq.norm().max(1.0));
            }
        }
    }
    outcome(
        worst <= 1e-12 && grad_worst <= 1e-4,
        format!(
            "max deviation from tabulated gravity, Coriolis, inertia and kinematics values {worst:.1e}, limit 1e-12; \
             G vs potential gradient {grad_worst:.1e} relative on 64 poses, limit 1e-4"
        ),
    )
}

fn main() -> ExitCode {
    let timed = |f: &dyn Fn() -> Outcome| {
        let t0 = Instant::now();
        let o = f();
        (o, t0.elapsed().as_secs_f64())
    };
    let variants = ["i-ff", "i-ff-pd", "i-full", "ii-ff", "ii-ff-pd", "ii-ff-pd-vs"];
    let results: Vec<(usize, Outcome, f64)> = std::thread::scope(|scope| {
        let free_fall = scope.spawn(|| timed(&criterion_4));
        let tracks: Vec<_> = variants.iter().map(|v| scope.spawn(move || (*v, tracking(v)))).collect();
        let quick: Vec<(usize, &dyn Fn() -> Outcome)> = vec![
            (1, &criterion_1),
            (2, &criterion_2),
            (3, &criterion_3),
            (7, &criterion_7),
            (8, &criterion_8),
            (9, &criterion_9),
            (10, &criterion_10),
        ];
        let mut out: Vec<(usize, Outcome, f64)> = quick.into_iter().map(|(n, f)| {
            let (o, s) = timed(f);
            (n, o, s)
        }).collect();
        let t0 = Instant::now();
        let runs: Vec<(&str, TrackingSummary)> = tracks.into_iter().map(|h| h.join().unwrap()).collect();
        let track_secs = t0.elapsed().as_secs_f64();
        out.push((5, criterion_5(&runs), track_secs));
        out.push((6, criterion_6(&runs), track_secs));
        let (o, s) = free_fall.join().unwrap();
        out.push((4, o, s));
        out
    });
    let mut results = results;
    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (n, o, secs) in &results {
        println!("criterion {n}: {} ({}) [{secs:.1} s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} of {} criteria pass, {failed} FAIL", results.len() - failed, results.len());
    let strict = std::env::var("FLEXJOINT_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
