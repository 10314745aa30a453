//! `flexjoint <experiment> [--config <path>]... [options]`
//!
//! Runs one experiment per (config, controller) pair. A single run writes
//! straight into `--out`; several runs each get their own subdirectory and
//! are executed on a thread pool of `--jobs` workers.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use flexjoint::config::ScenarioConfig;
use flexjoint::controllers::ControllerSpec;
use flexjoint::harness::{
    run_curves, run_free_fall, run_rootlocus, run_tracking, write_tracking_table, Experiment, Overrides,
    TrackingSummary,
};
use rayon::prelude::*;

#[derive(Debug, Parser)]
#[command(name = "flexjoint", version, about = "Flexible-joint manipulator experiments")]
struct Cli {
    /// free-fall, track, curves or rootlocus.
    experiment: Experiment,

    /// Scenario file (TOML). Repeat to sweep several scenarios; omit for the
    /// built-in defaults.
    #[arg(long, short)]
    config: Vec<PathBuf>,

    #[arg(long, short, default_value = "out")]
    out: PathBuf,

    /// Controller variant, a comma-separated list, or `all` (tracking only).
    #[arg(long)]
    controller: Option<String>,

    /// Integrator step (s).
    #[arg(long)]
    dt: Option<f64>,

    /// Controller sample period (s).
    #[arg(long)]
    control_period: Option<f64>,

    /// Simulated time (s) of the free-fall or tracking run.
    #[arg(long)]
    duration: Option<f64>,

    /// Proportional gains, `kp1,kp2` (N·m/rad).
    #[arg(long, value_parser = parse_pair)]
    kp: Option<[f64; 2]>,

    /// Derivative gains, `kd1,kd2` (N·m·s/rad).
    #[arg(long, value_parser = parse_pair)]
    kd: Option<[f64; 2]>,

    /// Parallel workers for sweeps.
    #[arg(long, short, default_value_t = 1)]
    jobs: usize,
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v.as_slice() {
        [a] => Ok([*a, *a]),
        [a, b] => Ok([*a, *b]),
        _ => Err(format!("expected one or two comma-separated values, got '{s}'")),
    }
}

fn parse_controllers(arg: Option<&str>) -> Result<Vec<Option<ControllerSpec>>> {
    match arg {
        None => Ok(vec![None]),
        Some(s) if s.trim().eq_ignore_ascii_case("all") => Ok(ControllerSpec::ALL[1..].iter().copied().map(Some).collect()),
        Some(s) => s
            .split(',')
            .map(|c| Ok(Some(c.parse::<ControllerSpec>()?)))
            .collect(),
    }
}

struct Job {
    cfg: ScenarioConfig,
    out: PathBuf,
}

enum Outcome {
    Tracking(TrackingSummary),
    Other(String),
}

fn run_one(experiment: Experiment, job: &Job) -> Result<Outcome> {
    let out = &job.out;
    Ok(match experiment {
        Experiment::FreeFall => {
            let s = run_free_fall(&job.cfg, out)?;
            let mut text = String::new();
            for i in 0..2 {
                text += &format!(
                    "joint {}: creep {:.4} deg, settling {}, residual torsion {:.4} deg\n",
                    i + 1,
                    s.creep_deg[i],
                    s.settling_time[i].map_or("not reached".to_string(), |t| format!("{t:.3} s")),
                    s.residual_torsion_deg[i]
                );
            }
            Outcome::Other(text)
        }
        Experiment::Track => Outcome::Tracking(run_tracking(&job.cfg, out)?),
        Experiment::Curves => {
            let s = run_curves(&job.cfg, out)?;
            Outcome::Other(format!(
                "friction at rest {:?} N·m, loop closure {:?} N·m, loop work {:?} N·m·deg\n",
                s.friction_at_zero, s.loop_closure, s.loop_work
            ))
        }
        Experiment::RootLocus => {
            let s = run_rootlocus(&job.cfg, out)?;
            Outcome::Other(format!(
                "{} gains; derived form: max Re {:.6e} off the origin, {} root(s) at the origin; \
                 literal form: max Re {:.6e}; critical branch distance {:.4} -> {:.4} (monotone: {})\n",
                s.points,
                s.derived_max_real,
                s.derived_origin_roots,
                s.literal_max_real,
                s.critical_distance.0,
                s.critical_distance.1,
                s.critical_distance_monotone
            ))
        }
    })
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "config".into(), |s| s.to_string_lossy().into_owned())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let controllers = parse_controllers(cli.controller.as_deref())?;
    if controllers.len() > 1 && cli.experiment != Experiment::Track {
        bail!("a controller sweep only applies to the track experiment");
    }
    let configs: Vec<(Option<String>, ScenarioConfig)> = if cli.config.is_empty() {
        vec![(None, ScenarioConfig::default())]
    } else {
        cli.config
            .iter()
            .map(|p| {
                let cfg = ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))?;
                Ok((Some(stem(p)), cfg))
            })
            .collect::<Result<_>>()?
    };

    let mut jobs = Vec::new();
    let single = configs.len() * controllers.len() == 1;
    for (name, base) in &configs {
        for c in &controllers {
            let overrides = Overrides {
                dt: cli.dt,
                control_period: cli.control_period,
                duration: cli.duration,
                controller: *c,
                kp: cli.kp,
                kd: cli.kd,
            };
            let cfg = overrides.apply(cli.experiment, base)?;
            let out = if single {
                cli.out.clone()
            } else {
                let mut parts = Vec::new();
                if configs.len() > 1 {
                    parts.push(name.clone().unwrap_or_default());
                }
                if controllers.len() > 1 {
                    parts.push(cfg.controller.variant.name().to_string());
                }
                cli.out.join(parts.join("-"))
            };
            jobs.push(Job { cfg, out });
        }
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = jobs.iter().find(|j| !seen.insert(j.out.clone())) {
        bail!("two runs would write to {}; give the config files distinct names", dup.out.display());
    }

    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build()?;
    let results: Vec<Result<Outcome>> =
        pool.install(|| jobs.par_iter().map(|j| run_one(cli.experiment, j)).collect());

    let mut failed = 0;
    let mut tracking = Vec::new();
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(Outcome::Other(text)) => print!("[{}]\n{text}", job.out.display()),
            Ok(Outcome::Tracking(s)) => {
                println!("[{}]", job.out.display());
                for i in 0..2 {
                    println!(
                        "{} joint {}: max {:.5} deg, rms {:.5} deg, terminal {:.5} deg",
                        s.controller,
                        i + 1,
                        s.max_error_deg[i],
                        s.rms_error_deg[i],
                        s.terminal_error_deg[i]
                    );
                }
                tracking.push(s);
            }
            Err(e) => {
                failed += 1;
                eprintln!("[{}] failed: {e:#}", job.out.display());
            }
        }
    }
    if !single && !tracking.is_empty() {
        write_tracking_table(&tracking, &cli.out.join("summary.csv"))?;
    }
    if failed > 0 {
        bail!("{failed} of {} run(s) failed", jobs.len());
    }
    Ok(())
}
