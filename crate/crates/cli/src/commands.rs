use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use polaris_core::acceptance;
use polaris_core::config::load_config;
use polaris_core::diagnostics::{blowup_indicator, total_mass};
use polaris_core::geometry::Geometry;
use polaris_core::io::write_snapshot;
use polaris_core::steady::{fixed_point_steady, spherical_steady_state, FixedPointOptions};
use polaris_core::stepper::run as integrate;
use polaris_core::{Error, RunConfig, Termination};

use crate::output::{create_dir, snapshot_name, write_text, RunSink, FINAL_SNAPSHOT, SUMMARY_FILE};

#[derive(Debug)]
pub enum Failure {
    /// Exit code 1.
    Scenario(String),
    /// Exit code 2.
    Config(String),
}

fn config_err(e: Error) -> Failure {
    Failure::Config(e.to_string())
}

fn scenario_err(e: Error) -> Failure {
    Failure::Scenario(e.to_string())
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    load_config(path).map_err(config_err)
}

/// Result of one time integration, for printing.
struct RunReport {
    summary: String,
    failed: bool,
}

pub fn run(config: &Path, t_end: Option<f64>, out_dir: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg = load(config)?;
    if let Some(t) = t_end {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Failure::Config(format!("--t-end must be finite and non-negative, got {t}")));
        }
        cfg.t_end = t;
    }
    if let Some(dir) = out_dir {
        cfg.output_dir = dir;
    }
    let report = run_instance(&cfg)?;
    print!("{}", report.summary);
    if report.failed {
        Err(Failure::Scenario("solver failure".into()))
    } else {
        Ok(())
    }
}

fn run_instance(cfg: &RunConfig) -> Result<RunReport, Failure> {
    let mesh = cfg.geometry.build().map_err(config_err)?;
    let init = cfg.initial_state(&mesh).map_err(config_err)?;
    let dir = &cfg.output_dir;
    create_dir(dir).map_err(config_err)?;

    if cfg.t_end == 0.0 {
        write_snapshot(&init, &mesh, &cfg.params, &dir.join(snapshot_name(0))).map_err(scenario_err)?;
        let summary = format!("scenario: {}\nt_end: 0\nwrote initial snapshot only\n", cfg.scenario);
        return Ok(RunReport { summary, failed: false });
    }

    let mut sink = RunSink::new(&mesh, &cfg.params, dir, &cfg.diagnostics.p_values, cfg.diagnostics.snapshot_every).map_err(scenario_err)?;
    let outcome = integrate(&mesh, &cfg.params, &cfg.stepper, &init, cfg.t_end, &cfg.diagnostics.recording(), &mut sink);
    let rows = sink.finish().map_err(scenario_err)?;
    let outcome = match outcome {
        Ok(o) => o,
        Err(e @ (Error::Config(_) | Error::LengthMismatch { .. })) => return Err(config_err(e)),
        Err(e) => return Err(scenario_err(e)),
    };
    write_snapshot(&outcome.state, &mesh, &cfg.params, &dir.join(FINAL_SNAPSHOT)).map_err(scenario_err)?;

    let mut s = String::new();
    let _ = writeln!(s, "scenario: {}", cfg.scenario);
    let _ = writeln!(s, "termination: {}", outcome.termination.as_str());
    let _ = writeln!(s, "t_final: {:.16e}", outcome.state.t);
    let _ = writeln!(s, "steps: {}", outcome.steps);
    let _ = writeln!(s, "rejected: {}", outcome.rejected);
    let _ = writeln!(s, "limiter_count: {}", outcome.limiter_count);
    let _ = writeln!(s, "rows: {}", outcome.rows_recorded);
    let m0 = total_mass(&mesh, &init);
    let m1 = total_mass(&mesh, &outcome.state);
    let _ = writeln!(s, "mass_initial: {m0:.16e}");
    let _ = writeln!(s, "mass_final: {m1:.16e}");
    if let Some(msg) = &outcome.message {
        let _ = writeln!(s, "message: {msg}");
    }
    match blowup_indicator(&rows) {
        Ok(r) => {
            let _ = writeln!(s, "{}", r.render().trim_end());
        }
        Err(e) => {
            let _ = writeln!(s, "blowup_indicator: unavailable ({e})");
        }
    }
    write_text(&dir.join(SUMMARY_FILE), &s).map_err(scenario_err)?;
    Ok(RunReport {
        summary: s,
        failed: outcome.termination == Termination::SolverFailure,
    })
}

fn out_dir_or(cfg: &RunConfig, out_dir: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = out_dir.unwrap_or_else(|| cfg.output_dir.clone());
    create_dir(&dir).map_err(config_err)?;
    Ok(dir)
}

pub fn steady(config: &Path, mu: f64, out_dir: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load(config)?;
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Failure::Config(format!("--mu must be finite and non-negative, got {mu}")));
    }
    let mesh = cfg.geometry.build().map_err(config_err)?;
    let dir = out_dir_or(&cfg, out_dir)?;
    let st = fixed_point_steady(&mesh, &cfg.params, mu, FixedPointOptions::default()).map_err(|e| match e {
        Error::Config(_) => config_err(e),
        e => scenario_err(e),
    })?;
    let summary = st.summary(&mesh);
    write_text(&dir.join("steady_summary.txt"), &summary).map_err(scenario_err)?;
    write_snapshot(&st.to_state(), &mesh, &cfg.params, &dir.join("steady_snapshot.txt")).map_err(scenario_err)?;
    print!("{summary}");
    if st.converged {
        Ok(())
    } else {
        Err(Failure::Scenario(format!("fixed point did not converge in {} iterations", st.iterations)))
    }
}

pub fn steady_spherical(config: &Path, mass: f64, out_dir: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load(config)?;
    let Geometry::RadialBall { radius, n } = cfg.geometry else {
        return Err(Failure::Config("steady-spherical needs a radial_ball geometry".into()));
    };
    if !(mass.is_finite() && mass >= 0.0) {
        return Err(Failure::Config(format!("--mass must be finite and non-negative, got {mass}")));
    }
    let mesh = cfg.geometry.build().map_err(config_err)?;
    let dir = out_dir_or(&cfg, out_dir)?;
    let sph = spherical_steady_state(&cfg.params, radius, mass, n).map_err(|e| match e {
        Error::Config(_) => config_err(e),
        e => scenario_err(e),
    })?;

    let mut s = String::new();
    let _ = writeln!(s, "mass: {mass:.16e}");
    let _ = writeln!(s, "u0: {:.16e}", sph.profile.u0);
    let _ = writeln!(s, "c0: {:.16e}", sph.profile.c0);
    let _ = writeln!(s, "v_boundary: {:.16e}", sph.profile.v_boundary);
    let roots: Vec<String> = sph.roots.iter().map(|r| format!("{r:.16e}")).collect();
    let _ = writeln!(s, "roots: [{}]", roots.join(", "));
    let _ = writeln!(s, "bracket: [{:.6e}, {:.6e}]", sph.bracket.0, sph.bracket.1);
    let _ = writeln!(s, "quadrature_intervals: {}", sph.quadrature_intervals);
    s.push_str(&sph.state.summary(&mesh));
    write_text(&dir.join("spherical_summary.txt"), &s).map_err(scenario_err)?;
    write_snapshot(&sph.state.to_state(), &mesh, &cfg.params, &dir.join("spherical_snapshot.txt")).map_err(scenario_err)?;
    print!("{s}");
    Ok(())
}

fn thread_cap() -> Result<Option<usize>, Failure> {
    match std::env::var("POLARIS_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Config(format!("POLARIS_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

pub fn sweep(config: &Path, param: &str, values: &[String], out_dir: Option<PathBuf>) -> Result<(), Failure> {
    let base = load(config)?;
    if values.is_empty() {
        return Err(Failure::Config("--values is empty".into()));
    }
    let root = out_dir.unwrap_or_else(|| base.output_dir.clone());
    let mut instances = Vec::with_capacity(values.len());
    for value in values {
        let value = value.trim();
        let mut cfg = base.with_override(param, value).map_err(config_err)?;
        let leaf = param.rsplit('.').next().unwrap_or(param);
        cfg.output_dir = root.join(format!("{leaf}={value}"));
        cfg.scenario = format!("{} [{leaf}={value}]", base.scenario);
        instances.push((value.to_string(), cfg));
    }

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Failure::Scenario(e.to_string()))?;
    let results: Vec<Result<RunReport, Failure>> = pool.install(|| instances.par_iter().map(|(_, cfg)| run_instance(cfg)).collect());

    let mut any_failed = false;
    let mut config_failure = None;
    for ((value, cfg), result) in instances.iter().zip(results) {
        match result {
            Ok(r) => {
                let term = r.summary.lines().find_map(|l| l.strip_prefix("termination: ")).unwrap_or("reached_t_end");
                println!("{param}={value}: {term} -> {}", cfg.output_dir.display());
                any_failed |= r.failed;
            }
            Err(Failure::Scenario(msg)) => {
                println!("{param}={value}: error: {msg}");
                any_failed = true;
            }
            Err(Failure::Config(msg)) => {
                println!("{param}={value}: configuration error: {msg}");
                config_failure.get_or_insert(msg);
            }
        }
    }
    if let Some(msg) = config_failure {
        return Err(Failure::Config(msg));
    }
    if any_failed {
        Err(Failure::Scenario("one or more sweep instances failed".into()))
    } else {
        Ok(())
    }
}

pub fn verify(only: &[u32]) -> Result<(), Failure> {
    let results: Vec<_> = if only.is_empty() {
        acceptance::run_all(|r| println!("{r}"))
    } else {
        let mut out = Vec::new();
        for &id in only {
            let r = acceptance::run_criterion(id).ok_or_else(|| Failure::Config(format!("no criterion {id}")))?;
            println!("{r}");
            out.push(r);
        }
        out
    };
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{}/{} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Scenario(format!("{failed} criteria failed")))
    }
}
