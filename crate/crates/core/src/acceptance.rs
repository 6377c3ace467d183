//! Built-in acceptance checks with pinned tolerances. Each check runs a small
//! scenario end to end and reports one pass/fail line.

use std::fmt;

use crate::config::builtin_scenario;
use crate::diagnostics::{blowup_indicator, DiagnosticsRow, DiagnosticsSink, GROWTH_THRESHOLD};
use crate::elliptic::solve_c;
use crate::error::Result;
use crate::geometry::{build_disk_mesh, build_radial_ball_mesh, Geometry, Mesh};
use crate::model::{ExchangeLaw, Parameters, State};
use crate::steady::{fixed_point_steady, fixed_point_steady_from, spherical_steady_state, FixedPointOptions};
use crate::stepper::{run, step, Recording, RunOutcome, StepperConfig, Termination};

/// `u0` of the spherical steady state at `M = 1`, default parameters,
/// `R = 1`, from an independent high-resolution quadrature.
pub const SPHERICAL_U0_AT_UNIT_MASS: f64 = 0.0598559123430325;

pub const MASS_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = -1e-12;
pub const ELLIPTIC_MIN_ORDER: f64 = 1.8;
pub const ELLIPTIC_FINEST_ERROR: f64 = 5e-4;
pub const STEADY_DRIFT_TOL: f64 = 1e-3;
pub const SMALL_DATA_SLACK: f64 = 2.0;
pub const MASS_IDENTITY_TOL: f64 = 1e-8;
pub const TWO_BY_TWO_TOL: f64 = 1e-12;
pub const RELAXATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} [{}] {}: {}", self.id, self.name, self.detail)
    }
}

fn result(id: u32, name: &'static str, outcome: Result<(bool, String)>) -> CriterionResult {
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult { id, name, passed, detail }
}

pub type Criterion = (u32, &'static str, fn() -> Result<(bool, String)>);

pub const CRITERIA: &[Criterion] = &[
    (1, "mass conservation", mass_conservation),
    (2, "positivity", positivity),
    (3, "elliptic analytic reproduction", elliptic_reproduction),
    (4, "spherical steady state", spherical_steady),
    (5, "small-data boundedness", small_data),
    (6, "regularized global existence", regularized_existence),
    (7, "steady mass identity", steady_mass_identity),
    (8, "beta = 0 relaxation", beta_zero_relaxation),
    (9, "blow-up monitor consistency", blowup_monitor),
];

pub fn run_criterion(id: u32) -> Option<CriterionResult> {
    CRITERIA.iter().find(|c| c.0 == id).map(|&(id, name, f)| result(id, name, f()))
}

/// Runs every criterion in order, calling `report` as each finishes.
pub fn run_all(mut report: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .map(|&(id, name, f)| {
            let r = result(id, name, f());
            report(&r);
            r
        })
        .collect()
}

/// Keeps every row plus the smallest `V`, `u`, `c` value seen in any
/// recorded state.
struct Tracker {
    rows: Vec<DiagnosticsRow>,
    min: f64,
}

impl Tracker {
    fn new() -> Self {
        Tracker {
            rows: Vec::new(),
            min: f64::INFINITY,
        }
    }
}

impl DiagnosticsSink for Tracker {
    fn record(&mut self, row: &DiagnosticsRow, state: &State) {
        self.rows.push(row.clone());
        let m = state.v.iter().chain(&state.u).chain(&state.c).fold(f64::INFINITY, |a, &b| a.min(b));
        self.min = self.min.min(m);
    }
}

fn conservation_run(exchange: ExchangeLaw) -> Result<(RunOutcome, Tracker)> {
    let mut cfg = builtin_scenario("small-data").unwrap();
    cfg.params.exchange = exchange;
    if let crate::config::InitialCondition::Gaussian { normalize_q2, .. } = &mut cfg.initial {
        *normalize_q2 = None;
    }
    cfg.stepper = StepperConfig {
        dt_init: 5e-3,
        dt_max: 5e-3,
        ..Default::default()
    };
    let mesh = cfg.geometry.build()?;
    let init = cfg.initial_state(&mesh)?;
    let mut tracker = Tracker::new();
    let out = run(&mesh, &cfg.params, &cfg.stepper, &init, 5.0, &Recording::default(), &mut tracker)?;
    Ok((out, tracker))
}

fn conservation_runs() -> Result<Vec<(&'static str, RunOutcome, Tracker)>> {
    let mut runs = Vec::new();
    for (label, law) in [("linear", ExchangeLaw::Linear), ("truncated m=1", ExchangeLaw::Truncated { m: 1.0 })] {
        let (out, tracker) = conservation_run(law)?;
        runs.push((label, out, tracker));
    }
    Ok(runs)
}

fn mass_conservation() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, out, tr) in conservation_runs()? {
        let m0 = tr.rows[0].mass;
        let drift = tr.rows.iter().map(|r| (r.mass - m0).abs() / m0).fold(0.0, f64::max);
        let pass = out.termination == Termination::ReachedTEnd && out.steps >= 1000 && drift <= MASS_TOL;
        ok &= pass;
        parts.push(format!("{label}: {} steps, max drift {drift:.2e}", out.steps));
    }
    Ok((ok, format!("{} (tol {MASS_TOL:e})", parts.join("; "))))
}

fn positivity() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, out, tr) in conservation_runs()? {
        let pass = out.termination == Termination::ReachedTEnd && tr.min >= POSITIVITY_TOL;
        ok &= pass;
        parts.push(format!("{label}: min {:.3e}", tr.min));
    }
    Ok((ok, format!("{} (floor {POSITIVITY_TOL:e})", parts.join("; "))))
}

fn sinh_profile(r: f64, alpha: f64, beta: f64, u0: f64, radius: f64) -> f64 {
    let s = alpha.sqrt();
    let c0 = beta * u0 / ((s * radius).cosh() / radius - (s * radius).sinh() / (s * radius * radius));
    c0 * (s * r).sinh() / (s * r)
}

fn elliptic_reproduction() -> Result<(bool, String)> {
    let p = Parameters::default();
    let mut errs = Vec::new();
    for n in [16, 32, 64, 128] {
        let mesh = build_radial_ball_mesh(1.0, n)?;
        let c = solve_c(&mesh, &p, &[1.0], 1e-12)?;
        let e = mesh
            .cells()
            .iter()
            .zip(&c)
            .map(|(k, c)| {
                let exact = sinh_profile(k.radius, p.alpha, p.beta, 1.0, 1.0);
                ((c - exact) / exact).abs()
            })
            .fold(0.0, f64::max);
        errs.push(e);
    }
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let min_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    let finest = *errs.last().unwrap();
    let ok = min_order >= ELLIPTIC_MIN_ORDER && finest <= ELLIPTIC_FINEST_ERROR;
    Ok((
        ok,
        format!("errors {}, min order {min_order:.3}, finest {finest:.2e}", fmt_list(&errs)),
    ))
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn weighted_rel_l2(mesh: &Mesh, a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = mesh.cells().iter().zip(a.iter().zip(b)).map(|(k, (x, y))| k.measure * (x - y).powi(2)).sum();
    let den: f64 = mesh.cells().iter().zip(b).map(|(k, y)| k.measure * y * y).sum();
    (num / den).sqrt()
}

fn spherical_steady() -> Result<(bool, String)> {
    let cfg = builtin_scenario("steady-validate").unwrap();
    let Geometry::RadialBall { radius, n } = cfg.geometry else {
        unreachable!("steady-validate runs on a radial ball")
    };
    let p = cfg.params;
    let sph = spherical_steady_state(&p, radius, 1.0, n)?;
    let u0 = sph.profile.u0;
    let u0_err = (u0 - SPHERICAL_U0_AT_UNIT_MASS).abs() / SPHERICAL_U0_AT_UNIT_MASS;

    let mesh = cfg.geometry.build()?;
    let mut init = sph.state.to_state();
    init.c = solve_c(&mesh, &p, &init.u, cfg.stepper.linear_tol)?;
    let out = run(&mesh, &p, &cfg.stepper, &init, cfg.t_end, &Recording::default(), &mut crate::diagnostics::NullSink)?;
    let drift = weighted_rel_l2(&mesh, &out.state.v, &sph.state.v);

    let fp = fixed_point_steady(&mesh, &p, sph.state.mu, FixedPointOptions::default())?;
    let fp_v = weighted_rel_l2(&mesh, &fp.v, &sph.state.v);
    let fp_c = weighted_rel_l2(&mesh, &fp.c, &sph.state.c);

    let ok = u0_err <= 1e-10
        && out.termination == Termination::ReachedTEnd
        && drift <= STEADY_DRIFT_TOL
        && fp.converged
        && fp_v <= STEADY_DRIFT_TOL
        && fp_c <= STEADY_DRIFT_TOL;
    Ok((
        ok,
        format!(
            "u0 = {u0:.16} (rel err {u0_err:.1e}), run drift {drift:.2e} to t = {}, fixed point V {fp_v:.2e} c {fp_c:.2e} in {} iterations (tol {STEADY_DRIFT_TOL:e})",
            cfg.t_end, fp.iterations
        ),
    ))
}

fn scenario_run(name: &str) -> Result<(RunOutcome, Vec<DiagnosticsRow>)> {
    let cfg = builtin_scenario(name).unwrap();
    let mesh = cfg.geometry.build()?;
    let init = cfg.initial_state(&mesh)?;
    let mut rows = Vec::new();
    let out = run(&mesh, &cfg.params, &cfg.stepper, &init, cfg.t_end, &cfg.diagnostics.recording(), &mut rows)?;
    Ok((out, rows))
}

fn small_data() -> Result<(bool, String)> {
    let (out, rows) = scenario_run("small-data")?;
    let q0 = rows[0].q_value(2.0).unwrap();
    let sup = rows.iter().filter_map(|r| r.q_value(2.0)).fold(0.0, f64::max);
    let ok = out.termination == Termination::ReachedTEnd && sup <= SMALL_DATA_SLACK * q0;
    Ok((
        ok,
        format!(
            "Q2(0) = {q0:.3e}, sup Q2 = {sup:.3e} (ratio {:.3}, bound {SMALL_DATA_SLACK}), {} after {} steps",
            sup / q0,
            out.termination.as_str(),
            out.steps
        ),
    ))
}

fn all_finite(rows: &[DiagnosticsRow]) -> bool {
    rows.iter().all(|r| {
        [r.mass, r.l4_v, r.l4_u, r.l2_u, r.min_v, r.max_v, r.min_u, r.max_u, r.trace_l1_v]
            .iter()
            .chain(r.q.iter().map(|(_, q)| q))
            .all(|x| x.is_finite())
    })
}

fn regularized_existence() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["reg-flux", "reg-source"] {
        let (out, rows) = scenario_run(name)?;
        let pass = out.termination == Termination::ReachedTEnd && all_finite(&rows);
        ok &= pass;
        let max_v = rows.iter().map(|r| r.max_v).fold(0.0, f64::max);
        parts.push(format!(
            "{name}: {} at t = {} after {} steps, max V {max_v:.3e}",
            out.termination.as_str(),
            out.state.t,
            out.steps
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn steady_mass_identity() -> Result<(bool, String)> {
    let mesh = build_disk_mesh(1.0, 16, 32)?;
    let p = Parameters::default();
    let start: Vec<f64> = mesh.surface_nodes().iter().map(|s| 1.0 + 0.5 * s.angle.cos()).collect();
    let mut converged = 0;
    let mut worst: f64 = 0.0;
    let mus = [1e-3, 1e-2, 1e-1];
    for mu in mus {
        let s = fixed_point_steady_from(&mesh, &p, mu, &start, FixedPointOptions::default())?;
        if s.converged {
            converged += 1;
            let rel = s.mass_identity_defect(&mesh, &p)?.abs() / (p.k2 / p.k1 * mu);
            worst = worst.max(rel);
        }
    }
    let ok = converged > 0 && worst <= MASS_IDENTITY_TOL;
    Ok((
        ok,
        format!("{converged}/{} converged, worst relative defect {worst:.2e} (tol {MASS_IDENTITY_TOL:e})", mus.len()),
    ))
}

fn beta_zero_relaxation() -> Result<(bool, String)> {
    // one implicit step against the closed-form 2x2 backward Euler solution
    let p = Parameters {
        beta: 0.0,
        k1: 2.0,
        k2: 0.5,
        ..Default::default()
    };
    let mesh = build_radial_ball_mesh(1.0, 1)?;
    let (b, g) = (mesh.bulk_measure(), mesh.surface_measure());
    let (v0, u0, dt) = (1.3, 0.2, 0.1);
    let init = State {
        t: 0.0,
        v: vec![v0],
        u: vec![u0],
        c: vec![0.0],
    };
    let next = step(&mesh, &p, &StepperConfig::default(), &init, dt)?;
    // (b + dt g k1) V - dt g k2 u = b v0 ;  -dt k1 V + (1 + dt k2) u = u0
    let (a11, a12, a21, a22) = (b + dt * g * p.k1, -dt * g * p.k2, -dt * p.k1, 1.0 + dt * p.k2);
    let det = a11 * a22 - a12 * a21;
    let v_exact = (b * v0 * a22 - a12 * u0) / det;
    let u_exact = (a11 * u0 - a21 * b * v0) / det;
    let step_err = (next.v[0] - v_exact).abs().max((next.u[0] - u_exact).abs());

    // long run of the beta-zero scenario
    let (out, rows) = scenario_run("beta-zero")?;
    let cfg = builtin_scenario("beta-zero").unwrap();
    let s = &out.state;
    let levels: Vec<f64> = s.v.iter().map(|v| cfg.params.k1 * v).chain(s.u.iter().map(|u| cfg.params.k2 * u)).collect();
    let hi = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = levels.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = (hi - lo) / hi;
    let c_zero = s.c.iter().all(|&c| c == 0.0);

    let ok = step_err <= TWO_BY_TWO_TOL && out.termination == Termination::ReachedTEnd && spread <= RELAXATION_TOL && c_zero;
    Ok((
        ok,
        format!(
            "one-step error {step_err:.1e} (tol {TWO_BY_TWO_TOL:e}); relative spread of k1 V, k2 u after t = {}: {spread:.2e} (tol {RELAXATION_TOL:e}), {} rows, c identically zero: {c_zero}",
            s.t,
            rows.len()
        ),
    ))
}

fn synthetic_row(t: f64, l4_v: f64, l4_u: f64) -> DiagnosticsRow {
    DiagnosticsRow {
        t,
        dt: 0.0,
        mass: 1.0,
        q: vec![(4.0, l4_v.powi(4) + l4_u.powi(4))],
        l4_v,
        l4_u,
        l2_u: l4_u,
        min_v: 0.0,
        max_v: l4_v,
        min_u: 0.0,
        max_u: l4_u,
        trace_l1_v: l4_v,
        limiter_count: 0,
    }
}

/// Window membership by direct interval test, independent of the library's
/// closed form.
fn window_by_scan(t: f64, t0: f64, t_final: f64) -> Option<u32> {
    let span = t_final - t0;
    (0..64).find(|&k| {
        let lo = t_final - span / 2f64.powi(k);
        let hi = t_final - span / 2f64.powi(k + 1);
        t >= lo && t < hi
    }).map(|k| k as u32)
}

fn blowup_monitor() -> Result<(bool, String)> {
    // (onset of V, onset of u) as fractions of [0, 1]; None = no growth
    let cases: [(Option<f64>, Option<f64>); 7] = [
        (Some(0.9), Some(0.93)),
        (Some(0.2), Some(0.9)),
        (Some(0.55), Some(0.6)),
        (Some(0.45), Some(0.55)),
        (Some(0.97), None),
        (None, None),
        (Some(0.1), Some(0.1)),
    ];
    let mut mismatches = 0;
    for (onset_v, onset_u) in cases {
        let times: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
        let level = |onset: Option<f64>, t: f64| match onset {
            Some(t_on) if t >= t_on => 2.0 * GROWTH_THRESHOLD,
            _ => 1.0,
        };
        let history: Vec<DiagnosticsRow> = times.iter().map(|&t| synthetic_row(t, level(onset_v, t), level(onset_u, t))).collect();
        let report = blowup_indicator(&history)?;
        let first_at = |onset: Option<f64>| onset.and_then(|o| times.iter().cloned().find(|&t| t >= o));
        let expected = match (first_at(onset_v), first_at(onset_u)) {
            (Some(a), Some(b)) => window_by_scan(a, 0.0, 1.0) == window_by_scan(b, 0.0, 1.0),
            _ => false,
        };
        if report.concurrent != expected {
            mismatches += 1;
        }
    }

    let (out, rows) = scenario_run("large-data")?;
    let report = blowup_indicator(&rows)?;
    let rendered = report.render();
    let ok = mismatches == 0 && !rendered.is_empty();
    Ok((
        ok,
        format!(
            "{} synthetic histories, {mismatches} mismatches; large-data: {} at t = {:.4}, growth V {:.3e} u {:.3e}, concurrent {}",
            cases.len(),
            out.termination.as_str(),
            out.state.t,
            report.growth_v,
            report.growth_u,
            report.concurrent
        ),
    ))
}
