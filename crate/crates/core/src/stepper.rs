//! First-order IMEX time stepping for the coupled `(V, u, c)` system.
//!
//! Each step solves for `c` from the old membrane state, then advances `V`
//! and `u` with Scharfetter–Gummel fluxes built from that frozen `c`.
//!
//! * Linear exchange: `V` and `u` are solved together in one implicit system
//!   with the exchange term implicit on both sides. The matrix is a
//!   column-diagonally-dominant Z-matrix whose column sums are `|K|/dt` and
//!   `|σ|/dt`, so mass is conserved up to the linear residual and both fields
//!   stay nonnegative for any `dt`.
//! * Truncated exchange: the bounded flux `q_m` is evaluated explicitly from
//!   the old state, limited so neither side can be emptied below zero, and
//!   the same per-node value is booked as a loss for `V` and a gain for `u`.

use crate::diagnostics::{DiagnosticsRow, DiagnosticsSink};
use crate::elliptic::{assemble_helmholtz, solve_c_with};
use crate::error::{Error, Result};
use crate::geometry::Mesh;
use crate::model::{ExchangeLaw, Parameters, State};
use crate::sparse::{banded_solve, SparseOperator};

/// `B(x) = x / (e^x - 1)`, with `B(0) = 1`.
#[inline]
pub fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        1.0 - 0.5 * x + x * x / 12.0
    } else {
        x / x.exp_m1()
    }
}

/// Scharfetter–Gummel flux of `V` from cell `K` to cell `L` for the
/// drift–diffusion flux `-D ∇V + V ∇c`.
pub fn sg_face_flux(
    diffusivity: f64,
    c_k: f64,
    c_l: f64,
    v_k: f64,
    v_l: f64,
    measure: f64,
    distance: f64,
) -> f64 {
    let p = (c_l - c_k) / diffusivity;
    measure * diffusivity / distance * (bernoulli(-p) * v_k - bernoulli(p) * v_l)
}

/// Appends the SG transport operator `V ↦ Σ_f F_f` for frozen `c`.
/// Columns sum to zero.
pub(crate) fn push_drift_diffusion(mesh: &Mesh, diffusivity: f64, c: &[f64], t: &mut Vec<(usize, usize, f64)>) {
    for f in mesh.interior_faces() {
        let [k, l] = f.cells;
        let tr = f.measure * diffusivity / f.distance;
        let p = (c[l] - c[k]) / diffusivity;
        let out = tr * bernoulli(-p);
        let back = tr * bernoulli(p);
        t.push((k, k, out));
        t.push((k, l, -back));
        t.push((l, k, -out));
        t.push((l, l, back));
    }
}

/// Appends `-d |σ| Δ_Γ`, shifted to rows/columns starting at `offset`.
pub(crate) fn push_surface_diffusion(mesh: &Mesh, d: f64, offset: usize, t: &mut Vec<(usize, usize, f64)>) {
    for e in mesh.surface_edges() {
        let [a, b] = e.nodes;
        let w = d * e.weight;
        t.push((offset + a, offset + a, w));
        t.push((offset + b, offset + b, w));
        t.push((offset + a, offset + b, -w));
        t.push((offset + b, offset + a, -w));
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Multiplier applied to `dt` after an accepted step.
    pub grow: f64,
    /// Multiplier applied to `dt` after a rejected step.
    pub shrink: f64,
    /// Steps whose relative max-norm change exceeds this are rejected.
    pub max_rel_change: f64,
    /// Relative residual tolerance of the conjugate-gradient signal solve;
    /// the (V, u) systems are banded and solved directly.
    pub linear_tol: f64,
    /// Blow-up is suspected once `max(|V|∞, |u|∞)` exceeds this multiple
    /// of its initial value.
    pub blowup_factor: f64,
    /// Consecutive over-large changes at `dt_min` tolerated before blow-up
    /// is suspected.
    pub max_pinned: usize,
    pub max_steps: usize,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            dt_init: 1e-3,
            dt_min: 1e-8,
            dt_max: 0.05,
            grow: 1.2,
            shrink: 0.5,
            max_rel_change: 0.1,
            linear_tol: 1e-12,
            blowup_factor: 1e6,
            max_pinned: 10,
            max_steps: 10_000_000,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max && self.dt_max.is_finite();
        if !ok {
            return Err(Error::config(format!(
                "time steps must satisfy 0 < dt_min <= dt_init <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            )));
        }
        if !(self.grow >= 1.0 && self.grow.is_finite()) {
            return Err(Error::config(format!("grow must be >= 1, got {}", self.grow)));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::config(format!("shrink must lie in (0, 1), got {}", self.shrink)));
        }
        if !(self.max_rel_change > 0.0) {
            return Err(Error::config("max_rel_change must be positive"));
        }
        if !(self.linear_tol > 0.0 && self.linear_tol < 1.0) {
            return Err(Error::config(format!("linear_tol must lie in (0, 1), got {}", self.linear_tol)));
        }
        if !(self.blowup_factor > 0.0) {
            return Err(Error::config("blow-up threshold factor must be positive"));
        }
        if self.max_steps == 0 || self.max_pinned == 0 {
            return Err(Error::config("max_steps and max_pinned must be at least 1"));
        }
        Ok(())
    }
}

/// Largest step for which the explicit truncated exchange is monotone:
/// `dt <= 1/k2` keeps `u` nonnegative and `dt <= |K| / (k1 Σ|σ|)` keeps each
/// boundary cell from being drained in one step. `None` for the linear law.
pub fn explicit_exchange_dt_limit(mesh: &Mesh, params: &Parameters) -> Option<f64> {
    match params.exchange {
        ExchangeLaw::Linear => None,
        ExchangeLaw::Truncated { .. } => {
            let mut boundary = vec![0.0; mesh.n_cells()];
            for f in mesh.boundary_faces() {
                boundary[f.cell] += f.measure;
            }
            let cell_limit = mesh
                .cells()
                .iter()
                .zip(&boundary)
                .filter(|(_, &s)| s > 0.0)
                .map(|(c, s)| c.measure / (params.k1 * s))
                .fold(f64::INFINITY, f64::min);
            Some(cell_limit.min(1.0 / params.k2))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    /// Exchange-limiter activations in this step.
    pub limiter_count: u64,
    /// Net mass moved from bulk to membrane, `Σ |σ| q dt`.
    pub transfer: f64,
}

/// Operators that stay fixed for a run.
pub(crate) struct Stepper<'a> {
    mesh: &'a Mesh,
    params: &'a Parameters,
    config: &'a StepperConfig,
    helmholtz: SparseOperator,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(mesh: &'a Mesh, params: &'a Parameters, config: &'a StepperConfig) -> Self {
        Stepper {
            mesh,
            params,
            config,
            helmholtz: assemble_helmholtz(mesh, params.alpha),
        }
    }

    pub(crate) fn solve_c(&self, u: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
        solve_c_with(self.mesh, &self.helmholtz, self.params, u, guess, self.config.linear_tol).map(|(c, _)| c)
    }

    /// Advances `(V, u)` by `dt` using `state.c` as the frozen signal.
    pub(crate) fn advance(&self, state: &State, dt: f64) -> Result<(Vec<f64>, Vec<f64>, StepReport)> {
        let (v, u, report) = match self.params.exchange {
            ExchangeLaw::Linear => self.advance_linear(state, dt)?,
            ExchangeLaw::Truncated { m } => self.advance_truncated(state, dt, m)?,
        };
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("V"));
        }
        if !u.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("u"));
        }
        Ok((v, u, report))
    }

    fn advance_linear(&self, state: &State, dt: f64) -> Result<(Vec<f64>, Vec<f64>, StepReport)> {
        let mesh = self.mesh;
        let p = self.params;
        let n = mesh.n_cells();
        let dim = n + mesh.n_nodes();
        let mut t = Vec::with_capacity(4 * mesh.interior_faces().len() + 4 * mesh.surface_edges().len() + 4 * dim);
        let mut b = Vec::with_capacity(dim);
        for (k, cell) in mesh.cells().iter().enumerate() {
            t.push((k, k, cell.measure / dt));
            b.push(cell.measure / dt * state.v[k]);
        }
        for (i, node) in mesh.surface_nodes().iter().enumerate() {
            t.push((n + i, n + i, node.measure / dt));
            b.push(node.measure / dt * state.u[i]);
        }
        push_drift_diffusion(mesh, p.diffusivity, &state.c, &mut t);
        push_surface_diffusion(mesh, p.surface_diffusivity, n, &mut t);
        for f in mesh.boundary_faces() {
            let (k, i) = (f.cell, n + f.node);
            t.push((k, k, f.measure * p.k1));
            t.push((k, i, -f.measure * p.k2));
            t.push((i, i, f.measure * p.k2));
            t.push((i, k, -f.measure * p.k1));
        }
        let a = SparseOperator::from_triplets(dim, t, false);
        let x = banded_solve(&a, &b)?;
        let (v_star, u_star) = x.split_at(n);
        let q: Vec<f64> = (0..mesh.n_nodes())
            .map(|i| p.k1 * v_star[mesh.cell_of_node(i)] - p.k2 * u_star[i])
            .collect();
        let (v, u, transfer) = self.flux_form_update(state, v_star, u_star, &q, dt);
        Ok((
            v,
            u,
            StepReport {
                limiter_count: 0,
                transfer,
            },
        ))
    }

    /// Rebuilds the new state from the old one and face fluxes evaluated at
    /// the implicit solution `(v_star, u_star)` with exchange `q` per node.
    /// Every flux is added to one control volume and subtracted from its
    /// neighbour, so the total mass telescopes regardless of how accurately
    /// the linear systems were solved; the result differs from the iterate
    /// by `dt * residual / measure`.
    fn flux_form_update(&self, state: &State, v_star: &[f64], u_star: &[f64], q: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>, f64) {
        let mesh = self.mesh;
        let p = self.params;
        let mut net_v = vec![0.0; mesh.n_cells()];
        let mut net_u = vec![0.0; mesh.n_nodes()];
        for f in mesh.interior_faces() {
            let [k, l] = f.cells;
            let flux = sg_face_flux(p.diffusivity, state.c[k], state.c[l], v_star[k], v_star[l], f.measure, f.distance);
            net_v[k] += flux;
            net_v[l] -= flux;
        }
        let mut transfer = 0.0;
        for f in mesh.boundary_faces() {
            let flux = f.measure * q[f.node];
            net_v[f.cell] += flux;
            net_u[f.node] -= flux;
            transfer += flux * dt;
        }
        for e in mesh.surface_edges() {
            let [a, b] = e.nodes;
            let flux = p.surface_diffusivity * e.weight * (u_star[a] - u_star[b]);
            net_u[a] += flux;
            net_u[b] -= flux;
        }
        let v = mesh
            .cells()
            .iter()
            .zip(&state.v)
            .zip(&net_v)
            .map(|((cell, v), net)| v - dt * net / cell.measure)
            .collect();
        let u = mesh
            .surface_nodes()
            .iter()
            .zip(&state.u)
            .zip(&net_u)
            .map(|((node, u), net)| u - dt * net / node.measure)
            .collect();
        (v, u, transfer)
    }

    fn advance_truncated(&self, state: &State, dt: f64, m: f64) -> Result<(Vec<f64>, Vec<f64>, StepReport)> {
        let mesh = self.mesh;
        let p = self.params;
        let law = ExchangeLaw::Truncated { m };
        let mut q: Vec<f64> = (0..mesh.n_nodes())
            .map(|i| law.apply(p.k1 * state.v[mesh.cell_of_node(i)] - p.k2 * state.u[i]))
            .collect();

        // Cap each transfer at what the giving side holds.
        let mut limiter_count = 0;
        let mut outflow = vec![0.0; mesh.n_cells()];
        for f in mesh.boundary_faces() {
            if q[f.node] > 0.0 {
                outflow[f.cell] += f.measure * q[f.node] * dt;
            }
        }
        for (k, cell) in mesh.cells().iter().enumerate() {
            let content = cell.measure * state.v[k];
            if outflow[k] > content {
                let scale = content / outflow[k];
                for f in mesh.boundary_faces().iter().filter(|f| f.cell == k) {
                    if q[f.node] > 0.0 {
                        q[f.node] *= scale;
                    }
                }
                limiter_count += 1;
            }
        }
        for (i, qi) in q.iter_mut().enumerate() {
            if *qi < 0.0 && -*qi * dt > state.u[i] {
                *qi = -state.u[i] / dt;
                limiter_count += 1;
            }
        }

        // membrane
        let s = mesh.n_nodes();
        let mut t = Vec::with_capacity(s + 4 * mesh.surface_edges().len());
        let mut b = Vec::with_capacity(s);
        for (i, node) in mesh.surface_nodes().iter().enumerate() {
            t.push((i, i, node.measure / dt));
            b.push(node.measure / dt * state.u[i] + node.measure * q[i]);
        }
        push_surface_diffusion(mesh, p.surface_diffusivity, 0, &mut t);
        let a = SparseOperator::from_triplets(s, t, true);
        let u_star = banded_solve(&a, &b)?;

        // bulk
        let n = mesh.n_cells();
        let mut t = Vec::with_capacity(n + 4 * mesh.interior_faces().len());
        let mut b = Vec::with_capacity(n);
        for (k, cell) in mesh.cells().iter().enumerate() {
            t.push((k, k, cell.measure / dt));
            b.push(cell.measure / dt * state.v[k]);
        }
        for f in mesh.boundary_faces() {
            b[f.cell] -= f.measure * q[f.node];
        }
        push_drift_diffusion(mesh, p.diffusivity, &state.c, &mut t);
        let a = SparseOperator::from_triplets(n, t, false);
        let v_star = banded_solve(&a, &b)?;
        let (v, u, transfer) = self.flux_form_update(state, &v_star, &u_star, &q, dt);

        Ok((
            v,
            u,
            StepReport {
                limiter_count,
                transfer,
            },
        ))
    }
}

fn check_initial(mesh: &Mesh, params: &Parameters, state: &State) -> Result<()> {
    params.validate()?;
    mesh.check_bulk("V", &state.v)?;
    mesh.check_surface("u", &state.u)?;
    if !state.v.iter().chain(&state.u).all(|x| x.is_finite()) || !state.t.is_finite() {
        return Err(Error::NonFinite("initial state"));
    }
    if !state.is_nonnegative() {
        return Err(Error::config("initial data must be nonnegative"));
    }
    Ok(())
}

/// One step of size `dt` from `state`. `c` is recomputed from the old `u`
/// before the step and from the new `u` after it.
pub fn step(mesh: &Mesh, params: &Parameters, config: &StepperConfig, state: &State, dt: f64) -> Result<State> {
    step_with_report(mesh, params, config, state, dt).map(|(s, _)| s)
}

pub fn step_with_report(
    mesh: &Mesh,
    params: &Parameters,
    config: &StepperConfig,
    state: &State,
    dt: f64,
) -> Result<(State, StepReport)> {
    check_initial(mesh, params, state)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config(format!("dt must be positive, got {dt}")));
    }
    let stepper = Stepper::new(mesh, params, config);
    let mut current = state.clone();
    current.c = stepper.solve_c(&state.u, None)?;
    let (v, u, report) = stepper.advance(&current, dt)?;
    let c = stepper.solve_c(&u, Some(&current.c))?;
    Ok((
        State {
            t: state.t + dt,
            v,
            u,
            c,
        },
        report,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ReachedTEnd,
    /// Heuristic only: the max-norm crossed the threshold or `dt` stayed
    /// pinned at `dt_min`.
    BlowupSuspected,
    SolverFailure,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::ReachedTEnd => "reached_t_end",
            Termination::BlowupSuspected => "blowup_suspected",
            Termination::SolverFailure => "solver_failure",
        }
    }
}

/// Which rows to record.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    /// Exponents for the `Q_p` columns, ascending.
    pub p_values: Vec<f64>,
    /// Record every `every`-th accepted step; the first and last states are
    /// always recorded.
    pub every: usize,
}

impl Default for Recording {
    fn default() -> Self {
        Recording {
            p_values: vec![2.0, 4.0],
            every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub state: State,
    pub termination: Termination,
    pub steps: usize,
    pub rejected: usize,
    pub limiter_count: u64,
    pub rows_recorded: usize,
    pub message: Option<String>,
}

fn max_norm(state: &State) -> f64 {
    state.v.iter().chain(&state.u).fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn relative_change(old: &State, v: &[f64], u: &[f64]) -> f64 {
    let diff = old
        .v
        .iter()
        .zip(v)
        .chain(old.u.iter().zip(u))
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = max_norm(old).max(v.iter().chain(u).fold(0.0_f64, |m, x| m.max(x.abs())));
    if scale > 0.0 {
        diff / scale
    } else {
        0.0
    }
}

/// Integrates from `initial` to `t_end` with adaptive steps.
pub fn run(
    mesh: &Mesh,
    params: &Parameters,
    config: &StepperConfig,
    initial: &State,
    t_end: f64,
    recording: &Recording,
    sink: &mut dyn DiagnosticsSink,
) -> Result<RunOutcome> {
    check_initial(mesh, params, initial)?;
    config.validate()?;
    if recording.every == 0 {
        return Err(Error::config("diagnostics cadence must be at least 1"));
    }
    if !(t_end.is_finite()) {
        return Err(Error::config("t_end must be finite"));
    }

    let stepper = Stepper::new(mesh, params, config);
    let mut state = initial.clone();
    state.c = stepper.solve_c(&state.u, None)?;

    let mut rows = 0usize;
    let mut limiter_count = 0u64;
    let emit = |state: &State, dt: f64, limiter: u64, sink: &mut dyn DiagnosticsSink, rows: &mut usize| -> Result<()> {
        let row = DiagnosticsRow::compute(mesh, params, state, dt, &recording.p_values, limiter)?;
        sink.record(&row, state);
        *rows += 1;
        Ok(())
    };
    emit(&state, 0.0, 0, sink, &mut rows)?;

    let threshold = {
        let m0 = max_norm(&state);
        if m0 > 0.0 {
            config.blowup_factor * m0
        } else {
            f64::INFINITY
        }
    };
    let dt_cap = explicit_exchange_dt_limit(mesh, params).map_or(config.dt_max, |l| l.min(config.dt_max));
    let dt_floor = config.dt_min.min(dt_cap);

    let mut dt = config.dt_init.min(dt_cap);
    let (mut steps, mut rejected, mut pinned) = (0usize, 0usize, 0usize);
    let mut since_record = 0usize;
    let eps = 1e-12 * t_end.abs().max(1.0);

    let finish = |state: State, termination, steps, rejected, limiter_count, rows, message: Option<String>| RunOutcome {
        state,
        termination,
        steps,
        rejected,
        limiter_count,
        rows_recorded: rows,
        message,
    };

    while state.t < t_end - eps {
        if steps >= config.max_steps {
            let msg = format!("step budget of {} exhausted at t = {}", config.max_steps, state.t);
            if since_record > 0 {
                emit(&state, dt, limiter_count, sink, &mut rows)?;
            }
            return Ok(finish(state, Termination::SolverFailure, steps, rejected, limiter_count, rows, Some(msg)));
        }
        let mut h = dt.min(t_end - state.t);
        if t_end - state.t - h <= eps {
            h = t_end - state.t;
        }
        let at_floor = h <= dt_floor * (1.0 + 1e-12);

        let (v, u, report) = match stepper.advance(&state, h) {
            Ok(r) => r,
            Err(err @ (Error::Solver { .. } | Error::Singular { .. } | Error::NonFinite(_))) => {
                if at_floor {
                    if since_record > 0 {
                        emit(&state, h, limiter_count, sink, &mut rows)?;
                    }
                    let msg = format!("step failed at dt_min (t = {}): {err}", state.t);
                    return Ok(finish(state, Termination::SolverFailure, steps, rejected, limiter_count, rows, Some(msg)));
                }
                rejected += 1;
                dt = (h * config.shrink).max(dt_floor);
                continue;
            }
            Err(e) => return Err(e),
        };

        let change = relative_change(&state, &v, &u);
        if change > config.max_rel_change {
            if !at_floor {
                rejected += 1;
                dt = (h * config.shrink).max(dt_floor);
                continue;
            }
            pinned += 1;
        } else {
            pinned = 0;
        }

        let c = match stepper.solve_c(&u, Some(&state.c)) {
            Ok(c) => c,
            Err(err) => {
                let msg = format!("signal solve failed at t = {}: {err}", state.t);
                return Ok(finish(state, Termination::SolverFailure, steps, rejected, limiter_count, rows, Some(msg)));
            }
        };
        let reached = h == t_end - state.t;
        state = State {
            t: if reached { t_end } else { state.t + h },
            v,
            u,
            c,
        };
        steps += 1;
        since_record += 1;
        limiter_count += report.limiter_count;

        let norm = max_norm(&state);
        let blowup = if norm >= threshold {
            Some(format!(
                "max-norm {norm:e} exceeded {:e} x its initial value at t = {}",
                config.blowup_factor, state.t
            ))
        } else if pinned >= config.max_pinned {
            Some(format!("dt pinned at dt_min for {pinned} consecutive steps at t = {}", state.t))
        } else {
            None
        };
        let done = state.t >= t_end - eps || blowup.is_some();
        if since_record >= recording.every || done {
            emit(&state, h, limiter_count, sink, &mut rows)?;
            since_record = 0;
        }
        if let Some(msg) = blowup {
            return Ok(finish(state, Termination::BlowupSuspected, steps, rejected, limiter_count, rows, Some(msg)));
        }
        if change <= config.max_rel_change && h >= dt * (1.0 - 1e-12) {
            dt = (dt * config.grow).min(dt_cap);
        }
    }
    Ok(finish(state, Termination::ReachedTEnd, steps, rejected, limiter_count, rows, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_disk_mesh, build_radial_ball_mesh};

    #[test]
    fn bernoulli_branches_agree() {
        assert_eq!(bernoulli(0.0), 1.0);
        for x in [1e-5, -1e-5, 9.99e-6, -9.99e-6] {
            let direct = x / f64::exp_m1(x);
            assert!((bernoulli(x) - direct).abs() < 1e-15);
        }
        // B(-x) - B(x) = x
        for x in [-30.0, -2.0, -1e-3, 1e-7, 0.5, 7.0, 40.0] {
            assert!((bernoulli(-x) - bernoulli(x) - x).abs() < 1e-13 * x.abs().max(1.0));
        }
        assert_eq!(bernoulli(1000.0), 0.0);
        assert!((bernoulli(-1000.0) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn sg_pure_diffusion() {
        let f = sg_face_flux(2.0, 0.3, 0.3, 5.0, 1.0, 0.5, 0.25);
        assert!((f - 0.5 * 2.0 / 0.25 * 4.0).abs() < 1e-14);
    }

    #[test]
    fn sg_pure_advection_first_order() {
        // flux toward higher c: (measure / distance) V (c_L - c_K), exact for V_K = V_L
        let (m, dist, vbar, d) = (0.7, 0.1, 3.0, 1.5);
        for dc in [1e-3, 1e-2, 0.1, -0.05] {
            let f = sg_face_flux(d, 1.0, 1.0 + dc, vbar, vbar, m, dist);
            let expect = m / dist * vbar * dc;
            assert!((f - expect).abs() <= 1e-12 * expect.abs(), "{f} vs {expect}");
        }
    }

    #[test]
    fn sg_antisymmetric() {
        for (ck, cl, vk, vl) in [(0.0, 2.0, 1.0, 3.0), (1.3, -0.4, 0.2, 0.0), (5.0, 5.0, 1.0, 1.0)] {
            let f = sg_face_flux(0.8, ck, cl, vk, vl, 1.1, 0.3);
            let g = sg_face_flux(0.8, cl, ck, vl, vk, 1.1, 0.3);
            assert!((f + g).abs() <= 1e-14 * f.abs().max(1.0));
        }
    }

    #[test]
    fn zero_state_stays_zero() {
        let mesh = build_disk_mesh(1.0, 3, 8).unwrap();
        let s = step(&mesh, &Parameters::default(), &StepperConfig::default(), &State::zeros(&mesh), 0.1).unwrap();
        assert!(s.v.iter().chain(&s.u).chain(&s.c).all(|&x| x == 0.0));
        assert!((s.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn single_cell_matches_backward_euler() {
        let mesh = build_radial_ball_mesh(1.0, 1).unwrap();
        let p = Parameters { beta: 0.0, k1: 1.3, k2: 0.6, ..Default::default() };
        let (v0, u0, dt) = (2.0, 0.5, 0.37);
        let state = State { t: 0.0, v: vec![v0], u: vec![u0], c: vec![0.0] };
        let s = step(&mesh, &p, &StepperConfig::default(), &state, dt).unwrap();

        // independent 2x2 backward-Euler solve by Cramer's rule
        let (vol, area) = (mesh.exact_bulk_measure(), mesh.exact_surface_measure());
        let g = area / vol;
        let a = [[1.0 + dt * g * p.k1, -dt * g * p.k2], [-dt * p.k1, 1.0 + dt * p.k2]];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let v = (v0 * a[1][1] - a[0][1] * u0) / det;
        let u = (a[0][0] * u0 - a[1][0] * v0) / det;
        assert!((s.v[0] - v).abs() <= 1e-12, "{} vs {v}", s.v[0]);
        assert!((s.u[0] - u).abs() <= 1e-12, "{} vs {u}", s.u[0]);
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        for mesh in [build_disk_mesh(1.0, 4, 10).unwrap(), build_radial_ball_mesh(1.0, 6).unwrap()] {
            for exchange in [ExchangeLaw::Linear, ExchangeLaw::Truncated { m: 0.5 }] {
                let p = Parameters { beta: 0.0, k1: 2.0, k2: 3.0, exchange, ..Default::default() };
                let u0 = 0.8;
                let state = State {
                    t: 0.0,
                    v: vec![p.k2 / p.k1 * u0; mesh.n_cells()],
                    u: vec![u0; mesh.n_nodes()],
                    c: vec![0.0; mesh.n_cells()],
                };
                let s = step(&mesh, &p, &StepperConfig::default(), &state, 0.05).unwrap();
                for (a, b) in s.v.iter().zip(&state.v).chain(s.u.iter().zip(&state.u)) {
                    assert!((a - b).abs() <= 1e-11, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn explicit_limit_only_for_truncated() {
        let mesh = build_disk_mesh(1.0, 16, 32).unwrap();
        assert_eq!(explicit_exchange_dt_limit(&mesh, &Parameters::default()), None);
        let p = Parameters { exchange: ExchangeLaw::Truncated { m: 1.0 }, ..Default::default() };
        let lim = explicit_exchange_dt_limit(&mesh, &p).unwrap();
        // outer-ring cell area over arc length: h (1 - h/2) with h = 1/16
        let h = 1.0 / 16.0;
        assert!((lim - h * (1.0 - h / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        StepperConfig::default().validate().unwrap();
        let bad = [
            StepperConfig { dt_min: 0.0, ..Default::default() },
            StepperConfig { dt_init: 1.0, dt_max: 0.1, ..Default::default() },
            StepperConfig { shrink: 1.0, ..Default::default() },
            StepperConfig { grow: 0.9, ..Default::default() },
            StepperConfig { blowup_factor: 0.0, ..Default::default() },
            StepperConfig { max_steps: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn run_to_zero_time_returns_initial() {
        let mesh = build_disk_mesh(1.0, 2, 6).unwrap();
        let mut state = State::zeros(&mesh);
        state.u = vec![1.0; 6];
        let mut rows = Vec::new();
        let out = run(&mesh, &Parameters::default(), &StepperConfig::default(), &state, 0.0, &Recording::default(), &mut rows).unwrap();
        assert_eq!(out.termination, Termination::ReachedTEnd);
        assert_eq!(out.steps, 0);
        assert_eq!(out.state.v, state.v);
        assert_eq!(out.state.u, state.u);
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn run_rejects_negative_data() {
        let mesh = build_disk_mesh(1.0, 2, 6).unwrap();
        let mut state = State::zeros(&mesh);
        state.v[3] = -1e-3;
        let err = run(&mesh, &Parameters::default(), &StepperConfig::default(), &state, 1.0, &Recording::default(), &mut Vec::new());
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
