//! Stationary states: the closed-form spherically symmetric family on a ball
//! and a fixed-point iteration at prescribed membrane mass `mu` on any mesh.

use std::f64::consts::PI;

use crate::elliptic::{assemble_helmholtz, boundary_load, solve_c_with};
use crate::error::{Error, Result};
use crate::geometry::{build_radial_ball_mesh, trace, Mesh};
use crate::model::{c_boundary_source, Parameters, State};
use crate::sparse::{bicgstab, conjugate_gradient, SolverOptions, SparseOperator};
use crate::stepper::{push_drift_diffusion, push_surface_diffusion, sg_face_flux};

/// Discrete residual norms (Euclidean, per control volume) of the three
/// stationary equations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StationaryResiduals {
    pub v_equation: f64,
    pub c_equation: f64,
    pub u_equation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub v: Vec<f64>,
    pub c: Vec<f64>,
    pub u: Vec<f64>,
    /// Membrane mass `Σ |σ| u`.
    pub mu: f64,
    pub residual: StationaryResiduals,
    pub iterations: usize,
    pub converged: bool,
    /// Largest `|Σ |σ| u_new - mu|` seen before the mass projection.
    pub mass_drift: f64,
    /// Whether the iteration switched to averaging after oscillating.
    pub damped: bool,
}

impl SteadyState {
    /// The fields as a state at `t = 0`, e.g. as initial data for a run.
    pub fn to_state(&self) -> State {
        State {
            t: 0.0,
            v: self.v.clone(),
            u: self.u.clone(),
            c: self.c.clone(),
        }
    }

    pub fn bulk_mass(&self, mesh: &Mesh) -> f64 {
        mesh.cells().iter().zip(&self.v).map(|(c, v)| c.measure * v).sum()
    }

    pub fn total_mass(&self, mesh: &Mesh) -> f64 {
        self.bulk_mass(mesh) + self.mu
    }

    /// `Σ |σ| V|_Γ - (k2/k1) Σ |σ| u`, zero for an exact stationary state.
    pub fn mass_identity_defect(&self, mesh: &Mesh, params: &Parameters) -> Result<f64> {
        let tr = trace(mesh, &self.v)?;
        let lhs: f64 = mesh.surface_nodes().iter().zip(&tr).map(|(s, v)| s.measure * v).sum();
        Ok(lhs - params.k2 / params.k1 * self.mu)
    }

    pub fn summary(&self, mesh: &Mesh) -> String {
        format!(
            "mu = {:e}\nM = {:e}\nbulk_mass = {:e}\niterations = {}\nconverged = {}\n\
             damped = {}\nmass_drift = {:e}\nresidual_v = {:e}\nresidual_c = {:e}\nresidual_u = {:e}\n",
            self.mu,
            self.total_mass(mesh),
            self.bulk_mass(mesh),
            self.iterations,
            self.converged,
            self.damped,
            self.mass_drift,
            self.residual.v_equation,
            self.residual.c_equation,
            self.residual.u_equation,
        )
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Evaluates the discrete stationary equations at `(v, c, u)`.
pub fn stationary_residuals(mesh: &Mesh, params: &Parameters, v: &[f64], c: &[f64], u: &[f64]) -> Result<StationaryResiduals> {
    mesh.check_bulk("V", v)?;
    mesh.check_bulk("c", c)?;
    mesh.check_surface("u", u)?;

    let a = assemble_helmholtz(mesh, params.alpha);
    let b = boundary_load(mesh, &c_boundary_source(params.source, params.beta, u));
    let c_res = a.residual(c, &b);

    let mut v_res = vec![0.0; mesh.n_cells()];
    for f in mesh.interior_faces() {
        let [k, l] = f.cells;
        let flux = sg_face_flux(params.diffusivity, c[k], c[l], v[k], v[l], f.measure, f.distance);
        v_res[k] += flux;
        v_res[l] -= flux;
    }
    let mut u_res = vec![0.0; mesh.n_nodes()];
    for f in mesh.boundary_faces() {
        let q = f.measure * params.exchange.apply(params.k1 * v[f.cell] - params.k2 * u[f.node]);
        v_res[f.cell] += q;
        u_res[f.node] -= q;
    }
    for e in mesh.surface_edges() {
        let [i, j] = e.nodes;
        let flux = params.surface_diffusivity * e.weight * (u[i] - u[j]);
        u_res[i] += flux;
        u_res[j] -= flux;
    }
    Ok(StationaryResiduals {
        v_equation: norm(&v_res),
        c_equation: norm(&c_res),
        u_equation: norm(&u_res),
    })
}

/// Solves `D ΔV - ∇·(V ∇c) = 0` with the Robin condition
/// `-ν·(D∇V - V∇c) = k1 V - k2 u` for fixed `c` and `u`.
pub fn solve_stationary_v(mesh: &Mesh, params: &Parameters, c: &[f64], u: &[f64], tol: f64) -> Result<Vec<f64>> {
    mesh.check_bulk("c", c)?;
    mesh.check_surface("u", u)?;
    let n = mesh.n_cells();
    let mut t = Vec::with_capacity(4 * mesh.interior_faces().len() + mesh.n_nodes());
    let mut b = vec![0.0; n];
    push_drift_diffusion(mesh, params.diffusivity, c, &mut t);
    for f in mesh.boundary_faces() {
        t.push((f.cell, f.cell, f.measure * params.k1));
        b[f.cell] += f.measure * params.k2 * u[f.node];
    }
    if b.iter().all(|&x| x == 0.0) {
        return Ok(vec![0.0; n]);
    }
    let a = SparseOperator::from_triplets(n, t, false);
    let opts = SolverOptions {
        tol,
        max_iters: 50 * n + 500,
    };
    bicgstab(&a, &b, None, opts).map(|(v, _)| v)
}

/// Solves `(k2 - d Δ_Γ) u = rhs` on the surface mesh.
pub fn solve_surface_helmholtz(mesh: &Mesh, d: f64, k2: f64, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    mesh.check_surface("right-hand side", rhs)?;
    if !(k2 > 0.0) {
        return Err(Error::config(format!("k2 must be positive, got {k2}")));
    }
    let s = mesh.n_nodes();
    let mut t = Vec::with_capacity(s + 4 * mesh.surface_edges().len());
    let mut b = Vec::with_capacity(s);
    for (i, node) in mesh.surface_nodes().iter().enumerate() {
        t.push((i, i, k2 * node.measure));
        b.push(node.measure * rhs[i]);
    }
    push_surface_diffusion(mesh, d, 0, &mut t);
    let a = SparseOperator::from_triplets(s, t, true);
    if b.iter().all(|&x| x == 0.0) {
        return Ok(vec![0.0; s]);
    }
    let opts = SolverOptions {
        tol,
        max_iters: 20 * s + 100,
    };
    conjugate_gradient(&a, &b, None, opts).map(|(u, _)| u)
}

/// Tolerances for [`fixed_point_steady`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Stop once `||u_new - u||_L2(Γ) <= tol ||u||_L2(Γ)`.
    pub tol: f64,
    pub max_iters: usize,
    pub linear_tol: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            tol: 1e-10,
            max_iters: 500,
            linear_tol: 1e-12,
        }
    }
}

fn surface_l2(mesh: &Mesh, u: &[f64]) -> f64 {
    mesh.surface_nodes().iter().zip(u).map(|(s, u)| s.measure * u * u).sum::<f64>().sqrt()
}

/// Fixed-point iteration `u → c → V → u_new`, projecting `u_new` back onto
/// membrane mass `mu` each sweep. Starts from the uniform membrane state.
pub fn fixed_point_steady(mesh: &Mesh, params: &Parameters, mu: f64, opts: FixedPointOptions) -> Result<SteadyState> {
    let uniform = vec![1.0; mesh.n_nodes()];
    fixed_point_steady_from(mesh, params, mu, &uniform, opts)
}

/// As [`fixed_point_steady`] from a caller-supplied nonnegative initial
/// membrane profile, which is rescaled to mass `mu`.
pub fn fixed_point_steady_from(
    mesh: &Mesh,
    params: &Parameters,
    mu: f64,
    initial_u: &[f64],
    opts: FixedPointOptions,
) -> Result<SteadyState> {
    params.validate()?;
    mesh.check_surface("initial u", initial_u)?;
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::config(format!("membrane mass mu must be nonnegative, got {mu}")));
    }
    if initial_u.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::config("initial membrane profile must be nonnegative"));
    }
    if mu == 0.0 {
        return Ok(SteadyState {
            v: vec![0.0; mesh.n_cells()],
            c: vec![0.0; mesh.n_cells()],
            u: vec![0.0; mesh.n_nodes()],
            mu: 0.0,
            residual: StationaryResiduals::default(),
            iterations: 1,
            converged: true,
            mass_drift: 0.0,
            damped: false,
        });
    }
    let project = |u: &mut Vec<f64>| -> Result<f64> {
        let m: f64 = mesh.surface_nodes().iter().zip(u.iter()).map(|(s, u)| s.measure * u).sum();
        if !(m > 0.0) {
            return Err(Error::config("membrane profile has no mass to rescale"));
        }
        let scale = mu / m;
        u.iter_mut().for_each(|x| *x *= scale);
        Ok(m)
    };

    let helmholtz = assemble_helmholtz(mesh, params.alpha);
    let mut u = initial_u.to_vec();
    project(&mut u)?;
    let mut c = vec![0.0; mesh.n_cells()];
    let (mut damped, mut rises, mut prev_delta) = (false, 0usize, f64::INFINITY);
    let mut mass_drift: f64 = 0.0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iters {
        iterations += 1;
        c = solve_c_with(mesh, &helmholtz, params, &u, Some(&c), opts.linear_tol)?.0;
        let v = solve_stationary_v(mesh, params, &c, &u, opts.linear_tol)?;
        let rhs: Vec<f64> = trace(mesh, &v)?.iter().map(|x| params.k1 * x).collect();
        let mut u_new = solve_surface_helmholtz(mesh, params.surface_diffusivity, params.k2, &rhs, opts.linear_tol)?;
        let before = project(&mut u_new)?;
        mass_drift = mass_drift.max((before - mu).abs());
        if damped {
            u_new.iter_mut().zip(&u).for_each(|(n, o)| *n = 0.5 * (*n + o));
        }
        let diff: Vec<f64> = u_new.iter().zip(&u).map(|(a, b)| a - b).collect();
        let delta = surface_l2(mesh, &diff) / surface_l2(mesh, &u);
        if delta <= opts.tol {
            converged = true;
            break;
        }
        if delta > prev_delta {
            rises += 1;
            if rises >= 2 {
                damped = true;
            }
        } else {
            rises = 0;
        }
        prev_delta = delta;
        u = u_new;
    }

    // Report fields that are mutually consistent for the final membrane state.
    c = solve_c_with(mesh, &helmholtz, params, &u, Some(&c), opts.linear_tol)?.0;
    let v = solve_stationary_v(mesh, params, &c, &u, opts.linear_tol)?;
    let residual = stationary_residuals(mesh, params, &v, &c, &u)?;
    Ok(SteadyState {
        v,
        c,
        u,
        mu,
        residual,
        iterations,
        converged,
        mass_drift,
        damped,
    })
}

/// `sinh(x) / x`, evaluated by series near zero.
fn sinhc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 + x * x / 6.0
    } else {
        x.sinh() / x
    }
}

/// Radially symmetric closed form on a ball of radius `radius`:
/// `c = c0 sinh(√α r)/(√α r)`, `V = (k2/k1) u0 exp((c(r) - c(R))/D)`, `u ≡ u0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalProfile {
    pub radius: f64,
    pub u0: f64,
    pub c0: f64,
    pub diffusivity: f64,
    pub alpha: f64,
    pub v_boundary: f64,
}

impl SphericalProfile {
    /// Signal per unit `u0` at radius `r` for the linear source law.
    fn unit_signal(params: &Parameters, radius: f64, r: f64) -> f64 {
        let s = params.alpha.sqrt();
        let slope = (s * radius).cosh() / radius - (s * radius).sinh() / (s * radius * radius);
        params.beta / slope * sinhc(s * r)
    }

    pub fn new(params: &Parameters, radius: f64, u0: f64) -> Self {
        SphericalProfile {
            radius,
            u0,
            c0: u0 * Self::unit_signal(params, radius, 0.0),
            diffusivity: params.diffusivity,
            alpha: params.alpha,
            v_boundary: params.k2 / params.k1 * u0,
        }
    }

    pub fn c(&self, r: f64) -> f64 {
        self.c0 * sinhc(self.alpha.sqrt() * r)
    }

    pub fn v(&self, r: f64) -> f64 {
        self.v_boundary * ((self.c(r) - self.c(self.radius)) / self.diffusivity).exp()
    }
}

/// Total mass `4πR² u0 + 4π ∫_0^R r² V(r) dr` of the spherical profile, with
/// the integral done by composite Simpson on `intervals` (even) panels.
pub fn spherical_mass(params: &Parameters, radius: f64, u0: f64, intervals: usize) -> f64 {
    let intervals = intervals.max(2) + intervals % 2;
    let profile = SphericalProfile::new(params, radius, u0);
    let h = radius / intervals as f64;
    let f = |r: f64| r * r * profile.v(r);
    let mut sum = f(0.0) + f(radius);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(i as f64 * h);
    }
    4.0 * PI * radius * radius * u0 + 4.0 * PI * sum * h / 3.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphericalSteadyState {
    pub state: SteadyState,
    pub profile: SphericalProfile,
    /// Final bisection bracket around `u0`.
    pub bracket: (f64, f64),
    /// Every `u0` found whose mass matches the target; the first is used.
    pub roots: Vec<f64>,
    /// Number of Simpson panels used for the mass integral.
    pub quadrature_intervals: usize,
}

const SCAN_POINTS: usize = 256;

fn bisect(mass: &dyn Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    for _ in 0..400 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// Closed-form spherically symmetric steady state of total mass
/// `total_mass` on a ball of radius `radius`, sampled on an `n`-shell mesh.
/// Only the linear source law has this closed form.
pub fn spherical_steady_state(params: &Parameters, radius: f64, total_mass: f64, n: usize) -> Result<SphericalSteadyState> {
    params.validate()?;
    if params.source != crate::model::SourceLaw::Linear {
        return Err(Error::config("the spherical closed form needs the linear source law"));
    }
    if !(total_mass >= 0.0 && total_mass.is_finite()) {
        return Err(Error::config(format!("total mass must be nonnegative, got {total_mass}")));
    }
    let mesh = build_radial_ball_mesh(radius, n)?;
    let intervals = (4 * n).max(4096);
    let mass = |u0: f64| spherical_mass(params, radius, u0, intervals);

    let (bracket, roots) = if total_mass == 0.0 {
        ((0.0, 0.0), vec![0.0])
    } else {
        // M(u0) >= 4πR² u0, so the bracket closes before u0 = M / (4πR²).
        let mut hi = total_mass / (4.0 * PI * radius * radius + 4.0 / 3.0 * PI * radius.powi(3) * params.k2 / params.k1);
        let mut expansions = 0;
        while mass(hi) < total_mass {
            hi *= 2.0;
            expansions += 1;
            if expansions > 200 || !hi.is_finite() {
                return Err(Error::config("could not bracket the spherical steady state"));
            }
        }
        // scan for every sign change of M(u0) - target below hi
        let mut roots = Vec::new();
        let mut first_bracket = None;
        let mut prev = (0.0, -total_mass);
        for i in 1..=SCAN_POINTS {
            let x = hi * i as f64 / SCAN_POINTS as f64;
            let g = mass(x) - total_mass;
            if (prev.1 < 0.0) != (g < 0.0) || g == 0.0 {
                let (lo, up) = bisect(&mass, total_mass, prev.0, x);
                first_bracket.get_or_insert((lo, up));
                roots.push(0.5 * (lo + up));
            }
            prev = (x, g);
        }
        let bracket = first_bracket.ok_or_else(|| Error::config("spherical mass map never crossed the target"))?;
        (bracket, roots)
    };
    let u0 = roots[0];
    let profile = SphericalProfile::new(params, radius, u0);
    let c: Vec<f64> = mesh.cells().iter().map(|cell| profile.c(cell.radius)).collect();
    let v: Vec<f64> = mesh.cells().iter().map(|cell| profile.v(cell.radius)).collect();
    let u = vec![u0];
    let residual = stationary_residuals(&mesh, params, &v, &c, &u)?;
    Ok(SphericalSteadyState {
        state: SteadyState {
            v,
            c,
            u,
            mu: mesh.surface_measure() * u0,
            residual,
            iterations: 0,
            converged: true,
            mass_drift: 0.0,
            damped: false,
        },
        profile,
        bracket,
        roots,
        quadrature_intervals: intervals,
    })
}
