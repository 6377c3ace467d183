//! Screened Poisson problem `-Δc + αc = 0` with Neumann data on the boundary.

use crate::error::Result;
use crate::geometry::Mesh;
use crate::model::{c_boundary_source, Parameters};
use crate::sparse::{conjugate_gradient, LinearSolveReport, SolverOptions, SparseOperator};

/// Two-point flux operator `A` with `(A c)_K = Σ_f T_f (c_K - c_L) + α |K| c_K`.
/// Boundary faces contribute nothing here; their Neumann data goes to the
/// right-hand side.
pub fn assemble_helmholtz(mesh: &Mesh, alpha: f64) -> SparseOperator {
    let mut t = Vec::with_capacity(mesh.n_cells() + 4 * mesh.interior_faces().len());
    for (k, cell) in mesh.cells().iter().enumerate() {
        t.push((k, k, alpha * cell.measure));
    }
    for f in mesh.interior_faces() {
        let [a, b] = f.cells;
        let tr = f.measure / f.distance;
        t.push((a, a, tr));
        t.push((b, b, tr));
        t.push((a, b, -tr));
        t.push((b, a, -tr));
    }
    SparseOperator::from_triplets(mesh.n_cells(), t, true)
}

/// Right-hand side `b_K = Σ_{σ ⊂ ∂K} |σ| g_σ`.
pub fn boundary_load(mesh: &Mesh, g: &[f64]) -> Vec<f64> {
    let mut b = vec![0.0; mesh.n_cells()];
    for f in mesh.boundary_faces() {
        b[f.cell] += f.measure * g[f.node];
    }
    b
}

/// Solves for `c` given the surface field `u`.
pub fn solve_c(mesh: &Mesh, params: &Parameters, u: &[f64], tol: f64) -> Result<Vec<f64>> {
    solve_c_with_report(mesh, params, u, tol).map(|(c, _)| c)
}

pub fn solve_c_with_report(mesh: &Mesh, params: &Parameters, u: &[f64], tol: f64) -> Result<(Vec<f64>, LinearSolveReport)> {
    let a = assemble_helmholtz(mesh, params.alpha);
    solve_c_with(mesh, &a, params, u, None, tol)
}

/// As [`solve_c`] with a pre-assembled operator and an optional warm start.
pub fn solve_c_with(
    mesh: &Mesh,
    operator: &SparseOperator,
    params: &Parameters,
    u: &[f64],
    guess: Option<&[f64]>,
    tol: f64,
) -> Result<(Vec<f64>, LinearSolveReport)> {
    mesh.check_surface("surface field u", u)?;
    let g = c_boundary_source(params.source, params.beta, u);
    let b = boundary_load(mesh, &g);
    if b.iter().all(|&x| x == 0.0) {
        let report = LinearSolveReport {
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
        return Ok((vec![0.0; mesh.n_cells()], report));
    }
    let opts = SolverOptions {
        tol,
        max_iters: 20 * mesh.n_cells() + 100,
    };
    conjugate_gradient(operator, &b, guess, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_disk_mesh, build_radial_ball_mesh};
    use crate::model::SourceLaw;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn single_cell_operator() {
        let m = build_radial_ball_mesh(1.0, 1).unwrap();
        let a = assemble_helmholtz(&m, 1.0);
        let d = a.to_dense();
        assert_eq!(d.len(), 1);
        assert!((d[0][0] - 4.0 * PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        for m in [
            build_radial_ball_mesh(1.3, 7).unwrap(),
            build_disk_mesh(0.7, 4, 9).unwrap(),
        ] {
            let a = assemble_helmholtz(&m, 0.0);
            for r in 0..a.dim() {
                let s: f64 = a.row(r).map(|(_, v)| v).sum();
                assert!(s.abs() < 1e-12, "row {r}: {s}");
            }
        }
    }

    #[test]
    fn disk_operator_is_symmetric_m_matrix() {
        let m = build_disk_mesh(1.0, 2, 4).unwrap();
        let a = assemble_helmholtz(&m, 2.0);
        assert!(a.is_symmetric());
        let d = a.to_dense();
        for i in 0..d.len() {
            assert!(d[i][i] > 0.0);
            let off: f64 = (0..d.len()).filter(|&j| j != i).map(|j| d[i][j].abs()).sum();
            assert!(d[i][i] > off);
            for j in 0..d.len() {
                assert_eq!(d[i][j], d[j][i]);
                if i != j {
                    assert!(d[i][j] <= 0.0);
                }
            }
        }
    }

    #[test]
    fn homogeneous_cases() {
        let m = build_disk_mesh(1.0, 3, 8).unwrap();
        let p = Parameters::default();
        assert_eq!(solve_c(&m, &p, &[0.0; 8], 1e-12).unwrap(), vec![0.0; 24]);
        let p0 = Parameters { beta: 0.0, ..p };
        let u: Vec<f64> = (0..8).map(|i| i as f64).collect();
        assert_eq!(solve_c(&m, &p0, &u, 1e-12).unwrap(), vec![0.0; 24]);
    }

    fn sinh_profile(r: f64, alpha: f64, beta: f64, u0: f64, big_r: f64) -> f64 {
        let s = alpha.sqrt();
        let c0 = beta * u0 / ((s * big_r).cosh() / big_r - (s * big_r).sinh() / (s * big_r * big_r));
        c0 * (s * r).sinh() / (s * r)
    }

    fn ball_error(n: usize, alpha: f64) -> f64 {
        let m = build_radial_ball_mesh(1.0, n).unwrap();
        let p = Parameters { alpha, ..Default::default() };
        let c = solve_c(&m, &p, &[1.0], 1e-12).unwrap();
        m.cells()
            .iter()
            .zip(&c)
            .map(|(cell, c)| {
                let exact = sinh_profile(cell.radius, alpha, 1.0, 1.0, 1.0);
                ((c - exact) / exact).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn ball_matches_sinh_profile_second_order() {
        for alpha in [1.0, 4.0] {
            let errs: Vec<f64> = [16, 32, 64, 128].iter().map(|&n| ball_error(n, alpha)).collect();
            for w in errs.windows(2) {
                assert!((w[0] / w[1]).log2() >= 1.8, "alpha={alpha}: {errs:?}");
            }
            assert!(errs[3] <= 5e-4, "{errs:?}");
        }
    }

    /// Radial oracle for the disk: integrates `r c'' + c' = α r c` with RK4
    /// from a series start near the origin, then scales so that
    /// `c'(R) = β u0`.
    fn disk_radial_oracle(alpha: f64, beta: f64, u0: f64, big_r: f64, steps: usize) -> impl Fn(f64) -> f64 {
        let r0 = 1e-6;
        // I0 series: c = 1 + α r²/4, c' = α r/2
        let mut y = [1.0 + alpha * r0 * r0 / 4.0, alpha * r0 / 2.0];
        let h = (big_r - r0) / steps as f64;
        let rhs = |r: f64, y: [f64; 2]| [y[1], alpha * y[0] - y[1] / r];
        let mut samples = vec![(r0, y[0])];
        let mut r = r0;
        for _ in 0..steps {
            let k1 = rhs(r, y);
            let k2 = rhs(r + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
            let k3 = rhs(r + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
            let k4 = rhs(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            r += h;
            samples.push((r, y[0]));
        }
        let scale = beta * u0 / y[1];
        move |x: f64| {
            // linear interpolation on a fine grid
            let pos = ((x - r0) / h).clamp(0.0, (samples.len() - 2) as f64);
            let i = pos.floor() as usize;
            let w = pos - i as f64;
            scale * ((1.0 - w) * samples[i].1 + w * samples[i + 1].1)
        }
    }

    #[test]
    fn disk_matches_radial_oracle_second_order() {
        let alpha = 1.0;
        let oracle = disk_radial_oracle(alpha, 1.0, 1.0, 1.0, 200_000);
        let errs: Vec<f64> = [8usize, 16, 32, 64]
            .iter()
            .map(|&nr| {
                let m = build_disk_mesh(1.0, nr, 12).unwrap();
                let p = Parameters { alpha, ..Default::default() };
                let c = solve_c(&m, &p, &[1.0; 12], 1e-12).unwrap();
                m.cells()
                    .iter()
                    .zip(&c)
                    .map(|(cell, c)| ((c - oracle(cell.radius)) / oracle(cell.radius)).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.8, "{errs:?}");
        }
    }

    #[test]
    fn flux_balance_and_linearity() {
        let m = build_disk_mesh(1.0, 6, 16).unwrap();
        let p = Parameters::default();
        let tol = 1e-12;
        let u1: Vec<f64> = m.surface_nodes().iter().map(|s| 1.0 + s.angle.cos()).collect();
        let u2: Vec<f64> = m.surface_nodes().iter().map(|s| (2.0 * s.angle).sin().powi(2)).collect();
        let c1 = solve_c(&m, &p, &u1, tol).unwrap();
        let c2 = solve_c(&m, &p, &u2, tol).unwrap();
        let u12: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a + b).collect();
        let c12 = solve_c(&m, &p, &u12, tol).unwrap();
        let scale = c12.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for k in 0..c12.len() {
            assert!((c12[k] - c1[k] - c2[k]).abs() <= 10.0 * tol * scale.max(1.0) * 10.0);
        }
        let inflow: f64 = m.surface_nodes().iter().zip(&u1).map(|(s, u)| s.measure * p.beta * u).sum();
        let decay: f64 = m.cells().iter().zip(&c1).map(|(k, c)| p.alpha * k.measure * c).sum();
        assert!((inflow - decay).abs() <= 10.0 * tol * inflow * (m.n_cells() as f64).sqrt());
    }

    #[test]
    fn truncated_source_is_saturated() {
        let m = build_radial_ball_mesh(1.0, 8).unwrap();
        let p = Parameters { source: SourceLaw::Truncated { z_max: 1.0 }, ..Default::default() };
        let c_big = solve_c(&m, &p, &[1e6], 1e-12).unwrap();
        let c_one = solve_c(&m, &Parameters::default(), &[1.0], 1e-12).unwrap();
        for (a, b) in c_big.iter().zip(&c_one) {
            assert!((a - b).abs() <= 1e-9 * b);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn comparison_principle(
            us in proptest::collection::vec(0.0f64..10.0, 12),
            nr in 1usize..8,
            n in 1usize..40,
            alpha in 0.1f64..10.0,
        ) {
            let p = Parameters { alpha, ..Default::default() };
            let m = build_disk_mesh(1.0, nr, 12).unwrap();
            let c = solve_c(&m, &p, &us, 1e-12).unwrap();
            prop_assert!(c.iter().all(|&x| x >= 0.0));
            let m = build_radial_ball_mesh(1.0, n).unwrap();
            let c = solve_c(&m, &p, &us[..1], 1e-12).unwrap();
            prop_assert!(c.iter().all(|&x| x >= 0.0));
        }
    }
}
