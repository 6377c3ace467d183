//! Sparse operators assembled from triplets, Jacobi-preconditioned
//! conjugate gradients (symmetric systems) and BiCGSTAB (nonsymmetric), and a
//! banded LU for the small-bandwidth time-step systems.

use std::fmt;

use crate::error::{check_len, Error, Result};

/// Square sparse matrix. Triplets are kept as assembled; a compressed-row
/// copy with duplicates summed is used for products.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    triplets: Vec<(usize, usize, f64)>,
    symmetric: bool,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

impl SparseOperator {
    pub fn from_triplets(dim: usize, triplets: Vec<(usize, usize, f64)>, symmetric: bool) -> Self {
        let mut sorted = triplets.clone();
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last = None;
        for (r, c, v) in sorted {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside {dim}x{dim}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut diag = vec![0.0; dim];
        for (r, d) in diag.iter_mut().enumerate() {
            for k in row_ptr[r]..row_ptr[r + 1] {
                if cols[k] == r {
                    *d = vals[k];
                }
            }
        }
        SparseOperator {
            dim,
            triplets,
            symmetric,
            row_ptr,
            cols,
            vals,
            diag,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.triplets
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.dim)
            .flat_map(|r| self.cols[self.row_ptr[r]..self.row_ptr[r + 1]].iter().map(move |&c| r.abs_diff(c)))
            .max()
            .unwrap_or(0)
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Compressed entries of row `r` as `(column, value)` pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    /// Dense copy; only for tests and small debugging problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.dim]; self.dim];
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                a[r][c] = v;
            }
        }
        a
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yr = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.apply_into(x, &mut y);
        y
    }

    /// `b - A x`.
    pub fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut r = self.apply(x);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolveReport {
    pub iterations: usize,
    /// Final true residual `||b - A x||_2`.
    pub residual: f64,
    pub converged: bool,
}

impl fmt::Display for LinearSolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iterations={}, residual={:e}, converged={}",
            self.iterations, self.residual, self.converged
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative tolerance on `||b - A x|| / ||b||`; absolute when `b = 0`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-12,
            max_iters: 10_000,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn threshold(b: &[f64], tol: f64) -> f64 {
    let nb = norm(b);
    if nb > 0.0 {
        tol * nb
    } else {
        tol
    }
}

fn finish(a: &SparseOperator, x: Vec<f64>, b: &[f64], iterations: usize, tol: f64) -> Result<(Vec<f64>, LinearSolveReport)> {
    let residual = norm(&a.residual(&x, b));
    let report = LinearSolveReport {
        iterations,
        residual,
        converged: residual.is_finite() && residual <= threshold(b, tol),
    };
    if report.converged && x.iter().all(|v| v.is_finite()) {
        Ok((x, report))
    } else {
        Err(Error::Solver { report })
    }
}

fn inverse_diagonal(a: &SparseOperator) -> Vec<f64> {
    a.diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect()
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive-definite `a`.
pub fn conjugate_gradient(a: &SparseOperator, b: &[f64], x0: Option<&[f64]>, opts: SolverOptions) -> Result<(Vec<f64>, LinearSolveReport)> {
    check_len("right-hand side", a.dim(), b.len())?;
    let n = a.dim();
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    check_len("initial guess", n, x.len())?;
    let stop = threshold(b, opts.tol);
    let inv_d = inverse_diagonal(a);

    let mut r = a.residual(&x, b);
    if norm(&r) <= stop {
        return finish(a, x, b, 0, opts.tol);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_d).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        a.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        if norm(&r) <= stop {
            // guard against drift of the recursive residual
            r = a.residual(&x, b);
            if norm(&r) <= stop {
                break;
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_d[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    finish(a, x, b, iterations, opts.tol)
}

/// Jacobi-preconditioned BiCGSTAB for general nonsingular `a`. Restarts from
/// the current iterate on breakdown.
pub fn bicgstab(a: &SparseOperator, b: &[f64], x0: Option<&[f64]>, opts: SolverOptions) -> Result<(Vec<f64>, LinearSolveReport)> {
    check_len("right-hand side", a.dim(), b.len())?;
    let n = a.dim();
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    check_len("initial guess", n, x.len())?;
    let stop = threshold(b, opts.tol);
    let inv_d = inverse_diagonal(a);
    let precond = |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = v[i] * inv_d[i];
        }
    };

    let mut iterations = 0;
    let (mut p_hat, mut s_hat) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut t) = (vec![0.0; n], vec![0.0; n]);
    let mut s = vec![0.0; n];
    'restart: while iterations < opts.max_iters {
        let mut r = a.residual(&x, b);
        if norm(&r) <= stop {
            break;
        }
        let r_hat = r.clone();
        let mut p = r.clone();
        let mut rho = dot(&r_hat, &r);
        while iterations < opts.max_iters {
            iterations += 1;
            precond(&p, &mut p_hat);
            a.apply_into(&p_hat, &mut v);
            let denom = dot(&r_hat, &v);
            if denom == 0.0 || !denom.is_finite() {
                continue 'restart;
            }
            let alpha = rho / denom;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm(&s) <= stop {
                for i in 0..n {
                    x[i] += alpha * p_hat[i];
                }
                if norm(&a.residual(&x, b)) <= stop {
                    break 'restart;
                }
                continue 'restart;
            }
            precond(&s, &mut s_hat);
            a.apply_into(&s_hat, &mut t);
            let tt = dot(&t, &t);
            if tt == 0.0 || !tt.is_finite() {
                continue 'restart;
            }
            let omega = dot(&t, &s) / tt;
            for i in 0..n {
                x[i] += alpha * p_hat[i] + omega * s_hat[i];
                r[i] = s[i] - omega * t[i];
            }
            if norm(&r) <= stop {
                if norm(&a.residual(&x, b)) <= stop {
                    break 'restart;
                }
                continue 'restart;
            }
            let rho_new = dot(&r_hat, &r);
            if rho_new == 0.0 || omega == 0.0 || !rho_new.is_finite() {
                continue 'restart;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }
    }
    finish(a, x, b, iterations, opts.tol)
}

/// LU factors of a banded matrix, computed without pivoting. Intended for
/// column diagonally dominant M-matrices, for which elimination without
/// pivoting is stable. Cost is `O(n w^2)` for bandwidth `w`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    dim: usize,
    width: usize,
    /// Row `i`, column `j` lives at `i * (2w + 1) + (j + w - i)`.
    data: Vec<f64>,
}

fn singular(row: usize) -> Error {
    Error::Singular { row }
}

impl BandedLu {
    pub fn factor(a: &SparseOperator) -> Result<Self> {
        let (n, w) = (a.dim(), a.bandwidth());
        let stride = 2 * w + 1;
        let mut data = vec![0.0; n * stride];
        for r in 0..n {
            for (c, v) in a.row(r) {
                data[r * stride + c + w - r] += v;
            }
        }
        let at = |i: usize, j: usize| i * stride + j + w - i;
        for k in 0..n {
            let pivot = data[at(k, k)];
            if !(pivot != 0.0 && pivot.is_finite()) {
                return Err(singular(k));
            }
            let last = (k + w).min(n - 1);
            for i in k + 1..=last {
                let l = data[at(i, k)] / pivot;
                if l == 0.0 {
                    continue;
                }
                data[at(i, k)] = l;
                for j in k + 1..=last {
                    data[at(i, j)] -= l * data[at(k, j)];
                }
            }
        }
        Ok(BandedLu { dim: n, width: w, data })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len("right-hand side", self.dim, b.len())?;
        let (n, w) = (self.dim, self.width);
        let stride = 2 * w + 1;
        let at = |i: usize, j: usize| i * stride + j + w - i;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for j in i.saturating_sub(w)..i {
                s -= self.data[at(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..=(i + w).min(n.saturating_sub(1)) {
                s -= self.data[at(i, j)] * x[j];
            }
            x[i] = s / self.data[at(i, i)];
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(singular(n));
        }
        Ok(x)
    }
}

/// Factors and solves `a x = b` directly.
pub fn banded_solve(a: &SparseOperator, b: &[f64]) -> Result<Vec<f64>> {
    BandedLu::factor(a)?.solve(b)
}
