//! Physical parameters, constitutive laws and the discrete state.

use crate::error::{check_len, Error, Result};
use crate::geometry::Mesh;

/// Bulk–surface exchange law applied to `s = k1 V - k2 u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExchangeLaw {
    Linear,
    /// `q_m(s) = m tanh(s / m)`.
    Truncated { m: f64 },
}

impl ExchangeLaw {
    #[inline]
    pub fn apply(&self, s: f64) -> f64 {
        match *self {
            ExchangeLaw::Linear => s,
            ExchangeLaw::Truncated { m } => m * (s / m).tanh(),
        }
    }
}

/// Neumann source law for `c` on the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceLaw {
    Linear,
    /// `z(u) = z_max tanh(beta u / z_max)`.
    Truncated { z_max: f64 },
}

impl SourceLaw {
    #[inline]
    pub fn apply(&self, beta: f64, u: f64) -> f64 {
        match *self {
            SourceLaw::Linear => beta * u,
            SourceLaw::Truncated { z_max } => z_max * (beta * u / z_max).tanh(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parameters {
    /// Bulk diffusivity of `V`.
    pub diffusivity: f64,
    /// Surface diffusivity of `u`.
    pub surface_diffusivity: f64,
    /// Decay rate of `c`.
    pub alpha: f64,
    /// Gain of the boundary source for `c`.
    pub beta: f64,
    /// Attachment rate.
    pub k1: f64,
    /// Detachment rate.
    pub k2: f64,
    pub exchange: ExchangeLaw,
    pub source: SourceLaw,
}

impl Default for Parameters {
    fn default() -> Self {
        Parameters {
            diffusivity: 1.0,
            surface_diffusivity: 0.1,
            alpha: 1.0,
            beta: 1.0,
            k1: 1.0,
            k2: 1.0,
            exchange: ExchangeLaw::Linear,
            source: SourceLaw::Linear,
        }
    }
}

impl Parameters {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("D", self.diffusivity),
            ("d", self.surface_diffusivity),
            ("alpha", self.alpha),
            ("k1", self.k1),
            ("k2", self.k2),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(format!(
                    "{name} must be strictly positive, got {value}"
                )));
            }
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::config(format!(
                "beta must be nonnegative, got {}",
                self.beta
            )));
        }
        if let ExchangeLaw::Truncated { m } = self.exchange {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::config(format!(
                    "exchange bound m must be strictly positive, got {m}"
                )));
            }
        }
        if let SourceLaw::Truncated { z_max } = self.source {
            if !(z_max.is_finite() && z_max > 0.0) {
                return Err(Error::config(format!(
                    "source bound z_max must be strictly positive, got {z_max}"
                )));
            }
        }
        Ok(())
    }

    /// Weight `(k2/k1)^(p-1)` of the surface term in `Q_p`.
    pub fn q_weight(&self, p: f64) -> f64 {
        (self.k2 / self.k1).powf(p - 1.0)
    }
}

/// Pointwise exchange flux from bulk to surface.
pub fn exchange_flux(law: ExchangeLaw, k1: f64, k2: f64, v_trace: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_len("surface field u", v_trace.len(), u.len())?;
    Ok(v_trace
        .iter()
        .zip(u)
        .map(|(&v, &u)| law.apply(k1 * v - k2 * u))
        .collect())
}

/// Neumann data `nu . grad c` on each surface node.
pub fn c_boundary_source(law: SourceLaw, beta: f64, u: &[f64]) -> Vec<f64> {
    u.iter().map(|&u| law.apply(beta, u)).collect()
}

/// Time plus the discrete fields. `c` is always derived from `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    /// Bulk concentration, one value per cell.
    pub v: Vec<f64>,
    /// Membrane concentration, one value per surface node.
    pub u: Vec<f64>,
    /// Signal field, one value per cell.
    pub c: Vec<f64>,
}

impl State {
    pub fn zeros(mesh: &Mesh) -> Self {
        State {
            t: 0.0,
            v: vec![0.0; mesh.n_cells()],
            u: vec![0.0; mesh.n_nodes()],
            c: vec![0.0; mesh.n_cells()],
        }
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        mesh.check_bulk("V", &self.v)?;
        mesh.check_surface("u", &self.u)?;
        mesh.check_bulk("c", &self.c)?;
        if !self.t.is_finite() {
            return Err(Error::NonFinite("t"));
        }
        if !self.v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("V"));
        }
        if !self.u.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("u"));
        }
        if !self.c.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("c"));
        }
        Ok(())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.v.iter().chain(&self.u).all(|&x| x >= 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_exchange_arithmetic() {
        let q = exchange_flux(ExchangeLaw::Linear, 2.0, 1.0, &[3.0], &[4.0]).unwrap();
        assert_eq!(q, vec![2.0]);
    }

    #[test]
    fn exchange_vanishes_at_equilibrium() {
        for law in [ExchangeLaw::Linear, ExchangeLaw::Truncated { m: 0.3 }] {
            let (k1, k2) = (2.0, 3.0);
            let u = [0.0, 1.0, 7.5];
            let v: Vec<f64> = u.iter().map(|u| k2 / k1 * u).collect();
            let q = exchange_flux(law, k1, k2, &v, &u).unwrap();
            assert!(q.iter().all(|q| q.abs() < 1e-15), "{q:?}");
        }
    }

    #[test]
    fn truncated_exchange_saturates() {
        let q = exchange_flux(ExchangeLaw::Truncated { m: 1.0 }, 1.0, 1.0, &[100.0], &[0.0]).unwrap();
        assert!(q[0] <= 1.0);
        assert!((q[0] - 100f64.tanh()).abs() < 1e-15);
        assert!(1.0 - q[0] < 1e-12);
    }

    #[test]
    fn exchange_length_mismatch() {
        assert!(matches!(
            exchange_flux(ExchangeLaw::Linear, 1.0, 1.0, &[1.0, 2.0], &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn source_examples() {
        assert_eq!(c_boundary_source(SourceLaw::Linear, 0.5, &[2.0]), vec![1.0]);
        assert_eq!(c_boundary_source(SourceLaw::Linear, 0.5, &[0.0]), vec![0.0]);
        assert_eq!(
            c_boundary_source(SourceLaw::Truncated { z_max: 2.0 }, 0.5, &[0.0]),
            vec![0.0]
        );
        let g = c_boundary_source(SourceLaw::Truncated { z_max: 1.0 }, 1.0, &[1e6]);
        assert!(g[0] > 1.0 - 1e-9 && g[0] <= 1.0);
    }

    #[test]
    fn parameter_validation() {
        Parameters::default().validate().unwrap();
        let bad = [
            Parameters { diffusivity: -1.0, ..Default::default() },
            Parameters { surface_diffusivity: 0.0, ..Default::default() },
            Parameters { alpha: 0.0, ..Default::default() },
            Parameters { beta: -0.1, ..Default::default() },
            Parameters { k1: 0.0, ..Default::default() },
            Parameters { k2: f64::NAN, ..Default::default() },
            Parameters { exchange: ExchangeLaw::Truncated { m: 0.0 }, ..Default::default() },
            Parameters { source: SourceLaw::Truncated { z_max: -1.0 }, ..Default::default() },
        ];
        for p in bad {
            assert!(matches!(p.validate(), Err(Error::Config(_))), "{p:?}");
        }
        Parameters { beta: 0.0, ..Default::default() }.validate().unwrap();
    }

    proptest! {
        #[test]
        fn exchange_monotone_in_v(
            m in 0.01f64..10.0,
            k1 in 0.1f64..5.0,
            k2 in 0.1f64..5.0,
            u in 0.0f64..20.0,
            v in 0.0f64..20.0,
            dv in 0.0f64..5.0,
        ) {
            for law in [ExchangeLaw::Linear, ExchangeLaw::Truncated { m }] {
                let a = law.apply(k1 * v - k2 * u);
                let b = law.apply(k1 * (v + dv) - k2 * u);
                prop_assert!(b >= a);
                // sign structure
                if k1 * v >= k2 * u { prop_assert!(a >= 0.0) } else { prop_assert!(a <= 0.0) }
            }
        }

        #[test]
        fn truncated_exchange_bounds(m in 0.01f64..10.0, s in -1e3f64..1e3) {
            let law = ExchangeLaw::Truncated { m };
            let q = law.apply(s);
            prop_assert!(q.abs() <= m);
            prop_assert_eq!(law.apply(0.0), 0.0);
            // pointwise convergence to the linear law
            prop_assert!((q - s).abs() <= s.abs().powi(3) / (3.0 * m * m) * (1.0 + 1e-12) + 1e-15);
        }

        #[test]
        fn truncated_source_bounds(z in 0.01f64..10.0, beta in 0.0f64..5.0, u in 0.0f64..1e3, du in 0.0f64..10.0) {
            let law = SourceLaw::Truncated { z_max: z };
            let g = law.apply(beta, u);
            prop_assert!((0.0..=z).contains(&g));
            prop_assert!(law.apply(beta, u + du) >= g);
            let s = beta * u;
            prop_assert!((g - s).abs() <= s.powi(3) / (3.0 * z * z) * (1.0 + 1e-12) + 1e-15);
        }
    }
}
