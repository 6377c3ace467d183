//! Monitored quantities along a trajectory: total mass, the `Q_p`
//! functionals, Lebesgue norms and a heuristic blow-up monitor.

use crate::error::{Error, Result};
use crate::geometry::{trace, Mesh};
use crate::model::{Parameters, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Bulk,
    Surface,
}

#[inline]
fn pow_abs(x: f64, p: f64) -> f64 {
    let a = x.abs();
    if p == 2.0 {
        a * a
    } else if p == 4.0 {
        let s = a * a;
        s * s
    } else {
        a.powf(p)
    }
}

fn measures(mesh: &Mesh, domain: Domain) -> Box<dyn Iterator<Item = f64> + '_> {
    match domain {
        Domain::Bulk => Box::new(mesh.cells().iter().map(|c| c.measure)),
        Domain::Surface => Box::new(mesh.surface_nodes().iter().map(|s| s.measure)),
    }
}

/// `Σ measure |f|^p` over the given domain.
pub fn power_integral(mesh: &Mesh, field: &[f64], domain: Domain, p: f64) -> f64 {
    measures(mesh, domain).zip(field).map(|(m, &f)| m * pow_abs(f, p)).sum()
}

/// `(Σ measure |f|^p)^(1/p)`.
pub fn lp_norm(mesh: &Mesh, field: &[f64], domain: Domain, p: f64) -> f64 {
    let s = power_integral(mesh, field, domain, p);
    if p == 2.0 {
        s.sqrt()
    } else {
        s.powf(1.0 / p)
    }
}

/// `M = Σ |K| V_K + Σ |σ| u_σ`.
pub fn total_mass(mesh: &Mesh, state: &State) -> f64 {
    let bulk: f64 = mesh.cells().iter().zip(&state.v).map(|(c, v)| c.measure * v).sum();
    let surface: f64 = mesh.surface_nodes().iter().zip(&state.u).map(|(s, u)| s.measure * u).sum();
    bulk + surface
}

/// `Q_p = ∫_B V^p + c1 ∫_Γ u^p` with `c1 = (k2/k1)^(p-1)`, plus `∫_Γ u²`
/// when `1 < p < 2`.
pub fn q_p(mesh: &Mesh, params: &Parameters, state: &State, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::config(format!("Q_p needs p > 1, got {p}")));
    }
    let bulk = power_integral(mesh, &state.v, Domain::Bulk, p);
    let surface = power_integral(mesh, &state.u, Domain::Surface, p);
    let mut q = bulk + params.q_weight(p) * surface;
    if p < 2.0 {
        q += power_integral(mesh, &state.u, Domain::Surface, 2.0);
    }
    Ok(q)
}

/// One time sample of the monitored quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    /// Size of the step that produced this sample (0 for the initial row).
    pub dt: f64,
    pub mass: f64,
    /// `(p, Q_p)` pairs in ascending `p`.
    pub q: Vec<(f64, f64)>,
    pub l4_v: f64,
    pub l4_u: f64,
    pub l2_u: f64,
    pub min_v: f64,
    pub max_v: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub trace_l1_v: f64,
    /// Cumulative number of exchange-limiter activations.
    pub limiter_count: u64,
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

impl DiagnosticsRow {
    /// `p_values` must be sorted ascending and all `> 1`.
    pub fn compute(
        mesh: &Mesh,
        params: &Parameters,
        state: &State,
        dt: f64,
        p_values: &[f64],
        limiter_count: u64,
    ) -> Result<Self> {
        state.validate(mesh)?;
        let q = p_values
            .iter()
            .map(|&p| q_p(mesh, params, state, p).map(|q| (p, q)))
            .collect::<Result<Vec<_>>>()?;
        let (min_v, max_v) = min_max(&state.v);
        let (min_u, max_u) = min_max(&state.u);
        let tr = trace(mesh, &state.v)?;
        Ok(DiagnosticsRow {
            t: state.t,
            dt,
            mass: total_mass(mesh, state),
            q,
            l4_v: lp_norm(mesh, &state.v, Domain::Bulk, 4.0),
            l4_u: lp_norm(mesh, &state.u, Domain::Surface, 4.0),
            l2_u: lp_norm(mesh, &state.u, Domain::Surface, 2.0),
            min_v,
            max_v,
            min_u,
            max_u,
            trace_l1_v: lp_norm(mesh, &tr, Domain::Surface, 1.0),
            limiter_count,
        })
    }

    pub fn q_value(&self, p: f64) -> Option<f64> {
        self.q.iter().find(|(pp, _)| *pp == p).map(|&(_, q)| q)
    }
}

/// Receives every recorded row together with the state it was computed from.
pub trait DiagnosticsSink {
    fn record(&mut self, row: &DiagnosticsRow, state: &State);
}

impl DiagnosticsSink for Vec<DiagnosticsRow> {
    fn record(&mut self, row: &DiagnosticsRow, _state: &State) {
        self.push(row.clone());
    }
}

/// Discards everything.
pub struct NullSink;

impl DiagnosticsSink for NullSink {
    fn record(&mut self, _row: &DiagnosticsRow, _state: &State) {}
}

/// Growth factor that counts as blow-up onset.
pub const GROWTH_THRESHOLD: f64 = 10.0;

/// Output of [`blowup_indicator`]. This is a finite-sample heuristic, not a
/// verdict on whether the continuous solution blows up.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowupReport {
    /// `max_t ||V||_L4 / ||V(0)||_L4`.
    pub growth_v: f64,
    /// `max_t ||u||_L4 / ||u(0)||_L4`.
    pub growth_u: f64,
    /// First time `||V||_L4` reached [`GROWTH_THRESHOLD`] times its initial value.
    pub onset_v: Option<f64>,
    pub onset_u: Option<f64>,
    /// Dyadic window index of each onset (see [`dyadic_window`]).
    pub window_v: Option<u32>,
    pub window_u: Option<u32>,
    /// Both norms grew past the threshold inside the same dyadic window.
    pub concurrent: bool,
    /// Least-squares slope of `ln Q_4` against `t`, if `Q_4` was recorded.
    pub q4_rate: Option<f64>,
}

impl BlowupReport {
    pub fn render(&self) -> String {
        let opt = |x: Option<f64>| x.map_or_else(|| "none".to_string(), |v| format!("{v:e}"));
        let win = |x: Option<u32>| x.map_or_else(|| "none".to_string(), |v| v.to_string());
        format!(
            "# heuristic blow-up monitor (not a proof of blow-up)\n\
             growth_v = {:e}\ngrowth_u = {:e}\nonset_v = {}\nonset_u = {}\n\
             window_v = {}\nwindow_u = {}\nconcurrent = {}\nq4_rate = {}\n",
            self.growth_v,
            self.growth_u,
            opt(self.onset_v),
            opt(self.onset_u),
            win(self.window_v),
            win(self.window_u),
            self.concurrent,
            opt(self.q4_rate),
        )
    }
}

/// Index `k` of the dyadic window `[T - L/2^k, T - L/2^(k+1))` containing `t`,
/// where `[t0, T]` is the recorded interval and `L = T - t0`. Windows shrink
/// toward the final time; `t = T` falls in the terminal window `u32::MAX`.
pub fn dyadic_window(t: f64, t0: f64, t_final: f64) -> u32 {
    let span = t_final - t0;
    let remaining = t_final - t;
    if remaining <= 0.0 || span <= 0.0 {
        return u32::MAX;
    }
    let k = (span / remaining).log2().floor();
    if k >= u32::MAX as f64 {
        u32::MAX - 1
    } else {
        k.max(0.0) as u32
    }
}

fn ratio(value: f64, initial: f64) -> f64 {
    if initial > 0.0 {
        value / initial
    } else if value > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

pub fn blowup_indicator(history: &[DiagnosticsRow]) -> Result<BlowupReport> {
    let first = history
        .first()
        .ok_or_else(|| Error::config("blow-up indicator needs a nonempty history"))?;
    let last = history.last().unwrap();
    let (t0, t_final) = (first.t, last.t);

    let track = |norm: fn(&DiagnosticsRow) -> f64| {
        let initial = norm(first);
        let growth = history.iter().map(|r| ratio(norm(r), initial)).fold(1.0, f64::max);
        let onset = history
            .iter()
            .find(|r| ratio(norm(r), initial) >= GROWTH_THRESHOLD)
            .map(|r| r.t);
        (growth, onset)
    };
    let (growth_v, onset_v) = track(|r| r.l4_v);
    let (growth_u, onset_u) = track(|r| r.l4_u);
    let window_v = onset_v.map(|t| dyadic_window(t, t0, t_final));
    let window_u = onset_u.map(|t| dyadic_window(t, t0, t_final));
    let concurrent = matches!((window_v, window_u), (Some(a), Some(b)) if a == b);

    let samples: Vec<(f64, f64)> = history
        .iter()
        .filter_map(|r| r.q_value(4.0).filter(|&q| q > 0.0).map(|q| (r.t, q.ln())))
        .collect();
    let q4_rate = least_squares_slope(&samples);

    Ok(BlowupReport {
        growth_v,
        growth_u,
        onset_v,
        onset_u,
        window_v,
        window_u,
        concurrent,
        q4_rate,
    })
}

pub(crate) fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_disk_mesh, build_radial_ball_mesh};
    use std::f64::consts::PI;

    fn constant_state(mesh: &Mesh, v: f64, u: f64) -> State {
        State {
            t: 0.0,
            v: vec![v; mesh.n_cells()],
            u: vec![u; mesh.n_nodes()],
            c: vec![0.0; mesh.n_cells()],
        }
    }

    #[test]
    fn mass_examples() {
        let ball = build_radial_ball_mesh(1.0, 5).unwrap();
        let m = total_mass(&ball, &constant_state(&ball, 1.0, 1.0));
        assert!((m - (4.0 * PI / 3.0 + 4.0 * PI)).abs() < 1e-13);
        assert_eq!(total_mass(&ball, &State::zeros(&ball)), 0.0);
        let disk = build_disk_mesh(1.0, 4, 16).unwrap();
        let m = total_mass(&disk, &constant_state(&disk, 2.0, 0.5));
        assert!((m - 3.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn q_p_examples() {
        let ball = build_radial_ball_mesh(1.0, 3).unwrap();
        let p = Parameters::default();
        for pp in [1.5, 2.0, 3.0, 4.0] {
            assert_eq!(q_p(&ball, &p, &State::zeros(&ball), pp).unwrap(), 0.0);
        }
        let q = q_p(&ball, &p, &constant_state(&ball, 1.0, 1.0), 2.0).unwrap();
        assert!((q - (4.0 * PI / 3.0 + 4.0 * PI)).abs() < 1e-13);

        let disk = build_disk_mesh(1.0, 3, 12).unwrap();
        let p = Parameters { k1: 1.0, k2: 4.0, ..Default::default() };
        let q = q_p(&disk, &p, &constant_state(&disk, 1.0, 1.0), 1.5).unwrap();
        assert!((q - 7.0 * PI).abs() < 1e-13, "{q}");

        assert!(q_p(&disk, &p, &State::zeros(&disk), 1.0).is_err());
        assert!(q_p(&disk, &p, &State::zeros(&disk), 0.5).is_err());
    }

    #[test]
    fn norm_examples() {
        let disk = build_disk_mesh(1.0, 2, 10).unwrap();
        let n = lp_norm(&disk, &[1.0; 10], Domain::Surface, 2.0);
        assert!((n - (2.0 * PI).sqrt()).abs() < 1e-14);
        assert_eq!(lp_norm(&disk, &[0.0; 20], Domain::Bulk, 3.0), 0.0);
        let ball = build_radial_ball_mesh(1.0, 6).unwrap();
        let n = lp_norm(&ball, &[2.0; 6], Domain::Bulk, 4.0);
        assert!((n - 2.0 * (4.0 * PI / 3.0f64).powf(0.25)).abs() < 1e-14);
    }

    #[test]
    fn q2_is_sum_of_squared_l2_norms() {
        let disk = build_disk_mesh(1.3, 4, 9).unwrap();
        let p = Parameters { k1: 2.0, k2: 3.0, ..Default::default() };
        let state = State {
            t: 0.0,
            v: (0..36).map(|i| (i as f64 * 0.37).sin().abs()).collect(),
            u: (0..9).map(|i| 1.0 + i as f64 * 0.1).collect(),
            c: vec![0.0; 36],
        };
        let q2 = q_p(&disk, &p, &state, 2.0).unwrap();
        let from_sums = power_integral(&disk, &state.v, Domain::Bulk, 2.0)
            + p.q_weight(2.0) * power_integral(&disk, &state.u, Domain::Surface, 2.0);
        assert_eq!(q2.to_bits(), from_sums.to_bits());
        let from_norms = lp_norm(&disk, &state.v, Domain::Bulk, 2.0).powi(2)
            + 1.5 * lp_norm(&disk, &state.u, Domain::Surface, 2.0).powi(2);
        assert!((q2 - from_norms).abs() <= 1e-14 * q2);

        let a = DiagnosticsRow::compute(&disk, &p, &state, 0.1, &[2.0, 4.0], 3).unwrap();
        let b = DiagnosticsRow::compute(&disk, &p, &state, 0.1, &[2.0, 4.0], 3).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_eq!(a.mass.to_bits(), total_mass(&disk, &state).to_bits());
    }

    fn row(t: f64, l4_v: f64, l4_u: f64) -> DiagnosticsRow {
        DiagnosticsRow {
            t,
            dt: 0.0,
            mass: 1.0,
            q: vec![(2.0, 1.0), (4.0, (l4_v.powi(4) + l4_u.powi(4)).max(1e-300))],
            l4_v,
            l4_u,
            l2_u: 1.0,
            min_v: 0.0,
            max_v: 1.0,
            min_u: 0.0,
            max_u: 1.0,
            trace_l1_v: 1.0,
            limiter_count: 0,
        }
    }

    #[test]
    fn constant_history_has_no_flags() {
        let h: Vec<_> = (0..20).map(|i| row(i as f64, 1.0, 2.0)).collect();
        let r = blowup_indicator(&h).unwrap();
        assert_eq!(r.growth_v, 1.0);
        assert_eq!(r.growth_u, 1.0);
        assert!(!r.concurrent);
        assert_eq!(r.onset_v, None);
        assert_eq!(r.q4_rate, Some(0.0));
    }

    #[test]
    fn only_v_growing_is_not_concurrent() {
        let h: Vec<_> = (0..=16).map(|i| row(i as f64, 1.0 + i as f64, 1.0)).collect();
        let r = blowup_indicator(&h).unwrap();
        assert!(r.growth_v >= 10.0);
        assert!(r.onset_v.is_some());
        assert!(r.onset_u.is_none());
        assert!(!r.concurrent);
    }

    #[test]
    fn simultaneous_growth_is_concurrent() {
        let h: Vec<_> = (0..=160)
            .map(|i| {
                let t = i as f64 * 0.1;
                let g = if t >= 15.0 { 20.0 } else { 1.0 };
                row(t, g, 3.0 * g)
            })
            .collect();
        let r = blowup_indicator(&h).unwrap();
        assert!(r.concurrent, "{r:?}");
        assert_eq!(r.window_v, r.window_u);

        // same growth but separated in time lands in different windows
        let h: Vec<_> = (0..=160)
            .map(|i| {
                let t = i as f64 * 0.1;
                let gv = if t >= 4.0 { 20.0 } else { 1.0 };
                let gu = if t >= 15.0 { 20.0 } else { 1.0 };
                row(t, gv, gu)
            })
            .collect();
        let r = blowup_indicator(&h).unwrap();
        assert!(!r.concurrent, "{r:?}");
    }

    #[test]
    fn dyadic_windows() {
        assert_eq!(dyadic_window(0.0, 0.0, 8.0), 0);
        assert_eq!(dyadic_window(3.9, 0.0, 8.0), 0);
        assert_eq!(dyadic_window(4.0, 0.0, 8.0), 1);
        assert_eq!(dyadic_window(6.5, 0.0, 8.0), 2);
        assert_eq!(dyadic_window(8.0, 0.0, 8.0), u32::MAX);
    }

    #[test]
    fn q4_rate_recovers_exponential() {
        let h: Vec<_> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.2;
                let mut r = row(t, 1.0, 1.0);
                r.q = vec![(4.0, (0.7 * t).exp())];
                r
            })
            .collect();
        let rate = blowup_indicator(&h).unwrap().q4_rate.unwrap();
        assert!((rate - 0.7).abs() < 1e-12);
    }

    #[test]
    fn empty_history_rejected() {
        assert!(blowup_indicator(&[]).is_err());
    }
}
