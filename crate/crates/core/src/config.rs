//! Run configuration: a line-oriented `key = value` format with `[section]`
//! headers, `#` comments, and a normalized serializer.
//!
//! ```text
//! scenario = small-data
//! t_end = 20
//!
//! [geometry]
//! kind = disk
//! R = 1
//! nr = 16
//! ntheta = 32
//!
//! [parameters]
//! exchange = truncated
//! m = 1
//!
//! [initial]
//! kind = gaussian
//! amplitude = 1
//! width = 0.5
//! normalize_q2 = 1e-3
//! ```
//!
//! Every key except `[geometry] kind` and the matching mesh sizes has a
//! default; unknown keys and keys that do not apply are errors.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::diagnostics::q_p;
use crate::elliptic::solve_c;
use crate::error::{Error, Result};
use crate::geometry::{Geometry, Mesh};
use crate::io::read_snapshot;
use crate::model::{ExchangeLaw, Parameters, SourceLaw, State};
use crate::stepper::{Recording, StepperConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Uniform levels.
    Constant { v: f64, u: f64 },
    /// `u = u_bg + A exp(-δ²/(2w²))` with `δ` the angular distance to
    /// `center`, `V ≡ v_bg`. With `normalize_q2` the whole state is then
    /// rescaled so that `Q_2` takes that value. On a radial ball the single
    /// membrane node takes the peak value `u_bg + A`.
    Gaussian {
        v: f64,
        u: f64,
        amplitude: f64,
        width: f64,
        center: f64,
        normalize_q2: Option<f64>,
    },
    /// Fields loaded from a snapshot file; `c` is recomputed from `u`.
    Snapshot { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsConfig {
    /// Record every `every`-th accepted step.
    pub every: usize,
    /// Ascending exponents for the `Q_p` columns.
    pub p_values: Vec<f64>,
    /// Write a snapshot each time `t` crosses a multiple of this; 0 keeps
    /// only the initial and final snapshots.
    pub snapshot_every: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            every: 1,
            p_values: vec![2.0, 4.0],
            snapshot_every: 0.0,
        }
    }
}

impl DiagnosticsConfig {
    pub fn recording(&self) -> Recording {
        Recording {
            p_values: self.p_values.clone(),
            every: self.every,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: String,
    pub t_end: f64,
    pub geometry: Geometry,
    pub params: Parameters,
    pub stepper: StepperConfig,
    pub initial: InitialCondition,
    pub diagnostics: DiagnosticsConfig,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Defaults around a given geometry.
    pub fn new(scenario: &str, geometry: Geometry) -> Self {
        RunConfig {
            scenario: scenario.to_string(),
            t_end: 1.0,
            geometry,
            params: Parameters::default(),
            stepper: StepperConfig::default(),
            initial: InitialCondition::Constant { v: 1.0, u: 1.0 },
            diagnostics: DiagnosticsConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }

    /// Makes a relative snapshot path relative to `base` (normally the
    /// directory holding the config file).
    pub fn resolve_paths(&mut self, base: &Path) {
        if let InitialCondition::Snapshot { path } = &mut self.initial {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    /// Builds the mesh and the initial state, with `c` solved from `u`.
    pub fn initial_state(&self, mesh: &Mesh) -> Result<State> {
        let (v, u) = match &self.initial {
            InitialCondition::Constant { v, u } => (vec![*v; mesh.n_cells()], vec![*u; mesh.n_nodes()]),
            InitialCondition::Gaussian {
                v,
                u,
                amplitude,
                width,
                center,
                normalize_q2,
            } => {
                let radial = mesh.kind() == crate::geometry::GeometryKind::RadialBall;
                let bump = |theta: f64| {
                    if radial {
                        return *amplitude;
                    }
                    let d = (theta - center).rem_euclid(2.0 * PI);
                    let d = d.min(2.0 * PI - d);
                    amplitude * (-d * d / (2.0 * width * width)).exp()
                };
                let mut vs = vec![*v; mesh.n_cells()];
                let mut us: Vec<f64> = mesh.surface_nodes().iter().map(|s| u + bump(s.angle)).collect();
                if let Some(target) = normalize_q2 {
                    let probe = State {
                        t: 0.0,
                        v: vs.clone(),
                        u: us.clone(),
                        c: vec![0.0; mesh.n_cells()],
                    };
                    let q2 = q_p(mesh, &self.params, &probe, 2.0)?;
                    if !(q2 > 0.0) {
                        return Err(Error::config("cannot normalize Q_2 of an all-zero initial state"));
                    }
                    let s = (target / q2).sqrt();
                    vs.iter_mut().chain(us.iter_mut()).for_each(|x| *x *= s);
                }
                (vs, us)
            }
            InitialCondition::Snapshot { path } => {
                let (state, header) = read_snapshot(path)?;
                if header.geometry != mesh.geometry() {
                    return Err(Error::config(format!(
                        "snapshot {} was written on {:?}, not {:?}",
                        path.display(),
                        header.geometry,
                        mesh.geometry()
                    )));
                }
                (state.v, state.u)
            }
        };
        let c = solve_c(mesh, &self.params, &u, self.stepper.linear_tol)?;
        let state = State { t: 0.0, v, u, c };
        state.validate(mesh)?;
        if !state.is_nonnegative() {
            return Err(Error::config("initial data must be nonnegative"));
        }
        Ok(state)
    }

    /// Normalized text form; `parse_config(&cfg.to_config_string())`
    /// reproduces `cfg`.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let kv = |s: &mut String, k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv(&mut s, "scenario", self.scenario.clone());
        kv(&mut s, "t_end", num(self.t_end));

        s.push_str("\n[geometry]\n");
        match self.geometry {
            Geometry::RadialBall { radius, n } => {
                kv(&mut s, "kind", "radial_ball".into());
                kv(&mut s, "R", num(radius));
                kv(&mut s, "n", n.to_string());
            }
            Geometry::Disk { radius, nr, ntheta } => {
                kv(&mut s, "kind", "disk".into());
                kv(&mut s, "R", num(radius));
                kv(&mut s, "nr", nr.to_string());
                kv(&mut s, "ntheta", ntheta.to_string());
            }
        }

        let p = &self.params;
        s.push_str("\n[parameters]\n");
        kv(&mut s, "D", num(p.diffusivity));
        kv(&mut s, "d", num(p.surface_diffusivity));
        kv(&mut s, "alpha", num(p.alpha));
        kv(&mut s, "beta", num(p.beta));
        kv(&mut s, "k1", num(p.k1));
        kv(&mut s, "k2", num(p.k2));
        match p.exchange {
            ExchangeLaw::Linear => kv(&mut s, "exchange", "linear".into()),
            ExchangeLaw::Truncated { m } => {
                kv(&mut s, "exchange", "truncated".into());
                kv(&mut s, "m", num(m));
            }
        }
        match p.source {
            SourceLaw::Linear => kv(&mut s, "source", "linear".into()),
            SourceLaw::Truncated { z_max } => {
                kv(&mut s, "source", "truncated".into());
                kv(&mut s, "z_max", num(z_max));
            }
        }

        let st = &self.stepper;
        s.push_str("\n[stepper]\n");
        kv(&mut s, "dt_init", num(st.dt_init));
        kv(&mut s, "dt_min", num(st.dt_min));
        kv(&mut s, "dt_max", num(st.dt_max));
        kv(&mut s, "grow", num(st.grow));
        kv(&mut s, "shrink", num(st.shrink));
        kv(&mut s, "max_rel_change", num(st.max_rel_change));
        kv(&mut s, "linear_tol", num(st.linear_tol));
        kv(&mut s, "blowup_factor", num(st.blowup_factor));
        kv(&mut s, "max_pinned", st.max_pinned.to_string());
        kv(&mut s, "max_steps", st.max_steps.to_string());

        s.push_str("\n[initial]\n");
        match &self.initial {
            InitialCondition::Constant { v, u } => {
                kv(&mut s, "kind", "constant".into());
                kv(&mut s, "V", num(*v));
                kv(&mut s, "u", num(*u));
            }
            InitialCondition::Gaussian {
                v,
                u,
                amplitude,
                width,
                center,
                normalize_q2,
            } => {
                kv(&mut s, "kind", "gaussian".into());
                kv(&mut s, "V", num(*v));
                kv(&mut s, "u", num(*u));
                kv(&mut s, "amplitude", num(*amplitude));
                kv(&mut s, "width", num(*width));
                kv(&mut s, "center", num(*center));
                if let Some(q) = normalize_q2 {
                    kv(&mut s, "normalize_q2", num(*q));
                }
            }
            InitialCondition::Snapshot { path } => {
                kv(&mut s, "kind", "snapshot".into());
                kv(&mut s, "path", path.display().to_string());
            }
        }

        let d = &self.diagnostics;
        s.push_str("\n[diagnostics]\n");
        kv(&mut s, "every", d.every.to_string());
        kv(&mut s, "p", d.p_values.iter().map(|&p| num(p)).collect::<Vec<_>>().join(", "));
        kv(&mut s, "snapshot_every", num(d.snapshot_every));

        s.push_str("\n[output]\n");
        kv(&mut s, "dir", self.output_dir.display().to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.stepper.validate()?;
        self.geometry.build()?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::config(format!("t_end must be finite and nonnegative, got {}", self.t_end)));
        }
        validate_p_values(&self.diagnostics.p_values).map_err(Error::Config)?;
        if self.diagnostics.every == 0 {
            return Err(Error::config("diagnostics cadence must be at least 1"));
        }
        if !(self.diagnostics.snapshot_every >= 0.0 && self.diagnostics.snapshot_every.is_finite()) {
            return Err(Error::config("snapshot_every must be finite and nonnegative"));
        }
        match &self.initial {
            InitialCondition::Constant { v, u } => {
                if !(*v >= 0.0 && *u >= 0.0) {
                    return Err(Error::config("initial levels must be nonnegative"));
                }
            }
            InitialCondition::Gaussian {
                v,
                u,
                amplitude,
                width,
                normalize_q2,
                ..
            } => {
                if !(*v >= 0.0 && *u >= 0.0 && *amplitude >= 0.0) {
                    return Err(Error::config("initial levels and amplitude must be nonnegative"));
                }
                if !(*width > 0.0) {
                    return Err(Error::config("gaussian width must be positive"));
                }
                if let Some(q) = normalize_q2 {
                    if !(*q > 0.0 && q.is_finite()) {
                        return Err(Error::config("normalize_q2 must be positive"));
                    }
                }
            }
            InitialCondition::Snapshot { .. } => {}
        }
        Ok(())
    }
}

/// Every settable key as `(section, key)`; the top level is `""`.
pub fn config_keys() -> impl Iterator<Item = (&'static str, &'static str)> {
    TOP_KEYS.iter().map(|k| ("", *k)).chain(SECTIONS.iter().flat_map(|(s, keys)| keys.iter().map(move |k| (*s, *k))))
}

impl RunConfig {
    /// Returns a copy with one key replaced, validated like a parsed file.
    /// `name` is `section.key` or a bare key that is unique across sections.
    pub fn with_override(&self, name: &str, value: &str) -> Result<RunConfig> {
        let (section, key) = match name.split_once('.') {
            Some((s, k)) => (s.to_string(), k.to_string()),
            None => {
                let hits: Vec<_> = config_keys().filter(|(_, k)| *k == name).collect();
                match hits.as_slice() {
                    [(s, k)] => (s.to_string(), k.to_string()),
                    [] => return Err(Error::config(format!("unknown setting `{name}`"))),
                    _ => {
                        let opts: Vec<String> = hits.iter().map(|(s, k)| format!("{s}.{k}")).collect();
                        return Err(Error::config(format!("`{name}` is ambiguous; use one of {}", opts.join(", "))));
                    }
                }
            }
        };
        if !config_keys().any(|(s, k)| s == section && k == key) {
            return Err(Error::config(format!("unknown setting `{name}`")));
        }
        let text = self.to_config_string();
        let mut out = String::with_capacity(text.len() + 32);
        let mut current = String::new();
        let mut done = false;
        for line in text.lines() {
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                if !done && current == section {
                    out.push_str(&format!("{key} = {value}\n"));
                    done = true;
                }
                current = name.to_string();
            } else if current == section && line.split_once('=').is_some_and(|(k, _)| k.trim() == key) {
                out.push_str(&format!("{key} = {value}\n"));
                done = true;
                continue;
            }
            out.push_str(line);
            out.push('\n');
        }
        if !done {
            if current != section {
                out.push_str(&format!("[{section}]\n"));
            }
            out.push_str(&format!("{key} = {value}\n"));
        }
        parse_config(&out).map_err(|e| Error::config(format!("{name} = {value}: {e}")))
    }
}

/// Shortest text that parses back to `x`.
fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e6).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn validate_p_values(ps: &[f64]) -> std::result::Result<(), String> {
    if ps.iter().any(|&p| !(p > 1.0 && p.is_finite())) {
        return Err(format!("every p must exceed 1, got {ps:?}"));
    }
    if ps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(format!("p values must be strictly ascending, got {ps:?}"));
    }
    Ok(())
}

const TOP_KEYS: &[&str] = &["scenario", "t_end"];
const SECTIONS: &[(&str, &[&str])] = &[
    ("geometry", &["kind", "R", "n", "nr", "ntheta"]),
    ("parameters", &["D", "d", "alpha", "beta", "k1", "k2", "exchange", "m", "source", "z_max"]),
    (
        "stepper",
        &[
            "dt_init",
            "dt_min",
            "dt_max",
            "grow",
            "shrink",
            "max_rel_change",
            "linear_tol",
            "blowup_factor",
            "max_pinned",
            "max_steps",
        ],
    ),
    ("initial", &["kind", "V", "u", "amplitude", "width", "center", "normalize_q2", "path"]),
    ("diagnostics", &["every", "p", "snapshot_every"]),
    ("output", &["dir"]),
];

#[derive(Debug)]
struct Entry {
    value: String,
    line: usize,
    used: bool,
}

/// Key/value pairs of one section, consumed as the config is built so that
/// leftovers can be reported.
struct Section {
    name: String,
    line: usize,
    entries: BTreeMap<String, Entry>,
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::ConfigParse {
        line,
        message: message.into(),
    }
}

impl Section {
    fn qualified(&self, key: &str) -> String {
        if self.name.is_empty() {
            key.to_string()
        } else {
            format!("[{}] {key}", self.name)
        }
    }

    fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn required(&mut self, key: &str) -> Result<(String, usize)> {
        let line = self.line;
        let name = self.qualified(key);
        self.raw(key).ok_or_else(|| err(line, format!("missing required key `{name}`")))
    }

    fn parse_num<T: std::str::FromStr>(&self, key: &str, v: &str, line: usize, what: &str) -> Result<T> {
        v.parse()
            .map_err(|_| err(line, format!("`{}` expects {what}, found `{v}`", self.qualified(key))))
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, line)) => {
                let x: f64 = self.parse_num(key, &v, line, "a number")?;
                if !x.is_finite() {
                    return Err(err(line, format!("`{}` must be finite", self.qualified(key))));
                }
                Ok(x)
            }
        }
    }

    fn f64_checked(&mut self, key: &str, default: f64, ok: fn(f64) -> bool, rule: &str) -> Result<f64> {
        let line = self.entries.get(key).map_or(self.line, |e| e.line);
        let x = self.f64_or(key, default)?;
        if !ok(x) {
            return Err(err(line, format!("`{}` must be {rule}, got {x}", self.qualified(key))));
        }
        Ok(x)
    }

    fn positive(&mut self, key: &str, default: f64) -> Result<f64> {
        self.f64_checked(key, default, |x| x > 0.0, "strictly positive")
    }

    fn nonneg(&mut self, key: &str, default: f64) -> Result<f64> {
        self.f64_checked(key, default, |x| x >= 0.0, "nonnegative")
    }

    fn count(&mut self, key: &str, default: Option<usize>) -> Result<usize> {
        let (v, line) = match (self.raw(key), default) {
            (Some(x), _) => x,
            (None, Some(d)) => return Ok(d),
            (None, None) => self.required(key)?,
        };
        let n: usize = self.parse_num(key, &v, line, "a nonnegative integer")?;
        if n == 0 {
            return Err(err(line, format!("`{}` must be at least 1", self.qualified(key))));
        }
        Ok(n)
    }

    /// Rejects a key that is present but does not apply.
    fn forbid(&self, key: &str, reason: &str) -> Result<()> {
        match self.entries.get(key) {
            Some(e) => Err(err(e.line, format!("`{}` {reason}", self.qualified(key)))),
            None => Ok(()),
        }
    }
}

fn split_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections = vec![Section {
        name: String::new(),
        line: 1,
        entries: BTreeMap::new(),
    }];
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if t.is_empty() {
            continue;
        }
        if let Some(name) = t.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(line, format!("malformed section header `{t}`")))?
                .trim();
            if !SECTIONS.iter().any(|(s, _)| *s == name) {
                return Err(err(line, format!("unknown section `[{name}]`")));
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(err(line, format!("duplicate section `[{name}]`")));
            }
            sections.push(Section {
                name: name.to_string(),
                line,
                entries: BTreeMap::new(),
            });
            continue;
        }
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected `key = value`, found `{t}`")))?;
        let (k, v) = (k.trim(), v.trim());
        let section = sections.last_mut().unwrap();
        let allowed: &[&str] = if section.name.is_empty() {
            TOP_KEYS
        } else {
            SECTIONS.iter().find(|(s, _)| *s == section.name).unwrap().1
        };
        if !allowed.contains(&k) {
            return Err(err(line, format!("unknown key `{}`", section.qualified(k))));
        }
        if v.is_empty() {
            return Err(err(line, format!("`{}` has no value", section.qualified(k))));
        }
        if section.entries.contains_key(k) {
            return Err(err(line, format!("duplicate key `{}`", section.qualified(k))));
        }
        section.entries.insert(
            k.to_string(),
            Entry {
                value: v.to_string(),
                line,
                used: false,
            },
        );
    }
    Ok(sections)
}

/// Parses and validates a run configuration. Errors carry 1-based line
/// numbers.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut sections = split_sections(text)?;
    let last_line = text.lines().count().max(1);
    let mut take = |name: &str| -> Section {
        match sections.iter().position(|s| s.name == name) {
            Some(i) => sections.swap_remove(i),
            None => Section {
                name: name.to_string(),
                line: last_line,
                entries: BTreeMap::new(),
            },
        }
    };

    let mut top = take("");
    let scenario = top.raw("scenario").map_or_else(|| "custom".to_string(), |(v, _)| v);
    let t_end = top.nonneg("t_end", 1.0)?;

    let mut g = take("geometry");
    let (kind, kind_line) = g.required("kind")?;
    let radius = g.positive("R", 1.0)?;
    let geometry = match kind.as_str() {
        "radial_ball" => {
            g.forbid("nr", "applies only to kind = disk")?;
            g.forbid("ntheta", "applies only to kind = disk")?;
            Geometry::RadialBall {
                radius,
                n: g.count("n", None)?,
            }
        }
        "disk" => {
            g.forbid("n", "applies only to kind = radial_ball")?;
            let nr = g.count("nr", None)?;
            let ntheta = g.count("ntheta", None)?;
            if ntheta < 3 {
                let line = g.entries["ntheta"].line;
                return Err(err(line, "`[geometry] ntheta` must be at least 3"));
            }
            Geometry::Disk { radius, nr, ntheta }
        }
        other => {
            return Err(err(
                kind_line,
                format!("`[geometry] kind` must be `radial_ball` or `disk`, found `{other}`"),
            ))
        }
    };

    let mut p = take("parameters");
    let def = Parameters::default();
    let exchange = match p.raw("exchange") {
        None => {
            p.forbid("m", "applies only to exchange = truncated")?;
            ExchangeLaw::Linear
        }
        Some((v, line)) => match v.as_str() {
            "linear" => {
                p.forbid("m", "applies only to exchange = truncated")?;
                ExchangeLaw::Linear
            }
            "truncated" => {
                p.required("m")?;
                ExchangeLaw::Truncated { m: p.positive("m", 0.0)? }
            }
            other => return Err(err(line, format!("`[parameters] exchange` must be `linear` or `truncated`, found `{other}`"))),
        },
    };
    let source = match p.raw("source") {
        None => {
            p.forbid("z_max", "applies only to source = truncated")?;
            SourceLaw::Linear
        }
        Some((v, line)) => match v.as_str() {
            "linear" => {
                p.forbid("z_max", "applies only to source = truncated")?;
                SourceLaw::Linear
            }
            "truncated" => {
                p.required("z_max")?;
                SourceLaw::Truncated {
                    z_max: p.positive("z_max", 0.0)?,
                }
            }
            other => return Err(err(line, format!("`[parameters] source` must be `linear` or `truncated`, found `{other}`"))),
        },
    };
    let params = Parameters {
        diffusivity: p.positive("D", def.diffusivity)?,
        surface_diffusivity: p.positive("d", def.surface_diffusivity)?,
        alpha: p.positive("alpha", def.alpha)?,
        beta: p.nonneg("beta", def.beta)?,
        k1: p.positive("k1", def.k1)?,
        k2: p.positive("k2", def.k2)?,
        exchange,
        source,
    };

    let mut s = take("stepper");
    let sd = StepperConfig::default();
    let stepper = StepperConfig {
        dt_init: s.positive("dt_init", sd.dt_init)?,
        dt_min: s.positive("dt_min", sd.dt_min)?,
        dt_max: s.positive("dt_max", sd.dt_max)?,
        grow: s.f64_checked("grow", sd.grow, |x| x >= 1.0, "at least 1")?,
        shrink: s.f64_checked("shrink", sd.shrink, |x| x > 0.0 && x < 1.0, "in (0, 1)")?,
        max_rel_change: s.positive("max_rel_change", sd.max_rel_change)?,
        linear_tol: s.f64_checked("linear_tol", sd.linear_tol, |x| x > 0.0 && x < 1.0, "in (0, 1)")?,
        blowup_factor: s.positive("blowup_factor", sd.blowup_factor)?,
        max_pinned: s.count("max_pinned", Some(sd.max_pinned))?,
        max_steps: s.count("max_steps", Some(sd.max_steps))?,
    };
    stepper.validate().map_err(|e| err(s.line, e.to_string()))?;

    let mut ic = take("initial");
    let kind = ic.raw("kind").map(|(v, l)| (v, l)).unwrap_or(("constant".into(), ic.line));
    let initial = match kind.0.as_str() {
        "constant" => {
            for k in ["amplitude", "width", "center", "normalize_q2", "path"] {
                ic.forbid(k, "does not apply to kind = constant")?;
            }
            InitialCondition::Constant {
                v: ic.nonneg("V", 1.0)?,
                u: ic.nonneg("u", 1.0)?,
            }
        }
        "gaussian" => {
            ic.forbid("path", "does not apply to kind = gaussian")?;
            let normalize_q2 = if ic.entries.contains_key("normalize_q2") {
                Some(ic.positive("normalize_q2", 1.0)?)
            } else {
                None
            };
            InitialCondition::Gaussian {
                v: ic.nonneg("V", 1.0)?,
                u: ic.nonneg("u", 0.0)?,
                amplitude: ic.nonneg("amplitude", 1.0)?,
                width: ic.positive("width", 0.5)?,
                center: ic.f64_or("center", 0.0)?,
                normalize_q2,
            }
        }
        "snapshot" => {
            for k in ["V", "u", "amplitude", "width", "center", "normalize_q2"] {
                ic.forbid(k, "does not apply to kind = snapshot")?;
            }
            InitialCondition::Snapshot {
                path: PathBuf::from(ic.required("path")?.0),
            }
        }
        other => {
            return Err(err(
                kind.1,
                format!("`[initial] kind` must be `constant`, `gaussian` or `snapshot`, found `{other}`"),
            ))
        }
    };

    let mut d = take("diagnostics");
    let every = d.count("every", Some(1))?;
    let p_values = match d.raw("p") {
        None => vec![2.0, 4.0],
        Some((v, line)) => {
            let ps = v
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| err(line, format!("`[diagnostics] p` expects a comma-separated list of numbers, found `{v}`")))?;
            validate_p_values(&ps).map_err(|m| err(line, m))?;
            ps
        }
    };
    let diagnostics = DiagnosticsConfig {
        every,
        p_values,
        snapshot_every: d.nonneg("snapshot_every", 0.0)?,
    };

    let mut o = take("output");
    let output_dir = PathBuf::from(o.raw("dir").map_or_else(|| "out".to_string(), |(v, _)| v));

    let cfg = RunConfig {
        scenario,
        t_end,
        geometry,
        params,
        stepper,
        initial,
        diagnostics,
        output_dir,
    };
    cfg.validate().map_err(|e| err(1, e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    if let Some(dir) = path.parent() {
        cfg.resolve_paths(dir);
    }
    Ok(cfg)
}

/// Names of the scenarios available through [`builtin_scenario`].
pub const BUILTIN_SCENARIOS: &[&str] = &["small-data", "large-data", "reg-flux", "reg-source", "steady-validate", "beta-zero"];

fn disk_16x32() -> Geometry {
    Geometry::Disk {
        radius: 1.0,
        nr: 16,
        ntheta: 32,
    }
}

fn bump(normalize_q2: f64) -> InitialCondition {
    InitialCondition::Gaussian {
        v: 1.0,
        u: 0.0,
        amplitude: 1.0,
        width: 0.5,
        center: 0.0,
        normalize_q2: Some(normalize_q2),
    }
}

pub fn builtin_scenario(name: &str) -> Option<RunConfig> {
    let mut cfg = RunConfig::new(name, disk_16x32());
    cfg.output_dir = PathBuf::from(format!("out/{name}"));
    match name {
        "small-data" => {
            cfg.t_end = 20.0;
            cfg.initial = bump(1e-3);
        }
        "large-data" => {
            cfg.t_end = 10.0;
            cfg.initial = bump(1e2);
        }
        "reg-flux" => {
            cfg.t_end = 10.0;
            cfg.initial = bump(1e2);
            cfg.params.exchange = ExchangeLaw::Truncated { m: 1.0 };
        }
        "reg-source" => {
            cfg.t_end = 10.0;
            cfg.initial = bump(1e2);
            cfg.params.source = SourceLaw::Truncated { z_max: 1.0 };
        }
        "steady-validate" => {
            cfg.geometry = Geometry::RadialBall { radius: 1.0, n: 64 };
            cfg.t_end = 10.0;
            cfg.initial = InitialCondition::Constant { v: 0.1, u: 0.1 };
        }
        "beta-zero" => {
            cfg.geometry = Geometry::Disk {
                radius: 1.0,
                nr: 8,
                ntheta: 16,
            };
            cfg.t_end = 60.0;
            cfg.params.beta = 0.0;
            cfg.params.k1 = 2.0;
            cfg.initial = bump(1.0);
        }
        _ => return None,
    }
    Some(cfg)
}
