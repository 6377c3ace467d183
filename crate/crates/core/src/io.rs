//! Plain-text persistence: diagnostics CSV and labelled field snapshots.
//!
//! Numbers are written with 17 significant digits, so every finite `f64`
//! round-trips bit-exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::diagnostics::{DiagnosticsRow, DiagnosticsSink};
use crate::error::{Error, Result};
use crate::geometry::{Geometry, Mesh};
use crate::model::{ExchangeLaw, Parameters, SourceLaw, State};

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

/// Formats with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Column names of the diagnostics CSV for the given `p` values.
pub fn diagnostics_header(p_values: &[f64]) -> Vec<String> {
    let mut cols = vec!["t".to_string(), "dt".into(), "M".into()];
    cols.extend(p_values.iter().map(|p| format!("Q_{p}")));
    for c in ["L4_V", "L4_u", "L2_u", "min_V", "max_V", "min_u", "max_u", "trace_L1_V", "limiter_count"] {
        cols.push(c.into());
    }
    cols
}

fn row_record(row: &DiagnosticsRow) -> Vec<String> {
    let mut rec = vec![fmt_f64(row.t), fmt_f64(row.dt), fmt_f64(row.mass)];
    rec.extend(row.q.iter().map(|&(_, q)| fmt_f64(q)));
    for x in [row.l4_v, row.l4_u, row.l2_u, row.min_v, row.max_v, row.min_u, row.max_u, row.trace_l1_v] {
        rec.push(fmt_f64(x));
    }
    rec.push(row.limiter_count.to_string());
    rec
}

fn check_columns(row: &DiagnosticsRow, p_values: &[f64]) -> Result<()> {
    if row.q.len() != p_values.len() || row.q.iter().zip(p_values).any(|(&(p, _), &want)| p != want) {
        return Err(Error::config(format!(
            "diagnostics row at t = {} does not carry the configured p values {p_values:?}",
            row.t
        )));
    }
    Ok(())
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes all rows at once. An empty `rows` gives a header-only file.
pub fn write_diagnostics_csv(path: &Path, p_values: &[f64], rows: &[DiagnosticsRow]) -> Result<()> {
    let mut w = DiagnosticsCsvWriter::create(path, p_values)?;
    for row in rows {
        w.write_row(row)?;
    }
    w.finish()
}

/// Streaming CSV writer; also usable as a [`DiagnosticsSink`], in which case
/// the first write error is held until [`DiagnosticsCsvWriter::finish`].
pub struct DiagnosticsCsvWriter {
    path: PathBuf,
    p_values: Vec<f64>,
    writer: csv::Writer<fs::File>,
    deferred: Option<Error>,
}

impl DiagnosticsCsvWriter {
    pub fn create(path: &Path, p_values: &[f64]) -> Result<Self> {
        let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
        writer.write_record(diagnostics_header(p_values)).map_err(csv_err(path))?;
        Ok(DiagnosticsCsvWriter {
            path: path.to_path_buf(),
            p_values: p_values.to_vec(),
            writer,
            deferred: None,
        })
    }

    pub fn write_row(&mut self, row: &DiagnosticsRow) -> Result<()> {
        check_columns(row, &self.p_values)?;
        self.writer.write_record(row_record(row)).map_err(csv_err(&self.path))
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(e) = self.deferred.take() {
            return Err(e);
        }
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

impl DiagnosticsSink for DiagnosticsCsvWriter {
    fn record(&mut self, row: &DiagnosticsRow, _state: &State) {
        if self.deferred.is_none() {
            if let Err(e) = self.write_row(row) {
                self.deferred = Some(e);
            }
        }
    }
}

/// Reads a diagnostics CSV back, returning the `p` values and the rows.
pub fn read_diagnostics_csv(path: &Path) -> Result<(Vec<f64>, Vec<DiagnosticsRow>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    let bad = |offset: u64, message: String| Error::Parse {
        offset: offset as usize,
        message: format!("{}: {message}", path.display()),
    };
    let n = header.len();
    if n < 12 {
        return Err(bad(0, format!("expected at least 12 columns, found {n}")));
    }
    let p_values = header
        .iter()
        .skip(3)
        .take(n - 12)
        .map(|h| {
            h.strip_prefix("Q_")
                .and_then(|p| p.parse::<f64>().ok())
                .ok_or_else(|| bad(0, format!("unexpected column `{h}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if header.iter().map(String::from).collect::<Vec<_>>() != diagnostics_header(&p_values) {
        return Err(bad(0, "column layout does not match the diagnostics format".into()));
    }

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let offset = rec.position().map_or(0, |p| p.byte());
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| bad(offset, format!("column `{}`: `{}` is not a number", &header[i], &rec[i])))
        };
        let k = 3 + p_values.len();
        let q = p_values.iter().enumerate().map(|(j, &p)| Ok((p, num(3 + j)?))).collect::<Result<Vec<_>>>()?;
        rows.push(DiagnosticsRow {
            t: num(0)?,
            dt: num(1)?,
            mass: num(2)?,
            q,
            l4_v: num(k)?,
            l4_u: num(k + 1)?,
            l2_u: num(k + 2)?,
            min_v: num(k + 3)?,
            max_v: num(k + 4)?,
            min_u: num(k + 5)?,
            max_u: num(k + 6)?,
            trace_l1_v: num(k + 7)?,
            limiter_count: rec[k + 8]
                .parse::<u64>()
                .map_err(|_| bad(offset, format!("limiter_count `{}` is not an integer", &rec[k + 8])))?,
        });
    }
    Ok((p_values, rows))
}

/// Everything in a snapshot besides the fields.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotHeader {
    pub format_version: u32,
    pub geometry: Geometry,
    pub params: Parameters,
    pub t: f64,
}

/// Renders a snapshot; [`write_snapshot`] writes this text to disk.
pub fn format_snapshot(state: &State, mesh: &Mesh, params: &Parameters) -> Result<String> {
    state.validate(mesh)?;
    let mut s = String::with_capacity(32 * (2 * mesh.n_cells() + mesh.n_nodes()) + 512);
    let mut kv = |k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    kv("format_version", SNAPSHOT_FORMAT_VERSION.to_string());
    match mesh.geometry() {
        Geometry::RadialBall { radius, n } => {
            kv("geometry", "radial_ball".into());
            kv("R", fmt_f64(radius));
            kv("n", n.to_string());
        }
        Geometry::Disk { radius, nr, ntheta } => {
            kv("geometry", "disk".into());
            kv("R", fmt_f64(radius));
            kv("nr", nr.to_string());
            kv("ntheta", ntheta.to_string());
        }
    }
    kv("D", fmt_f64(params.diffusivity));
    kv("d", fmt_f64(params.surface_diffusivity));
    kv("alpha", fmt_f64(params.alpha));
    kv("beta", fmt_f64(params.beta));
    kv("k1", fmt_f64(params.k1));
    kv("k2", fmt_f64(params.k2));
    match params.exchange {
        ExchangeLaw::Linear => kv("exchange", "linear".into()),
        ExchangeLaw::Truncated { m } => {
            kv("exchange", "truncated".into());
            kv("m", fmt_f64(m));
        }
    }
    match params.source {
        SourceLaw::Linear => kv("source", "linear".into()),
        SourceLaw::Truncated { z_max } => {
            kv("source", "truncated".into());
            kv("z_max", fmt_f64(z_max));
        }
    }
    kv("t", fmt_f64(state.t));
    for (label, values) in [("V", &state.v), ("u", &state.u), ("c", &state.c)] {
        s.push_str(&format!("[{label} {}]\n", values.len()));
        for x in values.iter() {
            s.push_str(&fmt_f64(*x));
            s.push('\n');
        }
    }
    Ok(s)
}

pub fn write_snapshot(state: &State, mesh: &Mesh, params: &Parameters, path: &Path) -> Result<()> {
    let text = format_snapshot(state, mesh, params)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<(State, SnapshotHeader)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_snapshot(&text)
}

struct Line<'a> {
    offset: usize,
    text: &'a str,
}

fn lines_with_offsets(text: &str) -> impl Iterator<Item = Line<'_>> {
    let mut offset = 0;
    text.split_inclusive('\n').map(move |raw| {
        let line = Line {
            offset,
            text: raw.trim_end_matches(['\n', '\r']),
        };
        offset += raw.len();
        line
    })
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

pub fn parse_snapshot(text: &str) -> Result<(State, SnapshotHeader)> {
    let mut lines = lines_with_offsets(text).peekable();
    let mut keys: Vec<(String, String, usize)> = Vec::new();
    while let Some(line) = lines.peek() {
        let t = line.text.trim();
        if t.starts_with('[') {
            break;
        }
        if !t.is_empty() && !t.starts_with('#') {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| parse_err(line.offset, format!("expected `key = value`, found `{t}`")))?;
            keys.push((k.trim().to_string(), v.trim().to_string(), line.offset));
        }
        lines.next();
    }
    let header_end = lines.peek().map_or(text.len(), |l| l.offset);

    let lookup = |key: &str| keys.iter().find(|(k, _, _)| k == key).map(|(_, v, o)| (v.as_str(), *o));
    let need = |key: &str| lookup(key).ok_or_else(|| parse_err(header_end, format!("header is missing `{key}`")));
    let float = |key: &str| -> Result<f64> {
        let (v, o) = need(key)?;
        v.parse().map_err(|_| parse_err(o, format!("`{key}`: `{v}` is not a number")))
    };
    let count = |key: &str| -> Result<usize> {
        let (v, o) = need(key)?;
        v.parse().map_err(|_| parse_err(o, format!("`{key}`: `{v}` is not a count")))
    };

    let (version, vo) = need("format_version")?;
    let format_version: u32 = version
        .parse()
        .map_err(|_| parse_err(vo, format!("format_version `{version}` is not an integer")))?;
    if format_version != SNAPSHOT_FORMAT_VERSION {
        return Err(parse_err(
            vo,
            format!("unsupported format_version {format_version} (expected {SNAPSHOT_FORMAT_VERSION})"),
        ));
    }
    let (kind, ko) = need("geometry")?;
    let radius = float("R")?;
    let geometry = match kind {
        "radial_ball" => Geometry::RadialBall { radius, n: count("n")? },
        "disk" => Geometry::Disk {
            radius,
            nr: count("nr")?,
            ntheta: count("ntheta")?,
        },
        other => return Err(parse_err(ko, format!("unknown geometry `{other}`"))),
    };
    let (ex, eo) = need("exchange")?;
    let exchange = match ex {
        "linear" => ExchangeLaw::Linear,
        "truncated" => ExchangeLaw::Truncated { m: float("m")? },
        other => return Err(parse_err(eo, format!("unknown exchange law `{other}`"))),
    };
    let (src, so) = need("source")?;
    let source = match src {
        "linear" => SourceLaw::Linear,
        "truncated" => SourceLaw::Truncated { z_max: float("z_max")? },
        other => return Err(parse_err(so, format!("unknown source law `{other}`"))),
    };
    let params = Parameters {
        diffusivity: float("D")?,
        surface_diffusivity: float("d")?,
        alpha: float("alpha")?,
        beta: float("beta")?,
        k1: float("k1")?,
        k2: float("k2")?,
        exchange,
        source,
    };
    let header = SnapshotHeader {
        format_version,
        geometry,
        params,
        t: float("t")?,
    };
    let (n_cells, n_nodes) = match geometry {
        Geometry::RadialBall { n, .. } => (n, 1),
        Geometry::Disk { nr, ntheta, .. } => (nr * ntheta, ntheta),
    };

    let mut v = None;
    let mut u = None;
    let mut c = None;
    while let Some(line) = lines.next() {
        let t = line.text.trim();
        if t.is_empty() {
            continue;
        }
        let inner = t
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| parse_err(line.offset, format!("expected a section header, found `{t}`")))?;
        let (label, len) = inner
            .split_once(' ')
            .ok_or_else(|| parse_err(line.offset, format!("malformed section header `{t}`")))?;
        let declared: usize = len
            .trim()
            .parse()
            .map_err(|_| parse_err(line.offset, format!("section `{label}`: bad length `{len}`")))?;
        let (slot, expected) = match label {
            "V" => (&mut v, n_cells),
            "u" => (&mut u, n_nodes),
            "c" => (&mut c, n_cells),
            other => return Err(parse_err(line.offset, format!("unknown section `{other}`"))),
        };
        if slot.is_some() {
            return Err(parse_err(line.offset, format!("duplicate section `{label}`")));
        }
        if declared != expected {
            return Err(parse_err(
                line.offset,
                format!("section `{label}` declares {declared} values but the mesh has {expected}"),
            ));
        }
        let mut values = Vec::with_capacity(declared);
        while let Some(next) = lines.peek() {
            if next.text.trim_start().starts_with('[') {
                break;
            }
            let next = lines.next().unwrap();
            let mut col = 0;
            for tok in next.text.split_whitespace() {
                col += next.text[col..].find(tok).unwrap_or(0);
                let x: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(next.offset + col, format!("section `{label}`: `{tok}` is not a number")))?;
                values.push(x);
                col += tok.len();
            }
        }
        if values.len() != declared {
            return Err(parse_err(
                line.offset,
                format!("section `{label}` is short: declared {declared} values, found {}", values.len()),
            ));
        }
        *slot = Some(values);
    }
    let missing = |name: &str| parse_err(text.len(), format!("missing section `{name}`"));
    let state = State {
        t: header.t,
        v: v.ok_or_else(|| missing("V"))?,
        u: u.ok_or_else(|| missing("u"))?,
        c: c.ok_or_else(|| missing("c"))?,
    };
    Ok((state, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_disk_mesh, build_radial_ball_mesh};
    use proptest::prelude::*;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("polaris-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn zero_row(p: &[f64]) -> DiagnosticsRow {
        DiagnosticsRow {
            t: 0.0,
            dt: 0.0,
            mass: 0.0,
            q: p.iter().map(|&p| (p, 0.0)).collect(),
            l4_v: 0.0,
            l4_u: 0.0,
            l2_u: 0.0,
            min_v: 0.0,
            max_v: 0.0,
            min_u: 0.0,
            max_u: 0.0,
            trace_l1_v: 0.0,
            limiter_count: 0,
        }
    }

    #[test]
    fn empty_rows_give_header_only() {
        let path = tmp("empty.csv");
        write_diagnostics_csv(&path, &[2.0, 4.0], &[]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "t,dt,M,Q_2,Q_4,L4_V,L4_u,L2_u,min_V,max_V,min_u,max_u,trace_L1_V,limiter_count\n"
        );
        let (p, rows) = read_diagnostics_csv(&path).unwrap();
        assert_eq!(p, vec![2.0, 4.0]);
        assert!(rows.is_empty());
    }

    #[test]
    fn zero_row_is_all_zero() {
        let path = tmp("zero.csv");
        write_diagnostics_csv(&path, &[1.5], &[zero_row(&[1.5])]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let line = text.lines().nth(1).unwrap();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 13);
        assert!(fields.iter().all(|f| f.parse::<f64>().unwrap() == 0.0));
        assert!(text.starts_with("t,dt,M,Q_1.5,"));
    }

    #[test]
    fn mismatched_p_values_rejected() {
        let path = tmp("mismatch.csv");
        assert!(write_diagnostics_csv(&path, &[2.0], &[zero_row(&[4.0])]).is_err());
    }

    #[test]
    fn missing_directory_names_path() {
        let path = Path::new("/nonexistent-polaris-dir/x.csv");
        let err = write_diagnostics_csv(path, &[], &[]).unwrap_err().to_string();
        assert!(err.contains("/nonexistent-polaris-dir/x.csv"), "{err}");
    }

    #[test]
    fn zero_snapshot_round_trip() {
        let m = build_disk_mesh(1.0, 3, 5).unwrap();
        let s = State::zeros(&m);
        let p = Parameters::default();
        let path = tmp("zero.snap");
        write_snapshot(&s, &m, &p, &path).unwrap();
        let (back, header) = read_snapshot(&path).unwrap();
        assert_eq!(back, s);
        assert_eq!(header.geometry, m.geometry());
        assert_eq!(header.params, p);
        assert_eq!(header.format_version, SNAPSHOT_FORMAT_VERSION);
    }

    #[test]
    fn snapshot_errors() {
        let m = build_radial_ball_mesh(1.0, 4).unwrap();
        let mut s = State::zeros(&m);
        s.v = vec![1.0, 2.0, 3.0, 4.0];
        let text = format_snapshot(&s, &m, &Parameters::default()).unwrap();

        // drop the last V value
        let short = text.replacen("4.0000000000000000e0\n", "", 1);
        match parse_snapshot(&short).unwrap_err() {
            Error::Parse { offset, message } => {
                assert!(message.contains("`V`") && message.contains("short"), "{message}");
                assert_eq!(offset, text.find("[V 4]").unwrap());
            }
            e => panic!("{e}"),
        }

        let future = text.replace("format_version = 1", "format_version = 9");
        let err = parse_snapshot(&future).unwrap_err().to_string();
        assert!(err.contains("format_version") && err.contains("byte 0"), "{err}");

        let garbage = text.replace("3.0000000000000000e0", "3.0x");
        match parse_snapshot(&garbage).unwrap_err() {
            Error::Parse { offset, .. } => assert_eq!(offset, text.find("3.0000000000000000e0").unwrap()),
            e => panic!("{e}"),
        }

        let wrong = text.replace("[u 1]", "[u 2]");
        assert!(parse_snapshot(&wrong).unwrap_err().to_string().contains("mesh has 1"));
        let missing = &text[..text.find("[c 4]").unwrap()];
        assert!(parse_snapshot(missing).unwrap_err().to_string().contains("`c`"));
    }

    #[test]
    fn writers_are_deterministic() {
        let m = build_disk_mesh(1.0, 2, 6).unwrap();
        let mut s = State::zeros(&m);
        s.v.iter_mut().enumerate().for_each(|(i, x)| *x = 1.0 / (i as f64 + 3.0));
        s.t = 0.1;
        let p = Parameters {
            exchange: ExchangeLaw::Truncated { m: 0.3 },
            source: SourceLaw::Truncated { z_max: 2.0 },
            ..Default::default()
        };
        assert_eq!(format_snapshot(&s, &m, &p).unwrap(), format_snapshot(&s, &m, &p).unwrap());
        let (back, header) = parse_snapshot(&format_snapshot(&s, &m, &p).unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(header.params, p);
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>().prop_filter("finite", |x| x.is_finite()),
            -1e3f64..1e3,
            Just(0.0),
            Just(-0.0),
            Just(f64::MIN_POSITIVE),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn csv_round_trip(values in proptest::collection::vec((finite(), finite(), finite(), any::<u64>()), 0..20)) {
            let p = [1.5, 2.0, 4.0];
            let rows: Vec<DiagnosticsRow> = values
                .iter()
                .map(|&(a, b, c, n)| DiagnosticsRow {
                    t: a,
                    dt: b,
                    mass: c,
                    q: vec![(1.5, a * 0.5), (2.0, b), (4.0, c)],
                    l4_v: a.abs(),
                    l4_u: b.abs(),
                    l2_u: c.abs(),
                    min_v: -a,
                    max_v: b,
                    min_u: c,
                    max_u: a,
                    trace_l1_v: b.abs(),
                    limiter_count: n,
                })
                .collect();
            let path = tmp(&format!("rt-{}.csv", values.len()));
            write_diagnostics_csv(&path, &p, &rows).unwrap();
            let (pb, back) = read_diagnostics_csv(&path).unwrap();
            prop_assert_eq!(pb, p.to_vec());
            prop_assert_eq!(back.len(), rows.len());
            for (a, b) in rows.iter().zip(&back) {
                prop_assert_eq!(a.t.to_bits(), b.t.to_bits());
                prop_assert_eq!(a.min_v.to_bits(), b.min_v.to_bits());
                prop_assert_eq!(a.q.iter().map(|x| x.1.to_bits()).collect::<Vec<_>>(), b.q.iter().map(|x| x.1.to_bits()).collect::<Vec<_>>());
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn snapshot_round_trip(
            nr in 1usize..5,
            nt in 3usize..9,
            seed in proptest::collection::vec(finite(), 1..64),
            t in finite(),
        ) {
            let m = build_disk_mesh(1.25, nr, nt).unwrap();
            let pick = |i: usize| seed[i % seed.len()].abs();
            let s = State {
                t: t.abs(),
                v: (0..m.n_cells()).map(pick).collect(),
                u: (0..m.n_nodes()).map(|i| pick(i + 7)).collect(),
                c: (0..m.n_cells()).map(|i| pick(i + 3)).collect(),
            };
            let text = format_snapshot(&s, &m, &Parameters::default()).unwrap();
            let (back, _) = parse_snapshot(&text).unwrap();
            let bits = |x: &[f64]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back.v), bits(&s.v));
            prop_assert_eq!(bits(&back.u), bits(&s.u));
            prop_assert_eq!(bits(&back.c), bits(&s.c));
            prop_assert_eq!(back.t.to_bits(), s.t.to_bits());
        }
    }
}
