//! CSV tables and binary archives. Layouts are documented in `docs/formats.md`.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! values always produce equal bytes.

use std::fmt::Write as _;

use nlmarkov::particles::{Bandwidth, Kernel, SchemeMetadata};
use nlmarkov::{Grid, GridDensity, MarginalFlow, PathStore};

use crate::error::{format_err, Result};

pub const FLOW_MAGIC: &[u8; 8] = b"NLMFLOW\0";
pub const PATH_MAGIC: &[u8; 8] = b"NLMPATH\0";
pub const FORMAT_VERSION: u32 = 1;

/// Ordered `key = value` pairs stored in archive headers.
pub type Metadata = Vec<(String, String)>;

/// Shortest round-trip text of `x`, in exponent form outside `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

pub fn density_csv(densities: &[GridDensity]) -> String {
    let mut out = String::from("time,x,u\n");
    for d in densities {
        for (x, u) in d.grid().centers().zip(d.values()) {
            writeln!(out, "{},{},{}", num(d.time()), num(x), num(*u)).unwrap();
        }
    }
    out
}

pub fn flow_csv(flow: &MarginalFlow) -> String {
    density_csv(flow.densities())
}

/// Densities of a `time,x,u` table, one per distinct time. The `x` column
/// must hold the centers of one uniform grid.
pub fn read_density_csv(src: &str) -> Result<Vec<GridDensity>> {
    let mut lines = src.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "time,x,u" => {}
        _ => return Err(format_err("density csv", "expected the header `time,x,u`")),
    }
    let mut blocks: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    for (i, line) in lines {
        let mut it = line.split(',').map(|f| f.trim().parse::<f64>());
        let row = match (it.next(), it.next(), it.next(), it.next()) {
            (Some(Ok(t)), Some(Ok(x)), Some(Ok(u)), None) => (t, x, u),
            _ => return Err(format_err("density csv", format!("line {}: expected three numbers", i + 1))),
        };
        match blocks.last_mut() {
            Some(b) if b.0 == row.0 => {
                b.1.push(row.1);
                b.2.push(row.2);
            }
            _ => blocks.push((row.0, vec![row.1], vec![row.2])),
        }
    }
    let Some(first) = blocks.first() else {
        return Err(format_err("density csv", "no rows"));
    };
    let grid = grid_from_centers(&first.1)?;
    blocks
        .into_iter()
        .map(|(t, xs, us)| {
            if xs.len() != grid.n_cells() {
                return Err(format_err("density csv", format!("time {t} has {} rows, expected {}", xs.len(), grid.n_cells())));
            }
            Ok(GridDensity::new(grid, us, t)?)
        })
        .collect()
}

fn grid_from_centers(xs: &[f64]) -> Result<Grid> {
    if xs.len() < 2 {
        return Err(format_err("density csv", "need at least two cells"));
    }
    let n = xs.len();
    let h = (xs[n - 1] - xs[0]) / (n - 1) as f64;
    if !(h > 0.0) || xs.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-6 * h) {
        return Err(format_err("density csv", "x must hold equally spaced increasing cell centers"));
    }
    Ok(Grid::new(xs[0] - 0.5 * h, xs[n - 1] + 0.5 * h, n)?)
}

/// One row per particle and output time: `particle,time,x`.
pub fn paths_csv(paths: &PathStore) -> String {
    let mut out = String::from("particle,time,x\n");
    for i in 0..paths.n_particles() {
        for (t, x) in paths.times().iter().zip(paths.path(i)) {
            writeln!(out, "{i},{},{}", num(*t), num(*x)).unwrap();
        }
    }
    out
}

struct Writer(Vec<u8>);

impl Writer {
    fn header(magic: &[u8; 8]) -> Self {
        let mut w = Writer(magic.to_vec());
        w.u32(FORMAT_VERSION);
        w.u32(0);
        w
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn text(&mut self, meta: &Metadata) {
        let mut s = String::new();
        for (k, v) in meta {
            writeln!(s, "{k} = {v}").unwrap();
        }
        self.u64(s.len() as u64);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn open(buf: &'a [u8], magic: &[u8; 8], what: &'static str) -> Result<Self> {
        if buf.is_empty() {
            return Err(format_err(what, "empty archive"));
        }
        if buf.len() < 16 || &buf[..8] != magic {
            return Err(format_err(what, "bad magic"));
        }
        let mut r = Reader { buf: &buf[8..], what };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(format_err(what, format!("unsupported version {version}")));
        }
        r.u32()?;
        Ok(r)
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(format_err(self.what, "truncated"));
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn count(&mut self) -> Result<usize> {
        let n = self.u64()?;
        // every counted item takes at least one byte
        if n > self.buf.len() as u64 {
            return Err(format_err(self.what, "count exceeds archive size"));
        }
        Ok(n as usize)
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| format_err(self.what, "size overflow"))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn text(&mut self) -> Result<Metadata> {
        let n = self.count()?;
        let s = std::str::from_utf8(self.take(n)?).map_err(|_| format_err(self.what, "metadata is not UTF-8"))?;
        s.lines()
            .map(|l| {
                l.split_once(" = ")
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| format_err(self.what, format!("bad metadata line `{l}`")))
            })
            .collect()
    }
    fn finish(self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(format_err(self.what, "trailing bytes"))
        }
    }
}

pub fn write_flow_archive(flow: &MarginalFlow, meta: &Metadata) -> Vec<u8> {
    let g = flow.grid();
    let mut w = Writer::header(FLOW_MAGIC);
    w.f64(g.x_min());
    w.f64(g.x_max());
    w.u64(g.n_cells() as u64);
    w.u64(flow.len() as u64);
    w.text(meta);
    for (d, k) in flow.densities().iter().zip(flow.substeps()) {
        w.f64(d.time());
        w.u64(*k as u64);
    }
    for d in flow.densities() {
        d.values().iter().for_each(|v| w.f64(*v));
    }
    w.0
}

pub fn read_flow_archive(buf: &[u8]) -> Result<(MarginalFlow, Metadata)> {
    let what = "flow archive";
    let mut r = Reader::open(buf, FLOW_MAGIC, what)?;
    let (lo, hi) = (r.f64()?, r.f64()?);
    let cells = r.count()?;
    let n_times = r.count()?;
    if n_times == 0 {
        return Err(format_err(what, "no densities"));
    }
    let grid = Grid::new(lo, hi, cells)?;
    let meta = r.text()?;
    let mut stamps = Vec::with_capacity(n_times);
    for _ in 0..n_times {
        stamps.push((r.f64()?, r.u64()? as usize));
    }
    let mut densities = Vec::with_capacity(n_times);
    for (t, _) in &stamps {
        densities.push(GridDensity::new(grid, r.f64s(cells)?, *t)?);
    }
    r.finish()?;
    let flow = MarginalFlow::new(densities, stamps.into_iter().map(|s| s.1).collect())?;
    Ok((flow, meta))
}

pub fn scheme_metadata(s: &SchemeMetadata) -> Metadata {
    let kernel = match s.kernel {
        Kernel::Gaussian => "gaussian",
        Kernel::Epanechnikov => "epanechnikov",
        Kernel::Histogram => "histogram",
    };
    let bandwidth = match s.bandwidth {
        Bandwidth::Silverman => "silverman".to_string(),
        Bandwidth::Fixed(h) => format!("fixed {}", num(h)),
    };
    [
        ("dt", num(s.dt)),
        ("kernel", kernel.to_string()),
        ("bandwidth", bandwidth),
        ("density_floor", num(s.density_floor)),
        ("feedback_every", s.feedback_every.to_string()),
        ("bootstrap_steps", s.bootstrap_steps.to_string()),
        ("kde_x_min", num(s.kde_grid.x_min())),
        ("kde_x_max", num(s.kde_grid.x_max())),
        ("kde_cells", s.kde_grid.n_cells().to_string()),
        ("expansions", s.expansions.to_string()),
        ("drift_min", num(s.drift_min)),
        ("drift_max", num(s.drift_max)),
        ("last_bandwidth", num(s.last_bandwidth)),
        ("linearized", s.linearized.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub fn parse_scheme_metadata(meta: &Metadata) -> Result<SchemeMetadata> {
    let what = "scheme metadata";
    let get = |k: &str| -> Result<&str> {
        meta.iter()
            .find(|p| p.0 == k)
            .map(|p| p.1.as_str())
            .ok_or_else(|| format_err(what, format!("missing `{k}`")))
    };
    fn num<T: std::str::FromStr>(v: &str, k: &str) -> Result<T> {
        v.parse().map_err(|_| format_err("scheme metadata", format!("bad value for `{k}`: {v}")))
    }
    let f = |k: &str| -> Result<f64> { num(get(k)?, k) };
    let u = |k: &str| -> Result<usize> { num(get(k)?, k) };
    let kernel = match get("kernel")? {
        "gaussian" => Kernel::Gaussian,
        "epanechnikov" => Kernel::Epanechnikov,
        "histogram" => Kernel::Histogram,
        other => return Err(format_err(what, format!("unknown kernel `{other}`"))),
    };
    let bw = get("bandwidth")?;
    let bandwidth = match bw.strip_prefix("fixed ") {
        Some(h) => Bandwidth::Fixed(num(h, "bandwidth")?),
        None if bw == "silverman" => Bandwidth::Silverman,
        None => return Err(format_err(what, format!("unknown bandwidth `{bw}`"))),
    };
    Ok(SchemeMetadata {
        dt: f("dt")?,
        kernel,
        bandwidth,
        density_floor: f("density_floor")?,
        feedback_every: u("feedback_every")?,
        bootstrap_steps: u("bootstrap_steps")?,
        kde_grid: Grid::new(f("kde_x_min")?, f("kde_x_max")?, u("kde_cells")?)?,
        expansions: num(get("expansions")?, "expansions")?,
        drift_min: f("drift_min")?,
        drift_max: f("drift_max")?,
        last_bandwidth: f("last_bandwidth")?,
        linearized: num(get("linearized")?, "linearized")?,
    })
}

pub fn write_path_archive(paths: &PathStore) -> Vec<u8> {
    let mut w = Writer::header(PATH_MAGIC);
    w.u64(paths.seed());
    w.u64(paths.n_particles() as u64);
    w.u64(paths.times().len() as u64);
    paths.times().iter().for_each(|t| w.f64(*t));
    w.text(&scheme_metadata(&paths.scheme));
    paths.trajectories().iter().for_each(|x| w.f64(*x));
    w.0
}

pub fn read_path_archive(buf: &[u8]) -> Result<PathStore> {
    let mut r = Reader::open(buf, PATH_MAGIC, "path archive")?;
    let seed = r.u64()?;
    let n = r.count()?;
    let n_times = r.count()?;
    let times = r.f64s(n_times)?;
    let scheme = parse_scheme_metadata(&r.text()?)?;
    let trajectories = r.f64s(
        n.checked_mul(n_times)
            .ok_or_else(|| format_err("path archive", "size overflow"))?,
    )?;
    r.finish()?;
    Ok(PathStore::from_parts(times, trajectories, n, seed, scheme)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nlmarkov::particles::{simulate_ddsde, InitialLaw, KdeSpec, SimulationConfig};
    use nlmarkov::pde::{solve_nlfpke, SolverConfig};
    use nlmarkov::CoefficientSet;

    fn heat() -> CoefficientSet {
        CoefficientSet::from_registry("heat", &Default::default()).unwrap()
    }

    #[test]
    fn flow_round_trips_through_both_formats() {
        let g = Grid::symmetric(0.0, 8.0, 80).unwrap();
        let zeta = GridDensity::gaussian(g, 0.0, 0.5, 0.0).unwrap();
        let flow = solve_nlfpke(&heat(), &zeta, &[0.0, 0.1, 0.2], &SolverConfig::default()).unwrap();
        let meta = vec![("coefficients".to_string(), "heat".to_string())];
        let (back, m) = read_flow_archive(&write_flow_archive(&flow, &meta)).unwrap();
        assert_eq!(back, flow);
        assert_eq!(m, meta);
        let from_csv = read_density_csv(&flow_csv(&flow)).unwrap();
        assert_eq!(from_csv.len(), 3);
        for (a, b) in from_csv.iter().zip(flow.densities()) {
            assert_eq!(a.values(), b.values());
            assert!((a.grid().cell_width() - b.grid().cell_width()).abs() < 1e-12);
        }
    }

    #[test]
    fn paths_round_trip() {
        let cfg = SimulationConfig::new(50, 0.01, KdeSpec::gaussian_silverman(Grid::symmetric(0.0, 5.0, 100).unwrap()), 3);
        let p = simulate_ddsde(&heat(), &InitialLaw::Uniform(-1.0, 1.0), &[0.0, 0.05, 0.1], &cfg).unwrap();
        let back = read_path_archive(&write_path_archive(&p)).unwrap();
        assert_eq!(back, p);
        assert_eq!(paths_csv(&p).lines().count(), 1 + 50 * 3);
    }

    #[test]
    fn damaged_archives_are_rejected() {
        assert!(read_flow_archive(&[]).is_err());
        assert!(read_path_archive(b"NLMPATH\0\x01\0\0\0\0\0\0\0").is_err());
        assert!(read_flow_archive(PATH_MAGIC).is_err());
        assert!(read_density_csv("t,x,u\n").is_err());
    }
}
