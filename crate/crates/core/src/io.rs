//! Run configuration and CSV output.
//!
//! Configuration files are plain text, one `key = value` entry per line,
//! with `#` starting a comment. Floats are written in shortest round-trip
//! form, so reading a file back reproduces the in-memory values exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::gauss_lobatto;
use crate::diagnostics::ConvergenceRow;
use crate::error::{Error, Result};
use crate::field::DGField;
use crate::integrator::{DiagRecord, RunObserver};
use crate::params::{Integrator, SchemeParams};
use crate::problem::{default_params, example, ProblemSpec, EXAMPLES};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "GRADFLOW_OUT";

/// Output directory used when neither a flag nor the environment sets one.
pub const DEFAULT_OUT: &str = "gradflow-out";

/// Everything needed to reproduce one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub example: u32,
    pub variant: Option<String>,
    pub n_cells: usize,
    pub degree: usize,
    pub t_final: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub delta: f64,
    pub safety: f64,
    pub cap_coef: f64,
    pub integrator: Integrator,
    pub snapshots: Vec<f64>,
    pub out: Option<PathBuf>,
    pub strict_energy: bool,
    pub seed: u64,
}

/// Catalog defaults for example `id`.
impl RunConfig {
    pub fn for_example(id: u32) -> Result<Self> {
        let info = EXAMPLES
            .iter()
            .find(|e| e.id == id)
            .ok_or(Error::UnknownExample { id, variant: None })?;
        let p = default_params();
        Ok(Self {
            example: id,
            variant: info.variants.first().map(|v| v.to_string()),
            n_cells: info.n_cells,
            degree: info.degree,
            t_final: info.t_final,
            beta0: p.beta0,
            beta1: p.beta1,
            delta: p.delta,
            safety: p.safety,
            cap_coef: p.cap_coef,
            integrator: p.integrator,
            snapshots: Vec::new(),
            out: None,
            strict_energy: p.strict_energy,
            seed: 0,
        })
    }

    /// Parse a whole configuration text. The `example` entry (default 1)
    /// selects the defaults the remaining entries override.
    pub fn parse(text: &str) -> Result<Self> {
        let entries = parse_entries(text)?;
        let id = match entries.iter().find(|(k, _)| k == "example") {
            Some((_, v)) => parse_num::<u32>("example", v)?,
            None => 1,
        };
        let mut cfg = Self::for_example(id)?;
        for (k, v) in &entries {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&read_config(path)?)
    }

    /// Set one entry from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "example" => self.example = parse_num(key, v)?,
            "variant" => self.variant = if v.is_empty() { None } else { Some(v.to_string()) },
            "N" | "n" | "n_cells" => self.n_cells = parse_num(key, v)?,
            "k" | "degree" => self.degree = parse_num(key, v)?,
            "t_final" => self.t_final = parse_num(key, v)?,
            "beta0" => self.beta0 = parse_num(key, v)?,
            "beta1" => self.beta1 = parse_num(key, v)?,
            "delta" => self.delta = parse_num(key, v)?,
            "safety" => self.safety = parse_num(key, v)?,
            "cap_coef" => self.cap_coef = parse_num(key, v)?,
            "integrator" => self.integrator = v.parse()?,
            "snapshots" => {
                self.snapshots = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_num("snapshots", s))
                    .collect::<Result<_>>()?
            }
            "out" => self.out = Some(PathBuf::from(v)),
            "strict_energy" => {
                self.strict_energy = match v.to_ascii_lowercase().as_str() {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(Error::Config(format!("strict_energy: expected a boolean, got `{v}`"))),
                }
            }
            "seed" => self.seed = parse_num(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let nums = [self.t_final, self.beta0, self.beta1, self.delta, self.safety, self.cap_coef];
        if nums.iter().chain(&self.snapshots).any(|v| !v.is_finite()) {
            return Err(Error::Config("numeric entries must be finite".into()));
        }
        if self.n_cells < 2 {
            return Err(Error::Config(format!("N must be at least 2, got {}", self.n_cells)));
        }
        if self.t_final <= 0.0 {
            return Err(Error::Config(format!("t_final must be positive, got {}", self.t_final)));
        }
        self.scheme_params().validate()?;
        self.problem().map(|_| ())
    }

    pub fn scheme_params(&self) -> SchemeParams {
        SchemeParams {
            beta0: self.beta0,
            beta1: self.beta1,
            delta: self.delta,
            degree: self.degree,
            safety: self.safety,
            cap_coef: self.cap_coef,
            integrator: self.integrator,
            strict_energy: self.strict_energy,
            ..default_params()
        }
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        example(self.example, self.variant.as_deref())
    }

    /// Output directory: the configured one, else `$GRADFLOW_OUT`, else
    /// [`DEFAULT_OUT`].
    pub fn out_dir(&self) -> PathBuf {
        resolve_out_dir(self.out.as_deref())
    }

    /// Render back to the file format.
    pub fn to_text(&self) -> String {
        let mut s = format!("example = {}\n", self.example);
        if let Some(v) = &self.variant {
            s += &format!("variant = {v}\n");
        }
        s += &format!(
            "N = {}\nk = {}\nt_final = {:?}\nbeta0 = {:?}\nbeta1 = {:?}\ndelta = {:?}\nsafety = {:?}\ncap_coef = {:?}\n",
            self.n_cells, self.degree, self.t_final, self.beta0, self.beta1, self.delta, self.safety, self.cap_coef
        );
        s += &format!("integrator = {}\nstrict_energy = {}\nseed = {}\n", self.integrator, self.strict_energy, self.seed);
        if !self.snapshots.is_empty() {
            let list: Vec<String> = self.snapshots.iter().map(|t| format!("{t:?}")).collect();
            s += &format!("snapshots = {}\n", list.join(", "));
        }
        if let Some(o) = &self.out {
            s += &format!("out = {}\n", o.display());
        }
        s
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{}`", v.trim())))
}

/// Read a configuration file into text, with the path in any error.
pub fn read_config(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// `key = value` pairs in file order. Blank lines and `#` comments are
/// skipped; anything else without `=` is an error.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", no + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", no + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn resolve_out_dir(explicit: Option<&Path>) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv { path: path.to_path_buf(), source }
}

/// Create `dir` and its parents.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err(path))
}

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";

const TIMESERIES_HEADER: [&str; 9] =
    ["step", "t", "dt", "energy", "mass", "min_cell_avg", "min_point", "limited_cells", "used_correction"];

#[derive(Serialize, Deserialize)]
struct TimeseriesRow {
    step: usize,
    t: f64,
    dt: f64,
    energy: f64,
    mass: f64,
    min_cell_avg: f64,
    min_point: f64,
    limited_cells: usize,
    used_correction: u8,
}

impl From<&DiagRecord> for TimeseriesRow {
    fn from(r: &DiagRecord) -> Self {
        Self {
            step: r.step,
            t: r.t,
            dt: r.dt,
            energy: r.energy,
            mass: r.mass,
            min_cell_avg: r.min_cell_avg,
            min_point: r.min_point,
            limited_cells: r.limited_cells,
            used_correction: r.used_correction as u8,
        }
    }
}

impl From<TimeseriesRow> for DiagRecord {
    fn from(r: TimeseriesRow) -> Self {
        Self {
            step: r.step,
            t: r.t,
            dt: r.dt,
            energy: r.energy,
            mass: r.mass,
            min_cell_avg: r.min_cell_avg,
            min_point: r.min_point,
            limited_cells: r.limited_cells,
            used_correction: r.used_correction != 0,
        }
    }
}

/// Write `dir/timeseries.csv`. An empty slice gives a header-only file.
pub fn emit_timeseries(dir: &Path, records: &[DiagRecord]) -> Result<PathBuf> {
    let path = dir.join(TIMESERIES_FILE);
    write_rows(&path, &TIMESERIES_HEADER, records.iter().map(TimeseriesRow::from))?;
    Ok(path)
}

pub fn read_timeseries(path: &Path) -> Result<Vec<DiagRecord>> {
    Ok(read_rows::<TimeseriesRow>(path)?.into_iter().map(Into::into).collect())
}

/// Sanity of a time series: `t` nondecreasing, `dt` zero on the initial
/// row and positive afterwards, every `t` the previous one plus its `dt`
/// up to rounding.
pub fn validate_timeseries(records: &[DiagRecord]) -> std::result::Result<(), String> {
    for (i, r) in records.iter().enumerate() {
        if r.step == 0 {
            if r.dt != 0.0 {
                return Err(format!("row {i}: initial row has dt = {}", r.dt));
            }
        } else if !(r.dt > 0.0) {
            return Err(format!("row {i}: dt = {} is not positive", r.dt));
        }
        if i > 0 {
            let prev = &records[i - 1];
            if r.t < prev.t {
                return Err(format!("row {i}: t decreases from {} to {}", prev.t, r.t));
            }
            if (prev.t + r.dt - r.t).abs() > 1e-12 * r.t.abs().max(1.0) {
                return Err(format!("row {i}: t = {} but previous t + dt = {}", r.t, prev.t + r.dt));
            }
        }
    }
    Ok(())
}

/// File name of the snapshot at time `t`.
pub fn snapshot_name(t: f64) -> String {
    format!("snapshot_t{t}.csv")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub cell: usize,
    pub x: f64,
    pub rho: f64,
    pub q: f64,
}

/// Values of `rho` and `q` at `k + 2` Gauss-Lobatto points of every cell.
pub fn snapshot_rows(rho: &DGField, q: &DGField) -> Vec<SnapshotRow> {
    let rule = gauss_lobatto(rho.degree() + 2);
    let mesh = rho.mesh();
    let mut rows = Vec::with_capacity(rho.n_cells() * rule.len());
    for i in 0..rho.n_cells() {
        for &xi in &rule.nodes {
            rows.push(SnapshotRow {
                cell: i,
                x: mesh.to_physical(i, xi),
                rho: rho.evaluate(i, xi, 0).expect("cell in range"),
                q: q.evaluate(i, xi, 0).expect("cell in range"),
            });
        }
    }
    rows
}

pub fn emit_snapshot(dir: &Path, t: f64, rho: &DGField, q: &DGField) -> Result<PathBuf> {
    let path = dir.join(snapshot_name(t));
    write_rows(&path, &["cell", "x", "rho", "q"], snapshot_rows(rho, q))?;
    Ok(path)
}

pub fn read_snapshot(path: &Path) -> Result<Vec<SnapshotRow>> {
    read_rows(path)
}

pub fn emit_convergence(dir: &Path, rows: &[ConvergenceRow]) -> Result<PathBuf> {
    let path = dir.join(CONVERGENCE_FILE);
    write_rows(&path, &["N", "L2_error", "L2_order", "Linf_error", "Linf_order"], rows)?;
    Ok(path)
}

pub fn read_convergence(path: &Path) -> Result<Vec<ConvergenceRow>> {
    read_rows(path)
}

/// Observer that streams the time series to `dir/timeseries.csv` and writes
/// one file per snapshot. The first IO failure is kept and later calls are
/// ignored; [`CsvObserver::finish`] reports it.
pub struct CsvObserver {
    dir: PathBuf,
    path: PathBuf,
    writer: Option<csv::Writer<BufWriter<File>>>,
    error: Option<Error>,
    /// Snapshot files written so far.
    pub snapshot_files: Vec<PathBuf>,
    /// Number of time series rows written.
    pub rows: usize,
}

impl CsvObserver {
    pub fn new(dir: &Path) -> Result<Self> {
        ensure_dir(dir)?;
        let path = dir.join(TIMESERIES_FILE);
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
        w.write_record(TIMESERIES_HEADER).map_err(csv_err(&path))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            path,
            writer: Some(w),
            error: None,
            snapshot_files: Vec::new(),
            rows: 0,
        })
    }

    pub fn timeseries_path(&self) -> &Path {
        &self.path
    }

    /// Flush and surface the first error, if any.
    pub fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        if let Some(mut w) = self.writer.take() {
            w.flush().map_err(io_err(&self.path))?;
            let inner = w.into_inner().map_err(|e| Error::Io { path: self.path.clone(), source: e.into_error() })?;
            inner
                .into_inner()
                .map_err(|e| Error::Io { path: self.path.clone(), source: e.into_error() })?
                .sync_all()
                .map_err(io_err(&self.path))?;
        }
        Ok(())
    }
}

impl RunObserver for CsvObserver {
    fn on_record(&mut self, record: &DiagRecord) {
        if self.error.is_some() {
            return;
        }
        if let Some(w) = self.writer.as_mut() {
            match w.serialize(TimeseriesRow::from(record)) {
                Ok(()) => self.rows += 1,
                Err(e) => self.error = Some(Error::Csv { path: self.path.clone(), source: e }),
            }
        }
    }

    fn on_snapshot(&mut self, t: f64, rho: &DGField, q: &DGField) {
        if self.error.is_some() {
            return;
        }
        match emit_snapshot(&self.dir, t, rho, q) {
            Ok(p) => self.snapshot_files.push(p),
            Err(e) => self.error = Some(e),
        }
    }
}

/// Forwards every callback to two observers.
pub struct Tee<'a, A: RunObserver, B: RunObserver>(pub &'a mut A, pub &'a mut B);

impl<A: RunObserver, B: RunObserver> RunObserver for Tee<'_, A, B> {
    fn on_record(&mut self, record: &DiagRecord) {
        self.0.on_record(record);
        self.1.on_record(record);
    }

    fn on_snapshot(&mut self, t: f64, rho: &DGField, q: &DGField) {
        self.0.on_snapshot(t, rho, q);
        self.1.on_snapshot(t, rho, q);
    }
}

/// Write `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}
