//! Explicit time stepping with the hybrid positivity strategy: every Euler
//! stage first uses the plain DDG flux; if a cell average comes out
//! nonpositive the stage is recomputed with the corrected flux.
//!
//! SSP-RK3 applies the same check stage by stage and limits after each stage.
//! If even a corrected stage fails, the step is retried with half the time
//! step (RK3 only; forward Euler aborts).

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::convolution::ConvolutionValues;
use crate::error::{Error, Result};
use crate::field::DGField;
use crate::limiter::{apply_limiter_with_floor, field_min, LimiterReport};
use crate::mesh::Mesh1D;
use crate::operator::{DgOperator, FluxMode};
use crate::params::{Integrator, SchemeParams};
use crate::problem::ProblemSpec;

/// Default diffusive cap coefficient: `dt <= DEFAULT_CAP_COEF * h^2 / (L D)`
/// with `L` the operator's unit spectral radius and `D` the largest
/// effective diffusivity.
/// SSP-RK3 is stable on the negative real axis up to 2.51.
pub const DEFAULT_CAP_COEF: f64 = 2.0;

/// Diffusivity floor in the cap so degenerate problems keep a finite step.
const MIN_DIFFUSIVITY: f64 = 1e-6;

/// Largest number of step halvings before giving up.
pub const MAX_RETRIES: usize = 20;

/// Relative slack of the discrete energy law, `1e-10 (1 + |E|)`.
pub const ENERGY_SLACK: f64 = 1e-10;

/// Stage weights `(a, b)` of `y_{s+1} = a y_0 + b E(y_s)`.
pub const SSP_RK3_WEIGHTS: [(f64, f64); 3] = [(0.0, 1.0), (0.75, 0.25), (1.0 / 3.0, 2.0 / 3.0)];
/// Stage times as fractions of the step.
pub const SSP_RK3_TIMES: [f64; 3] = [0.0, 1.0, 0.5];

/// Three-stage SSP-RK3 built from a forward-Euler map. `euler(s, y)` returns
/// `y + dt L(y)` for stage `s`; `post` is applied after every stage (limiting).
pub fn ssp_rk3<S, E>(
    y0: &S,
    mut euler: impl FnMut(usize, &S) -> std::result::Result<S, E>,
    mut combine: impl FnMut(f64, &S, f64, &S) -> S,
    mut post: impl FnMut(usize, S) -> std::result::Result<S, E>,
) -> std::result::Result<S, E> {
    let mut y = post(0, euler(0, y0)?)?;
    for (s, &(a, b)) in SSP_RK3_WEIGHTS.iter().enumerate().skip(1) {
        let e = euler(s, &y)?;
        y = post(s, combine(a, y0, b, &e))?;
    }
    Ok(y)
}

/// `min(safety * omega1 * h / max_flux, cap)`, or `cap` when all fluxes
/// vanish.
pub fn cfl_dt_from(max_flux: f64, h: f64, omega1: f64, safety: f64, cap: f64) -> f64 {
    if max_flux < 1e-14 {
        cap
    } else {
        (safety * omega1 * h / max_flux).min(cap)
    }
}

/// Positivity time step for `rho` with energy flux `q`.
pub fn cfl_dt(op: &DgOperator, rho: &DGField, q: &DGField) -> f64 {
    let h = op.mesh().h();
    let p = op.params();
    let d = max_diffusivity(op, rho);
    let cap = p.cap_coef * h * h / (op.diffusion_radius() * d.max(MIN_DIFFUSIVITY));
    cfl_dt_from(op.max_interface_flux(rho, q), h, op.basis().lobatto_endpoint_weight(), p.safety, cap)
}

/// Largest `rho H''(rho)` over Gauss nodes.
fn max_diffusivity(op: &DgOperator, rho: &DGField) -> f64 {
    let tab = op.basis().gauss_tab();
    let s = rho.value_scale();
    let hf = &op.problem().internal_energy;
    let mut d: f64 = 0.0;
    for i in 0..rho.n_cells() {
        for g in 0..tab.n_points() {
            d = d.max(hf.diffusivity(tab.combine(0, g, rho.cell(i)) * s));
        }
    }
    d
}

/// `rho + dt * rhs(rho, q)`.
pub fn euler_update(op: &DgOperator, rho: &DGField, q: &DGField, dt: f64, mode: FluxMode, t: f64) -> Result<DGField> {
    let r = op.rhs(rho, q, mode, t)?;
    let mut out = rho.clone();
    out.axpy(dt, &r);
    Ok(out)
}

fn all_averages_positive(f: &DGField) -> bool {
    f.averages().iter().all(|&a| a > 0.0)
}

/// One hybrid Euler stage: plain flux first, corrected flux if an average is
/// nonpositive. `None` means even the corrected update failed.
pub fn hybrid_euler(
    op: &DgOperator,
    rho: &DGField,
    q: &DGField,
    dt: f64,
    t: f64,
) -> Result<Option<(DGField, bool)>> {
    // skip assembling the plain update when its averages already fail
    let hopeless = op.average_rates(rho, q, FluxMode::Plain).is_some_and(|r| {
        rho.coeffs().chunks(rho.n_modes()).zip(&r).any(|(c, ri)| !(c[0] + dt * ri > 0.0))
    });
    if !hopeless {
        let plain = euler_update(op, rho, q, dt, FluxMode::Plain, t)?;
        if all_averages_positive(&plain) {
            return Ok(Some((plain, false)));
        }
    }
    let corr = euler_update(op, rho, q, dt, FluxMode::Corrected, t)?;
    if all_averages_positive(&corr) {
        Ok(Some((corr, true)))
    } else {
        Ok(None)
    }
}

/// Result of one accepted time step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub dt_used: f64,
    /// Whether any stage needed the corrected flux.
    pub used_correction: bool,
    /// Number of stages that used the corrected flux.
    pub corrected_stages: usize,
    pub limiter_report: LimiterReport,
    pub energy_before: f64,
    pub energy_after: f64,
    pub mass_before: f64,
    pub mass_after: f64,
    /// Step halvings before acceptance.
    pub retries: usize,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub energy: f64,
    pub mass: f64,
    pub min_cell_avg: f64,
    pub min_point: f64,
    pub limited_cells: usize,
    pub used_correction: bool,
}

/// Receives diagnostics and snapshots during [`Solver::run`].
pub trait RunObserver {
    fn on_record(&mut self, _record: &DiagRecord) {}
    fn on_snapshot(&mut self, _t: f64, _rho: &DGField, _q: &DGField) {}
}

impl RunObserver for () {}

/// Observer that keeps everything in memory.
#[derive(Debug, Clone, Default)]
pub struct Recorder {
    pub records: Vec<DiagRecord>,
    pub snapshots: Vec<(f64, DGField, DGField)>,
}

impl RunObserver for Recorder {
    fn on_record(&mut self, record: &DiagRecord) {
        self.records.push(*record);
    }

    fn on_snapshot(&mut self, t: f64, rho: &DGField, q: &DGField) {
        self.snapshots.push((t, rho.clone(), q.clone()));
    }
}

enum StageFailure {
    Positivity(String),
    Fatal(Error),
}

impl From<Error> for StageFailure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonPositiveDensity { .. } | Error::NegativeAverage { .. } => Self::Positivity(e.to_string()),
            other => Self::Fatal(other),
        }
    }
}

/// Lazily computed step bound; atomic so that a [`Solver`] is `Sync`.
#[derive(Debug)]
struct CachedDt(AtomicU64);

const NO_DT: u64 = u64::MAX;

impl CachedDt {
    fn get(&self) -> Option<f64> {
        match self.0.load(Ordering::Relaxed) {
            NO_DT => None,
            bits => Some(f64::from_bits(bits)),
        }
    }

    fn set(&self, dt: f64) {
        self.0.store(dt.to_bits(), Ordering::Relaxed);
    }

    fn clear(&self) {
        self.0.store(NO_DT, Ordering::Relaxed);
    }
}

impl Clone for CachedDt {
    fn clone(&self) -> Self {
        Self(AtomicU64::new(self.0.load(Ordering::Relaxed)))
    }
}

/// Owns the discrete state and advances it.
#[derive(Debug, Clone)]
pub struct Solver {
    op: DgOperator,
    rho: DGField,
    conv: ConvolutionValues,
    q: DGField,
    energy: f64,
    t: f64,
    step: usize,
    last_limited: usize,
    warnings: Vec<String>,
    /// Step bound of the current state, computed on first use.
    cfl: CachedDt,
}

impl Solver {
    /// Solver on a uniform mesh of the problem's domain, starting from the
    /// limited projection of the initial datum.
    pub fn new(problem: ProblemSpec, params: SchemeParams, n_cells: usize) -> Result<Self> {
        let (a, b) = problem.domain;
        let mesh = Arc::new(Mesh1D::new(a, b, n_cells)?);
        let op = DgOperator::new(problem, params, mesh)?;
        let rho = op.project_initial();
        Self::from_projection(op, rho)
    }

    /// Start from `rho`, lifting cell averages below `delta` up to `delta`
    /// and then limiting.
    pub fn from_projection(op: DgOperator, mut rho: DGField) -> Result<Self> {
        let delta = op.params().delta;
        let sh = op.mesh().h().sqrt();
        for i in 0..rho.n_cells() {
            let c = rho.cell_mut(i);
            if c[0] / sh < delta {
                c[0] = delta * sh;
            }
        }
        let (rho, report) = crate::limiter::apply_limiter(&rho, delta)?;
        let mut s = Self::from_state(op, rho)?;
        s.last_limited = report.cells_modified;
        Ok(s)
    }

    /// Start from `rho` as given.
    pub fn from_state(op: DgOperator, rho: DGField) -> Result<Self> {
        let (conv, q) = op.flux_of(&rho)?;
        let energy = op.energy(&rho, &conv)?;
        let mut warnings = Vec::new();
        let h = op.mesh().h();
        let k = op.basis().degree() as i32;
        if op.params().delta >= h.powi(k + 1) {
            warnings.push(format!(
                "delta = {:e} is not below h^(k+1) = {:e}; the limiter may reduce accuracy",
                op.params().delta,
                h.powi(k + 1)
            ));
        }
        Ok(Self {
            op,
            rho,
            conv,
            q,
            energy,
            t: 0.0,
            step: 0,
            last_limited: 0,
            warnings,
            cfl: CachedDt(AtomicU64::new(NO_DT)),
        })
    }

    pub fn operator(&self) -> &DgOperator {
        &self.op
    }

    pub fn state(&self) -> &DGField {
        &self.rho
    }

    pub fn energy_flux(&self) -> &DGField {
        &self.q
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Positivity/diffusive time step for the current state.
    pub fn cfl_dt(&self) -> f64 {
        if let Some(dt) = self.cfl.get() {
            return dt;
        }
        let dt = cfl_dt(&self.op, &self.rho, &self.q);
        self.cfl.set(dt);
        dt
    }

    /// Diagnostics of the current state.
    pub fn record(&self, dt: f64, used_correction: bool) -> DiagRecord {
        DiagRecord {
            step: self.step,
            t: self.t,
            dt,
            energy: self.energy,
            mass: self.rho.total_mass(),
            min_cell_avg: self.rho.min_average(),
            min_point: field_min(&self.rho),
            limited_cells: self.last_limited,
            used_correction,
        }
    }

    fn abort(&self, reason: String) -> Error {
        Error::SolverAbort { t: self.t, reason, state: self.rho.coeffs().to_vec() }
    }

    /// Try one step of size `dt` without committing it.
    fn attempt(
        &self,
        dt: f64,
        integrator: Integrator,
    ) -> std::result::Result<(DGField, usize, LimiterReport), StageFailure> {
        let op = &self.op;
        let delta = op.params().delta;
        let mut corrected = 0usize;
        let mut report = LimiterReport { worst_min_before: f64::INFINITY, theta_min: 1.0, ..Default::default() };
        let mut merge = |r: LimiterReport| {
            report.cells_modified += r.cells_modified;
            report.worst_min_before = report.worst_min_before.min(r.worst_min_before);
            report.theta_min = report.theta_min.min(r.theta_min);
            for c in r.cells_failed {
                if !report.cells_failed.contains(&c) {
                    report.cells_failed.push(c);
                }
            }
        };
        let mut euler = |s: usize, y: &DGField, times: &[f64]| -> std::result::Result<DGField, StageFailure> {
            let t = self.t + times[s] * dt;
            let new = if s == 0 {
                hybrid_euler(op, y, &self.q, dt, t)?
            } else {
                let (_, q) = op.flux_of(y)?;
                hybrid_euler(op, y, &q, dt, t)?
            };
            match new {
                Some((f, c)) => {
                    corrected += c as usize;
                    Ok(f)
                }
                None => Err(StageFailure::Positivity(format!(
                    "corrected stage {s} produced a nonpositive cell average (dt = {dt:e})"
                ))),
            }
        };
        let out = match integrator {
            Integrator::Euler => {
                let y = euler(0, &self.rho, &[0.0])?;
                let (y, r) = apply_limiter_with_floor(&y, delta)?;
                merge(r);
                y
            }
            Integrator::Rk3 => ssp_rk3(
                &self.rho,
                |s, y| euler(s, y, &SSP_RK3_TIMES),
                |a, y0, b, e| y0.lincomb(a, e, b),
                |_, y| {
                    let (y, r) = apply_limiter_with_floor(&y, delta)?;
                    merge(r);
                    Ok(y)
                },
            )?,
        };
        Ok((out, corrected, report))
    }

    /// Advance one step of at most `dt_limit` with the configured integrator.
    pub fn step(&mut self, dt_limit: f64) -> Result<StepOutcome> {
        let integrator = self.op.params().integrator;
        self.step_with(integrator, dt_limit)
    }

    pub fn euler_step(&mut self, dt_limit: f64) -> Result<StepOutcome> {
        self.step_with(Integrator::Euler, dt_limit)
    }

    pub fn ssp_rk3_step(&mut self, dt_limit: f64) -> Result<StepOutcome> {
        self.step_with(Integrator::Rk3, dt_limit)
    }

    fn step_with(&mut self, integrator: Integrator, dt_limit: f64) -> Result<StepOutcome> {
        let strict = self.op.params().strict_energy;
        let mass_before = self.rho.total_mass();
        let energy_before = self.energy;
        let mut dt = self.cfl_dt().min(dt_limit);
        if !(dt > 0.0) {
            return Err(self.abort(format!("nonpositive time step {dt:e}")));
        }
        let mut retries = 0;
        loop {
            let failure = match self.attempt(dt, integrator) {
                Ok((rho, corrected, report)) => {
                    let (conv, q) = match self.op.flux_of(&rho) {
                        Ok(v) => v,
                        Err(e) => return Err(self.abort(e.to_string())),
                    };
                    let energy = self.op.energy(&rho, &conv)?;
                    let tol = ENERGY_SLACK * (1.0 + energy_before.abs());
                    if strict && energy > energy_before + tol {
                        format!("energy increased from {energy_before} to {energy}")
                    } else {
                        let mass_after = rho.total_mass();
                        self.rho = rho;
                        self.conv = conv;
                        self.q = q;
                        self.cfl.clear();
                        self.energy = energy;
                        self.t += dt;
                        self.step += 1;
                        self.last_limited = report.cells_modified;
                        return Ok(StepOutcome {
                            dt_used: dt,
                            used_correction: corrected > 0,
                            corrected_stages: corrected,
                            limiter_report: report,
                            energy_before,
                            energy_after: energy,
                            mass_before,
                            mass_after,
                            retries,
                        });
                    }
                }
                Err(StageFailure::Fatal(e)) => return Err(e),
                Err(StageFailure::Positivity(msg)) => {
                    if integrator == Integrator::Euler {
                        return Err(self.abort(msg));
                    }
                    msg
                }
            };
            retries += 1;
            if retries > MAX_RETRIES {
                return Err(self.abort(format!("{failure}; gave up after {MAX_RETRIES} halvings")));
            }
            dt *= 0.5;
        }
    }

    /// Integrate to `t_final`, landing exactly on every snapshot time in
    /// `snapshots` (those in `(t, t_final]`) and on `t_final`.
    pub fn run(&mut self, t_final: f64, snapshots: &[f64], observer: &mut dyn RunObserver) -> Result<()> {
        if !(t_final > self.t) || !t_final.is_finite() {
            return Err(Error::Config(format!("t_final = {t_final} must exceed current time {}", self.t)));
        }
        let mut marks: Vec<f64> = snapshots.iter().copied().filter(|&s| s > self.t && s < t_final).collect();
        marks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        marks.dedup();
        let eps = 1e-12 * t_final.abs().max(1.0);
        if snapshots.iter().any(|&s| s <= self.t) {
            observer.on_snapshot(self.t, &self.rho, &self.q);
        }
        observer.on_record(&self.record(0.0, false));
        let mut next_mark = 0;
        while self.t < t_final - eps {
            let target = marks.get(next_mark).copied().unwrap_or(t_final);
            let remaining = target - self.t;
            let cfl = self.cfl_dt();
            // split the last two steps evenly instead of leaving a sliver
            let limit = if cfl >= remaining {
                remaining
            } else if cfl > 0.5 * remaining {
                0.5 * remaining
            } else {
                cfl
            };
            let out = self.step(limit)?;
            if limit == remaining && out.dt_used == limit {
                self.t = target;
            }
            observer.on_record(&self.record(out.dt_used, out.used_correction));
            if next_mark < marks.len() && self.t >= target - eps {
                observer.on_snapshot(self.t, &self.rho, &self.q);
                next_mark += 1;
            }
        }
        if snapshots.iter().any(|&s| (s - t_final).abs() <= eps || s > t_final) {
            observer.on_snapshot(self.t, &self.rho, &self.q);
        }
        Ok(())
    }
}
