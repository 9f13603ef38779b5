//! Error norms, convergence tables and steady-state detection.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::basis::gauss_legendre;
use crate::error::{Error, Result};
use crate::field::DGField;
use crate::integrator::{DiagRecord, Solver};
use crate::params::SchemeParams;
use crate::problem::ProblemSpec;

/// `(L2, Linf)` distance between `rho` and `reference`.
///
/// L² uses a `k + 3` point Gauss rule per cell. L∞ is the maximum over
/// `2k + 5` Chebyshev points plus both endpoints of every cell.
pub fn error_norms(rho: &DGField, reference: impl Fn(f64) -> f64) -> (f64, f64) {
    let k = rho.degree();
    let mesh = rho.mesh();
    let h = mesh.h();
    let rule = gauss_legendre(k + 3);
    let m = 2 * k + 5;
    let mut samples: Vec<f64> = (0..m).map(|j| -((2 * j + 1) as f64 * PI / (2 * m) as f64).cos()).collect();
    samples.push(-1.0);
    samples.push(1.0);

    let mut l2 = 0.0;
    let mut linf = 0.0f64;
    for i in 0..rho.n_cells() {
        let mut cell = 0.0;
        for (&xi, &w) in rule.nodes.iter().zip(&rule.weights) {
            let d = eval(rho, i, xi) - reference(mesh.to_physical(i, xi));
            cell += w * d * d;
        }
        l2 += 0.5 * h * cell;
        for &xi in &samples {
            let d = eval(rho, i, xi) - reference(mesh.to_physical(i, xi));
            linf = linf.max(d.abs());
        }
    }
    (l2.sqrt(), linf)
}

fn eval(rho: &DGField, cell: usize, xi: f64) -> f64 {
    rho.evaluate(cell, xi, 0).expect("cell index in range")
}

/// One line of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConvergenceRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L2_error")]
    pub l2_error: f64,
    /// Empty on the coarsest row.
    #[serde(rename = "L2_order")]
    pub l2_order: Option<f64>,
    #[serde(rename = "Linf_error")]
    pub linf_error: f64,
    #[serde(rename = "Linf_order")]
    pub linf_order: Option<f64>,
}

/// Observed order between two successive meshes.
pub fn observed_order(n_coarse: usize, err_coarse: f64, n_fine: usize, err_fine: f64) -> f64 {
    let ratio = n_fine as f64 / n_coarse as f64;
    if ratio == 2.0 {
        (err_coarse / err_fine).log2()
    } else {
        (err_coarse / err_fine).ln() / ratio.ln()
    }
}

/// Build rows from `(N, L2, Linf)` triples ordered from coarse to fine.
pub fn convergence_rows(errors: &[(usize, f64, f64)]) -> Vec<ConvergenceRow> {
    errors
        .iter()
        .enumerate()
        .map(|(i, &(n, l2, linf))| {
            let prev = i.checked_sub(1).map(|p| errors[p]);
            ConvergenceRow {
                n,
                l2_error: l2,
                l2_order: prev.map(|(pn, pl2, _)| observed_order(pn, pl2, n, l2)),
                linf_error: linf,
                linf_order: prev.map(|(pn, _, pinf)| observed_order(pn, pinf, n, linf)),
            }
        })
        .collect()
}

/// Run `problem` to `t_final` at every `N` in `n_list` (concurrently) and
/// measure the error against the exact solution.
pub fn convergence_study(
    problem: &ProblemSpec,
    k: usize,
    n_list: &[usize],
    t_final: f64,
    params: &SchemeParams,
) -> Result<Vec<ConvergenceRow>> {
    let exact = problem
        .exact_solution
        .clone()
        .ok_or_else(|| Error::Config(format!("{} has no exact solution", problem.name)))?;
    if n_list.is_empty() || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!("N list {n_list:?} must be nonempty and strictly increasing")));
    }
    let params = params.clone().with_degree(k);
    let errors = n_list
        .par_iter()
        .map(|&n| {
            let mut solver = Solver::new(problem.clone(), params.clone(), n)?;
            solver.run(t_final, &[], &mut ())?;
            let t = solver.time();
            let (l2, linf) = error_norms(solver.state(), |x| exact(t, x));
            Ok((n, l2, linf))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(convergence_rows(&errors))
}

/// Constancy of `q` on the support of `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateReport {
    /// Largest per-component spread `max q - min q`.
    pub q_variance: f64,
    /// Maximal runs of contiguous support cells, as `(first, last)`.
    pub components: Vec<(usize, usize)>,
    /// Spread of `q` on each component.
    pub spreads: Vec<f64>,
}

impl SteadyStateReport {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }
}

/// Default support threshold on cell averages.
pub const SUPPORT_THRESHOLD: f64 = 1e-6;

/// The support is the set of cells with average above `threshold`; `q` is
/// sampled at the Gauss nodes of every support cell.
pub fn steady_state_report(rho: &DGField, q: &DGField, threshold: f64) -> SteadyStateReport {
    let averages = rho.averages();
    let mut components = Vec::new();
    let mut start = None;
    for (i, &a) in averages.iter().enumerate() {
        match (a > threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                components.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        components.push((s, averages.len() - 1));
    }

    let rule = gauss_legendre(q.degree() + 3);
    let spreads: Vec<f64> = components
        .iter()
        .map(|&(first, last)| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in first..=last {
                for &xi in &rule.nodes {
                    let v = eval(q, i, xi);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            hi - lo
        })
        .collect();
    let q_variance = spreads.iter().copied().fold(0.0, f64::max);
    SteadyStateReport { q_variance, components, spreads }
}

/// Per-step slack allowed in the energy decrease check.
pub fn energy_slack(energy: f64) -> f64 {
    1e-10 * (1.0 + energy.abs())
}

/// Conservation, dissipation and positivity figures of a recorded run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub t_end: f64,
    /// `max |mass - mass_0| / |mass_0|` over all records.
    pub mass_drift: f64,
    /// Steps whose energy rose by more than [`energy_slack`].
    pub energy_violations: usize,
    /// Largest relative energy rise over all steps (0 if none).
    pub worst_energy_rise: f64,
    pub min_cell_avg: f64,
    pub min_point: f64,
    pub corrected_steps: usize,
}

impl RunSummary {
    pub fn from_records(records: &[DiagRecord]) -> Self {
        let m0 = records.first().map_or(0.0, |r| r.mass);
        let mut s = Self {
            steps: records.last().map_or(0, |r| r.step),
            t_end: records.last().map_or(0.0, |r| r.t),
            mass_drift: 0.0,
            energy_violations: 0,
            worst_energy_rise: 0.0,
            min_cell_avg: f64::INFINITY,
            min_point: f64::INFINITY,
            corrected_steps: 0,
        };
        for (i, r) in records.iter().enumerate() {
            s.mass_drift = s.mass_drift.max((r.mass - m0).abs() / m0.abs());
            s.min_cell_avg = s.min_cell_avg.min(r.min_cell_avg);
            s.min_point = s.min_point.min(r.min_point);
            s.corrected_steps += r.used_correction as usize;
            if i > 0 {
                let prev = records[i - 1].energy;
                let rise = r.energy - prev;
                if rise > energy_slack(prev) {
                    s.energy_violations += 1;
                }
                s.worst_energy_rise = s.worst_energy_rise.max(rise / (1.0 + prev.abs()));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Basis;
    use crate::mesh::build_mesh;
    use crate::problem::example;
    use std::sync::Arc;

    #[test]
    fn norms_of_the_field_itself_vanish() {
        let mesh = Arc::new(build_mesh(0.0, 2.0, 7).unwrap());
        // a cubic lies in the space, so the field is continuous
        let f = DGField::project(mesh, &Basis::new(3), |x| x * x * x - 2.0 * x + 0.5);
        let (l2, linf) = error_norms(&f, |x| f.value_at(x));
        assert!(l2 < 1e-13 && linf < 1e-13, "{l2} {linf}");
    }

    #[test]
    fn zero_field_against_one() {
        let mesh = Arc::new(build_mesh(0.0, 1.0, 5).unwrap());
        let f = DGField::zeros(mesh, 2);
        let (l2, linf) = error_norms(&f, |_| 1.0);
        assert!((l2 - 1.0).abs() < 1e-14);
        assert_eq!(linf, 1.0);
    }

    #[test]
    fn linf_sees_endpoint_extremes() {
        // a linear error peaks at the endpoints
        let mesh = Arc::new(build_mesh(0.0, 1.0, 2).unwrap());
        let f = DGField::zeros(mesh, 1);
        let (_, linf) = error_norms(&f, |x| x);
        assert_eq!(linf, 1.0);
    }

    #[test]
    fn rows_and_orders() {
        let rows = convergence_rows(&[(16, 4e-3, 8e-3), (32, 1e-3, 2e-3), (64, 1.25e-4, 5e-4)]);
        assert_eq!(rows[0].l2_order, None);
        assert_eq!(rows[0].linf_order, None);
        assert_eq!(rows[1].l2_order, Some(2.0));
        assert_eq!(rows[2].l2_order, Some(3.0));
        assert_eq!(rows[2].linf_order, Some(2.0));
        assert!((observed_order(10, 9.0, 30, 1.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn study_rejects_bad_input() {
        let p = example(1, None).unwrap();
        let prm = crate::problem::default_params();
        assert!(convergence_study(&p, 1, &[32, 16], 0.01, &prm).is_err());
        assert!(convergence_study(&p, 1, &[], 0.01, &prm).is_err());
        let p2 = example(2, None).unwrap();
        assert!(convergence_study(&p2, 1, &[8, 16], 0.01, &prm).is_err());
    }

    #[test]
    fn heat_k1_second_order() {
        let p = example(1, None).unwrap();
        let rows = convergence_study(&p, 1, &[16, 32, 64], 0.1, &crate::problem::default_params()).unwrap();
        for r in &rows[1..] {
            let o = r.l2_order.unwrap();
            assert!((o - 2.0).abs() < 0.15, "{rows:?}");
        }
    }

    #[test]
    fn constant_q_has_no_spread() {
        let mesh = Arc::new(build_mesh(0.0, 1.0, 10).unwrap());
        let basis = Basis::new(2);
        let rho = DGField::project(mesh.clone(), &basis, |x| 1.0 + x);
        let q = DGField::project(mesh, &basis, |_| 3.5);
        let r = steady_state_report(&rho, &q, SUPPORT_THRESHOLD);
        assert_eq!(r.q_variance, 0.0);
        assert_eq!(r.components, vec![(0, 9)]);
    }

    #[test]
    fn two_bumps_two_levels() {
        let mesh = Arc::new(build_mesh(0.0, 10.0, 10).unwrap());
        let basis = Basis::new(1);
        let rho = DGField::from_averages(mesh.clone(), 1, &[0.0, 1.0, 2.0, 1.0, 0.0, 0.0, 3.0, 3.0, 0.0, 1e-9]).unwrap();
        let q = DGField::project(mesh, &basis, |x| if x < 5.0 { 1.0 } else { 2.0 });
        let r = steady_state_report(&rho, &q, SUPPORT_THRESHOLD);
        assert_eq!(r.n_components(), 2);
        assert_eq!(r.components, vec![(1, 3), (6, 7)]);
        assert_eq!(r.q_variance, 0.0);
    }

    #[test]
    fn spread_is_per_component_maximum() {
        let mesh = Arc::new(build_mesh(0.0, 4.0, 4).unwrap());
        let rho = DGField::from_averages(mesh.clone(), 0, &[1.0, 0.0, 1.0, 1.0]).unwrap();
        let q = DGField::from_averages(mesh, 0, &[5.0, 0.0, 1.0, 1.25]).unwrap();
        let r = steady_state_report(&rho, &q, SUPPORT_THRESHOLD);
        assert_eq!(r.spreads, vec![0.0, 0.25]);
        assert_eq!(r.q_variance, 0.25);
    }

    fn rec(step: usize, energy: f64, mass: f64) -> DiagRecord {
        DiagRecord {
            step,
            t: step as f64,
            dt: if step == 0 { 0.0 } else { 1.0 },
            energy,
            mass,
            min_cell_avg: 0.5,
            min_point: 0.25,
            limited_cells: 0,
            used_correction: step == 2,
        }
    }

    #[test]
    fn summary_counts_rises_beyond_slack() {
        let recs = [rec(0, 1.0, 2.0), rec(1, 0.5, 2.0), rec(2, 0.5 + 1e-11, 2.0 + 2e-10), rec(3, 0.6, 2.0)];
        let s = RunSummary::from_records(&recs);
        assert_eq!(s.energy_violations, 1);
        assert!((s.worst_energy_rise - (0.1 - 1e-11) / 1.5).abs() < 1e-12);
        assert!((s.mass_drift - 1e-10).abs() < 1e-15);
        assert_eq!(s.corrected_steps, 1);
        assert_eq!(s.steps, 3);
    }
}
