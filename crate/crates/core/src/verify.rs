//! Self-checks run by `gradflow verify`: a property suite at small `N`.

use std::sync::Arc;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::basis::{gauss_legendre, normalized_legendre, Basis};
use crate::convolution::{convolve_direct, KernelMomentTable};
use crate::diagnostics::{convergence_study, RunSummary};
use crate::error::Result;
use crate::field::{project_l2, DGField};
use crate::integrator::{cfl_dt_from, Recorder, Solver};
use crate::limiter::{apply_limiter, apply_limiter_with_floor, cell_min};
use crate::mesh::{build_mesh, Mesh1D};
use crate::operator::{DgOperator, FluxMode};
use crate::problem::{default_params, example, BoundaryKind, InteractionKernel, InternalEnergy, KernelKind, ProblemSpec};

/// Outcome of one property.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

/// Tally of the randomized positivity stress test.
#[derive(Debug, Clone, PartialEq)]
pub struct StressOutcome {
    pub trials: usize,
    pub positive: usize,
    /// Smallest updated cell average relative to the old one, over all trials.
    pub worst_ratio: f64,
}

/// Random near-vacuum states with steep energy fluxes, one corrected Euler
/// step at the positivity CFL (no diffusive cap). Counts trials in which
/// every updated cell average stays positive.
pub fn positivity_stress(trials: usize, seed: u64) -> Result<StressOutcome> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = StressOutcome { trials, positive: 0, worst_ratio: f64::INFINITY };
    for _ in 0..trials {
        let k = rng.random_range(0..=3usize);
        let n = rng.random_range(3..=16usize);
        let periodic = rng.random_bool(0.5);
        let mut problem = ProblemSpec::new("stress", (0.0, 1.0), Arc::new(|_| 1.0));
        if periodic {
            problem = problem.with_bc(BoundaryKind::Periodic);
        }
        let mut params = default_params().with_degree(k);
        params.beta0 = rng.random_range(2.0..20.0);
        params.beta1 = rng.random_range(0.0..0.5);
        let mesh = Arc::new(build_mesh(0.0, 1.0, n)?);
        let op = DgOperator::new(problem, params.clone(), mesh.clone())?;

        let sh = mesh.h().sqrt();
        let mut c = Vec::with_capacity(n * (k + 1));
        for _ in 0..n {
            // averages spread over twelve decades, vacuum neighbours included
            let avg = 10f64.powf(rng.random_range(-12.0..0.0));
            c.push(avg * sh);
            for _ in 0..k {
                c.push(avg * rng.random_range(-3.0..3.0) * sh);
            }
        }
        let raw = DGField::from_coeffs(mesh.clone(), k, c)?;
        let (rho, _) = apply_limiter_with_floor(&raw, 0.0)?;
        let scale = 10f64.powf(rng.random_range(-1.0..3.0));
        let qc = (0..n * (k + 1)).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let q = DGField::from_coeffs(mesh.clone(), k, qc)?;

        let h = mesh.h();
        let dt = cfl_dt_from(op.max_interface_flux(&rho, &q), h, op.basis().lobatto_endpoint_weight(), params.safety, f64::INFINITY);
        let rates = op.average_rates(&rho, &q, FluxMode::Corrected).expect("no Dirichlet boundary");
        let averages = rho.averages();
        let mut ok = true;
        for (a, r) in averages.iter().zip(&rates) {
            let new = a + dt * r / sh;
            ok &= new > 0.0;
            out.worst_ratio = out.worst_ratio.min(new / a);
        }
        out.positive += ok as usize;
    }
    Ok(out)
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    Check { name, passed, detail, seconds: start.elapsed().as_secs_f64() }
}

fn run_summary(id: u32, variant: Option<&str>, n: usize, k: usize, t: f64) -> Result<RunSummary> {
    let params = default_params().with_degree(k);
    let mut solver = Solver::new(example(id, variant)?, params, n)?;
    let mut rec = Recorder::default();
    solver.run(t, &[], &mut rec)?;
    Ok(RunSummary::from_records(&rec.records))
}

/// The full suite. `seed` drives every randomized check.
pub fn run_suite(seed: u64) -> Vec<Check> {
    let mut checks = Vec::new();

    checks.push(timed("basis is orthonormal", || {
        let mut worst: f64 = 0.0;
        for k in 0..=4 {
            let rule = gauss_legendre(k + 2);
            for i in 0..=k {
                for j in 0..=k {
                    let g: f64 = rule
                        .nodes
                        .iter()
                        .zip(&rule.weights)
                        .map(|(&x, &w)| {
                            let p = &normalized_legendre(k + 1, x)[0];
                            0.5 * w * p[i] * p[j]
                        })
                        .sum();
                    worst = worst.max((g - (i == j) as u8 as f64).abs());
                }
            }
        }
        Ok((worst < 1e-13, format!("max Gram defect {worst:.2e}")))
    }));

    checks.push(timed("cell average matches quadrature", || {
        let mesh = Arc::new(build_mesh(-1.0, 2.0, 9)?);
        let f = |x: f64| (2.0 * x).sin() + x * x;
        let rho = project_l2(f, mesh.clone(), &Basis::new(3));
        let rule = gauss_legendre(12);
        let worst = (0..9).try_fold(0.0f64, |m, i| -> Result<f64> {
            let (a, b) = (mesh.interfaces()[i], mesh.interfaces()[i + 1]);
            let exact = rule.integrate(a, b, |x| rho.evaluate(i, (2.0 * x - a - b) / (b - a), 0).unwrap()) / (b - a);
            Ok(m.max((rho.cell_average(i)? - exact).abs()))
        })?;
        Ok((worst < 1e-13, format!("max defect {worst:.2e}")))
    }));

    checks.push(timed("fast convolution equals direct sum", || {
        let mesh = Arc::new(build_mesh(-4.0, 4.0, 16)?);
        let basis = Basis::new(2);
        let rho = project_l2(|x| (-(x * x)).exp() + 0.1, mesh.clone(), &basis);
        let mut same = true;
        for kind in [KernelKind::AttractiveRepulsive, KernelKind::CompactTent, KernelKind::Gaussian] {
            let w = InteractionKernel::new(kind);
            let table = KernelMomentTable::for_basis(&w, &mesh, &basis)?;
            let fast = table.convolve(&rho)?;
            let slow = convolve_direct(&w, &basis, table.points(), &rho);
            same &= fast.values().iter().zip(slow.values()).all(|(a, b)| a.to_bits() == b.to_bits());
        }
        Ok((same, "three kernels, N = 16, bitwise".into()))
    }));

    checks.push(timed("limiter: mean, minimum, idempotence", || {
        let mut rng = StdRng::seed_from_u64(seed ^ 0x11);
        let mesh = Arc::new(Mesh1D::new(0.0, 1.0, 2)?);
        let mut bad = 0;
        let trials = 2000;
        for _ in 0..trials {
            let k = rng.random_range(1..=4usize);
            let delta = [0.0, 1e-12, rng.random_range(0.0..0.5)][rng.random_range(0..3usize)];
            let avg = delta + rng.random_range(1e-12..10.0);
            let mut c = Vec::new();
            for _ in 0..2 {
                c.push(avg);
                c.extend((0..k).map(|_| avg * rng.random_range(-5.0..5.0)));
            }
            let f = DGField::from_coeffs(mesh.clone(), k, c)?;
            let (g, _) = apply_limiter(&f, delta)?;
            let (g2, r2) = apply_limiter(&g, delta)?;
            let mean_ok = (0..2).all(|i| {
                let (a, b) = (f.cell_average(i).unwrap(), g.cell_average(i).unwrap());
                (a - b).abs() <= 1e-15 * a.abs()
            });
            let min_ok = (0..2).all(|i| cell_min(&g, i).unwrap() >= delta - 1e-14);
            if !(mean_ok && min_ok && r2.cells_modified == 0 && g2 == g) {
                bad += 1;
            }
        }
        Ok((bad == 0, format!("{bad}/{trials} random cell pairs failed")))
    }));

    checks.push(timed("constant state is a fixed point", || {
        let p = ProblemSpec::new("constant", (-1.0, 1.0), Arc::new(|_| 0.7))
            .with_internal_energy(InternalEnergy::Power { nu: 1.0, m: 2.0 });
        let mut solver = Solver::new(p, default_params().with_degree(2), 16)?;
        let start = solver.state().clone();
        for _ in 0..100 {
            solver.step(f64::INFINITY)?;
        }
        let exact = solver.state().coeffs().iter().zip(start.coeffs()).all(|(a, b)| a.to_bits() == b.to_bits());
        Ok((exact, "100 steps, bitwise".into()))
    }));

    checks.push(timed("corrected flux keeps averages positive", || {
        let s = positivity_stress(1000, seed)?;
        Ok((s.positive == s.trials, format!("{}/{} trials, worst ratio {:.2e}", s.positive, s.trials, s.worst_ratio)))
    }));

    checks.push(timed("heat equation converges at second order", || {
        let rows = convergence_study(&example(1, None)?, 1, &[8, 16, 32], 0.05, &default_params())?;
        let orders: Vec<f64> = rows.iter().filter_map(|r| r.l2_order).collect();
        let ok = orders.iter().all(|o| (o - 2.0).abs() < 0.3);
        Ok((ok, format!("L2 orders {orders:.3?}")))
    }));

    for (id, variant, n, k, t) in [
        (2, None, 32, 2, 0.2),
        (3, None, 32, 2, 0.5),
        (4, Some("a2"), 32, 2, 1.0),
        (5, None, 32, 1, 1.0),
        (6, Some("centered"), 32, 1, 0.2),
    ] {
        let name: &'static str = match id {
            2 => "example 2: mass, energy, positivity",
            3 => "example 3: mass, energy, positivity",
            4 => "example 4: mass, energy, positivity",
            5 => "example 5: mass, energy, positivity",
            _ => "example 6: mass, energy, positivity",
        };
        checks.push(timed(name, || {
            let s = run_summary(id, variant, n, k, t)?;
            let ok = s.mass_drift <= 1e-10 && s.energy_violations == 0 && s.min_cell_avg > 0.0;
            Ok((
                ok,
                format!(
                    "{} steps, mass drift {:.1e}, {} energy rises, min average {:.2e}",
                    s.steps, s.mass_drift, s.energy_violations, s.min_cell_avg
                ),
            ))
        }));
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stress_is_reproducible_and_positive() {
        let a = positivity_stress(50, 3).unwrap();
        let b = positivity_stress(50, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.positive, 50);
    }

    #[test]
    fn suite_passes() {
        for c in run_suite(1) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
