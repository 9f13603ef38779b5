//! The six benchmark problems and the common scheme parameters.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use super::{
    BoundaryKind, ConfinementPotential, InteractionKernel, InternalEnergy, KernelKind, ProblemSpec,
};
use crate::error::{Error, Result};
use crate::params::{Integrator, SchemeParams};

/// Catalog metadata used by the CLI.
#[derive(Debug, Clone, Copy)]
pub struct ExampleInfo {
    pub id: u32,
    pub title: &'static str,
    pub description: &'static str,
    pub variants: &'static [&'static str],
    pub t_final: f64,
    pub n_cells: usize,
    pub degree: usize,
}

pub const EXAMPLES: [ExampleInfo; 6] = [
    ExampleInfo {
        id: 1,
        title: "heat equation",
        description: "H = rho(ln rho - 1), periodic on [-pi, pi], exact 2 + e^-t sin x",
        variants: &[],
        t_final: 0.1,
        n_cells: 64,
        degree: 2,
    },
    ExampleInfo {
        id: 2,
        title: "porous medium",
        description: "H = rho^2, V = x^2/2, periodic on [-2, 2], tent initial datum",
        variants: &[],
        t_final: 32.0,
        n_cells: 64,
        degree: 3,
    },
    ExampleInfo {
        id: 3,
        title: "attractive-repulsive kernel",
        description: "W = |x|^2/2 - ln|x|, zero flux on [-4, 4], Gaussian initial datum",
        variants: &[],
        t_final: 10.0,
        n_cells: 128,
        degree: 3,
    },
    ExampleInfo {
        id: 4,
        title: "nonlinear diffusion, compact attraction",
        description: "H = (0.25/3) rho^3, W = -(1-|x|)_+, zero flux on [-6, 6], indicator datum",
        variants: &["a2", "a3"],
        t_final: 30.0,
        n_cells: 128,
        degree: 2,
    },
    ExampleInfo {
        id: 5,
        title: "nonlinear diffusion, Gaussian attraction",
        description: "H = (0.25/3) rho^3, W = -exp(-x^2/4), zero flux on [-8, 8], three blocks",
        variants: &[],
        t_final: 600.0,
        n_cells: 128,
        degree: 2,
    },
    ExampleInfo {
        id: 6,
        title: "asymmetric double well",
        description: "H = rho^2, V = x^4 + 0.4x^3 - 5x^2, zero flux on [-4, 4], Gaussian datum",
        variants: &["centered", "shifted"],
        t_final: 10.0,
        n_cells: 256,
        degree: 2,
    },
];

/// Nonlinear diffusion used by the nonlocal attraction examples.
const NU: f64 = 0.25;
const M: f64 = 3.0;

fn gaussian(center: f64) -> super::ScalarFn {
    Arc::new(move |x: f64| (-(x - center).powi(2) / 2.0).exp() / (2.0 * PI).sqrt())
}

fn indicator(intervals: Vec<(f64, f64)>, height: f64) -> super::ScalarFn {
    Arc::new(move |x: f64| {
        if intervals.iter().any(|&(l, r)| x >= l && x <= r) {
            height
        } else {
            0.0
        }
    })
}

/// Build catalog problem `id` (1..=6). `variant` selects the initial datum
/// for examples 4 (`a2`, `a3`) and 6 (`centered`, `shifted`).
pub fn example(id: u32, variant: Option<&str>) -> Result<ProblemSpec> {
    let unknown = || Error::UnknownExample { id, variant: variant.map(str::to_string) };
    let variant = variant.map(|v| v.trim().to_ascii_lowercase());
    let no_variant = |p: ProblemSpec| match variant.as_deref() {
        None | Some("") | Some("default") => Ok(p),
        Some(_) => Err(unknown()),
    };
    match id {
        1 => no_variant(
            ProblemSpec::new("example 1: heat equation", (-PI, PI), Arc::new(|x: f64| 2.0 + x.sin()))
                .with_internal_energy(InternalEnergy::Entropy)
                .with_bc(BoundaryKind::Periodic)
                .with_exact_solution(Arc::new(|t: f64, x: f64| 2.0 + (-t).exp() * x.sin()))
                .with_steady_state(Arc::new(|_| 2.0)),
        ),
        2 => {
            let c = (3.0f64 / 8.0).powf(2.0 / 3.0);
            no_variant(
                ProblemSpec::new(
                    "example 2: porous medium",
                    (-2.0, 2.0),
                    Arc::new(|x: f64| (1.0 - x.abs()).max(0.0)),
                )
                .with_internal_energy(InternalEnergy::Power { nu: 2.0, m: 2.0 })
                .with_confinement(ConfinementPotential::Quadratic)
                .with_bc(BoundaryKind::Periodic)
                .with_steady_state(Arc::new(move |x: f64| (c - x * x / 4.0).max(0.0))),
            )
        }
        3 => no_variant(
            ProblemSpec::new("example 3: attractive-repulsive kernel", (-4.0, 4.0), gaussian(0.0))
                .with_kernel(InteractionKernel::new(KernelKind::AttractiveRepulsive))
                .with_steady_state(Arc::new(|x: f64| {
                    if x.abs() <= SQRT_2 {
                        (2.0 - x * x).max(0.0).sqrt() / PI
                    } else {
                        0.0
                    }
                })),
        ),
        4 => {
            let a = match variant.as_deref() {
                None | Some("") | Some("default") | Some("a2") | Some("a=2") | Some("2") => 2.0,
                Some("a3") | Some("a=3") | Some("3") => 3.0,
                Some(_) => return Err(unknown()),
            };
            Ok(ProblemSpec::new(
                format!("example 4: compact attraction (a = {a})"),
                (-6.0, 6.0),
                indicator(vec![(-a, a)], 1.0 / (2.0 * a)),
            )
            .with_internal_energy(InternalEnergy::Power { nu: NU, m: M })
            .with_kernel(InteractionKernel::new(KernelKind::CompactTent)))
        }
        5 => no_variant(
            ProblemSpec::new(
                "example 5: Gaussian attraction",
                (-8.0, 8.0),
                indicator(vec![(-5.0, -4.0), (-2.0, 1.0), (3.0, 4.0)], 0.2),
            )
            .with_internal_energy(InternalEnergy::Power { nu: NU, m: M })
            .with_kernel(InteractionKernel::new(KernelKind::Gaussian)),
        ),
        6 => {
            let center = match variant.as_deref() {
                None | Some("") | Some("default") | Some("centered") => 0.0,
                Some("shifted") => 1.5,
                Some(_) => return Err(unknown()),
            };
            Ok(ProblemSpec::new(
                format!("example 6: double well (center {center})"),
                (-4.0, 4.0),
                gaussian(center),
            )
            .with_internal_energy(InternalEnergy::Power { nu: 2.0, m: 2.0 })
            .with_confinement(ConfinementPotential::DoubleWell))
        }
        _ => Err(unknown()),
    }
}

/// Parameters shared by all benchmarks. Degree and integrator are
/// placeholders for the caller to set.
pub fn default_params() -> SchemeParams {
    SchemeParams {
        beta0: 5.434,
        beta1: 0.15,
        delta: 1e-12,
        degree: 2,
        gauss_nodes: None,
        lobatto_nodes: None,
        safety: 0.9,
        cap_coef: crate::integrator::DEFAULT_CAP_COEF,
        integrator: Integrator::Rk3,
        strict_energy: false,
    }
}

/// Sufficient lower bound `2 k^2 (1 - b (k^2 - 1) + b^2 (k^2 - 1)^2 / 3)` on
/// `beta0` for the energy estimate.
pub fn beta0_lower_bound(k: usize, beta1: f64) -> f64 {
    let kk = (k * k) as f64;
    let s = kk - 1.0;
    2.0 * kk * (1.0 - beta1 * s + beta1 * beta1 / 3.0 * s * s)
}
