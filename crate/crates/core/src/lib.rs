//! Discontinuous Galerkin solver for one-dimensional nonlinear nonlocal
//! Fokker-Planck equations
//!
//! ```text
//! rho_t = (rho (V + H'(rho) + W * rho)_x)_x
//! ```
//!
//! The scheme conserves mass, dissipates a discrete free energy and keeps
//! cell averages positive through a flux correction and a scaling limiter.

pub mod basis;
pub mod convolution;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod integrator;
pub mod io;
pub mod limiter;
pub mod mesh;
pub mod operator;
pub mod params;
pub mod problem;
pub mod verify;

pub use basis::{gauss_legendre, gauss_lobatto, Basis, QuadratureRule};
pub use convolution::{interaction_energy, ConvolutionValues, KernelMomentTable};
pub use error::{Error, Result};
pub use field::{project_l2, DGField, Trace};
pub use diagnostics::{
    convergence_rows, convergence_study, energy_slack, error_norms, observed_order, steady_state_report,
    ConvergenceRow, RunSummary, SteadyStateReport, SUPPORT_THRESHOLD,
};
pub use integrator::{DiagRecord, Recorder, RunObserver, Solver, StepOutcome};
pub use io::{CsvObserver, RunConfig};
pub use limiter::{apply_limiter, cell_min, LimiterReport};
pub use mesh::{build_mesh, Mesh1D};
pub use operator::{
    corrected_flux_at, ddg_flux_at, energy_norm, BoundaryCondition, DgOperator, FluxMode, InterfaceFluxData,
};
pub use params::{Integrator, SchemeParams};
pub use verify::{positivity_stress, run_suite, Check, StressOutcome};
pub use problem::{
    default_params, example, BoundaryKind, ConfinementPotential, InteractionKernel, InternalEnergy, KernelKind,
    ProblemSpec,
};
