use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Time discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    Euler,
    #[default]
    Rk3,
}

impl FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euler" => Ok(Self::Euler),
            "rk3" | "ssp-rk3" | "ssprk3" => Ok(Self::Rk3),
            other => Err(Error::Config(format!("unknown integrator `{other}`"))),
        }
    }
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Euler => "euler",
            Self::Rk3 => "rk3",
        })
    }
}

/// Numerical parameters of the scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeParams {
    /// Jump penalty of the diffusive flux.
    pub beta0: f64,
    /// Weight of the second-derivative jump in the diffusive flux.
    pub beta1: f64,
    /// Positivity floor of the limiter.
    pub delta: f64,
    /// Polynomial degree `k`.
    pub degree: usize,
    /// Gauss-Legendre nodes per cell for nonlinear integrands (default `k + 3`).
    pub gauss_nodes: Option<usize>,
    /// Gauss-Lobatto nodes for the positivity CFL (default `ceil((k + 3) / 2)`).
    pub lobatto_nodes: Option<usize>,
    /// Safety factor applied to the positivity CFL.
    pub safety: f64,
    /// Diffusive cap `dt <= cap_coef * h^2 / (L D)`, with `D` the largest
    /// effective diffusivity and `L` the spectral radius of the discrete
    /// Laplacian at unit mesh width.
    pub cap_coef: f64,
    pub integrator: Integrator,
    /// Halve and retry steps whose energy increases.
    pub strict_energy: bool,
}

impl SchemeParams {
    pub fn gauss_nodes(&self) -> usize {
        self.gauss_nodes.unwrap_or(self.degree + 3)
    }

    pub fn lobatto_nodes(&self) -> usize {
        self.lobatto_nodes.unwrap_or_else(|| crate::basis::Basis::min_lobatto_nodes(self.degree))
    }

    pub fn with_degree(mut self, k: usize) -> Self {
        self.degree = k;
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        let finite = [self.beta0, self.beta1, self.delta, self.safety, self.cap_coef];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("scheme parameters must be finite".into()));
        }
        if self.beta0 <= 0.0 || self.delta < 0.0 || self.safety <= 0.0 || self.cap_coef <= 0.0 {
            return Err(Error::Config(
                "beta0, safety and cap_coef must be positive and delta nonnegative".into(),
            ));
        }
        if let Some(g) = self.gauss_nodes {
            if g < self.degree + 1 {
                return Err(Error::Config(format!("need at least k+1 Gauss nodes, got {g}")));
            }
        }
        Ok(())
    }
}

impl Default for SchemeParams {
    fn default() -> Self {
        crate::problem::default_params()
    }
}
