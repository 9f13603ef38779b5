//! Model ingredients `(H, V, W)`, boundary conditions and initial data.

mod catalog;

pub use catalog::{beta0_lower_bound, default_params, example, ExampleInfo, EXAMPLES};

use std::fmt;
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Internal energy density `H(rho)`.
/// `r^e`, through `powi` when the exponent is a small integer.
#[inline]
fn pow(r: f64, e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() <= 16.0 {
        r.powi(e as i32)
    } else {
        r.powf(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InternalEnergy {
    /// `H = 0`
    Zero,
    /// `H = rho ln rho - rho`; `H'` is singular at zero.
    Entropy,
    /// `H = (nu / m) rho^m`, `m > 1`. Extended by zero to negative densities.
    Power { nu: f64, m: f64 },
}

impl InternalEnergy {
    pub fn h(&self, rho: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Entropy => {
                if rho > 0.0 {
                    rho * rho.ln() - rho
                } else if rho == 0.0 {
                    0.0
                } else {
                    f64::NAN
                }
            }
            Self::Power { nu, m } => nu / m * pow(rho.max(0.0), m),
        }
    }

    pub fn h_prime(&self, rho: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Entropy => rho.ln(),
            Self::Power { nu, m } => nu * pow(rho.max(0.0), m - 1.0),
        }
    }

    pub fn h_double_prime(&self, rho: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Entropy => 1.0 / rho,
            Self::Power { nu, m } => nu * (m - 1.0) * pow(rho.max(0.0), m - 2.0),
        }
    }

    /// Whether `H'` requires strictly positive densities.
    pub fn singular_at_zero(&self) -> bool {
        matches!(self, Self::Entropy)
    }

    /// Effective nonlinear diffusivity `rho H''(rho)`.
    pub fn diffusivity(&self, rho: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Entropy => 1.0,
            Self::Power { nu, m } => nu * (m - 1.0) * pow(rho.max(0.0), m - 1.0),
        }
    }
}

/// Confinement potential `V(x)`.
#[derive(Clone)]
pub enum ConfinementPotential {
    Zero,
    /// `x^2 / 2`
    Quadratic,
    /// `x^4 + 0.4 x^3 - 5 x^2`
    DoubleWell,
    Custom { v: ScalarFn, v_prime: ScalarFn },
}

impl ConfinementPotential {
    pub fn v(&self, x: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Quadratic => 0.5 * x * x,
            Self::DoubleWell => x.powi(4) + 0.4 * x.powi(3) - 5.0 * x * x,
            Self::Custom { v, .. } => v(x),
        }
    }

    pub fn v_prime(&self, x: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Quadratic => x,
            Self::DoubleWell => 4.0 * x.powi(3) + 1.2 * x * x - 10.0 * x,
            Self::Custom { v_prime, .. } => v_prime(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Zero)
    }
}

impl fmt::Debug for ConfinementPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => f.write_str("Zero"),
            Self::Quadratic => f.write_str("Quadratic"),
            Self::DoubleWell => f.write_str("DoubleWell"),
            Self::Custom { .. } => f.write_str("Custom"),
        }
    }
}

/// Shape of the interaction potential.
#[derive(Clone)]
pub enum KernelKind {
    Zero,
    Constant(f64),
    /// `|x|^2 / 2`
    Quadratic,
    /// `-ln|x|`
    NegLog,
    /// `|x|^2 / 2 - ln|x|`
    AttractiveRepulsive,
    /// `-(1 - |x|)_+`
    CompactTent,
    /// `-exp(-|x|^2 / 4)`
    Gaussian,
    /// `smooth(x) + log_coeff * ln|x|`; `kinks` lists points where `smooth`
    /// is not differentiable.
    Custom { smooth: ScalarFn, log_coeff: f64, kinks: Vec<f64> },
}

/// Symmetric interaction potential `W`, split into a part that is smooth
/// between known kink points and a logarithmic part `c ln|x|`.
#[derive(Clone)]
pub struct InteractionKernel {
    kind: KernelKind,
    mirrored: bool,
}

impl InteractionKernel {
    pub fn new(kind: KernelKind) -> Self {
        Self { kind, mirrored: false }
    }

    pub fn zero() -> Self {
        Self::new(KernelKind::Zero)
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    /// The kernel `x -> W(-x)`.
    pub fn mirrored(&self) -> Self {
        Self { kind: self.kind.clone(), mirrored: !self.mirrored }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, KernelKind::Zero)
    }

    #[inline]
    fn arg(&self, x: f64) -> f64 {
        if self.mirrored {
            -x
        } else {
            x
        }
    }

    pub fn w(&self, x: f64) -> f64 {
        let s = self.smooth(x);
        let c = self.log_coefficient();
        if c == 0.0 {
            s
        } else {
            s + c * x.abs().ln()
        }
    }

    /// The part of `W` without the logarithmic singularity.
    pub fn smooth(&self, x: f64) -> f64 {
        let x = self.arg(x);
        match &self.kind {
            KernelKind::Zero | KernelKind::NegLog => 0.0,
            KernelKind::Constant(c) => *c,
            KernelKind::Quadratic | KernelKind::AttractiveRepulsive => 0.5 * x * x,
            KernelKind::CompactTent => -(1.0 - x.abs()).max(0.0),
            KernelKind::Gaussian => -(-0.25 * x * x).exp(),
            KernelKind::Custom { smooth, .. } => smooth(x),
        }
    }

    /// Coefficient `c` of the `c ln|x|` part.
    pub fn log_coefficient(&self) -> f64 {
        match &self.kind {
            KernelKind::NegLog | KernelKind::AttractiveRepulsive => -1.0,
            KernelKind::Custom { log_coeff, .. } => *log_coeff,
            _ => 0.0,
        }
    }

    /// Points where the smooth part has derivative discontinuities.
    pub fn kinks(&self) -> Vec<f64> {
        let base = match &self.kind {
            KernelKind::CompactTent => vec![-1.0, 0.0, 1.0],
            KernelKind::Custom { kinks, .. } => kinks.clone(),
            _ => Vec::new(),
        };
        if self.mirrored {
            base.into_iter().map(|k| -k).collect()
        } else {
            base
        }
    }

    /// Half-width beyond which `W` vanishes identically, if any.
    pub fn support_radius(&self) -> Option<f64> {
        match self.kind {
            KernelKind::Zero => Some(0.0),
            KernelKind::CompactTent => Some(1.0),
            _ => None,
        }
    }
}

impl fmt::Debug for InteractionKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.kind {
            KernelKind::Zero => "Zero".to_string(),
            KernelKind::Constant(c) => format!("Constant({c})"),
            KernelKind::Quadratic => "Quadratic".into(),
            KernelKind::NegLog => "NegLog".into(),
            KernelKind::AttractiveRepulsive => "AttractiveRepulsive".into(),
            KernelKind::CompactTent => "CompactTent".into(),
            KernelKind::Gaussian => "Gaussian".into(),
            KernelKind::Custom { .. } => "Custom".into(),
        };
        if self.mirrored {
            write!(f, "Mirrored({name})")
        } else {
            f.write_str(&name)
        }
    }
}

/// How the domain boundary is closed.
#[derive(Clone)]
pub enum BoundaryKind {
    /// No mass flux through `a` and `b`.
    ZeroFlux,
    /// Density prescribed as `g(t, x)` at both ends.
    Dirichlet(SpaceTimeFn),
    Periodic,
}

impl fmt::Debug for BoundaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ZeroFlux => f.write_str("ZeroFlux"),
            Self::Dirichlet(_) => f.write_str("Dirichlet"),
            Self::Periodic => f.write_str("Periodic"),
        }
    }
}

/// A complete initial-boundary value problem.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub internal_energy: InternalEnergy,
    pub confinement: ConfinementPotential,
    pub kernel: InteractionKernel,
    pub domain: (f64, f64),
    pub bc: BoundaryKind,
    pub initial: ScalarFn,
    pub exact_solution: Option<SpaceTimeFn>,
    pub steady_state: Option<ScalarFn>,
}

impl ProblemSpec {
    /// Problem with zero potentials, zero-flux boundary and the given data.
    pub fn new(name: impl Into<String>, domain: (f64, f64), initial: ScalarFn) -> Self {
        Self {
            name: name.into(),
            internal_energy: InternalEnergy::Zero,
            confinement: ConfinementPotential::Zero,
            kernel: InteractionKernel::zero(),
            domain,
            bc: BoundaryKind::ZeroFlux,
            initial,
            exact_solution: None,
            steady_state: None,
        }
    }

    pub fn with_internal_energy(mut self, h: InternalEnergy) -> Self {
        self.internal_energy = h;
        self
    }

    pub fn with_confinement(mut self, v: ConfinementPotential) -> Self {
        self.confinement = v;
        self
    }

    pub fn with_kernel(mut self, w: InteractionKernel) -> Self {
        self.kernel = w;
        self
    }

    pub fn with_bc(mut self, bc: BoundaryKind) -> Self {
        self.bc = bc;
        self
    }

    pub fn with_exact_solution(mut self, f: SpaceTimeFn) -> Self {
        self.exact_solution = Some(f);
        self
    }

    pub fn with_steady_state(mut self, f: ScalarFn) -> Self {
        self.steady_state = Some(f);
        self
    }

    pub fn with_domain(mut self, a: f64, b: f64) -> Self {
        self.domain = (a, b);
        self
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.bc, BoundaryKind::Periodic)
    }

    /// `V + H'(rho) + (W*rho)` given the convolution value at `x`.
    #[inline]
    pub fn energy_flux_pointwise(&self, x: f64, rho: f64, conv: f64) -> f64 {
        self.confinement.v(x) + self.internal_energy.h_prime(rho) + conv
    }
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("internal_energy", &self.internal_energy)
            .field("confinement", &self.confinement)
            .field("kernel", &self.kernel)
            .field("domain", &self.domain)
            .field("bc", &self.bc)
            .field("exact_solution", &self.exact_solution.is_some())
            .field("steady_state", &self.steady_state.is_some())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| lo + (hi - lo) * ((i as f64 + 0.5) * 0.7548776662).fract())
    }

    #[test]
    fn internal_energy_derivatives() {
        let eps = 1e-5;
        for h in [
            InternalEnergy::Entropy,
            InternalEnergy::Power { nu: 2.0, m: 2.0 },
            InternalEnergy::Power { nu: 0.25, m: 3.0 },
            InternalEnergy::Zero,
        ] {
            for rho in samples(1e-3, 10.0, 20) {
                let fd = (h.h(rho + eps) - h.h(rho - eps)) / (2.0 * eps);
                assert!((h.h_prime(rho) - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "{h:?} {rho}");
                let fd2 = (h.h_prime(rho + eps) - h.h_prime(rho - eps)) / (2.0 * eps);
                assert!((h.h_double_prime(rho) - fd2).abs() <= 1e-5 * (1.0 + fd2.abs()));
                assert!(h.h_double_prime(rho) >= 0.0);
            }
        }
    }

    #[test]
    fn potential_derivatives() {
        let eps = 1e-5;
        for v in [ConfinementPotential::Quadratic, ConfinementPotential::DoubleWell] {
            for x in samples(-4.0, 4.0, 20) {
                let fd = (v.v(x + eps) - v.v(x - eps)) / (2.0 * eps);
                assert!((v.v_prime(x) - fd).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn kernels_are_symmetric() {
        for kind in [
            KernelKind::Quadratic,
            KernelKind::NegLog,
            KernelKind::AttractiveRepulsive,
            KernelKind::CompactTent,
            KernelKind::Gaussian,
            KernelKind::Constant(1.5),
        ] {
            let w = InteractionKernel::new(kind);
            for x in samples(0.01, 5.0, 20) {
                assert_eq!(w.w(x), w.w(-x), "{w:?} at {x}");
                assert_eq!(w.w(x), w.mirrored().w(x));
            }
        }
    }

    #[test]
    fn kernel_values() {
        let ar = InteractionKernel::new(KernelKind::AttractiveRepulsive);
        assert!((ar.w(2.0) - (2.0 - 2f64.ln())).abs() < 1e-15);
        let tent = InteractionKernel::new(KernelKind::CompactTent);
        assert_eq!(tent.w(0.25), -0.75);
        assert_eq!(tent.w(1.5), 0.0);
        let g = InteractionKernel::new(KernelKind::Gaussian);
        assert!((g.w(2.0) + (-1.0f64).exp()).abs() < 1e-15);
    }
}
