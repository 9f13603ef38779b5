//! Nonlocal term `(W * rho_h)(x) = sum_m ∫_{I_m} W(x - y) rho_h(y) dy`.
//!
//! On a uniform mesh the moment `∫_{I_m} W(x_q - y) phi_{m,j}(y) dy` of an
//! evaluation point `x_q` in cell `i` depends only on the cell offset
//! `d = i - m` and the reference position of `x_q`. Writing
//! `x_q - y = (h/2)(alpha - eta)` with `alpha = xi_q + 2d`, every moment is an
//! integral over the reference cell in `eta`.
//!
//! The logarithmic part `c ln|x|` is integrated in closed form whenever the
//! singularity is within one cell of the source (`|alpha| <= 3`); the rest is
//! integrated by Gauss-Legendre on sub-intervals split at the kernel's kinks.

use rayon::prelude::*;

use crate::basis::{gauss_legendre, normalized_legendre, normalized_legendre_monomials, Basis, QuadratureRule};
use crate::error::{Error, Result};
use crate::field::DGField;
use crate::mesh::Mesh1D;
use crate::problem::InteractionKernel;

/// Closed-form log moments are used for `|alpha|` up to this value.
const LOG_CLOSED_FORM_RADIUS: f64 = 3.0;

/// Precomputed moments of `W` against the basis for every cell offset.
#[derive(Debug, Clone)]
pub struct KernelMomentTable {
    n_cells: usize,
    n_modes: usize,
    h: f64,
    a: f64,
    points: Vec<f64>,
    /// Index: `((d + N - 1) * n_points + p) * n_modes + j`.
    moments: Vec<f64>,
    /// Largest `|d|` with a nonzero moment.
    reach: usize,
}

/// `W * rho_h` at every registered point of every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionValues {
    n_cells: usize,
    n_points: usize,
    values: Vec<f64>,
}

impl ConvolutionValues {
    pub fn zeros(n_cells: usize, n_points: usize) -> Self {
        Self { n_cells, n_points, values: vec![0.0; n_cells * n_points] }
    }

    #[inline]
    pub fn at(&self, cell: usize, point: usize) -> f64 {
        self.values[cell * self.n_points + point]
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Shared reference-cell integration context.
struct MomentIntegrator<'k> {
    kernel: &'k InteractionKernel,
    h: f64,
    degree: usize,
    rule: QuadratureRule,
    monomials: Vec<Vec<f64>>,
    support_radius: Option<f64>,
}

impl<'k> MomentIntegrator<'k> {
    fn new(kernel: &'k InteractionKernel, h: f64, degree: usize) -> Self {
        Self {
            kernel,
            h,
            degree,
            rule: gauss_legendre(2 * degree + 12),
            monomials: normalized_legendre_monomials(degree),
            support_radius: kernel.support_radius(),
        }
    }

    /// Moments against all modes of a source cell for offset parameter
    /// `alpha`.
    fn moments(&self, alpha: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if self.kernel.is_zero() {
            return;
        }
        if let Some(r) = self.support_radius {
            let dist = (alpha.abs() - 1.0).max(0.0) * 0.5 * self.h;
            if dist >= r {
                return;
            }
        }
        let half_h = 0.5 * self.h;

        // smooth part, split at kinks (and at the log singularity)
        let mut breaks = vec![-1.0];
        let mut cuts: Vec<f64> = self
            .kernel
            .kinks()
            .into_iter()
            .map(|z| alpha - z / half_h)
            .collect();
        cuts.push(alpha);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for c in cuts {
            if c > -1.0 + 1e-15 && c < 1.0 - 1e-15 {
                breaks.push(c);
            }
        }
        breaks.push(1.0);
        let kernel = self.kernel;
        for w in breaks.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            for (x, wt) in self.rule.nodes.iter().zip(&self.rule.weights) {
                let eta = mid + half * x;
                let s = kernel.smooth(half_h * (alpha - eta));
                if s == 0.0 {
                    continue;
                }
                let p = normalized_legendre(self.degree, eta);
                for (o, pj) in out.iter_mut().zip(&p[0]) {
                    *o += wt * half * s * pj;
                }
            }
        }

        let c = kernel.log_coefficient();
        if c != 0.0 {
            out[0] += c * 2.0 * half_h.ln();
            if alpha.abs() <= LOG_CLOSED_FORM_RADIUS {
                let moments = log_monomial_moments(alpha, self.degree);
                for (o, row) in out.iter_mut().zip(&self.monomials) {
                    let l: f64 = row.iter().zip(&moments).map(|(a, b)| a * b).sum();
                    *o += c * l;
                }
            } else {
                for (x, wt) in self.rule.nodes.iter().zip(&self.rule.weights) {
                    let lg = (alpha - x).abs().ln();
                    let p = normalized_legendre(self.degree, *x);
                    for (o, pj) in out.iter_mut().zip(&p[0]) {
                        *o += c * wt * lg * pj;
                    }
                }
            }
        }

        let scale = 0.5 * self.h.sqrt();
        out.iter_mut().for_each(|v| *v *= scale);
    }
}

/// `∫_{-1}^{1} eta^n ln|alpha - eta| d eta` for `n = 0..=degree`.
pub fn log_monomial_moments(alpha: f64, degree: usize) -> Vec<f64> {
    // substitute u = eta - alpha; antiderivative of u^r ln|u| is
    // u^{r+1} (ln|u| - 1/(r+1)) / (r+1), continuous through u = 0
    let anti = |r: usize, u: f64| -> f64 {
        if u == 0.0 {
            return 0.0;
        }
        let rp = (r + 1) as f64;
        u.powi(r as i32 + 1) * (u.abs().ln() - 1.0 / rp) / rp
    };
    let lo = -1.0 - alpha;
    let hi = 1.0 - alpha;
    let j: Vec<f64> = (0..=degree).map(|r| anti(r, hi) - anti(r, lo)).collect();
    (0..=degree)
        .map(|n| {
            let mut binom = 1.0;
            let mut acc = 0.0;
            for r in 0..=n {
                acc += binom * alpha.powi((n - r) as i32) * j[r];
                binom = binom * (n - r) as f64 / (r + 1) as f64;
            }
            acc
        })
        .collect()
}

impl KernelMomentTable {
    /// Build the table for the in-cell reference points `eval_points`.
    pub fn build(
        kernel: &InteractionKernel,
        mesh: &Mesh1D,
        basis: &Basis,
        eval_points: &[f64],
    ) -> Result<Self> {
        if eval_points.iter().any(|p| !(-1.0..=1.0).contains(p)) {
            return Err(Error::Config("evaluation points must lie in [-1, 1]".into()));
        }
        if !kernel.log_coefficient().is_finite() {
            return Err(Error::UnsupportedKernel(format!("{kernel:?}")));
        }
        let n = mesh.n_cells();
        let n_modes = basis.n_modes();
        let n_points = eval_points.len();
        let integ = MomentIntegrator::new(kernel, mesh.h(), basis.degree());
        let offsets: Vec<isize> = (-(n as isize - 1)..=(n as isize - 1)).collect();
        let blocks: Vec<Vec<f64>> = offsets
            .par_iter()
            .map(|&d| {
                let mut block = vec![0.0; n_points * n_modes];
                for (p, xi) in eval_points.iter().enumerate() {
                    integ.moments(xi + 2.0 * d as f64, &mut block[p * n_modes..(p + 1) * n_modes]);
                }
                block
            })
            .collect();
        let mut reach = 0;
        for (b, &d) in blocks.iter().zip(&offsets) {
            if b.iter().any(|&v| v != 0.0) {
                reach = reach.max(d.unsigned_abs());
            }
        }
        Ok(Self {
            n_cells: n,
            n_modes,
            h: mesh.h(),
            a: mesh.a(),
            points: eval_points.to_vec(),
            moments: blocks.concat(),
            reach,
        })
    }

    /// Table at [`Basis::convolution_points`].
    pub fn for_basis(kernel: &InteractionKernel, mesh: &Mesh1D, basis: &Basis) -> Result<Self> {
        Self::build(kernel, mesh, basis, &basis.convolution_points())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Largest cell offset with a nonzero moment.
    pub fn reach(&self) -> usize {
        self.reach
    }

    #[inline]
    pub fn moment_row(&self, offset: isize, point: usize) -> &[f64] {
        let d = (offset + self.n_cells as isize - 1) as usize;
        let s = (d * self.points.len() + point) * self.n_modes;
        &self.moments[s..s + self.n_modes]
    }

    fn check(&self, rho: &DGField) -> Result<()> {
        let m = rho.mesh();
        if m.n_cells() != self.n_cells
            || rho.n_modes() != self.n_modes
            || m.h() != self.h
            || m.a() != self.a
        {
            return Err(Error::Mismatch("density does not match the moment table's mesh".into()));
        }
        Ok(())
    }

    /// `W * rho` at all registered points.
    pub fn convolve(&self, rho: &DGField) -> Result<ConvolutionValues> {
        self.check(rho)?;
        let n = self.n_cells;
        let np = self.points.len();
        let mut out = ConvolutionValues::zeros(n, np);
        for i in 0..n {
            let lo = i.saturating_sub(self.reach);
            let hi = (i + self.reach).min(n - 1);
            for p in 0..np {
                let mut acc = 0.0;
                for m in lo..=hi {
                    let row = self.moment_row(i as isize - m as isize, p);
                    for (w, c) in row.iter().zip(rho.cell(m)) {
                        acc += w * c;
                    }
                }
                out.values[i * np + p] = acc;
            }
        }
        Ok(out)
    }
}

/// Convolution by recomputing every moment for every (target, source) cell
/// pair. Quadratic cost; used to cross-check the table contraction.
pub fn convolve_direct(
    kernel: &InteractionKernel,
    basis: &Basis,
    eval_points: &[f64],
    rho: &DGField,
) -> ConvolutionValues {
    let mesh = rho.mesh();
    let n = mesh.n_cells();
    let np = eval_points.len();
    let integ = MomentIntegrator::new(kernel, mesh.h(), basis.degree());
    let mut out = ConvolutionValues::zeros(n, np);
    let mut row = vec![0.0; basis.n_modes()];
    for i in 0..n {
        for (p, xi) in eval_points.iter().enumerate() {
            let mut acc = 0.0;
            for m in 0..n {
                integ.moments(xi + 2.0 * (i as isize - m as isize) as f64, &mut row);
                for (w, c) in row.iter().zip(rho.cell(m)) {
                    acc += w * c;
                }
            }
            out.values[i * np + p] = acc;
        }
    }
    out
}

/// `(1/2) ∬ W(x - y) rho(x) rho(y)` with the outer integral by the basis'
/// Gauss rule. The table's first points must be the Gauss nodes.
pub fn interaction_energy(table: &KernelMomentTable, rho: &DGField, basis: &Basis) -> Result<f64> {
    let conv = table.convolve(rho)?;
    interaction_energy_from(&conv, rho, basis)
}

pub(crate) fn interaction_energy_from(
    conv: &ConvolutionValues,
    rho: &DGField,
    basis: &Basis,
) -> Result<f64> {
    let rule = basis.gauss();
    if conv.n_points() < rule.len() {
        return Err(Error::Mismatch("convolution values missing Gauss nodes".into()));
    }
    let tab = basis.gauss_tab();
    let h = rho.mesh().h();
    let scale = rho.value_scale();
    let mut total = 0.0;
    for i in 0..rho.n_cells() {
        let mut cell = 0.0;
        for (g, w) in rule.weights.iter().enumerate() {
            cell += w * tab.combine(0, g, rho.cell(i)) * scale * conv.at(i, g);
        }
        total += 0.5 * h * cell;
    }
    Ok(0.5 * total)
}
