//! Piecewise polynomials on a [`Mesh1D`] in the orthonormal Legendre basis.

use std::sync::Arc;

use crate::basis::{normalized_legendre, Basis};
use crate::error::{Error, Result};
use crate::mesh::Mesh1D;

/// One-sided limits at an interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trace {
    pub left: f64,
    pub right: f64,
    /// `right - left`
    pub jump: f64,
    pub mean: f64,
}

impl Trace {
    pub fn new(left: f64, right: f64) -> Self {
        Self { left, right, jump: right - left, mean: 0.5 * (left + right) }
    }
}

/// A discontinuous piecewise polynomial of degree `k`.
///
/// On cell `i` the field is `sum_j c[i][j] * p_j(xi) / sqrt(h)`, where `p_j`
/// are the normalized Legendre polynomials, so the per-cell mass matrix is the
/// identity and the cell average is `c[i][0] / sqrt(h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DGField {
    mesh: Arc<Mesh1D>,
    degree: usize,
    coeffs: Vec<f64>,
}

impl DGField {
    pub fn zeros(mesh: Arc<Mesh1D>, degree: usize) -> Self {
        let len = mesh.n_cells() * (degree + 1);
        Self { mesh, degree, coeffs: vec![0.0; len] }
    }

    pub fn from_coeffs(mesh: Arc<Mesh1D>, degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        let len = mesh.n_cells() * (degree + 1);
        if coeffs.len() != len {
            return Err(Error::Mismatch(format!(
                "expected {len} coefficients, got {}",
                coeffs.len()
            )));
        }
        Ok(Self { mesh, degree, coeffs })
    }

    /// Field whose cell averages are `averages` and higher modes zero.
    pub fn from_averages(mesh: Arc<Mesh1D>, degree: usize, averages: &[f64]) -> Result<Self> {
        let mut f = Self::zeros(mesh, degree);
        if averages.len() != f.n_cells() {
            return Err(Error::Mismatch("average count differs from cell count".into()));
        }
        let s = f.mesh.h().sqrt();
        for (i, a) in averages.iter().enumerate() {
            f.cell_mut(i)[0] = a * s;
        }
        Ok(f)
    }

    /// Cell-wise L² projection of `f` using the basis' Gauss rule.
    pub fn project(mesh: Arc<Mesh1D>, basis: &Basis, f: impl Fn(f64) -> f64) -> Self {
        let mut out = Self::zeros(mesh, basis.degree());
        let h = out.mesh.h();
        let scale = 0.5 * h.sqrt();
        let rule = basis.gauss();
        let tab = basis.gauss_tab();
        let mut vals = vec![0.0; rule.len()];
        for i in 0..out.n_cells() {
            for (v, &xi) in vals.iter_mut().zip(&rule.nodes) {
                *v = f(out.mesh.to_physical(i, xi));
            }
            project_cell(&vals, rule, tab, scale, out.cell_mut(i));
        }
        out
    }

    pub fn mesh(&self) -> &Arc<Mesh1D> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_modes(&self) -> usize {
        self.degree + 1
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_cells()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    #[inline]
    pub fn cell(&self, i: usize) -> &[f64] {
        let m = self.n_modes();
        &self.coeffs[i * m..(i + 1) * m]
    }

    #[inline]
    pub fn cell_mut(&mut self, i: usize) -> &mut [f64] {
        let m = self.n_modes();
        &mut self.coeffs[i * m..(i + 1) * m]
    }

    /// Factor converting coefficients to reference-cell (average-normalized)
    /// coefficients.
    #[inline]
    pub fn value_scale(&self) -> f64 {
        1.0 / self.mesh.h().sqrt()
    }

    /// Value (or derivative of order 1 or 2) at reference point `xi` of `cell`.
    pub fn evaluate(&self, cell: usize, xi: f64, derivative_order: usize) -> Result<f64> {
        self.mesh.check_cell(cell)?;
        if derivative_order > 2 {
            return Err(Error::DerivativeOrder(derivative_order));
        }
        let tabs = normalized_legendre(self.degree, xi);
        let r: f64 = tabs[derivative_order].iter().zip(self.cell(cell)).map(|(p, c)| p * c).sum();
        let chain = (2.0 / self.mesh.h()).powi(derivative_order as i32);
        Ok(r * self.value_scale() * chain)
    }

    /// Value at physical point `x` (interfaces resolve to the right cell).
    pub fn value_at(&self, x: f64) -> f64 {
        let (cell, xi) = self.mesh.locate(x);
        self.evaluate(cell, xi, 0).expect("located cell is valid")
    }

    pub fn cell_average(&self, cell: usize) -> Result<f64> {
        self.mesh.check_cell(cell)?;
        Ok(self.cell(cell)[0] * self.value_scale())
    }

    pub fn averages(&self) -> Vec<f64> {
        let s = self.value_scale();
        (0..self.n_cells()).map(|i| self.cell(i)[0] * s).collect()
    }

    pub fn min_average(&self) -> f64 {
        self.averages().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Integral of the field over the whole domain.
    pub fn total_mass(&self) -> f64 {
        let s = self.mesh.h().sqrt();
        (0..self.n_cells()).map(|i| self.cell(i)[0] * s).sum()
    }

    /// Values from the left and right cells at interior interface
    /// `interface` (1..N-1).
    pub fn interface_trace(&self, interface: usize) -> Result<Trace> {
        let n = self.n_cells();
        if interface == 0 || interface >= n {
            return Err(Error::NotInteriorInterface { index: interface, max: n - 1 });
        }
        Ok(self.trace_between(interface - 1, interface, 0))
    }

    /// Trace of derivative `order` between `left_cell` (at xi = +1) and
    /// `right_cell` (at xi = -1). Used directly for the periodic seam.
    pub fn trace_between(&self, left_cell: usize, right_cell: usize, order: usize) -> Trace {
        let l = self.endpoint_value(left_cell, true, order);
        let r = self.endpoint_value(right_cell, false, order);
        Trace::new(l, r)
    }

    /// Physical value of derivative `order` at the right (`true`) or left
    /// endpoint of `cell`.
    pub fn endpoint_value(&self, cell: usize, right_end: bool, order: usize) -> f64 {
        let sign = if right_end { 1.0 } else { -1.0 };
        let mut acc = 0.0;
        for (j, c) in self.cell(cell).iter().enumerate() {
            acc += c * endpoint_mode(j, order, sign);
        }
        acc * self.value_scale() * (2.0 / self.mesh.h()).powi(order as i32)
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &DGField) {
        debug_assert_eq!(self.coeffs.len(), other.coeffs.len());
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += alpha * b;
        }
    }

    /// `a * self + b * other`
    pub fn lincomb(&self, a: f64, other: &DGField, b: f64) -> DGField {
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(x, y)| a * x + b * y).collect();
        DGField { mesh: self.mesh.clone(), degree: self.degree, coeffs }
    }

    pub fn same_layout(&self, other: &DGField) -> bool {
        self.degree == other.degree
            && (Arc::ptr_eq(&self.mesh, &other.mesh) || *self.mesh == *other.mesh)
    }
}

/// `d^order/dxi^order p_j` at `xi = sign` (sign = ±1), closed form.
#[inline]
pub(crate) fn endpoint_mode(j: usize, order: usize, sign: f64) -> f64 {
    let jf = j as f64;
    let norm = (2.0 * jf + 1.0).sqrt();
    // P_j(±1) = (±1)^j, P_j'(±1) = (±1)^{j+1} j(j+1)/2,
    // P_j''(±1) = (±1)^j (j-1)j(j+1)(j+2)/8
    let parity = |p: usize| if sign < 0.0 && p % 2 == 1 { -1.0 } else { 1.0 };
    let v = match order {
        0 => parity(j),
        1 => parity(j + 1) * jf * (jf + 1.0) / 2.0,
        2 => parity(j) * (jf - 1.0) * jf * (jf + 1.0) * (jf + 2.0) / 8.0,
        _ => unreachable!("derivative order > 2"),
    };
    norm * v
}

/// Project Gauss-node values onto one cell's modes. Values that are all
/// equal map to an exact constant, so constant states stay bit-exact.
pub(crate) fn project_cell(
    vals: &[f64],
    rule: &crate::basis::QuadratureRule,
    tab: &crate::basis::Tabulation,
    scale: f64,
    out: &mut [f64],
) {
    if vals.iter().all(|&v| v == vals[0]) {
        out.iter_mut().for_each(|c| *c = 0.0);
        out[0] = 2.0 * scale * vals[0];
        return;
    }
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (g, (w, v)) in rule.weights.iter().zip(vals).enumerate() {
            acc += w * v * tab.row(0, g)[j];
        }
        *o = scale * acc;
    }
}

/// Cell-wise L² projection of `f` onto the DG space.
pub fn project_l2(f: impl Fn(f64) -> f64, mesh: Arc<Mesh1D>, basis: &Basis) -> DGField {
    DGField::project(mesh, basis, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::gauss_legendre;
    use crate::mesh::build_mesh;
    use std::f64::consts::PI;

    fn mesh(a: f64, b: f64, n: usize) -> Arc<Mesh1D> {
        Arc::new(build_mesh(a, b, n).unwrap())
    }

    #[test]
    fn constant_projection() {
        let m = mesh(0.0, 1.0, 8);
        let f = project_l2(|_| 2.0, m, &Basis::new(3));
        for i in 0..8 {
            assert!((f.cell_average(i).unwrap() - 2.0).abs() < 1e-14);
            assert!(f.cell(i)[1..].iter().all(|c| c.abs() < 1e-14));
        }
    }

    #[test]
    fn projection_conserves_mass() {
        let m = mesh(-PI, PI, 16);
        let f = project_l2(|x| 2.0 + x.sin(), m, &Basis::new(2));
        assert!((f.total_mass() - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn cubic_is_reproduced() {
        let m = mesh(-1.0, 2.0, 7);
        let f = project_l2(|x| x * x * x, m, &Basis::new(3));
        for t in 0..10 {
            let x = -1.0 + 3.0 * (t as f64 * 0.6180339887).fract();
            assert!((f.value_at(x) - x * x * x).abs() < 1e-12);
        }
    }

    #[test]
    fn endpoint_closed_form_matches_recurrence() {
        for j in 0..7 {
            for &s in &[-1.0, 1.0] {
                let tabs = normalized_legendre(6, s);
                for order in 0..3 {
                    let a = endpoint_mode(j, order, s);
                    assert!((a - tabs[order][j]).abs() < 1e-10 * (1.0 + a.abs()), "j={j} o={order}");
                }
            }
        }
    }

    #[test]
    fn derivatives_of_projected_polynomials() {
        let m = mesh(0.0, 1.0, 4);
        let b = Basis::new(2);
        let c = project_l2(|_| 1.5, m.clone(), &b);
        assert!(c.evaluate(2, 0.3, 1).unwrap().abs() < 1e-13);
        let sq = project_l2(|x| x * x, m, &b);
        for cell in 0..4 {
            for &xi in &[-1.0, 0.0, 0.7] {
                assert!((sq.evaluate(cell, xi, 2).unwrap() - 2.0).abs() < 1e-11);
            }
        }
        assert!(sq.evaluate(4, 0.0, 0).is_err());
        assert!(sq.evaluate(0, 0.0, 3).is_err());
    }

    #[test]
    fn derivative_of_projected_sine_at_center() {
        // finite-difference oracle on the projected polynomial itself, and
        // the cos(x_c) target within O(h^3)
        let b = Basis::new(3);
        let mut prev = f64::INFINITY;
        for n in [8, 16, 32] {
            let m = mesh(0.0, 2.0 * PI, n);
            let f = project_l2(f64::sin, m.clone(), &b);
            let mut worst: f64 = 0.0;
            for i in 0..n {
                let d = f.evaluate(i, 0.0, 1).unwrap();
                let eps = 1e-5;
                let fd = (f.evaluate(i, eps, 0).unwrap() - f.evaluate(i, -eps, 0).unwrap())
                    / (2.0 * eps * m.h() / 2.0);
                assert!((d - fd).abs() < 1e-6);
                worst = worst.max((d - m.centers()[i].cos()).abs());
            }
            assert!(worst < prev / 6.0 || prev.is_infinite(), "{worst} vs {prev}");
            prev = worst;
        }
    }

    #[test]
    fn average_matches_quadrature() {
        let m = mesh(-1.0, 1.0, 5);
        let coeffs: Vec<f64> = (0..20).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let f = DGField::from_coeffs(m.clone(), 3, coeffs).unwrap();
        let rule = gauss_legendre(5);
        for i in 0..5 {
            let q = rule.integrate(-1.0, 1.0, |xi| f.evaluate(i, xi, 0).unwrap()) / 2.0;
            assert!((q - f.cell_average(i).unwrap()).abs() < 1e-13);
        }
        assert!(f.cell_average(5).is_err());
    }

    #[test]
    fn traces() {
        let m = mesh(0.0, 1.0, 10);
        let b = Basis::new(2);
        let f = project_l2(|x| 1.0 + x - x * x, m.clone(), &b);
        for s in 1..10 {
            assert!(f.interface_trace(s).unwrap().jump.abs() < 1e-12);
        }
        assert!(f.interface_trace(0).is_err());
        assert!(f.interface_trace(10).is_err());

        let mut g = DGField::zeros(m.clone(), 2);
        g.cell_mut(3).copy_from_slice(&[1.0, 0.5, 0.2]);
        assert_eq!(g.interface_trace(4).unwrap().right, 0.0);

        let step = project_l2(|x| if x < 0.5 { 1.0 } else { 3.0 }, m, &Basis::new(0));
        let t = step.interface_trace(5).unwrap();
        assert!((t.jump - 2.0).abs() < 1e-13);
        assert!((t.mean - 2.0).abs() < 1e-13);
    }

    #[test]
    fn projection_is_idempotent() {
        let m = mesh(-2.0, 2.0, 9);
        let b = Basis::new(4);
        let f = project_l2(|x| (3.0 * x).cos() + x.powi(5), m.clone(), &b);
        // gauss nodes never land on interfaces, so locate is unambiguous
        let g = project_l2(|x| f.value_at(x), m, &b);
        for (a, c) in f.coeffs().iter().zip(g.coeffs()) {
            assert!((a - c).abs() < 1e-13);
        }
    }
}
