use crate::error::{Error, Result};

/// Uniform partition of `[a, b]` into `n_cells` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    a: f64,
    b: f64,
    n_cells: usize,
    h: f64,
    interfaces: Vec<f64>,
    centers: Vec<f64>,
}

impl Mesh1D {
    pub fn new(a: f64, b: f64, n_cells: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || b <= a {
            return Err(Error::InvalidMesh(format!("need a < b, got [{a}, {b}]")));
        }
        if n_cells < 2 {
            return Err(Error::InvalidMesh(format!("need at least 2 cells, got {n_cells}")));
        }
        let h = (b - a) / n_cells as f64;
        let mut interfaces: Vec<f64> = (0..=n_cells).map(|i| a + i as f64 * h).collect();
        interfaces[n_cells] = b;
        let centers = interfaces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self { a, b, n_cells, h, interfaces, centers })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn interfaces(&self) -> &[f64] {
        &self.interfaces
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Physical coordinate of reference point `xi` in `cell`.
    #[inline]
    pub fn to_physical(&self, cell: usize, xi: f64) -> f64 {
        self.centers[cell] + 0.5 * self.h * xi
    }

    /// Cell containing `x` (clamped to the domain) and the reference
    /// coordinate of `x` within it.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let s = ((x - self.a) / self.h).floor();
        let cell = (s.max(0.0) as usize).min(self.n_cells - 1);
        let xi = (2.0 * (x - self.centers[cell]) / self.h).clamp(-1.0, 1.0);
        (cell, xi)
    }

    pub(crate) fn check_cell(&self, cell: usize) -> Result<()> {
        if cell >= self.n_cells {
            Err(Error::CellOutOfRange { index: cell, n_cells: self.n_cells })
        } else {
            Ok(())
        }
    }
}

/// Convenience constructor mirroring [`Mesh1D::new`].
pub fn build_mesh(a: f64, b: f64, n_cells: usize) -> Result<Mesh1D> {
    Mesh1D::new(a, b, n_cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn spacing_on_periodic_domain() {
        let m = build_mesh(-PI, PI, 16).unwrap();
        assert!((m.h() - 2.0 * PI / 16.0).abs() < 1e-15);
        assert!((m.h() * 16.0 - 2.0 * PI).abs() <= 1e-14 * 2.0 * PI);
    }

    #[test]
    fn symmetric_mesh_has_interface_at_origin() {
        let m = build_mesh(-2.0, 2.0, 64).unwrap();
        assert_eq!(m.interfaces()[32], 0.0);
        assert_eq!(m.interfaces()[0], -2.0);
        assert_eq!(m.interfaces()[64], 2.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_mesh(0.0, 1.0, 1).is_err());
        assert!(build_mesh(0.0, 1.0, 0).is_err());
        assert!(build_mesh(1.0, 1.0, 4).is_err());
        assert!(build_mesh(2.0, 1.0, 4).is_err());
    }

    #[test]
    fn invariants_hold() {
        let m = build_mesh(-6.0, 6.0, 128).unwrap();
        for w in m.interfaces().windows(2) {
            assert!(w[1] > w[0]);
        }
        for (i, c) in m.centers().iter().enumerate() {
            let mid = 0.5 * (m.interfaces()[i] + m.interfaces()[i + 1]);
            assert!((c - mid).abs() < 1e-15);
        }
    }

    #[test]
    fn locate_round_trips() {
        let m = build_mesh(-1.0, 3.0, 10).unwrap();
        for &(cell, xi) in &[(0, -0.5), (4, 0.3), (9, 0.99)] {
            let x = m.to_physical(cell, xi);
            let (c, r) = m.locate(x);
            assert_eq!(c, cell);
            assert!((r - xi).abs() < 1e-12);
        }
    }
}
