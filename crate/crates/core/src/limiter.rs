//! Mean-preserving scaling limiter.
//!
//! A cell whose polynomial dips below `delta` is contracted toward its
//! average, `rho <- avg + theta (rho - avg)` with
//! `theta = (avg - delta) / (avg - min)`. Only the non-constant modes are
//! touched, so the average is preserved bit for bit.

use nalgebra::DMatrix;

use crate::basis::normalized_legendre_monomials;
use crate::error::{Error, Result};
use crate::field::DGField;

/// What a limiter pass did.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LimiterReport {
    pub cells_modified: usize,
    /// Smallest exact cell minimum before limiting, over the cells that
    /// were examined exactly. Cells whose cheap lower bound already clears
    /// the floor are skipped, so `+inf` means no cell came close.
    pub worst_min_before: f64,
    /// Smallest applied scaling factor (1 when nothing was scaled).
    pub theta_min: f64,
    /// Cells whose average is below `delta`.
    pub cells_failed: Vec<usize>,
}

impl LimiterReport {
    fn new() -> Self {
        Self { cells_modified: 0, worst_min_before: f64::INFINITY, theta_min: 1.0, cells_failed: Vec::new() }
    }
}

/// Finds exact minima of cell polynomials of a fixed degree.
#[derive(Debug, Clone)]
pub struct MinFinder {
    degree: usize,
    monomials: Vec<Vec<f64>>,
}

impl MinFinder {
    pub fn new(degree: usize) -> Self {
        Self { degree, monomials: normalized_legendre_monomials(degree) }
    }

    /// Minimum over `[-1, 1]` of `sum_j c_j p_j(xi)` (normalized Legendre),
    /// together with the minimizing point.
    pub fn min_reference(&self, c: &[f64]) -> (f64, f64) {
        debug_assert_eq!(c.len(), self.degree + 1);
        let eval = |xi: f64| legendre_sum(c, xi);
        let mut best = (eval(-1.0), -1.0);
        let mut consider = |xi: f64| {
            let v = eval(xi);
            if v < best.0 {
                best = (v, xi);
            }
        };
        consider(1.0);
        if self.degree >= 2 {
            for r in self.critical_points(c) {
                consider(r);
            }
        }
        best
    }

    /// Real roots of the derivative strictly inside `(-1, 1)`.
    fn critical_points(&self, c: &[f64]) -> Vec<f64> {
        let k = self.degree;
        let mut mono = vec![0.0; k + 1];
        for (cj, row) in c.iter().zip(&self.monomials) {
            for (m, r) in mono.iter_mut().zip(row) {
                *m += cj * r;
            }
        }
        let mut d: Vec<f64> = (1..=k).map(|n| n as f64 * mono[n]).collect();
        let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Vec::new();
        }
        while d.len() > 1 && d.last().unwrap().abs() <= 1e-14 * scale {
            d.pop();
        }
        let roots = match d.len() {
            0 | 1 => Vec::new(),
            2 => vec![-d[0] / d[1]],
            3 => quadratic_roots(d[2], d[1], d[0]),
            _ => companion_roots(&d),
        };
        let deriv = |x: f64| -> (f64, f64) {
            let mut p = 0.0;
            let mut dp = 0.0;
            for &a in d.iter().rev() {
                dp = dp * x + p;
                p = p * x + a;
            }
            (p, dp)
        };
        roots
            .into_iter()
            .map(|mut x| {
                for _ in 0..4 {
                    let (p, dp) = deriv(x);
                    if dp == 0.0 || p.abs() <= 1e-12 * scale {
                        break;
                    }
                    x -= p / dp;
                }
                x
            })
            .filter(|x| x.is_finite() && *x > -1.0 && *x < 1.0)
            .collect()
    }

    /// Exact minimum of `field` on `cell`.
    pub fn cell_min(&self, field: &DGField, cell: usize) -> f64 {
        let s = field.value_scale();
        let ref_c: Vec<f64> = field.cell(cell).iter().map(|c| c * s).collect();
        self.min_reference(&ref_c).0
    }
}

/// `sum_j c_j sqrt(2j + 1) P_j(xi)` by the three-term recurrence.
#[inline]
fn legendre_sum(c: &[f64], xi: f64) -> f64 {
    let mut acc = c[0];
    if c.len() == 1 {
        return acc;
    }
    let (mut p0, mut p1) = (1.0, xi);
    acc += c[1] * 3f64.sqrt() * p1;
    for (j, cj) in c.iter().enumerate().skip(2) {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * xi * p1 - (jf - 1.0) * p0) / jf;
        acc += cj * (2.0 * jf + 1.0).sqrt() * p2;
        p0 = p1;
        p1 = p2;
    }
    acc
}

/// Lower bound `c_0 - sum_{j>0} |c_j| sqrt(2j + 1)` from `|P_j| <= 1`.
#[inline]
fn cheap_lower_bound(c: &[f64]) -> f64 {
    c[0] - c[1..].iter().enumerate().map(|(j, a)| a.abs() * ((2 * j + 3) as f64).sqrt()).sum::<f64>()
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let t = -0.5 * (b + b.signum() * sq);
    if t == 0.0 {
        return vec![0.0];
    }
    vec![t / a, c / t]
}

/// Real eigenvalues of the companion matrix of `sum d_n x^n`.
fn companion_roots(d: &[f64]) -> Vec<f64> {
    let n = d.len() - 1;
    let lead = d[n];
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -d[i] / lead;
    }
    m.complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-7 * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .collect()
}

/// Minimum of `field` over cell `cell`.
pub fn cell_min(field: &DGField, cell: usize) -> Result<f64> {
    field.mesh().check_cell(cell)?;
    Ok(MinFinder::new(field.degree()).cell_min(field, cell))
}

/// Smallest point value of the whole field.
pub fn field_min(field: &DGField) -> f64 {
    let f = MinFinder::new(field.degree());
    let s = field.value_scale();
    let mut best = f64::INFINITY;
    let mut ref_c = vec![0.0; field.n_modes()];
    for i in 0..field.n_cells() {
        for (r, c) in ref_c.iter_mut().zip(field.cell(i)) {
            *r = c * s;
        }
        // the bound never exceeds the true minimum, so this prunes exactly
        if cheap_lower_bound(&ref_c) < best {
            best = best.min(f.min_reference(&ref_c).0);
        }
    }
    best
}

/// Scale one cell so its minimum is at least `floor`.
fn limit_cell(finder: &MinFinder, field: &mut DGField, cell: usize, floor: f64, report: &mut LimiterReport) {
    let s = field.value_scale();
    let c = field.cell(cell);
    let avg = c[0] * s;
    let ref_c: Vec<f64> = c.iter().map(|v| v * s).collect();
    let spread: f64 = ref_c[1..].iter().enumerate().map(|(j, a)| a.abs() * ((2 * j + 3) as f64).sqrt()).sum();
    let magnitude = avg.abs() + spread;
    if avg - spread - 4.0 * f64::EPSILON * magnitude >= floor {
        return;
    }
    let (min, _) = finder.min_reference(&ref_c);
    report.worst_min_before = report.worst_min_before.min(min);
    if min >= floor {
        return;
    }
    // aim slightly above the floor so that re-evaluating the scaled
    // polynomial cannot land below it through rounding
    let target = floor + 16.0 * f64::EPSILON * magnitude;
    let theta = if avg - min > 0.0 { ((avg - target) / (avg - min)).clamp(0.0, 1.0) } else { 0.0 };
    for v in field.cell_mut(cell)[1..].iter_mut() {
        *v *= theta;
    }
    report.cells_modified += 1;
    report.theta_min = report.theta_min.min(theta);
}

/// Limit every cell to a minimum of at least `delta`. Fails without
/// modifying anything if a cell average is below `delta`.
pub fn apply_limiter(field: &DGField, delta: f64) -> Result<(DGField, LimiterReport)> {
    let failed: Vec<usize> = field
        .averages()
        .iter()
        .enumerate()
        .filter(|(_, a)| **a < delta)
        .map(|(i, _)| i)
        .collect();
    if !failed.is_empty() {
        return Err(Error::AverageBelowDelta { cells: failed });
    }
    let finder = MinFinder::new(field.degree());
    let mut out = field.clone();
    let mut report = LimiterReport::new();
    for i in 0..field.n_cells() {
        limit_cell(&finder, &mut out, i, delta, &mut report);
    }
    Ok((out, report))
}

/// Like [`apply_limiter`], but cells with `0 <= average < delta` are limited
/// to a nonnegative minimum instead of failing; they are listed in
/// `cells_failed`. Cells with a subnormal average are flattened. A negative average is an error.
pub fn apply_limiter_with_floor(field: &DGField, delta: f64) -> Result<(DGField, LimiterReport)> {
    let finder = MinFinder::new(field.degree());
    let mut out = field.clone();
    let mut report = LimiterReport::new();
    for (i, avg) in field.averages().into_iter().enumerate() {
        if avg < 0.0 || avg.is_nan() {
            return Err(Error::NegativeAverage { cell: i, average: avg });
        }
        let floor = if avg >= delta {
            delta
        } else {
            report.cells_failed.push(i);
            0.0
        };
        if avg < f64::MIN_POSITIVE {
            // subnormal average: rounding in the scaled polynomial can dip
            // below zero, so flatten the cell to its (nonnegative) mean
            let c = out.cell_mut(i);
            if c[1..].iter().any(|v| *v != 0.0) {
                c[1..].iter_mut().for_each(|v| *v = 0.0);
                report.cells_modified += 1;
                report.theta_min = 0.0;
            }
            continue;
        }
        limit_cell(&finder, &mut out, i, floor, &mut report);
    }
    Ok((out, report))
}
