//! Reference-cell machinery: Legendre polynomials, Gauss-Legendre and
//! Gauss-Lobatto rules, and the orthonormal modal basis.
//!
//! Everything here lives on the reference cell `[-1, 1]`. The normalized
//! Legendre polynomials `p_j = sqrt(2j + 1) P_j` are orthonormal under the
//! cell-average inner product `(1/2) ∫ f g`, so on a physical cell of width
//! `h` the functions `p_j / sqrt(h)` have an identity mass matrix.

use std::f64::consts::PI;

/// Values of `P_0..=P_n` at `x` together with first and second derivatives.
pub fn legendre_with_derivatives(n: usize, x: f64) -> [Vec<f64>; 3] {
    let mut p = vec![0.0; n + 1];
    let mut dp = vec![0.0; n + 1];
    let mut d2p = vec![0.0; n + 1];
    p[0] = 1.0;
    if n >= 1 {
        p[1] = x;
        dp[1] = 1.0;
    }
    for m in 1..n {
        let mf = m as f64;
        p[m + 1] = ((2.0 * mf + 1.0) * x * p[m] - mf * p[m - 1]) / (mf + 1.0);
        dp[m + 1] = dp[m - 1] + (2.0 * mf + 1.0) * p[m];
        d2p[m + 1] = d2p[m - 1] + (2.0 * mf + 1.0) * dp[m];
    }
    [p, dp, d2p]
}

/// Normalized Legendre values `sqrt(2j+1) P_j` and their reference
/// derivatives up to second order.
pub fn normalized_legendre(n: usize, x: f64) -> [Vec<f64>; 3] {
    let mut out = legendre_with_derivatives(n, x);
    for tab in out.iter_mut() {
        for (j, v) in tab.iter_mut().enumerate() {
            *v *= ((2 * j + 1) as f64).sqrt();
        }
    }
    out
}

/// Monomial coefficients (ascending powers) of `sqrt(2j+1) P_j` for
/// `j = 0..=n`.
pub fn normalized_legendre_monomials(n: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    rows.push(vec![1.0]);
    if n >= 1 {
        rows.push(vec![0.0, 1.0]);
    }
    for m in 1..n {
        let mf = m as f64;
        let mut next = vec![0.0; m + 2];
        for (i, c) in rows[m].iter().enumerate() {
            next[i + 1] += (2.0 * mf + 1.0) * c / (mf + 1.0);
        }
        for (i, c) in rows[m - 1].iter().enumerate() {
            next[i] -= mf * c / (mf + 1.0);
        }
        rows.push(next);
    }
    for (j, row) in rows.iter_mut().enumerate() {
        let s = ((2 * j + 1) as f64).sqrt();
        row.iter_mut().for_each(|c| *c *= s);
    }
    rows
}

/// A quadrature rule on `[-1, 1]`; weights sum to 2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate `f` over `[lo, hi]` with the rule mapped affinely.
    pub fn integrate(&self, lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

/// `n`-point Gauss-Legendre rule, exact through degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> QuadratureRule {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let [p, d, _] = legendre_with_derivatives(n, x);
            dp = d[n];
            let dx = p[n] / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let [_, d, _] = legendre_with_derivatives(n, x);
        dp = if d[n] != 0.0 { d[n] } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    QuadratureRule { nodes, weights }
}

/// `n`-point Gauss-Lobatto rule (`n >= 2`), exact through degree `2n - 3`.
/// The first and last nodes are `-1` and `1`.
pub fn gauss_lobatto(n: usize) -> QuadratureRule {
    assert!(n >= 2, "Gauss-Lobatto rule needs at least two nodes");
    let deg = n - 1;
    let mut nodes = vec![0.0; n];
    nodes[0] = -1.0;
    nodes[n - 1] = 1.0;
    // interior nodes are the roots of P'_{n-1}
    for i in 1..n.div_ceil(2) {
        let mut x = -(PI * i as f64 / deg as f64).cos();
        for _ in 0..100 {
            let [_, d, d2] = legendre_with_derivatives(deg, x);
            let dx = d[deg] / d2[deg];
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let scale = 2.0 / (n as f64 * deg as f64);
    let weights = nodes
        .iter()
        .map(|&x| {
            let p = legendre_with_derivatives(deg, x)[0][deg];
            scale / (p * p)
        })
        .collect();
    QuadratureRule { nodes, weights }
}

/// Basis values and reference derivatives tabulated at a fixed point set.
#[derive(Debug, Clone)]
pub struct Tabulation {
    n_points: usize,
    n_modes: usize,
    data: [Vec<f64>; 3],
}

impl Tabulation {
    pub fn new(points: &[f64], degree: usize) -> Self {
        let n_modes = degree + 1;
        let mut data = [
            Vec::with_capacity(points.len() * n_modes),
            Vec::with_capacity(points.len() * n_modes),
            Vec::with_capacity(points.len() * n_modes),
        ];
        for &x in points {
            let tabs = normalized_legendre(degree, x);
            for (d, t) in data.iter_mut().zip(tabs) {
                d.extend_from_slice(&t);
            }
        }
        Self { n_points: points.len(), n_modes, data }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Row of mode values (derivative `order` w.r.t. the reference
    /// coordinate) at tabulation point `point`.
    #[inline]
    pub fn row(&self, order: usize, point: usize) -> &[f64] {
        let s = point * self.n_modes;
        &self.data[order][s..s + self.n_modes]
    }

    /// `sum_j coeffs[j] * p_j^{(order)}(point)` on the reference cell.
    #[inline]
    pub fn combine(&self, order: usize, point: usize, coeffs: &[f64]) -> f64 {
        self.row(order, point).iter().zip(coeffs).map(|(a, b)| a * b).sum()
    }
}

/// Orthonormal Legendre basis of degree `k` with its quadrature rules.
#[derive(Debug, Clone)]
pub struct Basis {
    degree: usize,
    gauss: QuadratureRule,
    lobatto: QuadratureRule,
    gauss_tab: Tabulation,
    lobatto_tab: Tabulation,
    /// Rows 0 and 1 are the left (`-1`) and right (`+1`) endpoints.
    endpoint_tab: Tabulation,
}

impl Basis {
    /// Default rules: `k + 3` Gauss-Legendre nodes and the minimal
    /// `ceil((k + 3) / 2)` Gauss-Lobatto nodes.
    pub fn new(degree: usize) -> Self {
        Self::with_rules(degree, degree + 3, Self::min_lobatto_nodes(degree))
    }

    pub fn min_lobatto_nodes(degree: usize) -> usize {
        (degree + 3).div_ceil(2).max(2)
    }

    pub fn with_rules(degree: usize, gauss_nodes: usize, lobatto_nodes: usize) -> Self {
        let gauss = gauss_legendre(gauss_nodes.max(1));
        let lobatto = gauss_lobatto(lobatto_nodes.max(Self::min_lobatto_nodes(degree)));
        let gauss_tab = Tabulation::new(&gauss.nodes, degree);
        let lobatto_tab = Tabulation::new(&lobatto.nodes, degree);
        let endpoint_tab = Tabulation::new(&[-1.0, 1.0], degree);
        Self { degree, gauss, lobatto, gauss_tab, lobatto_tab, endpoint_tab }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_modes(&self) -> usize {
        self.degree + 1
    }

    pub fn gauss(&self) -> &QuadratureRule {
        &self.gauss
    }

    pub fn lobatto(&self) -> &QuadratureRule {
        &self.lobatto
    }

    /// Lobatto weights normalized to sum to one (cell-average weights).
    pub fn lobatto_average_weights(&self) -> Vec<f64> {
        self.lobatto.weights.iter().map(|w| 0.5 * w).collect()
    }

    /// Endpoint weight `omega_1` of the normalized Lobatto rule.
    pub fn lobatto_endpoint_weight(&self) -> f64 {
        0.5 * self.lobatto.weights[0]
    }

    pub fn gauss_tab(&self) -> &Tabulation {
        &self.gauss_tab
    }

    pub fn lobatto_tab(&self) -> &Tabulation {
        &self.lobatto_tab
    }

    pub fn endpoint_tab(&self) -> &Tabulation {
        &self.endpoint_tab
    }

    /// In-cell reference points at which nonlocal terms are needed: the
    /// Gauss nodes followed by the two endpoints.
    pub fn convolution_points(&self) -> Vec<f64> {
        let mut pts = self.gauss.nodes.clone();
        pts.push(-1.0);
        pts.push(1.0);
        pts
    }
}
