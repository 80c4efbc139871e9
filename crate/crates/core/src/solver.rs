//! Stationary solutions on a truncated graded grid.

use std::fmt;
use std::str::FromStr;

use log::debug;

use crate::closed_form::ClosedFormSolution;
use crate::error::{domain, numerical, FragError, Result};
use crate::kernels::{check_assumptions, partial_mass_unchecked, CoefficientSpec};
use crate::quadrature::GridQuadrature;

pub const MIN_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// −f″ + a f − G[f] = 0 discretized directly.
    SecondOrder,
    /// f − x f′ = ∫_x^∞ a f ∫_0^x x′ b, integrated inward from x_max.
    Conservative,
}

impl Formulation {
    pub fn name(self) -> &'static str {
        match self {
            Formulation::SecondOrder => "second_order",
            Formulation::Conservative => "conservative",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Formulation {
    type Err = FragError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "second_order" | "nullspace" => Ok(Formulation::SecondOrder),
            "conservative" => Ok(Formulation::Conservative),
            other => domain(format!("unknown formulation '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub n: usize,
    /// None selects x_max from the large-size envelope and `tail_tol`.
    pub x_max: Option<f64>,
    pub tail_tol: f64,
    pub eig_tol: f64,
    pub norm_tol: f64,
    pub max_iter: usize,
    pub formulation: Formulation,
    /// First grid node.
    pub origin: f64,
    /// Fraction of the grid parameter spent on the logarithmic part of the mapping.
    pub geometric_share: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n: 2048,
            x_max: None,
            tail_tol: 1e-30,
            eig_tol: 1e-10,
            norm_tol: 1e-8,
            max_iter: 50,
            formulation: Formulation::SecondOrder,
            origin: 1e-24,
            geometric_share: 0.3,
        }
    }
}

impl SolverConfig {
    pub fn with_n(n: usize) -> Self {
        SolverConfig { n, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < MIN_NODES {
            return domain(format!("at least {MIN_NODES} nodes are required, got {}", self.n));
        }
        for (name, v) in [
            ("tail_tol", self.tail_tol),
            ("eig_tol", self.eig_tol),
            ("norm_tol", self.norm_tol),
            ("geometric_share", self.geometric_share),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return domain(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if self.max_iter < 1 {
            return domain("max_iter must be at least 1");
        }
        if !(self.origin > 0.0 && self.origin.is_finite()) {
            return domain(format!("origin must be positive, got {}", self.origin));
        }
        if let Some(x) = self.x_max {
            if !(x > self.origin && x.is_finite()) {
                return domain(format!("x_max must exceed the origin, got {x}"));
            }
        }
        Ok(())
    }
}

/// Node mapping t(x) = ln x + c x^α, uniform in t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grading {
    pub origin: f64,
    pub x_max: f64,
    pub alpha: f64,
    pub power_coefficient: f64,
    pub geometric_share: f64,
}

impl Grading {
    pub fn map(&self, x: f64) -> f64 {
        x.ln() + self.power_coefficient * x.powf(self.alpha)
    }
}

#[derive(Debug, Clone)]
pub struct Grid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    grading: Grading,
    quad: GridQuadrature,
}

impl Grid {
    pub fn from_grading(grading: Grading, n: usize) -> Result<Self> {
        if n < MIN_NODES {
            return domain(format!("at least {MIN_NODES} nodes are required, got {n}"));
        }
        let (t0, t1) = (grading.map(grading.origin), grading.map(grading.x_max));
        let (c, al) = (grading.power_coefficient, grading.alpha);
        let mut nodes = Vec::with_capacity(n);
        let mut s = grading.origin.ln();
        for i in 0..n {
            let target = t0 + (t1 - t0) * i as f64 / (n - 1) as f64;
            for _ in 0..100 {
                let e = c * (al * s).exp();
                let step = (s + e - target) / (1.0 + al * e);
                s -= step;
                if step.abs() <= 1e-15 * (1.0 + s.abs()) {
                    break;
                }
            }
            nodes.push(s.exp());
        }
        nodes[0] = grading.origin;
        nodes[n - 1] = grading.x_max;
        let quad = GridQuadrature::new(&nodes)?;
        let mut weights = vec![0.0; n];
        quad.for_each_suffix_rule(|i, w| {
            if i == 0 {
                weights.copy_from_slice(w);
            }
        });
        weights[0] += 0.5 * nodes[0];
        Ok(Grid { nodes, weights, grading, quad })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights of ∫_0^{x_max} against nodal samples, with f(0) = 0 on the first cell.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grading(&self) -> &Grading {
        &self.grading
    }

    pub fn quadrature(&self) -> &GridQuadrature {
        &self.quad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn x_max(&self) -> f64 {
        self.grading.x_max
    }

    pub fn integrate(&self, g: &[f64]) -> f64 {
        self.weights.iter().zip(g).map(|(w, v)| w * v).sum()
    }

    /// ∫ x^k f over the grid.
    pub fn moment(&self, values: &[f64], k: f64) -> f64 {
        self.nodes
            .iter()
            .zip(values)
            .zip(&self.weights)
            .map(|((x, f), w)| w * x.powf(k) * f)
            .sum()
    }

    /// Cubic interpolation inside the grid, power-law extrapolation below the first node, 0 above x_max.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let n = self.len();
        if x >= self.nodes[n - 1] {
            return if x == self.nodes[n - 1] { values[n - 1] } else { 0.0 };
        }
        if x <= self.nodes[0] {
            let (x0, x1, f0, f1) = (self.nodes[0], self.nodes[1], values[0], values[1]);
            if f0 > 0.0 && f1 > 0.0 {
                let p = (f1 / f0).ln() / (x1 / x0).ln();
                return f0 * (x / x0).powf(p);
            }
            return f0 * x / x0;
        }
        self.quad.interpolate(values, x)
    }
}

/// x_max with exp(−√𝔞 x^α/α) = tail_tol.
pub fn auto_x_max(spec: &CoefficientSpec, tail_tol: f64) -> f64 {
    spec.envelope_inverse(-tail_tol.ln())
}

pub fn build_grid(spec: &CoefficientSpec, config: &SolverConfig) -> Result<Grid> {
    config.validate()?;
    check_assumptions(spec).require_admissible()?;
    let x_max = config.x_max.unwrap_or_else(|| auto_x_max(spec, config.tail_tol));
    if !(x_max > config.origin * 10.0) {
        return domain(format!("x_max {x_max} is too close to the origin {}", config.origin));
    }
    let alpha = spec.alpha();
    let share = config.geometric_share;
    let log_span = (x_max / config.origin).ln();
    let grading = Grading {
        origin: config.origin,
        x_max,
        alpha,
        power_coefficient: log_span * (1.0 - share) / share / x_max.powf(alpha),
        geometric_share: share,
    };
    Grid::from_grading(grading, config.n)
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    /// True when every entry below the first subdiagonal is zero.
    pub fn is_upper_hessenberg(&self) -> bool {
        (2..self.n).all(|i| self.row(i)[..i - 1].iter().all(|&v| v == 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Fourth-order compact weighting of the non-derivative terms.
    Compact,
    /// Plain three-point central differences.
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BottomRow {
    /// f − x f′ − ∫_x^∞ a f ∫_0^x x′ b = 0 at the first node.
    Conservative,
    /// Three-point stencil with a ghost value f(0) = 0.
    GhostZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorOptions {
    pub scheme: Scheme,
    pub bottom: BottomRow,
    /// Drop the gain term when false.
    pub gain: bool,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        OperatorOptions { scheme: Scheme::Compact, bottom: BottomRow::Conservative, gain: true }
    }
}

fn rates(spec: &CoefficientSpec, x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| spec.rate.eval(v)).collect()
}

/// One-sided three-point weights for f′(x0).
fn one_sided_derivative(x: &[f64]) -> [f64; 3] {
    let (p0, p1, p2) = (x[0], x[1], x[2]);
    [
        (2.0 * p0 - p1 - p2) / ((p0 - p1) * (p0 - p2)),
        (p0 - p2) / ((p1 - p0) * (p1 - p2)),
        (p0 - p1) / ((p2 - p0) * (p2 - p1)),
    ]
}

pub fn assemble_operator(spec: &CoefficientSpec, grid: &Grid) -> Result<DenseMatrix> {
    assemble_operator_with(spec, grid, OperatorOptions::default())
}

pub fn assemble_operator_with(
    spec: &CoefficientSpec,
    grid: &Grid,
    opts: OperatorOptions,
) -> Result<DenseMatrix> {
    let x = grid.nodes();
    let n = x.len();
    let a = rates(spec, x);
    let mut m = DenseMatrix::zeros(n);
    let mut bad = None;
    let mut first_rule = vec![0.0; n];
    grid.quadrature().for_each_suffix_rule(|i, w| {
        if i == 0 {
            first_rule.copy_from_slice(w);
        }
        let row = m.row_mut(i);
        row[i] += a[i];
        if opts.gain {
            for j in i..n {
                let v = w[j] * a[j] * spec.daughter_density(x[i], x[j]);
                if !v.is_finite() && bad.is_none() {
                    bad = Some((i, j));
                }
                row[j] -= v;
            }
        }
    });
    if let Some((i, j)) = bad {
        return numerical(format!(
            "daughter density not finite at nodes ({i}, {j}) = ({:e}, {:e})",
            x[i], x[j]
        ));
    }

    // rows now hold B = diag(a) − G; turn them into the operator rows
    let spacing = |i: usize| {
        let hm = if i == 0 { x[0] } else { x[i] - x[i - 1] };
        (hm, x[i + 1] - x[i])
    };
    let mut b_prev = m.row(0).to_vec();
    {
        let (hm, hp) = spacing(0);
        let s = hm + hp;
        let row = m.row_mut(0);
        row[0] += 2.0 / (hm * s) + 2.0 / (hp * s);
        row[1] -= 2.0 / (hp * s);
    }
    for i in 1..n - 1 {
        let b_cur = m.row(i).to_vec();
        let (hm, hp) = spacing(i);
        let s = hm + hp;
        if opts.scheme == Scheme::Compact {
            let am = (hm * hm + hm * hp - hp * hp) / (6.0 * hm * s);
            let ap = (hp * hp + hm * hp - hm * hm) / (6.0 * hp * s);
            let a0 = 1.0 - am - ap;
            let (head, tail) = m.data.split_at_mut((i + 1) * n);
            let row = &mut head[i * n..];
            let next = &tail[..n];
            for j in i - 1..n {
                row[j] = am * b_prev[j] + a0 * b_cur[j] + ap * next[j];
            }
        }
        let row = m.row_mut(i);
        row[i - 1] -= 2.0 / (hm * s);
        row[i] += 2.0 / (hm * s) + 2.0 / (hp * s);
        row[i + 1] -= 2.0 / (hp * s);
        b_prev = b_cur;
    }
    if opts.bottom == BottomRow::Conservative {
        let d = one_sided_derivative(x);
        let row = m.row_mut(0);
        row.iter_mut().for_each(|v| *v = 0.0);
        row[0] = 1.0;
        for k in 0..3 {
            row[k] -= x[0] * d[k];
        }
        if opts.gain {
            for j in 0..n {
                row[j] -= first_rule[j] * a[j] * partial_mass_unchecked(spec, x[0], x[j]);
            }
        }
    }
    let row = m.row_mut(n - 1);
    row.iter_mut().for_each(|v| *v = 0.0);
    row[n - 1] = 1.0;
    Ok(m)
}

/// Givens QR of an upper Hessenberg matrix, in place.
struct HessenbergQr {
    r: DenseMatrix,
    rotations: Vec<(f64, f64)>,
}

impl HessenbergQr {
    fn new(mut a: DenseMatrix) -> Self {
        let n = a.n;
        let mut rotations = Vec::with_capacity(n - 1);
        for k in 0..n - 1 {
            let (p, q) = (a.get(k, k), a.get(k + 1, k));
            let r = p.hypot(q);
            let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (p / r, q / r) };
            let (top, bottom) = a.data.split_at_mut((k + 1) * n);
            let rk = &mut top[k * n..];
            let rk1 = &mut bottom[..n];
            for j in k..n {
                let (u, v) = (rk[j], rk1[j]);
                rk[j] = c * u + s * v;
                rk1[j] = -s * u + c * v;
            }
            rk1[k] = 0.0;
            rotations.push((c, s));
        }
        let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
        let floor = scale * f64::EPSILON;
        for i in 0..n {
            let d = a.get(i, i);
            if d.abs() < floor {
                a.data[i * n + i] = if d < 0.0 { -floor } else { floor };
            }
        }
        HessenbergQr { r: a, rotations }
    }

    fn apply_qt(&self, b: &mut [f64]) {
        for (k, &(c, s)) in self.rotations.iter().enumerate() {
            let (u, v) = (b[k], b[k + 1]);
            b[k] = c * u + s * v;
            b[k + 1] = -s * u + c * v;
        }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y = b.to_vec();
        self.apply_qt(&mut y);
        upper_solve(&self.r, &mut y);
        y
    }
}

fn upper_solve(r: &DenseMatrix, y: &mut [f64]) {
    let n = r.n;
    for i in (0..n).rev() {
        let row = r.row(i);
        let s: f64 = row[i + 1..].iter().zip(&y[i + 1..]).map(|(a, b)| a * b).sum();
        y[i] = (y[i] - s) / row[i];
    }
}

/// Solves Rᵀ y = b for upper triangular R.
fn upper_transpose_solve(r: &DenseMatrix, y: &mut [f64]) {
    let n = r.n;
    for i in 0..n {
        let row = r.row(i);
        y[i] /= row[i];
        let yi = y[i];
        for j in i + 1..n {
            y[j] -= row[j] * yi;
        }
    }
}

fn normalize_sup(v: &mut [f64]) {
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m > 0.0 {
        v.iter_mut().for_each(|x| *x /= m);
    }
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Two smallest singular values of an upper triangular matrix by subspace inverse iteration.
fn smallest_singular_pair(r: &DenseMatrix) -> (f64, f64) {
    let n = r.n;
    let mut x1: Vec<f64> = vec![1.0; n];
    let mut x2: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let orth = |x1: &mut Vec<f64>, x2: &mut Vec<f64>| {
        let n1 = x1.iter().map(|v| v * v).sum::<f64>().sqrt();
        x1.iter_mut().for_each(|v| *v /= n1);
        let d: f64 = x1.iter().zip(x2.iter()).map(|(a, b)| a * b).sum();
        x2.iter_mut().zip(x1.iter()).for_each(|(b, a)| *b -= d * a);
        let n2 = x2.iter().map(|v| v * v).sum::<f64>().sqrt();
        x2.iter_mut().for_each(|v| *v /= n2);
    };
    orth(&mut x1, &mut x2);
    for _ in 0..8 {
        for x in [&mut x1, &mut x2] {
            upper_transpose_solve(r, x);
            upper_solve(r, x);
        }
        orth(&mut x1, &mut x2);
    }
    let r1 = r.mul_vec(&x1);
    let r2 = r.mul_vec(&x2);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let (a, b, c) = (dot(&r1, &r1), dot(&r1, &r2), dot(&r2, &r2));
    let mean = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    ((mean - disc).max(0.0).sqrt(), (mean + disc).sqrt())
}

/// Solves the system with row k replaced by f_k = v_k, scaling columns by |v|.
fn pinned_solve(l: &DenseMatrix, v: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = l.n;
    let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let sc: Vec<f64> = v.iter().map(|x| x.abs().max(vmax * 1e-280)).collect();
    let mut a = l.clone();
    {
        let row = a.row_mut(k);
        row.iter_mut().for_each(|e| *e = 0.0);
        row[k] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    rhs[k] = v[k];
    for i in 0..n {
        let row = a.row_mut(i);
        let mut big = 0.0f64;
        for (e, s) in row.iter_mut().zip(&sc) {
            *e *= s;
            big = big.max(e.abs());
        }
        if big == 0.0 {
            return numerical(format!("operator row {i} vanishes"));
        }
        row.iter_mut().for_each(|e| *e /= big);
        rhs[i] /= big;
    }
    let u = HessenbergQr::new(a).solve(&rhs);
    let out: Vec<f64> = u.iter().zip(&sc).map(|(a, b)| a * b).collect();
    if out.iter().any(|x| !x.is_finite()) {
        return numerical("pinned solve produced non-finite values");
    }
    Ok(out)
}

struct NullVector {
    values: Vec<f64>,
    iterations: usize,
    sigma: (f64, f64),
}

fn null_vector(l: &DenseMatrix, init: &[f64], eig_tol: f64, max_iter: usize) -> Result<NullVector> {
    let n = l.n;
    let mut v = init.to_vec();
    normalize_sup(&mut v);
    let mut last_change = f64::INFINITY;
    for it in 1..=max_iter {
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let sc: Vec<f64> = v.iter().map(|x| x.abs().max(vmax * 1e-280)).collect();
        let mut a = l.clone();
        let mut d = vec![0.0; n];
        for i in 0..n {
            let row = a.row_mut(i);
            let mut big = 0.0f64;
            for (e, s) in row.iter_mut().zip(&sc) {
                *e *= s;
                big = big.max(e.abs());
            }
            if big == 0.0 {
                return numerical(format!("operator row {i} vanishes"));
            }
            d[i] = 1.0 / big;
            row.iter_mut().for_each(|e| *e *= d[i]);
        }
        let qr = HessenbergQr::new(a);
        let rhs: Vec<f64> = v.iter().zip(&d).map(|(x, di)| x * di).collect();
        let u = qr.solve(&rhs);
        let mut next: Vec<f64> = u.iter().zip(&sc).map(|(a, b)| a * b).collect();
        if next.iter().any(|x| !x.is_finite()) {
            return numerical("inverse iteration produced non-finite values");
        }
        normalize_sup(&mut next);
        last_change = sup_distance(&next, &v);
        debug!("inverse iteration {it}: change {last_change:.3e}");
        v = next;
        if it >= 2 && last_change <= eig_tol {
            let sigma = smallest_singular_pair(&qr.r);
            return Ok(NullVector { values: v, iterations: it, sigma });
        }
    }
    Err(FragError::Convergence {
        iterations: max_iter,
        last_change,
        context: "inverse iteration for the null vector".into(),
    })
}

/// How a distribution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Nullspace,
    Conservative,
    /// Values supplied by the caller, e.g. closed-form samples.
    Samples,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Nullspace => "nullspace",
            Method::Conservative => "conservative",
            Method::Samples => "samples",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Nodal solution with its grid and quality measures.
#[derive(Debug, Clone)]
pub struct SizeDistribution {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub m1: f64,
    pub method: Method,
    pub residual_sfd1: f64,
    pub residual_aeq1: f64,
    pub iterations: usize,
    /// Smallest two singular values of the equilibrated operator, null-space method only.
    pub singular_values: Option<(f64, f64)>,
}

impl SizeDistribution {
    /// Wraps externally computed nodal values; no rescaling is applied.
    pub fn from_values(spec: &CoefficientSpec, grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return domain(format!("expected {} values, got {}", grid.len(), values.len()));
        }
        let m1 = grid.moment(&values, 1.0);
        let (residual_sfd1, residual_aeq1) = residual_values(spec, &grid, &values)?;
        Ok(SizeDistribution {
            grid,
            values,
            m1,
            method: Method::Samples,
            residual_sfd1,
            residual_aeq1,
            iterations: 0,
            singular_values: None,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.values.iter().zip(self.grid.nodes()).map(|(f, x)| f / x).collect()
    }

    pub fn moment(&self, k: f64) -> f64 {
        self.grid.moment(&self.values, k)
    }
}

fn initial_guess(spec: &CoefficientSpec, grid: &Grid) -> Vec<f64> {
    grid.nodes()
        .iter()
        .map(|&x| x * (-spec.envelope_exponent(x)).exp())
        .collect()
}

fn closed_form_guess(spec: &CoefficientSpec, grid: &Grid) -> Vec<f64> {
    let nu = spec.power_law_nu().unwrap_or(0.0);
    match ClosedFormSolution::with_constant(spec.rate.amplitude, spec.rate.gamma, nu, 1.0) {
        Ok(sol) => grid.nodes().iter().map(|&x| sol.ln_eval(x).map(f64::exp).unwrap_or(0.0)).collect(),
        Err(_) => initial_guess(spec, grid),
    }
}

fn finish(
    spec: &CoefficientSpec,
    config: &SolverConfig,
    grid: Grid,
    mut values: Vec<f64>,
    method: Method,
    iterations: usize,
    singular_values: Option<(f64, f64)>,
) -> Result<SizeDistribution> {
    let n = values.len();
    values[n - 1] = 0.0;
    let vmax = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for (i, v) in values.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < -1e-12 * vmax {
                return numerical(format!("solution is negative at node {i}: {v:e}"));
            }
            *v = 0.0;
        }
    }
    let m1 = grid.moment(&values, 1.0);
    if !(m1 > 0.0 && m1.is_finite()) {
        return numerical(format!("first moment is not positive: {m1}"));
    }
    values.iter_mut().for_each(|v| *v /= m1);
    let m1 = grid.moment(&values, 1.0);
    if (m1 - 1.0).abs() > config.norm_tol {
        return numerical(format!("normalization drifted to {m1}"));
    }
    let (residual_sfd1, residual_aeq1) = residual_values(spec, &grid, &values)?;
    Ok(SizeDistribution {
        grid,
        values,
        m1,
        method,
        residual_sfd1,
        residual_aeq1,
        iterations,
        singular_values,
    })
}

/// Null vector of the discretized operator.
pub fn solve_nullspace(spec: &CoefficientSpec, config: &SolverConfig) -> Result<SizeDistribution> {
    let grid = build_grid(spec, config)?;
    let l = assemble_operator(spec, &grid)?;
    let attempt = null_vector(&l, &initial_guess(spec, &grid), config.eig_tol, config.max_iter);
    let nv = match attempt {
        Ok(nv) => nv,
        Err(FragError::Convergence { .. }) => {
            debug!("restarting inverse iteration from the closed-form shape");
            null_vector(&l, &closed_form_guess(spec, &grid), config.eig_tol, config.max_iter)?
        }
        Err(e) => return Err(e),
    };
    let (s1, s2) = nv.sigma;
    debug!("smallest singular values {s1:.3e}, {s2:.3e}");
    if s2 < config.eig_tol {
        return numerical(format!(
            "null space is numerically degenerate: second singular value {s2:.3e} below {:.1e}",
            config.eig_tol
        ));
    }
    // trade the discrete inconsistency from the boundary row to the mass peak
    let x = grid.nodes();
    let peak = (0..x.len()).max_by(|&i, &j| (x[i] * nv.values[i]).total_cmp(&(x[j] * nv.values[j]))).unwrap_or(0);
    let mut values = pinned_solve(&l, &nv.values, peak)?;
    normalize_sup(&mut values);
    finish(spec, config, grid, values, Method::Nullspace, nv.iterations, Some(nv.sigma))
}

/// Fixed point of the conservative form, as the smallest right singular vector of I − T.
pub fn solve_conservative(spec: &CoefficientSpec, config: &SolverConfig) -> Result<SizeDistribution> {
    let grid = build_grid(spec, config)?;
    let x = grid.nodes().to_vec();
    let n = x.len();
    let a = rates(spec, &x);
    let mut k = vec![0.0; n * n];
    grid.quadrature().for_each_suffix_rule(|i, w| {
        let inv = 1.0 / (x[i] * x[i]);
        for j in i..n {
            k[i * n + j] = w[j] * a[j] * partial_mass_unchecked(spec, x[i], x[j]) * inv;
        }
    });
    if let Some(p) = k.iter().position(|v| !v.is_finite()) {
        return numerical(format!("partial mass not finite at nodes ({}, {})", p / n, p % n));
    }
    let mut c = grid.quadrature().suffix_apply_rows(&k, n);
    drop(k);
    for i in 0..n {
        let row = &mut c[i * n..(i + 1) * n];
        for v in row.iter_mut() {
            *v = -x[i] * *v;
        }
        row[i] += 1.0;
    }
    let mut c = DenseMatrix { n, data: c };
    {
        let row = c.row_mut(n - 1);
        row.iter_mut().for_each(|v| *v = 0.0);
        row[n - 1] = 1.0;
    }
    let mut v = initial_guess(spec, &grid);
    normalize_sup(&mut v);
    let mut trace = Vec::new();
    for it in 1..=config.max_iter {
        let mut u = v.clone();
        upper_transpose_solve(&c, &mut u);
        upper_solve(&c, &mut u);
        if u.iter().any(|x| !x.is_finite()) {
            return numerical("conservative iteration produced non-finite values");
        }
        normalize_sup(&mut u);
        let change = sup_distance(&u, &v);
        trace.push(change);
        debug!("conservative sweep {it}: change {change:.3e}");
        v = u;
        if change <= config.eig_tol {
            return finish(spec, config, grid, v, Method::Conservative, it, None);
        }
    }
    let tail: Vec<String> = trace.iter().rev().take(5).map(|c| format!("{c:.2e}")).collect();
    Err(FragError::Convergence {
        iterations: config.max_iter,
        last_change: *trace.last().unwrap_or(&f64::NAN),
        context: format!("conservative sweeps, last changes [{}]", tail.join(", ")),
    })
}

pub fn solve(spec: &CoefficientSpec, config: &SolverConfig) -> Result<SizeDistribution> {
    match config.formulation {
        Formulation::SecondOrder => solve_nullspace(spec, config),
        Formulation::Conservative => solve_conservative(spec, config),
    }
}

/// (r_sfd1, r_aeq1) of a stored distribution.
pub fn residual(spec: &CoefficientSpec, f: &SizeDistribution) -> Result<(f64, f64)> {
    residual_values(spec, &f.grid, &f.values)
}

/// Gain G[f](x_i) and flux ∫_{x_i}^∞ a f PM(x_i, ·) at every node.
pub fn gain_and_flux(spec: &CoefficientSpec, grid: &Grid, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let x = grid.nodes();
    let n = x.len();
    let af: Vec<f64> = x.iter().zip(values).map(|(&xi, f)| spec.rate.eval(xi) * f).collect();
    let mut gain = vec![0.0; n];
    let mut flux = vec![0.0; n];
    grid.quadrature().for_each_suffix_rule(|i, w| {
        let (mut g, mut s) = (0.0, 0.0);
        for j in i..n {
            if af[j] == 0.0 {
                continue;
            }
            g += w[j] * af[j] * spec.daughter_density(x[i], x[j]);
            s += w[j] * af[j] * partial_mass_unchecked(spec, x[i], x[j]);
        }
        gain[i] = g;
        flux[i] = s;
    });
    (gain, flux)
}

/// Residuals of nodal values against the differential and the conservative forms.
///
/// r_sfd1 is the x-weighted L¹ norm of −f″ + a f − G[f] relative to that of |f″| + a f + G[f];
/// r_aeq1 is the sup over resolved interior nodes of |f − x f′ − flux| / (f + x|f′|).
pub fn residual_values(spec: &CoefficientSpec, grid: &Grid, values: &[f64]) -> Result<(f64, f64)> {
    let x = grid.nodes();
    let n = x.len();
    if values.len() != n {
        return domain(format!("expected {n} values, got {}", values.len()));
    }
    let (gain, flux) = gain_and_flux(spec, grid, values);
    let w = grid.weights();
    let phi_limit = spec.envelope_exponent(grid.x_max()) - 20.0;
    let (mut num, mut den) = (0.0, 0.0);
    let mut aeq: f64 = 0.0;
    for i in 1..n - 1 {
        let (hm, hp) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        let s = hm + hp;
        let d2 = 2.0 * ((values[i + 1] - values[i]) / hp - (values[i] - values[i - 1]) / hm) / s;
        let d1 = -hp / (hm * s) * values[i - 1] + (hp - hm) / (hm * hp) * values[i] + hm / (hp * s) * values[i + 1];
        let af = spec.rate.eval(x[i]) * values[i];
        num += w[i] * x[i] * (-d2 + af - gain[i]).abs();
        den += w[i] * x[i] * (d2.abs() + af.abs() + gain[i].abs());
        if spec.envelope_exponent(x[i]) <= phi_limit {
            let scale = values[i].abs() + x[i] * d1.abs();
            if scale > 0.0 {
                aeq = aeq.max((values[i] - x[i] * d1 - flux[i]).abs() / scale);
            }
        }
    }
    let sfd = if den > 0.0 { num / den } else { 0.0 };
    Ok((sfd, aeq))
}
