//! Adaptive quadrature on intervals and piecewise-cubic rules on sampled grids.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{domain, FragError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * GK_WEIGHTS[7];
    let mut gauss = fc * G_WEIGHTS[3];
    for j in 0..7 {
        let dx = h * GK_NODES[j];
        let s = f(c - dx) + f(c + dx);
        kron += GK_WEIGHTS[j] * s;
        if j % 2 == 1 {
            gauss += G_WEIGHTS[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) quadrature on a finite interval.
pub fn gauss_kronrod<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return domain("gauss_kronrod needs finite limits");
    }
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let (value, error) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut err = error;
    let mut evaluations = 15;
    const MAX_SEGMENTS: usize = 4000;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_SEGMENTS {
            return Err(FragError::Convergence {
                iterations: heap.len(),
                last_change: err,
                context: format!("adaptive quadrature on [{a}, {b}]"),
            });
        }
        let seg = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // interval cannot be split further in floating point
            heap.push(Segment { error: 0.0, ..seg });
            err = heap.iter().map(|s| s.error).sum();
            if err == 0.0 {
                break;
            }
            continue;
        }
        let (v1, e1) = gk15(&f, seg.a, mid);
        let (v2, e2) = gk15(&f, mid, seg.b);
        evaluations += 30;
        total += v1 + v2 - seg.value;
        err += e1 + e2 - seg.error;
        heap.push(Segment { a: seg.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: seg.b, value: v2, error: e2 });
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            err = heap.iter().map(|s| s.error).sum();
        }
    }
    if !total.is_finite() {
        return Err(FragError::Numerical(format!("non-finite integral on [{a}, {b}]")));
    }
    Ok(QuadResult { value: total, error: err, evaluations })
}

/// ∫_a^∞ f via the map x = a + t/(1−t).
pub fn gauss_kronrod_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - t;
        let v = f(a + t / s) / (s * s);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    gauss_kronrod(g, 0.0, 1.0, abs_tol, rel_tol)
}

/// Tanh–sinh quadrature on a finite interval. Tolerates integrable endpoint singularities.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return domain("tanh_sinh needs finite limits with a <= b");
    }
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let half = 0.5 * (b - a);
    let t_max = 6.5;
    let node = |t: f64| -> Option<(f64, f64)> {
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        let w = std::f64::consts::FRAC_PI_2 * t.cosh() / (u.cosh() * u.cosh());
        let x = if t < 0.0 {
            a + 2.0 * half / (1.0 + (-2.0 * u).exp())
        } else {
            b - 2.0 * half / (1.0 + (2.0 * u).exp())
        };
        if x <= a || x >= b || w == 0.0 {
            None
        } else {
            Some((x, w * half))
        }
    };
    let eval = |t: f64| -> f64 {
        match node(t) {
            Some((x, w)) => {
                let v = f(x) * w;
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    };
    let mut h = 0.5;
    let n0 = (t_max / h) as i64;
    let mut sum: f64 = (-n0..=n0).map(|k| eval(k as f64 * h)).sum();
    let mut evaluations = (2 * n0 + 1) as usize;
    let mut est = h * sum;
    let mut change = f64::INFINITY;
    for _ in 0..10 {
        h *= 0.5;
        let n = (t_max / h) as i64;
        let mut k = -n + if n % 2 == 0 { 1 } else { 0 };
        while k <= n {
            sum += eval(k as f64 * h);
            evaluations += 1;
            k += 2;
        }
        let next = h * sum;
        change = (next - est).abs();
        est = next;
        if change <= tol * est.abs().max(1e-300) {
            return Ok(QuadResult { value: est, error: change, evaluations });
        }
    }
    Err(FragError::Convergence {
        iterations: 10,
        last_change: change,
        context: format!("tanh-sinh quadrature on [{a}, {b}]"),
    })
}

const GL3_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL3_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// Weights of ∫_a^b p(x) dx where p interpolates at `pts`. Exact for up to four points.
pub fn interpolatory_weights(pts: &[f64], a: f64, b: f64) -> Vec<f64> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    pts.iter()
        .enumerate()
        .map(|(k, &pk)| {
            (0..3)
                .map(|q| {
                    let x = c + h * GL3_NODES[q];
                    let basis: f64 = pts
                        .iter()
                        .enumerate()
                        .filter(|&(m, _)| m != k)
                        .map(|(_, &pm)| (x - pm) / (pk - pm))
                        .product();
                    GL3_WEIGHTS[q] * basis
                })
                .sum::<f64>()
                * h
        })
        .collect()
}

/// Lagrange interpolation through the given points.
pub fn lagrange(pts: &[f64], vals: &[f64], x: f64) -> f64 {
    pts.iter()
        .enumerate()
        .map(|(k, &pk)| {
            let basis: f64 = pts
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != k)
                .map(|(_, &pm)| (x - pm) / (pk - pm))
                .product();
            basis * vals[k]
        })
        .sum()
}

/// Piecewise-cubic quadrature on a fixed increasing node set.
#[derive(Debug, Clone)]
pub struct GridQuadrature {
    nodes: Vec<f64>,
    /// per cell k = [x_k, x_{k+1}]: first stencil node and weights
    centered: Vec<(usize, Vec<f64>)>,
    /// per cell k: weights with the stencil starting at node k
    forward: Vec<Vec<f64>>,
}

fn stencil_start(k: usize, n: usize) -> (usize, usize) {
    let len = n.min(4);
    let start = k.saturating_sub(1).min(n - len);
    (start, len)
}

impl GridQuadrature {
    pub fn new(nodes: &[f64]) -> Result<Self> {
        let n = nodes.len();
        if n < 2 {
            return domain("grid quadrature needs at least two nodes");
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("grid nodes must be strictly increasing");
        }
        let mut centered = Vec::with_capacity(n - 1);
        let mut forward = Vec::with_capacity(n - 1);
        for k in 0..n - 1 {
            let (start, len) = stencil_start(k, n);
            let pts = &nodes[start..start + len];
            centered.push((start, interpolatory_weights(pts, nodes[k], nodes[k + 1])));
            let flen = (n - k).min(4);
            let fpts = &nodes[k..k + flen];
            forward.push(interpolatory_weights(fpts, nodes[k], nodes[k + 1]));
        }
        Ok(GridQuadrature { nodes: nodes.to_vec(), centered, forward })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn cell(&self, k: usize, g: &[f64]) -> f64 {
        let (start, w) = &self.centered[k];
        w.iter().enumerate().map(|(j, wj)| wj * g[start + j]).sum()
    }

    /// Weights of the full-range rule ∫_{x_0}^{x_{n-1}}.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.len()];
        for (start, cw) in &self.centered {
            for (j, v) in cw.iter().enumerate() {
                w[start + j] += v;
            }
        }
        w
    }

    pub fn integral(&self, g: &[f64]) -> f64 {
        (0..self.len() - 1).map(|k| self.cell(k, g)).sum()
    }

    /// out[i] = ∫_{x_i}^{x_{n-1}} g.
    pub fn tail_integrals(&self, g: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for k in (0..n - 1).rev() {
            out[k] = out[k + 1] + self.cell(k, g);
        }
        out
    }

    /// out[i] = ∫_{x_0}^{x_i} g.
    pub fn head_integrals(&self, g: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for k in 0..n - 1 {
            out[k + 1] = out[k] + self.cell(k, g);
        }
        out
    }

    /// Visits, for i = n-1 down to 0, the weights of ∫_{x_i}^{x_{n-1}} using only nodes j >= i.
    /// The slice handed to `visit` is indexed by absolute node number and is zero below i.
    pub fn for_each_suffix_rule<V: FnMut(usize, &[f64])>(&self, mut visit: V) {
        let n = self.len();
        let mut acc = vec![0.0; n];
        let mut row = vec![0.0; n];
        visit(n - 1, &row);
        for i in (0..n - 1).rev() {
            if i + 3 >= n {
                let w = interpolatory_weights(&self.nodes[i..], self.nodes[i], self.nodes[n - 1]);
                row[i..].copy_from_slice(&w);
                visit(i, &row);
                continue;
            }
            let mut add = |k: usize| {
                let (start, w) = &self.centered[k];
                for (j, v) in w.iter().enumerate() {
                    acc[start + j] += v;
                }
            };
            if i + 4 == n {
                add(n - 2);
            }
            add(i + 1);
            row[i..].copy_from_slice(&acc[i..]);
            for (j, v) in self.forward[i].iter().enumerate() {
                row[i + j] += v;
            }
            visit(i, &row);
        }
    }

    /// For a row-major matrix m with `cols` columns and one row per node, returns the row-major
    /// matrix whose row i is Σ_j W_ij m_j, W_i being the suffix rule of `for_each_suffix_rule`.
    pub fn suffix_apply_rows(&self, m: &[f64], cols: usize) -> Vec<f64> {
        let n = self.len();
        assert_eq!(m.len(), n * cols);
        let mut out = vec![0.0; n * cols];
        let mut acc = vec![0.0; cols];
        let axpy = |dst: &mut [f64], w: f64, j: usize| {
            for (d, v) in dst.iter_mut().zip(&m[j * cols..(j + 1) * cols]) {
                *d += w * v;
            }
        };
        for i in (0..n - 1).rev() {
            let row = &mut out[i * cols..(i + 1) * cols];
            if i + 3 >= n {
                let w = interpolatory_weights(&self.nodes[i..], self.nodes[i], self.nodes[n - 1]);
                for (k, wk) in w.iter().enumerate() {
                    axpy(row, *wk, i + k);
                }
                continue;
            }
            let mut add = |k: usize| {
                let (start, w) = &self.centered[k];
                for (j, v) in w.iter().enumerate() {
                    axpy(&mut acc, *v, start + j);
                }
            };
            if i + 4 == n {
                add(n - 2);
            }
            add(i + 1);
            row.copy_from_slice(&acc);
            for (j, v) in self.forward[i].iter().enumerate() {
                axpy(row, *v, i + j);
            }
        }
        out
    }

    /// Index k with x_k <= x < x_{k+1}, clamped to valid cells.
    pub fn locate(&self, x: f64) -> usize {
        let n = self.len();
        match self.nodes.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(k) => k.min(n - 2),
            Err(k) => k.saturating_sub(1).min(n - 2),
        }
    }

    /// Cubic interpolation of sampled values at x.
    pub fn interpolate(&self, g: &[f64], x: f64) -> f64 {
        let k = self.locate(x);
        let (start, len) = stencil_start(k, self.len());
        lagrange(&self.nodes[start..start + len], &g[start..start + len], x)
    }

    /// ∫_a^{x_{n-1}} g for any a inside the grid.
    pub fn integral_from(&self, g: &[f64], a: f64) -> f64 {
        let k = self.locate(a);
        let tail = self.tail_integrals_from(g, k + 1);
        let (start, len) = stencil_start(k, self.len());
        let w = interpolatory_weights(&self.nodes[start..start + len], a, self.nodes[k + 1]);
        tail + w.iter().enumerate().map(|(j, wj)| wj * g[start + j]).sum::<f64>()
    }

    fn tail_integrals_from(&self, g: &[f64], i: usize) -> f64 {
        (i..self.len() - 1).map(|k| self.cell(k, g)).sum()
    }
}
