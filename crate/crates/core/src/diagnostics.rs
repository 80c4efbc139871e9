//! Integral identities and qualitative checks on computed size distributions.

use std::fmt;

use crate::asymptotics::{small_fit, ModelFit, SmallModel};
use crate::error::{domain, FragError, Result};
use crate::kernels::{
    inner_log_moment, partial_mass, profile_upper_log_moment, profile_upper_moment, CoefficientSpec, Daughter,
    Integral,
};
use crate::quadrature::{interpolatory_weights, tanh_sinh};
use crate::solver::SizeDistribution;

/// Convergence verdict for a moment near zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Convergent,
    Divergent,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Convergent => "convergent",
            Verdict::Divergent => "divergent",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub order: f64,
    /// +∞ when divergent.
    pub value: f64,
    pub verdict: Verdict,
    /// ∫ x^m f over the three smallest four-decade bands, smallest first.
    pub bands: [f64; 3],
    /// ∫_0^{x_0} x^m f from the fitted small-size law.
    pub remainder: Integral,
}

const BAND_GROWTH: f64 = 1.5;
const BAND_DECADES: i32 = 4;

fn local_power_model(f: &SizeDistribution) -> ModelFit {
    let x = f.nodes();
    let (x0, x1, f0, f1) = (x[0], x[1], f.values[0], f.values[1]);
    let p = if f0 > 0.0 && f1 > 0.0 { (f1 / f0).ln() / (x1 / x0).ln() } else { 1.0 };
    ModelFit { model: SmallModel::Power, exponent: p, prefactor: f0 / x0.powf(p), offset: 0.0, rms: 0.0 }
}

/// M_m(f) = ∫ x^m f with a divergence verdict near zero.
pub fn moment(f: &SizeDistribution, m: f64) -> MomentReport {
    let x = f.nodes();
    let quad = f.grid.quadrature();
    let g: Vec<f64> = x.iter().zip(&f.values).map(|(&xi, &v)| xi.powf(m) * v).collect();
    let body = quad.integral(&g);
    let x0 = x[0];
    let x_end = f.grid.x_max();
    let mut bands = [0.0; 3];
    for (k, band) in bands.iter_mut().enumerate() {
        let lo = x0 * 10f64.powi(BAND_DECADES * k as i32);
        let hi = (lo * 10f64.powi(BAND_DECADES)).min(x_end);
        if lo < x_end {
            *band = quad.integral_from(&g, lo) - quad.integral_from(&g, hi);
        }
    }
    let model = small_fit(f, None).ok().and_then(|r| r.best).unwrap_or_else(|| local_power_model(f));
    let remainder = model.integral_below(m, x0);
    let growing = bands[0] >= BAND_GROWTH * bands[1] && bands[1] >= BAND_GROWTH * bands[2] && bands[2] > 0.0;
    let verdict = if growing || !remainder.is_finite() { Verdict::Divergent } else { Verdict::Convergent };
    let value = match (verdict, remainder) {
        (Verdict::Convergent, Integral::Finite(r)) => body + r,
        _ => f64::INFINITY,
    };
    MomentReport { order: m, value, verdict, bands, remainder }
}

fn check_theta_xi(theta: f64, xi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return domain(format!("theta must lie in [0, 1], got {theta}"));
    }
    if !(xi > 0.0) || !xi.is_finite() {
        return domain(format!("xi must be positive, got {xi}"));
    }
    Ok(())
}

/// ∫_0^y w(max{x, ξ}, y) x b(x, y) dx for y > ξ.
fn itheta_inner(spec: &CoefficientSpec, theta: f64, xi: f64, y: f64) -> Result<f64> {
    let log_branch = theta == 1.0;
    match &spec.daughter.variant {
        Daughter::General { b, .. } => {
            let weight = |x: f64| {
                let t = x.max(xi);
                if log_branch {
                    (y / t).ln()
                } else {
                    (t.powf(theta - 1.0) - y.powf(theta - 1.0)) / (1.0 - theta)
                }
            };
            let pm = partial_mass(spec, xi, y)?;
            let upper = tanh_sinh(|x| weight(x) * x * b(x, y), xi, y, 1e-11)?.value;
            Ok(weight(xi) * pm + upper)
        }
        _ => {
            let pm = partial_mass(spec, xi, y)?;
            let z = xi / y;
            if log_branch {
                Ok((y / xi).ln() * pm + y * profile_upper_log_moment(spec, z)?)
            } else {
                let upper = y.powf(theta) * profile_upper_moment(spec, theta, z)?;
                Ok((xi.powf(theta - 1.0) * pm + upper - y.powf(theta)) / (1.0 - theta))
            }
        }
    }
}

/// I_θ(ξ) = ∫_ξ^∞ a f ∫_0^y w_θ(max{x, ξ}, y) x b dx dy.
pub fn itheta(spec: &CoefficientSpec, f: &SizeDistribution, theta: f64, xi: f64) -> Result<f64> {
    check_theta_xi(theta, xi)?;
    let x = f.nodes();
    let n = x.len();
    if xi >= f.grid.x_max() {
        return Ok(0.0);
    }
    let k = x.partition_point(|&v| v <= xi);
    if k + 3 > n {
        return Ok(0.0);
    }
    let mut g = vec![0.0; n];
    for i in k..n {
        let af = spec.rate.eval(x[i]) * f.values[i];
        if af != 0.0 {
            g[i] = af * itheta_inner(spec, theta, xi, x[i])?;
        }
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(FragError::Numerical(format!("non-finite inner integral for theta={theta}, xi={xi}")));
    }
    // first partial cell through (ξ, 0) and the next three nodes
    let pts = [xi, x[k], x[k + 1], x[k + 2]];
    let w = interpolatory_weights(&pts, xi, x[k]);
    let head = w[1] * g[k] + w[2] * g[k + 1] + w[3] * g[k + 2];
    let tail = suffix_integral(f, &g, k);
    Ok(head + tail)
}

/// ∫_{x_k}^{x_max} g using only nodes j >= k.
fn suffix_integral(f: &SizeDistribution, g: &[f64], k: usize) -> f64 {
    let rows = f.grid.quadrature().suffix_apply_rows(g, 1);
    rows[k]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    pub theta: f64,
    pub xi: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_residual: f64,
    pub rel_residual: f64,
}

impl IdentityReport {
    fn new(theta: f64, xi: f64, lhs: f64, rhs: f64) -> Self {
        let abs_residual = (lhs - rhs).abs();
        let scale = lhs.abs().max(rhs.abs());
        let rel_residual = if scale > 0.0 { abs_residual / scale } else { 0.0 };
        IdentityReport { theta, xi, lhs, rhs, abs_residual, rel_residual }
    }
}

/// ξ^{θ−1} f(ξ) + θ ∫_ξ^∞ z^{θ−2} f against I_θ(ξ).
pub fn identity_in4_residual(
    spec: &CoefficientSpec,
    f: &SizeDistribution,
    theta: f64,
    xi: f64,
) -> Result<IdentityReport> {
    let rhs = itheta(spec, f, theta, xi)?;
    let mut lhs = xi.powf(theta - 1.0) * f.eval(xi);
    if theta > 0.0 && xi < f.grid.x_max() {
        let g: Vec<f64> = f.nodes().iter().zip(&f.values).map(|(&z, &v)| z.powf(theta - 2.0) * v).collect();
        lhs += theta * f.grid.quadrature().integral_from(&g, xi);
    }
    Ok(IdentityReport::new(theta, xi, lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriterionVerdict {
    Consistent,
    BothDivergent,
    Inconsistent,
}

impl CriterionVerdict {
    pub fn name(self) -> &'static str {
        match self {
            CriterionVerdict::Consistent => "consistent",
            CriterionVerdict::BothDivergent => "both_divergent",
            CriterionVerdict::Inconsistent => "inconsistent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct XMinus1Report {
    pub lhs: MomentReport,
    /// ∫ a f ∫_0^y x b ln(y/x) dx dy
    pub rhs: Integral,
    pub rel_difference: f64,
    pub verdict: CriterionVerdict,
}

pub const X_MINUS1_TOL: f64 = 1e-3;

/// M_{−1}(f) against ∫ a f ∫_0^y x b ln(y/x) dx dy.
pub fn x_minus1_check(spec: &CoefficientSpec, f: &SizeDistribution) -> Result<XMinus1Report> {
    let lhs = moment(f, -1.0);
    let x = f.nodes();
    let mut g = vec![0.0; x.len()];
    let mut rhs_divergent = false;
    for (i, &y) in x.iter().enumerate() {
        let af = spec.rate.eval(y) * f.values[i];
        if af == 0.0 {
            continue;
        }
        match inner_log_moment(spec, y)? {
            Integral::Finite(v) => g[i] = af * v,
            Integral::Divergent => {
                rhs_divergent = true;
                break;
            }
        }
    }
    let rhs = if rhs_divergent { Integral::Divergent } else { Integral::Finite(f.grid.integrate(&g)) };
    let (verdict, rel) = match (lhs.verdict, rhs) {
        (Verdict::Divergent, Integral::Divergent) => (CriterionVerdict::BothDivergent, f64::NAN),
        (Verdict::Convergent, Integral::Finite(r)) => {
            let rel = (lhs.value - r).abs() / lhs.value.abs().max(r.abs());
            let v = if rel <= X_MINUS1_TOL { CriterionVerdict::Consistent } else { CriterionVerdict::Inconsistent };
            (v, rel)
        }
        _ => (CriterionVerdict::Inconsistent, f64::INFINITY),
    };
    Ok(XMinus1Report { lhs, rhs, rel_difference: rel, verdict })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmallLimit {
    Finite(f64),
    Infinite,
}

impl SmallLimit {
    pub fn finite(self) -> Option<f64> {
        match self {
            SmallLimit::Finite(v) => Some(v),
            SmallLimit::Infinite => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallLimitReport {
    pub limit: SmallLimit,
    /// f(z)/z at the first node of each band, smallest first.
    pub samples: [f64; 3],
    pub sample_points: [f64; 3],
}

/// Growth cap of f/z, the reciprocal of the default eigen tolerance.
pub const SMALL_LIMIT_CAP: f64 = 1e10;

/// lim_{z→0} f(z)/z by Aitken extrapolation over the three smallest bands.
pub fn small_limit(f: &SizeDistribution) -> SmallLimitReport {
    let x = f.nodes();
    let x0 = x[0];
    let sample_points = [0, 1, 2].map(|k| {
        let target = x0 * 10f64.powi(BAND_DECADES * k);
        x[x.partition_point(|&v| v < target).min(x.len() - 1)]
    });
    let samples = sample_points.map(|z| f.eval(z) / z);
    let [r0, r1, r2] = samples;
    let d1 = r0 - r1;
    let d2 = r1 - r2;
    let growing = d1 > 1e-6 * r0.abs() && d1 * BAND_GROWTH > d2;
    let limit = if !(r0.is_finite()) || r0 > SMALL_LIMIT_CAP || growing {
        SmallLimit::Infinite
    } else {
        let denom = d1 - d2;
        if denom.abs() <= 1e-300 || d1.abs() <= 1e-14 * r0.abs() {
            SmallLimit::Finite(r0)
        } else {
            SmallLimit::Finite(r0 - d1 * d1 / denom)
        }
    };
    SmallLimitReport { limit, samples, sample_points }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeReport {
    pub positive: bool,
    pub ratio_monotone: bool,
    /// Largest increase of f/z between consecutive nodes.
    pub max_violation: f64,
    /// Left node of the first pair over which f/z increases by more than the slack.
    pub first_violation: Option<usize>,
    pub first_nonpositive: Option<usize>,
}

pub const SHAPE_SLACK: f64 = 1e-10;

/// Positivity on interior nodes and non-increasing f/z, with a per-node slack.
pub fn shape_checks(f: &SizeDistribution) -> ShapeReport {
    shape_checks_samples(f.nodes(), &f.values, SHAPE_SLACK)
}

pub fn shape_checks_samples(x: &[f64], f: &[f64], slack: f64) -> ShapeReport {
    let n = x.len();
    let first_nonpositive = (1..n.saturating_sub(1)).find(|&i| !(f[i] > 0.0));
    let mut max_violation: f64 = 0.0;
    let mut first_violation = None;
    for i in 0..n.saturating_sub(1) {
        let d = f[i + 1] / x[i + 1] - f[i] / x[i];
        if d > max_violation {
            max_violation = d;
        }
        if d > slack && first_violation.is_none() {
            first_violation = Some(i);
        }
    }
    ShapeReport {
        positive: first_nonpositive.is_none(),
        ratio_monotone: first_violation.is_none(),
        max_violation,
        first_violation,
        first_nonpositive,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_detector_locates_violation() {
        let x: Vec<f64> = (1..50).map(|i| i as f64 * 0.1).collect();
        let mut f: Vec<f64> = x.iter().map(|z| z * (-z).exp()).collect();
        f[20] *= 1.5;
        let r = shape_checks_samples(&x, &f, SHAPE_SLACK);
        assert!(r.positive);
        assert!(!r.ratio_monotone);
        assert_eq!(r.first_violation, Some(19));
    }

    #[test]
    fn identity_report_residuals() {
        let r = IdentityReport::new(0.5, 1.0, 2.0, 1.0);
        assert_eq!(r.abs_residual, 1.0);
        assert_eq!(r.rel_residual, 0.5);
    }

    #[test]
    fn theta_range_is_checked() {
        assert!(check_theta_xi(1.5, 1.0).is_err());
        assert!(check_theta_xi(0.5, 0.0).is_err());
        assert!(check_theta_xi(1.0, 1e-3).is_ok());
    }
}
