//! Large-size and small-size laws: fits, bounds and regime prediction.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, precondition, FragError, Result};
use crate::kernels::{
    b4_check, h_cumulative, inner_moment, profile_moment, CoefficientSpec, Daughter, Integral, Profile,
};
use crate::quadrature::{gauss_kronrod, gauss_kronrod_to_infinity};
use crate::solver::SizeDistribution;

const MAX_CONDITION: f64 = 1e12;

struct LeastSquares {
    coeffs: Vec<f64>,
    rms: f64,
}

/// Least squares with column equilibration; errors when the scaled design is ill-conditioned.
fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<LeastSquares> {
    let rows = y.len();
    let cols = columns.len();
    if rows < cols {
        return domain("fewer samples than fitted parameters");
    }
    let scales: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE))
        .collect();
    let a = DMatrix::from_fn(rows, cols, |i, j| columns[j][i] / scales[j]);
    let svd = a.clone().svd(true, true);
    let (smax, smin) = svd
        .singular_values
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    if !(smin > 0.0) || smax / smin > MAX_CONDITION {
        return Err(FragError::Numerical(format!(
            "regression is ill-conditioned (condition number {:.3e})",
            smax / smin
        )));
    }
    let b = DVector::from_column_slice(y);
    let sol = svd
        .solve(&b, 0.0)
        .map_err(|e| FragError::Numerical(format!("least squares failed: {e}")))?;
    let resid = &a * &sol - &b;
    let rms = (resid.norm_squared() / rows as f64).sqrt();
    let coeffs = (0..cols).map(|j| sol[j] / scales[j]).collect();
    Ok(LeastSquares { coeffs, rms })
}

/// Fit of ln f = c + p ln x − r x^α/α.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    pub alpha_hat: f64,
    pub rate_hat: f64,
    pub algebraic_exponent_hat: f64,
    pub log_prefactor: f64,
    pub rms: f64,
    pub window: (f64, f64),
    pub nodes: usize,
}

fn tail_fit_at(x: &[f64], lf: &[f64], alpha: f64) -> Result<(LeastSquares, f64)> {
    let ones = vec![1.0; x.len()];
    let logs: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let pw: Vec<f64> = x.iter().map(|v| -v.powf(alpha) / alpha).collect();
    let ls = least_squares(&[ones, logs, pw], lf)?;
    let rms = ls.rms;
    Ok((ls, rms))
}

/// Tail fit on raw samples restricted to the window.
///
/// The exponent α is found by minimizing the residual of the linear fit in (c, p, r) over α.
pub fn tail_fit_samples(x: &[f64], f: &[f64], window: (f64, f64)) -> Result<TailFit> {
    let (lo, hi) = window;
    if !(lo >= 1.0 && hi > lo) {
        return domain(format!("tail window must satisfy 1 <= x_lo < x_hi, got [{lo}, {hi}]"));
    }
    let mut xs = Vec::new();
    let mut lf = Vec::new();
    for (&xi, &fi) in x.iter().zip(f) {
        if xi >= lo && xi <= hi {
            if !(fi > 0.0) {
                return domain(format!("f is not positive at x = {xi} inside the tail window"));
            }
            xs.push(xi);
            lf.push(fi.ln());
        }
    }
    if xs.len() < 20 {
        return domain(format!("tail window holds {} nodes, at least 20 are needed", xs.len()));
    }
    let score = |a: f64| tail_fit_at(&xs, &lf, a).map(|r| r.1).unwrap_or(f64::INFINITY);
    // coarse scan in ln α, then golden-section refinement
    let (la, lb) = (0.2f64.ln(), 6.0f64.ln());
    let m = 120;
    let grid: Vec<f64> = (0..=m).map(|k| (la + (lb - la) * k as f64 / m as f64).exp()).collect();
    let scores: Vec<f64> = grid.iter().map(|&a| score(a)).collect();
    let best = (0..=m).min_by(|&i, &j| scores[i].total_cmp(&scores[j])).unwrap();
    if !scores[best].is_finite() {
        return Err(FragError::Numerical("tail regression failed for every exponent".into()));
    }
    let (mut a, mut b) = (grid[best.saturating_sub(1)].ln(), grid[(best + 1).min(m)].ln());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (score(c.exp()), score(d.exp()));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = score(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = score(d.exp());
        }
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    let alpha = (0.5 * (a + b)).exp();
    let (ls, rms) = tail_fit_at(&xs, &lf, alpha)?;
    Ok(TailFit {
        alpha_hat: alpha,
        rate_hat: ls.coeffs[2],
        algebraic_exponent_hat: ls.coeffs[1],
        log_prefactor: ls.coeffs[0],
        rms,
        window: (xs[0], *xs.last().unwrap()),
        nodes: xs.len(),
    })
}

/// Resolved tail window: from where e^{−Φ} dominates the algebraic factor by e³ up to Φ_max − 10.
pub fn auto_tail_window(spec: &CoefficientSpec, f: &SizeDistribution) -> Result<(f64, f64)> {
    let alpha = spec.alpha();
    let phi_hi = spec.envelope_exponent(f.grid.x_max()) - 10.0;
    let hi = spec.envelope_inverse(phi_hi.max(0.0));
    let lo = f
        .nodes()
        .iter()
        .copied()
        .find(|&x| x >= 1.0 && spec.envelope_exponent(x) - (1.0 + alpha) * x.ln() >= 3.0)
        .ok_or_else(|| FragError::Domain("grid has no node where the exponential dominates".into()))?;
    if !(hi > lo) {
        return domain(format!("grid too short for a tail window: [{lo}, {hi}]"));
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailFitReport {
    pub alpha_hat: f64,
    pub rate_hat: f64,
    pub algebraic_exponent_hat: f64,
    pub window: (f64, f64),
    pub lower_bound_ok: bool,
    pub upper_bound_ok: bool,
    pub kappa_estimate: f64,
    pub mu_used: f64,
    pub rms: f64,
}

/// (α + χ − 1)/2 + 1/2.
pub fn default_mu(spec: &CoefficientSpec) -> f64 {
    mu_threshold(spec) + 0.5
}

pub fn mu_threshold(spec: &CoefficientSpec) -> f64 {
    0.5 * (spec.alpha() + spec.daughter.chi - 1.0)
}

/// Tail fit plus the two-sided envelope check on a distribution.
pub fn tail_fit(
    spec: &CoefficientSpec,
    f: &SizeDistribution,
    window: Option<(f64, f64)>,
    mu: Option<f64>,
) -> Result<TailFitReport> {
    let window = match window {
        Some(w) => w,
        None => auto_tail_window(spec, f)?,
    };
    let fit = tail_fit_samples(f.nodes(), &f.values, window)?;
    let mu = mu.unwrap_or_else(|| default_mu(spec));
    let bounds = tail_bounds_check(spec, f, mu)?;
    Ok(TailFitReport {
        alpha_hat: fit.alpha_hat,
        rate_hat: fit.rate_hat,
        algebraic_exponent_hat: fit.algebraic_exponent_hat,
        window: fit.window,
        lower_bound_ok: bounds.lower_ok,
        upper_bound_ok: bounds.upper_ok,
        kappa_estimate: bounds.kappa_estimate,
        mu_used: mu,
        rms: fit.rms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBounds {
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub kappa_estimate: f64,
    /// Largest relative shortfall below the lower envelope.
    pub lower_violation: f64,
    /// Growth of the running sup of the upper ratio over the last checked decade.
    pub upper_growth: f64,
    pub range: (f64, f64),
}

/// f(1) x^{−γ/4} e^{−Φ} <= f <= κ x^{1+α+μ} e^{−Φ} on resolved nodes x >= 1.
pub fn tail_bounds_check(spec: &CoefficientSpec, f: &SizeDistribution, mu: f64) -> Result<TailBounds> {
    if !spec.rate.is_power_law() {
        return precondition("tail bounds need a power-law rate");
    }
    let threshold = mu_threshold(spec);
    if !(mu > threshold) {
        return precondition(format!("mu must exceed (alpha + chi - 1)/2 = {threshold}, got {mu}"));
    }
    let gamma = spec.rate.gamma;
    let alpha = spec.alpha();
    let phi_hi = spec.envelope_exponent(f.grid.x_max()) - 10.0;
    let f1 = f.eval(1.0);
    let mut lower_violation: f64 = 0.0;
    let mut pts = Vec::new();
    for (&x, &v) in f.nodes().iter().zip(&f.values) {
        if x < 1.0 || spec.envelope_exponent(x) > phi_hi {
            continue;
        }
        let phi = spec.envelope_exponent(x);
        let lower = f1 * x.powf(-gamma / 4.0) * (-phi).exp();
        if lower > 0.0 {
            lower_violation = lower_violation.max((lower - v) / lower);
        }
        let upper_shape = x.powf(1.0 + alpha + mu) * (-phi).exp();
        pts.push((x, v / upper_shape));
    }
    if pts.len() < 2 {
        return domain("no resolved grid nodes at or beyond x = 1");
    }
    let kappa = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    let x_hi = pts.last().unwrap().0;
    let x_dec = (x_hi / 10.0).max(1.0);
    let mut running = 0.0f64;
    let mut at_decade = None;
    for &(x, r) in &pts {
        running = running.max(r);
        if x >= x_dec && at_decade.is_none() {
            at_decade = Some(running);
        }
    }
    let start = at_decade.unwrap_or(running);
    let upper_growth = if start > 0.0 { running / start - 1.0 } else { f64::INFINITY };
    Ok(TailBounds {
        lower_ok: lower_violation <= 1e-8,
        upper_ok: kappa.is_finite() && upper_growth < 0.01,
        kappa_estimate: kappa,
        lower_violation,
        upper_growth,
        range: (pts[0].0, x_hi),
    })
}

/// Small-size regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmallRegime {
    /// f ~ ℓ₀ z
    Linear,
    /// f ~ C z^p with p < 1
    Power,
    /// f ~ C z |ln z|
    ZLog,
    /// f ~ C (1 − ln z)^q
    LogPower,
    /// f ~ Λ₀ z ∫_z^1 H(y) y^{−2} dy
    GeneralH,
    Unclassified,
}

impl SmallRegime {
    pub fn name(self) -> &'static str {
        match self {
            SmallRegime::Linear => "linear",
            SmallRegime::Power => "power",
            SmallRegime::ZLog => "z_log",
            SmallRegime::LogPower => "log_power",
            SmallRegime::GeneralH => "general_h",
            SmallRegime::Unclassified => "unclassified",
        }
    }
}

impl fmt::Display for SmallRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallPrediction {
    pub regime: SmallRegime,
    /// ν+2 for the power regime, −θ for the log-power regime, 1 for linear.
    pub exponent: Option<f64>,
    /// Predicted prefactor divided by Λ₀ where the regime fixes it.
    pub prefactor_over_lambda0: Option<f64>,
    pub lambda: Option<f64>,
    pub n0: Option<f64>,
    pub reasons: Vec<String>,
}

fn n0_estimate(spec: &CoefficientSpec) -> Result<Integral> {
    match &spec.daughter.variant {
        Daughter::General { .. } => {
            let mut sup: f64 = 0.0;
            for k in 0..33 {
                let y = 10f64.powf(-4.0 + 8.0 * k as f64 / 32.0);
                match inner_moment(spec, 0.0, y)? {
                    Integral::Finite(v) => sup = sup.max(v),
                    Integral::Divergent => return Ok(Integral::Divergent),
                }
            }
            Ok(Integral::Finite(sup))
        }
        _ => profile_moment(spec, 0.0),
    }
}

/// Regime predicted from the coefficients alone.
pub fn small_classify(spec: &CoefficientSpec) -> SmallPrediction {
    let mut reasons = Vec::new();
    let n0 = match n0_estimate(spec) {
        Ok(v) => v,
        Err(e) => {
            reasons.push(format!("N0 not computable: {e}"));
            return SmallPrediction {
                regime: SmallRegime::Unclassified,
                exponent: None,
                prefactor_over_lambda0: None,
                lambda: None,
                n0: None,
                reasons,
            };
        }
    };
    if let Integral::Finite(v) = n0 {
        reasons.push(format!("N0 = {v:.6} is finite"));
        return SmallPrediction {
            regime: SmallRegime::Linear,
            exponent: Some(1.0),
            prefactor_over_lambda0: None,
            lambda: None,
            n0: Some(v),
            reasons,
        };
    }
    reasons.push("N0 diverges".into());
    let lambda = match &spec.daughter.variant {
        Daughter::PowerLaw { nu } => Some(-(nu + 2.0)),
        Daughter::SelfSimilar { lambda, .. } => *lambda,
        Daughter::General { .. } => None,
    };
    let Some(lambda) = lambda else {
        reasons.push("no lambda available for the regularly varying regime".into());
        return SmallPrediction {
            regime: SmallRegime::Unclassified,
            exponent: None,
            prefactor_over_lambda0: None,
            lambda: None,
            n0: None,
            reasons,
        };
    };
    let b4 = b4_check(spec, lambda);
    if !b4.passed {
        reasons.push(format!("B4 check fails: {}", b4.detail));
        return SmallPrediction {
            regime: SmallRegime::Unclassified,
            exponent: None,
            prefactor_over_lambda0: None,
            lambda: Some(lambda),
            n0: None,
            reasons,
        };
    }
    reasons.push(format!("B4 holds with lambda = {lambda}"));
    let (regime, exponent, pre) = match &spec.daughter.variant {
        Daughter::PowerLaw { nu } if *nu == -1.0 => (SmallRegime::ZLog, Some(1.0), Some(1.0)),
        Daughter::PowerLaw { nu } => (SmallRegime::Power, Some(nu + 2.0), Some(1.0 / (nu + 1.0).abs())),
        Daughter::SelfSimilar { profile: Profile::LogPower { theta }, .. } => {
            (SmallRegime::LogPower, Some(-theta), Some(1.0))
        }
        _ => (SmallRegime::GeneralH, None, None),
    };
    SmallPrediction { regime, exponent, prefactor_over_lambda0: pre, lambda: Some(lambda), n0: None, reasons }
}

/// z ∫_z^1 H(y) y^{−2} dy.
pub fn general_h_shape(spec: &CoefficientSpec, z: f64) -> Result<f64> {
    if !(z > 0.0 && z < 1.0) {
        return domain(format!("shape needs z in (0, 1), got {z}"));
    }
    let span = -z.ln();
    // y = e^{−s}: ∫_0^S H(e^{−s}) e^{s} ds, scaled by z = e^{−S}
    let g = |s: f64| h_cumulative(spec, (-s).exp()).unwrap_or(0.0) * (s - span).exp();
    Ok(gauss_kronrod(g, 0.0, span, 1e-300, 1e-12)?.value)
}

/// ℓ₀ = ∫ a f ∫_0^y (1/x − 1/y) x b dx dy.
pub fn ell0_estimate(spec: &CoefficientSpec, f: &SizeDistribution) -> Result<f64> {
    let x = f.nodes();
    let af: Vec<f64> = x.iter().zip(&f.values).map(|(&y, v)| spec.rate.eval(y) * v).collect();
    match &spec.daughter.variant {
        Daughter::General { .. } => {
            let mut g = vec![0.0; x.len()];
            for (i, &y) in x.iter().enumerate() {
                if af[i] == 0.0 {
                    continue;
                }
                let n = inner_moment(spec, 0.0, y)?
                    .finite()
                    .ok_or_else(|| FragError::Precondition("N0 diverges: not in the linear regime".into()))?;
                g[i] = af[i] * (n - 1.0);
            }
            Ok(f.grid.integrate(&g))
        }
        _ => {
            let n0 = n0_estimate(spec)?
                .finite()
                .ok_or_else(|| FragError::Precondition("N0 diverges: not in the linear regime".into()))?;
            Ok((n0 - 1.0) * f.grid.integrate(&af))
        }
    }
}

/// Λ₀ = ∫ y^{1+λ} a f.
pub fn lambda0_estimate(spec: &CoefficientSpec, f: &SizeDistribution, lambda: f64) -> Result<f64> {
    if !(-1.0..=0.0).contains(&lambda) {
        return domain(format!("lambda must lie in [-1, 0], got {lambda}"));
    }
    let g: Vec<f64> = f
        .nodes()
        .iter()
        .zip(&f.values)
        .map(|(&y, v)| y.powf(1.0 + lambda) * spec.rate.eval(y) * v)
        .collect();
    Ok(f.grid.integrate(&g))
}

/// Candidate small-size models, in order of preference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmallModel {
    Linear,
    Power,
    ZLog,
    LogPower,
}

impl SmallModel {
    fn regime(self) -> SmallRegime {
        match self {
            SmallModel::Linear => SmallRegime::Linear,
            SmallModel::Power => SmallRegime::Power,
            SmallModel::ZLog => SmallRegime::ZLog,
            SmallModel::LogPower => SmallRegime::LogPower,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelFit {
    pub model: SmallModel,
    /// Exponent: 1 (linear, z log), p (power), q (log power).
    pub exponent: f64,
    /// ℓ (linear), C (power, log power), A of z(A|ln z| + B) (z log).
    pub prefactor: f64,
    /// B of z(A|ln z| + B); zero otherwise.
    pub offset: f64,
    /// rms of ln f − ln model.
    pub rms: f64,
}

impl ModelFit {
    pub fn eval(&self, z: f64) -> f64 {
        match self.model {
            SmallModel::Linear => self.prefactor * z,
            SmallModel::Power => self.prefactor * z.powf(self.exponent),
            SmallModel::ZLog => z * (self.prefactor * z.ln().abs() + self.offset),
            SmallModel::LogPower => self.prefactor * (1.0 - z.ln()).powf(self.exponent),
        }
    }

    /// ∫_0^{x1} x^m (model) dx.
    pub fn integral_below(&self, m: f64, x1: f64) -> Integral {
        match self.model {
            SmallModel::Linear => power_integral(self.prefactor, m + 1.0, x1),
            SmallModel::Power => power_integral(self.prefactor, m + self.exponent, x1),
            SmallModel::ZLog => {
                let k = m + 2.0;
                if k <= 0.0 {
                    return Integral::Divergent;
                }
                let xk = x1.powf(k);
                let log_part = xk * (-x1.ln() / k + 1.0 / (k * k));
                Integral::Finite(self.prefactor * log_part + self.offset * xk / k)
            }
            SmallModel::LogPower => {
                let s1 = -x1.ln();
                let q = self.exponent;
                if m < -1.0 {
                    Integral::Divergent
                } else if m == -1.0 {
                    if q < -1.0 {
                        Integral::Finite(self.prefactor * (1.0 + s1).powf(q + 1.0) / (-q - 1.0))
                    } else {
                        Integral::Divergent
                    }
                } else {
                    let c = self.prefactor;
                    gauss_kronrod_to_infinity(
                        |t| c * (-(m + 1.0) * (s1 + t)).exp() * (1.0 + s1 + t).powf(q),
                        0.0,
                        1e-300,
                        1e-10,
                    )
                    .map(|r| Integral::Finite(r.value))
                    .unwrap_or(Integral::Divergent)
                }
            }
        }
    }
}

fn power_integral(c: f64, p: f64, x1: f64) -> Integral {
    // ∫_0^{x1} c x^p dx
    if p > -1.0 {
        Integral::Finite(c * x1.powf(p + 1.0) / (p + 1.0))
    } else {
        Integral::Divergent
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallSizeReport {
    pub regime: SmallRegime,
    pub fitted_exponent: f64,
    pub prefactor_hat: f64,
    pub best: Option<ModelFit>,
    pub fits: Vec<ModelFit>,
    pub window: (f64, f64),
    pub nodes: usize,
    pub ell0: Option<f64>,
    pub lambda0: Option<f64>,
    pub lambda: Option<f64>,
}

const RMS_FLOOR: f64 = 1e-7;
const DOMINANCE: f64 = 1.1;
const LINEAR_EXPONENT_SLACK: f64 = 0.02;

fn fit_models(z: &[f64], f: &[f64]) -> Vec<ModelFit> {
    let n = z.len() as f64;
    let lz: Vec<f64> = z.iter().map(|v| v.ln()).collect();
    let lf: Vec<f64> = f.iter().map(|v| v.ln()).collect();
    let mut out = Vec::new();

    let mean_ratio = lz.iter().zip(&lf).map(|(a, b)| b - a).sum::<f64>() / n;
    let rms = (lz.iter().zip(&lf).map(|(a, b)| (b - a - mean_ratio).powi(2)).sum::<f64>() / n).sqrt();
    out.push(ModelFit { model: SmallModel::Linear, exponent: 1.0, prefactor: mean_ratio.exp(), offset: 0.0, rms });

    let ones = vec![1.0; z.len()];
    if let Ok(ls) = least_squares(&[ones.clone(), lz.clone()], &lf) {
        out.push(ModelFit {
            model: SmallModel::Power,
            exponent: ls.coeffs[1],
            prefactor: ls.coeffs[0].exp(),
            offset: 0.0,
            rms: ls.rms,
        });
    }

    let absl: Vec<f64> = lz.iter().map(|v| v.abs()).collect();
    let ratio: Vec<f64> = z.iter().zip(f).map(|(a, b)| b / a).collect();
    let weights: Vec<f64> = ratio.iter().map(|r| 1.0 / r).collect();
    let wa: Vec<f64> = absl.iter().zip(&weights).map(|(a, w)| a * w).collect();
    let wr: Vec<f64> = ratio.iter().zip(&weights).map(|(a, w)| a * w).collect();
    if let Ok(ls) = least_squares(&[wa, weights.clone()], &wr) {
        let (a, b) = (ls.coeffs[0], ls.coeffs[1]);
        let mut sq = 0.0;
        let mut ok = a > 0.0;
        for (i, r) in ratio.iter().enumerate() {
            let m = a * absl[i] + b;
            if m <= 0.0 {
                ok = false;
                break;
            }
            sq += (r.ln() - m.ln()).powi(2);
        }
        if ok {
            out.push(ModelFit { model: SmallModel::ZLog, exponent: 1.0, prefactor: a, offset: b, rms: (sq / n).sqrt() });
        }
    }

    let ll: Vec<f64> = lz.iter().map(|v| (1.0 - v).ln()).collect();
    if let Ok(ls) = least_squares(&[ones, ll], &lf) {
        out.push(ModelFit {
            model: SmallModel::LogPower,
            exponent: ls.coeffs[1],
            prefactor: ls.coeffs[0].exp(),
            offset: 0.0,
            rms: ls.rms,
        });
    }
    out
}

/// Regime a fitted model stands for, collapsing nested models onto the linear law.
fn effective_regime(fit: &ModelFit, mid_log: f64) -> SmallRegime {
    match fit.model {
        SmallModel::Power if (fit.exponent - 1.0).abs() <= LINEAR_EXPONENT_SLACK => SmallRegime::Linear,
        SmallModel::ZLog if fit.prefactor * mid_log <= LINEAR_EXPONENT_SLACK * fit.offset.abs() => {
            SmallRegime::Linear
        }
        m => m.regime(),
    }
}

/// Small-size fit of raw samples inside the window.
pub fn small_fit_samples(x: &[f64], f: &[f64], window: (f64, f64)) -> Result<SmallSizeReport> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return domain(format!("small-size window must satisfy 0 < lo < hi, got [{lo}, {hi}]"));
    }
    let mut z = Vec::new();
    let mut v = Vec::new();
    for (&xi, &fi) in x.iter().zip(f) {
        if xi >= lo && xi <= hi {
            if !(fi > 0.0) {
                return domain(format!("f is not positive at x = {xi} inside the small-size window"));
            }
            z.push(xi);
            v.push(fi);
        }
    }
    if z.len() < 15 {
        return domain(format!("small-size window holds {} nodes, at least 15 are needed", z.len()));
    }
    let fits = fit_models(&z, &v);
    let mid_log = 0.5 * (z[0].ln().abs() + z.last().unwrap().ln().abs());
    let score = |m: &ModelFit| m.rms.max(RMS_FLOOR);
    let best = fits.iter().min_by(|a, b| score(a).total_cmp(&score(b))).copied();
    let mut regime = SmallRegime::Unclassified;
    let mut chosen = None;
    if let Some(b) = best {
        let tied: Vec<&ModelFit> = fits.iter().filter(|m| score(m) <= DOMINANCE * score(&b)).collect();
        let regimes: Vec<SmallRegime> = tied.iter().map(|m| effective_regime(m, mid_log)).collect();
        if regimes.iter().all(|r| *r == regimes[0]) {
            regime = regimes[0];
            chosen = if regime == SmallRegime::Linear {
                fits.iter().find(|m| m.model == SmallModel::Linear).copied()
            } else {
                tied.iter().find(|m| effective_regime(m, mid_log) == regime).map(|m| **m)
            };
        }
    }
    let (fitted_exponent, prefactor_hat) = match chosen {
        Some(m) => (m.exponent, m.prefactor),
        None => (f64::NAN, f64::NAN),
    };
    Ok(SmallSizeReport {
        regime,
        fitted_exponent,
        prefactor_hat,
        best: chosen,
        fits,
        window: (z[0], *z.last().unwrap()),
        nodes: z.len(),
        ell0: None,
        lambda0: None,
        lambda: None,
    })
}

pub const DEFAULT_SMALL_WINDOW: (f64, f64) = (1e-20, 1e-8);

pub fn small_fit(f: &SizeDistribution, window: Option<(f64, f64)>) -> Result<SmallSizeReport> {
    small_fit_samples(f.nodes(), &f.values, window.unwrap_or(DEFAULT_SMALL_WINDOW))
}

/// Small-size fit together with the prediction-dependent constants ℓ₀ or Λ₀.
pub fn small_size_report(
    spec: &CoefficientSpec,
    f: &SizeDistribution,
    window: Option<(f64, f64)>,
) -> Result<SmallSizeReport> {
    let mut rep = small_fit(f, window)?;
    let pred = small_classify(spec);
    match pred.regime {
        SmallRegime::Linear => rep.ell0 = Some(ell0_estimate(spec, f)?),
        SmallRegime::Unclassified => {}
        _ => {
            if let Some(l) = pred.lambda {
                rep.lambda = Some(l);
                rep.lambda0 = Some(lambda0_estimate(spec, f, l)?);
            }
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Member,
    NonMember,
    Undecided,
}

impl Membership {
    pub fn name(self) -> &'static str {
        match self {
            Membership::Member => "member",
            Membership::NonMember => "non_member",
            Membership::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipReport {
    pub m: f64,
    pub verdict: Membership,
    pub n_m: Option<f64>,
    /// m(1−m) M_{m−2}(f)
    pub lhs: Option<f64>,
    /// ∫ a f ∫ x (x^{m−1} − y^{m−1}) b
    pub rhs: Option<f64>,
    /// z^{m−1} f(z) at z = 1e-8, 1e-14, 1e-20
    pub decay: [f64; 3],
    pub reason: String,
}

/// Decides whether f has a finite moment of order m − 2.
pub fn x_membership(spec: &CoefficientSpec, f: &SizeDistribution, m: f64) -> Result<MembershipReport> {
    if !(m > 0.0 && m < 1.0) {
        return domain(format!("membership order must lie in (0, 1), got {m}"));
    }
    let zs: [f64; 3] = [1e-8, 1e-14, 1e-20];
    let decay = zs.map(|z| z.powf(m - 1.0) * f.eval(z));
    let n_m = match &spec.daughter.variant {
        Daughter::General { .. } => {
            let mut sup: f64 = 0.0;
            let mut div = false;
            for k in 0..33 {
                let y = 10f64.powf(-4.0 + 8.0 * k as f64 / 32.0);
                match inner_moment(spec, m, y)? {
                    Integral::Finite(v) => sup = sup.max(v / y.powf(m)),
                    Integral::Divergent => div = true,
                }
            }
            if div {
                Integral::Divergent
            } else {
                Integral::Finite(sup)
            }
        }
        _ => profile_moment(spec, m)?,
    };
    let Integral::Finite(n_m) = n_m else {
        return Ok(MembershipReport {
            m,
            verdict: Membership::NonMember,
            n_m: None,
            lhs: None,
            rhs: None,
            decay,
            reason: "inner moment of order m diverges on every sampled y".into(),
        });
    };
    let moment = crate::diagnostics::moment(f, m - 2.0);
    let x = f.nodes();
    let mut g = vec![0.0; x.len()];
    for (i, &y) in x.iter().enumerate() {
        let af = spec.rate.eval(y) * f.values[i];
        if af == 0.0 {
            continue;
        }
        let inner = inner_moment(spec, m, y)?.finite().unwrap_or(f64::NAN);
        g[i] = af * (inner - y.powf(m));
    }
    let rhs = f.grid.integrate(&g);
    let decreasing = decay[0] > decay[1] && decay[1] > decay[2];
    let (verdict, lhs, reason) = match moment.verdict {
        crate::diagnostics::Verdict::Divergent => {
            (Membership::Undecided, None, "N_m is finite but the moment looks divergent".to_string())
        }
        crate::diagnostics::Verdict::Convergent => {
            let lhs = m * (1.0 - m) * moment.value;
            let rel = (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE);
            if decreasing && rel <= 1e-2 {
                (Membership::Member, Some(lhs), format!("identity holds to {rel:.2e}"))
            } else {
                (
                    Membership::Undecided,
                    Some(lhs),
                    format!("identity mismatch {rel:.2e}, decay toward zero: {decreasing}"),
                )
            }
        }
    };
    Ok(MembershipReport { m, verdict, n_m: Some(n_m), lhs, rhs: Some(rhs), decay, reason })
}
