//! The explicit stationary solution for a = 𝔞 x^γ and b = (ν+2) x^ν / y^{ν+1}.

use crate::error::{domain, FragError, Result};
use crate::quadrature::{gauss_kronrod, tanh_sinh};
use crate::special::{bessel_k_scaled, gamma_fn};

/// f(z) = c √𝔞 z^{(ν+3)/2} K_ρ(q z^α), q = 2√𝔞/(γ+2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormSolution {
    pub amplitude: f64,
    pub gamma: f64,
    pub nu: f64,
    pub alpha: f64,
    pub order: f64,
    pub c: f64,
}

fn check_params(amplitude: f64, gamma: f64, nu: f64) -> Result<()> {
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return domain(format!("amplitude must be positive, got {amplitude}"));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return domain(format!("gamma must be non-negative, got {gamma}"));
    }
    if !(nu > -2.0 && nu <= 0.0) {
        return domain(format!("nu must lie in (-2, 0], got {nu}"));
    }
    Ok(())
}

impl ClosedFormSolution {
    /// The solution with an explicit prefactor c.
    pub fn with_constant(amplitude: f64, gamma: f64, nu: f64, c: f64) -> Result<Self> {
        check_params(amplitude, gamma, nu)?;
        if !(c > 0.0 && c.is_finite()) {
            return domain(format!("normalization constant must be positive, got {c}"));
        }
        Ok(ClosedFormSolution {
            amplitude,
            gamma,
            nu,
            alpha: 0.5 * (gamma + 2.0),
            order: (nu + 1.0).abs() / (gamma + 2.0),
            c,
        })
    }

    fn q(&self) -> f64 {
        2.0 * self.amplitude.sqrt() / (self.gamma + 2.0)
    }

    /// ln f(z), finite even where f underflows.
    pub fn ln_eval(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) || !z.is_finite() {
            return domain(format!("closed form needs a finite positive size, got {z}"));
        }
        let w = self.q() * z.powf(self.alpha);
        let ks = bessel_k_scaled(self.order, w)?;
        Ok(self.c.ln() + 0.5 * self.amplitude.ln() + 0.5 * (self.nu + 3.0) * z.ln() + ks.ln() - w)
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        Ok(self.ln_eval(z)?.exp())
    }

    /// Leading small-size term.
    pub fn small_size_asymptote(&self, z: f64) -> f64 {
        let sa = self.amplitude.sqrt();
        let g2 = self.gamma + 2.0;
        if self.nu == -1.0 {
            return -self.c * sa * 0.5 * g2 * z * z.ln();
        }
        let rho = self.order;
        let pre = 0.5 * self.c * sa * gamma_fn(rho).unwrap_or(f64::NAN) * (g2 / sa).powf(rho);
        if self.nu > -1.0 {
            pre * z
        } else {
            pre * z.powf(self.nu + 2.0)
        }
    }

    /// Leading large-size term.
    pub fn large_size_asymptote(&self, z: f64) -> f64 {
        let sa = self.amplitude.sqrt();
        let g2 = self.gamma + 2.0;
        self.c * 0.5 * (sa * std::f64::consts::PI * g2).sqrt()
            * z.powf((4.0 + 2.0 * self.nu - self.gamma) / 4.0)
            * (-2.0 * sa * z.powf(0.5 * g2) / g2).exp()
    }

    /// Size beyond which the large-size envelope (with c = 1) drops below `level`.
    pub fn truncation_point(&self, level: f64) -> f64 {
        let unit = ClosedFormSolution { c: 1.0, ..*self };
        let mut z = 1.0;
        while unit.large_size_asymptote(z) >= level || z < 1.0 {
            z *= 1.25;
        }
        let (mut lo, mut hi) = (z / 1.25, z);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if unit.large_size_asymptote(mid) >= level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// ∫ z^k f(z) dz over the truncated range, using the given rule.
    pub fn moment(&self, k: f64, rule: MomentRule, tol: f64) -> Result<f64> {
        let upper = self.truncation_point(1e-16 * self.peak_scale());
        let g = |z: f64| {
            if z <= 0.0 {
                return 0.0;
            }
            z.powf(k) * self.eval(z).unwrap_or(0.0)
        };
        let breaks = [0.0, 1e-6, 1e-3, 0.1, 1.0, upper];
        let mut total = 0.0;
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1].min(upper));
            if b <= a {
                continue;
            }
            total += match rule {
                MomentRule::GaussKronrod => gauss_kronrod(g, a, b, 0.0, tol)?.value,
                MomentRule::TanhSinh => tanh_sinh(g, a, b, tol)?.value,
            };
        }
        Ok(total)
    }

    fn peak_scale(&self) -> f64 {
        let unit = ClosedFormSolution { c: 1.0, ..*self };
        let zs = (0..40).map(|k| 10f64.powf(-2.0 + 3.0 * k as f64 / 39.0));
        zs.map(|z| unit.eval(z).unwrap_or(0.0)).fold(0.0, f64::max)
            .max(1e-300)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentRule {
    GaussKronrod,
    TanhSinh,
}

/// The solution scaled so that M₁ = 1.
pub fn normalize(amplitude: f64, gamma: f64, nu: f64, quadrature_tol: f64) -> Result<ClosedFormSolution> {
    if !(quadrature_tol > 0.0 && quadrature_tol < 1.0) {
        return domain(format!("quadrature tolerance must lie in (0, 1), got {quadrature_tol}"));
    }
    let unit = ClosedFormSolution::with_constant(amplitude, gamma, nu, 1.0)?;
    let m1 = unit
        .moment(1.0, MomentRule::GaussKronrod, quadrature_tol.min(1e-10))
        .map_err(|e| FragError::Numerical(format!("normalization quadrature failed: {e}")))?;
    if !(m1 > 0.0 && m1.is_finite()) {
        return Err(FragError::Numerical(format!("first moment is not positive: {m1}")));
    }
    ClosedFormSolution::with_constant(amplitude, gamma, nu, 1.0 / m1)
}

pub fn closed_form_eval(sol: &ClosedFormSolution, z: f64) -> Result<f64> {
    sol.eval(z)
}

/// n points on [lo, hi], uniform in t = ln z + z: geometric near zero, uniform for large z.
pub fn graded_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || n < 3 {
        return domain("graded grid needs 0 < lo < hi and at least three points");
    }
    let t = |z: f64| z.ln() + z;
    let (t0, t1) = (t(lo), t(hi));
    let mut out = Vec::with_capacity(n);
    let mut z = lo;
    for i in 0..n {
        let target = t0 + (t1 - t0) * i as f64 / (n - 1) as f64;
        for _ in 0..60 {
            let step = (t(z) - target) / (1.0 / z + 1.0);
            z = (z - step).max(0.5 * z);
            if step.abs() <= 1e-15 * z {
                break;
            }
        }
        out.push(z);
    }
    out[0] = lo;
    out[n - 1] = hi;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PTransformReport {
    /// sup_i |zP″ − (γ−ν)P′ − 𝔞 z^{γ+1} P| / (|zP″| + |(γ−ν)P′| + |𝔞 z^{γ+1} P|)
    pub transform_residual: f64,
    /// sup_i |f + z^{1+ν−γ} P′| / f
    pub identity_residual: f64,
    pub interior_points: usize,
    pub warnings: Vec<String>,
}

/// P-transform check for the closed-form solution.
pub fn p_transform_check(sol: &ClosedFormSolution, grid: &[f64]) -> Result<PTransformReport> {
    p_transform_check_with(|z| sol.eval(z).unwrap_or(0.0), sol.amplitude, sol.gamma, sol.nu, grid)
}

/// P-transform check for an arbitrary candidate profile f.
pub fn p_transform_check_with<F: Fn(f64) -> f64>(
    f: F,
    amplitude: f64,
    gamma: f64,
    nu: f64,
    grid: &[f64],
) -> Result<PTransformReport> {
    check_params(amplitude, gamma, nu)?;
    let n = grid.len();
    if n < 3 {
        return domain("P-transform check needs at least three grid points");
    }
    if grid[0] <= 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("P-transform grid must be positive and strictly increasing");
    }
    let mut warnings = Vec::new();
    let max_ratio = grid
        .windows(3)
        .map(|w| {
            let r = (w[2] - w[1]) / (w[1] - w[0]);
            r.max(1.0 / r)
        })
        .fold(1.0, f64::max);
    if max_ratio > 1.5 {
        warnings.push(format!("adjacent spacing ratio {max_ratio:.3} exceeds 1.5"));
    }
    let max_rel_step = grid.windows(2).map(|w| (w[1] - w[0]) / w[0]).fold(0.0, f64::max);
    if max_rel_step > 0.1 {
        warnings.push(format!("relative step {max_rel_step:.3} too coarse for stable differentiation"));
    }

    let s = gamma - nu - 1.0;
    let g = |y: f64| y.powf(s) * f(y);
    let alpha = 0.5 * (gamma + 2.0);
    let sa = amplitude.sqrt();
    let last = grid[n - 1];
    let phi_last = sa * last.powf(alpha) / alpha;
    let cut = ((phi_last + 45.0) * alpha / sa).powf(1.0 / alpha);
    let mut p = vec![0.0; n];
    p[n - 1] = gauss_kronrod(g, last, cut, 0.0, 1e-14)?.value;
    for i in (0..n - 1).rev() {
        p[i] = p[i + 1] + gauss_kronrod(g, grid[i], grid[i + 1], 0.0, 1e-14)?.value;
    }

    let mut transform_residual: f64 = 0.0;
    let mut identity_residual: f64 = 0.0;
    for i in 1..n - 1 {
        let (hm, hp) = (grid[i] - grid[i - 1], grid[i + 1] - grid[i]);
        let z = grid[i];
        let d1 = -hp / (hm * (hm + hp)) * p[i - 1] + (hp - hm) / (hm * hp) * p[i]
            + hm / (hp * (hm + hp)) * p[i + 1];
        let d2 = 2.0 * (p[i + 1] / hp - p[i] * (1.0 / hm + 1.0 / hp) + p[i - 1] / hm) / (hm + hp);
        let t1 = z * d2;
        let t2 = (gamma - nu) * d1;
        let t3 = amplitude * z.powf(gamma + 1.0) * p[i];
        let scale = t1.abs() + t2.abs() + t3.abs();
        if scale > 0.0 {
            transform_residual = transform_residual.max((t1 - t2 - t3).abs() / scale);
        }
        let fz = f(z);
        let recon = -z.powf(1.0 + nu - gamma) * d1;
        if fz > 0.0 {
            identity_residual = identity_residual.max((fz - recon).abs() / fz);
        }
    }
    Ok(PTransformReport { transform_residual, identity_residual, interior_points: n - 2, warnings })
}
