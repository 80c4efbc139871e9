//! Gamma function and modified Bessel functions of the second kind of real order.

use std::f64::consts::PI;

use crate::error::{domain, numerical, FragError, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Taylor coefficients of 1/Γ(1+x) about x = 0.
const RGAMMA_TAYLOR: [f64; 29] = [
    1.0,
    0.577_215_664_901_532_860_6,
    -0.655_878_071_520_253_881_1,
    -0.042_002_635_034_095_235_53,
    0.166_538_611_382_291_489_5,
    -0.042_197_734_555_544_336_75,
    -0.009_621_971_527_876_973_562,
    0.007_218_943_246_663_099_542,
    -0.001_165_167_591_859_065_112,
    -0.000_215_241_674_114_950_972_8,
    0.000_128_050_282_388_116_186_2,
    -0.000_020_134_854_780_788_238_66,
    -0.000_001_250_493_482_142_670_657,
    0.000_001_133_027_231_981_695_882,
    -2.056_338_416_977_607_103e-7,
    6.116_095_104_481_415_818e-9,
    5.002_007_644_469_222_930e-9,
    -1.181_274_570_487_020_145e-9,
    1.043_426_711_691_100_510e-10,
    7.782_263_439_905_071_254e-12,
    -3.696_805_618_642_205_708e-12,
    5.100_370_287_454_475_979e-13,
    -2.058_326_053_566_506_783e-14,
    -5.348_122_539_423_017_982e-15,
    1.226_778_628_238_260_790e-15,
    -1.181_259_301_697_458_770e-16,
    1.186_692_254_751_600_333e-18,
    1.412_380_655_318_031_782e-18,
    -2.298_745_684_435_370_207e-19,
];

/// Γ(x) for x > 0.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return domain(format!("gamma_fn requires a finite positive argument, got {x}"));
    }
    if x > 171.6 {
        return numerical(format!("gamma_fn({x}) overflows"));
    }
    if x.fract() == 0.0 && x <= 23.0 {
        return Ok((1..x as u64).map(|k| k as f64).product());
    }
    Ok(gamma_unchecked(x))
}

fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma_unchecked(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    let half = t.powf(0.5 * (x + 0.5));
    (2.0 * PI).sqrt() * half * ((-t).exp() * half) * acc
}

/// Regime thresholds and tolerance for the Bessel-K evaluator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselEvalConfig {
    pub series_cutoff: f64,
    pub asymptotic_cutoff: f64,
    pub target_rel_tol: f64,
}

impl Default for BesselEvalConfig {
    fn default() -> Self {
        BesselEvalConfig {
            series_cutoff: 2.0,
            asymptotic_cutoff: 20.0,
            target_rel_tol: 1e-15,
        }
    }
}

impl BesselEvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.series_cutoff > 0.0 && self.series_cutoff.is_finite()) {
            return domain("series_cutoff must be positive");
        }
        if !(self.asymptotic_cutoff > self.series_cutoff && self.asymptotic_cutoff.is_finite()) {
            return domain("asymptotic_cutoff must exceed series_cutoff");
        }
        if !(self.target_rel_tol > 0.0 && self.target_rel_tol <= 1e-6) {
            return domain("target_rel_tol must lie in (0, 1e-6]");
        }
        Ok(())
    }
}

/// K_ρ(z). Negative orders are accepted through K_{-ρ} = K_ρ.
pub fn bessel_k(rho: f64, z: f64) -> Result<f64> {
    bessel_k_with(&BesselEvalConfig::default(), rho, z)
}

pub fn bessel_k_with(cfg: &BesselEvalConfig, rho: f64, z: f64) -> Result<f64> {
    let scaled = bessel_k_scaled_with(cfg, rho, z)?;
    let v = scaled * (-z).exp();
    if !(v >= f64::MIN_POSITIVE) {
        return numerical(format!("K_{rho}({z}) underflows"));
    }
    Ok(v)
}

/// e^z K_ρ(z), finite for large z where K_ρ itself underflows.
pub fn bessel_k_scaled(rho: f64, z: f64) -> Result<f64> {
    bessel_k_scaled_with(&BesselEvalConfig::default(), rho, z)
}

pub fn bessel_k_scaled_with(cfg: &BesselEvalConfig, rho: f64, z: f64) -> Result<f64> {
    cfg.validate()?;
    if !rho.is_finite() {
        return domain(format!("Bessel order must be finite, got {rho}"));
    }
    if !z.is_finite() || z <= 0.0 {
        return domain(format!("Bessel argument must be finite and positive, got {z}"));
    }
    let rho = rho.abs();
    let v = if z <= cfg.series_cutoff {
        temme(rho, z, cfg.target_rel_tol)? * z.exp()
    } else if z >= cfg.asymptotic_cutoff {
        asymptotic_scaled(rho, z, cfg.target_rel_tol)?
    } else {
        integral_scaled(rho, z, cfg.target_rel_tol)?
    };
    if !v.is_finite() || v <= 0.0 {
        return Err(FragError::Numerical(format!(
            "K_{rho}({z}) is not representable (got {v})"
        )));
    }
    Ok(v)
}

/// d/dz (z^ρ K_ρ(z)) = −z^ρ K_{ρ−1}(z).
pub fn bessel_k_weighted_derivative(rho: f64, z: f64) -> Result<f64> {
    if !rho.is_finite() || rho < 0.0 {
        return domain(format!("order must be non-negative, got {rho}"));
    }
    let k = bessel_k(rho - 1.0, z)?;
    let v = -z.powf(rho) * k;
    if !v.is_finite() {
        return numerical(format!("z^rho K_(rho-1) overflows at rho={rho}, z={z}"));
    }
    Ok(v)
}

fn rgamma_parts(mu: f64) -> (f64, f64, f64, f64) {
    // gam1 = (1/Γ(1−μ) − 1/Γ(1+μ)) / (2μ), gam2 = (1/Γ(1−μ) + 1/Γ(1+μ)) / 2
    let mut even = 0.0;
    let mut odd = 0.0;
    let mu2 = mu * mu;
    for k in (0..RGAMMA_TAYLOR.len()).rev() {
        if k % 2 == 0 {
            even = even * mu2 + RGAMMA_TAYLOR[k];
        } else {
            odd = odd * mu2 + RGAMMA_TAYLOR[k];
        }
    }
    // here even = Σ c_{2j} μ^{2j}, odd = Σ c_{2j+1} μ^{2j}
    let gampl = even + mu * odd;
    let gammi = even - mu * odd;
    (-odd, even, gampl, gammi)
}

fn temme(rho: f64, x: f64, tol: f64) -> Result<f64> {
    let nl = rho.round();
    let mu = rho - nl;
    let nl = nl as usize;
    let x2 = 0.5 * x;
    let pimu = PI * mu;
    let fact = if pimu.abs() < 1e-4 {
        1.0 + pimu * pimu / 6.0
    } else {
        pimu / pimu.sin()
    };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < 1e-4 {
        1.0 + e * e / 6.0
    } else {
        e.sinh() / e
    };
    let (gam1, gam2, gampl, gammi) = rgamma_parts(mu);
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let ee = e.exp();
    let mut p = 0.5 * ee / gampl;
    let mut q = 0.5 / (ee * gammi);
    let mut c = 1.0;
    let dd = x2 * x2;
    let mut sum1 = p;
    let mut converged = false;
    for i in 1..500 {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu * mu);
        c *= dd / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        let del1 = c * (p - fi * ff);
        sum1 += del1;
        if del.abs() < sum.abs() * tol && del1.abs() < sum1.abs() * tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(FragError::Convergence {
            iterations: 500,
            last_change: f64::NAN,
            context: format!("small-argument Bessel series for rho={rho}, z={x}"),
        });
    }
    let mut kmu = sum;
    let mut k1 = sum1 * 2.0 / x;
    for i in 1..=nl {
        let next = (mu + i as f64) * (2.0 / x) * k1 + kmu;
        kmu = k1;
        k1 = next;
        if !kmu.is_finite() {
            return numerical(format!("upward recurrence overflows for rho={rho}, z={x}"));
        }
    }
    Ok(kmu)
}

fn asymptotic_scaled(rho: f64, z: f64, tol: f64) -> Result<f64> {
    let four_rho2 = 4.0 * rho * rho;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        let next = term * (four_rho2 - odd * odd) / (8.0 * k as f64 * z);
        if next == 0.0 {
            prev = 0.0;
            break;
        }
        if next.abs() >= prev {
            break;
        }
        sum += next;
        prev = next.abs();
        term = next;
        if next.abs() <= tol * sum.abs() {
            break;
        }
    }
    if prev.is_finite() && prev > 1e-12 * sum.abs() {
        return numerical(format!(
            "large-argument Bessel series stalls at relative size {:.2e} for rho={rho}, z={z}",
            prev / sum.abs()
        ));
    }
    Ok((PI / (2.0 * z)).sqrt() * sum)
}

fn integral_scaled(rho: f64, z: f64, tol: f64) -> Result<f64> {
    // e^z K_ρ(z) = ∫_0^∞ exp(−z(cosh t − 1)) cosh(ρ t) dt
    let g = |t: f64| (-z * (t.cosh() - 1.0)).exp() * (rho * t).cosh();
    let target = -(tol * 1e-3).ln();
    let mut upper: f64 = 1.0;
    while z * (upper.cosh() - 1.0) - rho * upper < target {
        upper += 0.5;
        if upper > 60.0 {
            return numerical(format!("integral representation cannot be truncated for rho={rho}, z={z}"));
        }
    }
    let mut h = 0.5;
    let mut count = (upper / h).ceil() as usize;
    let mut sum = 0.5 * g(0.0) + (1..=count).map(|k| g(k as f64 * h)).sum::<f64>();
    let mut est = h * sum;
    for _ in 0..12 {
        h *= 0.5;
        count *= 2;
        sum += (0..count / 2).map(|k| g((2 * k + 1) as f64 * h)).sum::<f64>();
        let next = h * sum;
        let change = (next - est).abs();
        est = next;
        if change <= tol * est.abs() {
            return Ok(est);
        }
    }
    Err(FragError::Convergence {
        iterations: 12,
        last_change: f64::NAN,
        context: format!("Bessel integral for rho={rho}, z={z}"),
    })
}
