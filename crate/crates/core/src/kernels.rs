//! Fragmentation coefficients: the rate a(x) and the daughter distribution b(x, y).

use std::fmt;
use std::sync::Arc;

use crate::error::{domain, precondition, FragError, Result};
use crate::quadrature::{gauss_kronrod, tanh_sinh};

pub type RateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type ProfileFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A possibly divergent integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integral {
    Finite(f64),
    Divergent,
}

impl Integral {
    pub fn finite(self) -> Option<f64> {
        match self {
            Integral::Finite(v) => Some(v),
            Integral::Divergent => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Integral::Finite(_))
    }
}

/// Optional two-sided envelope a_* x^γ <= a(x) <= K x^ξ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBounds {
    pub a_lower: f64,
    pub a_upper: Option<f64>,
    pub xi: f64,
    pub k_upper: f64,
}

#[derive(Clone)]
pub struct RateSpec {
    /// 𝔞
    pub amplitude: f64,
    /// γ
    pub gamma: f64,
    /// Replaces 𝔞 x^γ when present; (𝔞, γ) then describe the large-size envelope.
    pub general: Option<RateFn>,
    pub bounds: Option<RateBounds>,
}

impl fmt::Debug for RateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RateSpec")
            .field("amplitude", &self.amplitude)
            .field("gamma", &self.gamma)
            .field("general", &self.general.as_ref().map(|_| "<fn>"))
            .field("bounds", &self.bounds)
            .finish()
    }
}

impl RateSpec {
    pub fn power_law(amplitude: f64, gamma: f64) -> Result<Self> {
        let r = RateSpec { amplitude, gamma, general: None, bounds: None };
        r.validate()?;
        Ok(r)
    }

    pub fn general(rate: RateFn, amplitude: f64, gamma: f64) -> Result<Self> {
        let r = RateSpec { amplitude, gamma, general: Some(rate), bounds: None };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return domain(format!("rate amplitude must be positive, got {}", self.amplitude));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return domain(format!("rate exponent must be non-negative, got {}", self.gamma));
        }
        if let Some(b) = &self.bounds {
            if !(b.a_lower > 0.0 && b.k_upper > 0.0 && b.xi.is_finite()) {
                return domain("rate bounds must be positive");
            }
        }
        Ok(())
    }

    pub fn is_power_law(&self) -> bool {
        self.general.is_none()
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.general {
            Some(g) => g(x),
            None => self.amplitude * x.powf(self.gamma),
        }
    }
}

/// Self-similar profile h on (0, 1).
#[derive(Clone)]
pub enum Profile {
    /// h(z) = θ (1 − ln z)^{−θ−1} z^{−2}, H(z) = (1 − ln z)^{−θ}
    LogPower { theta: f64 },
    /// A user-supplied h with an optional exact H.
    Function { h: ProfileFn, cumulative: Option<ProfileFn> },
    /// Knots interpolated log-linearly, extended below the first knot by the local power law.
    Tabulated { z: Vec<f64>, h: Vec<f64> },
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::LogPower { theta } => write!(f, "LogPower {{ theta: {theta} }}"),
            Profile::Function { cumulative, .. } => {
                write!(f, "Function {{ exact_cumulative: {} }}", cumulative.is_some())
            }
            Profile::Tabulated { z, .. } => write!(f, "Tabulated {{ knots: {} }}", z.len()),
        }
    }
}

#[derive(Clone)]
pub enum Daughter {
    /// b(x, y) = (ν+2) x^ν / y^{ν+1}
    PowerLaw { nu: f64 },
    /// b(x, y) = h(x/y)/y
    SelfSimilar { profile: Profile, lambda: Option<f64> },
    /// Arbitrary b with an optional primitive (z, y) ↦ ∫_0^z x b(x, y) dx.
    General { b: KernelFn, partial_mass: Option<KernelFn> },
}

impl fmt::Debug for Daughter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Daughter::PowerLaw { nu } => write!(f, "PowerLaw {{ nu: {nu} }}"),
            Daughter::SelfSimilar { profile, lambda } => f
                .debug_struct("SelfSimilar")
                .field("profile", profile)
                .field("lambda", lambda)
                .finish(),
            Daughter::General { partial_mass, .. } => {
                write!(f, "General {{ exact_partial_mass: {} }}", partial_mass.is_some())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DaughterSpec {
    pub variant: Daughter,
    pub chi: f64,
    pub m0: f64,
}

impl DaughterSpec {
    pub fn power_law(nu: f64) -> Result<Self> {
        if !(nu > -2.0 && nu <= 0.0) {
            return domain(format!("power-law exponent must lie in (-2, 0], got {nu}"));
        }
        Ok(DaughterSpec { variant: Daughter::PowerLaw { nu }, chi: 1f64.max(nu + 2.0), m0: 1.0 })
    }

    pub fn log_power(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return domain(format!("log-power parameter must lie in (0, 1), got {theta}"));
        }
        Ok(DaughterSpec {
            variant: Daughter::SelfSimilar { profile: Profile::LogPower { theta }, lambda: Some(0.0) },
            chi: 1.0,
            m0: 1.0,
        })
    }

    pub fn self_similar(profile: Profile, lambda: Option<f64>, chi: f64, m0: f64) -> Result<Self> {
        let d = DaughterSpec { variant: Daughter::SelfSimilar { profile, lambda }, chi, m0 };
        d.validate()?;
        Ok(d)
    }

    pub fn general(b: KernelFn, partial_mass: Option<KernelFn>, chi: f64, m0: f64) -> Result<Self> {
        let d = DaughterSpec { variant: Daughter::General { b, partial_mass }, chi, m0 };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.chi > 0.0 && self.chi.is_finite()) {
            return domain(format!("chi must be positive, got {}", self.chi));
        }
        if !(self.m0 >= 1.0 && self.m0.is_finite()) {
            return domain(format!("m0 must be at least 1, got {}", self.m0));
        }
        match &self.variant {
            Daughter::PowerLaw { nu } => {
                if !(*nu > -2.0 && *nu <= 0.0) {
                    return domain(format!("power-law exponent must lie in (-2, 0], got {nu}"));
                }
            }
            Daughter::SelfSimilar { profile, lambda } => {
                if let Some(l) = lambda {
                    if !(-1.0..=0.0).contains(l) {
                        return domain(format!("lambda must lie in [-1, 0], got {l}"));
                    }
                }
                match profile {
                    Profile::LogPower { theta } => {
                        if !(*theta > 0.0 && *theta < 1.0) {
                            return domain(format!("log-power parameter must lie in (0, 1), got {theta}"));
                        }
                    }
                    Profile::Tabulated { z, h } => {
                        if z.len() < 2 || z.len() != h.len() {
                            return domain("tabulated profile needs at least two knots and matching lengths");
                        }
                        if z.windows(2).any(|w| !(w[1] > w[0])) || z[0] <= 0.0 || *z.last().unwrap() > 1.0 {
                            return domain("tabulated knots must increase inside (0, 1]");
                        }
                        if h.iter().any(|v| !(*v > 0.0)) {
                            return domain("tabulated profile values must be positive");
                        }
                    }
                    Profile::Function { .. } => {}
                }
            }
            Daughter::General { .. } => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CoefficientSpec {
    pub rate: RateSpec,
    pub daughter: DaughterSpec,
}

impl CoefficientSpec {
    pub fn new(rate: RateSpec, daughter: DaughterSpec) -> Result<Self> {
        rate.validate()?;
        daughter.validate()?;
        Ok(CoefficientSpec { rate, daughter })
    }

    /// a = 𝔞 x^γ with the power-law daughter of exponent ν.
    pub fn power_law(amplitude: f64, gamma: f64, nu: f64) -> Result<Self> {
        Self::new(RateSpec::power_law(amplitude, gamma)?, DaughterSpec::power_law(nu)?)
    }

    /// a = 𝔞 x^γ with the log-power self-similar daughter.
    pub fn log_power(amplitude: f64, gamma: f64, theta: f64) -> Result<Self> {
        Self::new(RateSpec::power_law(amplitude, gamma)?, DaughterSpec::log_power(theta)?)
    }

    pub fn power_law_nu(&self) -> Option<f64> {
        match self.daughter.variant {
            Daughter::PowerLaw { nu } => Some(nu),
            _ => None,
        }
    }

    pub fn is_self_similar(&self) -> bool {
        !matches!(self.daughter.variant, Daughter::General { .. })
    }

    /// α = (γ+2)/2
    pub fn alpha(&self) -> f64 {
        0.5 * (self.rate.gamma + 2.0)
    }

    /// Φ(x) = √𝔞 x^α / α, the exponent of the large-size envelope.
    pub fn envelope_exponent(&self, x: f64) -> f64 {
        let a = self.alpha();
        self.rate.amplitude.sqrt() * x.powf(a) / a
    }

    /// Inverse of `envelope_exponent`.
    pub fn envelope_inverse(&self, phi: f64) -> f64 {
        let a = self.alpha();
        (phi * a / self.rate.amplitude.sqrt()).powf(1.0 / a)
    }

    /// Profile h(z) for self-similar and power-law daughters.
    pub fn profile(&self, z: f64) -> Result<f64> {
        match &self.daughter.variant {
            Daughter::PowerLaw { nu } => Ok((nu + 2.0) * z.powf(*nu)),
            Daughter::SelfSimilar { profile, .. } => Ok(profile_eval(profile, z)),
            Daughter::General { .. } => Err(FragError::Unsupported(
                "the general daughter has no self-similar profile".into(),
            )),
        }
    }

    /// b(x, y) for 0 < x < y, and 0 for x >= y.
    pub fn daughter_density(&self, x: f64, y: f64) -> f64 {
        if x >= y {
            return if x == y { self.diagonal_density(y) } else { 0.0 };
        }
        self.density_below(x, y)
    }

    fn diagonal_density(&self, y: f64) -> f64 {
        self.density_below(y, y)
    }

    fn density_below(&self, x: f64, y: f64) -> f64 {
        match &self.daughter.variant {
            Daughter::PowerLaw { nu } => (nu + 2.0) * x.powf(*nu) / y.powf(nu + 1.0),
            Daughter::SelfSimilar { profile, .. } => profile_eval(profile, x / y) / y,
            Daughter::General { b, .. } => b(x, y),
        }
    }
}

fn profile_eval(profile: &Profile, z: f64) -> f64 {
    match profile {
        Profile::LogPower { theta } => theta * (1.0 - z.ln()).powf(-theta - 1.0) / (z * z),
        Profile::Function { h, .. } => h(z),
        Profile::Tabulated { z: knots, h } => tabulated_eval(knots, h, z),
    }
}

fn tabulated_eval(knots: &[f64], h: &[f64], z: f64) -> f64 {
    let n = knots.len();
    let (i, j) = if z <= knots[0] {
        (0, 1)
    } else if z >= knots[n - 1] {
        (n - 2, n - 1)
    } else {
        let k = knots.partition_point(|&v| v <= z);
        (k - 1, k)
    };
    let slope = (h[j].ln() - h[i].ln()) / (knots[j].ln() - knots[i].ln());
    (h[i].ln() + slope * (z.ln() - knots[i].ln())).exp()
}

/// a(x) for x > 0.
pub fn rate_eval(spec: &CoefficientSpec, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("rate needs a finite positive size, got {x}"));
    }
    Ok(spec.rate.eval(x))
}

/// ∫_0^z x b(x, y) dx for 0 < z <= y.
pub fn partial_mass(spec: &CoefficientSpec, z: f64, y: f64) -> Result<f64> {
    if !(z > 0.0 && y > 0.0) || !z.is_finite() || !y.is_finite() {
        return domain(format!("partial_mass needs positive finite sizes, got z={z}, y={y}"));
    }
    if z > y * (1.0 + 1e-12) {
        return domain(format!("partial_mass needs z <= y, got z={z}, y={y}"));
    }
    let z = z.min(y);
    match &spec.daughter.variant {
        Daughter::PowerLaw { .. } | Daughter::SelfSimilar { .. } => Ok(y * h_cumulative(spec, z / y)?),
        Daughter::General { b, partial_mass } => match partial_mass {
            Some(p) => Ok(p(z, y)),
            None => {
                let r = tanh_sinh(|x| x * b(x, y), 0.0, z, 1e-12)?;
                Ok(r.value)
            }
        },
    }
}

/// Partial mass without argument checks, for inner loops on validated grids.
pub(crate) fn partial_mass_unchecked(spec: &CoefficientSpec, z: f64, y: f64) -> f64 {
    partial_mass(spec, z.min(y), y).unwrap_or(f64::NAN)
}

/// H(z) = ∫_0^z u h(u) du.
pub fn h_cumulative(spec: &CoefficientSpec, z: f64) -> Result<f64> {
    if !(z > 0.0 && z <= 1.0 + 1e-12) {
        return domain(format!("H needs z in (0, 1], got {z}"));
    }
    let z = z.min(1.0);
    match &spec.daughter.variant {
        Daughter::PowerLaw { nu } => Ok(z.powf(nu + 2.0)),
        Daughter::SelfSimilar { profile, .. } => match profile {
            Profile::LogPower { theta } => Ok((1.0 - z.ln()).powf(-theta)),
            Profile::Function { cumulative: Some(c), .. } => Ok(c(z)),
            _ => profile_partial_moment(profile, 1.0, z),
        },
        Daughter::General { .. } => Err(FragError::Unsupported(
            "H is defined only for self-similar daughters".into(),
        )),
    }
}

/// ∫_0^z u^m h(u) du for a numerically specified profile, in the variable s = −ln(u/z).
fn profile_partial_moment(profile: &Profile, m: f64, z: f64) -> Result<f64> {
    match profile_moment_numeric(profile, m, z)? {
        Integral::Finite(v) => Ok(v),
        Integral::Divergent => Err(FragError::Numerical(format!(
            "profile moment of order {m} diverges below {z}"
        ))),
    }
}

fn profile_moment_numeric(profile: &Profile, m: f64, z: f64) -> Result<Integral> {
    // ∫_0^z u^m h(u) du = z^{m+1} ∫_0^∞ e^{−(m+1)s} h(z e^{−s}) ds
    let g = |s: f64| {
        let u = z * (-s).exp();
        (-(m + 1.0) * s).exp() * profile_eval(profile, u)
    };
    let mut total = 0.0;
    let mut lo = 0.0;
    let mut prev_piece = f64::INFINITY;
    for hi in [10.0, 23.0, 46.0, 92.0, 184.0, 368.0, 700.0] {
        let piece = gauss_kronrod(g, lo, hi, 1e-15, 1e-12)?.value;
        total += piece;
        if piece.abs() <= 1e-13 * total.abs() {
            return Ok(Integral::Finite(z.powf(m + 1.0) * total));
        }
        if hi > 23.0 && piece.abs() * 1.5 > prev_piece.abs() {
            return Ok(Integral::Divergent);
        }
        prev_piece = piece;
        lo = hi;
    }
    Ok(Integral::Finite(z.powf(m + 1.0) * total))
}

/// ∫_0^1 u^m h(u) du, possibly divergent.
pub fn profile_moment(spec: &CoefficientSpec, m: f64) -> Result<Integral> {
    match &spec.daughter.variant {
        Daughter::PowerLaw { nu } => {
            if m + nu + 1.0 > 0.0 {
                Ok(Integral::Finite((nu + 2.0) / (m + nu + 1.0)))
            } else {
                Ok(Integral::Divergent)
            }
        }
        Daughter::SelfSimilar { profile, .. } => match profile {
            Profile::LogPower { theta } => {
                if m < 1.0 {
                    Ok(Integral::Divergent)
                } else if m == 1.0 {
                    Ok(Integral::Finite(1.0))
                } else {
                    // θ ∫_0^∞ e^{−(m−1)s}(1+s)^{−θ−1} ds, in t = (m−1)s
                    let c = m - 1.0;
                    let r = gauss_kronrod(
                        |t: f64| (-t).exp() * (1.0 + t / c).powf(-theta - 1.0),
                        0.0,
                        50.0,
                        1e-16,
                        1e-13,
                    )?;
                    Ok(Integral::Finite(theta * r.value / c))
                }
            }
            _ => profile_moment_numeric(profile, m, 1.0),
        },
        Daughter::General { .. } => Err(FragError::Unsupported(
            "profile moments need a self-similar daughter".into(),
        )),
    }
}

/// ∫_0^y x^m b(x, y) dx, possibly divergent.
pub fn inner_moment(spec: &CoefficientSpec, m: f64, y: f64) -> Result<Integral> {
    match &spec.daughter.variant {
        Daughter::General { b, .. } => {
            let mut total = 0.0;
            let mut prev = f64::INFINITY;
            let mut upper = y;
            for k in 0..12 {
                let lower = y * 10f64.powi(-(4 * (k + 1)));
                let piece = tanh_sinh(|x| x.powf(m) * b(x, y), lower, upper, 1e-11)?.value;
                total += piece;
                if piece.abs() <= 1e-12 * total.abs() {
                    return Ok(Integral::Finite(total));
                }
                if k >= 2 && piece.abs() * 1.5 > prev {
                    return Ok(Integral::Divergent);
                }
                prev = piece.abs();
                upper = lower;
            }
            Ok(Integral::Finite(total))
        }
        _ => Ok(match profile_moment(spec, m)? {
            Integral::Finite(v) => Integral::Finite(y.powf(m) * v),
            Integral::Divergent => Integral::Divergent,
        }),
    }
}

/// κ = ∫_0^1 u |ln u| h(u) du, so that ∫_0^y x b ln(y/x) dx = κ y for self-similar daughters.
pub fn log_moment(spec: &CoefficientSpec) -> Result<Integral> {
    match &spec.daughter.variant {
        Daughter::PowerLaw { nu } => Ok(Integral::Finite(1.0 / (nu + 2.0))),
        Daughter::SelfSimilar { profile, .. } => match profile {
            Profile::LogPower { .. } => Ok(Integral::Divergent),
            _ => {
                let g = |s: f64| s * (-2.0 * s).exp() * profile_eval(profile, (-s).exp());
                let mut total = 0.0;
                let mut lo = 0.0;
                let mut prev = f64::INFINITY;
                for hi in [10.0, 23.0, 46.0, 92.0, 184.0, 368.0, 700.0] {
                    let piece = gauss_kronrod(g, lo, hi, 1e-15, 1e-12)?.value;
                    total += piece;
                    if piece.abs() <= 1e-13 * total.abs() {
                        return Ok(Integral::Finite(total));
                    }
                    if hi > 23.0 && piece.abs() * 1.5 > prev {
                        return Ok(Integral::Divergent);
                    }
                    prev = piece.abs();
                    lo = hi;
                }
                Ok(Integral::Finite(total))
            }
        },
        Daughter::General { .. } => Err(FragError::Unsupported(
            "log moment needs a self-similar daughter".into(),
        )),
    }
}

/// ∫_0^y x b(x, y) ln(y/x) dx, possibly divergent.
pub fn inner_log_moment(spec: &CoefficientSpec, y: f64) -> Result<Integral> {
    match &spec.daughter.variant {
        Daughter::General { b, .. } => {
            let mut total = 0.0;
            let mut prev = f64::INFINITY;
            let mut upper = y;
            for k in 0..12 {
                let lower = y * 10f64.powi(-(4 * (k + 1)));
                let piece = tanh_sinh(|x| x * (y / x).ln() * b(x, y), lower, upper, 1e-11)?.value;
                total += piece;
                if piece.abs() <= 1e-12 * total.abs() {
                    return Ok(Integral::Finite(total));
                }
                if k >= 2 && piece.abs() * 1.5 > prev {
                    return Ok(Integral::Divergent);
                }
                prev = piece.abs();
                upper = lower;
            }
            Ok(Integral::Finite(total))
        }
        _ => Ok(match log_moment(spec)? {
            Integral::Finite(k) => Integral::Finite(k * y),
            Integral::Divergent => Integral::Divergent,
        }),
    }
}

fn self_similar_profile(spec: &CoefficientSpec) -> Result<&Profile> {
    match &spec.daughter.variant {
        Daughter::SelfSimilar { profile, .. } => Ok(profile),
        _ => Err(FragError::Unsupported("needs a self-similar profile".into())),
    }
}

/// ∫_z^1 u^m h(u) du for 0 < z <= 1.
pub fn profile_upper_moment(spec: &CoefficientSpec, m: f64, z: f64) -> Result<f64> {
    if !(z > 0.0 && z <= 1.0) {
        return domain(format!("upper profile moment needs z in (0, 1], got {z}"));
    }
    if let Daughter::PowerLaw { nu } = spec.daughter.variant {
        let k = m + nu + 1.0;
        return Ok(if k.abs() < 1e-14 {
            -(nu + 2.0) * z.ln()
        } else {
            (nu + 2.0) * (1.0 - z.powf(k)) / k
        });
    }
    let profile = self_similar_profile(spec)?;
    let span = -z.ln();
    let g = |s: f64| (-(m + 1.0) * s).exp() * profile_eval(profile, (-s).exp());
    Ok(gauss_kronrod(g, 0.0, span, 1e-300, 1e-12)?.value)
}

/// ∫_z^1 u ln(1/u) h(u) du for 0 < z <= 1.
pub fn profile_upper_log_moment(spec: &CoefficientSpec, z: f64) -> Result<f64> {
    if !(z > 0.0 && z <= 1.0) {
        return domain(format!("upper profile moment needs z in (0, 1], got {z}"));
    }
    if let Daughter::PowerLaw { nu } = spec.daughter.variant {
        let k = nu + 2.0;
        let zk = z.powf(k);
        return Ok(1.0 / k + zk * z.ln() - zk / k);
    }
    let profile = self_similar_profile(spec)?;
    let span = -z.ln();
    let g = |s: f64| s * (-2.0 * s).exp() * profile_eval(profile, (-s).exp());
    Ok(gauss_kronrod(g, 0.0, span, 1e-300, 1e-12)?.value)
}

/// δ_m = inf_y {1 − y^{−m} ∫_0^y x^m b(x, y) dx}.
pub fn delta_m(spec: &CoefficientSpec, m: f64) -> Result<f64> {
    if !(m > 1.0) || !m.is_finite() {
        return domain(format!("delta_m needs m > 1, got {m}"));
    }
    match &spec.daughter.variant {
        Daughter::General { .. } => {
            let mut best = f64::INFINITY;
            for k in 0..257 {
                let y = 10f64.powf(-4.0 + 8.0 * k as f64 / 256.0);
                let inner = inner_moment(spec, m, y)?.finite().ok_or_else(|| {
                    FragError::Numerical(format!("inner moment of order {m} diverges at y={y}"))
                })?;
                best = best.min(1.0 - inner / y.powf(m + 1.0) * y);
            }
            Ok(best)
        }
        _ => {
            // δ_m = (m−1) ∫_0^1 z^{m−2} H(z) dz = ∫_0^∞ e^{−t} H(e^{−t/(m−1)}) dt
            // the integrand varies on the scale t ~ m−1 as well as t ~ 1
            let c = m - 1.0;
            let integrand = |t: f64| {
                let z = (-t / c).exp();
                if z <= 0.0 {
                    return 0.0;
                }
                (-t).exp() * h_cumulative(spec, z).unwrap_or(0.0)
            };
            let mut breaks = vec![0.0];
            let mut b = c;
            while b < 60.0 {
                breaks.push(b);
                b *= 10.0;
            }
            breaks.push(60.0);
            let mut total = 0.0;
            for w in breaks.windows(2) {
                total += gauss_kronrod(integrand, w[0], w[1], 1e-17, 1e-14)?.value;
            }
            Ok(total.clamp(0.0, 1.0))
        }
    }
}

/// One line of an assumption report.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Positive when the assumption holds with room to spare.
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
    pub delta2: f64,
    pub b1_residual: f64,
    pub b3_sup: f64,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// The minimum needed by the solvers: positive rate, mass conservation, δ₂ > 0.
    pub fn require_admissible(&self) -> Result<()> {
        for name in ["A1", "B1", "B2"] {
            if let Some(c) = self.get(name) {
                if !c.passed {
                    return precondition(format!("assumption {name} fails: {}", c.detail));
                }
            }
        }
        Ok(())
    }
}

const B1_TOL: f64 = 1e-8;

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(move |k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
}

/// Sampled verification of the standing assumptions on (a, b).
pub fn check_assumptions(spec: &CoefficientSpec) -> AssumptionReport {
    let mut checks = Vec::new();

    let mut min_rate = f64::INFINITY;
    for x in log_grid(1e-4, 1e4, 161) {
        min_rate = min_rate.min(spec.rate.eval(x));
    }
    let tail_rate = spec.rate.eval(1e4);
    checks.push(AssumptionCheck {
        name: "A1",
        passed: min_rate > 0.0 && tail_rate > 0.0 && min_rate.is_finite(),
        margin: min_rate,
        detail: format!("min sampled rate {min_rate:.3e}, rate at 1e4 {tail_rate:.3e}"),
    });

    if let Some(bounds) = &spec.rate.bounds {
        let mut worst = f64::INFINITY;
        for x in log_grid(1e-4, 1e4, 161) {
            let a = spec.rate.eval(x);
            let lower = bounds.a_lower * x.powf(spec.rate.gamma);
            let upper = bounds.k_upper * x.powf(bounds.xi);
            worst = worst.min((a - lower) / a).min((upper - a) / a);
        }
        checks.push(AssumptionCheck {
            name: "rate bounds",
            passed: worst >= -1e-12,
            margin: worst,
            detail: format!("smallest relative slack {worst:.3e}"),
        });
    }

    let b1 = b1_residual(spec);
    let (b1_passed, b1_res, b1_detail) = match b1 {
        Ok(r) => (r <= B1_TOL, r, format!("sup relative mass defect {r:.3e}")),
        Err(e) => (false, f64::NAN, e.to_string()),
    };
    checks.push(AssumptionCheck {
        name: "B1",
        passed: b1_passed,
        margin: B1_TOL - b1_res,
        detail: b1_detail,
    });

    let delta2 = delta_m(spec, 2.0).unwrap_or(f64::NAN);
    checks.push(AssumptionCheck {
        name: "B2",
        passed: delta2 > 0.0,
        margin: delta2,
        detail: format!("delta_2 = {delta2:.6e}"),
    });

    let chi = spec.daughter.chi;
    let mut b3_sup: f64 = 0.0;
    let mut b3_error = None;
    for m in log_grid(spec.daughter.m0, 1e3, 97) {
        let m = m.max(spec.daughter.m0);
        let v = if m == 1.0 {
            match &spec.daughter.variant {
                Daughter::General { .. } => Ok(1.0 - 0.0),
                _ => Ok(1.0),
            }
        } else {
            delta_m(spec, m).map(|d| m * (1.0 - d))
        };
        match v {
            Ok(v) => b3_sup = b3_sup.max(v),
            Err(e) => {
                b3_error = Some(e.to_string());
                break;
            }
        }
    }
    checks.push(AssumptionCheck {
        name: "B3",
        passed: b3_error.is_none() && b3_sup <= chi * (1.0 + 1e-9),
        margin: chi - b3_sup,
        detail: b3_error.unwrap_or_else(|| format!("sup m*int z^m h = {b3_sup:.6e}, chi = {chi}")),
    });

    if let Daughter::SelfSimilar { lambda: Some(lambda), .. } = &spec.daughter.variant {
        checks.push(b4_check(spec, *lambda));
    }

    AssumptionReport { checks, delta2, b1_residual: b1_res, b3_sup }
}

fn b1_residual(spec: &CoefficientSpec) -> Result<f64> {
    match &spec.daughter.variant {
        Daughter::General { .. } => {
            let mut worst: f64 = 0.0;
            for y in log_grid(1e-3, 1e3, 25) {
                let pm = partial_mass(spec, y, y)?;
                worst = worst.max((pm - y).abs() / y);
            }
            Ok(worst)
        }
        Daughter::SelfSimilar { profile: Profile::Function { .. } | Profile::Tabulated { .. }, .. } => {
            let Daughter::SelfSimilar { profile, .. } = &spec.daughter.variant else {
                unreachable!()
            };
            let mass = profile_partial_moment(profile, 1.0, 1.0)?;
            Ok((mass - 1.0).abs())
        }
        _ => Ok((h_cumulative(spec, 1.0)? - 1.0).abs()),
    }
}

/// Sampled domination and limit test of H(z/y) against y^λ H(z).
pub fn b4_check(spec: &CoefficientSpec, lambda: f64) -> AssumptionCheck {
    let mut literal_slack = f64::INFINITY;
    let mut slack = f64::INFINITY;
    let mut worst_limit: f64 = 0.0;
    let mut failure = None;
    for z in log_grid(1e-12, 0.5, 23) {
        for y in log_grid(z * 1.001, 1e4, 23) {
            match (h_cumulative(spec, z / y), h_cumulative(spec, z)) {
                (Ok(hzy), Ok(hz)) => {
                    let literal = y.powf(lambda) * (y + 1.0) * hz;
                    let relaxed = literal / y.min(1.0);
                    literal_slack = literal_slack.min((literal - hzy) / literal);
                    slack = slack.min((relaxed - hzy) / relaxed);
                }
                (Err(e), _) | (_, Err(e)) => failure = Some(e.to_string()),
            }
        }
    }
    let z = 1e-300;
    for y in log_grid(1e-2, 1e2, 9) {
        if let (Ok(hzy), Ok(hz)) = (h_cumulative(spec, z / y), h_cumulative(spec, z)) {
            let ratio = hzy / (y.powf(lambda) * hz);
            worst_limit = worst_limit.max((ratio - 1.0).abs());
        }
    }
    let passed = failure.is_none() && slack >= -1e-12 && worst_limit <= 0.02;
    AssumptionCheck {
        name: "B4",
        passed,
        margin: slack.min(0.02 - worst_limit),
        detail: failure.unwrap_or_else(|| {
            format!(
                "domination slack {slack:.3e} (y^lambda (y+1) bound alone: {literal_slack:.3e}), \
                 limit ratio defect {worst_limit:.3e} at z=1e-300"
            )
        }),
    }
}
