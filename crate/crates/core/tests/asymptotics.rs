use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use fragstat_core::asymptotics::{
    default_mu, ell0_estimate, general_h_shape, lambda0_estimate, mu_threshold, small_classify, small_fit,
    small_size_report, tail_bounds_check, tail_fit, tail_fit_samples, x_membership, Membership, SmallRegime,
};
use fragstat_core::closed_form::normalize;
use fragstat_core::diagnostics::small_limit;
use fragstat_core::kernels::CoefficientSpec;
use fragstat_core::solver::{build_grid, solve, SizeDistribution, SolverConfig};
use fragstat_core::FragError;

const ROUND_TRIP: [(f64, f64); 5] = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (0.0, -1.0), (0.0, -1.5)];

fn solved(amplitude: f64, gamma: f64, nu: f64, n: usize) -> SizeDistribution {
    static CACHE: OnceLock<Mutex<HashMap<String, SizeDistribution>>> = OnceLock::new();
    let key = format!("{amplitude},{gamma},{nu},{n}");
    let cache = CACHE.get_or_init(Default::default);
    if let Some(f) = cache.lock().unwrap().get(&key) {
        return f.clone();
    }
    let f = solve(&CoefficientSpec::power_law(amplitude, gamma, nu).unwrap(), &SolverConfig::with_n(n)).unwrap();
    cache.lock().unwrap().insert(key, f.clone());
    f
}

fn closed_form_samples(amplitude: f64, gamma: f64, nu: f64) -> SizeDistribution {
    let spec = CoefficientSpec::power_law(amplitude, gamma, nu).unwrap();
    let sol = normalize(amplitude, gamma, nu, 1e-12).unwrap();
    let grid = build_grid(&spec, &SolverConfig::default()).unwrap();
    let values = grid.nodes().iter().map(|&x| sol.eval(x).unwrap()).collect();
    SizeDistribution::from_values(&spec, grid, values).unwrap()
}

fn ex32() -> CoefficientSpec {
    CoefficientSpec::log_power(1.0, 0.0, 0.5).unwrap()
}

fn ex32_solved() -> SizeDistribution {
    static F: OnceLock<SizeDistribution> = OnceLock::new();
    F.get_or_init(|| solve(&ex32(), &SolverConfig::default()).unwrap()).clone()
}

#[test]
fn planted_exponential() {
    let x: Vec<f64> = (0..200).map(|k| 1.0 + 0.1 * k as f64).collect();
    let f: Vec<f64> = x.iter().map(|&v| (-3.0 * v).exp()).collect();
    let t = tail_fit_samples(&x, &f, (1.0, 20.0)).unwrap();
    assert!((t.alpha_hat - 1.0).abs() < 1e-6 && (t.rate_hat - 3.0).abs() < 1e-6, "{t:?}");
    assert!(t.algebraic_exponent_hat.abs() < 1e-5);
}

#[test]
fn tail_fit_input_errors() {
    let x: Vec<f64> = (0..200).map(|k| 1.0 + 0.1 * k as f64).collect();
    let f: Vec<f64> = x.iter().map(|&v| (-v).exp()).collect();
    assert!(matches!(tail_fit_samples(&x, &f, (1.0, 2.0)), Err(FragError::Domain(_))));
    assert!(matches!(tail_fit_samples(&x, &f, (0.5, 10.0)), Err(FragError::Domain(_))));
    let mut g = f.clone();
    g[50] = 0.0;
    assert!(tail_fit_samples(&x, &g, (1.0, 20.0)).is_err());
}

#[test]
fn base_case_tail() {
    let spec = CoefficientSpec::power_law(1.0, 0.0, 0.0).unwrap();
    let f = solved(1.0, 0.0, 0.0, 2048);
    let r = tail_fit(&spec, &f, Some((5.0, 25.0)), Some(1.01)).unwrap();
    assert!((r.alpha_hat - 1.0).abs() <= 0.02, "{r:?}");
    assert!((r.rate_hat - 1.0).abs() <= 0.02, "{r:?}");
    assert!((r.algebraic_exponent_hat - 1.0).abs() <= 0.1, "{r:?}");
    assert!(r.lower_bound_ok && r.upper_bound_ok && r.kappa_estimate.is_finite());
    assert_eq!(r.mu_used, 1.01);
}

#[test]
fn quadratic_rate_closed_form_tail() {
    let spec = CoefficientSpec::power_law(1.0, 2.0, 0.0).unwrap();
    let f = closed_form_samples(1.0, 2.0, 0.0);
    let r = tail_fit(&spec, &f, None, None).unwrap();
    assert!((r.alpha_hat - 2.0).abs() <= 0.04, "{r:?}");
    assert!((r.rate_hat - 1.0).abs() <= 0.02, "{r:?}");
    assert!((r.algebraic_exponent_hat - 0.5).abs() <= 0.1, "{r:?}");
    assert!(r.lower_bound_ok && r.upper_bound_ok);
}

#[test]
fn tail_round_trip() {
    for amplitude in [1.0, 4.0] {
        for (gamma, nu) in ROUND_TRIP {
            let spec = CoefficientSpec::power_law(amplitude, gamma, nu).unwrap();
            let alpha = 0.5 * (gamma + 2.0);
            for (label, f) in [("closed", closed_form_samples(amplitude, gamma, nu)), ("solved", solved(amplitude, gamma, nu, 2048))] {
                let r = tail_fit(&spec, &f, None, None).unwrap();
                assert!((r.alpha_hat / alpha - 1.0).abs() <= 0.02, "{label} ({amplitude},{gamma},{nu}) {r:?}");
                assert!((r.rate_hat / amplitude.sqrt() - 1.0).abs() <= 0.02, "{label} ({amplitude},{gamma},{nu}) {r:?}");
                assert!(r.lower_bound_ok && r.upper_bound_ok, "{label} ({amplitude},{gamma},{nu}) {r:?}");
                assert!(r.window.0 >= 1.0);
            }
        }
    }
}

#[test]
fn envelope_exponent_threshold() {
    let spec = CoefficientSpec::power_law(1.0, 0.0, 0.0).unwrap();
    assert!((mu_threshold(&spec) - 1.0).abs() < 1e-15);
    assert!((default_mu(&spec) - 1.5).abs() < 1e-15);
    let f = solved(1.0, 0.0, 0.0, 2048);
    assert!(matches!(tail_bounds_check(&spec, &f, 1.0), Err(FragError::Precondition(_))));
}

#[test]
fn planted_envelope_violation() {
    let spec = CoefficientSpec::power_law(1.0, 0.0, 0.0).unwrap();
    let f = solved(1.0, 0.0, 0.0, 2048);
    let mut g = f.clone();
    for (v, &x) in g.values.iter_mut().zip(f.nodes()) {
        *v *= x.exp();
    }
    let b = tail_bounds_check(&spec, &g, 1.5).unwrap();
    assert!(!b.upper_ok, "{b:?}");
    let ok = tail_bounds_check(&spec, &f, 1.5).unwrap();
    assert!(ok.lower_ok && ok.upper_ok && ok.kappa_estimate > 0.0, "{ok:?}");
}

#[test]
fn predicted_regimes() {
    let p = small_classify(&CoefficientSpec::power_law(1.0, 0.0, 0.0).unwrap());
    assert_eq!(p.regime, SmallRegime::Linear);
    let p = small_classify(&CoefficientSpec::power_law(1.0, 0.0, -1.5).unwrap());
    assert_eq!(p.regime, SmallRegime::Power);
    assert!((p.exponent.unwrap() - 0.5).abs() < 1e-15);
    assert!((p.prefactor_over_lambda0.unwrap() - 2.0).abs() < 1e-12);
    let p = small_classify(&CoefficientSpec::power_law(1.0, 0.0, -1.0).unwrap());
    assert_eq!(p.regime, SmallRegime::ZLog);
    assert_eq!(p.lambda, Some(-1.0));
    let p = small_classify(&ex32());
    assert_eq!(p.regime, SmallRegime::LogPower);
    assert!((p.exponent.unwrap() + 0.5).abs() < 1e-15);
}

#[test]
fn base_case_linear_constant() {
    let spec = CoefficientSpec::power_law(1.0, 0.0, 0.0).unwrap();
    let f = solved(1.0, 0.0, 0.0, 2048);
    let l0 = ell0_estimate(&spec, &f).unwrap();
    assert!((l0 - 0.5).abs() < 1e-6, "{l0}");
    let lim = small_limit(&f).limit.finite().unwrap();
    assert!((lim / l0 - 1.0).abs() < 0.02);
}

#[test]
fn linear_constant_matches_small_limit() {
    for (amplitude, gamma, nu) in [(1.0, 1.0, 0.0), (1.0, 2.0, 0.0), (4.0, 1.0, 0.0), (1.0, 0.0, -0.5)] {
        let spec = CoefficientSpec::power_law(amplitude, gamma, nu).unwrap();
        let f = solved(amplitude, gamma, nu, 2048);
        let l0 = ell0_estimate(&spec, &f).unwrap();
        assert!(l0 > 0.0);
        let lim = small_limit(&f).limit.finite().unwrap();
        assert!((lim / l0 - 1.0).abs() < 0.05, "({amplitude},{gamma},{nu}): {lim} vs {l0}");
        let exact = normalize(amplitude, gamma, nu, 1e-12).unwrap().small_size_asymptote(1.0);
        assert!((l0 / exact - 1.0).abs() < 1e-4, "({amplitude},{gamma},{nu}): {l0} vs {exact}");
    }
}

#[test]
fn linear_constant_converges() {
    let spec = CoefficientSpec::power_law(1.0, 0.0, 0.0).unwrap();
    let e: Vec<f64> = [256, 512, 1024]
        .iter()
        .map(|&n| (ell0_estimate(&spec, &solved(1.0, 0.0, 0.0, n)).unwrap() - 0.5).abs())
        .collect();
    assert!(e[0] / e[1] >= 2.0 && e[1] / e[2] >= 2.0, "{e:?}");
}

#[test]
fn linear_constant_needs_finite_n0() {
    let spec = CoefficientSpec::power_law(1.0, 0.0, -1.5).unwrap();
    assert!(matches!(ell0_estimate(&spec, &solved(1.0, 0.0, -1.5, 2048)), Err(FragError::Precondition(_))));
}

#[test]
fn weighted_rate_moments() {
    let spec = CoefficientSpec::power_law(1.0, 1.0, 0.0).unwrap();
    let f = solved(1.0, 1.0, 0.0, 2048);
    assert!((lambda0_estimate(&spec, &f, 0.0).unwrap() - f.moment(2.0)).abs() < 1e-12);
    let spec = CoefficientSpec::power_law(1.0, 0.0, -1.0).unwrap();
    let f = solved(1.0, 0.0, -1.0, 2048);
    assert!((lambda0_estimate(&spec, &f, -1.0).unwrap() - f.moment(0.0)).abs() < 1e-12);
    assert!(lambda0_estimate(&spec, &f, 0.5).is_err());
}

#[test]
fn small_fits_on_solutions() {
    let base = small_fit(&solved(1.0, 0.0, 0.0, 2048), None).unwrap();
    assert_eq!(base.regime, SmallRegime::Linear);
    assert!((base.prefactor_hat / 0.5 - 1.0).abs() < 0.02, "{base:?}");

    let s = small_fit(&solved(1.0, 0.0, -1.5, 2048), None).unwrap();
    assert_eq!(s.regime, SmallRegime::Power);
    assert!((s.fitted_exponent - 0.5).abs() < 0.05, "{s:?}");

    let lp = small_fit(&ex32_solved(), None).unwrap();
    assert_eq!(lp.regime, SmallRegime::LogPower);
    assert!((lp.fitted_exponent + 0.5).abs() < 0.05, "{lp:?}");

    let z = small_fit(&solved(1.0, 0.0, -1.0, 2048), None).unwrap();
    assert_eq!(z.regime, SmallRegime::ZLog);
}

#[test]
fn small_fit_window_errors() {
    let f = solved(1.0, 0.0, 0.0, 512);
    assert!(matches!(small_fit(&f, Some((1e-10, 1.1e-10))), Err(FragError::Domain(_))));
}

#[test]
fn small_round_trip() {
    for amplitude in [1.0, 4.0] {
        for (gamma, nu) in ROUND_TRIP {
            let predicted = small_classify(&CoefficientSpec::power_law(amplitude, gamma, nu).unwrap());
            for (label, f) in [("closed", closed_form_samples(amplitude, gamma, nu)), ("solved", solved(amplitude, gamma, nu, 2048))] {
                let r = small_fit(&f, None).unwrap();
                assert_eq!(r.regime, predicted.regime, "{label} ({amplitude},{gamma},{nu}) {r:?}");
                let expect = if nu > -1.0 { 1.0 } else { nu + 2.0 };
                if r.regime != SmallRegime::ZLog {
                    assert!((r.fitted_exponent - expect).abs() < 0.05, "{label} ({amplitude},{gamma},{nu}) {r:?}");
                }
            }
        }
    }
}

#[test]
fn power_regime_prefactor() {
    let spec = CoefficientSpec::power_law(1.0, 0.0, -1.5).unwrap();
    let f = solved(1.0, 0.0, -1.5, 2048);
    let r = small_size_report(&spec, &f, None).unwrap();
    let predicted = 2.0 * r.lambda0.unwrap();
    assert!((r.prefactor_hat / predicted - 1.0).abs() < 0.01, "{r:?}");
}

#[test]
fn unit_power_shape_matches() {
    let spec = CoefficientSpec::power_law(1.0, 0.0, -1.0).unwrap();
    let f = solved(1.0, 0.0, -1.0, 2048);
    let lambda0 = lambda0_estimate(&spec, &f, -1.0).unwrap();
    let x = f.nodes();
    let lo = x[0] * 10.0;
    for (i, &z) in x.iter().enumerate().filter(|(_, &z)| z <= lo) {
        let r = f.values[i] / (lambda0 * general_h_shape(&spec, z).unwrap());
        assert!((r - 1.0).abs() < 0.05, "z={z}: {r}");
    }
}

#[test]
fn membership_examples() {
    let s15 = CoefficientSpec::power_law(1.0, 0.0, -1.5).unwrap();
    let f15 = solved(1.0, 0.0, -1.5, 2048);
    let r = x_membership(&s15, &f15, 0.6).unwrap();
    assert_eq!(r.verdict, Membership::Member, "{r:?}");
    let r = x_membership(&s15, &f15, 0.4).unwrap();
    assert_eq!(r.verdict, Membership::NonMember, "{r:?}");
    let s0 = CoefficientSpec::power_law(1.0, 0.0, 0.0).unwrap();
    let r = x_membership(&s0, &solved(1.0, 0.0, 0.0, 2048), 0.5).unwrap();
    assert_eq!(r.verdict, Membership::Member, "{r:?}");
    assert!((r.n_m.unwrap() - 2.0 / 1.5).abs() < 1e-12);
    assert!(x_membership(&s0, &solved(1.0, 0.0, 0.0, 512), 1.0).is_err());
}
