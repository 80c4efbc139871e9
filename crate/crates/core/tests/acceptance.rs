//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

use std::collections::HashMap;
use std::time::Instant;

use fragstat_core::asymptotics::{ell0_estimate, small_fit, tail_fit, SmallRegime};
use fragstat_core::closed_form::{graded_grid, normalize, p_transform_check};
use fragstat_core::diagnostics::{identity_in4_residual, shape_checks, x_minus1_check, CriterionVerdict};
use fragstat_core::kernels::{delta_m, CoefficientSpec};
use fragstat_core::solver::{build_grid, solve_conservative, solve_nullspace, SizeDistribution, SolverConfig};
use fragstat_core::special::bessel_k;

type Outcome = (bool, String);

#[derive(Default)]
struct Solutions {
    cache: HashMap<String, SizeDistribution>,
    seconds: HashMap<String, f64>,
}

impl Solutions {
    fn key(spec: &CoefficientSpec, n: usize) -> String {
        format!("{:?}|{}|{}|{n}", spec.daughter.variant, spec.rate.amplitude, spec.rate.gamma)
    }

    fn get(&mut self, spec: &CoefficientSpec, n: usize) -> SizeDistribution {
        let key = Self::key(spec, n);
        if let Some(f) = self.cache.get(&key) {
            return f.clone();
        }
        let t = Instant::now();
        let f = solve_nullspace(spec, &SolverConfig::with_n(n)).unwrap_or_else(|e| panic!("{key}: {e}"));
        self.seconds.insert(key.clone(), t.elapsed().as_secs_f64());
        self.cache.insert(key, f.clone());
        f
    }
}

fn power(amplitude: f64, gamma: f64, nu: f64) -> CoefficientSpec {
    CoefficientSpec::power_law(amplitude, gamma, nu).unwrap()
}

fn ex32() -> CoefficientSpec {
    CoefficientSpec::log_power(1.0, 0.0, 0.5).unwrap()
}

fn closed_form_error(f: &SizeDistribution, gamma: f64, nu: f64) -> f64 {
    let sol = normalize(1.0, gamma, nu, 1e-12).unwrap();
    f.nodes()
        .iter()
        .zip(&f.values)
        .filter(|(x, _)| (0.05..=10.0).contains(*x))
        .map(|(&x, v)| (v / sol.eval(x).unwrap() - 1.0).abs())
        .fold(0.0, f64::max)
}

fn reproduction(s: &mut Solutions) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for gamma in [0.0, 2.0] {
        let spec = power(1.0, gamma, 0.0);
        let f = s.get(&spec, 2048);
        let secs = s.seconds[&Solutions::key(&spec, 2048)];
        let e = closed_form_error(&f, gamma, 0.0);
        ok &= e <= 1e-3 && secs <= 30.0;
        parts.push(format!("gamma={gamma}: sup rel err {e:.2e}, {secs:.2}s"));
    }
    (ok, parts.join("; "))
}

fn bessel_half_order() -> Outcome {
    let mut worst: f64 = 0.0;
    for z in [0.01, 0.1, 1.0, 5.0, 20.0] {
        let exact = (std::f64::consts::PI / (2.0 * z)).sqrt() * (-z).exp();
        worst = worst.max((bessel_k(0.5, z).unwrap() / exact - 1.0).abs());
    }
    (worst <= 1e-10, format!("worst rel err {worst:.2e}"))
}

fn identity_suite(s: &mut Solutions) -> Outcome {
    let spec = power(1.0, 0.0, 0.0);
    let fine = s.get(&spec, 2048);
    let coarse = s.get(&spec, 1024);
    let (mut worst, mut worst_ratio) = (0.0f64, f64::INFINITY);
    for theta in [0.0, 0.5, 1.0] {
        for xi in [0.1, 1.0, 5.0] {
            let r = identity_in4_residual(&spec, &fine, theta, xi).unwrap().rel_residual;
            let rc = identity_in4_residual(&spec, &coarse, theta, xi).unwrap().rel_residual;
            worst = worst.max(r);
            worst_ratio = worst_ratio.min(rc / r);
        }
    }
    (worst <= 1e-3 && worst_ratio >= 2.0, format!("worst rel residual {worst:.2e}, smallest reduction on doubling n {worst_ratio:.1}x"))
}

fn x_minus1(s: &mut Solutions) -> Outcome {
    let base = x_minus1_check(&power(1.0, 0.0, 0.0), &s.get(&power(1.0, 0.0, 0.0), 2048)).unwrap();
    let rhs = base.rhs.finite().unwrap_or(f64::INFINITY);
    let base_ok = (base.lhs.value - 0.5).abs() <= 1e-3 && (rhs - 0.5).abs() <= 1e-3;
    let ex = x_minus1_check(&ex32(), &s.get(&ex32(), 2048)).unwrap();
    let ex_ok = ex.verdict == CriterionVerdict::BothDivergent;
    (
        base_ok && ex_ok,
        format!("base lhs {:.8} rhs {rhs:.8}; log-power daughter {}", base.lhs.value, ex.verdict.name()),
    )
}

fn small_regimes(s: &mut Solutions) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for nu in [-1.2, -1.5, -1.8] {
        let r = small_fit(&s.get(&power(1.0, 0.0, nu), 2048), None).unwrap();
        ok &= r.regime == SmallRegime::Power && (r.fitted_exponent - (nu + 2.0)).abs() <= 0.05;
        parts.push(format!("nu={nu}: {} {:.4}", r.regime.name(), r.fitted_exponent));
    }
    for nu in [0.0, -0.5] {
        let spec = power(1.0, 0.0, nu);
        let f = s.get(&spec, 2048);
        let r = small_fit(&f, None).unwrap();
        let l0 = ell0_estimate(&spec, &f).unwrap();
        ok &= r.regime == SmallRegime::Linear && (r.prefactor_hat / l0 - 1.0).abs() <= 0.02;
        parts.push(format!("nu={nu}: {} slope {:.5} vs {l0:.5}", r.regime.name(), r.prefactor_hat));
    }
    let r = small_fit(&s.get(&power(1.0, 0.0, -1.0), 2048), None).unwrap();
    ok &= r.regime == SmallRegime::ZLog;
    parts.push(format!("nu=-1: {}", r.regime.name()));
    let r = small_fit(&s.get(&ex32(), 2048), None).unwrap();
    ok &= r.regime == SmallRegime::LogPower && (r.fitted_exponent + 0.5).abs() <= 0.05;
    parts.push(format!("log-power: {} {:.4}", r.regime.name(), r.fitted_exponent));
    (ok, parts.join("; "))
}

fn large_size(s: &mut Solutions) -> Outcome {
    let (mut ok, mut worst_alpha, mut worst_rate, mut cases) = (true, 0.0f64, 0.0f64, 0);
    for gamma in [0.0, 1.0, 2.0] {
        for amplitude in [1.0, 4.0] {
            let spec = power(amplitude, gamma, 0.0);
            let sol = normalize(amplitude, gamma, 0.0, 1e-12).unwrap();
            let grid = build_grid(&spec, &SolverConfig::default()).unwrap();
            let values = grid.nodes().iter().map(|&x| sol.eval(x).unwrap()).collect();
            let exact = SizeDistribution::from_values(&spec, grid, values).unwrap();
            for f in [exact, s.get(&spec, 2048)] {
                let r = tail_fit(&spec, &f, None, None).unwrap();
                let ea = (r.alpha_hat / (0.5 * (gamma + 2.0)) - 1.0).abs();
                let er = (r.rate_hat / amplitude.sqrt() - 1.0).abs();
                worst_alpha = worst_alpha.max(ea);
                worst_rate = worst_rate.max(er);
                ok &= ea <= 0.02 && er <= 0.02 && r.lower_bound_ok && r.upper_bound_ok;
                cases += 1;
            }
        }
    }
    (ok, format!("{cases} fits, worst alpha err {worst_alpha:.2e}, worst rate err {worst_rate:.2e}, bounds hold: {ok}"))
}

fn deficiency() -> Outcome {
    let grid = [1.1, 1.5, 2.0, 3.0, 5.0, 10.0, 20.0];
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let daughters = [power(1.0, 0.0, 0.0), power(1.0, 0.0, -1.0), power(1.0, 0.0, -1.5), ex32()];
    for spec in &daughters {
        let d: Vec<f64> = grid.iter().map(|&m| delta_m(spec, m).unwrap()).collect();
        ok &= d.windows(2).all(|w| w[1] >= w[0]);
        if let Some(nu) = spec.power_law_nu() {
            for (&m, v) in grid.iter().zip(&d) {
                worst = worst.max((v - (1.0 - (nu + 2.0) / (m + nu + 1.0))).abs());
            }
        }
    }
    ok &= worst <= 1e-10;
    (ok, format!("monotone on {} daughters, worst analytic deviation {worst:.2e}", daughters.len()))
}

fn shape(s: &Solutions) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for f in s.cache.values() {
        let r = shape_checks(f);
        ok &= r.positive && r.ratio_monotone;
        worst = worst.max(r.max_violation);
    }
    (ok, format!("{} solver outputs, largest f/x increase {worst:.1e}", s.cache.len()))
}

fn cross_method(s: &mut Solutions) -> Outcome {
    let specs = [
        power(1.0, 0.0, 0.0),
        power(1.0, 1.0, 0.0),
        power(1.0, 2.0, 0.0),
        power(1.0, 0.0, -1.0),
        power(1.0, 0.0, -1.5),
        ex32(),
    ];
    let mut ok = true;
    let mut worst_margin: f64 = 0.0;
    for spec in &specs {
        let a = s.get(spec, 2048);
        let b = solve_conservative(spec, &SolverConfig::default()).unwrap();
        let peak = a.values.iter().fold(0.0f64, |m, v| m.max(*v));
        let diff = a.values.iter().zip(&b.values).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) / peak;
        let res = [a.residual_sfd1, a.residual_aeq1, b.residual_sfd1, b.residual_aeq1].iter().fold(0.0f64, |m, v| m.max(*v));
        ok &= diff <= 3.0 * res;
        worst_margin = worst_margin.max(diff / res);
        let sb = shape_checks(&b);
        ok &= sb.positive && sb.ratio_monotone;
    }
    (ok, format!("{} specs, largest difference / residual {worst_margin:.2e} (limit 3)", specs.len()))
}

fn p_transform() -> Outcome {
    let sol = normalize(1.0, 0.0, 0.0, 1e-12).unwrap();
    let r: Vec<_> = [500, 1000, 2000, 4000]
        .iter()
        .map(|&n| p_transform_check(&sol, &graded_grid(0.1, 15.0, n).unwrap()).unwrap())
        .collect();
    let at2000 = &r[2];
    let mut order = f64::INFINITY;
    for w in r.windows(2) {
        order = order
            .min((w[0].transform_residual / w[1].transform_residual).log2())
            .min((w[0].identity_residual / w[1].identity_residual).log2());
    }
    (
        at2000.transform_residual <= 1e-4 && at2000.identity_residual <= 1e-4 && order >= 2.0,
        format!(
            "n=2000 residuals {:.2e} / {:.2e}, observed order {order:.3}",
            at2000.transform_residual, at2000.identity_residual
        ),
    )
}

fn main() {
    let mut s = Solutions::default();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "closed-form reproduction", reproduction(&mut s)));
    results.push((2, "half-order Bessel accuracy", bessel_half_order()));
    results.push((3, "integral identity suite", identity_suite(&mut s)));
    results.push((4, "X_{-1} criterion", x_minus1(&mut s)));
    results.push((5, "small-size regimes", small_regimes(&mut s)));
    results.push((6, "large-size behavior", large_size(&mut s)));
    results.push((7, "deficiency monotonicity", deficiency()));
    results.push((9, "cross-method agreement", cross_method(&mut s)));
    results.push((8, "positivity and monotone ratio", shape(&s)));
    results.push((10, "P-transform cross-check", p_transform()));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (k, name, (ok, detail)) in &results {
        println!("criterion {k:>2} {} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
