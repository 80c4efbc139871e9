use log::info;
use serde_json::{json, Value};

use fragstat_core::asymptotics::{
    auto_tail_window, default_mu, small_classify, small_size_report, tail_bounds_check, tail_fit_samples,
};
use fragstat_core::closed_form::{graded_grid, normalize, MomentRule};
use fragstat_core::diagnostics::{
    identity_in4_residual, itheta, moment, shape_checks, small_limit, x_minus1_check, MomentReport, SmallLimit,
};
use fragstat_core::kernels::{check_assumptions, delta_m, Integral};
use fragstat_core::solver::{build_grid, solve as run_solver, SizeDistribution};

use crate::config::{input_error, num, InputError, RawConfig, Resolved};
use crate::output::{artifact, csv_text, read_csv, Sink};
use crate::{Common, SolveFlags, Source};

fn load(common: &Common, flags: Option<&SolveFlags>) -> anyhow::Result<(Resolved, Sink)> {
    let mut raw = RawConfig::load(&common.spec)?;
    for s in &common.set {
        raw.set(s)?;
    }
    if let Some(f) = flags {
        if let Some(n) = f.n {
            raw.insert("solver.n", n.to_string());
        }
        if let Some(x) = f.xmax {
            raw.insert("solver.x_max", x.to_string());
        }
        if let Some(form) = &f.formulation {
            raw.insert("solver.formulation", form.clone());
        }
    }
    let resolved = raw.resolve()?;
    Ok((resolved, Sink { out: common.out.clone() }))
}

fn distribution(r: &Resolved, source: &Source) -> anyhow::Result<SizeDistribution> {
    match &source.profile {
        None => {
            let f = run_solver(&r.spec, &r.solver)?;
            info!("solved with {} nodes, r_aeq1 = {:.3e}", f.values.len(), f.residual_aeq1);
            Ok(f)
        }
        Some(path) => {
            let (header, cols) = read_csv(path)?;
            let col = |name: &str| {
                header
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| InputError(format!("{}: missing column `{name}`", path.display())))
            };
            let (ix, iv) = (col("x")?, col("f")?);
            let grid = build_grid(&r.spec, &r.solver)?;
            let x = &cols[ix];
            if x.len() != grid.len() {
                return input_error(format!(
                    "profile has {} rows but the configured grid has {} nodes",
                    x.len(),
                    grid.len()
                ));
            }
            if let Some(i) = x.iter().zip(grid.nodes()).position(|(a, b)| (a - b).abs() > 1e-12 * b.abs()) {
                return input_error(format!(
                    "profile node {i} ({:e}) does not match the configured grid ({:e})",
                    x[i],
                    grid.nodes()[i]
                ));
            }
            Ok(SizeDistribution::from_values(&r.spec, grid, cols[iv].clone())?)
        }
    }
}

fn parse_window(w: &str) -> anyhow::Result<(f64, f64)> {
    let parts: Vec<&str> = w.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return input_error(format!("window `{w}` must be lo,hi"));
    }
    let p = |s: &str| s.parse::<f64>().map_err(|_| InputError(format!("window bound `{s}` is not a number")));
    Ok((p(parts[0])?, p(parts[1])?))
}

fn integral(v: Integral) -> Value {
    match v {
        Integral::Finite(x) => num(x),
        Integral::Divergent => Value::from("divergent"),
    }
}

fn moment_json(m: &MomentReport) -> Value {
    json!({
        "order": m.order,
        "value": num(m.value),
        "verdict": m.verdict.name(),
        "bands": m.bands.iter().map(|b| num(*b)).collect::<Vec<_>>(),
        "remainder": integral(m.remainder),
    })
}

fn distribution_json(f: &SizeDistribution) -> Value {
    json!({
        "method": f.method.name(),
        "n": f.values.len(),
        "x_max": num(f.grid.x_max()),
        "m1": num(f.m1),
        "residual_sfd1": num(f.residual_sfd1),
        "residual_aeq1": num(f.residual_aeq1),
    })
}

pub fn closed_form(common: &Common, points: usize, lo: f64, hi: Option<f64>) -> anyhow::Result<()> {
    let (r, sink) = load(common, None)?;
    let Some(nu) = r.spec.power_law_nu() else {
        return input_error("the explicit solution exists only for the power_law daughter variant");
    };
    let sol = normalize(r.spec.rate.amplitude, r.spec.rate.gamma, nu, 1e-12)?;
    let hi = hi.unwrap_or_else(|| sol.truncation_point(1e-16));
    let z = graded_grid(lo, hi, points)?;
    let mut f = Vec::with_capacity(z.len());
    for &zi in &z {
        f.push(sol.eval(zi)?);
    }
    let small: Vec<f64> = z.iter().map(|&v| sol.small_size_asymptote(v)).collect();
    let large: Vec<f64> = z.iter().map(|&v| sol.large_size_asymptote(v)).collect();
    sink.csv("closed_form.csv", &csv_text(&["z", "f", "small_asym", "large_asym"], &[&z, &f, &small, &large]))?;
    let m1 = sol.moment(1.0, MomentRule::GaussKronrod, 1e-12)?;
    let report = json!({
        "c": num(sol.c),
        "alpha": num(sol.alpha),
        "order": num(sol.order),
        "m1": num(m1),
        "rows": z.len(),
        "z_range": [num(lo), num(hi)],
    });
    sink.json("closed_form.json", &artifact("closed-form", &r.table, report))
}

pub fn solve(common: &Common, flags: &SolveFlags) -> anyhow::Result<()> {
    let (r, sink) = load(common, Some(flags))?;
    let f = run_solver(&r.spec, &r.solver)?;
    let x = f.nodes();
    let ratio = f.ratios();
    sink.csv("profile.csv", &csv_text(&["x", "f", "f_over_x"], &[x, &f.values, &ratio]))?;
    let g = f.grid.grading();
    let mut report = distribution_json(&f);
    report["iterations"] = Value::from(f.iterations);
    report["singular_values"] = match f.singular_values {
        Some((a, b)) => json!([num(a), num(b)]),
        None => Value::Null,
    };
    report["grid"] = json!({
        "n": x.len(),
        "origin": num(g.origin),
        "x_max": num(g.x_max),
        "alpha": num(g.alpha),
        "geometric_share": num(g.geometric_share),
    });
    if sink.out.is_some() {
        println!(
            "{}: n = {}, m1 = {:.12}, r_sfd1 = {:.3e}, r_aeq1 = {:.3e}",
            f.method,
            x.len(),
            f.m1,
            f.residual_sfd1,
            f.residual_aeq1
        );
    }
    sink.json("solve.json", &artifact("solve", &r.table, report))
}

const THETAS: [f64; 3] = [0.0, 0.5, 1.0];
const IDENTITY_XI: [f64; 3] = [0.1, 1.0, 5.0];
const MONOTONE_XI: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];

pub fn verify(common: &Common, source: &Source) -> anyhow::Result<()> {
    let (r, sink) = load(common, Some(&source.solve))?;
    let f = distribution(&r, source)?;
    let spec = &r.spec;
    let shape = shape_checks(&f);
    let mut identities = Vec::new();
    let mut worst_identity: f64 = 0.0;
    for theta in THETAS {
        for xi in IDENTITY_XI {
            let rep = identity_in4_residual(spec, &f, theta, xi)?;
            worst_identity = worst_identity.max(rep.rel_residual);
            identities.push(json!({
                "theta": theta, "xi": xi, "lhs": num(rep.lhs), "rhs": num(rep.rhs),
                "abs_residual": num(rep.abs_residual), "rel_residual": num(rep.rel_residual),
            }));
        }
    }
    let mut monotone = Vec::new();
    let mut all_monotone = true;
    for theta in THETAS {
        let mut vals = Vec::new();
        for xi in MONOTONE_XI {
            vals.push(itheta(spec, &f, theta, xi)?);
        }
        let ok = vals.windows(2).all(|w| w[0] >= w[1]) && vals.iter().all(|v| *v >= 0.0);
        all_monotone &= ok;
        monotone.push(json!({
            "theta": theta, "xi": MONOTONE_XI, "values": vals.iter().map(|v| num(*v)).collect::<Vec<_>>(),
            "non_increasing": ok,
        }));
    }
    let xm1 = x_minus1_check(spec, &f)?;
    let limit = small_limit(&f);
    let limit_value = match limit.limit {
        SmallLimit::Finite(v) => num(v),
        SmallLimit::Infinite => Value::from("inf"),
    };
    let report = json!({
        "distribution": distribution_json(&f),
        "shape": {
            "positive": shape.positive,
            "ratio_monotone": shape.ratio_monotone,
            "max_violation": num(shape.max_violation),
            "first_violation": shape.first_violation,
            "first_nonpositive": shape.first_nonpositive,
        },
        "identities": identities,
        "identity_worst_rel_residual": num(worst_identity),
        "itheta_monotone": monotone,
        "x_minus1": {
            "lhs": moment_json(&xm1.lhs),
            "rhs": integral(xm1.rhs),
            "rel_difference": num(xm1.rel_difference),
            "verdict": xm1.verdict.name(),
        },
        "small_limit": {
            "limit": limit_value,
            "samples": limit.samples.iter().map(|v| num(*v)).collect::<Vec<_>>(),
            "sample_points": limit.sample_points.iter().map(|v| num(*v)).collect::<Vec<_>>(),
        },
        "moments": [moment_json(&moment(&f, 0.0)), moment_json(&moment(&f, 1.0))],
        "all_monotone": all_monotone,
    });
    if sink.out.is_some() {
        println!(
            "r_aeq1 = {:.3e}, worst identity residual = {:.3e}, shape ok = {}, X-1 verdict = {}",
            f.residual_aeq1,
            worst_identity,
            shape.positive && shape.ratio_monotone,
            xm1.verdict.name()
        );
    }
    sink.json("verify.json", &artifact("verify", &r.table, report))
}

pub fn tailfit(common: &Common, source: &Source, window: Option<&str>, mu: Option<f64>) -> anyhow::Result<()> {
    let (r, sink) = load(common, Some(&source.solve))?;
    let f = distribution(&r, source)?;
    let window = match window {
        Some(w) => parse_window(w)?,
        None => auto_tail_window(&r.spec, &f)?,
    };
    let fit = tail_fit_samples(f.nodes(), &f.values, window)?;
    let mu = mu.unwrap_or_else(|| default_mu(&r.spec));
    let bounds = tail_bounds_check(&r.spec, &f, mu)?;
    let (mut xs, mut fs, mut model) = (Vec::new(), Vec::new(), Vec::new());
    for (&x, &v) in f.nodes().iter().zip(&f.values) {
        if x >= fit.window.0 && x <= fit.window.1 {
            xs.push(x);
            fs.push(v);
            let lf = fit.log_prefactor + fit.algebraic_exponent_hat * x.ln()
                - fit.rate_hat * x.powf(fit.alpha_hat) / fit.alpha_hat;
            model.push(lf.exp());
        }
    }
    sink.csv("tailfit.csv", &csv_text(&["x", "f", "fit"], &[&xs, &fs, &model]))?;
    let report = json!({
        "alpha_hat": num(fit.alpha_hat),
        "rate_hat": num(fit.rate_hat),
        "algebraic_exponent_hat": num(fit.algebraic_exponent_hat),
        "log_prefactor": num(fit.log_prefactor),
        "window": [num(fit.window.0), num(fit.window.1)],
        "nodes": fit.nodes,
        "rms": num(fit.rms),
        "lower_bound_ok": bounds.lower_ok,
        "upper_bound_ok": bounds.upper_ok,
        "kappa_estimate": num(bounds.kappa_estimate),
        "mu_used": num(mu),
        "lower_violation": num(bounds.lower_violation),
        "upper_growth": num(bounds.upper_growth),
        "bounds_range": [num(bounds.range.0), num(bounds.range.1)],
        "expected": { "alpha": num(r.spec.alpha()), "rate": num(r.spec.rate.amplitude.sqrt()) },
        "distribution": distribution_json(&f),
    });
    if sink.out.is_some() {
        println!(
            "alpha = {:.6}, rate = {:.6}, exponent = {:.6}, bounds ok = {}/{}",
            fit.alpha_hat, fit.rate_hat, fit.algebraic_exponent_hat, bounds.lower_ok, bounds.upper_ok
        );
    }
    sink.json("tailfit.json", &artifact("tailfit", &r.table, report))
}

pub fn smallfit(common: &Common, source: &Source, window: Option<&str>) -> anyhow::Result<()> {
    let (r, sink) = load(common, Some(&source.solve))?;
    let f = distribution(&r, source)?;
    let window = window.map(parse_window).transpose()?;
    let rep = small_size_report(&r.spec, &f, window)?;
    let pred = small_classify(&r.spec);
    let predicted_prefactor = match (pred.prefactor_over_lambda0, rep.lambda0) {
        (Some(p), Some(l)) => num(p * l),
        _ => match rep.ell0 {
            Some(l) if pred.exponent == Some(1.0) && pred.lambda.is_none() => num(l),
            _ => Value::Null,
        },
    };
    if let Some(best) = rep.best {
        let (mut xs, mut fs, mut model) = (Vec::new(), Vec::new(), Vec::new());
        for (&x, &v) in f.nodes().iter().zip(&f.values) {
            if x >= rep.window.0 && x <= rep.window.1 {
                xs.push(x);
                fs.push(v);
                model.push(best.eval(x));
            }
        }
        sink.csv("smallfit.csv", &csv_text(&["x", "f", "fit"], &[&xs, &fs, &model]))?;
    }
    let models: Vec<Value> = rep
        .fits
        .iter()
        .map(|m| {
            json!({
                "model": format!("{:?}", m.model).to_lowercase(),
                "exponent": num(m.exponent),
                "prefactor": num(m.prefactor),
                "offset": num(m.offset),
                "rms": num(m.rms),
            })
        })
        .collect();
    let report = json!({
        "regime": rep.regime.name(),
        "fitted_exponent": num(rep.fitted_exponent),
        "prefactor_hat": num(rep.prefactor_hat),
        "window": [num(rep.window.0), num(rep.window.1)],
        "nodes": rep.nodes,
        "models": models,
        "ell0": rep.ell0.map(num),
        "lambda0": rep.lambda0.map(num),
        "lambda": rep.lambda.map(num),
        "prediction": {
            "regime": pred.regime.name(),
            "exponent": pred.exponent.map(num),
            "prefactor": predicted_prefactor,
            "reasons": pred.reasons,
        },
        "distribution": distribution_json(&f),
    });
    if sink.out.is_some() {
        println!(
            "fitted regime {} (exponent {:.6}), predicted {}",
            rep.regime.name(),
            rep.fitted_exponent,
            pred.regime.name()
        );
    }
    sink.json("smallfit.json", &artifact("smallfit", &r.table, report))
}

pub fn moments(common: &Common, source: &Source, orders: &str) -> anyhow::Result<()> {
    let mut ms = Vec::new();
    for o in orders.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m: f64 = o.parse().map_err(|_| InputError(format!("moment order `{o}` is not a number")))?;
        if !(m > -2.0) {
            return input_error(format!("moment order must exceed -2, got {m}"));
        }
        ms.push(m);
    }
    if ms.is_empty() {
        return input_error("no moment orders given");
    }
    let (r, sink) = load(common, Some(&source.solve))?;
    let f = distribution(&r, source)?;
    let reports: Vec<Value> = ms.iter().map(|&m| moment_json(&moment(&f, m))).collect();
    let report = json!({ "moments": reports, "distribution": distribution_json(&f) });
    sink.json("moments.json", &artifact("moments", &r.table, report))
}

pub fn delta(common: &Common, m: f64) -> anyhow::Result<()> {
    let (r, sink) = load(common, None)?;
    let d = delta_m(&r.spec, m)?;
    println!("{d:.10}");
    if sink.out.is_some() {
        sink.json("delta.json", &artifact("delta", &r.table, json!({ "m": num(m), "delta": num(d) })))?;
    }
    Ok(())
}

pub fn assumptions(common: &Common) -> anyhow::Result<()> {
    let (r, sink) = load(common, None)?;
    let rep = check_assumptions(&r.spec);
    let checks: Vec<Value> = rep
        .checks
        .iter()
        .map(|c| json!({ "name": c.name, "passed": c.passed, "margin": num(c.margin), "detail": c.detail }))
        .collect();
    let report = json!({
        "all_passed": rep.all_passed(),
        "checks": checks,
        "delta2": num(rep.delta2),
        "b1_residual": num(rep.b1_residual),
        "b3_sup": num(rep.b3_sup),
    });
    sink.json("assumptions.json", &artifact("assumptions", &r.table, report))
}
