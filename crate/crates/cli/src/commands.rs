//! One function per subcommand. Each turns a validated configuration into
//! [`Artifacts`]; nothing here touches the file system.

use rdsw_core::cocycles::{estimate_spectrum, verify_lc_rate};
use rdsw_core::limit_laws::{clt_test, estimate_sigma2, lil_statistic};
use rdsw_core::lyapunov::{
    default_epsilons, distortion_report, estimate_gamma, ld_curve, modulus_of_continuity, sync_ld_curve, MODULUS_GRID,
};
use rdsw_core::measures::{estimate_stationary, wasserstein1_to_lebesgue};
use rdsw_core::operator::{build_laplace_markov, build_transfer_ulam, leading_eigen, spectral_gap};
use rdsw_core::parallel::map_replicas;
use rdsw_core::synchronization::{average_sync_sum, fit_sync_rate, paired_orbit};
use rdsw_core::verify;
use rdsw_core::words::derive_seed;
use rdsw_core::{gallery, LdCurve, Point};
use serde_json::json;

use crate::config::{projective_point, scalar, system_point, CommandName, ExperimentConfig, OperatorChoice};
use crate::error::CliError;
use crate::output::{Artifacts, Cell, Table};

type Outcome = Result<Artifacts, CliError>;

fn run_err(command: CommandName) -> impl Fn(rdsw_core::Error) -> CliError {
    move |source| CliError::Run {
        command: command.to_string(),
        source,
    }
}

pub fn stationary(cfg: &ExperimentConfig, seed: u64) -> Outcome {
    let err = run_err(CommandName::Stationary);
    let sys = cfg.require_system()?;
    let burn_in = cfg.params.burn_in.unwrap_or(1000);
    let samples = cfg.params.samples.unwrap_or(100_000);
    let m = estimate_stationary(sys, burn_in, samples, seed).map_err(&err)?;
    let mut out = Artifacts::default();
    let w1 = if let Some(coords) = m.coords() {
        let mut t = Table::new("stationary", &["coordinate", "weight"]);
        for (x, w) in coords.iter().zip(m.weights()) {
            t.push(vec![(*x).into(), (*w).into()]);
        }
        out.table(t);
        Some(wasserstein1_to_lebesgue(&m).map_err(&err)?)
    } else {
        let mut t = Table::new("stationary", &["atom", "component", "value", "weight"]);
        for k in 0..m.len() {
            if let Point::Projective(p) = m.point(k) {
                for (c, v) in p.representative().iter().enumerate() {
                    t.push(vec![k.into(), c.into(), (*v).into(), m.weights()[k].into()]);
                }
            }
        }
        out.table(t);
        None
    };
    out.summary(
        "summary",
        &json!({
            "space": sys.space().name(),
            "burn_in": burn_in,
            "samples": samples,
            "effective_size": m.effective_size(),
            "w1_to_lebesgue": w1,
        }),
    );
    Ok(out)
}

pub fn sync(cfg: &ExperimentConfig, seed: u64) -> Outcome {
    let err = run_err(CommandName::Sync);
    let sys = cfg.require_system()?;
    let p = &cfg.params;
    let x = system_point(sys, p.x.as_ref().ok_or(CliError::Missing("params.x"))?, "x")?;
    let y = system_point(sys, p.y.as_ref().ok_or(CliError::Missing("params.y"))?, "y")?;
    let n = p.n.unwrap_or(100);
    let replicas = p.replicas.unwrap_or(32);
    let traces = map_replicas(replicas, |r| {
        let mut word = sys.word_stream(seed, r);
        paired_orbit(sys, &x, &y, &mut word, n)
    });
    let mut out = Artifacts::default();
    let mut dist = Table::new("traces", &["replica", "step", "distance"]);
    let mut fits = Table::new("fits", &["replica", "rate", "intercept", "r2", "censored_at", "points_used"]);
    let mut rates = Vec::new();
    for (r, trace) in traces.into_iter().enumerate() {
        let trace = trace.map_err(&err)?;
        for (k, d) in trace.distances.iter().enumerate() {
            dist.push(vec![r.into(), k.into(), (*d).into()]);
        }
        match fit_sync_rate(&trace) {
            Ok(f) => {
                rates.push(f.rate);
                fits.push(vec![
                    r.into(),
                    f.rate.into(),
                    f.intercept.into(),
                    f.r2.into(),
                    f.censored_at.into(),
                    f.points_used.into(),
                ]);
            }
            Err(_) => fits.push(vec![r.into(), Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty]),
        }
    }
    out.table(dist);
    out.table(fits);
    let mean_rate = (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64);
    let mut summary = json!({
        "n": n,
        "replicas": replicas,
        "initial_distance": sys.space().distance(&x, &y).map_err(&err)?,
        "mean_rate": mean_rate,
        "fitted_replicas": rates.len(),
    });
    if let Some(alpha) = p.alpha {
        let avg_seed = derive_seed(seed, 0xa5);
        let avg = average_sync_sum(sys, &x, &y, alpha, n, replicas, avg_seed).map_err(&err)?;
        let mut t = Table::new("average_sum", &["step", "increment", "partial_sum"]);
        for (k, (inc, sum)) in avg.increments.iter().zip(&avg.partial_sums).enumerate() {
            t.push(vec![k.into(), (*inc).into(), (*sum).into()]);
        }
        out.table(t);
        summary["alpha"] = json!(alpha);
        summary["average_sum_bounded"] = json!(avg.bounded);
        summary["average_sum_final"] = json!(avg.partial_sums.last());
    }
    out.summary("summary", &summary);
    Ok(out)
}

pub fn limits(cfg: &ExperimentConfig, seed: u64) -> Outcome {
    let err = run_err(CommandName::Limits);
    let sys = cfg.require_system()?;
    let p = &cfg.params;
    let h = cfg.observable(sys.space())?;
    let x0 = p.x0.unwrap_or(0.0);
    let n = p.n.unwrap_or(1000);
    let replicas = p.replicas.unwrap_or(1000);
    let lil_n_max = p.lil_n_max.unwrap_or(10_000);
    let lil_replicas = p.lil_replicas.unwrap_or(32);
    let sig = estimate_sigma2(sys, &h, n, replicas, derive_seed(seed, 1)).map_err(&err)?;
    let clt = clt_test(sys, &h, x0, n, replicas, derive_seed(seed, 2)).map_err(&err)?;
    let lil = lil_statistic(sys, &h, x0, lil_n_max, derive_seed(seed, 3), lil_replicas).map_err(&err)?;
    let mut out = Artifacts::default();
    let mut t = Table::new("clt", &["replica", "normalized"]);
    for (r, z) in clt.normalized.iter().enumerate() {
        t.push(vec![r.into(), (*z).into()]);
    }
    out.table(t);
    let mut t = Table::new("lil", &["replica", "statistic"]);
    for (r, s) in lil.statistics.iter().enumerate() {
        t.push(vec![r.into(), (*s).into()]);
    }
    out.table(t);
    out.summary(
        "summary",
        &json!({
            "observable": h,
            "x0": x0,
            "sigma2": sig,
            "clt": {
                "ks_stat": clt.ks_stat,
                "threshold": clt.threshold,
                "verdict": clt.verdict,
                "pass": clt.pass(),
                "nu_hat": clt.nu_hat,
                "sigma2_hat": clt.sigma2_hat,
                "n": clt.n,
                "replicas": clt.replicas,
            },
            "lil": {
                "median": lil.median,
                "pass": lil.pass,
                "nu_hat": lil.nu_hat,
                "sigma2_hat": lil.sigma2_hat,
                "n_max": lil_n_max,
                "replicas": lil_replicas,
            },
        }),
    );
    Ok(out)
}

pub fn lyapunov(cfg: &ExperimentConfig, seed: u64) -> Outcome {
    let err = run_err(CommandName::Lyapunov);
    let sys = cfg.require_system()?;
    let p = &cfg.params;
    let x0 = p.x0.unwrap_or(0.0);
    let n = p.n.unwrap_or(10_000);
    let replicas = p.replicas.unwrap_or(32);
    let gamma = estimate_gamma(sys, n, replicas, x0, seed).map_err(&err)?;
    let mut out = Artifacts::default();
    if let Some(deltas) = &p.deltas {
        let omega = modulus_of_continuity(sys, deltas, MODULUS_GRID).map_err(&err)?;
        let mut t = Table::new("modulus", &["delta", "omega"]);
        for (d, w) in omega {
            t.push(vec![d.into(), w.into()]);
        }
        out.table(t);
    }
    out.summary("gamma", &gamma);
    if let Some(y) = &p.y {
        let y = scalar(y, "y")?;
        let ladder = p.deltas.clone().unwrap_or_else(|| vec![1e-4, 1e-3, 1e-2, 1e-1]);
        let report = distortion_report(sys, x0, y, n, replicas, &ladder, derive_seed(seed, 0xd1)).map_err(&err)?;
        out.summary("distortion", &report);
    }
    Ok(out)
}

fn ld_tables(out: &mut Artifacts, curve: &LdCurve) {
    let mut t = Table::new("ld", &["epsilon", "n", "prob", "ci_low", "ci_high", "exact"]);
    for c in &curve.cells {
        t.push(vec![
            c.epsilon.into(),
            c.n.into(),
            c.prob.into(),
            c.ci_low.into(),
            c.ci_high.into(),
            c.exact.into(),
        ]);
    }
    out.table(t);
    let mut t = Table::new("rates", &["epsilon", "fitted_rate"]);
    for (e, r) in curve.epsilons.iter().zip(&curve.fitted_rates) {
        // +inf when every probability vanished
        let cell = if r.is_finite() { Cell::Real(*r) } else { Cell::Text("inf".into()) };
        t.push(vec![(*e).into(), cell]);
    }
    out.table(t);
}

pub fn ld(cfg: &ExperimentConfig, seed: u64) -> Outcome {
    let err = run_err(CommandName::Ld);
    let sys = cfg.require_system()?;
    let p = &cfg.params;
    let x0 = match &p.x {
        Some(x) => scalar(x, "x")?,
        None => p.x0.unwrap_or(0.0),
    };
    let horizons = p.horizons.clone().unwrap_or_else(|| vec![4, 8, 12, 16]);
    let replicas = p.replicas.unwrap_or(10_000);
    let gamma_hat = match p.gamma_hat {
        Some(g) => g,
        None => estimate_gamma(sys, 10_000, 32, x0, derive_seed(seed, 0x6a)).map_err(&err)?.gamma,
    };
    let epsilons = p.epsilons.clone().unwrap_or_else(|| default_epsilons(gamma_hat));
    let curve = match &p.y {
        Some(y) => {
            let y = scalar(y, "y")?;
            sync_ld_curve(sys, x0, y, &epsilons, &horizons, replicas, seed, gamma_hat)
        }
        None => ld_curve(sys, x0, &epsilons, &horizons, replicas, seed, gamma_hat),
    }
    .map_err(&err)?;
    let mut out = Artifacts::default();
    ld_tables(&mut out, &curve);
    out.summary(
        "summary",
        &json!({
            "mode": if p.y.is_some() { "pair" } else { "derivative" },
            "gamma_hat": curve.gamma_hat,
            "h_hat": curve.h_hat,
            "h_r2": curve.h_r2,
            "unusable_horizons": curve.unusable_horizons,
            "mean_log_gap": curve.mean_log_gap,
            "monotone_in_epsilon": curve.monotone_in_epsilon(),
            "replicas": replicas,
        }),
    );
    Ok(out)
}

pub fn cocycle(cfg: &ExperimentConfig, seed: u64) -> Outcome {
    let err = run_err(CommandName::Cocycle);
    let c = cfg.require_cocycle()?;
    let p = &cfg.params;
    let n = p.n.unwrap_or(10_000);
    let replicas = p.replicas.unwrap_or(32);
    let spec = estimate_spectrum(c, n, replicas, seed).map_err(&err)?;
    let mut out = Artifacts::default();
    let mut t = Table::new("spectrum", &["index", "chi", "stderr"]);
    for (k, (chi, se)) in spec.chis.iter().zip(&spec.stderr).enumerate() {
        t.push(vec![k.into(), (*chi).into(), (*se).into()]);
    }
    out.table(t);
    let mut summary = json!({
        "spectrum": spec,
        "mean_log_det": c.mean_log_det(),
    });
    if let Some(x) = &p.x {
        let x = projective_point(x, "x")?;
        let radius = p.radius.unwrap_or(1e-3);
        let lc_n = p.lc_n.unwrap_or(200);
        let lc_replicas = p.lc_replicas.unwrap_or(1000);
        let lc = verify_lc_rate(c, &x, radius, lc_n, lc_replicas, derive_seed(seed, 0x1c)).map_err(&err)?;
        summary["local_contraction"] = json!({
            "report": lc,
            "radius": radius,
            "n": lc_n,
            "replicas": lc_replicas,
        });
    }
    out.summary("summary", &summary);
    Ok(out)
}

pub fn ulam(cfg: &ExperimentConfig, _seed: u64) -> Outcome {
    let err = run_err(CommandName::Ulam);
    let sys = cfg.require_system()?;
    let p = &cfg.params;
    let k = p.k_cells.unwrap_or(256);
    let op = match p.operator.unwrap_or_default() {
        OperatorChoice::Transfer => build_transfer_ulam(sys, k),
        OperatorChoice::LaplaceMarkov => build_laplace_markov(sys, k),
    }
    .map_err(&err)?;
    let lead = leading_eigen(&op, 1e-13, 100_000);
    let spectrum = spectral_gap(&op, p.eigenvalues.unwrap_or(4)).map_err(&err)?;
    let mut out = Artifacts::default();
    let mut t = Table::new("stationary", &["index", "block", "left", "right", "mass"]);
    for (i, m) in lead.vector.iter().enumerate() {
        let (b, c) = (i / k, i % k);
        let h = 1.0 / k as f64;
        t.push(vec![i.into(), b.into(), (c as f64 * h).into(), ((c + 1) as f64 * h).into(), (*m).into()]);
    }
    out.table(t);
    let mut t = Table::new("spectrum", &["index", "re", "im", "modulus"]);
    for (i, ((re, im), m)) in spectrum.eigenvalues.iter().zip(&spectrum.moduli).enumerate() {
        t.push(vec![i.into(), (*re).into(), (*im).into(), (*m).into()]);
    }
    out.table(t);
    if p.write_matrix.unwrap_or(false) {
        let mut t = Table::new("matrix", &["row", "col", "value"]);
        for r in 0..op.dim() {
            for (c, v) in op.row(r) {
                t.push(vec![r.into(), c.into(), v.into()]);
            }
        }
        out.table(t);
    }
    out.summary(
        "summary",
        &json!({
            "kind": op.kind(),
            "cells": op.cells(),
            "blocks": op.blocks(),
            "dim": op.dim(),
            "nnz": op.nnz(),
            "exact_overlaps": op.is_exact(),
            "leading_eigenvalue": lead.eigenvalue,
            "leading_residual": lead.residual,
            "leading_converged": lead.converged,
            "gap": spectrum.gap,
            "method": spectrum.method,
        }),
    );
    Ok(out)
}

/// Runs the acceptance cases; returns the artifacts and the failure count.
pub fn verify_cases(cases: &[u32]) -> Result<(Artifacts, usize), CliError> {
    let mut out = Artifacts::default();
    let mut table = Table::new("verify", &["case", "title", "pass", "failed_checks"]);
    let mut failed = 0;
    for &case in cases {
        let title = verify::title(case).ok_or_else(|| CliError::Invalid(format!("unknown case {case}")))?;
        let start = std::time::Instant::now();
        let outcome = verify::run_case(case).map_err(|source| CliError::Run {
            command: format!("verify case {case}"),
            source,
        })?;
        let secs = start.elapsed().as_secs_f64();
        let failures = outcome.failures().join(" ");
        if outcome.pass {
            println!("PASS  {case:>2}  {title}  [{secs:.2}s]");
        } else {
            failed += 1;
            println!("FAIL  {case:>2}  {title}  [{secs:.2}s]  failed: {failures}");
        }
        table.push(vec![case.into(), title.into(), outcome.pass.into(), failures.as_str().into()]);
        out.text(format!("case_{case:02}.txt"), outcome.render());
    }
    out.table(table);
    Ok((out, failed))
}

pub fn print_gallery() {
    for e in gallery::list_gallery() {
        println!("{:<20} {:<8} {}", e.id, e.kind, e.space);
        for f in &e.facts {
            println!("    - {f}");
        }
    }
}
