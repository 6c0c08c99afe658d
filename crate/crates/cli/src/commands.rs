use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;

use lazymc_core::bounds::{self, ball_cost, ball_plan, BoundReport};
use lazymc_core::estimator::{empirical_mse, run_chain, RunConfig};
use lazymc_core::metropolis::delta_choice;
use lazymc_core::quadrature::{reference_integral, ReferenceValue};
use lazymc_core::verify::{run_suite, SuiteConfig, SuiteReport};
use lazymc_core::{ChainRun, DensityOracle, Integrand, MseReport};

use crate::output::{csv_float, to_json, write_csv, write_text};
use crate::spec::{usage, Format, RunSpec, VerificationFailed};

pub const CSV_HEADER: [&str; 11] = [
    "d",
    "alpha",
    "delta",
    "n",
    "n0",
    "seed",
    "estimate",
    "reference",
    "rmse",
    "bound",
    "margin",
];

pub const SWEEP_HEADER: [&str; 10] = [
    "d",
    "alpha",
    "eps",
    "delta",
    "phi_metropolis",
    "phi_lazy",
    "n0",
    "n",
    "cost_total",
    "log_cost",
];

#[derive(Debug, Serialize)]
pub struct PlanReport {
    pub dimension: usize,
    pub alpha: f64,
    pub f_sup: f64,
    pub eps: Option<f64>,
    pub delta: f64,
    pub phi_metropolis: f64,
    pub phi_lazy: f64,
    pub density_bound: f64,
    pub n0: u64,
    pub n: u64,
    /// With the published ball-walk constants.
    pub raw_error_bound: f64,
    /// The general error bound at the same burn-in with the certified lazy
    /// conductance and `M = exp(2 alpha)`.
    pub composed: BoundReport,
    pub cost_burn_in: u64,
    pub cost_samples: u64,
    pub cost_total: u64,
}

pub fn plan_report(
    d: usize,
    alpha: f64,
    eps: Option<f64>,
    n: Option<u64>,
    f_sup: f64,
) -> anyhow::Result<PlanReport> {
    // Bounds are per unit sup norm, so the target error scales down by ||f||_inf.
    let n = match (n, eps) {
        (Some(n), _) => n,
        (None, Some(eps)) => ball_cost(d, alpha, eps / f_sup)?.samples,
        (None, None) => return Err(usage("plan needs --eps or -n")),
    };
    if n == 0 {
        return Err(usage("-n must be at least 1"));
    }
    let plan = ball_plan(d, alpha, n)?;
    let composed = bounds::error_bound(plan.phi_lazy, n, plan.n0, plan.density_bound, f_sup)?;
    Ok(PlanReport {
        dimension: d,
        alpha,
        f_sup,
        eps,
        delta: plan.delta,
        phi_metropolis: plan.phi_metropolis,
        phi_lazy: plan.phi_lazy,
        density_bound: plan.density_bound,
        n0: plan.n0,
        n,
        raw_error_bound: plan.raw_error_bound * f_sup,
        composed,
        cost_burn_in: plan.n0,
        cost_samples: n,
        cost_total: plan.cost_total,
    })
}

pub fn cmd_plan(spec: &RunSpec) -> anyhow::Result<()> {
    let d = spec.require_dim()?;
    let alpha = spec.require_alpha()?;
    let eps = spec.require_eps()?;
    let report = plan_report(d, alpha, eps, spec.n, spec.f_sup)?;
    match spec.format {
        Format::Json => write_text(spec.output.as_deref(), &to_json(&report)?),
        Format::Csv => {
            let header = [
                "d",
                "alpha",
                "eps",
                "delta",
                "phi_metropolis",
                "phi_lazy",
                "n0",
                "n",
                "raw_error_bound",
                "composed_error_bound",
                "cost_total",
            ];
            let row = vec![
                d.to_string(),
                csv_float(Some(alpha)),
                csv_float(eps),
                csv_float(Some(report.delta)),
                csv_float(Some(report.phi_metropolis)),
                csv_float(Some(report.phi_lazy)),
                report.n0.to_string(),
                report.n.to_string(),
                csv_float(Some(report.raw_error_bound)),
                csv_float(Some(report.composed.error_bound)),
                report.cost_total.to_string(),
            ];
            write_csv(spec.output.as_deref(), &header, &[row])
        }
    }
}

#[derive(Debug, Serialize)]
pub struct IntegrateReport {
    pub density: String,
    pub integrand: String,
    pub alpha: f64,
    pub reference: ReferenceValue,
    /// The first replication.
    pub run: ChainRun,
    /// Error over all replications; present when there are at least two.
    pub report: Option<MseReport>,
}

pub fn cmd_integrate(spec: &RunSpec) -> anyhow::Result<()> {
    let d = spec.require_dim()?;
    let rho_spec = spec
        .rho
        .as_deref()
        .ok_or_else(|| usage("integrate needs --rho"))?;
    let f_spec = spec
        .f
        .as_deref()
        .ok_or_else(|| usage("integrate needs --f"))?;
    let rho = DensityOracle::parse(rho_spec, d).map_err(|e| usage(format!("--rho: {e}")))?;
    let f = Integrand::parse(f_spec, d).map_err(|e| usage(format!("--f: {e}")))?;
    let n = spec.n.ok_or_else(|| usage("integrate needs -n"))?;
    if n == 0 {
        return Err(usage("-n must be at least 1"));
    }
    if let Some(delta) = spec.delta {
        if !(delta > 0.0 && delta <= 2.0) {
            return Err(usage(format!("--delta must lie in (0, 2], got {delta}")));
        }
    }
    let n0 = spec
        .n0
        .unwrap_or_else(|| bounds::ball_burn_in(d, rho.alpha()));
    let mut cfg = RunConfig::new(n, n0, spec.seed);
    if let Some(delta) = spec.delta {
        cfg = cfg.with_delta(delta);
    }

    let reference = reference_integral(&rho, &f).context("computing the reference value")?;
    let (run, report) = if spec.reps > 1 {
        let (report, mut runs) = empirical_mse(&rho, &f, &cfg, spec.reps, reference.value)?;
        (runs.swap_remove(0), Some(report))
    } else {
        (run_chain(&rho, &f, &cfg)?, None)
    };

    match spec.format {
        Format::Json => {
            let out = IntegrateReport {
                density: rho.label().to_string(),
                integrand: f_spec.trim().to_string(),
                alpha: rho.alpha(),
                reference,
                run,
                report,
            };
            write_text(spec.output.as_deref(), &to_json(&out)?)
        }
        Format::Csv => {
            let (estimate, rmse, bound) = match &report {
                Some(r) => (r.mean_estimate, r.empirical_rmse, r.theoretical_bound),
                None => {
                    let certified = spec.delta.is_none_or(|x| x == delta_choice(d, rho.alpha()));
                    let bound = if certified {
                        let phi = bounds::lazification_conductance(
                            bounds::ball_walk_conductance_lower(d, rho.alpha()),
                        )?;
                        Some(
                            bounds::error_bound(
                                phi,
                                n,
                                n0,
                                (2.0 * rho.alpha()).exp(),
                                f.sup_norm(),
                            )?
                            .error_bound,
                        )
                    } else {
                        None
                    };
                    (run.estimate, (run.estimate - reference.value).abs(), bound)
                }
            };
            let row = vec![
                d.to_string(),
                csv_float(Some(rho.alpha())),
                csv_float(Some(run.delta)),
                n.to_string(),
                n0.to_string(),
                spec.seed.to_string(),
                csv_float(Some(estimate)),
                csv_float(Some(reference.value)),
                csv_float(Some(rmse)),
                csv_float(bound),
                csv_float(bound.map(|b| b - rmse)),
            ];
            write_csv(spec.output.as_deref(), &CSV_HEADER, &[row])
        }
    }
}

pub fn verify_report(spec: &RunSpec) -> anyhow::Result<SuiteReport> {
    let cfg = SuiteConfig {
        seed: spec.seed,
        inject_non_lazy: spec.inject_non_lazy,
        ..SuiteConfig::default()
    };
    Ok(run_suite(&cfg)?)
}

pub fn cmd_verify(spec: &RunSpec) -> anyhow::Result<()> {
    let report = verify_report(spec)?;
    for c in &report.checks {
        eprintln!(
            "{:<26} {:>4} instances {:>8} comparisons {:>3} violations",
            c.name, c.instances, c.comparisons, c.violations
        );
        for v in &c.reproducers {
            eprintln!("  {}: {}", v.detail, serde_json::to_string(&v.instance)?);
        }
    }
    match spec.format {
        Format::Json => write_text(spec.output.as_deref(), &to_json(&report)?)?,
        Format::Csv => {
            let rows: Vec<Vec<String>> = report
                .checks
                .iter()
                .map(|c| {
                    vec![
                        c.name.to_string(),
                        c.instances.to_string(),
                        c.comparisons.to_string(),
                        c.violations.to_string(),
                        csv_float(Some(c.worst_slack)),
                    ]
                })
                .collect();
            write_csv(
                spec.output.as_deref(),
                &[
                    "check",
                    "instances",
                    "comparisons",
                    "violations",
                    "worst_slack",
                ],
                &rows,
            )?
        }
    }
    let violations: u64 = report.checks.iter().map(|c| c.violations).sum();
    if violations > 0 {
        return Err(VerificationFailed(violations).into());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub d: usize,
    pub alpha: f64,
    pub eps: f64,
    pub delta: f64,
    pub phi_metropolis: f64,
    pub phi_lazy: f64,
    pub n0: u64,
    pub n: u64,
    pub cost_total: u64,
    pub log_cost: f64,
}

pub fn sweep_rows(
    dims: &[usize],
    alphas: &[f64],
    eps: f64,
    f_sup: f64,
) -> anyhow::Result<Vec<SweepRow>> {
    if dims.is_empty() || alphas.is_empty() {
        return Err(usage("sweep needs non-empty --dims and --alphas"));
    }
    if dims.contains(&0) {
        return Err(usage("--dims entries must be at least 1"));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(usage(format!(
            "--alphas entries must be finite and >= 0, got {a}"
        )));
    }
    let grid: Vec<(usize, f64)> = dims
        .iter()
        .flat_map(|&d| alphas.iter().map(move |&a| (d, a)))
        .collect();
    grid.par_iter()
        .map(|&(d, alpha)| {
            let p = plan_report(d, alpha, Some(eps), None, f_sup)?;
            Ok(SweepRow {
                d,
                alpha,
                eps,
                delta: p.delta,
                phi_metropolis: p.phi_metropolis,
                phi_lazy: p.phi_lazy,
                n0: p.n0,
                n: p.n,
                cost_total: p.cost_total,
                log_cost: (p.cost_total as f64).ln(),
            })
        })
        .collect()
}

pub fn cmd_sweep(spec: &RunSpec) -> anyhow::Result<()> {
    let dims = spec
        .dims
        .clone()
        .or(spec.dim.map(|d| vec![d]))
        .ok_or_else(|| usage("sweep needs --dims"))?;
    let alphas = spec
        .alphas
        .clone()
        .or(spec.alpha.map(|a| vec![a]))
        .ok_or_else(|| usage("sweep needs --alphas"))?;
    let eps = spec
        .require_eps()?
        .ok_or_else(|| usage("sweep needs --eps"))?;
    let rows = sweep_rows(&dims, &alphas, eps, spec.f_sup)?;
    match spec.format {
        Format::Json => {
            #[derive(Serialize)]
            struct Sweep<'a> {
                rows: &'a [SweepRow],
            }
            write_text(spec.output.as_deref(), &to_json(&Sweep { rows: &rows })?)
        }
        Format::Csv => {
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.d.to_string(),
                        csv_float(Some(r.alpha)),
                        csv_float(Some(r.eps)),
                        csv_float(Some(r.delta)),
                        csv_float(Some(r.phi_metropolis)),
                        csv_float(Some(r.phi_lazy)),
                        r.n0.to_string(),
                        r.n.to_string(),
                        r.cost_total.to_string(),
                        csv_float(Some(r.log_cost)),
                    ]
                })
                .collect();
            // A sweep is a complete table: replace any existing file.
            if let Some(path) = &spec.output {
                if path.exists() {
                    std::fs::remove_file(path)
                        .with_context(|| format!("replacing {}", path.display()))?;
                }
            }
            write_csv(spec.output.as_deref(), &SWEEP_HEADER, &table)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_examples() {
        let p = plan_report(3, 2.0, Some(0.1), None, 1.0).unwrap();
        assert_eq!(p.n0, 40_960_000);
        assert_eq!(p.cost_samples, 102_400_000_000);
        assert_eq!(p.cost_total, 40_960_000 + 102_400_000_000);

        let p = plan_report(2, 0.0, None, Some(10_000), 1.0).unwrap();
        assert_eq!(p.n0, 0);
        assert!((p.raw_error_bound - 240.0).abs() < 1e-9);
        assert!(plan_report(3, 2.0, None, None, 1.0).is_err());
    }

    #[test]
    fn sweep_cost_grows_with_dimension() {
        let rows = sweep_rows(&[1, 2, 4, 8], &[1.0], 0.1, 1.0).unwrap();
        assert!(rows.windows(2).all(|w| w[0].cost_total < w[1].cost_total));
    }

    #[test]
    fn sweep_burn_in_column() {
        let rows = sweep_rows(&[2], &[0.0, 1.0, 2.0, 4.0], 0.1, 1.0).unwrap();
        for r in &rows {
            let expected = 1_280_000.0 * r.alpha * 3.0 * f64::max(3.0, r.alpha * r.alpha);
            assert_eq!(r.n0, expected as u64);
        }
        assert!(sweep_rows(&[], &[1.0], 0.1, 1.0).is_err());
    }
}
