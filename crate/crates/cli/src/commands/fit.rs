use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use seiscox::estimation::{fit, godambe_ci, inverse_hessian_se, FitOptions, FitResult};
use seiscox::ratestate::DEFAULT_SIMPLIFY_THRESHOLD;
use seiscox::ModelParams;

use super::Ingested;
use crate::error::{CliError, CliResult};
use crate::manifest::{write_json, Run};

pub const FIT_JSON: &str = "fit.json";
pub const FIT_TRACE_CSV: &str = "fit_trace.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub config_hash: String,
    pub fit: FitResult,
    pub e_beta: f64,
    /// True when `e^β` is small enough for the simplified intensity.
    pub simplified: bool,
    /// Model-based standard errors from the inverse observed information.
    pub inverse_hessian_se: [f64; 4],
    /// Intensity multiplier for +0.001 bcm of production in a cell-year.
    pub production_step_multiplier: f64,
    /// Simplified-intensity multiplier for a 1 bar pressure drop.
    pub pressure_drop_multiplier: f64,
}

pub fn run(run: &Run, cli_fix: &[(String, f64)]) -> CliResult<()> {
    let ing = Ingested::load(run)?;
    let data = ing.fit_data()?;
    let spec = &run.cfg.config.fit;

    let mut pins: BTreeMap<String, f64> = spec.fix.clone();
    for (name, value) in cli_fix {
        pins.insert(name.clone(), *value);
    }
    let mut opts = FitOptions::default();
    if let Some(t) = spec.grad_tol {
        opts.grad_tol = t;
    }
    if let Some(m) = spec.max_iter {
        opts.max_iter = m;
    }
    for (name, value) in &pins {
        opts = opts.fix(name, *value)?;
    }
    let d = data.default_init();
    let init = ModelParams::new(
        spec.init.theta1.unwrap_or(d.theta1),
        spec.init.theta2.unwrap_or(d.theta2),
        spec.init.alpha.unwrap_or(d.alpha),
        spec.init.beta.unwrap_or(d.beta),
    )?;

    let result = fit(&data, &init, &opts)?;
    if !result.converged {
        log::warn!(
            "fit did not converge in {} iterations (gradient sup-norm {:.3e})",
            result.iterations,
            result.grad_norm
        );
    }
    let model_se = inverse_hessian_se(&result, &data)?;
    let result = godambe_ci(result, &data)?;
    let p = result.params;
    let report = FitReport {
        config_hash: run.cfg.hash.clone(),
        e_beta: p.exp_beta(),
        simplified: p.is_simplified(DEFAULT_SIMPLIFY_THRESHOLD),
        inverse_hessian_se: model_se,
        production_step_multiplier: (p.theta2 * 0.001).exp(),
        pressure_drop_multiplier: p.alpha.exp(),
        fit: result,
    };
    write_json(&run.out(FIT_JSON), &report)?;
    write_trace(run, &report.fit)?;

    println!("fit: converged = {} after {} iterations, loglik = {}", report.fit.converged, report.fit.iterations, report.fit.loglik);
    for (i, name) in seiscox::ratestate::PARAM_NAMES.iter().enumerate() {
        let est = report.fit.params.to_array()[i];
        if report.fit.fixed[i] {
            println!("  {name:<7} {est} (fixed)");
        } else {
            let (lo, hi) = report.fit.ci95[i];
            println!("  {name:<7} {est:.6} [{lo:.6}, {hi:.6}]");
        }
    }
    run.finish("fit", vec![ing.upstream], &[FIT_JSON.to_string(), FIT_TRACE_CSV.to_string()])
}

fn write_trace(run: &Run, fit: &FitResult) -> CliResult<()> {
    let path = run.out(FIT_TRACE_CSV);
    let write = || -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
        for line in run.header("fit") {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "iteration,loglik,grad_norm,step")?;
        for t in &fit.objective_trace {
            writeln!(out, "{},{},{},{}", t.iteration, t.loglik, t.grad_norm, t.step)?;
        }
        out.flush()
    };
    write().map_err(|e| CliError::io(&path, e))
}

/// Read back the fit written by a previous `fit` run.
pub fn load(run: &Run) -> CliResult<(FitReport, crate::manifest::UpstreamRef)> {
    let (_, upstream) = run.upstream("fit")?;
    let report: FitReport = crate::manifest::read_json(&run.out(FIT_JSON))?;
    Ok((report, upstream))
}
