use serde::{Deserialize, Serialize};

use seiscox::datamodel::save_cube_csv;
use seiscox::latent::{diagnostics, read_draws, sample_field, write_draws, write_trace_csv, ChainConfig, DiagnosticsReport, LatentField, MIN_DIAGNOSTIC_SAMPLES};

use super::Ingested;
use crate::error::{CliError, CliResult};
use crate::manifest::{write_json, Run, UpstreamRef};

pub const DRAWS_BIN: &str = "latent_draws.bin";
pub const LATENT_MEAN_CSV: &str = "latent_mean.csv";
pub const TRACE_CSV: &str = "latent_trace.csv";
pub const DIAGNOSTICS_JSON: &str = "diagnostics.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub config_hash: String,
    pub chain: ChainConfig,
    pub sigma2: f64,
    /// Absent when fewer draws were retained than the diagnostics need.
    pub diagnostics: Option<DiagnosticsReport>,
}

pub fn run(run: &Run) -> CliResult<()> {
    let seed = run.require_seed("sample")?;
    let ing = Ingested::load(run)?;
    let (fit, fit_ref) = super::fit::load(run)?;
    let data = ing.fit_data()?;
    let sigma2 = ing.pressure.sigma2();
    let spec = &run.cfg.config.sample;
    let mut chain = ChainConfig::for_sigma2(sigma2, seed);
    if let Some(b) = spec.burn_in {
        chain.burn_in = b;
    }
    if let Some(s) = spec.samples {
        chain.samples = s;
    }
    if let Some(e) = spec.step_size {
        chain.step_size = e;
    }
    if let Some(t) = spec.thinning {
        chain.thinning = t;
    }
    chain.validate()?;

    let field = sample_field(&chain, &fit.fit.params, &data, sigma2)?;
    let diag = if field.n_retained() >= MIN_DIAGNOSTIC_SAMPLES {
        Some(diagnostics(&field)?)
    } else {
        log::warn!(
            "only {} retained draws; stationarity diagnostics need {MIN_DIAGNOSTIC_SAMPLES}",
            field.n_retained()
        );
        None
    };
    let header = run.header("sample");
    write_draws(&run.out(DRAWS_BIN), &field, &header.join("\n"))?;
    save_cube_csv(&run.out(LATENT_MEAN_CSV), &ing.grid, &field.posterior_mean(), &header)?;
    write_trace_csv(&run.out(TRACE_CSV), &field, &header)?;
    if let Some(d) = &diag {
        println!(
            "sample: {} cells, {} retained draws, mean acceptance {:.3}, {} of {} cells pass the stationarity check",
            field.n_cells(),
            field.n_retained(),
            d.mean_acceptance,
            d.n_stationary,
            field.n_cells()
        );
    }
    write_json(
        &run.out(DIAGNOSTICS_JSON),
        &SampleReport {
            config_hash: run.cfg.hash.clone(),
            chain,
            sigma2,
            diagnostics: diag,
        },
    )?;
    run.finish(
        "sample",
        vec![ing.upstream, fit_ref],
        &[DRAWS_BIN, LATENT_MEAN_CSV, TRACE_CSV, DIAGNOSTICS_JSON].map(String::from),
    )
}

pub fn load(run: &Run) -> CliResult<(LatentField, UpstreamRef)> {
    let (_, upstream) = run.upstream("sample")?;
    let path = run.out(DRAWS_BIN);
    let (field, label) = read_draws(&path)?;
    let tag = format!("config_hash: {}", run.cfg.hash);
    if !label.lines().any(|l| l == tag) {
        return Err(CliError::Mismatch(format!(
            "{} was written under a different config; rerun `seiscox sample`",
            path.display()
        )));
    }
    Ok((field, upstream))
}
