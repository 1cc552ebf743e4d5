use serde::{Deserialize, Serialize};

use seiscox::datamodel::{ingest_production, Cube, TimeAxis};
use seiscox::forecast::{predict_intensity, write_forecast_csv, write_gnuplot_matrix, ForecastSpec, HorizonLatent};
use seiscox::latent::LatentField;

use super::Ingested;
use crate::error::{CliError, CliResult};
use crate::manifest::{write_json, Run};

pub const FORECAST_CSV: &str = "forecast.csv";
pub const FORECAST_SUMMARY: &str = "forecast_summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearSummary {
    pub year: i32,
    /// Sum over cells of the mean intensity times cell area: expected events.
    pub expected_events: f64,
    pub max_mean_lambda: f64,
    pub max_p_event: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSummary {
    pub config_hash: String,
    pub plugin: bool,
    pub n_samples: usize,
    pub horizon_latent: HorizonLatent,
    pub years: Vec<YearSummary>,
}

pub fn run(run: &Run, plugin: bool) -> CliResult<()> {
    let cfg = &run.cfg;
    let section = cfg.section(&cfg.config.forecast, "forecast")?;
    let ing = Ingested::load(run)?;
    let (fit, fit_ref) = super::fit::load(run)?;
    let mut upstream = vec![ing.upstream.clone(), fit_ref];
    let (latent, seed, n_samples, horizon_latent) = if plugin {
        let zero = LatentField::zeros(ing.grid.n_active(), ing.axis.n_steps);
        (zero, run.seed.unwrap_or(0), 1, HorizonLatent::Zero)
    } else {
        let seed = run.require_seed("forecast")?;
        let (field, r) = match super::sample::load(run) {
            Err(CliError::MissingUpstream { artifact, .. }) => {
                return Err(CliError::usage(format!(
                    "missing {}; run `seiscox sample` first, or pass --plugin to forecast with E = 0",
                    artifact.display()
                )))
            }
            other => other?,
        };
        upstream.push(r);
        (field, seed, section.n_samples, section.horizon_latent)
    };
    if latent.n_cells() != ing.grid.n_active() || latent.n_steps() != ing.axis.n_steps {
        return Err(CliError::Mismatch("latent draws do not match the ingested grid and time axis".into()));
    }

    let mut steps = Vec::with_capacity(section.years.len());
    for &y in &section.years {
        let k = y - ing.axis.t0;
        if k < ing.axis.n_steps as i32 {
            return Err(CliError::Config {
                path: cfg.path.clone(),
                message: format!(
                    "forecast year {y} is not after the data window ending {}",
                    ing.axis.year(ing.axis.n_steps - 1)
                ),
            });
        }
        steps.push(k as usize);
    }
    let span = steps.iter().max().map_or(0, |m| m + 1);
    let production = horizon_production(run, &ing, span, section.production.as_deref())?;

    let spec = ForecastSpec {
        horizon_steps: steps,
        n_samples,
        production,
        form: section.form.form(),
        horizon_latent,
        hold_pressure_flat: section.hold_pressure_flat,
        seed,
    };
    let maps = predict_intensity(
        &spec,
        &fit.fit.params,
        &ing.pressure,
        &latent,
        ing.axis.delta(),
        ing.grid.cell_area(),
    )?;

    let header = run.header("forecast");
    let mut outputs = vec![FORECAST_CSV.to_string()];
    write_forecast_csv(&run.out(FORECAST_CSV), &ing.grid, ing.axis.t0, &maps, &header)?;
    if section.gnuplot {
        for m in &maps {
            let name = format!("forecast_{}.dat", ing.axis.t0 + m.step as i32);
            write_gnuplot_matrix(&run.out(&name), &ing.grid, &m.mean, &header)?;
            outputs.push(name);
        }
    }
    let area = ing.grid.cell_area();
    let years: Vec<YearSummary> = maps
        .iter()
        .map(|m| YearSummary {
            year: ing.axis.t0 + m.step as i32,
            expected_events: m.mean.iter().sum::<f64>() * area * ing.axis.delta(),
            max_mean_lambda: m.mean.iter().copied().fold(0.0, f64::max),
            max_p_event: m.p_event.iter().copied().fold(0.0, f64::max),
        })
        .collect();
    for y in &years {
        println!(
            "forecast {}: expected events {:.3}, max mean intensity {:.4}, max P(n>0) {:.4}",
            y.year, y.expected_events, y.max_mean_lambda, y.max_p_event
        );
    }
    write_json(
        &run.out(FORECAST_SUMMARY),
        &ForecastSummary {
            config_hash: cfg.hash.clone(),
            plugin,
            n_samples,
            horizon_latent,
            years,
        },
    )?;
    outputs.push(FORECAST_SUMMARY.to_string());
    run.finish("forecast", upstream, &outputs)
}

/// Ingested production over the data window followed by the scenario (or
/// zeros) over the horizon.
fn horizon_production(
    run: &Run,
    ing: &Ingested,
    span: usize,
    scenario: Option<&std::path::Path>,
) -> CliResult<Cube<f64>> {
    let window = ing.axis.n_steps;
    let n_cells = ing.grid.n_active();
    let scenario = match scenario {
        Some(p) => {
            let path = run.cfg.input(p)?;
            let data = run.cfg.section(&run.cfg.config.data, "data")?;
            let axis = TimeAxis::new(ing.axis.t0, span)?;
            Some(ingest_production(&path, &ing.grid, &axis, data.bandwidth_km)?.0)
        }
        None => None,
    };
    let mut out = Cube::filled(n_cells, span.max(window), 0.0);
    for c in 0..n_cells {
        let row = out.series_mut(c);
        row[..window].copy_from_slice(ing.production.series(c));
        if let Some(s) = &scenario {
            row[window..span].copy_from_slice(&s.series(c)[window..span]);
        }
    }
    Ok(out)
}
