use seiscox::datamodel::{ingest_catalog, ingest_production, load_grid, save_catalog_csv, save_cube_csv, TimeAxis};
use seiscox::pressure::{downscale, fit_polynomial, read_pressure_csv, PressureField, PressureSource};

use super::{IngestReport, CATALOG_CSV, COUNTS_CSV, INGEST_REPORT, PRESSURE_CSV, PRODUCTION_CSV};
use crate::error::{CliError, CliResult};
use crate::manifest::{write_json, Run};

pub fn run(run: &Run) -> CliResult<()> {
    let cfg = &run.cfg;
    let grid_spec = cfg.section(&cfg.config.grid, "grid")?;
    let data = cfg.section(&cfg.config.data, "data")?;
    let pspec = cfg.section(&cfg.config.pressure, "pressure")?;
    let axis = cfg.axis()?;
    let catalog_path = cfg.input(&data.catalog)?;
    let production_path = cfg.input(&data.production)?;
    let pressure_path = cfg.input(&pspec.path)?;

    let grid = load_grid(grid_spec, &cfg.base_dir)?;
    let (catalog, counts, catalog_report) = ingest_catalog(&catalog_path, &grid, &axis, data.min_magnitude)?;
    let (production, production_report) = ingest_production(&production_path, &grid, &axis, data.bandwidth_km)?;

    let last_year = pspec.until_year.unwrap_or(axis.year(axis.n_steps - 1));
    if last_year < axis.year(axis.n_steps - 1) {
        return Err(CliError::Config {
            path: cfg.path.clone(),
            message: format!("pressure.until_year {last_year} ends before the data window"),
        });
    }
    let p_axis = TimeAxis::new(axis.t0, (last_year - axis.t0 + 1) as usize)?;
    let samples = read_pressure_csv(&pressure_path)?;
    let field = match pspec.source {
        PressureSource::Reservoir => {
            let f = downscale(&samples, &grid, &p_axis, pspec.rmse)?;
            match pspec.sigma2 {
                Some(s2) => PressureField::gridded(f.means().clone(), s2, axis.t0)?,
                None => f,
            }
        }
        PressureSource::Polynomial => {
            let model = fit_polynomial(&samples)?;
            let s2 = pspec.sigma2.unwrap_or(model.residual_variance);
            PressureField::from_polynomial(model, &grid, &p_axis, s2)?
        }
    };

    let header = run.header("ingest");
    save_cube_csv(&run.out(COUNTS_CSV), &grid, &counts, &header)?;
    save_cube_csv(&run.out(PRODUCTION_CSV), &grid, &production, &header)?;
    save_cube_csv(&run.out(PRESSURE_CSV), &grid, field.means(), &header)?;
    save_catalog_csv(&run.out(CATALOG_CSV), &catalog, &header)?;
    let production_total_bcm = production_report.raw_totals_bcm.iter().sum();
    let report = IngestReport {
        config_hash: cfg.hash.clone(),
        start_year: axis.t0,
        n_years: axis.n_steps,
        pressure_years: p_axis.n_steps,
        n_active_cells: grid.n_active(),
        cell_area_km2: grid.cell_area(),
        min_magnitude: data.min_magnitude,
        catalog: catalog_report,
        total_events: counts.total(),
        production: production_report,
        production_total_bcm,
        pressure_source: field.source(),
        sigma2: field.sigma2(),
    };
    write_json(&run.out(INGEST_REPORT), &report)?;
    println!(
        "ingest: {} events kept of {} read ({} below M{}, {} before start, {} after end, {} outside mask); {:.6} bcm produced; sigma2 = {}",
        report.catalog.retained,
        report.catalog.read,
        report.catalog.below_magnitude,
        data.min_magnitude,
        report.catalog.before_start,
        report.catalog.after_end,
        report.catalog.outside_mask,
        report.production_total_bcm,
        report.sigma2
    );
    run.finish(
        "ingest",
        Vec::new(),
        &[COUNTS_CSV, PRODUCTION_CSV, PRESSURE_CSV, CATALOG_CSV, INGEST_REPORT].map(String::from),
    )
}
