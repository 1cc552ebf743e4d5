pub mod fit;
pub mod forecast;
pub mod history;
pub mod ingest;
pub mod report;
pub mod sample;
pub mod simulate;

use serde::{Deserialize, Serialize};

use seiscox::datamodel::{
    load_grid, read_cube_csv, CatalogReport, CountsCube, Cube, ProductionReport, SpatialGrid, TimeAxis,
};
use seiscox::estimation::FitData;
use seiscox::pressure::{PressureField, PressureSource};

use crate::error::CliResult;
use crate::manifest::{read_json, Run, UpstreamRef};

pub const COUNTS_CSV: &str = "counts.csv";
pub const PRODUCTION_CSV: &str = "production.csv";
pub const PRESSURE_CSV: &str = "pressure_mean.csv";
pub const CATALOG_CSV: &str = "catalog_filtered.csv";
pub const INGEST_REPORT: &str = "ingest_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub config_hash: String,
    pub start_year: i32,
    pub n_years: usize,
    /// Steps covered by the mean pressure field, counting from `start_year`.
    pub pressure_years: usize,
    pub n_active_cells: usize,
    pub cell_area_km2: f64,
    pub min_magnitude: f64,
    pub catalog: CatalogReport,
    pub total_events: u64,
    pub production: ProductionReport,
    pub production_total_bcm: f64,
    pub pressure_source: PressureSource,
    pub sigma2: f64,
}

/// Everything `ingest` wrote, read back and checked against its manifest.
pub struct Ingested {
    pub grid: SpatialGrid,
    pub axis: TimeAxis,
    pub counts: CountsCube,
    pub production: Cube<f64>,
    pub pressure: PressureField,
    pub upstream: UpstreamRef,
}

impl Ingested {
    pub fn load(run: &Run) -> CliResult<Self> {
        let (_, upstream) = run.upstream("ingest")?;
        let cfg = &run.cfg;
        let grid = load_grid(cfg.section(&cfg.config.grid, "grid")?, &cfg.base_dir)?;
        let axis = cfg.axis()?;
        let report: IngestReport = read_json(&run.out(INGEST_REPORT))?;
        let counts: CountsCube = read_cube_csv(&run.out(COUNTS_CSV), &grid)?;
        counts.ensure_shape(grid.n_active(), axis.n_steps, "counts cube")?;
        let production: Cube<f64> = read_cube_csv(&run.out(PRODUCTION_CSV), &grid)?;
        production.ensure_shape(grid.n_active(), axis.n_steps, "production cube")?;
        let means: Cube<f64> = read_cube_csv(&run.out(PRESSURE_CSV), &grid)?;
        means.ensure_shape(grid.n_active(), report.pressure_years, "pressure cube")?;
        let pressure = PressureField::gridded(means, report.sigma2, axis.t0)?;
        Ok(Ingested {
            grid,
            axis,
            counts,
            production,
            pressure,
            upstream,
        })
    }

    pub fn fit_data(&self) -> CliResult<FitData> {
        Ok(FitData::new(
            self.counts.clone(),
            self.production.clone(),
            self.pressure.means_over(self.axis.n_steps),
            self.axis.delta(),
            self.grid.cell_area(),
        )?)
    }
}
