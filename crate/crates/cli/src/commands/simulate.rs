use seiscox::datamodel::{save_catalog_csv, save_cube_csv};
use seiscox::forecast::{simulate, synthesize_catalog};
use seiscox::numeric::derive_seed;
use seiscox::ModelParams;

use super::Ingested;
use crate::error::CliResult;
use crate::manifest::Run;

pub const SIM_COUNTS_CSV: &str = "simulated_counts.csv";
pub const SIM_LATENT_CSV: &str = "simulated_latent.csv";
pub const SIM_CATALOG_CSV: &str = "simulated_catalog.csv";

pub fn run(run: &Run) -> CliResult<()> {
    let seed = run.require_seed("simulate")?;
    let spec = run.cfg.section(&run.cfg.config.simulate, "simulate")?;
    let ing = Ingested::load(run)?;
    let params = ModelParams::new(spec.theta1, spec.theta2, spec.alpha, spec.beta)?;
    let (counts, latent) = simulate(&params, &ing.pressure, &ing.production, &ing.grid, &ing.axis, seed)?;
    let catalog = synthesize_catalog(
        &counts,
        &ing.grid,
        &ing.axis,
        spec.min_magnitude,
        spec.b_value,
        derive_seed(seed, u64::MAX),
    )?;
    let header = run.header("simulate");
    save_cube_csv(&run.out(SIM_COUNTS_CSV), &ing.grid, &counts, &header)?;
    save_cube_csv(&run.out(SIM_LATENT_CSV), &ing.grid, &latent, &header)?;
    save_catalog_csv(&run.out(SIM_CATALOG_CSV), &catalog, &header)?;
    println!("simulate: {} events over {} cell-years", counts.total(), ing.grid.n_active() * ing.axis.n_steps);
    run.finish(
        "simulate",
        vec![ing.upstream],
        &[SIM_COUNTS_CSV, SIM_LATENT_CSV, SIM_CATALOG_CSV].map(String::from),
    )
}
