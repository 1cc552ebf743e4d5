use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use seiscox::reservoir::{
    history_match, read_benchmarks_csv, read_offtake_csv, read_pressure_observations_csv, read_pvt_csv,
    read_ranges_csv, write_ranked_csv, CompactionBlock, HistoryMatchProblem, OfftakeSeries, Region,
    SubsidenceSetup,
};

use crate::error::{CliError, CliResult};
use crate::manifest::{write_json, Run};

pub const RANKED_CSV: &str = "history_ranked.csv";
pub const CORRELATIONS_CSV: &str = "history_correlations.csv";
pub const HISTORY_JSON: &str = "history_summary.json";

pub fn run(run: &Run, n_override: Option<usize>) -> CliResult<()> {
    let seed = run.require_seed("history-match")?;
    let cfg = &run.cfg;
    let spec = cfg.section(&cfg.config.history_match, "history_match")?;
    let table = Arc::new(read_pvt_csv(&cfg.input(&spec.pvt)?)?);
    let offtake = read_offtake_csv(&cfg.input(&spec.offtake)?)?;
    let ranges = read_ranges_csv(&cfg.input(&spec.ranges)?)?;
    let pressure = read_pressure_observations_csv(&cfg.input(&spec.pressure_observations)?)?;
    let benchmarks = match &spec.benchmarks {
        Some(p) => Some(read_benchmarks_csv(&cfg.input(p)?)?),
        None => None,
    };

    let mut by_region: BTreeMap<&str, Vec<(i32, f64, f64)>> = BTreeMap::new();
    for r in &offtake {
        by_region.entry(r.region.as_str()).or_default().push((r.year, r.cum_condensate, r.cum_gas));
    }
    let mut regions = Vec::with_capacity(spec.regions.len());
    for r in &spec.regions {
        let rows = by_region.remove(r.name.as_str()).ok_or_else(|| CliError::Config {
            path: cfg.path.clone(),
            message: format!("region {:?} has no rows in the offtake file", r.name),
        })?;
        regions.push(Region {
            name: r.name.clone(),
            offtake: OfftakeSeries::new(rows)?,
            temperature_k: r.temperature_k,
            initial_pressure_bara: r.initial_pressure_bara,
            blocks: r
                .blocks
                .iter()
                .map(|b| CompactionBlock {
                    c_m: 0.0,
                    delta_p: 0.0,
                    x_km: b.x_km,
                    y_km: b.y_km,
                    depth_km: b.depth_km,
                    lx_km: b.lx_km,
                    ly_km: b.ly_km,
                    lz_km: b.lz_km,
                })
                .collect(),
        });
    }
    if let Some(name) = by_region.keys().next() {
        log::warn!("offtake rows for region {name:?} are not used by any configured region");
    }
    let problem = HistoryMatchProblem {
        table,
        regions,
        pressure,
        subsidence: benchmarks.map(|b| SubsidenceSetup {
            poisson_ratio: spec.poisson_ratio,
            benchmarks: b,
        }),
        fixed: spec.fixed.clone(),
    };
    let n = n_override.unwrap_or(spec.n_simulations);
    let result = history_match(&problem, &ranges, n, seed)?;

    let header = run.header("history-match");
    write_ranked_csv(&run.out(RANKED_CSV), &result, &header)?;
    let path = run.out(CORRELATIONS_CSV);
    let write = || -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
        for line in &header {
            writeln!(out, "# {line}")?;
        }
        let mut cols = vec!["parameter".to_string()];
        cols.extend(result.region_names.iter().map(|r| format!("rmse_{r}")));
        cols.push("rmse_global".into());
        writeln!(out, "{}", cols.join(","))?;
        for (name, row) in result.param_names.iter().zip(&result.correlations) {
            let vals: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(out, "{name},{}", vals.join(","))?;
        }
        out.flush()
    };
    write().map_err(|e| CliError::io(&path, e))?;
    let best = result.best();
    println!(
        "history-match: {} models ({} failed); best draw {} with global RMSE {:.4}",
        result.models.len(),
        result.n_failed,
        best.draw,
        best.rmse_global
    );
    for (name, v) in result.param_names.iter().zip(&best.params) {
        println!("  {name:<12} {v}");
    }
    write_json(
        &run.out(HISTORY_JSON),
        &serde_json::json!({
            "config_hash": cfg.hash,
            "n_simulations": n,
            "n_failed": result.n_failed,
            "param_names": result.param_names,
            "region_names": result.region_names,
            "best": best,
            "correlations": result.correlations,
        }),
    )?;
    run.finish(
        "history-match",
        Vec::new(),
        &[RANKED_CSV, CORRELATIONS_CSV, HISTORY_JSON].map(String::from),
    )
}
