//! Plain-text summary of whatever the other commands have produced.

use std::fmt::Write as _;

use super::fit::{FitReport, FIT_JSON};
use super::forecast::{ForecastSummary, FORECAST_SUMMARY};
use super::sample::{SampleReport, DIAGNOSTICS_JSON};
use super::{IngestReport, INGEST_REPORT};
use crate::error::{CliError, CliResult};
use crate::manifest::{read_json, sha256_file, Manifest, Run};

pub const REPORT_TXT: &str = "report.txt";

const COMMANDS: [&str; 6] = ["ingest", "fit", "sample", "forecast", "simulate", "history-match"];

pub fn run(run: &Run) -> CliResult<()> {
    let mut text = String::new();
    let w = &mut text;
    let _ = writeln!(w, "seiscox report");
    let _ = writeln!(w, "config: {}", run.cfg.path.display());
    let _ = writeln!(w, "config_hash: {}", run.cfg.hash);
    let _ = writeln!(w);
    let mut outputs = Vec::new();
    let mut found = 0;
    for cmd in COMMANDS {
        let path = run.out(&format!("{cmd}.manifest.json"));
        if !path.is_file() {
            let _ = writeln!(w, "[{cmd}] not run");
            continue;
        }
        found += 1;
        let m: Manifest = read_json(&path)?;
        let stale = if m.config_hash != run.cfg.hash { " (STALE: different config)" } else { "" };
        let seed = m.seed.map_or("none".to_string(), |s| s.to_string());
        let _ = writeln!(w, "[{cmd}] version {} seed {seed}{stale}", m.version);
        for f in &m.outputs {
            let p = run.out(&f.path);
            let state = match p.is_file().then(|| sha256_file(&p)).transpose()? {
                Some(h) if h == f.sha256 => "ok",
                Some(_) => "modified",
                None => "missing",
            };
            let _ = writeln!(w, "  {} {} {state}", f.path, &f.sha256[..12]);
        }
        if !stale.is_empty() {
            continue;
        }
        match cmd {
            "ingest" => ingest_section(w, run)?,
            "fit" => fit_section(w, run)?,
            "sample" => sample_section(w, run)?,
            "forecast" => forecast_section(w, run)?,
            _ => {}
        }
        outputs.push(format!("{cmd}.manifest.json"));
    }
    if found == 0 {
        return Err(CliError::usage(format!(
            "no manifests in {}; run `seiscox ingest` first",
            run.out_dir.display()
        )));
    }
    print!("{text}");
    let path = run.out(REPORT_TXT);
    std::fs::write(&path, &text).map_err(|e| CliError::io(&path, e))?;
    Ok(())
}

fn ingest_section(w: &mut String, run: &Run) -> CliResult<()> {
    let r: IngestReport = read_json(&run.out(INGEST_REPORT))?;
    let _ = writeln!(
        w,
        "  {} years from {}, {} active cells of {} km2",
        r.n_years, r.start_year, r.n_active_cells, r.cell_area_km2
    );
    let _ = writeln!(
        w,
        "  {} events at M >= {}, production {:.4} bcm, pressure sigma2 {:.4}",
        r.total_events, r.min_magnitude, r.production_total_bcm, r.sigma2
    );
    Ok(())
}

fn fit_section(w: &mut String, run: &Run) -> CliResult<()> {
    let r: FitReport = read_json(&run.out(FIT_JSON))?;
    let _ = writeln!(
        w,
        "  converged {} in {} iterations, loglik {:.4}",
        r.fit.converged, r.fit.iterations, r.fit.loglik
    );
    let p = r.fit.params.to_array();
    for (i, name) in seiscox::ratestate::PARAM_NAMES.iter().enumerate() {
        if r.fit.fixed[i] {
            let _ = writeln!(w, "  {name:<7} {} fixed", p[i]);
        } else {
            let (lo, hi) = r.fit.ci95[i];
            let _ = writeln!(w, "  {name:<7} {:.6} [{lo:.6}, {hi:.6}]", p[i]);
        }
    }
    Ok(())
}

fn sample_section(w: &mut String, run: &Run) -> CliResult<()> {
    let r: SampleReport = read_json(&run.out(DIAGNOSTICS_JSON))?;
    match &r.diagnostics {
        Some(d) => {
            let _ = writeln!(
                w,
                "  {} retained draws, mean acceptance {:.3}, {} of {} cells stationary",
                d.n_retained,
                d.mean_acceptance,
                d.n_stationary,
                d.cells.len()
            );
        }
        None => {
            let _ = writeln!(w, "  too few draws for diagnostics");
        }
    }
    Ok(())
}

fn forecast_section(w: &mut String, run: &Run) -> CliResult<()> {
    let r: ForecastSummary = read_json(&run.out(FORECAST_SUMMARY))?;
    for y in &r.years {
        let _ = writeln!(
            w,
            "  {}: expected {:.3} events, max P(n>0) {:.4}",
            y.year, y.expected_events, y.max_p_event
        );
    }
    Ok(())
}
