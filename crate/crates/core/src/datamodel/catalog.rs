use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::cube::CountsCube;
use crate::datamodel::grid::{SpatialGrid, TimeAxis};
use crate::datamodel::read_rows;
use crate::error::{Error, Result};

/// Default completeness threshold for the catalog.
pub const DEFAULT_MIN_MAGNITUDE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub easting_km: f64,
    pub northing_km: f64,
    pub decimal_year: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    pub events: Vec<Event>,
}

/// Bookkeeping for one catalog ingestion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogReport {
    pub read: usize,
    pub below_magnitude: usize,
    pub before_start: usize,
    pub after_end: usize,
    pub outside_mask: usize,
    pub retained: usize,
}

impl CatalogReport {
    pub fn dropped(&self) -> usize {
        self.below_magnitude + self.before_start + self.after_end + self.outside_mask
    }
}

/// Filter events and bin the survivors into cell-year counts.
///
/// Filters apply in order magnitude, start, end, mask, and each dropped event is
/// counted once under the first filter it fails.
pub fn bin_catalog(
    events: &[Event],
    grid: &SpatialGrid,
    axis: &TimeAxis,
    min_mag: f64,
) -> (Catalog, CountsCube, CatalogReport) {
    let mut counts = CountsCube::filled(grid.n_active(), axis.n_steps, 0);
    let mut report = CatalogReport {
        read: events.len(),
        ..Default::default()
    };
    let mut kept = Vec::new();
    for ev in events {
        if ev.magnitude < min_mag {
            report.below_magnitude += 1;
            continue;
        }
        let step = axis.raw_step(ev.decimal_year);
        if step < 0 {
            report.before_start += 1;
            continue;
        }
        if step >= axis.n_steps as i64 {
            report.after_end += 1;
            continue;
        }
        let Some(cell) = grid.locate(ev.easting_km, ev.northing_km) else {
            report.outside_mask += 1;
            continue;
        };
        *counts.get_mut(cell, step as usize) += 1;
        kept.push(*ev);
    }
    report.retained = kept.len();
    (Catalog { events: kept }, counts, report)
}

/// Read a catalog CSV (`easting_km,northing_km,decimal_year,magnitude`) and bin it.
pub fn ingest_catalog(
    path: &Path,
    grid: &SpatialGrid,
    axis: &TimeAxis,
    min_mag: f64,
) -> Result<(Catalog, CountsCube, CatalogReport)> {
    let rows: Vec<(u64, Event)> = read_rows(path)?;
    let mut events = Vec::with_capacity(rows.len());
    for (line, ev) in rows {
        if ![ev.easting_km, ev.northing_km, ev.decimal_year, ev.magnitude]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "non-finite value in catalog row".into(),
            });
        }
        events.push(ev);
    }
    let out = bin_catalog(&events, grid, axis, min_mag);
    let r = &out.2;
    if r.dropped() > 0 {
        log::warn!(
            "{}: dropped {} of {} events (below M{min_mag}: {}, before {}: {}, after {}: {}, outside mask: {})",
            path.display(),
            r.dropped(),
            r.read,
            r.below_magnitude,
            axis.t0,
            r.before_start,
            axis.year(axis.n_steps - 1),
            r.after_end,
            r.outside_mask
        );
    }
    Ok(out)
}

pub fn save_catalog_csv(path: &Path, catalog: &Catalog, comments: &[String]) -> Result<()> {
    let write = || -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "easting_km,northing_km,decimal_year,magnitude")?;
        for e in &catalog.events {
            writeln!(out, "{},{},{},{}", e.easting_km, e.northing_km, e.decimal_year, e.magnitude)?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
