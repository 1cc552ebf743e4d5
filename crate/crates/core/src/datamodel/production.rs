use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::cube::ProductionCube;
use crate::datamodel::grid::{SpatialGrid, TimeAxis};
use crate::datamodel::read_rows;
use crate::error::{Error, Result};

pub const DEFAULT_BANDWIDTH_KM: f64 = 5.0;
const NCM_PER_BCM: f64 = 1e9;

/// One monthly production record of a well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellRecord {
    pub well_id: String,
    pub easting_km: f64,
    pub northing_km: f64,
    pub year: i32,
    pub month: u32,
    pub volume_ncm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProductionReport {
    pub records: usize,
    pub wells: usize,
    pub outside_window: usize,
    /// Wells located outside the mask and moved to the nearest active cell.
    pub relocated_wells: Vec<String>,
    /// Raw volume per year step in bcm, before spreading.
    pub raw_totals_bcm: Vec<f64>,
}

struct Well {
    location: (f64, f64),
    /// Monthly volumes in ncm keyed by (year, month); sorted so totals do not
    /// depend on input row order.
    monthly: BTreeMap<(i32, u32), f64>,
}

/// Spread annual well volumes over the active cells with a Gaussian kernel.
///
/// `V(s, k)` is the volume produced in calendar year `t0 + k`, i.e. the twelve
/// months ending at the close of step `k`. Each well's kernel weights are
/// renormalised over the active cells, so every year's grid total equals the
/// raw total. `bandwidth_km = 0` puts each well's volume in the nearest cell.
pub fn smooth_production(
    records: &[WellRecord],
    grid: &SpatialGrid,
    axis: &TimeAxis,
    bandwidth_km: f64,
) -> Result<(ProductionCube, ProductionReport)> {
    if !(bandwidth_km >= 0.0 && bandwidth_km.is_finite()) {
        return Err(Error::invalid(format!("kernel bandwidth must be >= 0 (got {bandwidth_km})")));
    }
    let mut wells: BTreeMap<&str, Well> = BTreeMap::new();
    let mut report = ProductionReport {
        records: records.len(),
        raw_totals_bcm: vec![0.0; axis.n_steps],
        ..Default::default()
    };
    for r in records {
        validate_record(r)?;
        let well = wells.entry(&r.well_id).or_insert_with(|| Well {
            location: (r.easting_km, r.northing_km),
            monthly: BTreeMap::new(),
        });
        if well.location != (r.easting_km, r.northing_km) {
            return Err(Error::invalid(format!(
                "well {} has inconsistent coordinates across records",
                r.well_id
            )));
        }
        if well.monthly.insert((r.year, r.month), r.volume_ncm).is_some() {
            return Err(Error::invalid(format!(
                "duplicate production record for well {} {}-{:02}",
                r.well_id, r.year, r.month
            )));
        }
    }
    report.wells = wells.len();

    let mut cube = ProductionCube::filled(grid.n_active(), axis.n_steps, 0.0);
    for (id, well) in &wells {
        let mut annual = vec![0.0; axis.n_steps];
        for (&(year, _), &vol) in &well.monthly {
            match axis.step_of_year(year) {
                Some(k) => annual[k] += vol / NCM_PER_BCM,
                None => report.outside_window += 1,
            }
        }
        if annual.iter().all(|&v| v == 0.0) {
            continue;
        }
        let (mut wx, mut wy) = well.location;
        if grid.locate(wx, wy).is_none() {
            let a = grid.nearest_active(wx, wy);
            (wx, wy) = grid.center(a);
            let (ix, iy) = grid.cell_ixy(a);
            log::warn!("well {id} lies outside the field mask; attributed to cell ({ix},{iy})");
            report.relocated_wells.push((*id).to_string());
        }
        let weights = kernel_weights(grid, (wx, wy), bandwidth_km);
        for (k, &v) in annual.iter().enumerate() {
            report.raw_totals_bcm[k] += v;
            if v == 0.0 {
                continue;
            }
            for (c, &w) in weights.iter().enumerate() {
                *cube.get_mut(c, k) += w * v;
            }
        }
    }
    Ok((cube, report))
}

fn validate_record(r: &WellRecord) -> Result<()> {
    if !(r.volume_ncm.is_finite() && r.easting_km.is_finite() && r.northing_km.is_finite()) {
        return Err(Error::invalid(format!("non-finite value in record of well {}", r.well_id)));
    }
    if r.volume_ncm < 0.0 {
        return Err(Error::invalid(format!(
            "negative volume {} for well {} {}-{:02}",
            r.volume_ncm, r.well_id, r.year, r.month
        )));
    }
    if !(1..=12).contains(&r.month) {
        return Err(Error::invalid(format!("month {} out of range for well {}", r.month, r.well_id)));
    }
    Ok(())
}

/// Normalised Gaussian weights of every active cell centre around `at`.
fn kernel_weights(grid: &SpatialGrid, at: (f64, f64), bandwidth_km: f64) -> Vec<f64> {
    let n = grid.n_active();
    if bandwidth_km == 0.0 {
        let mut w = vec![0.0; n];
        w[grid.nearest_active(at.0, at.1)] = 1.0;
        return w;
    }
    let two_h2 = 2.0 * bandwidth_km * bandwidth_km;
    let logw: Vec<f64> = (0..n)
        .map(|c| {
            let (cx, cy) = grid.center(c);
            -((cx - at.0).powi(2) + (cy - at.1).powi(2)) / two_h2
        })
        .collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

pub fn read_well_records(path: &Path) -> Result<Vec<WellRecord>> {
    let rows: Vec<(u64, WellRecord)> = read_rows(path)?;
    for (line, r) in &rows {
        validate_record(r).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: *line,
            message: e.to_string(),
        })?;
    }
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

/// Read a production CSV (`well_id,easting_km,northing_km,year,month,volume_ncm`) and smooth it.
pub fn ingest_production(
    path: &Path,
    grid: &SpatialGrid,
    axis: &TimeAxis,
    bandwidth_km: f64,
) -> Result<(ProductionCube, ProductionReport)> {
    let records = read_well_records(path)?;
    smooth_production(&records, grid, axis, bandwidth_km)
}
