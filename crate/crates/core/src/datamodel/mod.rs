//! Grid, time axis, and ingestion of catalog and production data.

mod catalog;
mod cube;
mod grid;
mod production;

use std::path::Path;

pub use catalog::{DEFAULT_MIN_MAGNITUDE, bin_catalog, ingest_catalog, save_catalog_csv, Catalog, CatalogReport, Event};
pub use cube::{
    read_cube_csv, save_cube_csv, write_cube_csv, CountsCube, Cube, IntensityCube, ProductionCube,
};
pub use grid::{load_grid, GridSpec, Polygon, SpatialGrid, TimeAxis};
pub use production::{
    ingest_production, read_well_records, smooth_production, ProductionReport, WellRecord,
    DEFAULT_BANDWIDTH_KM,
};

use crate::error::Error;

/// CSV reader for headed, comma-separated input. Lines starting with `#` are skipped.
pub(crate) fn csv_reader(path: &Path) -> crate::Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

pub(crate) fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        csv::ErrorKind::Deserialize { err, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: err.to_string(),
        },
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Deserialize every row of a headed CSV file, paired with its 1-based line number.
pub(crate) fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> crate::Result<Vec<(u64, T)>> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec.deserialize::<T>(Some(&headers)).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        out.push((line, row));
    }
    Ok(out)
}
