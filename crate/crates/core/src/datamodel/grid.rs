use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular tessellation of the field area. Coordinates are UTM-31 kilometres.
///
/// Cell `(ix, iy)` covers `[x0 + ix*size, x0 + (ix+1)*size) x [y0 + iy*size, y0 + (iy+1)*size)`.
/// Flat indices are row-major with `ix` fastest. Only masked ("active") cells carry
/// data; cubes index cells by their position in [`SpatialGrid::active_cells`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    origin: (f64, f64),
    cell_size_km: f64,
    nx: usize,
    ny: usize,
    mask: Vec<bool>,
    active: Vec<usize>,
    lookup: Vec<Option<usize>>,
}

impl SpatialGrid {
    pub fn new(
        origin: (f64, f64),
        cell_size_km: f64,
        nx: usize,
        ny: usize,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::invalid(format!("grid must have nx, ny >= 1 (got {nx} x {ny})")));
        }
        if !(cell_size_km > 0.0 && cell_size_km.is_finite()) {
            return Err(Error::invalid(format!("cell size must be positive (got {cell_size_km})")));
        }
        if !(origin.0.is_finite() && origin.1.is_finite()) {
            return Err(Error::invalid("grid origin must be finite"));
        }
        if mask.len() != nx * ny {
            return Err(Error::Shape(format!(
                "mask has {} entries, grid has {} cells",
                mask.len(),
                nx * ny
            )));
        }
        let active: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        if active.is_empty() {
            return Err(Error::invalid("no grid cell lies inside the field mask"));
        }
        let mut lookup = vec![None; mask.len()];
        for (a, &flat) in active.iter().enumerate() {
            lookup[flat] = Some(a);
        }
        Ok(SpatialGrid {
            origin,
            cell_size_km,
            nx,
            ny,
            mask,
            active,
            lookup,
        })
    }

    /// Grid with every cell active.
    pub fn full(origin: (f64, f64), cell_size_km: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::new(origin, cell_size_km, nx, ny, vec![true; nx * ny])
    }

    /// Mask cells whose centre lies inside `ring` (even-odd rule).
    pub fn from_polygon(
        origin: (f64, f64),
        cell_size_km: f64,
        nx: usize,
        ny: usize,
        ring: &Polygon,
    ) -> Result<Self> {
        let mut mask = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                let cx = origin.0 + (ix as f64 + 0.5) * cell_size_km;
                let cy = origin.1 + (iy as f64 + 0.5) * cell_size_km;
                mask.push(ring.contains(cx, cy));
            }
        }
        Self::new(origin, cell_size_km, nx, ny, mask)
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn cell_size_km(&self) -> f64 {
        self.cell_size_km
    }

    /// Cell area in km².
    pub fn cell_area(&self) -> f64 {
        self.cell_size_km * self.cell_size_km
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    /// `(ix, iy)` of every active cell, in cube order.
    pub fn active_cells(&self) -> impl ExactSizeIterator<Item = (usize, usize)> + '_ {
        self.active.iter().map(move |&flat| (flat % self.nx, flat / self.nx))
    }

    pub fn cell_ixy(&self, active_index: usize) -> (usize, usize) {
        let flat = self.active[active_index];
        (flat % self.nx, flat / self.nx)
    }

    pub fn active_index(&self, ix: usize, iy: usize) -> Option<usize> {
        if ix >= self.nx || iy >= self.ny {
            return None;
        }
        self.lookup[iy * self.nx + ix]
    }

    /// Cell containing a point under the half-open convention, whether or not it is masked.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = ((x - self.origin.0) / self.cell_size_km).floor();
        let fy = ((y - self.origin.1) / self.cell_size_km).floor();
        if !(fx >= 0.0 && fy >= 0.0) || fx >= self.nx as f64 || fy >= self.ny as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    /// Active index of the masked cell containing a point.
    pub fn locate(&self, x: f64, y: f64) -> Option<usize> {
        self.cell_of(x, y).and_then(|(ix, iy)| self.active_index(ix, iy))
    }

    pub fn center(&self, active_index: usize) -> (f64, f64) {
        let (ix, iy) = self.cell_ixy(active_index);
        (
            self.origin.0 + (ix as f64 + 0.5) * self.cell_size_km,
            self.origin.1 + (iy as f64 + 0.5) * self.cell_size_km,
        )
    }

    /// Active cell whose centre is closest to the point; ties go to the lower index.
    pub fn nearest_active(&self, x: f64, y: f64) -> usize {
        let mut best = (0, f64::INFINITY);
        for a in 0..self.n_active() {
            let (cx, cy) = self.center(a);
            let d2 = (cx - x).powi(2) + (cy - y).powi(2);
            if d2 < best.1 {
                best = (a, d2);
            }
        }
        best.0
    }
}

/// Closed ring of vertices. The first and last vertex must coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.len() < 4 {
            return Err(Error::invalid(format!(
                "field polygon needs at least 3 distinct vertices plus the closing vertex (got {})",
                vertices.len()
            )));
        }
        if vertices.first() != vertices.last() {
            return Err(Error::invalid("field polygon is not closed (first vertex != last vertex)"));
        }
        if vertices.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::invalid("field polygon has non-finite vertices"));
        }
        Ok(Polygon { vertices })
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    /// Even-odd crossing test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let mut inside = false;
        for edge in self.vertices.windows(2) {
            let (x1, y1) = edge[0];
            let (x2, y2) = edge[1];
            if (y1 > y) != (y2 > y) {
                let xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1);
                if x < xc {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

/// Grid configuration as read from the run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub origin_easting_km: f64,
    pub origin_northing_km: f64,
    #[serde(default = "default_cell_size")]
    pub cell_size_km: f64,
    pub nx: usize,
    pub ny: usize,
    /// Field boundary as a closed ring of `[easting, northing]` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<[f64; 2]>>,
    /// Alternative to `polygon`: a text file with `ny` lines of `nx` characters
    /// (`1` inside, `0` outside), first line is `iy = 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_file: Option<PathBuf>,
}

fn default_cell_size() -> f64 {
    1.0
}

/// Build the grid from its configuration. Relative mask paths resolve against `base_dir`.
pub fn load_grid(spec: &GridSpec, base_dir: &Path) -> Result<SpatialGrid> {
    let origin = (spec.origin_easting_km, spec.origin_northing_km);
    match (&spec.polygon, &spec.mask_file) {
        (Some(_), Some(_)) => Err(Error::invalid("grid config sets both polygon and mask_file")),
        (Some(ring), None) => {
            let ring = Polygon::new(ring.iter().map(|p| (p[0], p[1])).collect())?;
            SpatialGrid::from_polygon(origin, spec.cell_size_km, spec.nx, spec.ny, &ring)
        }
        (None, Some(file)) => {
            let path = base_dir.join(file);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let mask = parse_mask(&text, spec.nx, spec.ny, &path)?;
            SpatialGrid::new(origin, spec.cell_size_km, spec.nx, spec.ny, mask)
        }
        (None, None) => SpatialGrid::full(origin, spec.cell_size_km, spec.nx, spec.ny),
    }
}

fn parse_mask(text: &str, nx: usize, ny: usize, path: &Path) -> Result<Vec<bool>> {
    let mut mask = Vec::with_capacity(nx * ny);
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno as u64 + 1,
            message,
        };
        if line.len() != nx {
            return Err(bad(format!("mask row has {} cells, expected {nx}", line.len())));
        }
        for ch in line.chars() {
            match ch {
                '1' => mask.push(true),
                '0' => mask.push(false),
                other => return Err(bad(format!("unexpected mask character {other:?}"))),
            }
        }
        rows += 1;
    }
    if rows != ny {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("mask has {rows} rows, expected {ny}"),
        });
    }
    Ok(mask)
}

/// Annual time discretisation. Step `k` is calendar year `t0 + k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeAxis {
    pub t0: i32,
    pub n_steps: usize,
}

impl TimeAxis {
    pub fn new(t0: i32, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("time axis needs at least one step"));
        }
        Ok(TimeAxis { t0, n_steps })
    }

    /// Step length in years. Always one.
    pub fn delta(&self) -> f64 {
        1.0
    }

    pub fn year(&self, step: usize) -> i32 {
        self.t0 + step as i32
    }

    /// Step index `floor(year - t0)`; may be negative or beyond the axis.
    pub fn raw_step(&self, decimal_year: f64) -> i64 {
        (decimal_year - self.t0 as f64).floor() as i64
    }

    pub fn step_of_year(&self, year: i32) -> Option<usize> {
        let k = year as i64 - self.t0 as i64;
        (0..self.n_steps as i64).contains(&k).then_some(k as usize)
    }

    /// The same axis extended by `extra` steps.
    pub fn extended(&self, extra: usize) -> TimeAxis {
        TimeAxis {
            t0: self.t0,
            n_steps: self.n_steps + extra,
        }
    }
}

impl Default for TimeAxis {
    fn default() -> Self {
        TimeAxis {
            t0: 1995,
            n_steps: 1,
        }
    }
}
