use std::fmt::Display;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::datamodel::grid::SpatialGrid;
use crate::error::{Error, Result};

/// Dense `(active cell, year step)` array. Each cell's time series is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube<T> {
    n_cells: usize,
    n_steps: usize,
    data: Vec<T>,
}

/// Earthquake counts N(s, k).
pub type CountsCube = Cube<u64>;
/// Produced volume V(s, k) in bcm.
pub type ProductionCube = Cube<f64>;
/// Intensity Λ(s, k), events per km² per year.
pub type IntensityCube = Cube<f64>;

impl<T: Clone> Cube<T> {
    pub fn filled(n_cells: usize, n_steps: usize, value: T) -> Self {
        Cube {
            n_cells,
            n_steps,
            data: vec![value; n_cells * n_steps],
        }
    }

    /// The first `n_steps` steps of every cell.
    pub fn truncated(&self, n_steps: usize) -> Result<Self> {
        if n_steps > self.n_steps {
            return Err(Error::Shape(format!(
                "cannot truncate {} steps to {n_steps}",
                self.n_steps
            )));
        }
        let mut data = Vec::with_capacity(self.n_cells * n_steps);
        for c in 0..self.n_cells {
            data.extend_from_slice(&self.series(c)[..n_steps]);
        }
        Ok(Cube {
            n_cells: self.n_cells,
            n_steps,
            data,
        })
    }
}

impl<T> Cube<T> {
    /// `data` is cell-major: `data[cell * n_steps + step]`.
    pub fn from_vec(n_cells: usize, n_steps: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n_cells * n_steps {
            return Err(Error::Shape(format!(
                "cube data has {} entries, expected {n_cells} x {n_steps}",
                data.len()
            )));
        }
        Ok(Cube {
            n_cells,
            n_steps,
            data,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_cells, self.n_steps)
    }

    pub fn get(&self, cell: usize, step: usize) -> &T {
        &self.data[cell * self.n_steps + step]
    }

    pub fn get_mut(&mut self, cell: usize, step: usize) -> &mut T {
        &mut self.data[cell * self.n_steps + step]
    }

    pub fn series(&self, cell: usize) -> &[T] {
        &self.data[cell * self.n_steps..(cell + 1) * self.n_steps]
    }

    pub fn series_mut(&mut self, cell: usize) -> &mut [T] {
        &mut self.data[cell * self.n_steps..(cell + 1) * self.n_steps]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn ensure_shape(&self, n_cells: usize, n_steps: usize, what: &str) -> Result<()> {
        if self.n_cells != n_cells || self.n_steps != n_steps {
            return Err(Error::Shape(format!(
                "{what} is {} x {}, expected {n_cells} x {n_steps}",
                self.n_cells, self.n_steps
            )));
        }
        Ok(())
    }
}

impl CountsCube {
    pub fn total(&self) -> u64 {
        self.data.iter().sum()
    }
}

impl Cube<f64> {
    /// Sum over cells for one step.
    pub fn step_total(&self, step: usize) -> f64 {
        (0..self.n_cells).map(|c| *self.get(c, step)).sum()
    }
}

/// Write a cube as CSV `cell_ix,cell_iy,year_step,value`, preceded by optional `#` comment lines.
pub fn write_cube_csv<T: Display, W: Write>(
    mut out: W,
    grid: &SpatialGrid,
    cube: &Cube<T>,
    comments: &[String],
) -> std::io::Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "cell_ix,cell_iy,year_step,value")?;
    for (cell, (ix, iy)) in grid.active_cells().enumerate() {
        for step in 0..cube.n_steps() {
            writeln!(out, "{ix},{iy},{step},{}", cube.get(cell, step))?;
        }
    }
    out.flush()
}

pub fn save_cube_csv<T: Display>(
    path: &Path,
    grid: &SpatialGrid,
    cube: &Cube<T>,
    comments: &[String],
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_cube_csv(std::io::BufWriter::new(file), grid, cube, comments).map_err(|e| Error::io(path, e))
}

/// Read a cube written by [`write_cube_csv`]. Every active cell must appear for
/// every step exactly once; the step count is inferred.
pub fn read_cube_csv<T>(path: &Path, grid: &SpatialGrid) -> Result<Cube<T>>
where
    T: FromStr + Clone,
    T::Err: Display,
{
    let mut rdr = crate::datamodel::csv_reader(path)?;
    let mut rows: Vec<(usize, usize, T)> = Vec::new();
    let mut max_step = None::<usize>;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| crate::datamodel::csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 columns, found {}", rec.len())));
        }
        let ix: usize = rec[0].trim().parse().map_err(|e| bad(format!("cell_ix: {e}")))?;
        let iy: usize = rec[1].trim().parse().map_err(|e| bad(format!("cell_iy: {e}")))?;
        let step: usize = rec[2].trim().parse().map_err(|e| bad(format!("year_step: {e}")))?;
        let value: T = rec[3].trim().parse().map_err(|e| bad(format!("value: {e}")))?;
        let cell = grid
            .active_index(ix, iy)
            .ok_or_else(|| bad(format!("cell ({ix},{iy}) is not an active grid cell")))?;
        max_step = Some(max_step.map_or(step, |m: usize| m.max(step)));
        rows.push((cell, step, value));
    }
    let n_steps = max_step.map_or(0, |m| m + 1);
    let n_cells = grid.n_active();
    let mut slots: Vec<Option<T>> = vec![None; n_cells * n_steps];
    for (cell, step, value) in rows {
        let slot = &mut slots[cell * n_steps + step];
        if slot.is_some() {
            let (ix, iy) = grid.cell_ixy(cell);
            return Err(Error::invalid(format!(
                "{}: duplicate entry for cell ({ix},{iy}) step {step}",
                path.display()
            )));
        }
        *slot = Some(value);
    }
    let data = slots
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or_else(|| {
                let (ix, iy) = grid.cell_ixy(i / n_steps);
                Error::invalid(format!(
                    "{}: missing entry for cell ({ix},{iy}) step {}",
                    path.display(),
                    i % n_steps
                ))
            })
        })
        .collect::<Result<Vec<T>>>()?;
    Cube::from_vec(n_cells, n_steps, data)
}
