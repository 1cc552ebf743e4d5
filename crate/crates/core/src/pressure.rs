//! Deterministic mean pressure field m(s, t) and the variance of the error field.
//!
//! Two sources are supported: reservoir-model output on a 500 m grid, averaged
//! onto 1 km cells, and a full fourth-order polynomial in (easting, northing, year)
//! fitted to pressure observations.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datamodel::{Cube, SpatialGrid, TimeAxis};
use crate::error::{Error, Result};

/// SP(T)G history-match RMSE of the reservoir model, barA.
pub const SPTG_RMSE_BARA: f64 = 2.3;
pub const FINE_CELL_KM: f64 = 0.5;
/// Plausibility ceiling: highest pressure recorded in the field, barA.
pub const MAX_RECORDED_PRESSURE_BARA: f64 = 354.0;
/// Fine cells per 1 km cell.
const FINE_PER_COARSE: usize = 4;

pub const POLY_DEGREE: u32 = 4;
/// C(4 + 3, 3)
pub const POLY_TERMS: usize = 35;

/// One pressure value: a fine-grid cell centre or a well observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureSample {
    pub easting_km: f64,
    pub northing_km: f64,
    pub year: i32,
    #[serde(rename = "pressure_barA")]
    pub pressure_bara: f64,
}

pub fn read_pressure_csv(path: &Path) -> Result<Vec<PressureSample>> {
    let rows: Vec<(u64, PressureSample)> = crate::datamodel::read_rows(path)?;
    let mut out = Vec::with_capacity(rows.len());
    for (line, s) in rows {
        if !(s.easting_km.is_finite() && s.northing_km.is_finite() && s.pressure_bara.is_finite()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "non-finite value in pressure row".into(),
            });
        }
        if s.pressure_bara < 0.0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("negative pressure {}", s.pressure_bara),
            });
        }
        out.push(s);
    }
    Ok(out)
}

/// Variance of a 1 km cell's error when each of its fine cells carries error
/// variance `rmse²`: `(1/4²)·(4·rmse²) = rmse²/4`.
pub fn error_variance_from_rmse(rmse: f64) -> f64 {
    let n = FINE_PER_COARSE as f64;
    (1.0 / (n * n)) * (n * rmse * rmse)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PressureSource {
    Reservoir,
    Polynomial,
}

#[derive(Debug, Clone, PartialEq)]
enum MeanModel {
    Gridded,
    Polynomial {
        model: PolynomialModel,
        centers: Vec<(f64, f64)>,
    },
}

/// Mean pressure per (active cell, step) plus the error-field variance σ².
#[derive(Debug, Clone, PartialEq)]
pub struct PressureField {
    means: Cube<f64>,
    sigma2: f64,
    t0: i32,
    model: MeanModel,
}

impl PressureField {
    /// Field from an already gridded mean cube.
    pub fn gridded(means: Cube<f64>, sigma2: f64, t0: i32) -> Result<Self> {
        check_sigma2(sigma2)?;
        if means.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mean pressure cube has non-finite entries"));
        }
        Ok(PressureField {
            means,
            sigma2,
            t0,
            model: MeanModel::Gridded,
        })
    }

    /// Field whose mean is a fitted polynomial evaluated at cell centres.
    pub fn from_polynomial(
        model: PolynomialModel,
        grid: &SpatialGrid,
        axis: &TimeAxis,
        sigma2: f64,
    ) -> Result<Self> {
        check_sigma2(sigma2)?;
        let centers: Vec<(f64, f64)> = (0..grid.n_active()).map(|c| grid.center(c)).collect();
        let mut data = Vec::with_capacity(centers.len() * axis.n_steps);
        for &(x, y) in &centers {
            for k in 0..axis.n_steps {
                data.push(model.evaluate(x, y, axis.year(k) as f64));
            }
        }
        Ok(PressureField {
            means: Cube::from_vec(centers.len(), axis.n_steps, data)?,
            sigma2,
            t0: axis.t0,
            model: MeanModel::Polynomial { model, centers },
        })
    }

    pub fn source(&self) -> PressureSource {
        match self.model {
            MeanModel::Gridded => PressureSource::Reservoir,
            MeanModel::Polynomial { .. } => PressureSource::Polynomial,
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn t0(&self) -> i32 {
        self.t0
    }

    pub fn n_cells(&self) -> usize {
        self.means.n_cells()
    }

    pub fn n_steps(&self) -> usize {
        self.means.n_steps()
    }

    /// m(s, t0 + k).
    pub fn mean_at(&self, cell: usize, step: usize) -> Result<f64> {
        if cell >= self.n_cells() || step >= self.n_steps() {
            return Err(Error::OutOfRange(format!(
                "pressure index (cell {cell}, step {step}) outside {} x {}",
                self.n_cells(),
                self.n_steps()
            )));
        }
        Ok(match &self.model {
            MeanModel::Gridded => *self.means.get(cell, step),
            MeanModel::Polynomial { model, centers } => {
                let (x, y) = centers[cell];
                model.evaluate(x, y, (self.t0 + step as i32) as f64)
            }
        })
    }

    /// The mean cube over all stored steps.
    pub fn means(&self) -> &Cube<f64> {
        &self.means
    }

    /// The mean cube over exactly `n_steps` steps. Missing trailing steps hold the
    /// last available value flat.
    pub fn means_over(&self, n_steps: usize) -> Cube<f64> {
        let have = self.n_steps();
        if n_steps <= have {
            return self.means.truncated(n_steps).expect("n_steps within range");
        }
        let mut data = Vec::with_capacity(self.n_cells() * n_steps);
        for c in 0..self.n_cells() {
            let s = self.means.series(c);
            data.extend_from_slice(s);
            data.extend(std::iter::repeat_n(s[have - 1], n_steps - have));
        }
        Cube::from_vec(self.n_cells(), n_steps, data).expect("shape")
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("error-field variance must be positive (got {sigma2})")))
    }
}

/// Average 500 m reservoir-model pressures onto the 1 km grid.
///
/// Each coarse cell-year takes the arithmetic mean of the fine values whose
/// centre falls in it (normally four; fewer along the field edge). The variance
/// is `rmse²/4` for every cell regardless of how many fine values were present.
/// Fine values outside the active cells or the time axis are ignored.
pub fn downscale(
    fine: &[PressureSample],
    grid: &SpatialGrid,
    axis: &TimeAxis,
    rmse: f64,
) -> Result<PressureField> {
    if (grid.cell_size_km() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "downscaling from {FINE_CELL_KM} km requires 1 km cells (got {} km)",
            grid.cell_size_km()
        )));
    }
    if !(rmse > 0.0 && rmse.is_finite()) {
        return Err(Error::invalid(format!("RMSE must be positive (got {rmse})")));
    }
    let n = grid.n_active() * axis.n_steps;
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    let mut implausible = 0usize;
    for s in fine {
        if s.pressure_bara < 0.0 || !s.pressure_bara.is_finite() {
            return Err(Error::invalid(format!(
                "invalid fine-grid pressure {} at ({}, {}) in {}",
                s.pressure_bara, s.easting_km, s.northing_km, s.year
            )));
        }
        let (Some(cell), Some(k)) = (grid.locate(s.easting_km, s.northing_km), axis.step_of_year(s.year))
        else {
            continue;
        };
        if s.pressure_bara > MAX_RECORDED_PRESSURE_BARA {
            implausible += 1;
        }
        let i = cell * axis.n_steps + k;
        sum[i] += s.pressure_bara;
        count[i] += 1;
    }
    if implausible > 0 {
        log::warn!("{implausible} fine-grid pressures exceed {MAX_RECORDED_PRESSURE_BARA} barA");
    }
    let empty: Vec<String> = (0..n)
        .filter(|&i| count[i] == 0)
        .take(10)
        .map(|i| {
            let (ix, iy) = grid.cell_ixy(i / axis.n_steps);
            format!("({ix},{iy}) year {}", axis.year(i % axis.n_steps))
        })
        .collect();
    if !empty.is_empty() {
        let total = count.iter().filter(|&&c| c == 0).count();
        return Err(Error::invalid(format!(
            "{total} coarse cell-years have no fine pressure values, e.g. {}",
            empty.join(", ")
        )));
    }
    if let Some(i) = (0..n).find(|&i| count[i] > FINE_PER_COARSE) {
        let (ix, iy) = grid.cell_ixy(i / axis.n_steps);
        return Err(Error::invalid(format!(
            "cell ({ix},{iy}) year {} has {} fine values; the fine grid is misaligned or duplicated",
            axis.year(i % axis.n_steps),
            count[i]
        )));
    }
    let means: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    PressureField::gridded(
        Cube::from_vec(grid.n_active(), axis.n_steps, means)?,
        error_variance_from_rmse(rmse),
        axis.t0,
    )
}

/// Exponents `(easting, northing, time)` of the full degree-4 basis, by total
/// degree and then lexicographically. The intercept is first.
pub fn poly_exponents() -> Vec<(u32, u32, u32)> {
    let mut out = Vec::with_capacity(POLY_TERMS);
    for total in 0..=POLY_DEGREE {
        for a in (0..=total).rev() {
            for b in (0..=total - a).rev() {
                out.push((a, b, total - a - b));
            }
        }
    }
    out
}

/// Trivariate polynomial of total degree ≤ 4 on standardised covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialModel {
    /// Coefficients in the standardised basis, ordered as [`poly_exponents`].
    pub coefficients: Vec<f64>,
    pub center: [f64; 3],
    pub scale: [f64; 3],
    pub residual_variance: f64,
    pub n_obs: usize,
}

impl PolynomialModel {
    /// A model given directly by raw-coordinate coefficients.
    pub fn from_raw_coefficients(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != POLY_TERMS {
            return Err(Error::Shape(format!(
                "polynomial needs {POLY_TERMS} coefficients, got {}",
                coefficients.len()
            )));
        }
        Ok(PolynomialModel {
            coefficients,
            center: [0.0; 3],
            scale: [1.0; 3],
            residual_variance: 0.0,
            n_obs: 0,
        })
    }

    pub fn evaluate(&self, easting: f64, northing: f64, year: f64) -> f64 {
        let z = [
            (easting - self.center[0]) / self.scale[0],
            (northing - self.center[1]) / self.scale[1],
            (year - self.center[2]) / self.scale[2],
        ];
        let basis = monomials(z);
        self.coefficients.iter().zip(&basis).map(|(c, b)| c * b).sum()
    }

    /// Coefficients with respect to raw (unstandardised) coordinates.
    pub fn raw_coefficients(&self) -> Vec<f64> {
        let exps = poly_exponents();
        let index = |e: (u32, u32, u32)| exps.iter().position(|&x| x == e).expect("degree <= 4");
        let mut raw = vec![0.0; POLY_TERMS];
        for (&beta, &(a, b, c)) in self.coefficients.iter().zip(&exps) {
            let ex = expand_power(self.center[0], self.scale[0], a);
            let ey = expand_power(self.center[1], self.scale[1], b);
            let et = expand_power(self.center[2], self.scale[2], c);
            for (i, wx) in ex.iter().enumerate() {
                for (j, wy) in ey.iter().enumerate() {
                    for (l, wt) in et.iter().enumerate() {
                        raw[index((i as u32, j as u32, l as u32))] += beta * wx * wy * wt;
                    }
                }
            }
        }
        raw
    }
}

/// Coefficients of `((v - mu)/s)^e` as a polynomial in `v`, lowest power first.
fn expand_power(mu: f64, s: f64, e: u32) -> Vec<f64> {
    let mut out = vec![0.0; e as usize + 1];
    let norm = s.powi(e as i32);
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = binomial(e, i as u32) * (-mu).powi((e as usize - i) as i32) / norm;
    }
    out
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn monomials(z: [f64; 3]) -> Vec<f64> {
    let mut pows = [[1.0; 5]; 3];
    for v in 0..3 {
        for p in 1..5 {
            pows[v][p] = pows[v][p - 1] * z[v];
        }
    }
    poly_exponents()
        .into_iter()
        .map(|(a, b, c)| pows[0][a as usize] * pows[1][b as usize] * pows[2][c as usize])
        .collect()
}

/// Least-squares fit of the full degree-4 polynomial.
///
/// Covariates are centred and scaled to unit standard deviation, and the
/// normal equations are avoided: the design is solved through its SVD.
pub fn fit_polynomial(observations: &[PressureSample]) -> Result<PolynomialModel> {
    let n = observations.len();
    if n < POLY_TERMS {
        return Err(Error::invalid(format!(
            "polynomial fit needs at least {POLY_TERMS} observations, got {n}"
        )));
    }
    let mut years: Vec<i32> = observations.iter().map(|o| o.year).collect();
    years.sort_unstable();
    years.dedup();
    if years.len() < 2 {
        return Err(Error::invalid("polynomial fit needs observations from at least 2 distinct years"));
    }
    let cols = |o: &PressureSample| [o.easting_km, o.northing_km, o.year as f64];
    let mut center = [0.0; 3];
    let mut scale = [0.0; 3];
    for v in 0..3 {
        let xs: Vec<f64> = observations.iter().map(|o| cols(o)[v]).collect();
        center[v] = crate::numeric::mean(&xs);
        let var = xs.iter().map(|x| (x - center[v]).powi(2)).sum::<f64>() / n as f64;
        if var <= 0.0 {
            let name = ["easting", "northing", "year"][v];
            return Err(Error::numeric(format!(
                "rank-deficient design: {name} is constant, so every term in it is collinear with lower-order terms"
            )));
        }
        scale[v] = var.sqrt();
    }
    let design = DMatrix::from_fn(n, POLY_TERMS, |i, j| {
        let o = cols(&observations[i]);
        let z = [
            (o[0] - center[0]) / scale[0],
            (o[1] - center[1]) / scale[1],
            (o[2] - center[2]) / scale[2],
        ];
        monomials(z)[j]
    });
    let y = DVector::from_iterator(n, observations.iter().map(|o| o.pressure_bara));
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < POLY_TERMS {
        return Err(Error::numeric(format!(
            "rank-deficient design: numerical rank {rank} of {POLY_TERMS}; the observation locations \
             and years are collinear for a degree-4 surface"
        )));
    }
    let beta = svd
        .solve(&y, tol)
        .map_err(|e| Error::numeric(format!("polynomial least squares failed: {e}")))?;
    let resid = &y - &design * &beta;
    let rss = resid.norm_squared();
    let residual_variance = if n > POLY_TERMS {
        rss / (n - POLY_TERMS) as f64
    } else {
        0.0
    };
    Ok(PolynomialModel {
        coefficients: beta.iter().copied().collect(),
        center,
        scale,
        residual_variance,
        n_obs: n,
    })
}
