//! Predictive intensity maps over future years, event probabilities, and the
//! Cox-process simulator.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Catalog, CountsCube, Cube, Event, IntensityCube, SpatialGrid, TimeAxis};
use crate::error::{Error, Result};
use crate::latent::LatentField;
use crate::numeric::{derive_seed, quantile_sorted};
use crate::pressure::PressureField;
use crate::ratestate::{log_intensity_series, IntensityForm, ModelParams};

pub const DEFAULT_FORECAST_SAMPLES: usize = 100;

/// `P(n > 0) = 1 − exp(−Λ·Δ·Δ_S)`.
pub fn event_probability(lambda: f64, delta: f64, cell_area: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("intensity must be >= 0 (got {lambda})")));
    }
    Ok(-(-lambda * delta * cell_area).exp_m1())
}

/// How the latent error is filled in over forecast years, where no counts constrain it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HorizonLatent {
    /// E = 0 beyond the data window.
    Zero,
    /// Fresh draws from the N(0, σ²) prior for every sample.
    Prior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSpec {
    /// Absolute year steps to report; all must lie after the data window.
    pub horizon_steps: Vec<usize>,
    pub n_samples: usize,
    /// Production from step 0 onward. Steps beyond its end count as zero.
    pub production: Cube<f64>,
    pub form: IntensityForm,
    pub horizon_latent: HorizonLatent,
    /// Hold the last mean pressure flat when the field ends before the horizon.
    /// Otherwise missing pressure is an error.
    pub hold_pressure_flat: bool,
    pub seed: u64,
}

/// Per-cell predictive summary for one year step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastMap {
    pub step: usize,
    pub mean: Vec<f64>,
    pub q05: Vec<f64>,
    pub q95: Vec<f64>,
    pub p_event: Vec<f64>,
}

/// Monte Carlo predictive intensity over the horizon.
///
/// Each of `n_samples` latent draws (evenly spaced through the retained chain)
/// gives a pressure path `m + E` over the data window; beyond it the error
/// follows `spec.horizon_latent`. The full history enters `S_P`, and each
/// horizon step reports the mean, the 5 % and 95 % type-7 quantiles, and the
/// event probability of the mean intensity.
pub fn predict_intensity(
    spec: &ForecastSpec,
    params: &ModelParams,
    pressure: &PressureField,
    latent: &LatentField,
    delta: f64,
    cell_area: f64,
) -> Result<Vec<ForecastMap>> {
    params.validate()?;
    let n_cells = latent.n_cells();
    let window = latent.n_steps();
    if spec.n_samples == 0 {
        return Err(Error::invalid("forecast needs n_samples >= 1"));
    }
    if spec.horizon_steps.is_empty() {
        return Err(Error::invalid("forecast horizon is empty"));
    }
    if let Some(&k) = spec.horizon_steps.iter().find(|&&k| k < window) {
        return Err(Error::invalid(format!(
            "horizon step {k} lies inside the data window of {window} steps"
        )));
    }
    if pressure.n_cells() != n_cells || spec.production.n_cells() != n_cells {
        return Err(Error::Shape(format!(
            "forecast inputs disagree on cell count (latent {n_cells}, pressure {}, production {})",
            pressure.n_cells(),
            spec.production.n_cells()
        )));
    }
    if latent.n_retained() == 0 {
        return Err(Error::invalid("latent field has no retained draws"));
    }
    let last = *spec.horizon_steps.iter().max().expect("non-empty");
    let span = last + 1;
    if pressure.n_steps() < span {
        if !spec.hold_pressure_flat {
            return Err(Error::invalid(format!(
                "mean pressure ends at year {} but the horizon reaches year {}",
                pressure.t0() + pressure.n_steps() as i32 - 1,
                pressure.t0() + last as i32
            )));
        }
        log::warn!(
            "mean pressure ends at year {}; holding it flat through year {}",
            pressure.t0() + pressure.n_steps() as i32 - 1,
            pressure.t0() + last as i32
        );
    }
    let means = pressure.means_over(span);
    let sd = pressure.sigma2().sqrt();
    let prior = Normal::new(0.0, sd).map_err(|e| Error::invalid(e.to_string()))?;
    let draw_index: Vec<usize> = (0..spec.n_samples)
        .map(|j| j * latent.n_retained() / spec.n_samples)
        .collect();

    // per cell: [horizon index][sample] intensities
    let per_cell: Vec<Vec<Vec<f64>>> = (0..n_cells)
        .into_par_iter()
        .map(|c| {
            let m = means.series(c);
            let v: Vec<f64> = (0..span)
                .map(|k| {
                    if k < spec.production.n_steps() {
                        *spec.production.get(c, k)
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut out = vec![Vec::with_capacity(spec.n_samples); spec.horizon_steps.len()];
            let cell_seed = derive_seed(spec.seed, c as u64);
            for (j, &d) in draw_index.iter().enumerate() {
                let e = latent.draw(d, c);
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cell_seed, j as u64));
                let path: Vec<f64> = (0..span)
                    .map(|k| {
                        let err = if k < window {
                            e[k]
                        } else {
                            match spec.horizon_latent {
                                HorizonLatent::Zero => 0.0,
                                HorizonLatent::Prior => prior.sample(&mut rng),
                            }
                        };
                        m[k] + err
                    })
                    .collect();
                let log_l = log_intensity_series(&path, &v, params, delta, spec.form);
                for (h, &k) in spec.horizon_steps.iter().enumerate() {
                    out[h].push(log_l[k].exp());
                }
            }
            out
        })
        .collect();

    spec.horizon_steps
        .iter()
        .enumerate()
        .map(|(h, &step)| {
            let mut map = ForecastMap {
                step,
                mean: Vec::with_capacity(n_cells),
                q05: Vec::with_capacity(n_cells),
                q95: Vec::with_capacity(n_cells),
                p_event: Vec::with_capacity(n_cells),
            };
            for cell in &per_cell {
                let mut xs = cell[h].clone();
                if let Some(bad) = xs.iter().find(|x| !x.is_finite()) {
                    return Err(Error::numeric(format!("non-finite forecast intensity {bad} at step {step}")));
                }
                let mean = crate::numeric::pairwise_sum(&xs) / xs.len() as f64;
                xs.sort_by(|a, b| a.total_cmp(b));
                map.q05.push(quantile_sorted(&xs, 0.05));
                map.q95.push(quantile_sorted(&xs, 0.95));
                map.p_event.push(event_probability(mean, delta, cell_area)?);
                map.mean.push(mean);
            }
            Ok(map)
        })
        .collect()
}

/// Poisson counts with mean `Λ·exposure`, one seeded stream per cell.
pub fn sample_counts(intensity: &IntensityCube, exposure: f64, seed: u64) -> Result<CountsCube> {
    let (n_cells, n_steps) = intensity.shape();
    let rows: Vec<Vec<u64>> = (0..n_cells)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, c as u64));
            intensity
                .series(c)
                .iter()
                .map(|&l| poisson(&mut rng, l * exposure))
                .collect::<Result<Vec<u64>>>()
        })
        .collect::<Result<_>>()?;
    Cube::from_vec(n_cells, n_steps, rows.into_iter().flatten().collect())
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::numeric(format!("Poisson mean {mean}: {e}")))?;
    Ok(d.sample(rng) as u64)
}

/// Draw `E(s, k) ~ N(0, σ²)` independently, compute the full-form intensity at
/// `P = m + E`, and draw `N(s, k) ~ Poisson(Λ·Δ·Δ_S)`. Returns the counts and
/// the latent field used.
pub fn simulate(
    params: &ModelParams,
    pressure: &PressureField,
    production: &Cube<f64>,
    grid: &SpatialGrid,
    axis: &TimeAxis,
    seed: u64,
) -> Result<(CountsCube, Cube<f64>)> {
    params.validate()?;
    let n_cells = grid.n_active();
    if pressure.n_cells() != n_cells || pressure.n_steps() < axis.n_steps {
        return Err(Error::Shape(format!(
            "pressure field is {} x {}, simulation needs {n_cells} x {}",
            pressure.n_cells(),
            pressure.n_steps(),
            axis.n_steps
        )));
    }
    if production.n_steps() < axis.n_steps {
        return Err(Error::Shape("production cube shorter than the time axis".into()));
    }
    let production = production.truncated(axis.n_steps)?;
    production.ensure_shape(n_cells, axis.n_steps, "production cube")?;
    let means = pressure.means_over(axis.n_steps);
    let sd = pressure.sigma2().sqrt();
    let exposure = axis.delta() * grid.cell_area();
    let noise = Normal::new(0.0, sd).map_err(|e| Error::invalid(e.to_string()))?;
    let rows: Vec<(Vec<u64>, Vec<f64>)> = (0..n_cells)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, c as u64));
            let e: Vec<f64> = (0..axis.n_steps).map(|_| noise.sample(&mut rng)).collect();
            let path: Vec<f64> = means.series(c).iter().zip(&e).map(|(m, e)| m + e).collect();
            let log_l = log_intensity_series(&path, production.series(c), params, axis.delta(), IntensityForm::Full);
            let n = log_l
                .iter()
                .map(|l| poisson(&mut rng, l.exp() * exposure))
                .collect::<Result<Vec<u64>>>()?;
            Ok((n, e))
        })
        .collect::<Result<_>>()?;
    let (n, e): (Vec<Vec<u64>>, Vec<Vec<f64>>) = rows.into_iter().unzip();
    Ok((
        Cube::from_vec(n_cells, axis.n_steps, n.into_iter().flatten().collect())?,
        Cube::from_vec(n_cells, axis.n_steps, e.into_iter().flatten().collect())?,
    ))
}

/// Synthetic catalog consistent with a counts cube: events uniform within their
/// cell and year, magnitudes Gutenberg-Richter above `min_mag` with the given b-value.
pub fn synthesize_catalog(
    counts: &CountsCube,
    grid: &SpatialGrid,
    axis: &TimeAxis,
    min_mag: f64,
    b_value: f64,
    seed: u64,
) -> Result<Catalog> {
    counts.ensure_shape(grid.n_active(), axis.n_steps, "counts cube")?;
    let mags = Exp::new(b_value * std::f64::consts::LN_10).map_err(|e| Error::invalid(e.to_string()))?;
    let size = grid.cell_size_km();
    let (x0, y0) = grid.origin();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    // interior offsets keep every event strictly inside its half-open bin
    let inner = |rng: &mut ChaCha8Rng| 0.001 + 0.998 * rng.random::<f64>();
    for c in 0..grid.n_active() {
        let (ix, iy) = grid.cell_ixy(c);
        for k in 0..axis.n_steps {
            for _ in 0..*counts.get(c, k) {
                events.push(Event {
                    easting_km: x0 + (ix as f64 + inner(&mut rng)) * size,
                    northing_km: y0 + (iy as f64 + inner(&mut rng)) * size,
                    decimal_year: axis.year(k) as f64 + inner(&mut rng),
                    magnitude: min_mag + mags.sample(&mut rng),
                });
            }
        }
    }
    Ok(Catalog { events })
}

/// Forecast maps as CSV `cell_ix,cell_iy,year,mean_lambda,q05,q95,p_event`.
pub fn write_forecast_csv(
    path: &Path,
    grid: &SpatialGrid,
    t0: i32,
    maps: &[ForecastMap],
    comments: &[String],
) -> Result<()> {
    let write = || -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "cell_ix,cell_iy,year,mean_lambda,q05,q95,p_event")?;
        for m in maps {
            let year = t0 + m.step as i32;
            for (cell, (ix, iy)) in grid.active_cells().enumerate() {
                writeln!(
                    out,
                    "{ix},{iy},{year},{},{},{},{}",
                    m.mean[cell], m.q05[cell], m.q95[cell], m.p_event[cell]
                )?;
            }
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// One map as a gnuplot matrix: `ny` rows of `nx` values, row `iy = 0` first,
/// `NaN` outside the mask, after optional `#` comment lines.
pub fn write_gnuplot_matrix(path: &Path, grid: &SpatialGrid, values: &[f64], comments: &[String]) -> Result<()> {
    if values.len() != grid.n_active() {
        return Err(Error::Shape(format!("{} values for {} active cells", values.len(), grid.n_active())));
    }
    let write = || -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        for iy in 0..grid.ny() {
            let row: Vec<String> = (0..grid.nx())
                .map(|ix| match grid.active_index(ix, iy) {
                    Some(a) => values[a].to_string(),
                    None => "NaN".to_string(),
                })
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
