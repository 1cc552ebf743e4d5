//! Posterior sampling of the latent pressure error `E(s, ·)` by
//! Metropolis-adjusted Langevin, one independent chain per cell.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::Cube;
use crate::error::{Error, Result};
use crate::estimation::FitData;
use crate::numeric::{derive_seed, log_add_exp, mean, mean_variance_bartlett, pairwise_sum};
use crate::ratestate::ModelParams;

pub const DEFAULT_BURN_IN: usize = 5000;
pub const DEFAULT_SAMPLES: usize = 5000;
/// Default step size as a multiple of the prior standard deviation.
pub const DEFAULT_STEP_SCALE: f64 = 0.4;
/// Burn-in acceptance below this halves the step size.
pub const HALVING_THRESHOLD: f64 = 0.2;
const HALVING_BLOCK: usize = 100;
const LOW_ACCEPTANCE: f64 = 0.01;
pub const MIN_DIAGNOSTIC_SAMPLES: usize = 100;

const MAGIC: &[u8; 8] = b"SCXLAT01";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burn_in: usize,
    pub samples: usize,
    pub step_size: f64,
    pub seed: u64,
    pub thinning: usize,
}

impl ChainConfig {
    /// Defaults with `ε = 0.4·σ`.
    pub fn for_sigma2(sigma2: f64, seed: u64) -> Self {
        ChainConfig {
            burn_in: DEFAULT_BURN_IN,
            samples: DEFAULT_SAMPLES,
            step_size: DEFAULT_STEP_SCALE * sigma2.sqrt(),
            seed,
            thinning: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in == 0 || self.samples == 0 {
            return Err(Error::invalid("burn-in and sample counts must be >= 1"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!("step size must be positive (got {})", self.step_size)));
        }
        if self.thinning == 0 {
            return Err(Error::invalid("thinning must be >= 1"));
        }
        if self.samples / self.thinning == 0 {
            return Err(Error::invalid("thinning leaves no retained samples"));
        }
        Ok(())
    }

    pub fn n_retained(&self) -> usize {
        self.samples / self.thinning
    }
}

/// Observed series for one cell.
#[derive(Debug, Clone, Copy)]
pub struct CellData<'a> {
    pub counts: &'a [u64],
    pub pressure: &'a [f64],
    pub production: &'a [f64],
    pub delta: f64,
    pub cell_area: f64,
}

impl<'a> CellData<'a> {
    pub fn from_fit_data(data: &'a FitData, cell: usize) -> Self {
        CellData {
            counts: data.counts.series(cell),
            pressure: data.pressure.series(cell),
            production: data.production.series(cell),
            delta: data.delta,
            cell_area: data.cell_area,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.counts.len()
    }
}

/// Log posterior of `E` (up to a constant) and its gradient, with the
/// full-form `S_P` evaluated at `P = m + E`.
pub fn log_posterior(e: &[f64], cell: &CellData, params: &ModelParams, sigma2: f64) -> Result<(f64, Vec<f64>)> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid(format!("sigma2 must be positive (got {sigma2})")));
    }
    let k = cell.n_steps();
    if e.len() != k || cell.pressure.len() != k || cell.production.len() != k {
        return Err(Error::Shape(format!(
            "latent vector has {} steps, cell data {k}/{}/{}",
            e.len(),
            cell.pressure.len(),
            cell.production.len()
        )));
    }
    let mut grad = vec![0.0; k];
    let mut scratch = Scratch::new(k);
    let value = eval(e, cell, params, sigma2, &mut grad, &mut scratch)?;
    Ok((value, grad))
}

struct Scratch {
    a: Vec<f64>,
    w: Vec<f64>,
    p: Vec<f64>,
}

impl Scratch {
    fn new(k: usize) -> Self {
        Scratch {
            a: vec![0.0; k],
            w: vec![0.0; k],
            p: vec![0.0; k],
        }
    }
}

// With P = m + E, log S_P(k) = αP_k + A_k where
// A_k = log[e^{−αP_0} + c·Σ_{i<k} e^{−αP_i}], so ∂L_k/∂P_j = α(δ_jk − ω_kj)
// with ω the softmax weight of term j inside A_k. The suffix sums G below give
// the gradient in one backward pass.
fn eval(
    e: &[f64],
    cell: &CellData,
    params: &ModelParams,
    sigma2: f64,
    grad: &mut [f64],
    s: &mut Scratch,
) -> Result<f64> {
    let k = e.len();
    let alpha = params.alpha;
    let log_c = params.beta + cell.delta.ln();
    let log_exposure = (cell.delta * cell.cell_area).ln();
    let mut value = 0.0;
    for j in 0..k {
        s.p[j] = cell.pressure[j] + e[j];
        s.a[j] = if j == 0 {
            -alpha * s.p[0]
        } else {
            log_add_exp(s.a[j - 1], log_c - alpha * s.p[j - 1])
        };
        let log_mu = params.theta1 + params.theta2 * cell.production[j] - (alpha * s.p[j] + s.a[j]) + log_exposure;
        let mu = log_mu.exp();
        let n = cell.counts[j] as f64;
        let term = if cell.counts[j] == 0 { -mu } else { n * log_mu - mu };
        if !term.is_finite() {
            return Err(Error::numeric(format!("log posterior not finite at step {j} (log mean {log_mu})")));
        }
        value += term - e[j] * e[j] / (2.0 * sigma2);
        s.w[j] = n - mu;
    }
    let mut g = 0.0;
    for j in (0..k).rev() {
        // g = G_j = Σ_{i>j} w_i exp(A_{j+1} − A_i)
        if j + 1 < k {
            let carry = if j + 2 < k { (s.a[j + 1] - s.a[j + 2]).exp() * g } else { 0.0 };
            g = s.w[j + 1] + carry;
        }
        let d = if j == 0 {
            alpha * g
        } else if j + 1 < k {
            alpha * (-s.w[j] + (log_c - alpha * s.p[j] - s.a[j + 1]).exp() * g)
        } else {
            -alpha * s.w[j]
        };
        grad[j] = d - e[j] / sigma2;
    }
    if let Some(j) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::numeric(format!("log posterior gradient not finite at step {j}")));
    }
    Ok(value)
}

/// One cell's chain.
#[derive(Debug, Clone, PartialEq)]
pub struct CellChain {
    /// Retained draws, `n_retained × n_steps`, draw-major.
    pub draws: Vec<f64>,
    /// Acceptance rate over the sampling phase.
    pub acceptance_rate: f64,
    /// Step size after burn-in adjustment.
    pub step_size: f64,
}

/// MALA for one cell, started at `E = 0`. The RNG stream depends only on
/// `(config.seed, cell)`. During burn-in the step size is halved after every
/// block of 100 iterations whose acceptance falls below 0.2; it is fixed
/// during the sampling phase.
pub fn mala_chain(
    cell: usize,
    config: &ChainConfig,
    params: &ModelParams,
    data: &CellData,
    sigma2: f64,
) -> Result<CellChain> {
    config.validate()?;
    params.validate()?;
    let k = data.n_steps();
    if data.pressure.len() != k || data.production.len() != k {
        return Err(Error::Shape(format!("cell {cell}: counts, pressure and production lengths differ")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, cell as u64));
    let mut s = Scratch::new(k);
    let mut x = vec![0.0; k];
    let mut gx = vec![0.0; k];
    let mut lx = eval(&x, data, params, sigma2, &mut gx, &mut s)?;
    let mut y = vec![0.0; k];
    let mut gy = vec![0.0; k];
    let mut eps = config.step_size;

    let mut step = |x: &mut Vec<f64>, gx: &mut Vec<f64>, lx: &mut f64, eps: f64, rng: &mut ChaCha8Rng| -> bool {
        let half = 0.5 * eps * eps;
        let mut xi2 = 0.0;
        for j in 0..k {
            let xi: f64 = rng.sample(StandardNormal);
            xi2 += xi * xi;
            y[j] = x[j] + half * gx[j] + eps * xi;
        }
        let u: f64 = rng.random();
        let Ok(ly) = eval(&y, data, params, sigma2, &mut gy, &mut s) else {
            return false;
        };
        // log q(x | y) − log q(y | x); the forward residual is exactly ε·ξ
        let mut back = 0.0;
        for j in 0..k {
            let r = x[j] - y[j] - half * gy[j];
            back += r * r;
        }
        let log_ratio = ly - *lx + (eps * eps * xi2 - back) / (2.0 * eps * eps);
        if u.ln() < log_ratio {
            std::mem::swap(x, &mut y);
            std::mem::swap(gx, &mut gy);
            *lx = ly;
            true
        } else {
            false
        }
    };

    let mut done = 0;
    while done < config.burn_in {
        let block = HALVING_BLOCK.min(config.burn_in - done);
        let mut accepted = 0;
        for _ in 0..block {
            accepted += step(&mut x, &mut gx, &mut lx, eps, &mut rng) as usize;
        }
        done += block;
        if (accepted as f64) < HALVING_THRESHOLD * block as f64 {
            eps *= 0.5;
        }
    }
    if eps != config.step_size {
        log::debug!("cell {cell}: step size reduced to {eps:.4e} during burn-in");
    }

    let mut draws = Vec::with_capacity(config.n_retained() * k);
    let mut accepted = 0usize;
    for i in 1..=config.samples {
        accepted += step(&mut x, &mut gx, &mut lx, eps, &mut rng) as usize;
        if i % config.thinning == 0 && draws.len() < config.n_retained() * k {
            draws.extend_from_slice(&x);
        }
    }
    let acceptance_rate = accepted as f64 / config.samples as f64;
    if acceptance_rate < LOW_ACCEPTANCE {
        log::warn!(
            "cell {cell}: acceptance rate {acceptance_rate:.4} after burn-in; try a smaller step size (now {eps:.3e})"
        );
    }
    Ok(CellChain {
        draws,
        acceptance_rate,
        step_size: eps,
    })
}

/// Retained draws for every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentField {
    n_cells: usize,
    n_steps: usize,
    n_retained: usize,
    // cell-major: [cell][draw][step]
    draws: Vec<f64>,
    acceptance_rate: Vec<f64>,
    step_size: Vec<f64>,
}

impl LatentField {
    /// A single all-zero draw: the plug-in field `E = 0`.
    pub fn zeros(n_cells: usize, n_steps: usize) -> Self {
        LatentField {
            n_cells,
            n_steps,
            n_retained: 1,
            draws: vec![0.0; n_cells * n_steps],
            acceptance_rate: vec![0.0; n_cells],
            step_size: vec![0.0; n_cells],
        }
    }

    /// Build from draws laid out `[cell][draw][step]`.
    pub fn from_draws(
        n_cells: usize,
        n_steps: usize,
        n_retained: usize,
        draws: Vec<f64>,
        acceptance_rate: Vec<f64>,
        step_size: Vec<f64>,
    ) -> Result<Self> {
        if draws.len() != n_cells * n_steps * n_retained
            || acceptance_rate.len() != n_cells
            || step_size.len() != n_cells
        {
            return Err(Error::Shape(format!(
                "latent field of {n_retained} x {n_cells} x {n_steps} got {} draws, {} rates, {} step sizes",
                draws.len(),
                acceptance_rate.len(),
                step_size.len()
            )));
        }
        if draws.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("latent draws must be finite"));
        }
        if acceptance_rate.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::invalid("acceptance rates must lie in [0, 1]"));
        }
        Ok(LatentField {
            n_cells,
            n_steps,
            n_retained,
            draws,
            acceptance_rate,
            step_size,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_retained(&self) -> usize {
        self.n_retained
    }

    pub fn acceptance_rates(&self) -> &[f64] {
        &self.acceptance_rate
    }

    pub fn step_sizes(&self) -> &[f64] {
        &self.step_size
    }

    /// Draw `d` for `cell`, one value per year step.
    pub fn draw(&self, d: usize, cell: usize) -> &[f64] {
        let start = (cell * self.n_retained + d) * self.n_steps;
        &self.draws[start..start + self.n_steps]
    }

    /// All draws of one cell, `n_retained × n_steps`.
    pub fn cell_draws(&self, cell: usize) -> &[f64] {
        let len = self.n_retained * self.n_steps;
        &self.draws[cell * len..(cell + 1) * len]
    }

    pub fn posterior_mean(&self) -> Cube<f64> {
        let mut out = Cube::filled(self.n_cells, self.n_steps, 0.0);
        for c in 0..self.n_cells {
            let draws = self.cell_draws(c);
            for (k, slot) in out.series_mut(c).iter_mut().enumerate() {
                let xs: Vec<f64> = (0..self.n_retained).map(|d| draws[d * self.n_steps + k]).collect();
                *slot = pairwise_sum(&xs) / self.n_retained as f64;
            }
        }
        out
    }

    /// Per-draw mean of `E` over the year steps.
    pub fn draw_means(&self, cell: usize) -> Vec<f64> {
        self.cell_draws(cell).chunks(self.n_steps).map(mean).collect()
    }

    /// Running mean of [`LatentField::draw_means`] over the retained iterations.
    pub fn trace_means(&self, cell: usize) -> Vec<f64> {
        let mut sum = 0.0;
        self.draw_means(cell)
            .into_iter()
            .enumerate()
            .map(|(i, x)| {
                sum += x;
                sum / (i + 1) as f64
            })
            .collect()
    }
}

/// Run every cell's chain in parallel. Each chain is seeded from
/// `(config.seed, cell)`, so draws do not depend on scheduling or thread count.
pub fn sample_field(config: &ChainConfig, params: &ModelParams, data: &FitData, sigma2: f64) -> Result<LatentField> {
    config.validate()?;
    let chains: Vec<CellChain> = (0..data.n_cells())
        .into_par_iter()
        .map(|c| mala_chain(c, config, params, &CellData::from_fit_data(data, c), sigma2))
        .collect::<Result<_>>()?;
    let (n_cells, n_steps) = data.counts.shape();
    let mut draws = Vec::with_capacity(n_cells * n_steps * config.n_retained());
    let mut rates = Vec::with_capacity(n_cells);
    let mut steps = Vec::with_capacity(n_cells);
    for chain in chains {
        draws.extend(chain.draws);
        rates.push(chain.acceptance_rate);
        steps.push(chain.step_size);
    }
    LatentField::from_draws(n_cells, n_steps, config.n_retained(), draws, rates, steps)
}

/// Geweke z-score comparing the first 10 % and last 50 % of a series, with
/// Bartlett long-run variances for each segment.
pub fn geweke_z(xs: &[f64]) -> f64 {
    let n = xs.len();
    let a = &xs[..(n / 10).max(2)];
    let b = &xs[n - (n / 2).max(2)..];
    let var = mean_variance_bartlett(a) + mean_variance_bartlett(b);
    if var == 0.0 {
        return if mean(a) == mean(b) { 0.0 } else { f64::INFINITY };
    }
    (mean(a) - mean(b)) / var.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDiagnostics {
    pub cell: usize,
    pub acceptance_rate: f64,
    pub step_size: f64,
    pub geweke_z: f64,
    pub stationary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub n_retained: usize,
    pub cells: Vec<CellDiagnostics>,
    pub n_stationary: usize,
    pub mean_acceptance: f64,
}

/// Acceptance rates and a stationarity flag (`|z| < 2`) per cell, computed on
/// the per-draw mean of `E` over year steps.
pub fn diagnostics(field: &LatentField) -> Result<DiagnosticsReport> {
    if field.n_retained() < MIN_DIAGNOSTIC_SAMPLES {
        return Err(Error::invalid(format!(
            "diagnostics need at least {MIN_DIAGNOSTIC_SAMPLES} retained draws (got {})",
            field.n_retained()
        )));
    }
    let cells: Vec<CellDiagnostics> = (0..field.n_cells())
        .map(|c| {
            let z = geweke_z(&field.draw_means(c));
            CellDiagnostics {
                cell: c,
                acceptance_rate: field.acceptance_rate[c],
                step_size: field.step_size[c],
                geweke_z: z,
                stationary: z.abs() < 2.0,
            }
        })
        .collect();
    let n_stationary = cells.iter().filter(|c| c.stationary).count();
    Ok(DiagnosticsReport {
        n_retained: field.n_retained(),
        n_stationary,
        mean_acceptance: mean(&field.acceptance_rate),
        cells,
    })
}

/// Binary layout, all little-endian: 8-byte magic `SCXLAT01`; `u64` label
/// length and the UTF-8 label; `u64` retained draws, cells, steps; `f64` draws
/// in (draw, cell, step) row-major order; `f64` acceptance rate per cell;
/// `f64` step size per cell.
pub fn write_draws(path: &Path, field: &LatentField, label: &str) -> Result<()> {
    let write = || -> std::io::Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_all(&(label.len() as u64).to_le_bytes())?;
        out.write_all(label.as_bytes())?;
        for dim in [field.n_retained, field.n_cells, field.n_steps] {
            out.write_all(&(dim as u64).to_le_bytes())?;
        }
        for d in 0..field.n_retained {
            for c in 0..field.n_cells {
                for v in field.draw(d, c) {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
        for v in field.acceptance_rate.iter().chain(&field.step_size) {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Read a file written by [`write_draws`], returning the field and its label.
pub fn read_draws(path: &Path) -> Result<(LatentField, String)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut input = BufReader::new(file);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "not a latent draws file".into(),
        });
    }
    let mut buf = [0u8; 8];
    let mut next = |input: &mut BufReader<std::fs::File>| -> Result<[u8; 8]> {
        input.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        Ok(buf)
    };
    let label_len = u64::from_le_bytes(next(&mut input)?);
    if label_len > 1 << 20 {
        return Err(Error::invalid(format!("{}: implausible label length {label_len}", path.display())));
    }
    let mut label = vec![0u8; label_len as usize];
    input.read_exact(&mut label).map_err(|e| Error::io(path, e))?;
    let label = String::from_utf8(label).map_err(|_| Error::invalid("draws label is not UTF-8"))?;
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = usize::try_from(u64::from_le_bytes(next(&mut input)?))
            .map_err(|_| Error::invalid("latent draws dimension overflows usize"))?;
    }
    let [n_retained, n_cells, n_steps] = dims;
    let mut draws = vec![0.0; n_retained * n_cells * n_steps];
    for d in 0..n_retained {
        for c in 0..n_cells {
            let start = (c * n_retained + d) * n_steps;
            for slot in &mut draws[start..start + n_steps] {
                *slot = f64::from_le_bytes(next(&mut input)?);
            }
        }
    }
    let mut tail = |n: usize| -> Result<Vec<f64>> { (0..n).map(|_| next(&mut input).map(f64::from_le_bytes)).collect() };
    let rates = tail(n_cells)?;
    let steps = tail(n_cells)?;
    let field = LatentField::from_draws(n_cells, n_steps, n_retained, draws, rates, steps)?;
    Ok((field, label))
}

/// Running-mean traces as CSV, after `#` header lines: `cell,iteration,running_mean`.
pub fn write_trace_csv(path: &Path, field: &LatentField, header: &[String]) -> Result<()> {
    let write = || -> std::io::Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        for line in header {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "cell,iteration,running_mean")?;
        for c in 0..field.n_cells {
            for (i, m) in field.trace_means(c).iter().enumerate() {
                writeln!(out, "{c},{},{m}", i + 1)?;
            }
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cell<'a>(n: &'a [u64], m: &'a [f64], v: &'a [f64]) -> CellData<'a> {
        CellData {
            counts: n,
            pressure: m,
            production: v,
            delta: 1.0,
            cell_area: 1.0,
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let n = [0, 3, 1, 7, 2, 0, 12, 4];
        let m = [300.0, 295.0, 280.0, 262.0, 250.0, 241.0, 220.0, 210.0];
        let v = [0.5, 1.0, 2.0, 1.5, 0.2, 0.0, 3.0, 1.0];
        let data = cell(&n, &m, &v);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for params in [
            ModelParams::new(-2.0, 0.3, 0.05, -1.0).unwrap(),
            ModelParams::new(-1.0, 0.1, 0.02, 2.0).unwrap(),
            ModelParams::new(-5.5, 1.0, 0.013, -16.0).unwrap(),
        ] {
            let e: Vec<f64> = (0..n.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (_, g) = log_posterior(&e, &data, &params, 1.3).unwrap();
            for j in 0..e.len() {
                let h = 1e-5;
                let mut ep = e.clone();
                let mut em = e.clone();
                ep[j] += h;
                em[j] -= h;
                let fd = (log_posterior(&ep, &data, &params, 1.3).unwrap().0
                    - log_posterior(&em, &data, &params, 1.3).unwrap().0)
                    / (2.0 * h);
                let rel = (g[j] - fd).abs() / fd.abs().max(1e-3);
                assert!(rel < 1e-5, "step {j}: analytic {} fd {fd}", g[j]);
            }
        }
    }

    #[test]
    fn prior_only_gradient() {
        let n = [0u64; 5];
        let m = [10.0, 9.0, 8.0, 7.0, 6.0];
        let v = [1.0; 5];
        let params = ModelParams::new(-3.0, 0.2, 0.0, -2.0).unwrap();
        let e = [0.3, -1.0, 2.0, 0.0, -0.5];
        let (_, g) = log_posterior(&e, &cell(&n, &m, &v), &params, 2.0).unwrap();
        for (gj, ej) in g.iter().zip(&e) {
            assert!((gj + ej / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_nonpositive_variance() {
        let data = cell(&[1], &[1.0], &[0.0]);
        let params = ModelParams::new(0.0, 0.0, 0.1, 0.0).unwrap();
        assert!(log_posterior(&[0.0], &data, &params, 0.0).is_err());
    }

    #[test]
    fn tiny_prior_variance_pins_mode_at_zero() {
        let n = [5, 0, 9];
        let m = [100.0, 90.0, 80.0];
        let v = [1.0, 1.0, 1.0];
        let data = cell(&n, &m, &v);
        let params = ModelParams::new(-1.0, 0.5, 0.05, -1.0).unwrap();
        let sigma2 = 1e-8;
        // gradient ascent with step scaled to the prior curvature
        let mut e = vec![0.5, -0.5, 0.2];
        for _ in 0..200 {
            let (_, g) = log_posterior(&e, &data, &params, sigma2).unwrap();
            for (x, gj) in e.iter_mut().zip(&g) {
                *x += 0.5 * sigma2 * gj;
            }
        }
        assert!(e.iter().all(|x| x.abs() < 1e-3), "{e:?}");
    }

    #[test]
    fn chains_are_deterministic() {
        let n = [1, 2, 0];
        let m = [50.0, 45.0, 40.0];
        let v = [1.0, 1.0, 1.0];
        let data = cell(&n, &m, &v);
        let params = ModelParams::new(-1.0, 0.1, 0.1, -1.0).unwrap();
        let config = ChainConfig {
            burn_in: 200,
            samples: 300,
            step_size: 0.5,
            seed: 42,
            thinning: 1,
        };
        let a = mala_chain(3, &config, &params, &data, 1.0).unwrap();
        let b = mala_chain(3, &config, &params, &data, 1.0).unwrap();
        assert_eq!(a, b);
        let c = mala_chain(4, &config, &params, &data, 1.0).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn geweke_flags_trend_not_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let iid: Vec<f64> = (0..5000).map(|_| rng.sample(StandardNormal)).collect();
        assert!(geweke_z(&iid).abs() < 2.0);
        let trend: Vec<f64> = (0..5000).map(|i| i as f64 / 500.0 + 0.1 * iid[i]).collect();
        assert!(geweke_z(&trend).abs() > 2.0);
    }

    #[test]
    fn draws_round_trip_through_binary() {
        let field = LatentField::from_draws(
            2,
            3,
            2,
            (0..12).map(|i| i as f64 * 0.25 - 1.0).collect(),
            vec![0.5, 0.6],
            vec![0.1, 0.2],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("draws.bin");
        write_draws(&path, &field, "abc").unwrap();
        let (back, label) = read_draws(&path).unwrap();
        assert_eq!(back, field);
        assert_eq!(label, "abc");
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 8 + 8 + 3 + 24 + 8 * (12 + 4));
    }
}
