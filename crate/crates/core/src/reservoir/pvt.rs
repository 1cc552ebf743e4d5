use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use crate::datamodel::read_rows;
use crate::error::{Error, Result};

pub const PVT_DAMPING: f64 = 0.5;
pub const PVT_TOL: f64 = 1e-8;
pub const PVT_MAX_ITER: usize = 200;

/// Gas deviation factor `z(P, T)` on a rectangular table, interpolated bilinearly.
#[derive(Debug, Clone, PartialEq)]
pub struct ZTable {
    pressures: Vec<f64>,
    temperatures: Vec<f64>,
    // temperature-major: z[it * n_p + ip]
    z: Vec<f64>,
}

impl ZTable {
    /// `z` is laid out temperature-major, `z[it * pressures.len() + ip]`.
    pub fn new(pressures: Vec<f64>, temperatures: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        let ascending = |xs: &[f64]| !xs.is_empty() && xs.windows(2).all(|w| w[0] < w[1]) && xs.iter().all(|x| x.is_finite());
        if !ascending(&pressures) || !ascending(&temperatures) {
            return Err(Error::invalid("z-table axes must be finite and strictly increasing"));
        }
        if z.len() != pressures.len() * temperatures.len() {
            return Err(Error::Shape(format!(
                "z-table has {} values for a {} x {} grid",
                z.len(),
                pressures.len(),
                temperatures.len()
            )));
        }
        if let Some(bad) = z.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!("z must be positive (got {bad})")));
        }
        Ok(ZTable {
            pressures,
            temperatures,
            z,
        })
    }

    /// A table with the same `z` everywhere on `[p_lo, p_hi] × [t_lo, t_hi]`.
    pub fn constant(z: f64, p_range: (f64, f64), t_range: (f64, f64)) -> Result<Self> {
        ZTable::new(vec![p_range.0, p_range.1], vec![t_range.0, t_range.1], vec![z; 4])
    }

    pub fn pressure_range(&self) -> (f64, f64) {
        (self.pressures[0], *self.pressures.last().expect("non-empty"))
    }

    pub fn temperature_range(&self) -> (f64, f64) {
        (self.temperatures[0], *self.temperatures.last().expect("non-empty"))
    }

    fn covers(&self, p: f64, t: f64) -> bool {
        let (p0, p1) = self.pressure_range();
        let (t0, t1) = self.temperature_range();
        (p0..=p1).contains(&p) && (t0..=t1).contains(&t)
    }

    /// Bilinear interpolation; errors outside the table.
    pub fn z(&self, p: f64, t: f64) -> Result<f64> {
        if !self.covers(p, t) {
            let (p0, p1) = self.pressure_range();
            let (t0, t1) = self.temperature_range();
            return Err(Error::OutOfRange(format!(
                "z({p}, {t}) is outside the table [{p0}, {p1}] x [{t0}, {t1}]"
            )));
        }
        Ok(self.z_clamped(p, t))
    }

    /// Bilinear interpolation with the arguments clamped to the table.
    pub fn z_clamped(&self, p: f64, t: f64) -> f64 {
        let (ip, fp) = bracket(&self.pressures, p);
        let (it, ft) = bracket(&self.temperatures, t);
        let np = self.pressures.len();
        let at = |i: usize, j: usize| self.z[j * np + i];
        let ip1 = (ip + 1).min(np - 1);
        let it1 = (it + 1).min(self.temperatures.len() - 1);
        let lo = at(ip, it) + fp * (at(ip1, it) - at(ip, it));
        let hi = at(ip, it1) + fp * (at(ip1, it1) - at(ip, it1));
        lo + ft * (hi - lo)
    }
}

// Index of the lower knot and the fractional position, clamped to the axis.
fn bracket(xs: &[f64], x: f64) -> (usize, f64) {
    if xs.len() == 1 || x <= xs[0] {
        return (0, 0.0);
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return (last - 1, 1.0);
    }
    let i = xs.partition_point(|&k| k <= x) - 1;
    (i, (x - xs[i]) / (xs[i + 1] - xs[i]))
}

#[derive(Deserialize)]
struct PvtRow {
    pressure_bara: f64,
    temperature_k: f64,
    z: f64,
}

/// PVT CSV with columns `pressure_bara,temperature_k,z`, covering every
/// combination of the listed pressures and temperatures exactly once.
pub fn read_pvt_csv(path: &Path) -> Result<ZTable> {
    let rows: Vec<(u64, PvtRow)> = read_rows(path)?;
    let key = |x: f64| x.to_bits();
    let ps: BTreeSet<u64> = rows.iter().map(|(_, r)| key(r.pressure_bara)).collect();
    let ts: BTreeSet<u64> = rows.iter().map(|(_, r)| key(r.temperature_k)).collect();
    let mut ps: Vec<f64> = ps.into_iter().map(f64::from_bits).collect();
    let mut ts: Vec<f64> = ts.into_iter().map(f64::from_bits).collect();
    ps.sort_by(f64::total_cmp);
    ts.sort_by(f64::total_cmp);
    let mut z = vec![f64::NAN; ps.len() * ts.len()];
    for (line, r) in &rows {
        let ip = ps.binary_search_by(|p| p.total_cmp(&r.pressure_bara)).expect("collected");
        let it = ts.binary_search_by(|t| t.total_cmp(&r.temperature_k)).expect("collected");
        let slot = &mut z[it * ps.len() + ip];
        if !slot.is_nan() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: format!("duplicate z entry at ({}, {})", r.pressure_bara, r.temperature_k),
            });
        }
        *slot = r.z;
    }
    if z.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid(format!(
            "{}: z-table is not a full pressure x temperature grid",
            path.display()
        )));
    }
    ZTable::new(ps, ts, z)
}

/// z-table with the CGR trend constants `CGR = c1·P/z + c2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GasPvt {
    pub table: Arc<ZTable>,
    pub c1: f64,
    pub c2: f64,
}

impl GasPvt {
    pub fn new(table: Arc<ZTable>, c1: f64, c2: f64) -> Result<Self> {
        if !(c1.is_finite() && c2.is_finite()) || c1 == 0.0 {
            return Err(Error::invalid(format!("CGR trend needs finite c1 != 0 and c2 (got {c1}, {c2})")));
        }
        Ok(GasPvt { table, c1, c2 })
    }

    /// Cumulative CGR predicted by the P/z trend.
    pub fn cgr(&self, p: f64, t: f64) -> Result<f64> {
        Ok(self.c1 * p / self.table.z(p, t)? + self.c2)
    }
}

/// Solve `P = z(P, T)/c1 · (cgr − c2)` by damped fixed-point iteration.
///
/// Starts from the closed form with `z` at the middle of the pressure range,
/// so a constant table converges on the first check. Intermediate iterates
/// read `z` clamped to the table; only the converged pressure must lie inside it.
pub fn pressure_match(cgr: f64, pvt: &GasPvt, temperature: f64) -> Result<f64> {
    let scale = (cgr - pvt.c2) / pvt.c1;
    if scale == 0.0 {
        return Ok(0.0);
    }
    if !(scale > 0.0) {
        return Err(Error::invalid(format!(
            "no positive pressure matches CGR {cgr} with c1 = {}, c2 = {}",
            pvt.c1, pvt.c2
        )));
    }
    let (p_lo, p_hi) = pvt.table.pressure_range();
    let (t_lo, t_hi) = pvt.table.temperature_range();
    if !(t_lo..=t_hi).contains(&temperature) {
        return Err(Error::OutOfRange(format!(
            "temperature {temperature} is outside the z-table [{t_lo}, {t_hi}]"
        )));
    }
    let mut p = scale * pvt.table.z_clamped(0.5 * (p_lo + p_hi), temperature);
    for _ in 0..PVT_MAX_ITER {
        let target = scale * pvt.table.z_clamped(p, temperature);
        let next = (1.0 - PVT_DAMPING) * p + PVT_DAMPING * target;
        if (target - p).abs() <= PVT_TOL {
            p = target;
            if !(p_lo..=p_hi).contains(&p) {
                return Err(Error::OutOfRange(format!(
                    "matched pressure {p} lies outside the z-table [{p_lo}, {p_hi}]"
                )));
            }
            return Ok(p);
        }
        p = next;
    }
    Err(Error::numeric(format!(
        "pressure match for CGR {cgr} did not converge in {PVT_MAX_ITER} iterations"
    )))
}
