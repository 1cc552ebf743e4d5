use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const M_PER_KM: f64 = 1000.0;

/// A compacting grid block. Positions and sizes in km, `c_m` in 1/bar and
/// `ΔP` in bar (positive for depletion).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactionBlock {
    pub c_m: f64,
    pub delta_p: f64,
    /// Horizontal position of the block centre.
    pub x_km: f64,
    pub y_km: f64,
    /// Depth of the block centre below the surface.
    pub depth_km: f64,
    pub lx_km: f64,
    pub ly_km: f64,
    pub lz_km: f64,
}

impl CompactionBlock {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth_km > 0.0) {
            return Err(Error::invalid(format!("block depth must be positive (got {})", self.depth_km)));
        }
        if !(self.lx_km > 0.0 && self.ly_km > 0.0 && self.lz_km > 0.0) {
            return Err(Error::invalid("block dimensions must be positive"));
        }
        Ok(())
    }
}

/// Vertical surface displacement in metres at `(x, y)` (km) from the blocks'
/// compaction, superposed as point nuclei with Poisson ratio `nu`.
pub fn subsidence(point: (f64, f64), blocks: &[CompactionBlock], nu: f64) -> Result<f64> {
    if !(nu > 0.0 && nu < 0.5) {
        return Err(Error::invalid(format!("Poisson ratio must lie in (0, 0.5) (got {nu})")));
    }
    let mut sum = 0.0;
    for b in blocks {
        b.validate()?;
        let dx = (point.0 - b.x_km) * M_PER_KM;
        let dy = (point.1 - b.y_km) * M_PER_KM;
        let lz = b.depth_km * M_PER_KM;
        let volume = b.lx_km * b.ly_km * b.lz_km * M_PER_KM.powi(3);
        let r2 = dx * dx + dy * dy + lz * lz;
        sum += b.c_m * b.delta_p * lz * volume / (r2 * r2.sqrt());
    }
    Ok((1.0 - nu) / std::f64::consts::PI * sum)
}
