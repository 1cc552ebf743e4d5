use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::read_rows;
use crate::error::{Error, Result};

/// `N_P / G_P`.
pub fn cgr_cumulative(n_p: f64, g_p: f64) -> Result<f64> {
    if !(g_p > 0.0) {
        return Err(Error::invalid(format!("cumulative gas must be positive (got {g_p})")));
    }
    Ok(n_p / g_p)
}

/// Ratio of condensate to gas increments between two times.
pub fn cgr_instantaneous(n_prev: f64, n_now: f64, g_prev: f64, g_now: f64) -> Result<f64> {
    let dg = g_now - g_prev;
    if !(dg > 0.0) {
        return Err(Error::invalid(format!("gas increment must be positive (got {dg})")));
    }
    Ok((n_now - n_prev) / dg)
}

/// One offtake row: cumulative condensate and gas of a region at a year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfftakeRecord {
    pub region: String,
    pub year: i32,
    pub cum_condensate: f64,
    pub cum_gas: f64,
}

/// Cumulative offtake of one region, ordered by year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfftakeSeries {
    years: Vec<i32>,
    n_p: Vec<f64>,
    g_p: Vec<f64>,
}

impl OfftakeSeries {
    pub fn new(mut rows: Vec<(i32, f64, f64)>) -> Result<Self> {
        rows.sort_by_key(|r| r.0);
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("offtake series has a repeated year"));
        }
        for w in rows.windows(2) {
            if w[1].1 < w[0].1 || w[1].2 < w[0].2 {
                return Err(Error::invalid(format!(
                    "cumulative offtake decreases between {} and {}",
                    w[0].0, w[1].0
                )));
            }
        }
        if rows.iter().any(|r| !(r.1 >= 0.0 && r.2 >= 0.0)) {
            return Err(Error::invalid("cumulative offtake must be non-negative"));
        }
        Ok(OfftakeSeries {
            years: rows.iter().map(|r| r.0).collect(),
            n_p: rows.iter().map(|r| r.1).collect(),
            g_p: rows.iter().map(|r| r.2).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn index_of(&self, year: i32) -> Option<usize> {
        self.years.binary_search(&year).ok()
    }

    pub fn cumulative(&self, i: usize) -> Result<f64> {
        cgr_cumulative(self.n_p[i], self.g_p[i])
    }

    /// Instantaneous CGR over the interval ending at entry `i` (`i ≥ 1`).
    pub fn instantaneous(&self, i: usize) -> Result<f64> {
        if i == 0 || i >= self.len() {
            return Err(Error::OutOfRange(format!(
                "instantaneous CGR needs 1 <= index < {} (got {i})",
                self.len()
            )));
        }
        cgr_instantaneous(self.n_p[i - 1], self.n_p[i], self.g_p[i - 1], self.g_p[i])
    }
}

/// Offtake CSV with columns `region,year,cum_condensate,cum_gas`.
pub fn read_offtake_csv(path: &Path) -> Result<Vec<OfftakeRecord>> {
    Ok(read_rows(path)?.into_iter().map(|(_, r)| r).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn direct_ratios() {
        assert_eq!(cgr_cumulative(0.0, 10.0).unwrap(), 0.0);
        assert_eq!(cgr_cumulative(5.0, 100.0).unwrap(), 0.05);
        assert!(cgr_cumulative(1.0, 0.0).is_err());
        assert!(cgr_instantaneous(1.0, 2.0, 5.0, 5.0).is_err());
    }

    #[test]
    fn stepwise_instantaneous() {
        let s = OfftakeSeries::new(vec![(2000, 0.0, 0.0), (2001, 1.0, 10.0), (2002, 4.0, 20.0)]).unwrap();
        assert!((s.instantaneous(1).unwrap() - 0.1).abs() < 1e-15);
        assert!((s.instantaneous(2).unwrap() - 0.3).abs() < 1e-15);
        assert!(s.instantaneous(0).is_err());
    }

    #[test]
    fn constant_ratio_matches_cumulative() {
        let rows = (0..6).map(|i| (2000 + i, 0.02 * 7.0 * i as f64, 7.0 * i as f64)).collect();
        let s = OfftakeSeries::new(rows).unwrap();
        for i in 1..6 {
            assert!((s.instantaneous(i).unwrap() - s.cumulative(i).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_decreasing_series() {
        assert!(OfftakeSeries::new(vec![(2000, 1.0, 5.0), (2001, 0.5, 6.0)]).is_err());
    }

    proptest! {
        #[test]
        fn instantaneous_is_difference_quotient(
            incs in prop::collection::vec((0.0f64..5.0, 0.1f64..50.0), 2..20)
        ) {
            let mut n = 0.0;
            let mut g = 0.0;
            let mut rows = vec![(1990, 0.0, 0.0)];
            for (i, (dn, dg)) in incs.iter().enumerate() {
                n += dn;
                g += dg;
                rows.push((1991 + i as i32, n, g));
            }
            let s = OfftakeSeries::new(rows.clone()).unwrap();
            for i in 1..rows.len() {
                let oracle = (rows[i].1 - rows[i - 1].1) / (rows[i].2 - rows[i - 1].2);
                prop_assert!((s.instantaneous(i).unwrap() - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
            }
        }
    }
}
