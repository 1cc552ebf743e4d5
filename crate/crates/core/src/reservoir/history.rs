use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cgr::OfftakeSeries;
use super::pvt::{pressure_match, GasPvt, ZTable};
use super::subsidence::{subsidence, CompactionBlock};
use crate::datamodel::read_rows;
use crate::error::{Error, Result};
use crate::numeric::{derive_seed, pearson};

/// Uniform sampling range for one parameter.
///
/// Recognised names are `c1`, `c2`, `cm` and their per-region forms
/// `c1.<region>`, `c2.<region>`, `cm.<region>`, which take precedence.
/// Other names are sampled and reported but do not enter the forward model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureObservation {
    pub region: String,
    pub year: i32,
    pub pressure_bara: f64,
    pub sd: f64,
}

/// Levelling or satellite subsidence observation in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub x_km: f64,
    pub y_km: f64,
    pub year: i32,
    pub subsidence_m: f64,
    pub sd: f64,
    /// Region whose local RMSE this benchmark counts towards, if any.
    #[serde(default)]
    pub region: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub name: String,
    pub offtake: OfftakeSeries,
    pub temperature_k: f64,
    pub initial_pressure_bara: f64,
    /// Block geometry; `c_m` and `delta_p` are set by the forward model.
    pub blocks: Vec<CompactionBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsidenceSetup {
    pub poisson_ratio: f64,
    pub benchmarks: Vec<Benchmark>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryMatchProblem {
    pub table: Arc<ZTable>,
    pub regions: Vec<Region>,
    pub pressure: Vec<PressureObservation>,
    pub subsidence: Option<SubsidenceSetup>,
    /// Parameters held at a value instead of sampled.
    pub fixed: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedModel {
    pub rank: usize,
    pub draw: usize,
    /// Sampled values in the order of [`HistoryMatchResult::param_names`].
    pub params: Vec<f64>,
    pub rmse_global: f64,
    /// Per region in the order of [`HistoryMatchResult::region_names`];
    /// `NaN` for a region without observations.
    pub rmse_regions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryMatchResult {
    pub param_names: Vec<String>,
    pub region_names: Vec<String>,
    pub models: Vec<RankedModel>,
    pub n_failed: usize,
    /// Pearson correlation of each sampled parameter with each region's RMSE,
    /// followed by the global RMSE as the last column.
    pub correlations: Vec<Vec<f64>>,
}

impl HistoryMatchResult {
    pub fn best(&self) -> &RankedModel {
        &self.models[0]
    }

    pub fn param(&self, model: &RankedModel, name: &str) -> Option<f64> {
        self.param_names.iter().position(|n| n == name).map(|i| model.params[i])
    }
}

struct Prepared<'a> {
    regions: Vec<&'a Region>,
    pressure: Vec<(usize, usize, &'a PressureObservation)>,
    benchmarks: Vec<(Option<usize>, &'a Benchmark)>,
    nu: f64,
    table: Arc<ZTable>,
}

fn prepare<'a>(problem: &'a HistoryMatchProblem, names: &BTreeSet<&str>) -> Result<Prepared<'a>> {
    let mut regions: Vec<&Region> = problem.regions.iter().collect();
    regions.sort_by(|a, b| a.name.cmp(&b.name));
    if regions.windows(2).any(|w| w[0].name == w[1].name) {
        return Err(Error::invalid("region names must be unique"));
    }
    let region_of = |name: &str| -> Result<usize> {
        regions
            .binary_search_by(|r| r.name.as_str().cmp(name))
            .map_err(|_| Error::invalid(format!("observation refers to unknown region {name:?}")))
    };
    let year_index = |r: &Region, year: i32| -> Result<usize> {
        match r.offtake.index_of(year) {
            Some(i) if i >= 1 => Ok(i),
            _ => Err(Error::invalid(format!(
                "region {:?} has no offtake interval ending in {year}",
                r.name
            ))),
        }
    };
    let mut pressure = Vec::with_capacity(problem.pressure.len());
    for obs in &problem.pressure {
        if !(obs.sd > 0.0) {
            return Err(Error::invalid("observation standard deviations must be positive"));
        }
        let r = region_of(&obs.region)?;
        pressure.push((r, year_index(regions[r], obs.year)?, obs));
    }
    // canonical order so RMSE sums do not depend on input order
    pressure.sort_by(|a, b| {
        (a.0, a.1, a.2.pressure_bara.to_bits(), a.2.sd.to_bits()).cmp(&(b.0, b.1, b.2.pressure_bara.to_bits(), b.2.sd.to_bits()))
    });
    let mut benchmarks = Vec::new();
    let mut nu = 0.0;
    if let Some(setup) = &problem.subsidence {
        nu = setup.poisson_ratio;
        for b in &setup.benchmarks {
            if !(b.sd > 0.0) {
                return Err(Error::invalid("benchmark standard deviations must be positive"));
            }
            let r = b.region.as_deref().map(region_of).transpose()?;
            for reg in &regions {
                year_index(reg, b.year)?;
            }
            benchmarks.push((r, b));
        }
        benchmarks.sort_by(|a, b| {
            let key = |x: &Benchmark| (x.year, x.x_km.to_bits(), x.y_km.to_bits(), x.subsidence_m.to_bits(), x.sd.to_bits());
            (a.0, key(a.1)).cmp(&(b.0, key(b.1)))
        });
    }
    if pressure.is_empty() && benchmarks.is_empty() {
        return Err(Error::invalid("history match has no observations"));
    }
    let has = |n: &str| names.contains(n) || problem.fixed.contains_key(n);
    for r in &regions {
        for p in ["c1", "c2"] {
            if !has(p) && !has(&format!("{p}.{}", r.name)) {
                return Err(Error::invalid(format!("no range or fixed value for {p} in region {:?}", r.name)));
            }
        }
        if !benchmarks.is_empty() && !has("cm") && !has(&format!("cm.{}", r.name)) {
            return Err(Error::invalid(format!("no range or fixed value for cm in region {:?}", r.name)));
        }
    }
    Ok(Prepared {
        regions,
        pressure,
        benchmarks,
        nu,
        table: problem.table.clone(),
    })
}

/// Predicted value for every prepared observation, pressures first, with the
/// region each counts towards.
fn forward(prep: &Prepared, value: &dyn Fn(&str) -> Option<f64>) -> Result<Vec<(Option<usize>, f64)>> {
    let pick = |p: &str, region: &str| value(&format!("{p}.{region}")).or_else(|| value(p));
    let mut matched: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); prep.regions.len()];
    let mut pvts = Vec::with_capacity(prep.regions.len());
    for r in &prep.regions {
        let c1 = pick("c1", &r.name).expect("checked in prepare");
        let c2 = pick("c2", &r.name).expect("checked in prepare");
        pvts.push(GasPvt::new(prep.table.clone(), c1, c2)?);
    }
    let mut pressure_at = |r: usize, i: usize| -> Result<f64> {
        if let Some(&p) = matched[r].get(&i) {
            return Ok(p);
        }
        let reg = prep.regions[r];
        let p = pressure_match(reg.offtake.instantaneous(i)?, &pvts[r], reg.temperature_k)?;
        matched[r].insert(i, p);
        Ok(p)
    };
    let mut out = Vec::with_capacity(prep.pressure.len() + prep.benchmarks.len());
    for &(r, i, _) in &prep.pressure {
        out.push((Some(r), pressure_at(r, i)?));
    }
    for &(r, b) in &prep.benchmarks {
        let mut blocks = Vec::new();
        for (ri, reg) in prep.regions.iter().enumerate() {
            let i = reg.offtake.index_of(b.year).expect("checked in prepare");
            let dp = reg.initial_pressure_bara - pressure_at(ri, i)?;
            let cm = pick("cm", &reg.name).expect("checked in prepare");
            blocks.extend(reg.blocks.iter().map(|g| CompactionBlock { c_m: cm, delta_p: dp, ..*g }));
        }
        out.push((r, subsidence((b.x_km, b.y_km), &blocks, prep.nu)?));
    }
    Ok(out)
}

/// Squared standardized residuals in prepared order.
fn squared_residuals(prep: &Prepared, predicted: &[(Option<usize>, f64)]) -> Vec<(Option<usize>, f64)> {
    let observed = prep
        .pressure
        .iter()
        .map(|o| (o.2.pressure_bara, o.2.sd))
        .chain(prep.benchmarks.iter().map(|b| (b.1.subsidence_m, b.1.sd)));
    predicted
        .iter()
        .zip(observed)
        .map(|(&(r, pred), (obs, sd))| (r, ((obs - pred) / sd).powi(2)))
        .collect()
}

/// Sample `n_simulations` parameter vectors uniformly within `ranges`, run the
/// forward model for each, and rank by global RMSE of standardized residuals.
///
/// Draw `i` uses its own RNG stream derived from `(seed, i)`. Draws whose
/// forward model fails are dropped; more than half failing is an error.
pub fn history_match(
    problem: &HistoryMatchProblem,
    ranges: &[ParamRange],
    n_simulations: usize,
    seed: u64,
) -> Result<HistoryMatchResult> {
    if ranges.is_empty() {
        return Err(Error::invalid("history match needs at least one parameter range"));
    }
    if n_simulations == 0 {
        return Err(Error::invalid("history match needs n_simulations >= 1"));
    }
    let mut ranges: Vec<&ParamRange> = ranges.iter().collect();
    ranges.sort_by(|a, b| a.name.cmp(&b.name));
    if ranges.windows(2).any(|w| w[0].name == w[1].name) {
        return Err(Error::invalid("parameter names must be unique"));
    }
    for r in &ranges {
        if !(r.low.is_finite() && r.high.is_finite() && r.low < r.high) {
            return Err(Error::invalid(format!(
                "range for {} must be finite with low < high (got [{}, {}])",
                r.name, r.low, r.high
            )));
        }
        if problem.fixed.contains_key(&r.name) {
            return Err(Error::invalid(format!("{} is both fixed and sampled", r.name)));
        }
    }
    let names: BTreeSet<&str> = ranges.iter().map(|r| r.name.as_str()).collect();
    let prep = prepare(problem, &names)?;
    let n_regions = prep.regions.len();

    let runs: Vec<(Vec<f64>, Result<(f64, Vec<f64>)>)> = (0..n_simulations)
        .into_par_iter()
        .map(|draw| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, draw as u64));
            let params: Vec<f64> = ranges
                .iter()
                .map(|r| r.low + (r.high - r.low) * rng.random::<f64>())
                .collect();
            let value = |name: &str| -> Option<f64> {
                ranges
                    .iter()
                    .position(|r| r.name == name)
                    .map(|i| params[i])
                    .or_else(|| problem.fixed.get(name).copied())
            };
            let res = forward(&prep, &value).map(|pred| {
                let sq = squared_residuals(&prep, &pred);
                let rmse = |it: &mut dyn Iterator<Item = f64>| {
                    let (n, s) = it.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
                    if n == 0 { f64::NAN } else { (s / n as f64).sqrt() }
                };
                let global = rmse(&mut sq.iter().map(|x| x.1));
                let regional = (0..n_regions)
                    .map(|r| rmse(&mut sq.iter().filter(|x| x.0 == Some(r)).map(|x| x.1)))
                    .collect();
                (global, regional)
            });
            (params, res)
        })
        .collect();

    let mut models = Vec::with_capacity(n_simulations);
    let mut n_failed = 0;
    for (draw, (params, res)) in runs.into_iter().enumerate() {
        match res {
            Ok((rmse_global, rmse_regions)) if rmse_global.is_finite() => models.push(RankedModel {
                rank: 0,
                draw,
                params,
                rmse_global,
                rmse_regions,
            }),
            Ok(_) => n_failed += 1,
            Err(e) => {
                log::debug!("history-match draw {draw} failed: {e}");
                n_failed += 1;
            }
        }
    }
    if 2 * n_failed > n_simulations {
        return Err(Error::numeric(format!(
            "forward model failed for {n_failed} of {n_simulations} draws"
        )));
    }
    if n_failed > 0 {
        log::warn!("forward model failed for {n_failed} of {n_simulations} draws");
    }
    models.sort_by(|a, b| a.rmse_global.total_cmp(&b.rmse_global).then(a.draw.cmp(&b.draw)));
    for (i, m) in models.iter_mut().enumerate() {
        m.rank = i + 1;
    }
    let correlations = (0..ranges.len())
        .map(|p| {
            let xs: Vec<f64> = models.iter().map(|m| m.params[p]).collect();
            (0..=n_regions)
                .map(|r| {
                    let ys: Vec<f64> = models
                        .iter()
                        .map(|m| if r < n_regions { m.rmse_regions[r] } else { m.rmse_global })
                        .collect();
                    if ys.iter().any(|y| y.is_nan()) { f64::NAN } else { pearson(&xs, &ys) }
                })
                .collect()
        })
        .collect();
    Ok(HistoryMatchResult {
        param_names: ranges.iter().map(|r| r.name.clone()).collect(),
        region_names: prep.regions.iter().map(|r| r.name.clone()).collect(),
        models,
        n_failed,
        correlations,
    })
}

/// Pressure observations CSV with columns `region,year,pressure_bara,sd`.
pub fn read_pressure_observations_csv(path: &Path) -> Result<Vec<PressureObservation>> {
    Ok(read_rows(path)?.into_iter().map(|(_, r)| r).collect())
}

/// Benchmarks CSV with columns `x_km,y_km,year,subsidence_m,sd,region`; an
/// empty region counts towards the global RMSE only.
pub fn read_benchmarks_csv(path: &Path) -> Result<Vec<Benchmark>> {
    Ok(read_rows(path)?.into_iter().map(|(_, r)| r).collect())
}

/// Ranges CSV with columns `name,low,high`.
pub fn read_ranges_csv(path: &Path) -> Result<Vec<ParamRange>> {
    Ok(read_rows(path)?.into_iter().map(|(_, r)| r).collect())
}

/// Ranked models as CSV: `rank,draw,rmse_global,rmse_<region>...,<param>...`.
pub fn write_ranked_csv(path: &Path, result: &HistoryMatchResult, header: &[String]) -> Result<()> {
    let write = || -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for line in header {
            writeln!(out, "# {line}")?;
        }
        let mut cols = vec!["rank".to_string(), "draw".into(), "rmse_global".into()];
        cols.extend(result.region_names.iter().map(|r| format!("rmse_{r}")));
        cols.extend(result.param_names.iter().cloned());
        writeln!(out, "{}", cols.join(","))?;
        for m in &result.models {
            let mut row = vec![m.rank.to_string(), m.draw.to_string(), m.rmse_global.to_string()];
            row.extend(m.rmse_regions.iter().map(f64::to_string));
            row.extend(m.params.iter().map(f64::to_string));
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Arc<ZTable> {
        let ps: Vec<f64> = (0..=32).map(|i| 25.0 * i as f64).collect();
        let ts = vec![350.0, 400.0];
        let mut z = Vec::new();
        for t in &ts {
            for p in &ps {
                z.push(1.0 - 0.0008 * p + 1.8e-6 * p * p + 0.0003 * (t - 375.0));
            }
        }
        Arc::new(ZTable::new(ps, ts, z).unwrap())
    }

    fn geometry(x: f64, y: f64) -> CompactionBlock {
        CompactionBlock {
            c_m: 0.0,
            delta_p: 0.0,
            x_km: x,
            y_km: y,
            depth_km: 3.0,
            lx_km: 2.0,
            ly_km: 2.0,
            lz_km: 0.1,
        }
    }

    // Offtake built from an assumed declining pressure; observations are the
    // forward model's own output at the planted parameters.
    fn planted(truth: &[(&str, f64)]) -> HistoryMatchProblem {
        let tbl = table();
        let pvt = GasPvt::new(tbl.clone(), 1.2e-4, 0.004).unwrap();
        let mk = |name: &str, p0: f64, rate: f64, x: f64| {
            let mut n = 0.0;
            let mut g = 0.0;
            let mut rows = vec![(1990, 0.0, 0.0)];
            for i in 1..=20 {
                let p = p0 - rate * i as f64;
                let dg = 2.0 + 0.1 * i as f64;
                g += dg;
                n += dg * pvt.cgr(p, 370.0).unwrap();
                rows.push((1990 + i, n, g));
            }
            Region {
                name: name.into(),
                offtake: OfftakeSeries::new(rows).unwrap(),
                temperature_k: 370.0,
                initial_pressure_bara: p0,
                blocks: vec![geometry(x, 0.0), geometry(x + 2.0, 0.0)],
            }
        };
        let mut pressure = Vec::new();
        let mut benchmarks = Vec::new();
        for (region, x) in [("north", 1.0), ("south", 9.0)] {
            for year in (1992..=2010).step_by(3) {
                pressure.push(PressureObservation { region: region.into(), year, pressure_bara: 0.0, sd: 2.0 });
            }
            for year in [1995, 2000, 2005, 2010] {
                benchmarks.push(Benchmark { x_km: x, y_km: 0.0, year, subsidence_m: 0.0, sd: 0.01, region: Some(region.into()) });
            }
        }
        let mut problem = HistoryMatchProblem {
            table: tbl,
            regions: vec![mk("north", 350.0, 12.0, 0.0), mk("south", 340.0, 9.0, 8.0)],
            pressure,
            subsidence: Some(SubsidenceSetup { poisson_ratio: 0.25, benchmarks }),
            fixed: truth.iter().map(|(n, v)| (n.to_string(), *v)).collect(),
        };
        let prep = prepare(&problem, &BTreeSet::new()).unwrap();
        let fixed = problem.fixed.clone();
        let pred = forward(&prep, &|n| fixed.get(n).copied()).unwrap();
        let obs: Vec<PressureObservation> = prep
            .pressure
            .iter()
            .zip(&pred)
            .map(|(o, p)| PressureObservation { pressure_bara: p.1, ..o.2.clone() })
            .collect();
        let bms: Vec<Benchmark> = prep
            .benchmarks
            .iter()
            .zip(&pred[prep.pressure.len()..])
            .map(|(b, p)| Benchmark { subsidence_m: p.1, ..b.1.clone() })
            .collect();
        drop(prep);
        problem.pressure = obs;
        problem.subsidence.as_mut().unwrap().benchmarks = bms;
        problem
    }

    fn ranges() -> Vec<ParamRange> {
        vec![
            ParamRange { name: "c1".into(), low: 0.8e-4, high: 1.6e-4 },
            ParamRange { name: "c2".into(), low: 0.002, high: 0.006 },
            ParamRange { name: "cm".into(), low: 0.5e-5, high: 1.5e-5 },
            ParamRange { name: "dummy".into(), low: 0.0, high: 1.0 },
        ]
    }

    fn truth() -> Vec<(&'static str, f64)> {
        vec![("c1", 1.2e-4), ("c2", 0.004), ("cm", 1.0e-5)]
    }

    fn sampled_problem() -> HistoryMatchProblem {
        let mut p = planted(&truth());
        p.fixed.clear();
        p
    }

    #[test]
    fn planted_truth_is_recovered() {
        let problem = sampled_problem();
        let res = history_match(&problem, &ranges(), 500, 17).unwrap();
        assert!(res.n_failed < 25, "{} failed draws", res.n_failed);
        let best = res.best();
        let mut rmses: Vec<f64> = res.models.iter().map(|m| m.rmse_global).collect();
        rmses.sort_by(f64::total_cmp);
        let p5 = crate::numeric::quantile_sorted(&rmses, 0.05);
        assert!(best.rmse_global < p5);
        for (name, value) in truth() {
            let r = ranges().into_iter().find(|r| r.name == name).unwrap();
            let rel = (res.param(best, name).unwrap() - value).abs() / (r.high - r.low);
            assert!(rel < 0.1, "{name}: {} vs {value}", res.param(best, name).unwrap());
        }
        let dummy = res.param_names.iter().position(|n| n == "dummy").unwrap();
        let c = *res.correlations[dummy].last().unwrap();
        assert!(c.abs() < 0.1, "dummy correlation {c}");
    }

    #[test]
    fn singleton_is_rank_one() {
        let res = history_match(&sampled_problem(), &ranges(), 1, 3).unwrap();
        assert_eq!(res.models.len(), 1);
        assert_eq!(res.models[0].rank, 1);
    }

    #[test]
    fn ranking_ignores_observation_order_and_is_seeded() {
        let problem = sampled_problem();
        let a = history_match(&problem, &ranges(), 60, 5).unwrap();
        let mut shuffled = problem.clone();
        shuffled.pressure.reverse();
        shuffled.regions.reverse();
        shuffled.subsidence.as_mut().unwrap().benchmarks.reverse();
        let mut r = ranges();
        r.reverse();
        let b = history_match(&shuffled, &r, 60, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_ranges_and_mass_failure() {
        let problem = sampled_problem();
        assert!(history_match(&problem, &[], 10, 1).is_err());
        let bad = vec![ParamRange { name: "c1".into(), low: 1.0, high: 1.0 }];
        assert!(history_match(&problem, &bad, 10, 1).is_err());
        // c2 far above every CGR: no positive pressure matches
        let mut r = ranges();
        r[1] = ParamRange { name: "c2".into(), low: 0.5, high: 0.6 };
        assert!(history_match(&problem, &r, 20, 1).is_err());
    }
}
