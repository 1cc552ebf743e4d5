//! Writes the synthetic demo dataset used by `demo/seiscox.toml`.
//!
//!     cargo run --release -p seiscox --example make_demo -- demo
//!
//! Everything is derived from a fixed seed, so the output is reproducible.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use seiscox::datamodel::{smooth_production, Polygon, SpatialGrid, TimeAxis, WellRecord};
use seiscox::forecast::{simulate, synthesize_catalog};
use seiscox::pressure::{downscale, PressureSample};
use seiscox::reservoir::{pressure_match, subsidence, CompactionBlock, GasPvt, OfftakeSeries, ZTable};
use seiscox::ModelParams;

const SEED: u64 = 20_211;
const ORIGIN: (f64, f64) = (230.0, 580.0);
const NX: usize = 12;
const NY: usize = 10;
const START: i32 = 1992;
const YEARS: usize = 30;
const PRESSURE_UNTIL: i32 = 2025;
const CENTRE: (f64, f64) = (236.0, 585.0);

const RING: [[f64; 2]; 7] = [
    [230.5, 581.0],
    [236.0, 580.2],
    [241.8, 582.0],
    [241.5, 589.5],
    [234.0, 589.8],
    [230.2, 586.0],
    [230.5, 581.0],
];

const WELLS: [(&str, f64, f64, f64); 8] = [
    ("W01", 234.6, 584.1, 3.2e7),
    ("W02", 236.3, 585.7, 3.8e7),
    ("W03", 237.9, 584.4, 2.9e7),
    ("W04", 235.1, 586.9, 2.4e7),
    ("W05", 238.7, 587.2, 2.1e7),
    ("W06", 233.2, 582.6, 1.7e7),
    ("W07", 239.6, 583.1, 1.5e7),
    ("W08", 236.8, 588.6, 1.2e7),
];

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let ring = Polygon::new(RING.iter().map(|p| (p[0], p[1])).collect()).unwrap();
    let grid = SpatialGrid::from_polygon(ORIGIN, 1.0, NX, NY, &ring).unwrap();
    let axis = TimeAxis::new(START, YEARS).unwrap();
    let p_axis = TimeAxis::new(START, (PRESSURE_UNTIL - START + 1) as usize).unwrap();

    // fine 500 m reservoir pressures
    let mut fine = Vec::new();
    let mut text = String::from("easting_km,northing_km,year,pressure_barA\n");
    for k in 0..p_axis.n_steps {
        let year = p_axis.year(k);
        let f = ((year - START + 1) as f64 / (PRESSURE_UNTIL - START + 1) as f64).powf(1.2);
        for iy in 0..2 * NY {
            for ix in 0..2 * NX {
                let x = ORIGIN.0 + 0.25 + 0.5 * ix as f64;
                let y = ORIGIN.1 + 0.25 + 0.5 * iy as f64;
                let sample = PressureSample { easting_km: x, northing_km: y, year, pressure_bara: pressure_at(x, y, f) };
                writeln!(text, "{x},{y},{year},{:.3}", sample.pressure_bara).unwrap();
                fine.push(PressureSample { pressure_bara: round3(sample.pressure_bara), ..sample });
            }
        }
    }
    write(&dir, "pressure_fine.csv", &text);
    let field = downscale(&fine, &grid, &p_axis, 2.3).unwrap();

    // monthly well volumes; production ramps up, plateaus and is cut back after 2014
    let mut records = Vec::new();
    let mut text = String::from("well_id,easting_km,northing_km,year,month,volume_ncm\n");
    for (id, x, y, rate) in WELLS {
        for year in START..START + YEARS as i32 {
            let ramp = ((year - START + 1) as f64 / 4.0).min(1.0);
            let cut = if year > 2014 { 0.35 } else { 1.0 };
            for month in 1..=12u32 {
                let season = 1.0 + 0.3 * (2.0 * std::f64::consts::PI * month as f64 / 12.0).cos();
                let noise = 1.0 + 0.05 * (rng.random::<f64>() - 0.5);
                let v = (rate * ramp * cut * season * noise).round();
                writeln!(text, "{id},{x},{y},{year},{month},{v}").unwrap();
                records.push(WellRecord { well_id: id.into(), easting_km: x, northing_km: y, year, month, volume_ncm: v });
            }
        }
    }
    write(&dir, "production.csv", &text);
    let (production, _) = smooth_production(&records, &grid, &axis, 5.0).unwrap();

    // counts from the model, then a catalog with a few events ingest must drop
    let params = ModelParams::new(-4.2, 13.0, 0.013, -16.0).unwrap();
    let (counts, _) = simulate(&params, &field, &production, &grid, &axis, rng.random()).unwrap();
    let catalog = synthesize_catalog(&counts, &grid, &axis, 1.5, 1.0, rng.random()).unwrap();
    let mut text = String::from("easting_km,northing_km,decimal_year,magnitude\n");
    for e in &catalog.events {
        writeln!(text, "{:.4},{:.4},{:.4},{:.1}", e.easting_km, e.northing_km, e.decimal_year, e.magnitude).unwrap();
    }
    for i in 0..6 {
        let t = 1995.0 + 4.1 * i as f64;
        writeln!(text, "236.{i}100,585.2000,{t:.4},1.1").unwrap();
    }
    writeln!(text, "241.9000,589.9000,2003.5000,1.8").unwrap();
    writeln!(text, "236.5000,584.5000,1989.2500,2.0").unwrap();
    write(&dir, "catalog.csv", &text);
    eprintln!("catalog: {} events at M >= 1.5 plus 8 to be dropped", catalog.events.len());

    reservoir_inputs(&dir, &mut rng);
}

fn pressure_at(x: f64, y: f64, f: f64) -> f64 {
    let r2 = (x - CENTRE.0).powi(2) + (y - CENTRE.1).powi(2);
    let drop = 60.0 + 200.0 * (-r2 / (2.0 * 16.0)).exp() + 4.0 * (x - CENTRE.0);
    352.0 - drop * f
}

fn round3(v: f64) -> f64 {
    format!("{v:.3}").parse().unwrap()
}

fn z_factor(p: f64, t: f64) -> f64 {
    let tr = t / 200.0;
    1.0 - 0.0012 * p / tr + 1.9e-6 * p * p / tr
}

/// Two regions with planted c1, c2 and cm; offtake, observations and
/// benchmarks follow from them.
fn reservoir_inputs(dir: &Path, rng: &mut ChaCha8Rng) {
    let pressures: Vec<f64> = (0..=40).map(|i| 20.0 * i as f64).collect();
    let temperatures: Vec<f64> = (0..=6).map(|i| 340.0 + 10.0 * i as f64).collect();
    let mut text = String::from("pressure_bara,temperature_k,z\n");
    let mut z = Vec::new();
    for &t in &temperatures {
        for &p in &pressures {
            let v = round6(z_factor(p, t));
            writeln!(text, "{p},{t},{v}").unwrap();
            z.push(v);
        }
    }
    write(dir, "pvt.csv", &text);
    let table = Arc::new(ZTable::new(pressures, temperatures, z).unwrap());

    let truth = [("north", 1.25e-4, 0.0042, 1.1e-5, 352.0, 11.0, 236.0), ("south", 1.25e-4, 0.0042, 0.8e-5, 345.0, 8.0, 236.5)];
    let temperature = 370.0;
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut offtake = String::from("region,year,cum_condensate,cum_gas\n");
    let mut obs = String::from("region,year,pressure_bara,sd\n");
    let mut regions = Vec::new();
    for (name, c1, c2, cm, p0, rate, x) in truth {
        let pvt = GasPvt::new(table.clone(), c1, c2).unwrap();
        let (mut n, mut g) = (0.0, 0.0);
        let mut rows = vec![(1990, 0.0, 0.0)];
        writeln!(offtake, "{name},1990,0,0").unwrap();
        for i in 1..=31 {
            let p = p0 - rate * i as f64 * (1.0 - 0.01 * i as f64);
            let dg = 2.0 + 0.1 * i as f64;
            g = round6(g + dg);
            n = round6(n + dg * pvt.cgr(p, temperature).unwrap());
            rows.push((1990 + i, n, g));
            writeln!(offtake, "{name},{},{n},{g}", 1990 + i).unwrap();
        }
        let series = OfftakeSeries::new(rows).unwrap();
        let matched: Vec<f64> = (1..series.len())
            .map(|i| pressure_match(series.instantaneous(i).unwrap(), &pvt, temperature).unwrap())
            .collect();
        for i in (2..series.len()).step_by(3) {
            let p = matched[i - 1] + noise.sample(rng);
            writeln!(obs, "{name},{},{p:.2},1.0", series.years()[i]).unwrap();
        }
        let blocks: Vec<CompactionBlock> = [-1.5, 1.5]
            .iter()
            .map(|dy| CompactionBlock {
                c_m: cm,
                delta_p: 0.0,
                x_km: x,
                y_km: 585.0 + dy + if name == "north" { 2.0 } else { -2.0 },
                depth_km: 2.9,
                lx_km: 3.0,
                ly_km: 3.0,
                lz_km: 0.15,
            })
            .collect();
        regions.push((name, p0, series, matched, blocks));
    }
    write(dir, "offtake.csv", &offtake);
    write(dir, "pressure_observations.csv", &obs);

    let mut bm = String::from("x_km,y_km,year,subsidence_m,sd,region\n");
    for (bx, by) in [(236.0, 587.5), (236.5, 582.5), (236.2, 585.0), (239.0, 586.0)] {
        for year in [1996, 2001, 2006, 2011, 2016, 2021] {
            let mut blocks = Vec::new();
            for (_, p0, series, matched, geometry) in &regions {
                let i = series.index_of(year).unwrap();
                let dp = p0 - matched[i - 1];
                blocks.extend(geometry.iter().map(|b| CompactionBlock { delta_p: dp, ..*b }));
            }
            let u = subsidence((bx, by), &blocks, 0.25).unwrap() + 0.002 * noise.sample(rng);
            writeln!(bm, "{bx},{by},{year},{u:.5},0.004,").unwrap();
        }
    }
    write(dir, "benchmarks.csv", &bm);
    write(
        dir,
        "ranges.csv",
        "name,low,high\nc1,0.8e-4,1.6e-4\nc2,0.002,0.006\ncm.north,0.5e-5,1.5e-5\ncm.south,0.5e-5,1.5e-5\n",
    );
}

fn round6(v: f64) -> f64 {
    format!("{v:.6}").parse().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}
