use proptest::prelude::*;

use seiscox::datamodel::{bin_catalog, smooth_production, Event, Polygon, SpatialGrid, TimeAxis, WellRecord};

fn well(id: &str, x: f64, y: f64, month: u32, v: f64) -> WellRecord {
    WellRecord { well_id: id.into(), easting_km: x, northing_km: y, year: 2000, month, volume_ncm: v }
}

#[test]
fn two_wells_share_volume_by_kernel_weight() {
    let grid = SpatialGrid::full((0.0, 0.0), 1.0, 3, 3).unwrap();
    let axis = TimeAxis::new(2000, 1).unwrap();
    let wells = [("a", 0.5, 0.5, 1e9), ("b", 2.2, 1.7, 2e9)];
    let records: Vec<WellRecord> = wells
        .iter()
        .flat_map(|&(id, x, y, v)| [well(id, x, y, 3, v / 2.0), well(id, x, y, 9, v / 2.0)])
        .collect();
    let (cube, report) = smooth_production(&records, &grid, &axis, 2.0).unwrap();
    assert_eq!(report.wells, 2);

    // weights by hand: exp(-d²/8) over the nine centres, normalised per well
    let mut expected = [0.0; 9];
    for &(_, x, y, v) in &wells {
        let raw: Vec<f64> = (0..9)
            .map(|c| {
                let (cx, cy) = ((c % 3) as f64 + 0.5, (c / 3) as f64 + 0.5);
                (-((cx - x).powi(2) + (cy - y).powi(2)) / 8.0).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        for c in 0..9 {
            expected[c] += raw[c] / total * v * 1e-9;
        }
    }
    for c in 0..9 {
        approx::assert_relative_eq!(*cube.get(c, 0), expected[c], max_relative = 1e-12);
    }
    approx::assert_relative_eq!(cube.step_total(0), 3.0, max_relative = 1e-12);
}

#[test]
fn masked_grid_conserves_volume() {
    let ring = Polygon::new(vec![(0.0, 0.0), (4.0, 0.0), (0.0, 4.0), (0.0, 0.0)]).unwrap();
    let grid = SpatialGrid::from_polygon((0.0, 0.0), 1.0, 4, 4, &ring).unwrap();
    let axis = TimeAxis::new(2000, 1).unwrap();
    let (cube, report) = smooth_production(&[well("x", 3.5, 3.5, 1, 4e8)], &grid, &axis, 3.0).unwrap();
    assert_eq!(report.relocated_wells, vec!["x".to_string()]);
    approx::assert_relative_eq!(cube.step_total(0), 0.4, max_relative = 1e-12);
}

proptest! {
    #[test]
    fn binning_conserves_in_mask_events(
        pts in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0, 2000.0f64..2010.0, 1.5f64..4.0), 0..60)
    ) {
        let grid = SpatialGrid::full((0.0, 0.0), 1.0, 5, 5).unwrap();
        let axis = TimeAxis::new(2000, 10).unwrap();
        let events: Vec<Event> = pts
            .iter()
            .map(|&(x, y, t, m)| Event { easting_km: x, northing_km: y, decimal_year: t, magnitude: m })
            .collect();
        let (catalog, counts, report) = bin_catalog(&events, &grid, &axis, 1.5);
        prop_assert_eq!(counts.total(), events.len() as u64);
        prop_assert_eq!(catalog.events.len(), events.len());
        prop_assert_eq!(report.dropped(), 0);
    }

    #[test]
    fn dropped_plus_retained_is_read(
        pts in prop::collection::vec((-2.0f64..7.0, -2.0f64..7.0, 1995.0f64..2015.0, 0.5f64..4.0), 0..60)
    ) {
        let ring = Polygon::new(vec![(0.0, 0.0), (5.0, 0.0), (5.0, 3.0), (0.0, 5.0), (0.0, 0.0)]).unwrap();
        let grid = SpatialGrid::from_polygon((0.0, 0.0), 1.0, 5, 5, &ring).unwrap();
        let axis = TimeAxis::new(2000, 10).unwrap();
        let events: Vec<Event> = pts
            .iter()
            .map(|&(x, y, t, m)| Event { easting_km: x, northing_km: y, decimal_year: t, magnitude: m })
            .collect();
        let (_, counts, report) = bin_catalog(&events, &grid, &axis, 1.5);
        prop_assert_eq!(report.read, events.len());
        prop_assert_eq!(report.retained + report.dropped(), report.read);
        prop_assert_eq!(counts.total(), report.retained as u64);
    }
}
