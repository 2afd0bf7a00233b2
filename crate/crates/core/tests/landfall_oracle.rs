mod common;

use chrono::Duration;
use ewb_core::grid::{Grid, GridSpec, LandMask};
use ewb_core::landfall::{detect_landfalls, first_crossing};
use ewb_core::tc_tracker::{Track, TrackSource};
use proptest::prelude::*;

#[test]
fn straight_coast_interpolation() {
    let c = common::criterion_5();
    assert!(c.pass, "{}", c.detail);
}

#[test]
fn filtering_rules() {
    for (name, ok) in common::landfall_rule_cases() {
        assert!(ok, "{name}");
    }
}

#[test]
fn offshore_track_has_no_landfall() {
    let spec = common::coast_grid();
    let land = common::straight_coast(&spec, -90.0);
    let t = common::utc(2022, 9, 1, 0);
    let track = Track::new(
        "S",
        TrackSource::Analysis,
        vec![common::point(t, 20.0, -70.0), common::point(t + Duration::hours(6), 21.0, -72.0)],
    )
    .unwrap();
    assert!(detect_landfalls(&track, &land).unwrap().is_empty());
}

fn island_mask(spec: &GridSpec, seed: u64) -> LandMask {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let disks: Vec<(f64, f64, f64)> = (0..6)
        .map(|_| (rng.gen_range(15.0..35.0), rng.gen_range(-95.0..-65.0), rng.gen_range(0.8..3.0)))
        .collect();
    LandMask::new(
        *spec,
        Grid::from_fn(spec.nlat, spec.nlon, |i, j| {
            disks.iter().any(|&(la, lo, r)| (spec.lat(i) - la).hypot(spec.lon(j) - lo) <= r)
        }),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dense_sampling_agrees_on_islands(seed in 0u64..1000, la in 14.0f64..36.0, lo in -96.0f64..-64.0,
                                        dla in -3.0f64..3.0, dlo in -4.0f64..4.0) {
        let spec = common::coast_grid();
        let land = island_mask(&spec, seed);
        let t = common::utc(2022, 9, 1, 0);
        let a = common::point(t, la, lo);
        let b = common::point(t + Duration::hours(6), la + dla, lo + dlo);
        let n = 2000;
        let dense = common::dense_first_land(&a, &b, &land, n);
        let got = first_crossing(&a, &b, &land);
        if land.is_land(a.position()) {
            // no ocean-to-land transition at the start point
            return Ok(());
        }
        match (got, dense) {
            (Some(f), Some(d)) => {
                // bisection ends on land, so it never lands before the dense first land sample
                prop_assert!(f >= d - 1.0 / n as f64 - 1e-9, "{f} vs {d}");
                prop_assert!(land.is_land(a.lerp(&b, f).position()));
            }
            (Some(f), None) => prop_assert!(false, "crossing at {f} but no land sample"),
            _ => {}
        }
    }
}
