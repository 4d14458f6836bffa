use heatcascade::geo::{build_area, haversine_distance, segment_fraction, Area, GeoPoint};
use heatcascade::grid::{find_islands, total_served_load};
use heatcascade::{Network, SystemState};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = GeoPoint> {
    (-80.0f64..80.0, -179.0f64..179.0).prop_map(|(lat, lon)| GeoPoint::new(lat, lon))
}

#[test]
fn case_round_trip_is_identity() {
    let net = Network::rts96();
    let again = Network::from_json(&net.to_json()).unwrap();
    assert_eq!(net.to_document(), again.to_document());
    assert_eq!(net.to_json(), again.to_json());
}

#[test]
fn shed_bus_reduces_served_load_exactly() {
    let net = Network::rts96();
    let mut s = SystemState::base(&net);
    let i = net.bus_idx(210).unwrap();
    let before = total_served_load(&s);
    s.p_load_mw[i] -= 100.0;
    assert!((before - total_served_load(&s) - 100.0).abs() < 1e-9);
    s.bus_energized.iter_mut().for_each(|e| *e = false);
    assert_eq!(total_served_load(&s), 0.0);
}

#[test]
fn gamma_area_contains_its_center() {
    let net = Network::rts96();
    for id in net.load_buses() {
        let c = net.buses[id].point();
        assert!(build_area(c, 0.07, &net).unwrap().contains(c));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn islands_partition_the_buses(mask in proptest::collection::vec(any::<bool>(), 120)) {
        let net = Network::rts96();
        let gens = vec![true; net.generators.len()];
        let islands = find_islands(&net, &mask, &gens);
        let mut seen = vec![0usize; net.buses.len()];
        for isl in &islands {
            for &b in &isl.buses {
                seen[b] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn removing_a_branch_never_merges_islands(
        mask in proptest::collection::vec(any::<bool>(), 120),
        k in 0usize..120,
    ) {
        let net = Network::rts96();
        let gens = vec![true; net.generators.len()];
        let before = find_islands(&net, &mask, &gens).len();
        let mut cut = mask.clone();
        cut[k] = false;
        prop_assert!(find_islands(&net, &cut, &gens).len() >= before);
    }

    #[test]
    fn haversine_is_a_symmetric_nonnegative_distance(a in point(), b in point()) {
        let d = haversine_distance(a, b);
        prop_assert!(d >= 0.0);
        prop_assert!((d - haversine_distance(b, a)).abs() < 1e-9);
        prop_assert_eq!(haversine_distance(a, a), 0.0);
        if a != b {
            prop_assert!(d > 0.0);
        }
    }

    #[test]
    fn crossing_fraction_ignores_direction(
        a in point(),
        b in point(),
        lat in -60.0f64..60.0,
        lon in -170.0f64..170.0,
        half in 0.1f64..20.0,
    ) {
        let area = Area { lat_min: lat - half, lat_max: lat + half, lon_min: lon - half, lon_max: lon + half };
        let f = segment_fraction(a, b, &area);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - segment_fraction(b, a, &area)).abs() < 1e-9);
    }

    #[test]
    fn segment_inside_larger_area_is_fully_covered(a in point(), b in point(), pad in 0.01f64..5.0) {
        let area = Area {
            lat_min: a.lat.min(b.lat) - pad,
            lat_max: a.lat.max(b.lat) + pad,
            lon_min: a.lon.min(b.lon) - pad,
            lon_max: a.lon.max(b.lon) + pad,
        };
        prop_assert_eq!(segment_fraction(a, b, &area), 1.0);
    }
}
