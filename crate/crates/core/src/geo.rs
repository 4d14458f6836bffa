//! Spherical-earth geometry for disturbance areas.
//!
//! Lines are straight segments in (lat, lon) space; lengths of clipped pieces
//! are measured along the great circle with the haversine formula.

use serde::{Deserialize, Serialize};

use crate::error::GeoError;
use crate::grid::Network;

/// Mean earth radius used throughout, in km.
pub const EARTH_RADIUS_KM: f64 = 6378.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    /// Latitude in degrees.
    pub lat: f64,
    /// Longitude in degrees.
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        GeoPoint { lat, lon }
    }

    fn lerp(self, other: GeoPoint, t: f64) -> GeoPoint {
        GeoPoint::new(self.lat + t * (other.lat - self.lat), self.lon + t * (other.lon - self.lon))
    }
}

/// Rectangle `[lat_min, lat_max] × [lon_min, lon_max]`, boundary inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl Area {
    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.lat_min..=self.lat_max).contains(&p.lat) && (self.lon_min..=self.lon_max).contains(&p.lon)
    }
}

fn hav(theta: f64) -> f64 {
    let s = (theta / 2.0).sin();
    s * s
}

/// Great-circle distance in km.
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi_a, phi_b) = (a.lat.to_radians(), b.lat.to_radians());
    let h = hav(phi_b - phi_a) + phi_a.cos() * phi_b.cos() * hav((b.lon - a.lon).to_radians());
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Disturbance rectangle centered on `center` with half-widths
/// `gamma` times the network's latitude and longitude spans.
pub fn build_area(center: GeoPoint, gamma: f64, net: &Network) -> Result<Area, GeoError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(GeoError::BadGamma(gamma));
    }
    let (mut lat_lo, mut lat_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut lon_lo, mut lon_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for b in &net.buses {
        lat_lo = lat_lo.min(b.lat);
        lat_hi = lat_hi.max(b.lat);
        lon_lo = lon_lo.min(b.lon);
        lon_hi = lon_hi.max(b.lon);
    }
    if lat_hi <= lat_lo && lon_hi <= lon_lo {
        return Err(GeoError::DegenerateExtent);
    }
    let d_lat = gamma * (lat_hi - lat_lo);
    let d_lon = gamma * (lon_hi - lon_lo);
    Ok(Area {
        lat_min: center.lat - d_lat,
        lat_max: center.lat + d_lat,
        lon_min: center.lon - d_lon,
        lon_max: center.lon + d_lon,
    })
}

/// Parameter interval of segment `a → b` inside `area` (Liang–Barsky).
fn clip(a: GeoPoint, b: GeoPoint, area: &Area) -> Option<(f64, f64)> {
    let (dx, dy) = (b.lon - a.lon, b.lat - a.lat);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-dx, a.lon - area.lon_min),
        (dx, area.lon_max - a.lon),
        (-dy, a.lat - area.lat_min),
        (dy, area.lat_max - a.lat),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Fraction of the straight segment `a → b` lying inside `area`, measured
/// by great-circle length.
pub fn segment_fraction(a: GeoPoint, b: GeoPoint, area: &Area) -> f64 {
    let total = haversine_distance(a, b);
    if total == 0.0 {
        return if area.contains(a) { 1.0 } else { 0.0 };
    }
    if area.contains(a) && area.contains(b) {
        return 1.0;
    }
    match clip(a, b, area) {
        None => 0.0,
        Some((t0, t1)) => (haversine_distance(a.lerp(b, t0), a.lerp(b, t1)) / total).clamp(0.0, 1.0),
    }
}

/// Share d₁/D of branch `k` inside the disturbance area.
pub fn crossing_fraction(net: &Network, k: usize, area: &Area) -> f64 {
    let (f, t) = net.branch_ends(k);
    segment_fraction(net.buses[f].point(), net.buses[t].point(), area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn coincident_points() {
        let p = GeoPoint::new(35.0, -95.0);
        assert_eq!(haversine_distance(p, p), 0.0);
    }

    #[test]
    fn quarter_circle_and_one_degree() {
        let d = haversine_distance(GeoPoint::new(0.0, 0.0), GeoPoint::new(0.0, 90.0));
        assert!((d - PI * EARTH_RADIUS_KM / 2.0).abs() < 1e-9);
        assert!((d - 10018.5).abs() < 0.1);
        let d = haversine_distance(GeoPoint::new(0.0, 0.0), GeoPoint::new(1.0, 0.0));
        assert!((d - EARTH_RADIUS_KM * PI / 180.0).abs() < 1e-9);
        assert!((d - 111.32).abs() < 0.01);
    }

    #[test]
    fn area_by_substitution() {
        let json = r#"{"base_mva":100,
            "buses":[{"id":1,"kind":"slack","base_kv":138,"lat":30,"lon":-100,"p_mw":0,"q_mvar":0},
                     {"id":2,"kind":"load","base_kv":138,"lat":40,"lon":-90,"p_mw":10,"q_mvar":0}],
            "branches":[{"id":1,"from":1,"to":2,"r_pu":0,"x_pu":0.1,"b_pu":0,"rating_mva":175,"rated_kv":138}],
            "generators":[{"id":1,"bus":1,"p_mw":0,"p_max_mw":50,"q_min_mvar":-30,"q_max_mvar":30,"v_pu":1.0,"slack":true}]}"#;
        let net = Network::from_json(json).unwrap();
        let a = build_area(GeoPoint::new(35.0, -95.0), 0.1, &net).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() < 1e-12;
        assert!(close(a.lat_min, 34.0) && close(a.lat_max, 36.0));
        assert!(close(a.lon_min, -96.0) && close(a.lon_max, -94.0));

        let full = build_area(GeoPoint::new(35.0, -95.0), 1.0, &net).unwrap();
        assert!(net.buses.iter().all(|b| full.contains(b.point())));
        assert!(matches!(build_area(GeoPoint::new(35.0, -95.0), 0.0, &net), Err(GeoError::BadGamma(_))));
    }

    #[test]
    fn fractions_for_inside_and_disjoint_segments() {
        let area = Area { lat_min: 34.0, lat_max: 36.0, lon_min: -96.0, lon_max: -94.0 };
        let inside = segment_fraction(GeoPoint::new(34.5, -95.5), GeoPoint::new(35.5, -94.5), &area);
        assert_eq!(inside, 1.0);
        let outside = segment_fraction(GeoPoint::new(37.0, -99.0), GeoPoint::new(38.0, -97.0), &area);
        assert_eq!(outside, 0.0);
    }

    #[test]
    fn meridian_segment_bisected_by_edge() {
        let area = Area { lat_min: 34.0, lat_max: 35.0, lon_min: -96.0, lon_max: -94.0 };
        let f = segment_fraction(GeoPoint::new(34.5, -95.0), GeoPoint::new(35.5, -95.0), &area);
        assert!((f - 0.5).abs() < 1e-12, "{f}");
    }
}
