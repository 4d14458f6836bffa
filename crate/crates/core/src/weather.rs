//! Temperature field to operating point: load growth, power factor drift,
//! dynamic line ratings and generation pickup.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::geo::{crossing_fraction, Area};
use crate::grid::{Branch, Network, SystemState};

/// Temperature at which the load curve has its minimum, °C.
pub const T_MIN: f64 = 18.5;
/// Warm temperature with unit load multiplier, °C.
pub const T_REF_HIGH: f64 = 24.21;
/// Cool temperature with unit load multiplier, °C.
pub const T_REF_LOW: f64 = 9.91;
/// Default load multiplier at `T_REF_HIGH + 10`.
pub const DEFAULT_ANCHOR_RATIO: f64 = 1.5183;
/// Power factors are never driven below this floor.
pub const PF_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Heat,
    Cool,
}

impl Direction {
    /// Ambient temperature that corresponds to the forecast (initial) load.
    pub fn base_temperature(self) -> f64 {
        match self {
            Direction::Heat => T_REF_HIGH,
            Direction::Cool => T_REF_LOW,
        }
    }
}

/// Cubic load multiplier L(T) = a₃T³ + a₂T² + a₁T + a₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadCurve {
    /// `[a0, a1, a2, a3]`
    pub coefficients: [f64; 4],
    pub t_min: f64,
    pub t_ref_high: f64,
    pub t_ref_low: f64,
}

impl LoadCurve {
    /// Fits the unique cubic with unit load at both reference temperatures,
    /// a stationary point at `T_MIN` and `anchor_ratio` at `T_REF_HIGH + 10`.
    pub fn calibrate(anchor_ratio: f64) -> Result<Self, crate::error::ConfigError> {
        if !(anchor_ratio > 1.0) || !anchor_ratio.is_finite() {
            return Err(crate::error::ConfigError::new(
                "load_curve_anchor_ratio",
                format!("must be > 1, got {anchor_ratio}"),
            ));
        }
        let row = |t: f64| [1.0, t, t * t, t * t * t];
        let t_anchor = T_REF_HIGH + 10.0;
        let m = Matrix4::from_rows(&[
            row(T_REF_LOW).into(),
            row(T_REF_HIGH).into(),
            [0.0, 1.0, 2.0 * T_MIN, 3.0 * T_MIN * T_MIN].into(),
            row(t_anchor).into(),
        ]);
        let rhs = Vector4::new(1.0, 1.0, 0.0, anchor_ratio);
        let lu = m.lu();
        assert!(lu.determinant().abs() > 1e-9, "load curve constraints are singular");
        let a = lu.solve(&rhs).expect("nonsingular");
        Ok(LoadCurve { coefficients: [a[0], a[1], a[2], a[3]], t_min: T_MIN, t_ref_high: T_REF_HIGH, t_ref_low: T_REF_LOW })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let [a0, a1, a2, a3] = self.coefficients;
        ((a3 * t + a2) * t + a1) * t + a0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let [_, a1, a2, a3] = self.coefficients;
        (3.0 * a3 * t + 2.0 * a2) * t + a1
    }
}

impl Default for LoadCurve {
    fn default() -> Self {
        LoadCurve::calibrate(DEFAULT_ANCHOR_RATIO).expect("default anchor is valid")
    }
}

/// Piecewise-constant ambient temperature: `base + delta` inside the area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureField {
    pub direction: Direction,
    pub base_temp: f64,
    pub area: Area,
    pub delta_t: f64,
}

impl TemperatureField {
    pub fn new(direction: Direction, area: Area, delta_t: f64) -> Result<Self, crate::error::ConfigError> {
        let ok = match direction {
            Direction::Heat => delta_t >= 0.0,
            Direction::Cool => delta_t <= 0.0,
        };
        if !ok || !delta_t.is_finite() {
            return Err(crate::error::ConfigError::new(
                "delta_t",
                format!("{delta_t} has the wrong sign for a {direction:?} scenario"),
            ));
        }
        Ok(TemperatureField { direction, base_temp: direction.base_temperature(), area, delta_t })
    }
}

pub fn bus_temperature(net: &Network, bus: usize, field: &TemperatureField) -> f64 {
    if field.area.contains(net.buses[bus].point()) {
        field.base_temp + field.delta_t
    } else {
        field.base_temp
    }
}

/// Length-weighted ambient temperature of branch `k`.
pub fn line_temperature(net: &Network, k: usize, field: &TemperatureField) -> f64 {
    field.base_temp + crossing_fraction(net, k, &field.area) * field.delta_t
}

/// Power factor after the temperature change.
pub fn adjusted_power_factor(pf0: f64, temp: f64, field: &TemperatureField, pf_slope: f64) -> f64 {
    let shift = pf_slope * (temp - field.base_temp);
    match field.direction {
        Direction::Heat => pf0 - shift,
        Direction::Cool => pf0 + shift,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadChange {
    /// Buses (indices) inside the disturbance area with nonzero load.
    pub buses: Vec<usize>,
    /// Σ (P_i − P_i⁰) over those buses, MW.
    pub delta_p_mw: f64,
    pub warnings: Vec<String>,
}

/// Scales loads of the buses inside the area and recomputes their reactive
/// demand from the drifted power factor. Buses outside are untouched.
pub fn apply_load_change(
    net: &Network,
    state: &mut SystemState,
    field: &TemperatureField,
    curve: &LoadCurve,
    pf_slope: f64,
) -> LoadChange {
    let mut out = LoadChange::default();
    if field.delta_t == 0.0 {
        return out;
    }
    for (i, bus) in net.buses.iter().enumerate() {
        if !bus.is_load_bus() || !field.area.contains(bus.point()) {
            continue;
        }
        let temp = field.base_temp + field.delta_t;
        let p = curve.eval(temp).max(0.0) * bus.p_load_mw;
        let mut pf = adjusted_power_factor(bus.pf_nominal(), temp, field, pf_slope).min(1.0);
        if pf < PF_FLOOR {
            out.warnings.push(format!("bus {}: power factor {pf:.3} clamped to {PF_FLOOR}", bus.id));
            pf = PF_FLOOR;
        }
        let q = p * pf.acos().tan() * bus.q_load_mvar.signum();
        out.delta_p_mw += p - bus.p_load_mw;
        state.p_load_mw[i] = p;
        state.q_load_mvar[i] = q;
        out.buses.push(i);
    }
    out
}

/// Linear ampacity model of one branch, anchored at its initial rating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineRating {
    pub rated_kv: f64,
    /// kA/°C
    pub slope: f64,
    /// Intercept c in kA.
    pub intercept: f64,
}

impl LineRating {
    /// Anchors c so the rating equals F̄⁰ at temperature `t0` and voltage `v0`.
    pub fn anchored(branch: &Branch, t0: f64, v0: f64) -> Self {
        let slope = branch.rating_slope_ka_per_c;
        LineRating {
            rated_kv: branch.rated_kv,
            slope,
            intercept: branch.rating_mva / (branch.rated_kv * v0) + slope * t0,
        }
    }

    /// Dynamic rating in MVA; clamped at zero.
    pub fn at(&self, line_temp: f64, v_pu: f64, alpha: f64) -> f64 {
        dynamic_rating(self.rated_kv, self.slope, self.intercept, line_temp, v_pu, alpha)
    }
}

/// F̄ᵈ = α·V_rated·v·(c − k·T), clamped at zero.
pub fn dynamic_rating(rated_kv: f64, slope: f64, intercept: f64, line_temp: f64, v_pu: f64, alpha: f64) -> f64 {
    (alpha * rated_kv * v_pu * (intercept - slope * line_temp)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Redistribution {
    /// MW actually picked up by non-slack units.
    pub applied_mw: f64,
    /// MW left for the slack unit.
    pub residual_mw: f64,
    pub warning: Option<String>,
}

/// Spreads `delta_p_mw` over the in-service non-slack units in proportion
/// to their active power reserve. Setpoints stay within `[0, P̄]`; whatever
/// clamping removes is left to the slack.
pub fn redistribute_generation(net: &Network, state: &mut SystemState, delta_p_mw: f64) -> Redistribution {
    let mut out = Redistribution::default();
    if delta_p_mw == 0.0 {
        return out;
    }
    let units: Vec<usize> = (0..net.generators.len())
        .filter(|&g| state.gen_in_service[g] && !state.gen_slack[g])
        .collect();
    let reserve = |g: usize| (net.generators[g].p_max_mw - state.gen_p_mw[g]).max(0.0);
    let total: f64 = units.iter().map(|&g| reserve(g)).sum();
    if total <= 0.0 {
        out.residual_mw = delta_p_mw;
        out.warning = Some("no active power reserve; slack takes the whole change".into());
        return out;
    }
    let shares: Vec<(usize, f64)> = units.iter().map(|&g| (g, reserve(g) / total)).collect();
    for (g, share) in shares {
        let before = state.gen_p_mw[g];
        let target = (before + share * delta_p_mw).clamp(0.0, net.generators[g].p_max_mw);
        state.gen_p_mw[g] = target;
        out.applied_mw += target - before;
    }
    out.residual_mw = delta_p_mw - out.applied_mw;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{build_area, GeoPoint};

    fn field_around(net: &Network, bus_id: u32, gamma: f64, dt: f64, dir: Direction) -> TemperatureField {
        let c = net.buses[net.bus_idx(bus_id).unwrap()].point();
        TemperatureField::new(dir, build_area(c, gamma, net).unwrap(), dt).unwrap()
    }

    #[test]
    fn curve_anchors() {
        let c = LoadCurve::default();
        assert!((c.eval(T_REF_HIGH) - 1.0).abs() < 1e-12);
        assert!((c.eval(T_REF_LOW) - 1.0).abs() < 1e-12);
        assert!(c.derivative(T_MIN).abs() < 1e-9);
        assert!((c.eval(34.21) - 1.5183).abs() < 1e-12);
        assert!(c.eval(T_MIN) < 1.0);
        // convex around the minimum
        assert!(c.eval(T_MIN - 0.5) + c.eval(T_MIN + 0.5) > 2.0 * c.eval(T_MIN));
    }

    #[test]
    fn anchor_must_exceed_one() {
        assert!(LoadCurve::calibrate(1.0).is_err());
    }

    #[test]
    fn bus_and_line_temperatures() {
        let net = Network::rts96();
        let f = field_around(&net, 207, 0.07, 10.0, Direction::Heat);
        assert!((bus_temperature(&net, net.bus_idx(207).unwrap(), &f) - 34.21).abs() < 1e-12);
        assert_eq!(bus_temperature(&net, net.bus_idx(101).unwrap(), &f), 24.21);
        let k = (0..net.branches.len()).find(|&k| net.branch_label(k) == "207-208").unwrap();
        assert!((line_temperature(&net, k, &f) - 34.21).abs() < 1e-9);
        let zero = TemperatureField { delta_t: 0.0, ..f };
        assert_eq!(line_temperature(&net, k, &zero), 24.21);
    }

    #[test]
    fn half_crossing_line_temperature() {
        let area = Area { lat_min: 34.0, lat_max: 35.0, lon_min: -96.0, lon_max: -94.0 };
        let f = TemperatureField::new(Direction::Heat, area, 10.0).unwrap();
        let frac = crate::geo::segment_fraction(GeoPoint::new(34.5, -95.0), GeoPoint::new(35.5, -95.0), &area);
        assert!((f.base_temp + frac * f.delta_t - (T_REF_HIGH + 5.0)).abs() < 1e-9);
    }

    #[test]
    fn table_one_loads() {
        let net = Network::rts96();
        let mut s = SystemState::base(&net);
        let f = field_around(&net, 207, 0.07, 10.0, Direction::Heat);
        let change = apply_load_change(&net, &mut s, &f, &LoadCurve::default(), 0.001);
        let i207 = net.bus_idx(207).unwrap();
        let i208 = net.bus_idx(208).unwrap();
        assert_eq!(change.buses, vec![i207, i208]);
        assert!((s.p_load_mw[i207] - 189.79).abs() < 0.01);
        assert!((s.p_load_mw[i208] - 259.63).abs() < 0.01);
        assert!((change.delta_p_mw - 153.42).abs() < 0.02);
        // direct evaluation: pf 0.98058 -> 0.97058
        let pf = 125.0 / 125f64.hypot(25.0) - 0.01;
        let q = s.p_load_mw[i207] * pf.acos().tan();
        assert!((s.q_load_mvar[i207] - q).abs() < 1e-9);
        assert!((s.q_load_mvar[i207] - 47.1).abs() < 0.05);
        // published reactive values are within 3 %
        assert!((s.q_load_mvar[i207] / 48.08 - 1.0).abs() < 0.03);
        assert!((s.q_load_mvar[i208] / 66.76 - 1.0).abs() < 0.03);
    }

    #[test]
    fn zero_delta_is_identity() {
        let net = Network::rts96();
        let mut s = SystemState::base(&net);
        let f = field_around(&net, 309, 0.2, 0.0, Direction::Heat);
        let before = s.clone();
        let change = apply_load_change(&net, &mut s, &f, &LoadCurve::default(), 0.001);
        assert_eq!(change.delta_p_mw, 0.0);
        assert_eq!(s, before);
    }

    #[test]
    fn wrong_sign_is_rejected() {
        let area = Area { lat_min: 0.0, lat_max: 1.0, lon_min: 0.0, lon_max: 1.0 };
        assert!(TemperatureField::new(Direction::Heat, area, -1.0).is_err());
        assert!(TemperatureField::new(Direction::Cool, area, 1.0).is_err());
    }

    #[test]
    fn rating_desk_checks() {
        let mut br = Network::rts96().branches[0].clone();
        br.rated_kv = 138.0;
        br.rating_mva = 175.0;
        let r = LineRating::anchored(&br, T_REF_HIGH, 1.0);
        assert!((r.at(T_REF_HIGH, 1.0, 1.0) - 175.0).abs() < 1e-9);
        assert!((r.at(T_REF_HIGH + 10.0, 1.0, 1.0) - 147.4).abs() < 1e-9);
        br.rating_mva = 190.0;
        let r = LineRating::anchored(&br, T_REF_HIGH, 1.0);
        assert!((r.at(T_REF_HIGH + 5.0, 1.0, 1.0) - 176.2).abs() < 1e-9);
        // linear in v and alpha
        assert!((r.at(30.0, 1.02, 0.9) - 0.9 * 1.02 * r.at(30.0, 1.0, 1.0)).abs() < 1e-9);
        assert_eq!(r.at(1000.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn cooling_raises_rating() {
        let br = Network::rts96().branches[0].clone();
        let r = LineRating::anchored(&br, T_REF_LOW, 1.0);
        assert!(r.at(T_REF_LOW - 10.0, 1.0, 1.0) > br.rating_mva);
    }

    #[test]
    fn proportional_pickup() {
        let net = Network::from_json(
            r#"{"base_mva":100,
            "buses":[{"id":1,"kind":"slack","base_kv":138,"lat":35,"lon":-95,"p_mw":0,"q_mvar":0},
                     {"id":2,"kind":"generator","base_kv":138,"lat":35,"lon":-94,"p_mw":100,"q_mvar":0}],
            "branches":[{"id":1,"from":1,"to":2,"r_pu":0,"x_pu":0.1,"b_pu":0,"rating_mva":175,"rated_kv":138}],
            "generators":[
              {"id":1,"bus":1,"p_mw":0,"p_max_mw":500,"q_min_mvar":-300,"q_max_mvar":300,"v_pu":1.0,"slack":true},
              {"id":2,"bus":2,"p_mw":50,"p_max_mw":100,"q_min_mvar":0,"q_max_mvar":50,"v_pu":1.0},
              {"id":3,"bus":2,"p_mw":0,"p_max_mw":100,"q_min_mvar":0,"q_max_mvar":50,"v_pu":1.0}]}"#,
        )
        .unwrap();
        let mut s = SystemState::base(&net);
        let r = redistribute_generation(&net, &mut s, 30.0);
        assert!((s.gen_p_mw[1] - 60.0).abs() < 1e-12);
        assert!((s.gen_p_mw[2] - 20.0).abs() < 1e-12);
        assert!((r.applied_mw - 30.0).abs() < 1e-12);
        let before = s.gen_p_mw.clone();
        redistribute_generation(&net, &mut s, 0.0);
        assert_eq!(s.gen_p_mw, before);
        // beyond total reserve: clamp, slack takes the rest
        let r = redistribute_generation(&net, &mut s, 500.0);
        assert!((s.gen_p_mw[1] - 100.0).abs() < 1e-12 && (s.gen_p_mw[2] - 100.0).abs() < 1e-12);
        assert!((r.residual_mw - 380.0).abs() < 1e-9);
    }
}
