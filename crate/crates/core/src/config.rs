//! Flat, file-friendly settings and their conversion into model parameters.
//!
//! Precedence is applied by callers: defaults, then a JSON file, then flags.

use serde::{Deserialize, Serialize};

use crate::control::{RatingBasis, RedispatchParams, SheddingParams};
use crate::error::ConfigError;
use crate::outage::{GenTripParams, LineTripParams, OverloadCalibration};
use crate::powerflow::PfOptions;
use crate::weather::{Direction, LoadCurve};

/// Every tunable of the simulator, one JSON key per field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub center_bus: Option<u32>,
    pub random_center: bool,
    pub gamma: f64,
    pub delta_t: f64,
    pub scenario_direction: Direction,

    pub load_curve_anchor_ratio: f64,
    pub pf_slope: f64,
    /// Overrides the per-branch slope of the case file when set.
    pub rating_slope_ka_per_c: Option<f64>,
    /// Overrides the per-branch vegetation lower bound when set.
    pub alpha_lower: Option<f64>,
    pub alpha_sampling: bool,

    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub epsilon: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub p4: f64,
    pub p5: f64,
    pub p6: f64,
    pub gen_epsilon_factor: f64,
    pub k_q_factor: f64,
    pub k_q_zero_limit: f64,
    pub line_overload_calibration: OverloadCalibration,
    pub gen_overload_calibration: OverloadCalibration,

    pub v_threshold: f64,
    pub k_shed_mw_per_pu: f64,
    pub shed_delay_s: f64,
    pub min_shed_mw: f64,
    pub redispatch: bool,
    pub eta: f64,
    pub redispatch_duration_s: f64,
    pub max_rounds: usize,
    pub rating_basis: RatingBasis,

    pub vsi_threshold: f64,
    pub max_events: usize,
    pub pf_tolerance: f64,
    pub pf_max_iterations: usize,

    pub seed: u64,
    pub runs: usize,
    pub workers: Option<usize>,
    pub histogram_bin_mw: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let line = LineTripParams::default();
        let gen = GenTripParams::default();
        let shed = SheddingParams::default();
        let rd = RedispatchParams::default();
        let pf = PfOptions::default();
        Settings {
            center_bus: None,
            random_center: false,
            gamma: 0.07,
            delta_t: 10.0,
            scenario_direction: Direction::Heat,
            load_curve_anchor_ratio: crate::weather::DEFAULT_ANCHOR_RATIO,
            pf_slope: 0.001,
            rating_slope_ka_per_c: None,
            alpha_lower: None,
            alpha_sampling: false,
            p1: line.p1,
            p2: line.p2,
            p3: line.p3,
            epsilon: line.epsilon,
            k: line.k,
            p4: gen.p4,
            p5: gen.p5,
            p6: gen.p6,
            gen_epsilon_factor: gen.epsilon_factor,
            k_q_factor: gen.k_q_factor,
            k_q_zero_limit: gen.k_q_zero_limit,
            line_overload_calibration: OverloadCalibration::LINE,
            gen_overload_calibration: OverloadCalibration::GENERATOR,
            v_threshold: shed.v_threshold,
            k_shed_mw_per_pu: shed.k_shed_mw_per_pu,
            shed_delay_s: shed.delay_s,
            min_shed_mw: shed.min_shed_mw,
            redispatch: true,
            eta: rd.eta,
            redispatch_duration_s: rd.duration_s,
            max_rounds: rd.max_rounds,
            rating_basis: rd.rating_basis,
            vsi_threshold: 0.0,
            max_events: 2000,
            pf_tolerance: pf.tolerance,
            pf_max_iterations: pf.max_iterations,
            seed: 1,
            runs: 1000,
            workers: None,
            histogram_bin_mw: 100.0,
        }
    }
}

impl Settings {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let key = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field") || msg.starts_with("invalid"))
                .unwrap_or("config")
                .to_string();
            ConfigError::new(key, msg)
        })
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Sets one key from its textual value, as given on a command line.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let mut doc = serde_json::to_value(&*self).expect("settings serialize");
        let map = doc.as_object_mut().expect("object");
        let key = key.replace('-', "_");
        let key = if key == "k" { "K".to_string() } else { key };
        if !map.contains_key(&key) {
            return Err(ConfigError::new(key, "unknown key"));
        }
        let parsed: serde_json::Value =
            serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        map.insert(key.clone(), parsed);
        *self = serde_json::from_value(doc).map_err(|e| ConfigError::new(key, e.to_string()))?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("settings serialize")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(ConfigError::new("gamma", format!("must lie in (0, 1], got {}", self.gamma)));
        }
        let sign_ok = match self.scenario_direction {
            Direction::Heat => self.delta_t >= 0.0,
            Direction::Cool => self.delta_t <= 0.0,
        };
        if !sign_ok || !self.delta_t.is_finite() {
            return Err(ConfigError::new(
                "delta_t",
                format!("{} does not match scenario_direction {:?}", self.delta_t, self.scenario_direction),
            ));
        }
        if !(self.pf_slope >= 0.0) {
            return Err(ConfigError::new("pf_slope", "must be >= 0"));
        }
        if let Some(k) = self.rating_slope_ka_per_c {
            if !(k > 0.0) {
                return Err(ConfigError::new("rating_slope_ka_per_c", "must be > 0"));
            }
        }
        if let Some(a) = self.alpha_lower {
            if !(a > 0.0 && a <= 1.0) {
                return Err(ConfigError::new("alpha_lower", "must lie in (0, 1]"));
            }
        }
        for (key, c) in [
            ("line_overload_calibration", self.line_overload_calibration),
            ("gen_overload_calibration", self.gen_overload_calibration),
        ] {
            if !(c.percent > 0.0 && c.seconds > 0.0) {
                return Err(ConfigError::new(key, "percent and seconds must be positive"));
            }
        }
        if !(self.pf_tolerance > 0.0) {
            return Err(ConfigError::new("pf_tolerance", "must be > 0"));
        }
        if self.pf_max_iterations == 0 {
            return Err(ConfigError::new("pf_max_iterations", "must be >= 1"));
        }
        if self.max_events == 0 {
            return Err(ConfigError::new("max_events", "must be >= 1"));
        }
        if self.runs == 0 {
            return Err(ConfigError::new("runs", "must be >= 1"));
        }
        if self.workers == Some(0) {
            return Err(ConfigError::new("workers", "must be >= 1"));
        }
        if !(self.histogram_bin_mw > 0.0) {
            return Err(ConfigError::new("histogram_bin_mw", "must be > 0"));
        }
        self.model()?;
        Ok(())
    }

    /// Physics and control parameters of a single run.
    pub fn model(&self) -> Result<ModelParams, ConfigError> {
        let line_trip = LineTripParams { p1: self.p1, p2: self.p2, p3: self.p3, epsilon: self.epsilon, k: self.k };
        line_trip.validate()?;
        let gen_trip = GenTripParams {
            p4: self.p4,
            p5: self.p5,
            p6: self.p6,
            epsilon_factor: self.gen_epsilon_factor,
            k_q_factor: self.k_q_factor,
            k_q_zero_limit: self.k_q_zero_limit,
        };
        gen_trip.validate()?;
        let shedding = SheddingParams {
            v_threshold: self.v_threshold,
            k_shed_mw_per_pu: self.k_shed_mw_per_pu,
            delay_s: self.shed_delay_s,
            min_shed_mw: self.min_shed_mw,
        };
        shedding.validate()?;
        let redispatch = RedispatchParams {
            eta: self.eta,
            duration_s: self.redispatch_duration_s,
            max_rounds: self.max_rounds,
            rating_basis: self.rating_basis,
        };
        redispatch.validate()?;
        Ok(ModelParams {
            direction: self.scenario_direction,
            load_curve: LoadCurve::calibrate(self.load_curve_anchor_ratio)?,
            pf_slope: self.pf_slope,
            rating_slope_ka_per_c: self.rating_slope_ka_per_c,
            alpha_lower: self.alpha_lower,
            alpha_sampling: self.alpha_sampling,
            line_trip,
            gen_trip,
            line_calibration: self.line_overload_calibration,
            gen_calibration: self.gen_overload_calibration,
            shedding,
            redispatch: self.redispatch.then_some(redispatch),
            vsi_threshold: self.vsi_threshold,
            max_events: self.max_events,
            pf: PfOptions { tolerance: self.pf_tolerance, max_iterations: self.pf_max_iterations },
        })
    }

    /// Sets both floor probabilities (accidental trips of lines and units).
    pub fn set_floor(&mut self, p: f64) {
        self.p1 = p;
        self.p4 = p;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub direction: Direction,
    pub load_curve: LoadCurve,
    pub pf_slope: f64,
    pub rating_slope_ka_per_c: Option<f64>,
    pub alpha_lower: Option<f64>,
    pub alpha_sampling: bool,
    pub line_trip: LineTripParams,
    pub gen_trip: GenTripParams,
    pub line_calibration: OverloadCalibration,
    pub gen_calibration: OverloadCalibration,
    pub shedding: SheddingParams,
    /// `None` disables operator re-dispatch.
    pub redispatch: Option<RedispatchParams>,
    pub vsi_threshold: f64,
    pub max_events: usize,
    pub pf: PfOptions,
}

impl Default for ModelParams {
    fn default() -> Self {
        Settings::default().model().expect("defaults are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let s = Settings::default();
        s.validate().unwrap();
        assert_eq!(Settings::from_json(&s.to_json()).unwrap(), s);
        assert_eq!(Settings::from_json("{}").unwrap(), s);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = Settings::from_json(r#"{"gama": 0.1}"#).unwrap_err();
        assert_eq!(e.key, "gama");
    }

    #[test]
    fn bad_values_are_named() {
        let mut s = Settings::default();
        s.gamma = 0.0;
        assert_eq!(s.validate().unwrap_err().key, "gamma");
        let mut s = Settings::default();
        s.p1 = 0.5;
        assert_eq!(s.validate().unwrap_err().key, "p1");
        let mut s = Settings::default();
        s.delta_t = -3.0;
        assert_eq!(s.validate().unwrap_err().key, "delta_t");
        let mut s = Settings::default();
        s.eta = 0.9;
        assert_eq!(s.validate().unwrap_err().key, "eta");
    }

    #[test]
    fn set_from_text() {
        let mut s = Settings::default();
        s.set("delta-t", "12.5").unwrap();
        s.set("rating_basis", "dynamic").unwrap();
        s.set("K", "1.6").unwrap();
        assert_eq!(s.delta_t, 12.5);
        assert_eq!(s.rating_basis, RatingBasis::Dynamic);
        assert_eq!(s.k, 1.6);
        assert_eq!(s.set("nope", "1").unwrap_err().key, "nope");
        assert_eq!(s.set("gamma", "abc").unwrap_err().key, "gamma");
    }
}
