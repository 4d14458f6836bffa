//! Trip probabilities, overload accumulation and time-to-trip for lines and
//! generators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Duration of an accidental (hidden-failure) trip, seconds.
pub const ACCIDENTAL_TRIP_S: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineTripParams {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub epsilon: f64,
    pub k: f64,
}

impl Default for LineTripParams {
    fn default() -> Self {
        LineTripParams { p1: 0.001, p2: 0.3, p3: 1.0, epsilon: 0.01, k: 1.5 }
    }
}

impl LineTripParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_probabilities(["p1", "p2", "p3"], [self.p1, self.p2, self.p3])?;
        if !(self.epsilon > 0.0) {
            return Err(ConfigError::new("epsilon", "must be > 0"));
        }
        if !(self.k > 1.0 + self.epsilon) {
            return Err(ConfigError::new("K", "must exceed 1 + epsilon"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenTripParams {
    pub p4: f64,
    pub p5: f64,
    pub p6: f64,
    /// ε as a fraction of the limit magnitude.
    pub epsilon_factor: f64,
    /// K_Q as a multiple of the limit.
    pub k_q_factor: f64,
    /// K̲_Q used when Q̲ = 0, MVAr.
    pub k_q_zero_limit: f64,
}

impl Default for GenTripParams {
    fn default() -> Self {
        GenTripParams { p4: 0.001, p5: 0.3, p6: 1.0, epsilon_factor: 0.01, k_q_factor: 1.5, k_q_zero_limit: 0.5 }
    }
}

impl GenTripParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_probabilities(["p4", "p5", "p6"], [self.p4, self.p5, self.p6])?;
        if !(self.epsilon_factor >= 0.0) {
            return Err(ConfigError::new("gen_epsilon_factor", "must be >= 0"));
        }
        if !(self.k_q_factor > 1.0 + self.epsilon_factor) {
            return Err(ConfigError::new("k_q_factor", "must exceed 1 + epsilon factor"));
        }
        if !(self.k_q_zero_limit > 0.0) {
            return Err(ConfigError::new("k_q_zero_limit", "must be > 0"));
        }
        Ok(())
    }
}

fn check_probabilities(keys: [&str; 3], p: [f64; 3]) -> Result<(), ConfigError> {
    for (key, v) in keys.iter().zip(p) {
        if !(0.0..=1.0).contains(&v) {
            return Err(ConfigError::new(*key, format!("{v} is not a probability")));
        }
    }
    if p[0] > p[1] {
        return Err(ConfigError::new(keys[0], format!("must not exceed {}", keys[1])));
    }
    if p[1] > p[2] {
        return Err(ConfigError::new(keys[1], format!("must not exceed {}", keys[2])));
    }
    Ok(())
}

/// Exponential a·e^{bx} through (x0, p0) and (x1, p1), evaluated at x.
/// Falls back to linear interpolation when an endpoint probability is zero.
fn exp_segment(x: f64, (x0, p0): (f64, f64), (x1, p1): (f64, f64)) -> f64 {
    let s = (x - x0) / (x1 - x0);
    if p0 > 0.0 && p1 > 0.0 {
        (p0.ln() + s * (p1.ln() - p0.ln())).exp()
    } else {
        p0 + s * (p1 - p0)
    }
}

/// f_t(R): line trip probability as a function of loading ratio.
pub fn line_trip_probability(r: f64, params: &LineTripParams) -> f64 {
    let LineTripParams { p1, p2, p3, epsilon, k } = *params;
    if r <= 1.0 {
        p1
    } else if r <= 1.0 + epsilon {
        exp_segment(r, (1.0, p1), (1.0 + epsilon, p2))
    } else if r <= k {
        exp_segment(r, (1.0 + epsilon, p2), (k, p3))
    } else {
        p3
    }
}

/// Breakpoints of f_g for one unit: `[K̲, Q̲−ε̲, Q̲, Q̄, Q̄+ε̄, K̄]`.
pub fn generator_breakpoints(q_min: f64, q_max: f64, params: &GenTripParams) -> [f64; 6] {
    let eps_lo = params.epsilon_factor * q_min.abs();
    let eps_hi = params.epsilon_factor * q_max.abs();
    let k_lo = if q_min < 0.0 { params.k_q_factor * q_min } else { q_min - params.k_q_zero_limit };
    let k_hi = if q_max > 0.0 { params.k_q_factor * q_max } else { q_max + params.k_q_zero_limit };
    [k_lo.min(q_min - eps_lo), q_min - eps_lo, q_min, q_max, q_max + eps_hi, k_hi.max(q_max + eps_hi)]
}

/// f_g(Q): generator trip probability for reactive output `q` (MVAr).
pub fn generator_trip_probability(q: f64, q_min: f64, q_max: f64, params: &GenTripParams) -> f64 {
    let [k_lo, lo_eps, lo, hi, hi_eps, k_hi] = generator_breakpoints(q_min, q_max, params);
    let GenTripParams { p4, p5, p6, .. } = *params;
    if (lo..=hi).contains(&q) {
        p4
    } else if q > hi {
        if q <= hi_eps {
            exp_segment(q, (hi, p4), (hi_eps, p5))
        } else if q <= k_hi {
            exp_segment(q, (hi_eps, p5), (k_hi, p6))
        } else {
            p6
        }
    } else if q >= lo_eps && lo_eps < lo {
        exp_segment(q, (lo_eps, p5), (lo, p4))
    } else if q > k_lo {
        exp_segment(q, (k_lo, p6), (lo_eps, p5))
    } else {
        p6
    }
}

/// Overload tolerance "percent above the limit for this many seconds".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverloadCalibration {
    pub percent: f64,
    pub seconds: f64,
}

impl OverloadCalibration {
    pub const LINE: OverloadCalibration = OverloadCalibration { percent: 50.0, seconds: 20.0 };
    pub const GENERATOR: OverloadCalibration = OverloadCalibration { percent: 20.0, seconds: 1800.0 };

    /// Accumulated-overload budget ō for a limit of `reference` magnitude.
    pub fn budget(&self, reference: f64) -> f64 {
        self.seconds * self.percent / 100.0 * reference.abs()
    }
}

/// Time until the accumulated overload reaches its budget.
pub fn time_to_budget(budget: f64, accumulated: f64, excess: f64) -> f64 {
    if excess <= 0.0 {
        return f64::INFINITY;
    }
    ((budget - accumulated) / excess).max(0.0)
}

/// Line timing; accidental when not overloaded.
pub fn line_trip_time(flow: f64, rating: f64, budget: f64, accumulated: f64) -> f64 {
    if flow <= rating {
        ACCIDENTAL_TRIP_S
    } else {
        time_to_budget(budget, accumulated, flow - rating)
    }
}

/// Violated reactive limit and the excess beyond it; `None` when in limits.
pub fn reactive_violation(q: f64, q_min: f64, q_max: f64) -> Option<(f64, f64)> {
    if q > q_max {
        Some((q_max, q - q_max))
    } else if q < q_min {
        Some((q_min, q_min - q))
    } else {
        None
    }
}

/// Reference magnitude for a generator's budget. A zero limit falls back to
/// the width of the reactive range.
pub fn generator_reference(limit: f64, q_min: f64, q_max: f64) -> f64 {
    if limit.abs() > 0.0 {
        limit.abs()
    } else {
        (q_max - q_min).abs()
    }
}

pub fn generator_trip_time(q: f64, q_min: f64, q_max: f64, accumulated: f64, cal: &OverloadCalibration) -> f64 {
    match reactive_violation(q, q_min, q_max) {
        None => ACCIDENTAL_TRIP_S,
        Some((limit, excess)) => {
            time_to_budget(cal.budget(generator_reference(limit, q_min, q_max)), accumulated, excess)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mark {
    /// Trips when the accumulated overload exhausts its budget.
    Overload,
    /// Hidden failure; trips after the remaining delay.
    Accidental { remaining_s: f64 },
}

/// Overload history and trip decision of one line or generator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ElementRisk {
    pub accumulated: f64,
    /// Budget ō, fixed when the present overload episode began.
    pub budget: Option<f64>,
    /// Uniform draw made at episode onset; marked once p exceeds it.
    pub threshold: Option<f64>,
    pub mark: Option<Mark>,
}

/// What the element looks like at the current operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exposure {
    pub in_service: bool,
    /// Amount above the limit (MVA or MVAr); ≤ 0 when within limits.
    pub excess: f64,
    /// Magnitude the budget is proportional to.
    pub reference: f64,
    /// Trip probability from the curve.
    pub probability: f64,
}

impl ElementRisk {
    /// Updates the mark for this iteration. Draws at most one uniform.
    pub fn observe<R: Rng>(&mut self, e: &Exposure, cal: &OverloadCalibration, floor: f64, rng: &mut R) {
        if !e.in_service {
            self.mark = None;
            self.threshold = None;
            self.budget = None;
            return;
        }
        if e.excess > 0.0 {
            let threshold = match self.threshold {
                Some(u) => u,
                None => {
                    let u: f64 = rng.random();
                    self.threshold = Some(u);
                    self.budget = Some(cal.budget(e.reference));
                    u
                }
            };
            if self.mark.is_none() && threshold < e.probability {
                self.mark = Some(Mark::Overload);
            }
        } else {
            if self.threshold.take().is_some() {
                self.budget = None;
                if self.mark == Some(Mark::Overload) {
                    self.mark = None;
                }
            }
            if self.mark.is_none() && floor > 0.0 && rng.random::<f64>() < floor {
                self.mark = Some(Mark::Accidental { remaining_s: ACCIDENTAL_TRIP_S });
            }
        }
    }

    /// Seconds until this element trips, if marked.
    pub fn time_to_trip(&self, excess: f64) -> Option<f64> {
        match self.mark? {
            Mark::Accidental { remaining_s } => Some(remaining_s),
            Mark::Overload => Some(time_to_budget(self.budget.unwrap_or(0.0), self.accumulated, excess)),
        }
    }

    /// Advances time by `dt` at the given excess.
    pub fn accumulate(&mut self, excess: f64, dt: f64) {
        if excess > 0.0 {
            self.accumulated += excess * dt;
            if let Some(b) = self.budget {
                self.accumulated = self.accumulated.min(b);
            }
        }
        if let Some(Mark::Accidental { remaining_s }) = &mut self.mark {
            *remaining_s = (*remaining_s - dt).max(0.0);
        }
    }
}
