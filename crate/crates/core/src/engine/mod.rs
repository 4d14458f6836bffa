//! Event-driven cascade simulation.
//!
//! Each iteration solves the AC power flow, checks voltage stability,
//! refreshes the dynamic line ratings and trip marks, then advances the
//! clock to the earliest pending event and executes it.

mod trace;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

pub use trace::{CascadeTrace, DisturbanceInfo, Event, EventKind, Series, Termination, Totals};

use crate::config::ModelParams;
use crate::control::{self, RatingBasis};
use crate::error::SimError;
use crate::geo::build_area;
use crate::grid::{find_islands, total_served_load, Network, SystemState};
use crate::outage::{
    generator_reference, generator_trip_probability, line_trip_probability, reactive_violation, ElementRisk, Exposure,
};
use crate::powerflow::{self, branch_loading_ratio, compute_vsi, island_slack, PfOptions, PowerFlowSolution};
use crate::weather::{self, LineRating, TemperatureField};

/// Network with its solved, undisturbed operating point.
#[derive(Debug, Clone)]
pub struct BaseCase {
    pub net: Network,
    /// Base state with solved voltages and the slack setpoint at its solved output.
    pub state: SystemState,
    pub solution: PowerFlowSolution,
    pub vsi: f64,
    /// Mean endpoint voltage of each branch at the base point.
    pub branch_voltage: Vec<f64>,
}

impl BaseCase {
    pub fn new(net: Network, pf: &PfOptions) -> Result<Self, SimError> {
        let mut state = SystemState::base(&net);
        let solution = powerflow::solve(&net, &state, pf);
        if !solution.converged() || solution.largest_island().is_none() {
            return Err(SimError::BaseCaseDiverged);
        }
        store_solution(&mut state, &solution);
        let vsi = compute_vsi(&net, &state, &solution);
        let branch_voltage = (0..net.branches.len())
            .map(|k| {
                let (f, t) = net.branch_ends(k);
                0.5 * (solution.vm[f] + solution.vm[t])
            })
            .collect();
        Ok(BaseCase { net, state, solution, vsi, branch_voltage })
    }

    pub fn rts96() -> Self {
        BaseCase::new(Network::rts96(), &PfOptions::default()).expect("bundled case solves")
    }

    /// Ids of the buses with positive nominal load.
    pub fn load_bus_ids(&self) -> Vec<u32> {
        self.net.load_buses().into_iter().map(|i| self.net.buses[i].id).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub center_bus: u32,
    pub gamma: f64,
    pub delta_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: ModelParams,
    pub disturbance: Disturbance,
    pub seed: u64,
}

impl RunConfig {
    /// SHA-256 of the canonical JSON of this configuration, hex encoded.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// An event that is due after `delay_s` unless something earlier changes
/// the operating point first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pending {
    pub delay_s: f64,
    pub kind: EventKind,
    /// Bus, branch or generator index; 0 for re-dispatch.
    pub element: usize,
}

/// Index of the pending event to execute next: earliest first, then by
/// kind (shedding, line, generator, re-dispatch), then lowest element.
pub fn next_event(pending: &[Pending]) -> Option<usize> {
    (0..pending.len()).min_by(|&a, &b| {
        let (x, y) = (&pending[a], &pending[b]);
        x.delay_s
            .total_cmp(&y.delay_s)
            .then(x.kind.priority().cmp(&y.kind.priority()))
            .then(x.element.cmp(&y.element))
    })
}

fn store_solution(state: &mut SystemState, sol: &PowerFlowSolution) {
    for isl in sol.islands.iter().filter(|i| i.energized && i.converged) {
        for &i in &isl.buses {
            state.vm[i] = sol.vm[i];
            state.va[i] = sol.va[i];
        }
        if let Some(g) = isl.slack_gen {
            state.gen_p_mw[g] = sol.gen_p_mw[g];
        }
    }
}

/// Runs one cascade from the base case under the given disturbance.
pub fn run_cascade(base: &BaseCase, cfg: &RunConfig) -> Result<CascadeTrace, SimError> {
    Run::new(base, cfg)?.simulate()
}

struct Run<'a> {
    net: &'a Network,
    p: &'a ModelParams,
    rng: ChaCha8Rng,
    state: SystemState,
    line_temp: Vec<f64>,
    alpha: Vec<f64>,
    ratings: Vec<LineRating>,
    lines: Vec<ElementRisk>,
    gens: Vec<ElementRisk>,
    undervoltage_since: Vec<Option<f64>>,
    redispatch_in: Option<f64>,
    redispatch_armed: bool,
    known_overload: Vec<bool>,
    executed: usize,
    events: Vec<Event>,
    series: Series,
    totals: Totals,
    info: DisturbanceInfo,
    digest: String,
}

enum Step {
    Continue,
    Stop(Termination),
}

impl<'a> Run<'a> {
    fn new(base: &'a BaseCase, cfg: &'a RunConfig) -> Result<Self, SimError> {
        let net = &base.net;
        let p = &cfg.params;
        let d = cfg.disturbance;
        let center = net.bus_idx(d.center_bus).ok_or(SimError::UnknownBus(d.center_bus))?;
        let area = build_area(net.buses[center].point(), d.gamma, net)?;
        let field = TemperatureField::new(p.direction, area, d.delta_t)?;
        let mut state = base.state.clone();
        let change = weather::apply_load_change(net, &mut state, &field, &p.load_curve, p.pf_slope);
        for w in &change.warnings {
            log::warn!("{w}");
        }
        let redist = weather::redistribute_generation(net, &mut state, change.delta_p_mw);
        if let Some(w) = &redist.warning {
            log::warn!("{w}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let nbr = net.branches.len();
        let alpha = (0..nbr)
            .map(|k| {
                let lower = p.alpha_lower.unwrap_or(net.branches[k].alpha_lower);
                if p.alpha_sampling && lower < 1.0 {
                    rng.random_range(lower..=1.0)
                } else {
                    1.0
                }
            })
            .collect();
        let t0 = p.direction.base_temperature();
        let ratings = (0..nbr)
            .map(|k| {
                let mut br = net.branches[k].clone();
                if let Some(s) = p.rating_slope_ka_per_c {
                    br.rating_slope_ka_per_c = s;
                }
                LineRating::anchored(&br, t0, base.branch_voltage[k])
            })
            .collect();
        let line_temp = (0..nbr).map(|k| weather::line_temperature(net, k, &field)).collect();
        let info = DisturbanceInfo {
            center_bus: d.center_bus,
            gamma: d.gamma,
            delta_t: d.delta_t,
            direction: p.direction,
            buses: change.buses.iter().map(|&i| net.buses[i].id).collect(),
            delta_p_mw: change.delta_p_mw,
        };
        Ok(Run {
            net,
            p,
            rng,
            state,
            line_temp,
            alpha,
            ratings,
            lines: vec![ElementRisk::default(); nbr],
            gens: vec![ElementRisk::default(); net.generators.len()],
            undervoltage_since: vec![None; net.buses.len()],
            redispatch_in: None,
            redispatch_armed: true,
            known_overload: vec![false; nbr],
            executed: 0,
            events: Vec::new(),
            series: Series::default(),
            totals: Totals::default(),
            info,
            digest: cfg.digest(),
        })
    }

    fn simulate(mut self) -> Result<CascadeTrace, SimError> {
        let termination = loop {
            if let Step::Stop(t) = self.iterate() {
                break t;
            }
        };
        Ok(CascadeTrace {
            config_digest: self.digest,
            termination,
            events: self.events,
            series: self.series,
            totals: self.totals,
            disturbance: Some(self.info),
        })
    }

    fn push(&mut self, kind: EventKind, elements: Vec<u32>, detail: serde_json::Value) {
        self.events.push(Event { t_s: self.state.time_s, kind, elements, detail });
    }

    /// Solves the power flow, dropping minor islands that do not converge.
    /// `None` when the largest island diverges.
    fn solve(&mut self) -> Option<PowerFlowSolution> {
        loop {
            let sol = powerflow::solve(self.net, &self.state, &self.p.pf);
            let largest = sol.largest_island()?;
            if !sol.islands[largest].converged {
                return None;
            }
            let failed: Vec<usize> =
                (0..sol.islands.len()).filter(|&i| sol.islands[i].energized && !sol.islands[i].converged).collect();
            if failed.is_empty() {
                store_solution(&mut self.state, &sol);
                return Some(sol);
            }
            for i in failed {
                let buses = sol.islands[i].buses.clone();
                for g in 0..self.net.generators.len() {
                    if buses.contains(&self.net.gen_bus(g)) {
                        self.state.gen_in_service[g] = false;
                        self.state.gen_slack[g] = false;
                    }
                }
                self.kill_island(&buses, true);
            }
        }
    }

    fn kill_island(&mut self, buses: &[usize], diverged: bool) {
        let mut lost = 0.0;
        for &i in buses {
            if self.state.bus_energized[i] {
                lost += self.state.p_load_mw[i];
            }
            self.state.bus_energized[i] = false;
            self.state.p_load_mw[i] = 0.0;
            self.state.q_load_mvar[i] = 0.0;
            self.state.vm[i] = 0.0;
            self.undervoltage_since[i] = None;
        }
        self.totals.shed_mw += lost;
        self.totals.island_loss_mw += lost;
        let ids = buses.iter().map(|&i| self.net.buses[i].id).collect();
        self.push(EventKind::Islanding, ids, json!({ "mw": lost, "diverged": diverged }));
    }

    fn dynamic_ratings(&self, sol: &PowerFlowSolution) -> Vec<f64> {
        (0..self.net.branches.len())
            .map(|k| {
                let (f, t) = self.net.branch_ends(k);
                let v = 0.5 * (sol.vm[f] + sol.vm[t]);
                self.ratings[k].at(self.line_temp[k], v, self.alpha[k])
            })
            .collect()
    }

    fn iterate(&mut self) -> Step {
        let Some(sol) = self.solve() else {
            self.push(EventKind::Divergence, Vec::new(), json!({}));
            self.record_series(None);
            return Step::Stop(Termination::Divergence);
        };
        let vsi = compute_vsi(self.net, &self.state, &sol);
        self.record_series(Some(vsi));
        if vsi <= self.p.vsi_threshold {
            self.push(EventKind::VsiCollapse, Vec::new(), json!({ "vsi": vsi }));
            return Step::Stop(Termination::VsiCollapse);
        }
        if self.executed >= self.p.max_events {
            return Step::Stop(Termination::MaxEvents);
        }
        let net = self.net;
        let rating = self.dynamic_ratings(&sol);

        let t = self.state.time_s;
        for i in 0..net.buses.len() {
            if self.state.bus_energized[i] && control::shed_due(self.state.p_load_mw[i], sol.vm[i], &self.p.shedding) {
                self.undervoltage_since[i].get_or_insert(t);
            } else {
                self.undervoltage_since[i] = None;
            }
        }

        if let Some(rp) = &self.p.redispatch {
            let basis: Vec<f64> = match rp.rating_basis {
                RatingBasis::Initial => net.branches.iter().map(|b| b.rating_mva).collect(),
                RatingBasis::Dynamic => rating.clone(),
            };
            let triggers = control::redispatch_triggers(net, &self.state, &sol, &basis);
            if triggers.is_empty() {
                self.redispatch_in = None;
            } else {
                let fresh = triggers.iter().any(|&k| !self.known_overload[k]);
                if self.redispatch_in.is_none() && (self.redispatch_armed || fresh) {
                    self.redispatch_armed = false;
                    // the operator only acts when a round would relieve something
                    let mut trial = self.state.clone();
                    let plan = control::redispatch(net, &mut trial, &sol, &basis, rp, &self.p.pf);
                    if !plan.changes.is_empty() {
                        self.redispatch_in = Some(rp.duration_s);
                    }
                }
            }
            self.known_overload.iter_mut().for_each(|o| *o = false);
            for k in triggers {
                self.known_overload[k] = true;
            }
        }

        let line_excess: Vec<f64> = (0..net.branches.len())
            .map(|k| {
                let (f, to) = net.branch_ends(k);
                let live = self.state.branch_in_service[k] && self.state.bus_energized[f] && self.state.bus_energized[to];
                let flow = sol.apparent_flow(k);
                let e = Exposure {
                    in_service: live,
                    excess: flow - rating[k],
                    reference: rating[k],
                    probability: line_trip_probability(branch_loading_ratio(flow, rating[k]), &self.p.line_trip),
                };
                self.lines[k].observe(&e, &self.p.line_calibration, self.p.line_trip.p1, &mut self.rng);
                if live { e.excess } else { 0.0 }
            })
            .collect();
        let gen_excess: Vec<f64> = (0..net.generators.len())
            .map(|g| {
                let unit = &net.generators[g];
                let q = sol.gen_q_mvar[g];
                let live = self.state.gen_in_service[g];
                let violation = reactive_violation(q, unit.q_min_mvar, unit.q_max_mvar);
                let e = Exposure {
                    in_service: live,
                    excess: violation.map_or(0.0, |v| v.1),
                    reference: violation.map_or(0.0, |v| generator_reference(v.0, unit.q_min_mvar, unit.q_max_mvar)),
                    probability: generator_trip_probability(q, unit.q_min_mvar, unit.q_max_mvar, &self.p.gen_trip),
                };
                self.gens[g].observe(&e, &self.p.gen_calibration, self.p.gen_trip.p4, &mut self.rng);
                if live { e.excess } else { 0.0 }
            })
            .collect();

        let mut pending = Vec::new();
        for (i, since) in self.undervoltage_since.iter().enumerate() {
            if let Some(s) = since {
                let delay_s = (s + self.p.shedding.delay_s - t).max(0.0);
                pending.push(Pending { delay_s, kind: EventKind::UndervoltageShed, element: i });
            }
        }
        for (k, risk) in self.lines.iter().enumerate() {
            if let Some(delay_s) = risk.time_to_trip(line_excess[k]) {
                pending.push(Pending { delay_s, kind: EventKind::LineTrip, element: k });
            }
        }
        for (g, risk) in self.gens.iter().enumerate() {
            if let Some(delay_s) = risk.time_to_trip(gen_excess[g]) {
                pending.push(Pending { delay_s, kind: EventKind::GeneratorTrip, element: g });
            }
        }
        if let Some(delay_s) = self.redispatch_in {
            pending.push(Pending { delay_s, kind: EventKind::Redispatch, element: 0 });
        }
        let Some(next) = next_event(&pending) else {
            return Step::Stop(Termination::NoEvent);
        };
        let chosen = pending[next];
        let dt = chosen.delay_s;

        for (risk, &e) in self.lines.iter_mut().zip(&line_excess) {
            risk.accumulate(e, dt);
        }
        for (risk, &e) in self.gens.iter_mut().zip(&gen_excess) {
            risk.accumulate(e, dt);
        }
        if let Some(r) = &mut self.redispatch_in {
            *r -= dt;
        }
        self.state.time_s += dt;
        self.executed += 1;

        match chosen.kind {
            EventKind::UndervoltageShed => {
                let due: Vec<usize> = pending
                    .iter()
                    .filter(|p| p.kind == EventKind::UndervoltageShed && p.delay_s == dt)
                    .map(|p| p.element)
                    .collect();
                self.shed(&due, &sol);
            }
            EventKind::LineTrip => {
                let k = chosen.element;
                let flow = sol.apparent_flow(k);
                let loading = branch_loading_ratio(flow, rating[k]);
                let detail = json!({
                    "probability": line_trip_probability(loading, &self.p.line_trip),
                    "flow_mva": flow,
                    "rating_mva": rating[k],
                    "loading": loading,
                    "accidental": line_excess[k] <= 0.0,
                });
                self.state.branch_in_service[k] = false;
                self.lines[k] = ElementRisk::default();
                control::disconnect_coupled_shunts(net, &mut self.state, k);
                self.totals.lines += 1;
                self.push(EventKind::LineTrip, vec![net.branches[k].id], detail);
                return self.after_trip(&sol);
            }
            EventKind::GeneratorTrip => {
                let g = chosen.element;
                let unit = &net.generators[g];
                let q = sol.gen_q_mvar[g];
                let detail = json!({
                    "probability": generator_trip_probability(q, unit.q_min_mvar, unit.q_max_mvar, &self.p.gen_trip),
                    "q_mvar": q,
                    "p_mw": sol.gen_p_mw[g],
                    "accidental": gen_excess[g] <= 0.0,
                });
                self.state.gen_in_service[g] = false;
                self.state.gen_slack[g] = false;
                self.gens[g] = ElementRisk::default();
                self.totals.generators += 1;
                self.push(EventKind::GeneratorTrip, vec![net.generators[g].id], detail);
                return self.after_trip(&sol);
            }
            EventKind::Redispatch => {
                self.redispatch_in = None;
                let rp = self.p.redispatch.expect("scheduled only when enabled");
                let basis: Vec<f64> = match rp.rating_basis {
                    RatingBasis::Initial => net.branches.iter().map(|b| b.rating_mva).collect(),
                    RatingBasis::Dynamic => rating,
                };
                let report = control::redispatch(net, &mut self.state, &sol, &basis, &rp, &self.p.pf);
                let moved: f64 = report.changes.iter().map(|c| c.delta_mw.abs()).sum();
                let mut units: Vec<u32> = report.changes.iter().map(|c| net.generators[c.generator].id).collect();
                units.sort_unstable();
                units.dedup();
                let detail = json!({
                    "rounds": report.rounds,
                    "moved_mw": moved,
                    "remaining": report.remaining.iter().map(|&k| net.branches[k].id).collect::<Vec<_>>(),
                });
                self.push(EventKind::Redispatch, units, detail);
            }
            _ => unreachable!("not schedulable"),
        }
        Step::Continue
    }

    fn shed(&mut self, buses: &[usize], sol: &PowerFlowSolution) {
        let mut total = 0.0;
        for &i in buses {
            let (dp, dq) = control::undervoltage_shed(
                self.state.p_load_mw[i],
                self.state.q_load_mvar[i],
                sol.vm[i],
                &self.p.shedding,
            );
            self.state.p_load_mw[i] -= dp;
            self.state.q_load_mvar[i] -= dq;
            self.undervoltage_since[i] = None;
            total += dp;
        }
        self.totals.shed_mw += total;
        let ids = buses.iter().map(|&i| self.net.buses[i].id).collect();
        self.push(EventKind::UndervoltageShed, ids, json!({ "mw": total }));
    }

    /// Handles the topology after a line or unit trip: dead islands lose
    /// their load, live ones get a slack and their power balance restored.
    fn after_trip(&mut self, sol: &PowerFlowSolution) -> Step {
        let net = self.net;
        self.redispatch_armed = true;
        let islands = find_islands(net, &self.state.branch_in_service, &self.state.gen_in_service);
        let mut any_live = false;
        for isl in &islands {
            if !isl.energized {
                if isl.buses.iter().any(|&i| self.state.bus_energized[i]) {
                    self.kill_island(&isl.buses, false);
                }
                continue;
            }
            any_live = true;
            let mut inside = vec![false; net.buses.len()];
            for &i in &isl.buses {
                inside[i] = true;
            }
            let Some(slack) = island_slack(net, &self.state, &inside) else { continue };
            self.state.gen_slack[slack] = true;
            self.rebalance(&inside, slack, sol);
        }
        if !any_live {
            return Step::Stop(Termination::Blackout);
        }
        Step::Continue
    }

    /// Closes the gap between load plus losses and scheduled generation of
    /// one island: shortfalls go by reserve, surpluses by output share.
    fn rebalance(&mut self, inside: &[bool], slack: usize, sol: &PowerFlowSolution) {
        let net = self.net;
        let load: f64 = (0..net.buses.len()).filter(|&i| inside[i]).map(|i| self.state.p_load_mw[i]).sum();
        let losses: f64 = (0..net.branches.len())
            .filter(|&k| self.state.branch_in_service[k] && inside[net.branch_ends(k).0])
            .map(|k| sol.flows[k].s_from.re + sol.flows[k].s_to.re)
            .sum();
        let units: Vec<usize> =
            (0..net.generators.len()).filter(|&g| self.state.gen_in_service[g] && inside[net.gen_bus(g)]).collect();
        let scheduled: f64 = units.iter().map(|&g| self.state.gen_p_mw[g]).sum();
        let gap = load + losses - scheduled;
        if gap.abs() < 1.0 {
            return;
        }
        let others: Vec<usize> = units.iter().copied().filter(|&g| g != slack).collect();
        let weight = |g: usize| {
            if gap > 0.0 {
                (net.generators[g].p_max_mw - self.state.gen_p_mw[g]).max(0.0)
            } else {
                self.state.gen_p_mw[g].max(0.0)
            }
        };
        let total: f64 = others.iter().map(|&g| weight(g)).sum();
        let mut applied = 0.0;
        if total > 0.0 {
            let shares: Vec<(usize, f64)> = others.iter().map(|&g| (g, weight(g) / total)).collect();
            for (g, share) in shares {
                let before = self.state.gen_p_mw[g];
                let target = (before + share * gap).clamp(0.0, net.generators[g].p_max_mw);
                self.state.gen_p_mw[g] = target;
                applied += target - before;
            }
        }
        self.state.gen_p_mw[slack] += gap - applied;
    }

    fn record_series(&mut self, vsi: Option<f64>) {
        self.series.t_s.push(self.state.time_s);
        self.series.load_mw.push(total_served_load(&self.state));
        self.series.vsi.push(vsi.filter(|v| v.is_finite()));
    }
}
