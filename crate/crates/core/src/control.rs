//! Protection and operator actions: undervoltage load shedding, shift-factor
//! re-dispatch and switching of branch-coupled shunts.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::grid::{find_islands, Network, SystemState};
use crate::powerflow::{self, island_slack, PfOptions, PowerFlowSolution};

/// Units whose shift factor on the branch is smaller than this are not
/// moved; shifting them barely changes the flow but loads the slack.
pub const MIN_SHIFT_FACTOR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SheddingParams {
    pub v_threshold: f64,
    pub k_shed_mw_per_pu: f64,
    pub delay_s: f64,
    /// Buses whose computed shed is below this are left alone.
    pub min_shed_mw: f64,
}

impl Default for SheddingParams {
    fn default() -> Self {
        SheddingParams { v_threshold: 0.9, k_shed_mw_per_pu: 600.0, delay_s: 3.0, min_shed_mw: 1.0 }
    }
}

impl SheddingParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, v) in [
            ("v_threshold", self.v_threshold),
            ("k_shed_mw_per_pu", self.k_shed_mw_per_pu),
            ("shed_delay_s", self.delay_s),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::new(key, format!("must be positive, got {v}")));
            }
        }
        if !(self.min_shed_mw >= 0.0) || !self.min_shed_mw.is_finite() {
            return Err(ConfigError::new("min_shed_mw", "must be >= 0"));
        }
        Ok(())
    }
}

/// Load shed at a bus whose voltage stayed below threshold: (ΔP, ΔQ).
/// ΔQ keeps the bus power factor.
pub fn undervoltage_shed(p_mw: f64, q_mvar: f64, v_pu: f64, params: &SheddingParams) -> (f64, f64) {
    if p_mw <= 0.0 || v_pu >= params.v_threshold {
        return (0.0, 0.0);
    }
    let dp = (params.k_shed_mw_per_pu * (params.v_threshold - v_pu)).min(p_mw);
    let dq = if dp == p_mw { q_mvar } else { q_mvar * dp / p_mw };
    (dp, dq)
}

/// True when the bus voltage is low enough for a shed of at least
/// `min_shed_mw`.
pub fn shed_due(p_mw: f64, v_pu: f64, params: &SheddingParams) -> bool {
    v_pu < params.v_threshold && undervoltage_shed(p_mw, 0.0, v_pu, params).0 >= params.min_shed_mw.max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RatingBasis {
    #[default]
    Initial,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RedispatchParams {
    pub eta: f64,
    pub duration_s: f64,
    pub max_rounds: usize,
    pub rating_basis: RatingBasis,
}

impl Default for RedispatchParams {
    fn default() -> Self {
        RedispatchParams { eta: 1.05, duration_s: 60.0, max_rounds: 10, rating_basis: RatingBasis::Initial }
    }
}

impl RedispatchParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.eta >= 1.0) {
            return Err(ConfigError::new("eta", "must be >= 1"));
        }
        if !(self.duration_s > 0.0) {
            return Err(ConfigError::new("redispatch_duration_s", "must be positive"));
        }
        if self.max_rounds < 1 {
            return Err(ConfigError::new("max_rounds", "must be >= 1"));
        }
        Ok(())
    }
}

/// DC sensitivity model of the present topology, one factorization per island.
pub struct ShiftFactorTable {
    island_of: Vec<usize>,
    islands: Vec<DcIsland>,
    branch_in_service: Vec<bool>,
}

struct DcIsland {
    slack_bus: Option<usize>,
    /// Bus index → row of the reduced susceptance matrix.
    row: Vec<(usize, usize)>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl ShiftFactorTable {
    pub fn new(net: &Network, state: &SystemState) -> Self {
        let nb = net.buses.len();
        let mut island_of = vec![usize::MAX; nb];
        let mut islands = Vec::new();
        for (n, island) in find_islands(net, &state.branch_in_service, &state.gen_in_service).iter().enumerate() {
            for &i in &island.buses {
                island_of[i] = n;
            }
            let in_island: Vec<bool> = (0..nb).map(|i| island_of[i] == n).collect();
            let slack_bus = island.energized.then(|| island_slack(net, state, &in_island)).flatten().map(|g| net.gen_bus(g));
            let Some(slack) = slack_bus else {
                islands.push(DcIsland { slack_bus: None, row: Vec::new(), lu: None });
                continue;
            };
            let row: Vec<(usize, usize)> =
                island.buses.iter().filter(|&&i| i != slack).enumerate().map(|(r, &i)| (i, r)).collect();
            let mut pos = vec![usize::MAX; nb];
            for &(i, r) in &row {
                pos[i] = r;
            }
            let m = row.len();
            let mut b = DMatrix::zeros(m, m);
            for (k, br) in net.branches.iter().enumerate() {
                let (f, t) = net.branch_ends(k);
                if !state.branch_in_service[k] || !in_island[f] {
                    continue;
                }
                let y = 1.0 / br.x_pu;
                let (pf, pt) = (pos[f], pos[t]);
                if pf != usize::MAX {
                    b[(pf, pf)] += y;
                }
                if pt != usize::MAX {
                    b[(pt, pt)] += y;
                }
                if pf != usize::MAX && pt != usize::MAX {
                    b[(pf, pt)] -= y;
                    b[(pt, pf)] -= y;
                }
            }
            islands.push(DcIsland { slack_bus: Some(slack), row, lu: (m > 0).then(|| b.lu()) });
        }
        ShiftFactorTable { island_of, islands, branch_in_service: state.branch_in_service.clone() }
    }

    /// Per-bus sensitivity of the from→to real flow on branch `k` to an
    /// injection at the bus withdrawn at the island slack. Buses outside the
    /// branch's island get 0. Empty when the island has no slack.
    pub fn row(&self, net: &Network, k: usize) -> Vec<f64> {
        let nb = net.buses.len();
        if !self.branch_in_service[k] {
            return vec![0.0; nb];
        }
        let (f, t) = net.branch_ends(k);
        let island = &self.islands[self.island_of[f]];
        if island.slack_bus.is_none() {
            return Vec::new();
        }
        let mut out = vec![0.0; nb];
        let Some(lu) = &island.lu else { return out };
        let mut pos = vec![usize::MAX; nb];
        for &(i, r) in &island.row {
            pos[i] = r;
        }
        let y = 1.0 / net.branches[k].x_pu;
        let mut rhs = DVector::zeros(island.row.len());
        if pos[f] != usize::MAX {
            rhs[pos[f]] += y;
        }
        if pos[t] != usize::MAX {
            rhs[pos[t]] -= y;
        }
        if let Some(w) = lu.solve(&rhs) {
            for &(i, r) in &island.row {
                out[i] = w[r];
            }
        }
        out
    }
}

/// One branch-generator pair picked by the re-dispatch.
#[derive(Debug, Clone, PartialEq)]
pub struct SetpointChange {
    pub generator: usize,
    pub branch: usize,
    pub delta_mw: f64,
}

/// Flow correction of one overloaded branch: each ranked generator moves by
/// η(F̄ − F)/S, spilling what its limits block to the next one. `flow` and
/// `limit` in MVA; `direction` is the sign of the present from→to real flow.
#[allow(clippy::too_many_arguments)]
pub fn correct_branch(
    net: &Network,
    state: &mut SystemState,
    sensitivities: &[f64],
    k: usize,
    flow: f64,
    limit: f64,
    direction: f64,
    eta: f64,
) -> Vec<SetpointChange> {
    let mut needed = eta * (flow - limit);
    let mut changes = Vec::new();
    if needed <= 0.0 || sensitivities.is_empty() {
        return changes;
    }
    let mut ranked: Vec<(usize, f64)> = (0..net.generators.len())
        .filter(|&g| state.gen_in_service[g] && !state.gen_slack[g])
        .map(|g| (g, direction * sensitivities[net.gen_bus(g)]))
        .filter(|&(_, s)| s.abs() >= MIN_SHIFT_FACTOR)
        .collect();
    // positive factors in descending order, then negative ones ascending
    ranked.sort_by(|a, b| {
        let key = |s: f64| if s > 0.0 { (0, -s) } else { (1, s) };
        key(a.1).partial_cmp(&key(b.1)).unwrap().then(a.0.cmp(&b.0))
    });
    for (g, s) in ranked {
        if needed <= 1e-9 {
            break;
        }
        let p = state.gen_p_mw[g];
        let target = (p - needed / s).clamp(0.0, net.generators[g].p_max_mw);
        let delta = target - p;
        if delta == 0.0 {
            continue;
        }
        state.gen_p_mw[g] = target;
        needed -= -delta * s;
        changes.push(SetpointChange { generator: g, branch: k, delta_mw: delta });
    }
    changes
}

/// Candidate ΔP = η(F̄ − F)/S for a single generator, unclamped.
pub fn redispatch_delta(flow: f64, limit: f64, sensitivity: f64, eta: f64) -> f64 {
    eta * (limit - flow) / sensitivity
}

#[derive(Debug, Clone, PartialEq)]
pub struct RedispatchReport {
    pub rounds: usize,
    pub changes: Vec<SetpointChange>,
    /// Branches still above their basis rating after the last round.
    pub remaining: Vec<usize>,
    /// Final AC solution (None when no action was taken).
    pub solution: Option<PowerFlowSolution>,
}

/// Branches whose flow exceeds the basis rating, ordered by F/F̄⁰ descending.
pub fn redispatch_triggers(net: &Network, state: &SystemState, sol: &PowerFlowSolution, basis: &[f64]) -> Vec<usize> {
    let mut over: Vec<(usize, f64)> = (0..net.branches.len())
        .filter(|&k| state.branch_in_service[k] && sol.apparent_flow(k) > basis[k])
        .map(|k| (k, sol.apparent_flow(k) / net.branches[k].rating_mva))
        .collect();
    over.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    over.into_iter().map(|(k, _)| k).collect()
}

/// Sum of flow above the basis rating over in-service branches, MVA.
pub fn total_overload(net: &Network, state: &SystemState, sol: &PowerFlowSolution, basis: &[f64]) -> f64 {
    (0..net.branches.len())
        .filter(|&k| state.branch_in_service[k])
        .map(|k| (sol.apparent_flow(k) - basis[k]).max(0.0))
        .sum()
}

/// Runs re-dispatch rounds until no branch exceeds its basis rating or
/// `max_rounds` is reached. Within a round, later branches see the flow
/// already shifted by earlier ones through the shift factors. A round is
/// kept only when the AC re-solve converges with less total overload;
/// otherwise its setpoints are restored and the re-dispatch stops.
pub fn redispatch(
    net: &Network,
    state: &mut SystemState,
    sol: &PowerFlowSolution,
    basis: &[f64],
    params: &RedispatchParams,
    pf: &PfOptions,
) -> RedispatchReport {
    let mut report = RedispatchReport { rounds: 0, changes: Vec::new(), remaining: Vec::new(), solution: None };
    let mut triggers = redispatch_triggers(net, state, sol, basis);
    if triggers.is_empty() {
        return report;
    }
    let table = ShiftFactorTable::new(net, state);
    let mut current = sol.clone();
    let mut overload = total_overload(net, state, &current, basis);
    while !triggers.is_empty() && report.rounds < params.max_rounds {
        report.rounds += 1;
        let saved = state.gen_p_mw.clone();
        let mut shifted = vec![0.0; net.buses.len()];
        let mut round = Vec::new();
        for &k in &triggers {
            let row = table.row(net, k);
            if row.is_empty() {
                continue;
            }
            let p_now = current.flows[k].s_from.re;
            let p_est = p_now + row.iter().zip(&shifted).map(|(s, d)| s * d).sum::<f64>();
            let f_now = current.apparent_flow(k);
            let flow = ((f_now * f_now - p_now * p_now).max(0.0) + p_est * p_est).sqrt();
            let direction = if p_est >= 0.0 { 1.0 } else { -1.0 };
            for c in correct_branch(net, state, &row, k, flow, basis[k], direction, params.eta) {
                shifted[net.gen_bus(c.generator)] += c.delta_mw;
                round.push(c);
            }
        }
        if round.is_empty() {
            log::warn!("re-dispatch found no controllable generation");
            break;
        }
        let next = powerflow::solve(net, state, pf);
        let after = if next.converged() { total_overload(net, state, &next, basis) } else { f64::INFINITY };
        if after >= overload {
            log::debug!("re-dispatch round {} rejected", report.rounds);
            state.gen_p_mw = saved;
            break;
        }
        overload = after;
        current = next;
        report.changes.extend(round);
        triggers = redispatch_triggers(net, state, &current, basis);
    }
    report.remaining = triggers;
    report.solution = Some(current);
    report
}

/// Takes every auto-disconnecting shunt on branch `k` out of service.
/// Returns the shunt indices that changed state.
pub fn disconnect_coupled_shunts(net: &Network, state: &mut SystemState, k: usize) -> Vec<usize> {
    let mut switched = Vec::new();
    for (s, sh) in net.shunts.iter().enumerate() {
        if sh.auto_disconnect && net.shunt_branch(s) == Some(k) && state.shunt_in_service[s] {
            state.shunt_in_service[s] = false;
            switched.push(s);
        }
    }
    switched
}
