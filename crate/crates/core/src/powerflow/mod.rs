//! Full AC power flow (Newton–Raphson, polar form) solved per energized island,
//! plus branch flows and the reduced-Jacobian stability index.

mod vsi;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::grid::{find_islands, Network, SystemState};

pub use vsi::{compute_vsi, reduced_jacobian, vsi_from_matrix};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PfOptions {
    /// Convergence threshold on the largest mismatch, pu.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions { tolerance: 1e-8, max_iterations: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusType {
    Pq,
    Pv,
    Slack,
}

/// Complex power entering the branch at each end, MVA.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BranchFlow {
    pub s_from: Complex64,
    pub s_to: Complex64,
}

impl BranchFlow {
    /// Apparent power F = max(|S_from|, |S_to|).
    pub fn apparent_mva(&self) -> f64 {
        self.s_from.norm().max(self.s_to.norm())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IslandSolution {
    pub buses: Vec<usize>,
    pub energized: bool,
    pub slack_gen: Option<usize>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest |ΔP|, |ΔQ| at exit, pu.
    pub mismatch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub bus_type: Vec<BusType>,
    pub gen_p_mw: Vec<f64>,
    pub gen_q_mvar: Vec<f64>,
    pub flows: Vec<BranchFlow>,
    pub islands: Vec<IslandSolution>,
}

impl PowerFlowSolution {
    /// True when every energized island converged.
    pub fn converged(&self) -> bool {
        self.islands.iter().filter(|i| i.energized).all(|i| i.converged)
    }

    pub fn max_mismatch(&self) -> f64 {
        self.islands.iter().filter(|i| i.energized).map(|i| i.mismatch).fold(0.0, f64::max)
    }

    /// Index into `islands` of the energized island with most buses.
    pub fn largest_island(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, isl) in self.islands.iter().enumerate() {
            if isl.energized && best.is_none_or(|b| isl.buses.len() > self.islands[b].buses.len()) {
                best = Some(i);
            }
        }
        best
    }

    pub fn apparent_flow(&self, k: usize) -> f64 {
        self.flows[k].apparent_mva()
    }
}

/// F / F̄.
pub fn branch_loading_ratio(flow_mva: f64, rating_mva: f64) -> f64 {
    if rating_mva <= 0.0 {
        f64::INFINITY
    } else {
        flow_mva / rating_mva
    }
}

/// Bus admittance matrix restricted to an island, as separate G and B.
pub(crate) struct IslandModel {
    pub buses: Vec<usize>,
    pub local: Vec<usize>,
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub kind: Vec<BusType>,
    pub slack: usize,
    pub slack_gen: usize,
    pub v_set: Vec<f64>,
    pub p_spec: Vec<f64>,
    pub q_spec: Vec<f64>,
}

fn series_admittance(r: f64, x: f64) -> Complex64 {
    Complex64::new(r, x).inv()
}

/// Picks the slack unit: the designated one, else the largest reserve.
pub(crate) fn island_slack(net: &Network, state: &SystemState, in_island: &[bool]) -> Option<usize> {
    let units = (0..net.generators.len()).filter(|&g| state.gen_in_service[g] && in_island[net.gen_bus(g)]);
    let mut best: Option<(usize, f64)> = None;
    for g in units {
        if state.gen_slack[g] {
            return Some(g);
        }
        let reserve = net.generators[g].p_max_mw - state.gen_p_mw[g];
        if best.is_none_or(|(_, r)| reserve > r) {
            best = Some((g, reserve));
        }
    }
    best.map(|(g, _)| g)
}

impl IslandModel {
    pub fn build(net: &Network, state: &SystemState, buses: &[usize]) -> Option<Self> {
        let n = buses.len();
        let mut local = vec![usize::MAX; net.buses.len()];
        for (l, &i) in buses.iter().enumerate() {
            local[i] = l;
        }
        let in_island: Vec<bool> = local.iter().map(|&l| l != usize::MAX).collect();
        let slack_gen = island_slack(net, state, &in_island)?;
        let base = net.base_mva;

        let mut g = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, n);
        for (k, br) in net.branches.iter().enumerate() {
            if !state.branch_in_service[k] {
                continue;
            }
            let (f, t) = net.branch_ends(k);
            if !in_island[f] {
                continue;
            }
            let (lf, lt) = (local[f], local[t]);
            let y = series_admittance(br.r_pu, br.x_pu);
            let half = br.b_pu / 2.0;
            g[(lf, lf)] += y.re;
            g[(lt, lt)] += y.re;
            b[(lf, lf)] += y.im + half;
            b[(lt, lt)] += y.im + half;
            g[(lf, lt)] -= y.re;
            g[(lt, lf)] -= y.re;
            b[(lf, lt)] -= y.im;
            b[(lt, lf)] -= y.im;
        }
        for (s, sh) in net.shunts.iter().enumerate() {
            if !state.shunt_in_service[s] {
                continue;
            }
            if let Some(k) = net.shunt_branch(s) {
                if !state.branch_in_service[k] {
                    continue;
                }
            }
            let i = net.shunt_bus(s);
            if in_island[i] {
                b[(local[i], local[i])] += sh.q_mvar / base;
            }
        }

        let mut kind = vec![BusType::Pq; n];
        let mut v_set = vec![f64::NAN; n];
        let mut p_spec: Vec<f64> = buses.iter().map(|&i| -state.p_load_mw[i] / base).collect();
        let q_spec: Vec<f64> = buses.iter().map(|&i| -state.q_load_mvar[i] / base).collect();
        for (gi, gen) in net.generators.iter().enumerate() {
            let i = net.gen_bus(gi);
            if !state.gen_in_service[gi] || !in_island[i] {
                continue;
            }
            let l = local[i];
            p_spec[l] += state.gen_p_mw[gi] / base;
            if kind[l] == BusType::Pq {
                kind[l] = BusType::Pv;
                v_set[l] = gen.v_pu;
            }
        }
        let slack = local[net.gen_bus(slack_gen)];
        kind[slack] = BusType::Slack;
        v_set[slack] = net.generators[slack_gen].v_pu;

        Some(IslandModel { buses: buses.to_vec(), local, g, b, kind, slack, slack_gen, v_set, p_spec, q_spec })
    }

    pub fn len(&self) -> usize {
        self.buses.len()
    }

    /// Injected P and Q (pu) at every island bus.
    pub fn injections(&self, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            let (mut pi, mut qi) = (0.0, 0.0);
            for j in 0..n {
                let (gij, bij) = (self.g[(i, j)], self.b[(i, j)]);
                if gij == 0.0 && bij == 0.0 {
                    continue;
                }
                let (s, c) = (va[i] - va[j]).sin_cos();
                pi += vm[j] * (gij * c + bij * s);
                qi += vm[j] * (gij * s - bij * c);
            }
            p[i] = vm[i] * pi;
            q[i] = vm[i] * qi;
        }
        (p, q)
    }

    /// Indices of the angle unknowns (non-slack) and magnitude unknowns (PQ).
    pub fn unknowns(&self) -> (Vec<usize>, Vec<usize>) {
        let ang = (0..self.len()).filter(|&i| self.kind[i] != BusType::Slack).collect();
        let mag = (0..self.len()).filter(|&i| self.kind[i] == BusType::Pq).collect();
        (ang, mag)
    }

    /// Jacobian blocks (∂P/∂θ, ∂P/∂V, ∂Q/∂θ, ∂Q/∂V) for the given row and
    /// column selections.
    #[allow(clippy::too_many_arguments)]
    pub fn jacobian_blocks(
        &self,
        vm: &[f64],
        va: &[f64],
        p: &[f64],
        q: &[f64],
        ang: &[usize],
        mag: &[usize],
    ) -> [DMatrix<f64>; 4] {
        let (na, nm) = (ang.len(), mag.len());
        let mut pt = DMatrix::zeros(na, na);
        let mut pv = DMatrix::zeros(na, nm);
        let mut qt = DMatrix::zeros(nm, na);
        let mut qv = DMatrix::zeros(nm, nm);
        let mut pos_a = vec![usize::MAX; self.len()];
        let mut pos_m = vec![usize::MAX; self.len()];
        for (r, &i) in ang.iter().enumerate() {
            pos_a[i] = r;
        }
        for (r, &i) in mag.iter().enumerate() {
            pos_m[i] = r;
        }
        for i in 0..self.len() {
            let (ra, rm) = (pos_a[i], pos_m[i]);
            if ra == usize::MAX && rm == usize::MAX {
                continue;
            }
            for j in 0..self.len() {
                let (gij, bij) = (self.g[(i, j)], self.b[(i, j)]);
                if gij == 0.0 && bij == 0.0 {
                    continue;
                }
                let (ca, cm) = (pos_a[j], pos_m[j]);
                let (dpdt, dpdv, dqdt, dqdv) = if i == j {
                    (
                        -q[i] - bij * vm[i] * vm[i],
                        p[i] / vm[i] + gij * vm[i],
                        p[i] - gij * vm[i] * vm[i],
                        q[i] / vm[i] - bij * vm[i],
                    )
                } else {
                    let (s, c) = (va[i] - va[j]).sin_cos();
                    let a = gij * s - bij * c;
                    let d = gij * c + bij * s;
                    (vm[i] * vm[j] * a, vm[i] * d, -vm[i] * vm[j] * d, vm[i] * a)
                };
                if ra != usize::MAX {
                    if ca != usize::MAX {
                        pt[(ra, ca)] = dpdt;
                    }
                    if cm != usize::MAX {
                        pv[(ra, cm)] = dpdv;
                    }
                }
                if rm != usize::MAX {
                    if ca != usize::MAX {
                        qt[(rm, ca)] = dqdt;
                    }
                    if cm != usize::MAX {
                        qv[(rm, cm)] = dqdv;
                    }
                }
            }
        }
        [pt, pv, qt, qv]
    }

    /// Newton–Raphson from the given start. Returns (converged, iterations, mismatch).
    pub fn newton(&self, vm: &mut [f64], va: &mut [f64], opts: &PfOptions) -> (bool, usize, f64) {
        let (ang, mag) = self.unknowns();
        let (na, nm) = (ang.len(), mag.len());
        let mut iterations = 0;
        loop {
            let (p, q) = self.injections(vm, va);
            let mut f = DVector::zeros(na + nm);
            for (r, &i) in ang.iter().enumerate() {
                f[r] = self.p_spec[i] - p[i];
            }
            for (r, &i) in mag.iter().enumerate() {
                f[na + r] = self.q_spec[i] - q[i];
            }
            let mismatch = f.amax();
            if !mismatch.is_finite() {
                return (false, iterations, mismatch);
            }
            if mismatch < opts.tolerance {
                return (true, iterations, mismatch);
            }
            if iterations >= opts.max_iterations {
                return (false, iterations, mismatch);
            }
            let [pt, pv, qt, qv] = self.jacobian_blocks(vm, va, &p, &q, &ang, &mag);
            let mut j = DMatrix::zeros(na + nm, na + nm);
            j.view_mut((0, 0), (na, na)).copy_from(&pt);
            j.view_mut((0, na), (na, nm)).copy_from(&pv);
            j.view_mut((na, 0), (nm, na)).copy_from(&qt);
            j.view_mut((na, na), (nm, nm)).copy_from(&qv);
            let dx = match j.lu().solve(&f) {
                Some(dx) => dx,
                None => return (false, iterations, mismatch),
            };
            // backtrack while the step makes the mismatch worse
            let (vm0, va0) = (vm.to_vec(), va.to_vec());
            let norm0 = f.norm();
            let mut step = 1.0;
            for _ in 0..6 {
                for (r, &i) in ang.iter().enumerate() {
                    va[i] = va0[i] + step * dx[r];
                }
                for (r, &i) in mag.iter().enumerate() {
                    vm[i] = vm0[i] + step * dx[na + r];
                }
                if self.mismatch_norm(vm, va, &ang, &mag) < norm0 {
                    break;
                }
                step *= 0.5;
            }
            iterations += 1;
            if vm.iter().any(|&v| !(v > 0.0) || v > 3.0) {
                let (p, q) = self.injections(vm, va);
                let bad = p.iter().chain(&q).fold(0.0f64, |m, x| m.max(x.abs()));
                return (false, iterations, if bad.is_finite() { bad } else { f64::INFINITY });
            }
        }
    }

    fn mismatch_norm(&self, vm: &[f64], va: &[f64], ang: &[usize], mag: &[usize]) -> f64 {
        if vm.iter().any(|&v| !(v > 0.0)) {
            return f64::INFINITY;
        }
        let (p, q) = self.injections(vm, va);
        let sp = ang.iter().map(|&i| (self.p_spec[i] - p[i]).powi(2)).sum::<f64>();
        let sq = mag.iter().map(|&i| (self.q_spec[i] - q[i]).powi(2)).sum::<f64>();
        let n = (sp + sq).sqrt();
        if n.is_finite() { n } else { f64::INFINITY }
    }

    fn start(&self, state: &SystemState, warm: bool) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let mut vm = vec![1.0; n];
        let mut va = vec![0.0; n];
        if warm {
            let ref_angle = state.va[self.buses[self.slack]];
            for (l, &i) in self.buses.iter().enumerate() {
                if state.vm[i] > 0.5 && state.vm[i] < 1.5 && state.va[i].is_finite() {
                    vm[l] = state.vm[i];
                    va[l] = state.va[i] - ref_angle;
                }
            }
        }
        for l in 0..n {
            if self.kind[l] != BusType::Pq {
                vm[l] = self.v_set[l];
            }
        }
        (vm, va)
    }
}

/// Solves every island of the present topology. Dead islands get zero
/// voltage; their branches carry no flow.
pub fn solve(net: &Network, state: &SystemState, opts: &PfOptions) -> PowerFlowSolution {
    let nb = net.buses.len();
    let mut sol = PowerFlowSolution {
        vm: vec![0.0; nb],
        va: vec![0.0; nb],
        bus_type: vec![BusType::Pq; nb],
        gen_p_mw: vec![0.0; net.generators.len()],
        gen_q_mvar: vec![0.0; net.generators.len()],
        flows: vec![BranchFlow::default(); net.branches.len()],
        islands: Vec::new(),
    };
    for island in find_islands(net, &state.branch_in_service, &state.gen_in_service) {
        let model = if island.energized { IslandModel::build(net, state, &island.buses) } else { None };
        let Some(model) = model else {
            sol.islands.push(IslandSolution {
                buses: island.buses,
                energized: false,
                slack_gen: None,
                converged: false,
                iterations: 0,
                mismatch: 0.0,
            });
            continue;
        };
        let (mut vm, mut va) = model.start(state, true);
        let (mut converged, mut iterations, mut mismatch) = model.newton(&mut vm, &mut va, opts);
        if !converged {
            let (mut vm2, mut va2) = model.start(state, false);
            let (c2, it2, m2) = model.newton(&mut vm2, &mut va2, opts);
            if c2 {
                (vm, va, converged, mismatch) = (vm2, va2, c2, m2);
            }
            iterations += it2;
        }
        for (l, &i) in model.buses.iter().enumerate() {
            sol.vm[i] = vm[l];
            sol.va[i] = va[l];
            sol.bus_type[i] = model.kind[l];
        }
        if converged {
            fill_injections(net, state, &model, &vm, &va, &mut sol);
        }
        sol.islands.push(IslandSolution {
            buses: model.buses.clone(),
            energized: true,
            slack_gen: Some(model.slack_gen),
            converged,
            iterations,
            mismatch,
        });
    }
    for k in 0..net.branches.len() {
        if !state.branch_in_service[k] {
            continue;
        }
        let (f, t) = net.branch_ends(k);
        if sol.vm[f] == 0.0 || sol.vm[t] == 0.0 {
            continue;
        }
        sol.flows[k] = branch_flow(net, k, sol.vm[f], sol.va[f], sol.vm[t], sol.va[t]);
    }
    // reactors switched with a branch are metered as part of that branch
    for (s, sh) in net.shunts.iter().enumerate() {
        let Some(k) = net.shunt_branch(s) else { continue };
        if !state.shunt_in_service[s] || !state.branch_in_service[k] {
            continue;
        }
        let i = net.shunt_bus(s);
        let absorbed = Complex64::new(0.0, -sh.q_mvar * sol.vm[i] * sol.vm[i]);
        if i == net.branch_ends(k).0 {
            sol.flows[k].s_from += absorbed;
        } else {
            sol.flows[k].s_to += absorbed;
        }
    }
    sol
}

/// π-model end flows of branch `k` for the given terminal voltages, MVA.
pub fn branch_flow(net: &Network, k: usize, vm_f: f64, va_f: f64, vm_t: f64, va_t: f64) -> BranchFlow {
    let br = &net.branches[k];
    let y = series_admittance(br.r_pu, br.x_pu);
    let ysh = Complex64::new(0.0, br.b_pu / 2.0);
    let vf = Complex64::from_polar(vm_f, va_f);
    let vt = Complex64::from_polar(vm_t, va_t);
    let i_f = (y + ysh) * vf - y * vt;
    let i_t = (y + ysh) * vt - y * vf;
    BranchFlow { s_from: vf * i_f.conj() * net.base_mva, s_to: vt * i_t.conj() * net.base_mva }
}

/// Generator P for the slack unit and Q for every regulating unit. Units at
/// one bus sit at the same fraction of their reactive range.
fn fill_injections(
    net: &Network,
    state: &SystemState,
    model: &IslandModel,
    vm: &[f64],
    va: &[f64],
    sol: &mut PowerFlowSolution,
) {
    let base = net.base_mva;
    let (p, q) = model.injections(vm, va);
    let mut units_at: Vec<Vec<usize>> = vec![Vec::new(); model.len()];
    for g in 0..net.generators.len() {
        let i = net.gen_bus(g);
        if state.gen_in_service[g] && model.local[i] != usize::MAX {
            units_at[model.local[i]].push(g);
            sol.gen_p_mw[g] = state.gen_p_mw[g];
        }
    }
    for (l, units) in units_at.iter().enumerate() {
        if units.is_empty() {
            continue;
        }
        let i = model.buses[l];
        if l == model.slack {
            let others: f64 = units.iter().filter(|&&g| g != model.slack_gen).map(|&g| state.gen_p_mw[g]).sum();
            sol.gen_p_mw[model.slack_gen] = p[l] * base + state.p_load_mw[i] - others;
        }
        let q_total = q[l] * base + state.q_load_mvar[i];
        let ranges: Vec<f64> = units
            .iter()
            .map(|&g| (net.generators[g].q_max_mvar - net.generators[g].q_min_mvar).max(0.0))
            .collect();
        let span: f64 = ranges.iter().sum();
        let floor: f64 = units.iter().map(|&g| net.generators[g].q_min_mvar).sum();
        for (u, &g) in units.iter().enumerate() {
            sol.gen_q_mvar[g] = if span > 0.0 {
                net.generators[g].q_min_mvar + (q_total - floor) * ranges[u] / span
            } else {
                q_total / units.len() as f64
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tests::two_bus_json;

    #[test]
    fn two_bus_closed_form() {
        let (p, x) = (50.0, 0.1);
        let net = Network::from_json(&two_bus_json(p, x)).unwrap();
        let s = SystemState::base(&net);
        let sol = solve(&net, &s, &PfOptions::default());
        assert!(sol.converged());
        // lossless, unity pf: V⁴ − V² + (P·X)² = 0, sin θ = −P·X/V
        let px: f64 = p / 100.0 * x;
        let v = ((1.0 + (1.0 - 4.0 * px * px).sqrt()) / 2.0).sqrt();
        assert!((sol.vm[1] - v).abs() < 1e-8);
        assert!((sol.va[1] - (-px / v).asin()).abs() < 1e-8);
        assert!((sol.gen_p_mw[0] - p).abs() < 1e-6);
    }

    #[test]
    fn rts96_base_converges() {
        let net = Network::rts96();
        let s = SystemState::base(&net);
        let sol = solve(&net, &s, &PfOptions::default());
        assert!(sol.converged());
        assert!(sol.max_mismatch() < 1e-8);
        let gen: f64 = sol.gen_p_mw.iter().sum();
        assert!(gen > 8550.0 && gen < 8550.0 * 1.05, "{gen}");
    }

    #[test]
    fn dead_island_has_no_flow() {
        let net = Network::from_json(&two_bus_json(50.0, 0.1)).unwrap();
        let mut s = SystemState::base(&net);
        s.branch_in_service[0] = false;
        let sol = solve(&net, &s, &PfOptions::default());
        assert!(sol.converged());
        assert_eq!(sol.vm[1], 0.0);
        assert_eq!(sol.apparent_flow(0), 0.0);
    }

    #[test]
    fn loading_ratio() {
        assert_eq!(branch_loading_ratio(150.0, 100.0), 1.5);
        assert!(branch_loading_ratio(1.0, 0.0).is_infinite());
    }
}
