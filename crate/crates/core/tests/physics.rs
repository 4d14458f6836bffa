use heatcascade::engine::BaseCase;
use heatcascade::geo::{build_area, Area};
use heatcascade::powerflow::{self, compute_vsi, reduced_jacobian, BusType, PfOptions, PowerFlowSolution};
use heatcascade::weather::{
    apply_load_change, dynamic_rating, redistribute_generation, Direction, LineRating, LoadCurve, TemperatureField,
    T_MIN, T_REF_HIGH, T_REF_LOW,
};
use heatcascade::{Network, SystemState};
use num_complex::Complex64;
use proptest::prelude::*;

/// Bus admittance matrix built straight from the case data.
fn ybus(net: &Network, state: &SystemState) -> Vec<Vec<Complex64>> {
    let n = net.buses.len();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for (k, br) in net.branches.iter().enumerate() {
        if !state.branch_in_service[k] {
            continue;
        }
        let (f, t) = net.branch_ends(k);
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r_pu, br.x_pu);
        let half = Complex64::new(0.0, br.b_pu / 2.0);
        y[f][f] += ys + half;
        y[t][t] += ys + half;
        y[f][t] -= ys;
        y[t][f] -= ys;
    }
    for s in 0..net.shunts.len() {
        if state.shunt_in_service[s] {
            let i = net.shunt_bus(s);
            y[i][i] += Complex64::new(0.0, net.shunts[s].q_mvar / net.base_mva);
        }
    }
    y
}

fn injections(y: &[Vec<Complex64>], vm: &[f64], va: &[f64]) -> Vec<Complex64> {
    let v: Vec<Complex64> = vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
    (0..v.len()).map(|i| v[i] * (0..v.len()).map(|j| y[i][j] * v[j]).sum::<Complex64>().conj()).collect()
}

fn five_bus() -> Network {
    Network::from_json(
        r#"{"base_mva":100,
        "buses":[{"id":1,"kind":"slack","base_kv":138,"lat":35.0,"lon":-95.0,"p_mw":0,"q_mvar":0},
                 {"id":2,"kind":"generator","base_kv":138,"lat":35.2,"lon":-94.8,"p_mw":20,"q_mvar":5},
                 {"id":3,"kind":"load","base_kv":138,"lat":35.1,"lon":-94.5,"p_mw":60,"q_mvar":20},
                 {"id":4,"kind":"load","base_kv":138,"lat":34.9,"lon":-94.6,"p_mw":45,"q_mvar":15},
                 {"id":5,"kind":"load","base_kv":138,"lat":34.8,"lon":-94.9,"p_mw":30,"q_mvar":10}],
        "branches":[{"id":1,"from":1,"to":2,"r_pu":0.01,"x_pu":0.08,"b_pu":0.02,"rating_mva":175,"rated_kv":138},
                    {"id":2,"from":2,"to":3,"r_pu":0.02,"x_pu":0.10,"b_pu":0.02,"rating_mva":175,"rated_kv":138},
                    {"id":3,"from":3,"to":4,"r_pu":0.015,"x_pu":0.09,"b_pu":0.01,"rating_mva":175,"rated_kv":138},
                    {"id":4,"from":4,"to":5,"r_pu":0.02,"x_pu":0.12,"b_pu":0.01,"rating_mva":175,"rated_kv":138},
                    {"id":5,"from":5,"to":1,"r_pu":0.01,"x_pu":0.07,"b_pu":0.02,"rating_mva":175,"rated_kv":138},
                    {"id":6,"from":2,"to":4,"r_pu":0.03,"x_pu":0.15,"b_pu":0.0,"rating_mva":175,"rated_kv":138}],
        "generators":[{"id":1,"bus":1,"p_mw":0,"p_max_mw":300,"q_min_mvar":-100,"q_max_mvar":200,"v_pu":1.02,"slack":true},
                      {"id":2,"bus":2,"p_mw":80,"p_max_mw":150,"q_min_mvar":-50,"q_max_mvar":80,"v_pu":1.01}],
        "shunts":[{"id":1,"attach_bus":4,"q_mvar":10,"auto_disconnect":false}]}"#,
    )
    .unwrap()
}

fn two_bus() -> Network {
    Network::from_json(
        r#"{"base_mva":100,
        "buses":[{"id":1,"kind":"slack","base_kv":138,"lat":35.0,"lon":-95.0,"p_mw":0,"q_mvar":0},
                 {"id":2,"kind":"load","base_kv":138,"lat":35.0,"lon":-94.5,"p_mw":90,"q_mvar":30}],
        "branches":[{"id":1,"from":1,"to":2,"r_pu":0.01,"x_pu":0.1,"b_pu":0,"rating_mva":175,"rated_kv":138}],
        "generators":[{"id":1,"bus":1,"p_mw":0,"p_max_mw":500,"q_min_mvar":-300,"q_max_mvar":300,"v_pu":1.0,"slack":true}],
        "shunts":[]}"#,
    )
    .unwrap()
}

/// Largest per-bus complex power mismatch (pu) recomputed from the solution.
fn balance_error(net: &Network, state: &SystemState, sol: &PowerFlowSolution) -> f64 {
    let s = injections(&ybus(net, state), &sol.vm, &sol.va);
    let mut net_inj: Vec<Complex64> = (0..net.buses.len())
        .map(|i| Complex64::new(-state.p_load_mw[i], -state.q_load_mvar[i]) / net.base_mva)
        .collect();
    for g in 0..net.generators.len() {
        if state.gen_in_service[g] {
            net_inj[net.gen_bus(g)] += Complex64::new(sol.gen_p_mw[g], sol.gen_q_mvar[g]) / net.base_mva;
        }
    }
    (0..s.len()).map(|i| (s[i] - net_inj[i]).norm()).fold(0.0, f64::max)
}

#[test]
fn converged_solutions_balance_every_bus() {
    for net in [Network::rts96(), five_bus(), two_bus()] {
        let s = SystemState::base(&net);
        let sol = powerflow::solve(&net, &s, &PfOptions::default());
        assert!(sol.converged());
        assert!(balance_error(&net, &s, &sol) < 1e-8);
    }
}

#[test]
fn base_voltages_stay_in_band() {
    let net = Network::rts96();
    let s = SystemState::base(&net);
    let sol = powerflow::solve(&net, &s, &PfOptions::default());
    assert!(sol.vm.iter().all(|v| (0.94..=1.06).contains(v)));
}

/// Central difference of the Q(V) map at PQ buses with net P held fixed at
/// every non-slack bus by re-solving the angles.
fn reduced_jacobian_by_differences(net: &Network, state: &SystemState, sol: &PowerFlowSolution) -> Vec<Vec<f64>> {
    let y = ybus(net, state);
    let slack = net.slack_bus();
    let ang: Vec<usize> = (0..net.buses.len()).filter(|&i| i != slack).collect();
    let pq: Vec<usize> = (0..net.buses.len()).filter(|&i| sol.bus_type[i] == BusType::Pq).collect();
    let p_target: Vec<f64> = injections(&y, &sol.vm, &sol.va).iter().map(|s| s.re).collect();
    let q_at = |vm: &[f64]| -> Vec<f64> {
        let mut va = sol.va.clone();
        for _ in 0..50 {
            let p: Vec<f64> = injections(&y, vm, &va).iter().map(|s| s.re).collect();
            let r: Vec<f64> = ang.iter().map(|&i| p[i] - p_target[i]).collect();
            if r.iter().all(|x| x.abs() < 1e-14) {
                break;
            }
            let h = 1e-7;
            let jac = nalgebra::DMatrix::from_fn(ang.len(), ang.len(), |a, b| {
                let mut up = va.clone();
                let mut dn = va.clone();
                up[ang[b]] += h;
                dn[ang[b]] -= h;
                let pu = injections(&y, vm, &up)[ang[a]].re;
                let pd = injections(&y, vm, &dn)[ang[a]].re;
                (pu - pd) / (2.0 * h)
            });
            let step = jac.lu().solve(&nalgebra::DVector::from_vec(r)).unwrap();
            for (a, &i) in ang.iter().enumerate() {
                va[i] -= step[a];
            }
        }
        let s = injections(&y, vm, &va);
        pq.iter().map(|&i| s[i].im).collect()
    };
    let h = 1e-5;
    let mut cols = Vec::new();
    for &j in &pq {
        let mut up = sol.vm.clone();
        let mut dn = sol.vm.clone();
        up[j] += h;
        dn[j] -= h;
        let (qu, qd) = (q_at(&up), q_at(&dn));
        cols.push(qu.iter().zip(&qd).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>());
    }
    cols
}

#[test]
fn reduced_jacobian_matches_finite_differences() {
    for net in [two_bus(), five_bus()] {
        let s = SystemState::base(&net);
        let sol = powerflow::solve(&net, &s, &PfOptions::default());
        let (_, jr) = reduced_jacobian(&net, &s, &sol).unwrap();
        let fd = reduced_jacobian_by_differences(&net, &s, &sol);
        for (c, col) in fd.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                let scale = jr[(r, c)].abs().max(1.0);
                assert!((jr[(r, c)] - v).abs() / scale < 1e-4, "({r},{c}) {} vs {v}", jr[(r, c)]);
            }
        }
    }
}

#[test]
fn vsi_ignores_bus_order() {
    let net = Network::rts96();
    let mut doc = net.to_document();
    doc.buses.reverse();
    doc.branches.reverse();
    let shuffled = Network::from_json(&serde_json::to_string(&doc).unwrap()).unwrap();
    let vsi = |n: &Network| {
        let s = SystemState::base(n);
        let sol = powerflow::solve(n, &s, &PfOptions::default());
        compute_vsi(n, &s, &sol)
    };
    assert!((vsi(&net) - vsi(&shuffled)).abs() < 1e-8);
}

#[test]
fn base_reduced_jacobian_has_positive_inverse_diagonal() {
    let base = BaseCase::rts96();
    let (_, jr) = reduced_jacobian(&base.net, &base.state, &base.solution).unwrap();
    let inv = jr.try_inverse().unwrap();
    assert!((0..inv.nrows()).all(|i| inv[(i, i)] > 0.0));
}

/// Single-line removals that raise the index are reported, not asserted.
#[test]
fn single_line_removals_rarely_strengthen_the_grid() {
    let base = BaseCase::rts96();
    let mut raised = Vec::new();
    for k in 0..base.net.branches.len() {
        let mut s = base.state.clone();
        s.branch_in_service[k] = false;
        let sol = powerflow::solve(&base.net, &s, &PfOptions::default());
        if !sol.converged() {
            continue;
        }
        let v = compute_vsi(&base.net, &s, &sol);
        if v > base.vsi + 1e-9 {
            raised.push((base.net.branch_label(k), v));
        }
    }
    println!("single-line removals raising the index: {raised:?}");
    assert!(raised.len() < base.net.branches.len() / 4);
}

#[test]
fn curve_anchors_and_stationary_point() {
    let c = LoadCurve::default();
    assert!((c.eval(T_REF_HIGH) - 1.0).abs() < 1e-12);
    assert!((c.eval(T_REF_LOW) - 1.0).abs() < 1e-12);
    assert!(c.derivative(T_MIN).abs() < 1e-9);
    assert!(c.eval(T_MIN) < 1.0);
}

fn rts_field(center: u32, gamma: f64, dt: f64, dir: Direction) -> (Network, TemperatureField) {
    let net = Network::rts96();
    let c = net.buses[net.bus_idx(center).unwrap()].point();
    let area = build_area(c, gamma, &net).unwrap();
    let field = TemperatureField::new(dir, area, dt).unwrap();
    (net, field)
}

#[test]
fn cooling_raises_load_and_rating_together() {
    let (net, field) = rts_field(308, 0.07, -5.0, Direction::Cool);
    let mut s = SystemState::base(&net);
    let change = apply_load_change(&net, &mut s, &field, &LoadCurve::default(), 0.001);
    assert!(change.delta_p_mw > 0.0);
    let br = &net.branches[0];
    let r = LineRating::anchored(br, T_REF_LOW, 1.0);
    assert!(r.at(T_REF_LOW - 5.0, 1.0, 1.0) > br.rating_mva);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn load_curve_is_continuous(t in -10.0f64..45.0) {
        let c = LoadCurve::default();
        prop_assert!((c.eval(t + 1e-9) - c.eval(t)).abs() < 1e-6);
    }

    #[test]
    fn zero_delta_leaves_loads_alone(center in 0usize..51, gamma in 0.01f64..0.5) {
        let net = Network::rts96();
        let id = net.buses[net.load_buses()[center]].id;
        let c = net.buses[net.bus_idx(id).unwrap()].point();
        let field = TemperatureField::new(Direction::Heat, build_area(c, gamma, &net).unwrap(), 0.0).unwrap();
        let mut s = SystemState::base(&net);
        let before = s.clone();
        apply_load_change(&net, &mut s, &field, &LoadCurve::default(), 0.001);
        prop_assert_eq!(s, before);
    }

    #[test]
    fn rating_falls_with_temperature_and_scales_linearly(
        t in -20.0f64..60.0,
        dt in 0.01f64..20.0,
        v in 0.8f64..1.1,
        alpha in 0.5f64..1.0,
    ) {
        let (kv, k, c) = (138.0, 0.02, 1.8);
        let r = |t: f64, v: f64, a: f64| dynamic_rating(kv, k, c, t, v, a);
        prop_assert!(r(t + dt, 1.0, 1.0) < r(t, 1.0, 1.0));
        prop_assert!((r(t, v, alpha) - v * alpha * r(t, 1.0, 1.0)).abs() < 1e-9);
    }

    #[test]
    fn pickup_conserves_the_change(delta in -800.0f64..800.0) {
        let net = Network::rts96();
        let mut s = SystemState::base(&net);
        let before: f64 = s.gen_p_mw.iter().sum();
        let r = redistribute_generation(&net, &mut s, delta);
        let after: f64 = s.gen_p_mw.iter().sum();
        prop_assert!((after - before - r.applied_mw).abs() < 1e-9);
        prop_assert!((r.applied_mw + r.residual_mw - delta).abs() < 1e-9);
        for (g, u) in net.generators.iter().enumerate() {
            prop_assert!(s.gen_p_mw[g] >= 0.0 && s.gen_p_mw[g] <= u.p_max_mw + 1e-9);
        }
    }

    #[test]
    fn heated_lines_never_gain_rating(center in 0usize..51, dt in 0.0f64..20.0) {
        let net = Network::rts96();
        let id = net.buses[net.load_buses()[center]].id;
        let (net, field) = rts_field(id, 0.07, dt, Direction::Heat);
        for (k, br) in net.branches.iter().enumerate() {
            let temp = heatcascade::weather::line_temperature(&net, k, &field);
            let r = LineRating::anchored(br, T_REF_HIGH, 1.0).at(temp, 1.0, 1.0);
            prop_assert!(r <= br.rating_mva + 1e-9);
        }
    }
}

#[test]
fn area_helper_is_inclusive() {
    let a = Area { lat_min: 0.0, lat_max: 1.0, lon_min: 0.0, lon_max: 1.0 };
    assert!(a.contains(heatcascade::geo::GeoPoint::new(1.0, 0.0)));
}
