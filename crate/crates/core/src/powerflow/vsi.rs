use nalgebra::DMatrix;

use super::{IslandModel, PowerFlowSolution};
use crate::grid::{Network, SystemState};

/// Reduced Jacobian J_R = J_QV − J_Qθ·J_Pθ⁻¹·J_PV of the largest energized
/// island, over its PQ buses. Returns the PQ bus indices alongside.
///
/// `None` when there is no converged island with PQ buses or J_Pθ is singular.
pub fn reduced_jacobian(net: &Network, state: &SystemState, sol: &PowerFlowSolution) -> Option<(Vec<usize>, DMatrix<f64>)> {
    let island = &sol.islands[sol.largest_island()?];
    if !island.converged {
        return None;
    }
    let model = IslandModel::build(net, state, &island.buses)?;
    let vm: Vec<f64> = model.buses.iter().map(|&i| sol.vm[i]).collect();
    let va: Vec<f64> = model.buses.iter().map(|&i| sol.va[i]).collect();
    let (p, q) = model.injections(&vm, &va);
    let (ang, mag) = model.unknowns();
    if mag.is_empty() {
        return None;
    }
    let [pt, pv, qt, qv] = model.jacobian_blocks(&vm, &va, &p, &q, &ang, &mag);
    let x = pt.lu().solve(&pv)?;
    let jr = qv - qt * x;
    Some((mag.iter().map(|&l| model.buses[l]).collect(), jr))
}

/// min_i 1/(A⁻¹)_ii; zero when `a` is singular.
pub fn vsi_from_matrix(a: &DMatrix<f64>) -> f64 {
    match a.clone().try_inverse() {
        Some(inv) => (0..a.nrows()).map(|i| 1.0 / inv[(i, i)]).fold(f64::INFINITY, f64::min),
        None => 0.0,
    }
}

/// Voltage stability index of the present operating point. Non-positive
/// values mean the operating point is at or past collapse.
pub fn compute_vsi(net: &Network, state: &SystemState, sol: &PowerFlowSolution) -> f64 {
    if !sol.converged() {
        return 0.0;
    }
    match reduced_jacobian(net, state, sol) {
        Some((_, jr)) => vsi_from_matrix(&jr),
        None => match sol.largest_island() {
            Some(_) => f64::INFINITY,
            None => 0.0,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tests::two_bus_json;
    use crate::powerflow::{solve, PfOptions};

    #[test]
    fn diagonal_matrix() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 5.0]));
        assert!((vsi_from_matrix(&a) - 2.0).abs() < 1e-12);
        assert_eq!(vsi_from_matrix(&DMatrix::zeros(2, 2)), 0.0);
    }

    #[test]
    fn two_bus_index_falls_with_load() {
        let mut last = f64::INFINITY;
        for p in [10.0, 100.0, 200.0, 300.0, 400.0] {
            let net = Network::from_json(&two_bus_json(p, 0.1)).unwrap();
            let s = SystemState::base(&net);
            let sol = solve(&net, &s, &PfOptions::default());
            let v = compute_vsi(&net, &s, &sol);
            assert!(v > 0.0 && v < last, "{p}: {v}");
            last = v;
        }
    }

    #[test]
    fn rts96_base_index_is_positive() {
        let net = Network::rts96();
        let s = SystemState::base(&net);
        let sol = solve(&net, &s, &PfOptions::default());
        assert!(compute_vsi(&net, &s, &sol) > 0.0);
    }
}
