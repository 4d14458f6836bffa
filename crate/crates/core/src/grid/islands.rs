use petgraph::unionfind::UnionFind;

use super::Network;

/// A connected component of the in-service topology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Island {
    /// Bus indices, ascending.
    pub buses: Vec<usize>,
    /// True when at least one in-service generator is connected.
    pub energized: bool,
}

/// Partitions buses into connected components over in-service branches.
///
/// Islands are ordered by their lowest bus index.
pub fn find_islands(net: &Network, branch_in_service: &[bool], gen_in_service: &[bool]) -> Vec<Island> {
    let n = net.buses.len();
    let mut uf = UnionFind::<usize>::new(n);
    for (k, &on) in branch_in_service.iter().enumerate() {
        if on {
            let (f, t) = net.branch_ends(k);
            uf.union(f, t);
        }
    }
    let labels = uf.into_labeling();
    let mut slot = vec![usize::MAX; n];
    let mut islands: Vec<Island> = Vec::new();
    for (bus, &root) in labels.iter().enumerate() {
        if slot[root] == usize::MAX {
            slot[root] = islands.len();
            islands.push(Island { buses: Vec::new(), energized: false });
        }
        islands[slot[root]].buses.push(bus);
    }
    for (g, &on) in gen_in_service.iter().enumerate() {
        if on {
            islands[slot[labels[net.gen_bus(g)]]].energized = true;
        }
    }
    islands
}
