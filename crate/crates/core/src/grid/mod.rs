//! Grid data model: buses, branches, generators, shunts and the mutable
//! per-run [`SystemState`].
//!
//! Case files carry physical units (MW, MVAr, kV) and per-unit impedances on
//! the system base. The [`Network`] keeps physical units; conversion to
//! per-unit happens through [`Network::base_mva`] where the solver needs it.

mod case;
mod islands;

use std::collections::HashMap;

pub use case::{BranchRecord, BusRecord, CaseDocument, GeneratorRecord, ShuntRecord};
pub use islands::{find_islands, Island};

use crate::error::CaseError;

/// Role of a bus in the case file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BusKind {
    Load,
    Generator,
    #[serde(alias = "slack-capable")]
    Slack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    pub base_kv: f64,
    pub lat: f64,
    pub lon: f64,
    /// Nominal active load P⁰ in MW.
    pub p_load_mw: f64,
    /// Nominal reactive load in MVAr.
    pub q_load_mvar: f64,
}

impl Bus {
    /// Nominal power factor of the bus load.
    ///
    /// A purely active load (or an empty bus) has unity power factor.
    pub fn pf_nominal(&self) -> f64 {
        let s = self.p_load_mw.hypot(self.q_load_mvar);
        if self.p_load_mw == 0.0 || s == 0.0 {
            1.0
        } else {
            self.p_load_mw.abs() / s
        }
    }

    pub fn is_load_bus(&self) -> bool {
        self.p_load_mw > 0.0
    }

    pub fn point(&self) -> crate::geo::GeoPoint {
        crate::geo::GeoPoint::new(self.lat, self.lon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: u32,
    pub name: Option<String>,
    pub from_bus: u32,
    pub to_bus: u32,
    pub r_pu: f64,
    pub x_pu: f64,
    pub b_pu: f64,
    /// Initial (static) rating F̄⁰ in MVA.
    pub rating_mva: f64,
    /// Nominal line voltage in kV.
    pub rated_kv: f64,
    /// Slope of the ampacity-temperature line in kA/°C.
    pub rating_slope_ka_per_c: f64,
    /// Lower bound of the vegetation de-rating factor.
    pub alpha_lower: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub id: u32,
    pub name: Option<String>,
    pub bus: u32,
    /// Dispatched active power (P⁰ for the base case) in MW.
    pub p_mw: f64,
    pub p_max_mw: f64,
    pub q_min_mvar: f64,
    pub q_max_mvar: f64,
    pub v_pu: f64,
    pub slack: bool,
}

impl Generator {
    pub fn reserve_mw(&self) -> f64 {
        self.p_max_mw - self.p_mw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchEnd {
    From,
    To,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShuntAttachment {
    Bus(u32),
    BranchEnd { branch: u32, end: BranchEnd },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shunt {
    pub id: u32,
    pub attachment: ShuntAttachment,
    /// Reactive injection at 1.0 pu; negative for reactors.
    pub q_mvar: f64,
    pub auto_disconnect: bool,
}

/// Immutable grid description. Cheap to share across simulation workers.
#[derive(Debug, Clone)]
pub struct Network {
    pub name: Option<String>,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub shunts: Vec<Shunt>,
    bus_index: HashMap<u32, usize>,
    branch_index: HashMap<u32, usize>,
    gen_index: HashMap<u32, usize>,
    branch_ends: Vec<(usize, usize)>,
    gen_bus: Vec<usize>,
    shunt_bus: Vec<usize>,
    shunt_branch: Vec<Option<usize>>,
    slack_gen: usize,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.base_mva == other.base_mva
            && self.buses == other.buses
            && self.branches == other.branches
            && self.generators == other.generators
            && self.shunts == other.shunts
    }
}

const RTS96: &str = include_str!("../../data/rts96.json");

impl Network {
    /// Reads and validates a JSON case file.
    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self, CaseError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CaseError> {
        let doc: CaseDocument = serde_json::from_str(text)?;
        doc.into_network()
    }

    /// The bundled RTS-96 three-area case.
    pub fn rts96() -> Self {
        Self::from_json(RTS96).expect("bundled RTS-96 case is valid")
    }

    pub fn to_document(&self) -> CaseDocument {
        CaseDocument::from_network(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("case serializes")
    }

    /// Builds the index tables and checks every structural invariant.
    pub(crate) fn assemble(
        name: Option<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        shunts: Vec<Shunt>,
    ) -> Result<Self, CaseError> {
        if !(base_mva > 0.0) {
            return Err(CaseError::invalid("case", 0, "base_mva must be positive"));
        }
        if buses.is_empty() {
            return Err(CaseError::invalid("case", 0, "no buses"));
        }
        let bus_index = unique_index("bus", buses.iter().map(|b| b.id))?;
        let branch_index = unique_index("branch", branches.iter().map(|b| b.id))?;
        let gen_index = unique_index("generator", generators.iter().map(|g| g.id))?;
        unique_index("shunt", shunts.iter().map(|s| s.id))?;

        for b in &buses {
            if !(-90.0..=90.0).contains(&b.lat) || !(-180.0..=180.0).contains(&b.lon) {
                return Err(CaseError::invalid("bus", b.id, "coordinates out of range"));
            }
            if !(b.base_kv > 0.0) {
                return Err(CaseError::invalid("bus", b.id, "base_kv must be positive"));
            }
            if !b.p_load_mw.is_finite() || !b.q_load_mvar.is_finite() || b.p_load_mw < 0.0 {
                return Err(CaseError::invalid("bus", b.id, "load must be finite and p_mw >= 0"));
            }
        }

        let lookup = |element: &'static str, id: u32, bus: u32| {
            bus_index
                .get(&bus)
                .copied()
                .ok_or(CaseError::DanglingReference { element, id, reference: bus })
        };

        let mut branch_ends = Vec::with_capacity(branches.len());
        for br in &branches {
            let f = lookup("branch", br.id, br.from_bus)?;
            let t = lookup("branch", br.id, br.to_bus)?;
            if f == t {
                return Err(CaseError::invalid("branch", br.id, "from and to bus are the same"));
            }
            if br.x_pu == 0.0 || !br.x_pu.is_finite() {
                return Err(CaseError::invalid("branch", br.id, "reactance must be nonzero"));
            }
            if !(br.rating_mva > 0.0) {
                return Err(CaseError::invalid("branch", br.id, "rating_mva must be positive"));
            }
            if !(br.rated_kv > 0.0) {
                return Err(CaseError::invalid("branch", br.id, "rated_kv must be positive"));
            }
            if !(br.rating_slope_ka_per_c > 0.0) {
                return Err(CaseError::invalid("branch", br.id, "rating slope must be positive"));
            }
            if !(br.alpha_lower > 0.0 && br.alpha_lower <= 1.0) {
                return Err(CaseError::invalid("branch", br.id, "alpha_lower must be in (0, 1]"));
            }
            branch_ends.push((f, t));
        }

        let mut gen_bus = Vec::with_capacity(generators.len());
        let mut slack = Vec::new();
        for (k, g) in generators.iter().enumerate() {
            gen_bus.push(lookup("generator", g.id, g.bus)?);
            if g.q_min_mvar > g.q_max_mvar {
                return Err(CaseError::invalid("generator", g.id, "q_min exceeds q_max"));
            }
            if !(g.p_mw >= 0.0 && g.p_mw <= g.p_max_mw) {
                return Err(CaseError::invalid("generator", g.id, "p_mw must lie in [0, p_max]"));
            }
            if !(g.v_pu > 0.0) {
                return Err(CaseError::invalid("generator", g.id, "v_pu must be positive"));
            }
            if g.slack {
                slack.push(k);
            }
        }
        let slack_gen = match slack.as_slice() {
            [k] => *k,
            [] => return Err(CaseError::invalid("case", 0, "no slack generator")),
            [_, second, ..] => {
                return Err(CaseError::invalid(
                    "generator",
                    generators[*second].id,
                    "more than one slack generator",
                ))
            }
        };

        let mut shunt_bus = Vec::with_capacity(shunts.len());
        let mut shunt_branch = Vec::with_capacity(shunts.len());
        for s in &shunts {
            match s.attachment {
                ShuntAttachment::Bus(bus) => {
                    shunt_bus.push(lookup("shunt", s.id, bus)?);
                    shunt_branch.push(None);
                }
                ShuntAttachment::BranchEnd { branch, end } => {
                    let k = *branch_index.get(&branch).ok_or(CaseError::DanglingReference {
                        element: "shunt",
                        id: s.id,
                        reference: branch,
                    })?;
                    let (f, t) = branch_ends[k];
                    shunt_bus.push(if end == BranchEnd::From { f } else { t });
                    shunt_branch.push(Some(k));
                }
            }
        }

        let net = Network {
            name,
            base_mva,
            buses,
            branches,
            generators,
            shunts,
            bus_index,
            branch_index,
            gen_index,
            branch_ends,
            gen_bus,
            shunt_bus,
            shunt_branch,
            slack_gen,
        };
        let state = SystemState::base(&net);
        let islands = find_islands(&net, &state.branch_in_service, &state.gen_in_service);
        if islands.len() != 1 {
            return Err(CaseError::Disconnected { islands: islands.len() });
        }
        Ok(net)
    }

    pub fn bus_idx(&self, id: u32) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }

    pub fn branch_idx(&self, id: u32) -> Option<usize> {
        self.branch_index.get(&id).copied()
    }

    pub fn gen_idx(&self, id: u32) -> Option<usize> {
        self.gen_index.get(&id).copied()
    }

    /// Bus indices of the branch's (from, to) ends.
    pub fn branch_ends(&self, k: usize) -> (usize, usize) {
        self.branch_ends[k]
    }

    pub fn gen_bus(&self, g: usize) -> usize {
        self.gen_bus[g]
    }

    /// Bus index the shunt injects into.
    pub fn shunt_bus(&self, s: usize) -> usize {
        self.shunt_bus[s]
    }

    /// Branch index for branch-end shunts.
    pub fn shunt_branch(&self, s: usize) -> Option<usize> {
        self.shunt_branch[s]
    }

    /// Index of the generator flagged as system slack in the case file.
    pub fn slack_gen(&self) -> usize {
        self.slack_gen
    }

    pub fn slack_bus(&self) -> usize {
        self.gen_bus[self.slack_gen]
    }

    /// Indices of buses carrying nominal active load.
    pub fn load_buses(&self) -> Vec<usize> {
        (0..self.buses.len()).filter(|&i| self.buses[i].is_load_bus()).collect()
    }

    pub fn total_nominal_load_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.p_load_mw).sum()
    }

    /// Label such as `207-208` for reports.
    pub fn branch_label(&self, k: usize) -> String {
        let b = &self.branches[k];
        format!("{}-{}", b.from_bus, b.to_bus)
    }
}

fn unique_index(
    element: &'static str,
    ids: impl Iterator<Item = u32>,
) -> Result<HashMap<u32, usize>, CaseError> {
    let mut map = HashMap::new();
    for (k, id) in ids.enumerate() {
        if map.insert(id, k).is_some() {
            return Err(CaseError::DuplicateId { element, id });
        }
    }
    Ok(map)
}

/// Mutable state of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub branch_in_service: Vec<bool>,
    pub gen_in_service: Vec<bool>,
    pub shunt_in_service: Vec<bool>,
    /// Whether the bus belongs to an island with in-service generation.
    pub bus_energized: Vec<bool>,
    pub p_load_mw: Vec<f64>,
    pub q_load_mvar: Vec<f64>,
    pub gen_p_mw: Vec<f64>,
    /// Slack designation; exactly one per energized island.
    pub gen_slack: Vec<bool>,
    /// Last voltage magnitudes (pu), used to warm start the solver.
    pub vm: Vec<f64>,
    /// Last voltage angles (rad).
    pub va: Vec<f64>,
    pub time_s: f64,
}

impl SystemState {
    /// All elements in service, nominal loads and base dispatch, flat voltages.
    pub fn base(net: &Network) -> Self {
        let n = net.buses.len();
        let mut vm = vec![1.0; n];
        for (g, gen) in net.generators.iter().enumerate() {
            vm[net.gen_bus(g)] = gen.v_pu;
        }
        SystemState {
            branch_in_service: vec![true; net.branches.len()],
            gen_in_service: vec![true; net.generators.len()],
            shunt_in_service: vec![true; net.shunts.len()],
            bus_energized: vec![true; n],
            p_load_mw: net.buses.iter().map(|b| b.p_load_mw).collect(),
            q_load_mvar: net.buses.iter().map(|b| b.q_load_mvar).collect(),
            gen_p_mw: net.generators.iter().map(|g| g.p_mw).collect(),
            gen_slack: (0..net.generators.len()).map(|g| g == net.slack_gen()).collect(),
            vm,
            va: vec![0.0; n],
            time_s: 0.0,
        }
    }
}

/// Active load (MW) summed over energized buses.
pub fn total_served_load(state: &SystemState) -> f64 {
    state
        .p_load_mw
        .iter()
        .zip(&state.bus_energized)
        .filter(|(_, &on)| on)
        .map(|(p, _)| *p)
        .sum()
}
