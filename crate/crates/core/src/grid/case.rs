use serde::{Deserialize, Serialize};

use super::{Branch, BranchEnd, Bus, BusKind, Generator, Network, Shunt, ShuntAttachment};
use crate::error::CaseError;

const DEFAULT_RATING_SLOPE: f64 = 0.02;

fn default_slope() -> f64 {
    DEFAULT_RATING_SLOPE
}

fn default_alpha_lower() -> f64 {
    1.0
}

fn is_default_slope(v: &f64) -> bool {
    *v == DEFAULT_RATING_SLOPE
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

/// On-disk JSON case document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub branches: Vec<BranchRecord>,
    pub generators: Vec<GeneratorRecord>,
    #[serde(default)]
    pub shunts: Vec<ShuntRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: u32,
    pub kind: BusKind,
    pub base_kv: f64,
    pub lat: f64,
    pub lon: f64,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchRecord {
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub from: u32,
    pub to: u32,
    pub r_pu: f64,
    pub x_pu: f64,
    pub b_pu: f64,
    pub rating_mva: f64,
    pub rated_kv: f64,
    #[serde(default = "default_slope", skip_serializing_if = "is_default_slope")]
    pub k_ka_per_c: f64,
    #[serde(default = "default_alpha_lower", skip_serializing_if = "is_one")]
    pub alpha_lower: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorRecord {
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub bus: u32,
    pub p_mw: f64,
    pub p_max_mw: f64,
    pub q_min_mvar: f64,
    pub q_max_mvar: f64,
    pub v_pu: f64,
    #[serde(default)]
    pub slack: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShuntRecord {
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attach_bus: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attach_branch: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<BranchEnd>,
    pub q_mvar: f64,
    #[serde(default)]
    pub auto_disconnect: bool,
}

impl CaseDocument {
    pub fn into_network(self) -> Result<Network, CaseError> {
        let buses = self
            .buses
            .into_iter()
            .map(|b| Bus {
                id: b.id,
                kind: b.kind,
                base_kv: b.base_kv,
                lat: b.lat,
                lon: b.lon,
                p_load_mw: b.p_mw,
                q_load_mvar: b.q_mvar,
            })
            .collect();
        let branches = self
            .branches
            .into_iter()
            .map(|b| Branch {
                id: b.id,
                name: b.name,
                from_bus: b.from,
                to_bus: b.to,
                r_pu: b.r_pu,
                x_pu: b.x_pu,
                b_pu: b.b_pu,
                rating_mva: b.rating_mva,
                rated_kv: b.rated_kv,
                rating_slope_ka_per_c: b.k_ka_per_c,
                alpha_lower: b.alpha_lower,
            })
            .collect();
        let generators = self
            .generators
            .into_iter()
            .map(|g| Generator {
                id: g.id,
                name: g.name,
                bus: g.bus,
                p_mw: g.p_mw,
                p_max_mw: g.p_max_mw,
                q_min_mvar: g.q_min_mvar,
                q_max_mvar: g.q_max_mvar,
                v_pu: g.v_pu,
                slack: g.slack,
            })
            .collect();
        let shunts = self
            .shunts
            .into_iter()
            .map(|s| {
                let attachment = match (s.attach_bus, s.attach_branch, s.end) {
                    (Some(bus), None, None) => ShuntAttachment::Bus(bus),
                    (None, Some(branch), Some(end)) => ShuntAttachment::BranchEnd { branch, end },
                    _ => {
                        return Err(CaseError::invalid(
                            "shunt",
                            s.id,
                            "needs either attach_bus or attach_branch with end",
                        ))
                    }
                };
                Ok(Shunt { id: s.id, attachment, q_mvar: s.q_mvar, auto_disconnect: s.auto_disconnect })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Network::assemble(self.name, self.base_mva, buses, branches, generators, shunts)
    }

    pub fn from_network(net: &Network) -> Self {
        CaseDocument {
            name: net.name.clone(),
            base_mva: net.base_mva,
            buses: net
                .buses
                .iter()
                .map(|b| BusRecord {
                    id: b.id,
                    kind: b.kind,
                    base_kv: b.base_kv,
                    lat: b.lat,
                    lon: b.lon,
                    p_mw: b.p_load_mw,
                    q_mvar: b.q_load_mvar,
                })
                .collect(),
            branches: net
                .branches
                .iter()
                .map(|b| BranchRecord {
                    id: b.id,
                    name: b.name.clone(),
                    from: b.from_bus,
                    to: b.to_bus,
                    r_pu: b.r_pu,
                    x_pu: b.x_pu,
                    b_pu: b.b_pu,
                    rating_mva: b.rating_mva,
                    rated_kv: b.rated_kv,
                    k_ka_per_c: b.rating_slope_ka_per_c,
                    alpha_lower: b.alpha_lower,
                })
                .collect(),
            generators: net
                .generators
                .iter()
                .map(|g| GeneratorRecord {
                    id: g.id,
                    name: g.name.clone(),
                    bus: g.bus,
                    p_mw: g.p_mw,
                    p_max_mw: g.p_max_mw,
                    q_min_mvar: g.q_min_mvar,
                    q_max_mvar: g.q_max_mvar,
                    v_pu: g.v_pu,
                    slack: g.slack,
                })
                .collect(),
            shunts: net
                .shunts
                .iter()
                .map(|s| {
                    let (attach_bus, attach_branch, end) = match s.attachment {
                        ShuntAttachment::Bus(b) => (Some(b), None, None),
                        ShuntAttachment::BranchEnd { branch, end } => (None, Some(branch), Some(end)),
                    };
                    ShuntRecord {
                        id: s.id,
                        attach_bus,
                        attach_branch,
                        end,
                        q_mvar: s.q_mvar,
                        auto_disconnect: s.auto_disconnect,
                    }
                })
                .collect(),
        }
    }
}
