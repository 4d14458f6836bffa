use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    UndervoltageShed,
    LineTrip,
    GeneratorTrip,
    Redispatch,
    Islanding,
    Divergence,
    VsiCollapse,
}

impl EventKind {
    /// Order among events due at the same instant; lower runs first.
    pub fn priority(self) -> u8 {
        match self {
            EventKind::UndervoltageShed => 0,
            EventKind::LineTrip => 1,
            EventKind::GeneratorTrip => 2,
            EventKind::Redispatch => 3,
            EventKind::Islanding => 4,
            EventKind::Divergence => 5,
            EventKind::VsiCollapse => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    NoEvent,
    Divergence,
    VsiCollapse,
    Blackout,
    MaxEvents,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::NoEvent => "no-event",
            Termination::Divergence => "divergence",
            Termination::VsiCollapse => "vsi-collapse",
            Termination::Blackout => "blackout",
            Termination::MaxEvents => "max-events",
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t_s: f64,
    pub kind: EventKind,
    /// Ids of the buses, branches or generators involved.
    pub elements: Vec<u32>,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Series {
    pub t_s: Vec<f64>,
    pub load_mw: Vec<f64>,
    pub vsi: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub lines: usize,
    pub generators: usize,
    /// Load disconnected by undervoltage shedding or lost in dead islands.
    pub shed_mw: f64,
    /// Part of `shed_mw` lost in dead islands.
    pub island_loss_mw: f64,
}

impl Totals {
    pub fn outages(&self) -> usize {
        self.lines + self.generators
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceInfo {
    pub center_bus: u32,
    pub gamma: f64,
    pub delta_t: f64,
    pub direction: crate::weather::Direction,
    /// Buses inside the disturbance area.
    pub buses: Vec<u32>,
    /// Load added by the temperature change, MW.
    pub delta_p_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeTrace {
    pub config_digest: String,
    pub termination: Termination,
    pub events: Vec<Event>,
    pub series: Series,
    pub totals: Totals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<DisturbanceInfo>,
}

impl CascadeTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Totals recomputed from the event log.
    pub fn totals_from_events(&self) -> Totals {
        let mut t = Totals::default();
        for e in &self.events {
            let mw = e.detail.get("mw").and_then(|v| v.as_f64()).unwrap_or(0.0);
            match e.kind {
                EventKind::LineTrip => t.lines += e.elements.len(),
                EventKind::GeneratorTrip => t.generators += e.elements.len(),
                EventKind::UndervoltageShed => t.shed_mw += mw,
                EventKind::Islanding => {
                    t.shed_mw += mw;
                    t.island_loss_mw += mw;
                }
                _ => {}
            }
        }
        t
    }
}
