//! Radial distribution network model.
//!
//! Buses are numbered `1..=N` with bus 1 as the slack (main-grid connection).
//! Branch order is preserved from the input table: downstream code indexes
//! branch quantities by that order, and non-slack voltages by `bus id - 2`.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_WIRES: &str = include_str!("../data/wires.csv");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("unknown wire type `{0}`")]
    UnknownWire(String),
    #[error("invalid wire `{name}`: {reason}")]
    InvalidWire { name: String, reason: String },
    #[error("duplicate branch between buses {0} and {1}")]
    DuplicateBranch(usize, usize),
    #[error("branch {0}-{0} connects a bus to itself")]
    SelfLoop(usize),
    #[error("network contains a cycle")]
    Cycle,
    #[error("bus {0} is not reachable from the slack bus")]
    Disconnected(usize),
    #[error("bus ids must be contiguous 1..=N with N = branches + 1 (found {found} buses for {branches} branches)")]
    BadBusIds { found: usize, branches: usize },
    #[error("bases must be positive (s_base = {s_base_mva} MVA, v_base = {v_base_v} V)")]
    InvalidBases { s_base_mva: f64, v_base_v: f64 },
    #[error("branch length must be positive, got {0} m")]
    InvalidLength(f64),
    #[error("csv: {0}")]
    Csv(String),
}

/// Conductor data. Resistance and ampacity are per single conductor; the
/// effective values account for `parallel_count` conductors in parallel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSpec {
    pub name: String,
    pub resistance_per_km: f64,
    pub reactance_per_km: f64,
    pub ampacity: f64,
    pub parallel_count: u32,
}

impl WireSpec {
    pub fn effective_resistance_per_km(&self) -> f64 {
        self.resistance_per_km / self.parallel_count as f64
    }

    pub fn effective_ampacity(&self) -> f64 {
        self.ampacity * self.parallel_count as f64
    }

    fn validate(&self) -> Result<(), NetworkError> {
        let reason = if !(self.resistance_per_km > 0.0) {
            "resistance must be positive"
        } else if !(self.ampacity > 0.0) {
            "ampacity must be positive"
        } else if self.parallel_count == 0 {
            "parallel count must be at least 1"
        } else {
            return Ok(());
        };
        Err(NetworkError::InvalidWire {
            name: self.name.clone(),
            reason: reason.into(),
        })
    }
}

#[derive(Debug, Deserialize)]
struct WireRecord {
    name: String,
    r_ohm_per_km: f64,
    x_ohm_per_km: f64,
    ampacity_a: f64,
    parallel: u32,
}

/// Named conductor table. Names of the form `BASExN` (or `BASE×N`) that are
/// not listed verbatim resolve to `N` parallel conductors of `BASE`.
#[derive(Debug, Clone, PartialEq)]
pub struct WireLibrary {
    wires: BTreeMap<String, WireSpec>,
}

impl WireLibrary {
    /// The shipped copper conductor table (75 °C ampacities).
    pub fn builtin() -> Self {
        Self::from_csv_str(DEFAULT_WIRES).expect("embedded wire table is valid")
    }

    pub fn from_specs(specs: impl IntoIterator<Item = WireSpec>) -> Result<Self, NetworkError> {
        let mut wires = BTreeMap::new();
        for spec in specs {
            spec.validate()?;
            wires.insert(spec.name.clone(), spec);
        }
        Ok(Self { wires })
    }

    /// Parses `name,r_ohm_per_km,x_ohm_per_km,ampacity_a,parallel`.
    pub fn from_csv_str(text: &str) -> Result<Self, NetworkError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut specs = Vec::new();
        for record in reader.deserialize::<WireRecord>() {
            let r = record.map_err(|e| NetworkError::Csv(e.to_string()))?;
            specs.push(WireSpec {
                name: r.name,
                resistance_per_km: r.r_ohm_per_km,
                reactance_per_km: r.x_ohm_per_km,
                ampacity: r.ampacity_a,
                parallel_count: r.parallel,
            });
        }
        Self::from_specs(specs)
    }

    pub fn resolve(&self, name: &str) -> Result<WireSpec, NetworkError> {
        let name = name.trim();
        if let Some(spec) = self.wires.get(name) {
            return Ok(spec.clone());
        }
        let normalized = name.replace('×', "x");
        if let Some((base, count)) = normalized.rsplit_once(['x', 'X']) {
            let count: u32 = count
                .trim()
                .parse()
                .map_err(|_| NetworkError::UnknownWire(name.to_string()))?;
            let base_spec = self
                .wires
                .get(base.trim())
                .ok_or_else(|| NetworkError::UnknownWire(name.to_string()))?;
            let spec = WireSpec {
                name: name.to_string(),
                parallel_count: base_spec.parallel_count * count,
                ..base_spec.clone()
            };
            spec.validate()?;
            return Ok(spec);
        }
        Err(NetworkError::UnknownWire(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &WireSpec> {
        self.wires.values()
    }
}

impl Default for WireLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseConvention {
    /// Line-to-line voltage base, `I_base = S / (sqrt(3) V)`.
    #[default]
    ThreePhase,
    /// `I_base = S / V`.
    SinglePhase,
}

impl fmt::Display for PhaseConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhaseConvention::ThreePhase => f.write_str("three-phase"),
            PhaseConvention::SinglePhase => f.write_str("single-phase"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bases {
    pub s_base_mva: f64,
    pub v_base_v: f64,
    #[serde(default)]
    pub phase: PhaseConvention,
}

impl Bases {
    pub fn new(s_base_mva: f64, v_base_v: f64, phase: PhaseConvention) -> Result<Self, NetworkError> {
        let bases = Self {
            s_base_mva,
            v_base_v,
            phase,
        };
        bases.validate()?;
        Ok(bases)
    }

    fn validate(&self) -> Result<(), NetworkError> {
        if self.s_base_mva > 0.0 && self.v_base_v > 0.0 {
            Ok(())
        } else {
            Err(NetworkError::InvalidBases {
                s_base_mva: self.s_base_mva,
                v_base_v: self.v_base_v,
            })
        }
    }

    pub fn s_base_va(&self) -> f64 {
        self.s_base_mva * 1e6
    }

    pub fn s_base_kw(&self) -> f64 {
        self.s_base_mva * 1e3
    }

    pub fn z_base_ohm(&self) -> f64 {
        self.v_base_v * self.v_base_v / self.s_base_va()
    }

    pub fn i_base_a(&self) -> f64 {
        match self.phase {
            PhaseConvention::ThreePhase => self.s_base_va() / (3f64.sqrt() * self.v_base_v),
            PhaseConvention::SinglePhase => self.s_base_va() / self.v_base_v,
        }
    }
}

impl Default for Bases {
    fn default() -> Self {
        Self {
            s_base_mva: 1.0,
            v_base_v: 480.0,
            phase: PhaseConvention::ThreePhase,
        }
    }
}

/// One row of a branch table: `from,to,wire,length_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    pub from: usize,
    pub to: usize,
    pub wire: String,
    pub length_m: f64,
}

impl BranchRow {
    pub fn new(from: usize, to: usize, wire: &str, length_m: f64) -> Self {
        Self {
            from,
            to,
            wire: wire.to_string(),
            length_m,
        }
    }
}

pub fn parse_branch_csv(text: &str) -> Result<Vec<BranchRow>, NetworkError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .deserialize::<BranchRow>()
        .map(|r| r.map_err(|e| NetworkError::Csv(e.to_string())))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub wire: WireSpec,
    pub length_m: f64,
    pub r_pu: f64,
    pub i_max_pu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "kebab-case")]
pub enum DeviceRef {
    Battery(usize),
    Pv(usize),
    Diesel(usize),
    Load(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub is_slack: bool,
    pub devices: Vec<DeviceRef>,
}

/// Parent/children maps and a depth-first-safe branch order.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    /// `parent[bus_id]` is the branch feeding that bus (`None` for the slack
    /// and for the unused index 0).
    pub parent: Vec<Option<usize>>,
    /// `children[bus_id]` are the branches leaving that bus.
    pub children: Vec<Vec<usize>>,
    /// Branch indices ordered so that every branch follows its parent branch.
    pub order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub bases: Bases,
    topology: Topology,
}

impl NetworkModel {
    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_br(&self) -> usize {
        self.branches.len()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn parent_branch(&self, bus_id: usize) -> Option<usize> {
        self.topology.parent.get(bus_id).copied().flatten()
    }

    pub fn child_branches(&self, bus_id: usize) -> &[usize] {
        self.topology.children.get(bus_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn depth_order(&self) -> &[usize] {
        &self.topology.order
    }

    /// Column slot of the squared voltage of `bus_id` within a per-step block.
    pub fn voltage_slot(bus_id: usize) -> Option<usize> {
        bus_id.checked_sub(2)
    }

    pub fn has_bus(&self, bus_id: usize) -> bool {
        bus_id >= 1 && bus_id <= self.buses.len()
    }

    /// Returns a copy with device references attached to their buses.
    pub fn with_devices(mut self, devices: &[(usize, DeviceRef)]) -> Self {
        for bus in &mut self.buses {
            bus.devices.clear();
        }
        for &(bus_id, dev) in devices {
            if let Some(bus) = self.buses.get_mut(bus_id.wrapping_sub(1)) {
                bus.devices.push(dev);
            }
        }
        self
    }

    pub fn resistances(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.r_pu).collect()
    }
}

/// Builds a radial network from a branch table, converting conductor data to
/// per unit on the given bases.
pub fn load_network(rows: &[BranchRow], library: &WireLibrary, bases: Bases) -> Result<NetworkModel, NetworkError> {
    bases.validate()?;
    let z_base = bases.z_base_ohm();
    let i_base = bases.i_base_a();

    let mut seen = std::collections::BTreeSet::new();
    let mut branches = Vec::with_capacity(rows.len());
    for row in rows {
        if row.from == row.to {
            return Err(NetworkError::SelfLoop(row.from));
        }
        let key = (row.from.min(row.to), row.from.max(row.to));
        if !seen.insert(key) {
            return Err(NetworkError::DuplicateBranch(row.from, row.to));
        }
        if !(row.length_m > 0.0) {
            return Err(NetworkError::InvalidLength(row.length_m));
        }
        let wire = library.resolve(&row.wire)?;
        let r_ohm = wire.effective_resistance_per_km() * row.length_m / 1000.0;
        let i_max_a = wire.effective_ampacity();
        branches.push(Branch {
            from_bus: row.from,
            to_bus: row.to,
            r_pu: r_ohm / z_base,
            i_max_pu: i_max_a / i_base,
            wire,
            length_m: row.length_m,
        });
    }

    let max_id = rows.iter().map(|r| r.from.max(r.to)).max().unwrap_or(1);
    let min_id = rows.iter().map(|r| r.from.min(r.to)).min().unwrap_or(1);
    if min_id != 1 || max_id != branches.len() + 1 {
        return Err(NetworkError::BadBusIds {
            found: max_id,
            branches: branches.len(),
        });
    }

    let topology = radial_topology_of(max_id, &mut branches)?;
    let buses = (1..=max_id)
        .map(|id| Bus {
            id,
            is_slack: id == 1,
            devices: Vec::new(),
        })
        .collect();
    Ok(NetworkModel {
        buses,
        branches,
        bases,
        topology,
    })
}

/// Recomputes the topology maps of a loaded network.
pub fn radial_topology(network: &NetworkModel) -> Result<Topology, NetworkError> {
    let mut branches = network.branches.clone();
    radial_topology_of(network.n_bus(), &mut branches)
}

// Branches reached from their `to` end are re-oriented away from the slack.
fn radial_topology_of(n_bus: usize, branches: &mut [Branch]) -> Result<Topology, NetworkError> {
    if branches.len() + 1 != n_bus {
        return Err(if branches.len() + 1 > n_bus {
            NetworkError::Cycle
        } else {
            NetworkError::Disconnected(n_bus)
        });
    }
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n_bus + 1];
    for (e, br) in branches.iter().enumerate() {
        incident[br.from_bus].push(e);
        incident[br.to_bus].push(e);
    }

    let mut parent = vec![None; n_bus + 1];
    let mut visited = vec![false; n_bus + 1];
    let mut used = vec![false; branches.len()];
    let mut order = Vec::with_capacity(branches.len());
    let mut queue = VecDeque::from([1usize]);
    visited[1] = true;
    while let Some(bus) = queue.pop_front() {
        for &e in &incident[bus] {
            if used[e] {
                continue;
            }
            used[e] = true;
            let br = &mut branches[e];
            if br.to_bus == bus {
                std::mem::swap(&mut br.from_bus, &mut br.to_bus);
            }
            let next = br.to_bus;
            if visited[next] {
                return Err(NetworkError::Cycle);
            }
            visited[next] = true;
            parent[next] = Some(e);
            order.push(e);
            queue.push_back(next);
        }
    }
    if let Some(bus) = (1..=n_bus).find(|&b| !visited[b]) {
        return Err(NetworkError::Disconnected(bus));
    }

    let mut children = vec![Vec::new(); n_bus + 1];
    for (e, br) in branches.iter().enumerate() {
        children[br.from_bus].push(e);
    }
    Ok(Topology {
        parent,
        children,
        order,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectionKind {
    Generation,
    Load,
}

/// Converts a device power in kW to a per-unit injection. Loads are returned
/// with a negative sign (positive values inject into the grid).
pub fn per_unit_injection(power_kw: f64, s_base_mva: f64, kind: InjectionKind) -> f64 {
    let pu = power_kw / (s_base_mva * 1e3);
    match kind {
        InjectionKind::Generation => pu,
        InjectionKind::Load => -pu,
    }
}
