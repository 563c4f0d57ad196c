//! Time-stepped simulation of the coupled subregion/expressway system.
//!
//! Each route is compiled into a chain of storage elements: subregion
//! reservoirs (vehicles) and CTM cells (veh/m). A vehicle class is a
//! `(route, position in chain)` slot, so the next element of every class is
//! fixed and every transfer is one [`gated_flow`] against the receiving
//! element's supply, shared among all slots feeding that element.
//!
//! A step computes every flow from the state at `t` and then advances all
//! slots together (explicit Euler, Jacobi order).

use serde::{Deserialize, Serialize};

use crate::assignment::{logit_into, Conditions, DEFAULT_SPEED_FLOOR};
use crate::error::{Error, Result};
use crate::expressway::{cell_demand, cell_speed, cell_supply, CellKind};
use crate::gate::{gated_flow_ratio, share_ratio};
use crate::network::{connecting_ramps, design_cost, DesignVector, ExpresswayId, FundamentalDiagram, MixedNetwork};
use crate::routes::{Route, RouteNode, RouteSet, DEFAULT_MAX_NODES};
use crate::scenario::Scenario;
use crate::subregion::{production, receiving_capacity, speed};

pub const DEFAULT_STEP: f64 = 10.0;

const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Step length, s.
    pub ts: f64,
    /// Number of steps in the horizon.
    pub steps: usize,
    /// Cell length, m.
    pub cell_length: f64,
    /// Lower bound on speeds used for travel times, m/s.
    pub speed_floor: f64,
    pub max_nodes: usize,
    pub boundary_mode: BoundaryMode,
}

/// How a boundary capacity `c_ij` limits transfers between subregions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BoundaryMode {
    /// All classes crossing `i -> j` share `c_ij` in proportion to demand.
    #[default]
    Shared,
    /// Each class is capped at `c_ij` on its own.
    PerClass,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            ts: DEFAULT_STEP,
            steps: 360,
            cell_length: 500.0,
            speed_floor: DEFAULT_SPEED_FLOOR,
            max_nodes: DEFAULT_MAX_NODES,
            boundary_mode: BoundaryMode::Shared,
        }
    }
}

impl SimConfig {
    pub fn horizon(&self) -> f64 {
        self.ts * self.steps as f64
    }

    /// Largest stable step, `Ls / max(V_fm, V_fr)`.
    pub fn cfl_limit(&self, net: &MixedNetwork) -> f64 {
        self.cell_length / net.mainline_fd.free_flow_speed.max(net.ramp_fd.free_flow_speed)
    }

    pub fn validate(&self, net: &MixedNetwork) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.ts > 0.0) {
            v.push("step length must be > 0".to_string());
        }
        if self.steps == 0 {
            v.push("horizon must contain at least one step".to_string());
        }
        if !(self.cell_length > 0.0) {
            v.push("cell length must be > 0".to_string());
        }
        if self.ts > self.cfl_limit(net) * (1.0 + 1e-12) {
            v.push(format!(
                "step {} s violates the CFL bound {} s",
                self.ts,
                self.cfl_limit(net)
            ));
        }
        if !(self.speed_floor > 0.0) {
            v.push("speed floor must be > 0".to_string());
        }
        if self.max_nodes == 0 {
            v.push("max route nodes must be >= 1".to_string());
        }
        if net.candidates.iter().any(|c| c.cell_length != self.cell_length) {
            v.push("candidate cell length differs from the simulation cell length".to_string());
        }
        v
    }
}

/// Vehicle audit over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub injected_veh: f64,
    pub completed_veh: f64,
    pub residual_veh: f64,
}

impl Audit {
    pub fn relative_error(&self) -> f64 {
        (self.injected_veh - self.completed_veh - self.residual_veh).abs() / self.injected_veh.max(1.0)
    }
}

/// Recorded state over the horizon, one row per step `t = 0..T-1`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// s
    pub ts: f64,
    /// m
    pub cell_length: f64,
    pub subregion_ids: Vec<u32>,
    /// `[t][i]` vehicles
    pub accumulation: Vec<Vec<f64>>,
    /// Every directional candidate, sorted.
    pub expressways: Vec<ExpresswayId>,
    pub built: Vec<bool>,
    /// `[t][e]` sum of mainline, on-ramp, off-ramp and incoming connecting
    /// ramp densities of expressway `e`, veh/m.
    pub expressway_density: Vec<Vec<f64>>,
    pub cell_labels: Vec<String>,
    /// `[t][c]` total cell density, veh/m.
    pub cell_density: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.accumulation.len()
    }

    /// Vehicles on expressway `e` at step `t` (zero when not built).
    pub fn expressway_vehicles(&self, t: usize, e: usize) -> f64 {
        if self.built[e] {
            self.cell_length * self.expressway_density[t][e]
        } else {
            0.0
        }
    }
}

/// Total time spent in veh·h: `Ts · Σ_t (Σ_i n_i + Σ_built Ls · ΣK)`.
pub fn tts(traj: &Trajectory) -> f64 {
    let mut veh_seconds = 0.0;
    for t in 0..traj.steps() {
        let subregions: f64 = traj.accumulation[t].iter().sum();
        let expressways: f64 = (0..traj.expressways.len()).map(|e| traj.expressway_vehicles(t, e)).sum();
        veh_seconds += traj.ts * (subregions + expressways);
    }
    veh_seconds / 3600.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub design: String,
    pub construction_cost: f64,
    pub route_count: usize,
    /// veh·h
    pub tts_veh_h: f64,
    /// Time average of the total subregion accumulation, veh.
    pub avg_accumulation_veh: f64,
    /// Completed trips over the horizon, veh/h.
    pub avg_completion_flow_veh_h: f64,
    pub audit: Audit,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ElementKind {
    Reservoir { sub: usize },
    Cell { kind: CellKind, ramp: bool },
}

#[derive(Debug, Clone)]
struct Element {
    kind: ElementKind,
    /// 1 for reservoirs, the cell length for cells.
    extent: f64,
    /// Index into the trajectory's expressway list, for cells.
    expressway: Option<usize>,
}

impl Element {
    fn label(&self, net: &MixedNetwork) -> String {
        match self.kind {
            ElementKind::Reservoir { sub } => format!("subregion {}", net.subregions[sub].id),
            ElementKind::Cell { kind, .. } => kind.to_string(),
        }
    }
}

const TERMINAL: u32 = u32::MAX;
const NO_BOUNDARY: u32 = u32::MAX;

/// The static part of a simulation: elements, route chains and OD groups.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    net: MixedNetwork,
    design: DesignVector,
    routes: Vec<Route>,
    elements: Vec<Element>,
    cell_labels: Vec<String>,
    expressways: Vec<ExpresswayId>,
    built: Vec<bool>,
    /// Per slot: element index, next element (or TERMINAL) and the
    /// capacity cap of the transition out of it.
    slot_elem: Vec<u32>,
    slot_next: Vec<u32>,
    slot_cap: Vec<f64>,
    /// Per slot: boundary link index for subregion-to-subregion moves, or
    /// NO_BOUNDARY.
    slot_boundary: Vec<u32>,
    slot_extent: Vec<f64>,
    boundary_count: usize,
    /// `route_slots[r]..route_slots[r + 1]` are the slots of route `r`.
    route_slots: Vec<usize>,
    /// Per OD `(o index, d index, route range)`.
    od_groups: Vec<(usize, usize, std::ops::Range<usize>)>,
}

impl CompiledModel {
    pub fn new(net: &MixedNetwork, design: &DesignVector, cfg: &SimConfig) -> Result<Self> {
        net.check_design(design)?;
        let route_set = RouteSet::build(net, design, cfg.max_nodes)?;
        let ls = cfg.cell_length;
        let r_count = net.subregions.len();

        let mut expressways: Vec<ExpresswayId> = net.candidates.iter().map(|c| c.id()).collect();
        expressways.sort();
        let built: Vec<bool> = expressways.iter().map(|&e| net.is_built(design, e)).collect();
        let e_index = |e: ExpresswayId| expressways.iter().position(|&x| x == e).expect("candidate");

        let mut elements: Vec<Element> = (0..r_count)
            .map(|sub| Element {
                kind: ElementKind::Reservoir { sub },
                extent: 1.0,
                expressway: None,
            })
            .collect();
        let mut cell_kinds: Vec<CellKind> = Vec::new();
        for &e in expressways.iter().filter(|&&e| net.is_built(design, e)) {
            cell_kinds.push(CellKind::OnRamp(e));
            let cells = net.candidate(e).expect("candidate").cell_count();
            cell_kinds.extend((1..=cells).map(|position| CellKind::Mainline { expressway: e, position }));
            cell_kinds.push(CellKind::OffRamp(e));
        }
        for (from, to) in connecting_ramps(net, design) {
            cell_kinds.push(CellKind::Connecting { from, to });
        }
        for &kind in &cell_kinds {
            let owner = match kind {
                CellKind::Mainline { expressway, .. } => expressway,
                CellKind::OnRamp(e) | CellKind::OffRamp(e) => e,
                CellKind::Connecting { to, .. } => to,
            };
            elements.push(Element {
                kind: ElementKind::Cell {
                    kind,
                    ramp: kind.is_ramp(),
                },
                extent: ls,
                expressway: Some(e_index(owner)),
            });
        }
        let cell_index = |kind: CellKind| -> u32 {
            (r_count + cell_kinds.iter().position(|&k| k == kind).expect("cell exists")) as u32
        };
        let sub_index = |id: u32| -> Result<u32> {
            net.subregion_index(id).map(|i| i as u32).ok_or(Error::UnknownSubregion(id))
        };

        let mut routes = Vec::new();
        let mut slot_elem = Vec::new();
        let mut route_slots = vec![0];
        let mut od_groups = Vec::new();
        for (&(o, d), rs) in &route_set.by_od {
            let start = routes.len();
            for route in rs {
                let mut prev: Option<RouteNode> = None;
                for &node in &route.nodes {
                    match node {
                        RouteNode::Subregion(i) => {
                            if let Some(RouteNode::Expressway(up)) = prev {
                                slot_elem.push(cell_index(CellKind::OffRamp(up)));
                            }
                            slot_elem.push(sub_index(i)?);
                        }
                        RouteNode::Expressway(e) => {
                            let entry = match prev {
                                Some(RouteNode::Expressway(up)) => CellKind::Connecting { from: up, to: e },
                                _ => CellKind::OnRamp(e),
                            };
                            slot_elem.push(cell_index(entry));
                            let cells = net.candidate(e).expect("built").cell_count();
                            for position in 1..=cells {
                                slot_elem.push(cell_index(CellKind::Mainline { expressway: e, position }));
                            }
                        }
                    }
                    prev = Some(node);
                }
                route_slots.push(slot_elem.len());
                routes.push(route.clone());
            }
            od_groups.push((sub_index(o)? as usize, sub_index(d)? as usize, start..routes.len()));
        }

        let mut slot_next = vec![TERMINAL; slot_elem.len()];
        let mut slot_cap = vec![f64::INFINITY; slot_elem.len()];
        let mut slot_boundary = vec![NO_BOUNDARY; slot_elem.len()];
        for r in 0..routes.len() {
            for s in route_slots[r]..route_slots[r + 1] - 1 {
                let (a, b) = (slot_elem[s] as usize, slot_elem[s + 1] as usize);
                slot_next[s] = b as u32;
                slot_cap[s] = match (elements[a].kind, elements[b].kind) {
                    (ElementKind::Reservoir { sub: i }, ElementKind::Reservoir { sub: j }) => {
                        let (fi, tj) = (net.subregions[i].id, net.subregions[j].id);
                        let b = net
                            .boundaries
                            .iter()
                            .position(|b| b.from == fi && b.to == tj)
                            .ok_or_else(|| Error::IllegalRoute(format!("no boundary {fi}->{tj}")))?;
                        slot_boundary[s] = b as u32;
                        net.boundaries[b].capacity
                    }
                    (ElementKind::Cell { ramp: false, .. }, ElementKind::Cell { ramp: false, .. }) => {
                        net.mainline_fd.capacity
                    }
                    _ => net.ramp_fd.capacity,
                };
            }
        }

        let cell_labels = cell_kinds.iter().map(|k| k.to_string()).collect();
        let slot_extent = slot_elem.iter().map(|&e| elements[e as usize].extent).collect();
        Ok(Self {
            net: net.clone(),
            design: design.clone(),
            routes,
            elements,
            cell_labels,
            expressways,
            built,
            slot_elem,
            slot_next,
            slot_cap,
            slot_extent,
            slot_boundary,
            boundary_count: net.boundaries.len(),
            route_slots,
            od_groups,
        })
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn slot_count(&self) -> usize {
        self.slot_elem.len()
    }

    pub fn cell_count(&self) -> usize {
        self.elements.len() - self.net.subregions.len()
    }

    fn fd(&self, ramp: bool) -> &FundamentalDiagram {
        if ramp {
            &self.net.ramp_fd
        } else {
            &self.net.mainline_fd
        }
    }
}

/// Stock and flow totals of one element over the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementBalance {
    pub label: String,
    pub is_cell: bool,
    /// 1 for subregions, the cell length for cells.
    pub extent: f64,
    /// Upper bound on the stock (n_max or K_j).
    pub stock_max: f64,
    /// Capacity of the element's diagram (cells only).
    pub capacity: f64,
    pub before: f64,
    pub after: f64,
    /// veh/s
    pub inflow: f64,
    /// veh/s
    pub outflow: f64,
}

/// Per-slot constants of the advance loop, packed together.
#[derive(Debug, Clone, Copy)]
struct HotSlot {
    elem: u32,
    next: u32,
    /// Boundary whose capacity is shared, or NO_BOUNDARY.
    boundary: u32,
    cap: f64,
    /// `ts / extent`
    dt: f64,
    /// `extent / ts`
    lim: f64,
}

impl HotSlot {
    fn pack(m: &CompiledModel, cfg: &SimConfig) -> Vec<Self> {
        let shared = cfg.boundary_mode == BoundaryMode::Shared;
        (0..m.slot_count())
            .map(|s| Self {
                elem: m.slot_elem[s],
                next: m.slot_next[s],
                boundary: if shared { m.slot_boundary[s] } else { NO_BOUNDARY },
                cap: m.slot_cap[s],
                dt: cfg.ts / m.slot_extent[s],
                lim: m.slot_extent[s] / cfg.ts,
            })
            .collect()
    }
}

/// A running simulation.
pub struct Simulation<'a> {
    model: CompiledModel,
    scenario: &'a Scenario,
    step: usize,
    occ: Vec<f64>,
    // per-step scratch
    totals: Vec<f64>,
    supply: Vec<f64>,
    rate: Vec<f64>,
    elem_time: Vec<f64>,
    competing: Vec<f64>,
    ratio: Vec<f64>,
    boundary_demand: Vec<f64>,
    boundary_ratio: Vec<f64>,
    demand: Vec<f64>,
    hot: Vec<HotSlot>,
    route_time: Vec<f64>,
    route_q: Vec<f64>,
    // last-step balance
    prev_totals: Vec<f64>,
    elem_in: Vec<f64>,
    elem_out: Vec<f64>,
    audit: Audit,
    completed_total: f64,
    traj: Trajectory,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario, design: &DesignVector) -> Result<Self> {
        let model = CompiledModel::new(&scenario.network, design, &scenario.sim)?;
        Ok(Self::from_model(scenario, model))
    }

    pub fn from_model(scenario: &'a Scenario, model: CompiledModel) -> Self {
        let ne = model.elements.len();
        let ns = model.slot_count();
        let nr = model.routes.len();
        let traj = Trajectory {
            ts: scenario.sim.ts,
            cell_length: scenario.sim.cell_length,
            subregion_ids: model.net.subregion_ids(),
            accumulation: Vec::with_capacity(scenario.sim.steps),
            expressways: model.expressways.clone(),
            built: model.built.clone(),
            expressway_density: Vec::with_capacity(scenario.sim.steps),
            cell_labels: model.cell_labels.clone(),
            cell_density: Vec::with_capacity(scenario.sim.steps),
        };
        Self {
            scenario,
            step: 0,
            occ: vec![0.0; ns],
            totals: vec![0.0; ne],
            supply: vec![0.0; ne],
            rate: vec![0.0; ne],
            elem_time: vec![0.0; ne],
            competing: vec![0.0; ne],
            ratio: vec![0.0; ne],
            boundary_demand: vec![0.0; model.boundary_count],
            boundary_ratio: vec![0.0; model.boundary_count],
            demand: vec![0.0; ns],
            hot: HotSlot::pack(&model, &scenario.sim),
            route_time: vec![0.0; nr],
            route_q: vec![0.0; nr],
            prev_totals: vec![0.0; ne],
            elem_in: vec![0.0; ne],
            elem_out: vec![0.0; ne],
            audit: Audit::default(),
            completed_total: 0.0,
            traj,
            model,
        }
    }

    pub fn model(&self) -> &CompiledModel {
        &self.model
    }

    pub fn current_step(&self) -> usize {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.scenario.sim.steps
    }

    /// Per-class occupancies: vehicles in reservoirs, veh/m in cells.
    pub fn occupancy(&self) -> &[f64] {
        &self.occ
    }

    /// Seeds class slot `slot` before the first step. The vehicles count as
    /// injected in the audit.
    pub fn set_initial_occupancy(&mut self, slot: usize, value: f64) -> Result<()> {
        if self.step != 0 {
            return Err(Error::Config("initial occupancy can only be set before the first step".into()));
        }
        if slot >= self.occ.len() || !(value >= 0.0) {
            return Err(Error::Config(format!("bad initial occupancy {value} for slot {slot}")));
        }
        let extent = self.model.elements[self.model.slot_elem[slot] as usize].extent;
        self.audit.injected_veh += (value - self.occ[slot]) * extent;
        self.occ[slot] = value;
        Ok(())
    }

    /// Current subregion accumulations and cell densities.
    pub fn conditions(&self) -> Conditions {
        let mut totals = vec![0.0; self.model.elements.len()];
        for (s, &e) in self.model.slot_elem.iter().enumerate() {
            totals[e as usize] += self.occ[s];
        }
        let mut c = Conditions::default();
        for (k, el) in self.model.elements.iter().enumerate() {
            match el.kind {
                ElementKind::Reservoir { sub } => {
                    c.accumulation.insert(self.model.net.subregions[sub].id, totals[k]);
                }
                ElementKind::Cell { kind, .. } => {
                    c.density.insert(kind, totals[k]);
                }
            }
        }
        c
    }

    /// Route travel times from the last step in which each route's OD pair
    /// had demand, in route order.
    pub fn last_route_times(&self) -> &[f64] {
        &self.route_time
    }

    /// Vehicles currently in the network.
    pub fn vehicles_in_network(&self) -> f64 {
        self.model
            .slot_elem
            .iter()
            .zip(&self.occ)
            .map(|(&e, &x)| x * self.model.elements[e as usize].extent)
            .sum()
    }

    pub fn audit(&self) -> Audit {
        Audit {
            residual_veh: self.vehicles_in_network(),
            ..self.audit
        }
    }

    /// Per-element stocks and flow totals of the last completed step.
    pub fn last_balance(&self) -> Vec<ElementBalance> {
        let net = &self.model.net;
        let mut after = vec![0.0; self.model.elements.len()];
        for (s, &e) in self.model.slot_elem.iter().enumerate() {
            after[e as usize] += self.occ[s];
        }
        self.model
            .elements
            .iter()
            .enumerate()
            .map(|(k, el)| {
                let (is_cell, stock_max, capacity) = match el.kind {
                    ElementKind::Reservoir { sub } => (false, net.subregions[sub].n_max, f64::INFINITY),
                    ElementKind::Cell { ramp, .. } => {
                        let fd = self.model.fd(ramp);
                        (true, fd.jam_density, fd.capacity)
                    }
                };
                ElementBalance {
                    label: el.label(net),
                    is_cell,
                    extent: el.extent,
                    stock_max,
                    capacity,
                    before: self.prev_totals[k],
                    after: after[k],
                    inflow: self.elem_in[k],
                    outflow: self.elem_out[k],
                }
            })
            .collect()
    }

    fn violation(&self, element: usize, detail: String) -> Error {
        violation(&self.model, self.step, element, detail)
    }

    /// Advances the state by one step.
    pub fn step(&mut self) -> Result<()> {
        let sc = self.scenario;
        let ts = sc.sim.ts;
        let floor = sc.sim.speed_floor;
        let t = self.step as f64 * ts;
        let m = &self.model;
        let net = &m.net;

        // Element totals; later steps reuse the totals left by the advance.
        if self.step == 0 {
            self.totals.iter_mut().for_each(|x| *x = 0.0);
            for (s, &e) in m.slot_elem.iter().enumerate() {
                self.totals[e as usize] += self.occ[s];
            }
        }

        // Speeds, supplies, per-vehicle sending rates and traversal times.
        for (k, el) in m.elements.iter().enumerate() {
            let x = self.totals[k];
            match el.kind {
                ElementKind::Reservoir { sub } => {
                    let p = &net.subregions[sub];
                    let prod = production(p, x).map_err(|e| self.violation(k, e.to_string()))?;
                    self.rate[k] = if x > 0.0 { prod / (x * p.avg_trip_length) } else { 0.0 };
                    self.supply[k] = receiving_capacity(p, x).map_err(|e| self.violation(k, e.to_string()))?;
                    self.elem_time[k] = p.avg_trip_length / speed(p, x)?.max(floor);
                }
                ElementKind::Cell { ramp, .. } => {
                    let fd = m.fd(ramp);
                    if x > fd.jam_density * (1.0 + BOUND_TOL) {
                        return Err(self.violation(k, format!("density {x} exceeds jam density {}", fd.jam_density)));
                    }
                    self.rate[k] = if x > 0.0 { cell_demand(fd, x) / x } else { 0.0 };
                    self.supply[k] = cell_supply(fd, x);
                    self.elem_time[k] = el.extent / cell_speed(fd, x).max(floor);
                }
            }
        }

        // Record the state at time t.
        record(m, &self.totals, &mut self.traj);

        // Route times, and logit loading of new demand. Route times are
        // only needed, and only refreshed, for OD pairs with demand now.
        let seg = sc.demand.segment_at(t);
        let route_time = &mut self.route_time[..];
        let route_q = &mut self.route_q[..];
        let elem_time = &self.elem_time[..];
        route_q.iter_mut().for_each(|x| *x = 0.0);
        if let Some(seg) = seg {
            for (o, d, range) in &m.od_groups {
                let q = seg.rates[*o][*d];
                if q <= 0.0 {
                    continue;
                }
                for r in range.clone() {
                    route_time[r] = m.slot_elem[m.route_slots[r]..m.route_slots[r + 1]]
                        .iter()
                        .map(|&e| elem_time[e as usize])
                        .sum();
                }
                let probs = &mut route_q[range.clone()];
                logit_into(&route_time[range.clone()], sc.logit.mu, probs)?;
                probs.iter_mut().for_each(|p| *p *= q);
            }
        }

        // Class demands and competing totals per receiving element.
        let competing = &mut self.competing[..];
        let boundary_demand = &mut self.boundary_demand[..];
        let demand = &mut self.demand[..];
        let rate = &self.rate[..];
        competing.iter_mut().for_each(|x| *x = 0.0);
        boundary_demand.iter_mut().for_each(|x| *x = 0.0);
        for ((d, &occ), h) in demand.iter_mut().zip(&self.occ).zip(&self.hot) {
            *d = occ * rate[h.elem as usize];
            if h.next != TERMINAL {
                competing[h.next as usize] += *d;
            }
            if h.boundary != NO_BOUNDARY {
                boundary_demand[h.boundary as usize] += *d;
            }
        }
        for ((r, &c), &s) in self.ratio.iter_mut().zip(competing.iter()).zip(&self.supply) {
            *r = share_ratio(c, s);
        }
        for ((r, &d), b) in self.boundary_ratio.iter_mut().zip(boundary_demand.iter()).zip(&net.boundaries) {
            *r = share_ratio(d, b.capacity);
        }

        // Gated flows from the state at t, clamped so no class goes
        // negative, and the simultaneous advance.
        self.prev_totals.copy_from_slice(&self.totals);
        let totals = &mut self.totals[..];
        let elem_in = &mut self.elem_in[..];
        let elem_out = &mut self.elem_out[..];
        let ratio = &self.ratio[..];
        let boundary_ratio = &self.boundary_ratio[..];
        let occ_all = &mut self.occ[..];
        elem_in.iter_mut().for_each(|x| *x = 0.0);
        elem_out.iter_mut().for_each(|x| *x = 0.0);
        totals.iter_mut().for_each(|x| *x = 0.0);
        let mut completed = 0.0;
        let mut injected = 0.0;
        for (r, &q) in route_q.iter().enumerate() {
            let span = m.route_slots[r]..m.route_slots[r + 1];
            let mut inflow = q;
            injected += inflow;
            let slots = occ_all[span.clone()]
                .iter_mut()
                .zip(&demand[span.clone()])
                .zip(&self.hot[span]);
            for ((occ, &dem), h) in slots {
                let e = h.elem as usize;
                let f = if h.next == TERMINAL {
                    dem
                } else {
                    let cap = if h.boundary != NO_BOUNDARY {
                        dem * boundary_ratio[h.boundary as usize]
                    } else {
                        h.cap
                    };
                    gated_flow_ratio(dem, cap, ratio[h.next as usize])
                };
                let before = *occ;
                let limit = before * h.lim;
                let out = if f < limit { f } else { limit };
                elem_in[e] += inflow;
                elem_out[e] += out;
                let after = before + h.dt * (inflow - out);
                *occ = if after < 0.0 {
                    if after < -1e-9 * before.max(1.0) {
                        return Err(violation(m, self.step, e, format!("class stock went negative ({after})")));
                    }
                    0.0
                } else {
                    after
                };
                totals[e] += *occ;
                inflow = out;
            }
            completed += inflow;
        }
        self.audit.injected_veh += ts * injected;
        self.audit.completed_veh += ts * completed;
        self.completed_total += ts * completed;

        // Upper bounds after the update.
        for (k, el) in m.elements.iter().enumerate() {
            let max = match el.kind {
                ElementKind::Reservoir { sub } => net.subregions[sub].n_max,
                ElementKind::Cell { ramp, .. } => m.fd(ramp).jam_density,
            };
            if self.totals[k] > max * (1.0 + BOUND_TOL) {
                return Err(self.violation(k, format!("stock {} exceeds its maximum {max}", self.totals[k])));
            }
        }

        self.step += 1;
        Ok(())
    }

    /// Runs the remaining steps and summarizes.
    pub fn finish(mut self) -> Result<SimResult> {
        while !self.is_finished() {
            self.step()?;
        }
        let sc = self.scenario;
        let horizon_h = sc.sim.horizon() / 3600.0;
        let traj = std::mem::take(&mut self.traj);
        let steps = traj.steps().max(1) as f64;
        let avg_acc = traj.accumulation.iter().map(|row| row.iter().sum::<f64>()).sum::<f64>() / steps;
        Ok(SimResult {
            design: self.model.design.to_string(),
            construction_cost: design_cost(&self.model.net, &self.model.design)?,
            route_count: self.model.routes.len(),
            tts_veh_h: tts(&traj),
            avg_accumulation_veh: avg_acc,
            avg_completion_flow_veh_h: self.completed_total / horizon_h,
            audit: self.audit(),
            trajectory: traj,
        })
    }
}

fn violation(m: &CompiledModel, step: usize, element: usize, detail: String) -> Error {
    Error::InvariantViolation {
        step,
        element: m.elements[element].label(&m.net),
        detail,
    }
}

fn record(m: &CompiledModel, totals: &[f64], traj: &mut Trajectory) {
    let r_count = m.net.subregions.len();
    traj.accumulation.push(totals[..r_count].to_vec());
    let mut per_e = vec![0.0; m.expressways.len()];
    for (k, el) in m.elements.iter().enumerate().skip(r_count) {
        if let Some(e) = el.expressway {
            per_e[e] += totals[k];
        }
    }
    traj.expressway_density.push(per_e);
    traj.cell_density.push(totals[r_count..].to_vec());
}

/// Simulates `design` over the scenario horizon.
pub fn run(scenario: &Scenario, design: &DesignVector) -> Result<SimResult> {
    Simulation::new(scenario, design)?.finish()
}
