//! Straight-line oracles for the kernel examples, shared by the kernel tests
//! and the acceptance harness. Every expected value is recomputed here from
//! raw constants, without calling into the library's helpers.

#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, BTreeSet};

use endp::assignment::{logit_probabilities, route_travel_time, split_demand, Conditions};
use endp::engine::{tts, Simulation, Trajectory};
use endp::expressway::{
    cell_demand, cell_speed, cell_supply, connramp_entry, mainline_flow, offramp_entry, offramp_exit, onramp_outflow,
    update_cell_density, CellKind, CellState,
};
use endp::network::{connecting_ramps, is_budget_feasible, ExpresswayId, FundamentalDiagram, Mfd, SubregionParams};
use endp::routes::{enumerate_routes, Route, RouteNode};
use endp::scenario::case_study;
use endp::subregion::{
    production, receiving_capacity, speed, transfer_to_onramp, transfer_to_subregion, trip_completion_rate,
    update_accumulation, SubregionState,
};
use endp::{DesignVector, MixedNetwork};

pub const KMH: f64 = 1.0 / 3.6;
pub const VEH_H: f64 = 1.0 / 3600.0;
pub const VEH_KM: f64 = 1e-3;

pub const A3: f64 = 1.4877e-7;
pub const A2: f64 = -2.9815e-3;
pub const A1: f64 = 15.0;

pub const TRIP_LENGTHS: [f64; 5] = [4800.0, 5200.0, 4700.0, 5500.0, 4500.0];
pub const PAIR_LENGTHS_M: [((u32, u32), f64); 8] = [
    ((1, 2), 6500.0),
    ((1, 4), 6000.0),
    ((1, 5), 5500.0),
    ((2, 3), 6500.0),
    ((2, 5), 6000.0),
    ((3, 4), 6500.0),
    ((3, 5), 5500.0),
    ((4, 5), 6000.0),
];
pub const ADJACENCY: [(u32, u32); 8] = [(1, 2), (2, 3), (3, 4), (1, 4), (1, 5), (2, 5), (3, 5), (4, 5)];
pub const USD_PER_KM: f64 = 5e6;

/// Fig. 5 schemes 1 to 6 as built pair lists.
pub fn schemes() -> Vec<Vec<(u32, u32)>> {
    vec![
        vec![],
        vec![(3, 4)],
        vec![(1, 2), (2, 3), (3, 4)],
        vec![(1, 5), (2, 5), (3, 4), (3, 5), (4, 5)],
        vec![(1, 2), (1, 5), (2, 5), (3, 4), (3, 5), (4, 5)],
        PAIR_LENGTHS_M.iter().map(|&(p, _)| p).collect(),
    ]
}

pub fn oracle_cost(pairs: &[(u32, u32)]) -> f64 {
    pairs
        .iter()
        .map(|p| PAIR_LENGTHS_M.iter().find(|(q, _)| q == p).unwrap().1 / 1000.0 * USD_PER_KM)
        .sum()
}

pub fn oracle_p(n: f64) -> f64 {
    A3 * n * n * n + A2 * n * n + A1 * n
}

pub fn subregion(trip_length: f64) -> SubregionParams {
    SubregionParams::new(1, Mfd { a3: A3, a2: A2, a1: A1 }, trip_length, 10_000.0, 12_000.0 * VEH_H).unwrap()
}

pub fn mainline() -> FundamentalDiagram {
    FundamentalDiagram::new(80.0 * KMH, 6000.0 * VEH_H, 375.0 * VEH_KM).unwrap()
}

pub fn ramp() -> FundamentalDiagram {
    FundamentalDiagram::new(40.0 * KMH, 3000.0 * VEH_H, 225.0 * VEH_KM).unwrap()
}

pub fn mask_of(net: &MixedNetwork, pairs: &[(u32, u32)]) -> DesignVector {
    net.design_from_pairs(pairs).unwrap()
}

#[derive(Debug)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Default)]
pub struct Checks(pub Vec<Check>);

impl Checks {
    pub fn close(&mut self, name: &str, got: f64, want: f64, tol: f64) {
        self.0.push(Check {
            name: name.to_string(),
            ok: (got - want).abs() <= tol,
            detail: format!("got {got}, want {want} ± {tol}"),
        });
    }

    pub fn truth(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        self.0.push(Check {
            name: name.to_string(),
            ok,
            detail: detail.into(),
        });
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.0.iter().filter(|c| !c.ok).collect()
    }
}

/// Simple paths from `o` to `d` with at most `max_nodes` nodes, by depth
/// first search over the raw adjacency list.
pub fn brute_force_paths(o: u32, d: u32, max_nodes: usize) -> BTreeSet<Vec<u32>> {
    fn go(path: &mut Vec<u32>, d: u32, max_nodes: usize, out: &mut BTreeSet<Vec<u32>>) {
        let last = *path.last().unwrap();
        if last == d {
            out.insert(path.clone());
            return;
        }
        if path.len() == max_nodes {
            return;
        }
        for &(a, b) in &ADJACENCY {
            for (x, y) in [(a, b), (b, a)] {
                if x == last && !path.contains(&y) {
                    path.push(y);
                    go(path, d, max_nodes, out);
                    path.pop();
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    go(&mut vec![o], d, max_nodes, &mut out);
    out
}

fn route_ids(r: &Route) -> Option<Vec<u32>> {
    r.nodes
        .iter()
        .map(|n| match n {
            RouteNode::Subregion(i) => Some(*i),
            RouteNode::Expressway(_) => None,
        })
        .collect()
}

/// Every numbered kernel example, each checked against a direct formula or
/// a brute-force enumeration.
pub fn derived_checks() -> Checks {
    let mut c = Checks::default();
    let sc = case_study();
    let net = &sc.network;
    let p = subregion(4800.0);

    // budget feasibility of the full build
    let full_cost = oracle_cost(&schemes()[5]);
    c.close("full build cost", full_cost, 242.5e6, 0.0);
    c.truth(
        "full design infeasible at 200M",
        !is_budget_feasible(net, &net.full_design(), 200e6) && full_cost > 200e6,
        format!("cost {full_cost}"),
    );

    // connecting ramps of the full build, against all shared-endpoint triples
    let mut want = BTreeSet::new();
    for &(a, b) in &PAIR_LENGTHS_M.map(|(p, _)| p) {
        for &(c2, d2) in &PAIR_LENGTHS_M.map(|(p, _)| p) {
            for (h, i) in [(a, b), (b, a)] {
                for (i2, j) in [(c2, d2), (d2, c2)] {
                    if i == i2 && h != j {
                        want.insert((ExpresswayId::new(h, i), ExpresswayId::new(i, j)));
                    }
                }
            }
        }
    }
    let got: BTreeSet<_> = connecting_ramps(net, &net.full_design()).into_iter().collect();
    c.truth("connecting ramps match brute force", got == want, format!("{} vs {}", got.len(), want.len()));
    c.truth(
        "connecting ramps include (E15,E52) and (E25,E51)",
        got.contains(&(ExpresswayId::new(1, 5), ExpresswayId::new(5, 2)))
            && got.contains(&(ExpresswayId::new(2, 5), ExpresswayId::new(5, 1))),
        "",
    );

    // routes 4 -> 2 without expressways, at most 3 nodes
    let routes = enumerate_routes(net, &net.empty_design(), (4, 2), 3).unwrap();
    let got: BTreeSet<Vec<u32>> = routes.iter().filter_map(route_ids).collect();
    let brute = brute_force_paths(4, 2, 3);
    let listed: BTreeSet<Vec<u32>> = [vec![4, 5, 2], vec![4, 3, 2], vec![4, 1, 2]].into_iter().collect();
    c.truth(
        "routes 4->2 match brute force",
        got == brute && got == listed && routes.len() == got.len(),
        format!("{got:?}"),
    );

    // MFD production and speed
    let n_peak = 3361.0;
    c.close("P(3361) oracle", production(&p, n_peak).unwrap(), oracle_p(n_peak), 1e-9);
    c.close("P(3361) ~ 22384", production(&p, n_peak).unwrap(), 22_384.0, 1.0);
    c.close("P(10000) = 620", production(&p, 10_000.0).unwrap(), oracle_p(10_000.0), 1e-9);
    c.close("P(10000) ~ 620", production(&p, 10_000.0).unwrap(), 620.0, 1e-6);
    c.close("v(0) = 15", speed(&p, 0.0).unwrap(), A1, 0.0);
    c.close("v(1e-6) -> 15", speed(&p, 1e-6).unwrap(), A1, 1e-6);
    c.close("v(3361) ~ 6.66", speed(&p, n_peak).unwrap(), oracle_p(n_peak) / n_peak, 1e-12);
    c.close("v(3361) rounded", speed(&p, n_peak).unwrap(), 6.66, 0.005);
    c.close("v(10000) ~ 0.062", speed(&p, 10_000.0).unwrap(), 0.062, 1e-9);
    c.close(
        "completion at 3361 over 4800 m",
        trip_completion_rate(&p, n_peak, n_peak).unwrap(),
        oracle_p(n_peak) / 4800.0,
        1e-12,
    );
    c.close("completion ~ 4.663", trip_completion_rate(&p, n_peak, n_peak).unwrap(), 4.663, 5e-4);
    c.close(
        "receiving capacity at n_max/2",
        receiving_capacity(&p, 5000.0).unwrap(),
        12_000.0 * VEH_H / 2.0,
        1e-12,
    );

    // proportional transfers
    let each = transfer_to_subregion(1.0, 10.0, 2.0, 1.0);
    c.close("two equal transfers share c_j", each, 1.0 / 2.0 * 1.0, 1e-15);
    let r = ramp();
    let jammed_supply = cell_supply(&r, r.jam_density);
    c.close("jammed ramp supply", jammed_supply, 0.0, 0.0);
    c.close("transfer into jammed ramp", transfer_to_onramp(1.0, r.capacity, 1.0, jammed_supply), 0.0, 0.0);

    // accumulation update, off-ramp inflow 0.5 and completion 0.2 over 10 s
    let key = (0usize, 2usize);
    let state = SubregionState {
        classes: BTreeMap::from([(key, 100.0)]),
    };
    let next = update_accumulation(
        &state,
        &BTreeMap::from([(key, 0.5)]),
        &BTreeMap::from([(key, 0.2)]),
        10.0,
    )
    .unwrap();
    c.close("accumulation +3 veh", next.total() - state.total(), 10.0 * (0.5 - 0.2), 1e-12);

    // CTM demand, supply and speed
    let m = mainline();
    c.close("demand at 20 veh/km", cell_demand(&m, 20.0 * VEH_KM) / VEH_H, 80.0 * 20.0, 1e-9);
    c.close("demand at 100 veh/km capped", cell_demand(&m, 100.0 * VEH_KM) / VEH_H, 6000.0, 1e-9);
    let omega_kmh = 6000.0 / (375.0 - 6000.0 / 80.0);
    c.close("wave speed 20 km/h", m.wave_speed() / KMH, omega_kmh, 1e-9);
    c.close("supply at 300 veh/km", cell_supply(&m, 300.0 * VEH_KM) / VEH_H, omega_kmh * (375.0 - 300.0), 1e-9);
    c.close("supply = 1500 veh/h", cell_supply(&m, 300.0 * VEH_KM) / VEH_H, 1500.0, 1e-9);
    c.close("speed at critical density", cell_speed(&m, 75.0 * VEH_KM) / KMH, 6000.0 / 75.0, 1e-9);
    c.close("speed at 300 veh/km", cell_speed(&m, 300.0 * VEH_KM) / KMH, 1500.0 / 300.0, 1e-9);

    // merges and diverges
    let (q_on, q_conn, zeta) = (1000.0 * VEH_H, 1000.0 * VEH_H, 1000.0 * VEH_H);
    let total = q_on + q_conn;
    c.close("merge on-ramp half", onramp_outflow(q_on, r.capacity, total, zeta) / VEH_H, 500.0, 1e-9);
    c.close("merge connecting half", onramp_outflow(q_conn, r.capacity, total, zeta) / VEH_H, 500.0, 1e-9);
    let (d1, d2, zeta) = (1200.0 * VEH_H, 600.0 * VEH_H, 900.0 * VEH_H);
    c.close("2:1 split first", mainline_flow(d1, m.capacity, d1 + d2, zeta) / VEH_H, 900.0 * 2.0 / 3.0, 1e-9);
    c.close("2:1 split second", mainline_flow(d2, m.capacity, d1 + d2, zeta) / VEH_H, 900.0 / 3.0, 1e-9);
    c.close(
        "ramp capacity cap",
        offramp_entry(4000.0 * VEH_H, r.capacity, 4000.0 * VEH_H, 1.0) / VEH_H,
        3000.0,
        1e-9,
    );
    c.close("off-ramp vs arterial share", offramp_exit(0.5, r.capacity, 0.5 + 0.5, 0.6), 0.6 * 0.5 / 1.0, 1e-15);
    c.close("arterial vs off-ramp share", transfer_to_subregion(0.5, 10.0, 1.0, 0.6), 0.3, 1e-15);
    let (a, b, s) = (0.3, 0.1, 0.2);
    let (fa, fb) = (connramp_entry(a, r.capacity, a + b, s), connramp_entry(b, r.capacity, a + b, s));
    c.truth(
        "connecting ramp proportional share",
        (fa - s * a / (a + b)).abs() < 1e-15 && (fb - s * b / (a + b)).abs() < 1e-15 && (fa / fb - a / b).abs() < 1e-12,
        format!("{fa} {fb}"),
    );

    // cell density update
    let e45 = ExpresswayId::new(4, 5);
    let cell = CellState {
        kind: CellKind::Mainline {
            expressway: e45,
            position: 1,
        },
        classes: BTreeMap::from([((0, 1), 0.0)]),
    };
    let next = update_cell_density(&cell, &BTreeMap::from([((0, 1), 1.0)]), &BTreeMap::new(), 10.0, 500.0).unwrap();
    c.close("density +0.02 veh/m", next.total(), 10.0 / 500.0 * 1.0, 1e-15);

    // route times at free flow
    let r1 = Route {
        od: (1, 1),
        nodes: vec![RouteNode::Subregion(1)],
    };
    let design = mask_of(net, &[(4, 5)]);
    let empty = Conditions::default();
    c.close(
        "route {1} at n -> 0",
        route_travel_time(net, &net.empty_design(), &r1, &empty, sc.sim.speed_floor).unwrap(),
        4800.0 / 15.0,
        1e-9,
    );
    let via = Route {
        od: (4, 5),
        nodes: vec![RouteNode::Subregion(4), RouteNode::Expressway(e45), RouteNode::Subregion(5)],
    };
    let ramp_t = 500.0 / (40.0 / 3.6);
    let main_t = 12.0 * 500.0 / (80.0 / 3.6);
    c.close("expressway part at free flow", ramp_t + main_t, 315.0, 1e-9);
    c.close(
        "route 4 -> E45 -> 5 at free flow",
        route_travel_time(net, &design, &via, &empty, sc.sim.speed_floor).unwrap(),
        5500.0 / 15.0 + ramp_t + main_t + ramp_t + 4500.0 / 15.0,
        1e-9,
    );

    // logit and split
    let theta = logit_probabilities(&[600.0, 900.0], 0.01).unwrap();
    let want0 = 1.0 / (1.0 + (-3.0f64).exp());
    c.close("logit first", theta[0], want0, 1e-12);
    c.close("logit second", theta[1], 1.0 - want0, 1e-12);
    c.close("logit rounded", theta[0], 0.9526, 5e-5);
    let q = split_demand(3400.0, &[0.9526, 0.0474]);
    c.close("split first", q[0], 3238.84, 1e-9);
    c.close("split second", q[1], 161.16, 1e-9);

    // internal equilibrium holds the accumulation
    let n_star = 2000.0;
    let mut single = endp::scenario::case_study();
    single.network.subregions.truncate(1);
    single.network.boundaries.clear();
    single.network.candidates.clear();
    single.demand = endp::assignment::DemandProfile::constant(vec![vec![oracle_p(n_star) / 4800.0]], single.sim.horizon());
    let mut sim = Simulation::new(&single, &single.network.empty_design()).unwrap();
    sim.set_initial_occupancy(0, n_star).unwrap();
    let mut drift: f64 = 0.0;
    while !sim.is_finished() {
        sim.step().unwrap();
        drift = drift.max((sim.occupancy()[0] - n_star).abs());
    }
    c.close("equilibrium accumulation drift", drift, 0.0, 1e-9 * n_star);

    // horizon and TTS
    c.truth("360 steps", sc.sim.steps == (3600.0 / 10.0) as usize, format!("{}", sc.sim.steps));
    let flat = Trajectory {
        ts: 10.0,
        cell_length: 500.0,
        subregion_ids: vec![1],
        accumulation: vec![vec![100.0]; 360],
        ..Default::default()
    };
    c.close("TTS of 100 veh for 1 h", tts(&flat), 100.0 * 3600.0 / 3600.0, 1e-9);
    let ex = Trajectory {
        ts: 10.0,
        cell_length: 500.0,
        subregion_ids: vec![1],
        accumulation: vec![vec![0.0]; 360],
        expressways: vec![e45],
        built: vec![true],
        expressway_density: vec![vec![12.0 * 0.02]; 360],
        ..Default::default()
    };
    c.close("TTS of 12 cells at 0.02 veh/m", tts(&ex), 12.0 * 500.0 * 0.02 * 1.0, 1e-9);

    // the 50M feasible set
    let costs: Vec<f64> = PAIR_LENGTHS_M.iter().map(|(_, l)| l / 1000.0 * USD_PER_KM).collect();
    let mut agree = true;
    let mut all_single = true;
    for mask in 0u64..256 {
        let cost: f64 = (0..8).filter(|k| mask >> k & 1 == 1).map(|k| costs[k]).sum();
        let brute = cost <= 50e6;
        agree &= brute == is_budget_feasible(net, &DesignVector::from_mask(mask, 8), 50e6);
        if brute {
            all_single &= mask.count_ones() <= 1;
        }
    }
    c.truth("50M feasible set matches brute force", agree, "");
    c.truth("50M feasible set holds at most one pair", all_single, "");

    c
}

/// One randomized conservation scenario on the case-study network. Rates
/// stay within the case-study envelope: at most 3400 veh/h per OD pair for
/// up to 30 min, then at most half of that. Exogenous loading is not gated,
/// so heavier demand can legitimately push a reservoir past `n_max`.
pub const MAX_RATE_VEH_H: f64 = 3400.0;
pub const MAX_LOAD_STEPS: usize = 180;
pub const MAX_TAIL_SCALE: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct RandomCase {
    /// First segment OD rates, veh/h.
    pub rates: Vec<Vec<f64>>,
    /// Step at which the second segment starts.
    pub switch_step: usize,
    /// Second segment rates as a fraction of the first.
    pub tail_scale: f64,
    pub mask: u64,
    pub mu: f64,
    pub c_ij_veh_h: f64,
    pub per_class: bool,
}

impl RandomCase {
    pub fn sample(rng: &mut impl rand::Rng) -> Self {
        Self {
            rates: (0..5).map(|_| (0..5).map(|_| rng.gen_range(0.0..MAX_RATE_VEH_H)).collect()).collect(),
            switch_step: rng.gen_range(1..=MAX_LOAD_STEPS),
            tail_scale: rng.gen_range(0.0..MAX_TAIL_SCALE),
            mask: rng.gen_range(0..256),
            mu: rng.gen_range(0.0..0.05),
            c_ij_veh_h: rng.gen_range(1000.0..6000.0),
            per_class: rng.gen_bool(0.5),
        }
    }

    pub fn scenario(&self) -> endp::Scenario {
        use endp::assignment::{DemandProfile, DemandSegment};
        let mut sc = case_study();
        let ts = sc.sim.ts;
        let first: Vec<Vec<f64>> = self.rates.iter().map(|r| r.iter().map(|q| q * VEH_H).collect()).collect();
        let tail = first.iter().map(|r| r.iter().map(|q| q * self.tail_scale).collect()).collect();
        sc.demand = DemandProfile {
            segments: vec![
                DemandSegment {
                    start: 0.0,
                    end: self.switch_step as f64 * ts,
                    rates: first,
                },
                DemandSegment {
                    start: self.switch_step as f64 * ts,
                    end: sc.sim.horizon(),
                    rates: tail,
                },
            ],
        };
        sc.apply_override("mu", &self.mu.to_string()).unwrap();
        sc.apply_override("c_ij", &format!("{} veh/h", self.c_ij_veh_h)).unwrap();
        sc.apply_override("boundary_mode", if self.per_class { "per-class" } else { "shared" }).unwrap();
        sc
    }

    pub fn design(&self) -> DesignVector {
        DesignVector::from_mask(self.mask, 8)
    }
}

/// Runs `design` step by step, checking every element's balance and bounds
/// after each step. Returns the final audit.
pub fn checked_run(sc: &endp::Scenario, design: &DesignVector) -> Result<endp::engine::Audit, String> {
    const STEP_TOL: f64 = 1e-9;
    let ts = sc.sim.ts;
    let mut sim = Simulation::new(sc, design).map_err(|e| e.to_string())?;
    while !sim.is_finished() {
        let t = sim.current_step();
        sim.step().map_err(|e| format!("step {t}: {e}"))?;
        for b in sim.last_balance() {
            let stored = (b.after - b.before) * b.extent;
            let moved = ts * (b.inflow - b.outflow);
            let scale = 1f64.max(b.before * b.extent).max(ts * (b.inflow + b.outflow));
            if (stored - moved).abs() > STEP_TOL * scale {
                return Err(format!("step {t} {}: stored {stored} vs moved {moved}", b.label));
            }
            if b.after < 0.0 || b.after > b.stock_max * (1.0 + STEP_TOL) {
                return Err(format!("step {t} {}: stock {} outside [0, {}]", b.label, b.after, b.stock_max));
            }
            if b.inflow < 0.0 || b.outflow < 0.0 {
                return Err(format!("step {t} {}: negative flow", b.label));
            }
            if b.is_cell && (b.inflow > b.capacity * (1.0 + STEP_TOL) || b.outflow > b.capacity * (1.0 + STEP_TOL)) {
                return Err(format!(
                    "step {t} {}: flows {} / {} exceed capacity {}",
                    b.label, b.inflow, b.outflow, b.capacity
                ));
            }
        }
        for (s, &x) in sim.occupancy().iter().enumerate() {
            if !(x >= 0.0) {
                return Err(format!("step {t}: class slot {s} holds {x}"));
            }
        }
    }
    let audit = sim.audit();
    if audit.relative_error() > 1e-6 {
        return Err(format!("audit {audit:?} off by {}", audit.relative_error()));
    }
    Ok(audit)
}
