//! Fixtures built in code, independent of the bundled scenario files.

use crate::assignment::{DemandProfile, DemandSegment, LogitParams};
use crate::engine::SimConfig;
use crate::network::{BoundaryLink, CandidateExpressway, FundamentalDiagram, Mfd, MixedNetwork, SubregionParams};
use crate::optimizer::OptimizerConfig;
use crate::scenario::Scenario;

pub const VEH_H: f64 = 1.0 / 3600.0;

pub fn case_mfd() -> Mfd {
    Mfd {
        a3: 1.4877e-7,
        a2: -2.9815e-3,
        a1: 15.0,
    }
}

pub fn case_study_network() -> MixedNetwork {
    let lengths = [4800.0, 5200.0, 4700.0, 5500.0, 4500.0];
    let subregions = lengths
        .iter()
        .enumerate()
        .map(|(k, &l)| SubregionParams::new(k as u32 + 1, case_mfd(), l, 10_000.0, 12_000.0 * VEH_H).unwrap())
        .collect();
    let mut boundaries = Vec::new();
    for (a, b) in [(1, 2), (1, 4), (1, 5), (2, 1), (2, 3), (2, 5), (3, 2), (3, 4), (3, 5), (4, 1), (4, 3), (4, 5), (5, 1), (5, 2), (5, 3), (5, 4)] {
        boundaries.push(BoundaryLink {
            from: a,
            to: b,
            capacity: 4000.0 * VEH_H,
        });
    }
    let pairs = [
        ((1, 2), 6500.0),
        ((1, 4), 6000.0),
        ((1, 5), 5500.0),
        ((2, 3), 6500.0),
        ((2, 5), 6000.0),
        ((3, 4), 6500.0),
        ((3, 5), 5500.0),
        ((4, 5), 6000.0),
    ];
    let mut candidates = Vec::new();
    for ((a, b), len) in pairs {
        for (o, d) in [(a, b), (b, a)] {
            candidates.push(CandidateExpressway {
                origin: o,
                destination: d,
                mainline_length: len,
                cell_length: 500.0,
            });
        }
    }
    candidates.sort_by_key(|c| (c.origin, c.destination));
    MixedNetwork {
        subregions,
        boundaries,
        candidates,
        mainline_fd: FundamentalDiagram::new(80.0 / 3.6, 6000.0 * VEH_H, 0.375).unwrap(),
        ramp_fd: FundamentalDiagram::new(40.0 / 3.6, 3000.0 * VEH_H, 0.225).unwrap(),
        unit_cost_per_m: 5000.0,
    }
}

pub fn table4_veh_s() -> Vec<Vec<f64>> {
    [
        [3400.0, 3200.0, 3000.0, 3200.0, 3400.0],
        [3200.0, 3400.0, 3200.0, 3000.0, 3000.0],
        [3000.0, 3200.0, 3400.0, 3200.0, 3400.0],
        [3200.0, 3000.0, 3200.0, 3400.0, 3000.0],
        [3400.0, 3000.0, 3400.0, 3000.0, 3400.0],
    ]
    .iter()
    .map(|r| r.iter().map(|q| q * VEH_H).collect())
    .collect()
}

/// Table-4 demand for 30 min, then nothing.
pub fn case_study_scenario() -> Scenario {
    Scenario {
        name: "case".into(),
        network: case_study_network(),
        demand: DemandProfile {
            segments: vec![
                DemandSegment {
                    start: 0.0,
                    end: 1800.0,
                    rates: table4_veh_s(),
                },
                DemandSegment {
                    start: 1800.0,
                    end: 3600.0,
                    rates: vec![vec![0.0; 5]; 5],
                },
            ],
        },
        sim: SimConfig::default(),
        logit: LogitParams::default(),
        optimizer: OptimizerConfig::default(),
        budgets: vec![0.0, 50e6, 100e6, 150e6, 200e6, 250e6],
    }
}

/// One subregion, no expressways, constant internal demand `q` veh/s.
pub fn single_zone_scenario(q: f64) -> Scenario {
    let mut net = case_study_network();
    net.subregions.truncate(1);
    net.boundaries.clear();
    net.candidates.clear();
    let sim = SimConfig::default();
    Scenario {
        name: "single".into(),
        demand: DemandProfile::constant(vec![vec![q]], sim.horizon()),
        network: net,
        sim,
        logit: LogitParams::default(),
        optimizer: OptimizerConfig::default(),
        budgets: vec![],
    }
}
