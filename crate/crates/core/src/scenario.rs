//! Scenario files.
//!
//! A scenario is a TOML document with the sections `[subregions]`,
//! `[adjacency]`, `[candidates]`, `[fd]`, `[demand]`, `[sim]`,
//! `[optimizer]` and `[costs]`. Every physical quantity is a string with a
//! unit suffix (`"4800 m"`, `"80 km/h"`, `"5 M$/km"`); demand matrices carry
//! a `unit` field. Values are converted to SI on load. [`to_scenario_text`]
//! writes a scenario back out in SI units.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assignment::{DemandProfile, DemandSegment, LogitParams, DEFAULT_MU, DEFAULT_SPEED_FLOOR};
use crate::engine::{BoundaryMode, SimConfig};
use crate::error::{Error, Result};
use crate::network::{
    validate_network, BoundaryLink, CandidateExpressway, FundamentalDiagram, Mfd, MixedNetwork, SubregionParams,
};
use crate::optimizer::{InfeasibleMode, OptimizerConfig};
use crate::routes::DEFAULT_MAX_NODES;
use crate::units::{format_quantity, parse_quantity, Dimension};

pub const DEFAULT_C_MAX: &str = "12000 veh/h";
pub const DEFAULT_BOUNDARY_CAPACITY: &str = "4000 veh/h";
pub const DEFAULT_MAINLINE_JAM: &str = "375 veh/km";
pub const DEFAULT_RAMP_JAM: &str = "225 veh/km";
pub const DEFAULT_UNIT_COST: &str = "5 M$/km";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub network: MixedNetwork,
    pub demand: DemandProfile,
    pub sim: SimConfig,
    pub logit: LogitParams,
    pub optimizer: OptimizerConfig,
    /// $
    pub budgets: Vec<f64>,
}

impl Scenario {
    /// All validation messages; empty when the scenario is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut v = validate_network(&self.network).violations;
        v.extend(self.sim.validate(&self.network));
        v.extend(self.demand.validate(self.network.subregions.len(), self.sim.horizon()));
        if !(self.logit.mu >= 0.0) {
            v.push("logit mu must be >= 0".into());
        }
        v.extend(self.optimizer.validate());
        if self.budgets.iter().any(|b| !(*b >= 0.0)) {
            v.push("budgets must be >= 0".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Overrides one calibration parameter. Accepted keys: `mu`,
    /// `boundary_capacity`, `c_max`, `jam_density_mainline`,
    /// `jam_density_ramp`, `step`, `speed_floor`, `max_nodes`,
    /// `boundary_mode`, `unit_cost`. A bare number is read in SI units.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        let q = |dim: Dimension| -> Result<f64> {
            match value.trim().parse::<f64>() {
                Ok(x) => Ok(x),
                Err(_) => parse_quantity(key, value, dim),
            }
        };
        match key {
            "mu" => self.logit.mu = q(Dimension::Rate)?,
            "boundary_capacity" | "c_ij" => {
                let c = q(Dimension::Flow)?;
                self.network.boundaries.iter_mut().for_each(|b| b.capacity = c);
            }
            "c_max" => {
                let c = q(Dimension::Flow)?;
                self.network.subregions.iter_mut().for_each(|s| s.c_max = c);
            }
            "jam_density_mainline" | "kj_mainline" => self.network.mainline_fd.jam_density = q(Dimension::Density)?,
            "jam_density_ramp" | "kj_ramp" => self.network.ramp_fd.jam_density = q(Dimension::Density)?,
            "step" | "ts" => {
                let horizon = self.sim.horizon();
                self.sim.ts = q(Dimension::Time)?;
                self.sim.steps = (horizon / self.sim.ts).round() as usize;
            }
            "speed_floor" => self.sim.speed_floor = q(Dimension::Speed)?,
            "max_nodes" => {
                self.sim.max_nodes = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("max_nodes: `{value}` is not an integer")))?
            }
            "boundary_mode" => self.sim.boundary_mode = parse_boundary_mode(value.trim())?,
            "unit_cost" => self.network.unit_cost_per_m = q(Dimension::MoneyPerLength)?,
            other => return Err(Error::Config(format!("unknown parameter `{other}`"))),
        }
        for fd in [&self.network.mainline_fd, &self.network.ramp_fd] {
            FundamentalDiagram::new(fd.free_flow_speed, fd.capacity, fd.jam_density)?;
        }
        self.validate()
    }
}

// ---------------------------------------------------------------------------
// On-disk format

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    subregions: BTreeMap<String, RawSubregion>,
    adjacency: RawAdjacency,
    candidates: BTreeMap<String, String>,
    fd: RawFds,
    demand: RawDemand,
    sim: RawSim,
    #[serde(default)]
    optimizer: RawOptimizer,
    #[serde(default)]
    costs: RawCosts,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubregion {
    /// `[a3, a2, a1]` of `P(n)` in veh·m/s.
    production: [f64; 3],
    avg_trip_length: String,
    n_max: String,
    #[serde(default)]
    c_max: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAdjacency {
    #[serde(default)]
    capacity: Option<String>,
    /// Undirected pairs; a boundary link is created in each direction.
    links: Vec<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    overrides: Vec<RawLinkOverride>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinkOverride {
    from: u32,
    to: u32,
    capacity: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFds {
    mainline: RawFd,
    ramp: RawFd,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFd {
    free_flow_speed: String,
    capacity: String,
    #[serde(default)]
    jam_density: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDemand {
    segment: Vec<RawSegment>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    start: String,
    end: String,
    #[serde(default)]
    unit: Option<String>,
    #[serde(default)]
    matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    zero: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    #[serde(default)]
    step: Option<String>,
    horizon: String,
    cell_length: String,
    #[serde(default)]
    speed_floor: Option<String>,
    #[serde(default)]
    max_route_nodes: Option<usize>,
    #[serde(default)]
    logit_mu: Option<String>,
    /// `shared` (default) or `per-class`.
    #[serde(default)]
    boundary_mode: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    swarm_size: Option<usize>,
    iterations: Option<usize>,
    inertia_start: Option<f64>,
    inertia_end: Option<f64>,
    cognitive: Option<f64>,
    social: Option<f64>,
    velocity_clamp: Option<f64>,
    seed: Option<u64>,
    infeasible: Option<String>,
    exhaustive_cap: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCosts {
    unit_cost: Option<String>,
    #[serde(default)]
    budgets: Vec<String>,
}

fn parse_boundary_mode(s: &str) -> Result<BoundaryMode> {
    match s {
        "shared" => Ok(BoundaryMode::Shared),
        "per-class" => Ok(BoundaryMode::PerClass),
        other => Err(Error::Parse(format!(
            "sim.boundary_mode: `{other}` (expected `shared` or `per-class`)"
        ))),
    }
}

fn boundary_mode_name(m: BoundaryMode) -> &'static str {
    match m {
        BoundaryMode::Shared => "shared",
        BoundaryMode::PerClass => "per-class",
    }
}

fn parse_id(field: &str, key: &str) -> Result<u32> {
    key.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{field}: `{key}` is not a subregion id")))
}

/// Reads a candidate key such as `E12` or `E3-14` into `(from, to)`.
fn parse_candidate_key(key: &str) -> Result<(u32, u32)> {
    let bad = || Error::Parse(format!("candidates: `{key}` is not of the form E<i><j> or E<i>-<j>"));
    let body = key.strip_prefix('E').ok_or_else(bad)?;
    if let Some((a, b)) = body.split_once('-') {
        return Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?));
    }
    if body.len() == 2 && body.chars().all(|c| c.is_ascii_digit()) {
        let (a, b) = body.split_at(1);
        return Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?));
    }
    Err(bad())
}

fn candidate_key(from: u32, to: u32) -> String {
    if from < 10 && to < 10 {
        format!("E{from}{to}")
    } else {
        format!("E{from}-{to}")
    }
}

impl RawScenario {
    fn into_scenario(self) -> Result<Scenario> {
        use Dimension::*;
        let mut subregions = Vec::new();
        for (key, s) in &self.subregions {
            let id = parse_id("subregions", key)?;
            let f = |name: &str| format!("subregions.{key}.{name}");
            let [a3, a2, a1] = s.production;
            subregions.push(SubregionParams {
                id,
                mfd: Mfd { a3, a2, a1 },
                avg_trip_length: parse_quantity(&f("avg_trip_length"), &s.avg_trip_length, Length)?,
                n_max: parse_quantity(&f("n_max"), &s.n_max, Vehicles)?,
                c_max: parse_quantity(&f("c_max"), s.c_max.as_deref().unwrap_or(DEFAULT_C_MAX), Flow)?,
            });
        }
        subregions.sort_by_key(|s| s.id);

        let default_cap = parse_quantity(
            "adjacency.capacity",
            self.adjacency.capacity.as_deref().unwrap_or(DEFAULT_BOUNDARY_CAPACITY),
            Flow,
        )?;
        let mut boundaries = Vec::new();
        for [a, b] in &self.adjacency.links {
            for (from, to) in [(*a, *b), (*b, *a)] {
                boundaries.push(BoundaryLink {
                    from,
                    to,
                    capacity: default_cap,
                });
            }
        }
        for o in &self.adjacency.overrides {
            let cap = parse_quantity(&format!("adjacency.overrides {}->{}", o.from, o.to), &o.capacity, Flow)?;
            let link = boundaries
                .iter_mut()
                .find(|b| b.from == o.from && b.to == o.to)
                .ok_or_else(|| Error::Parse(format!("adjacency.overrides: no link {}->{}", o.from, o.to)))?;
            link.capacity = cap;
        }
        boundaries.sort_by_key(|b| (b.from, b.to));

        let cell_length = parse_quantity("sim.cell_length", &self.sim.cell_length, Length)?;
        let mut candidates = Vec::new();
        for (key, len) in &self.candidates {
            let (origin, destination) = parse_candidate_key(key)?;
            candidates.push(CandidateExpressway {
                origin,
                destination,
                mainline_length: parse_quantity(&format!("candidates.{key}"), len, Length)?,
                cell_length,
            });
        }
        candidates.sort_by_key(|c| (c.origin, c.destination));

        let fd = |name: &str, raw: &RawFd, jam_default: &str| -> Result<FundamentalDiagram> {
            let f = |x: &str| format!("fd.{name}.{x}");
            FundamentalDiagram::new(
                parse_quantity(&f("free_flow_speed"), &raw.free_flow_speed, Speed)?,
                parse_quantity(&f("capacity"), &raw.capacity, Flow)?,
                parse_quantity(&f("jam_density"), raw.jam_density.as_deref().unwrap_or(jam_default), Density)?,
            )
            .map_err(|e| Error::Parse(format!("fd.{name}: {e}")))
        };
        let mainline_fd = fd("mainline", &self.fd.mainline, DEFAULT_MAINLINE_JAM)?;
        let ramp_fd = fd("ramp", &self.fd.ramp, DEFAULT_RAMP_JAM)?;
        let unit_cost_per_m = parse_quantity(
            "costs.unit_cost",
            self.costs.unit_cost.as_deref().unwrap_or(DEFAULT_UNIT_COST),
            MoneyPerLength,
        )?;

        let zones = subregions.len();
        let mut segments = Vec::new();
        for (k, seg) in self.demand.segment.iter().enumerate() {
            let f = |x: &str| format!("demand.segment[{k}].{x}");
            let start = parse_quantity(&f("start"), &seg.start, Time)?;
            let end = parse_quantity(&f("end"), &seg.end, Time)?;
            let rates = match (&seg.matrix, seg.zero) {
                (Some(_), true) => return Err(Error::Parse(format!("{}: give either `matrix` or `zero`", f("matrix")))),
                (None, false) => return Err(Error::Parse(format!("{}: missing", f("matrix")))),
                (None, true) => vec![vec![0.0; zones]; zones],
                (Some(m), false) => {
                    let unit = seg
                        .unit
                        .as_deref()
                        .ok_or_else(|| Error::Parse(format!("{}: missing", f("unit"))))?;
                    let factor = parse_quantity(&f("unit"), &format!("1 {unit}"), Flow)?;
                    m.iter().map(|row| row.iter().map(|q| q * factor).collect()).collect()
                }
            };
            segments.push(DemandSegment { start, end, rates });
        }

        let ts = parse_quantity("sim.step", self.sim.step.as_deref().unwrap_or("10 s"), Time)?;
        let horizon = parse_quantity("sim.horizon", &self.sim.horizon, Time)?;
        let steps = (horizon / ts).round();
        if (steps * ts - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::Parse(format!(
                "sim.horizon: {horizon} s is not a whole number of {ts} s steps"
            )));
        }
        let sim = SimConfig {
            ts,
            steps: steps as usize,
            cell_length,
            speed_floor: parse_quantity(
                "sim.speed_floor",
                self.sim.speed_floor.as_deref().unwrap_or(&format!("{DEFAULT_SPEED_FLOOR} m/s")),
                Speed,
            )?,
            max_nodes: self.sim.max_route_nodes.unwrap_or(DEFAULT_MAX_NODES),
            boundary_mode: parse_boundary_mode(self.sim.boundary_mode.as_deref().unwrap_or("shared"))?,
        };
        let logit = LogitParams {
            mu: parse_quantity(
                "sim.logit_mu",
                self.sim.logit_mu.as_deref().unwrap_or(&format!("{DEFAULT_MU} 1/s")),
                Rate,
            )?,
        };

        let d = OptimizerConfig::default();
        let o = &self.optimizer;
        let infeasible = match o.infeasible.as_deref() {
            None | Some("repair") => InfeasibleMode::Repair,
            Some("penalty") => InfeasibleMode::Penalty,
            Some(other) => {
                return Err(Error::Parse(format!(
                    "optimizer.infeasible: `{other}` (expected `repair` or `penalty`)"
                )))
            }
        };
        let optimizer = OptimizerConfig {
            swarm_size: o.swarm_size.unwrap_or(d.swarm_size),
            iterations: o.iterations.unwrap_or(d.iterations),
            inertia_start: o.inertia_start.unwrap_or(d.inertia_start),
            inertia_end: o.inertia_end.unwrap_or(d.inertia_end),
            cognitive: o.cognitive.unwrap_or(d.cognitive),
            social: o.social.unwrap_or(d.social),
            velocity_clamp: o.velocity_clamp.unwrap_or(d.velocity_clamp),
            seed: o.seed.unwrap_or(d.seed),
            infeasible,
            exhaustive_cap: o.exhaustive_cap.unwrap_or(d.exhaustive_cap),
            exec: d.exec,
        };
        let budgets = self
            .costs
            .budgets
            .iter()
            .enumerate()
            .map(|(k, b)| parse_quantity(&format!("costs.budgets[{k}]"), b, Money))
            .collect::<Result<Vec<_>>>()?;

        Ok(Scenario {
            name: self.name,
            network: MixedNetwork {
                subregions,
                boundaries,
                candidates,
                mainline_fd,
                ramp_fd,
                unit_cost_per_m,
            },
            demand: DemandProfile { segments },
            sim,
            logit,
            optimizer,
            budgets,
        })
    }

    fn from_scenario(sc: &Scenario) -> Self {
        use Dimension::*;
        let net = &sc.network;
        let subregions = net
            .subregions
            .iter()
            .map(|s| {
                (
                    s.id.to_string(),
                    RawSubregion {
                        production: [s.mfd.a3, s.mfd.a2, s.mfd.a1],
                        avg_trip_length: format_quantity(s.avg_trip_length, Length),
                        n_max: format_quantity(s.n_max, Vehicles),
                        c_max: Some(format_quantity(s.c_max, Flow)),
                    },
                )
            })
            .collect();
        let mut links = Vec::new();
        let mut overrides = Vec::new();
        for b in &net.boundaries {
            if b.from < b.to {
                links.push([b.from, b.to]);
            }
            overrides.push(RawLinkOverride {
                from: b.from,
                to: b.to,
                capacity: format_quantity(b.capacity, Flow),
            });
        }
        let candidates = net
            .candidates
            .iter()
            .map(|c| (candidate_key(c.origin, c.destination), format_quantity(c.mainline_length, Length)))
            .collect();
        let fd = |f: &FundamentalDiagram| RawFd {
            free_flow_speed: format_quantity(f.free_flow_speed, Speed),
            capacity: format_quantity(f.capacity, Flow),
            jam_density: Some(format_quantity(f.jam_density, Density)),
        };
        let segment = sc
            .demand
            .segments
            .iter()
            .map(|s| RawSegment {
                start: format_quantity(s.start, Time),
                end: format_quantity(s.end, Time),
                unit: Some(Flow.si_unit().to_string()),
                matrix: Some(s.rates.clone()),
                zero: false,
            })
            .collect();
        let o = &sc.optimizer;
        RawScenario {
            name: sc.name.clone(),
            subregions,
            adjacency: RawAdjacency {
                capacity: None,
                links,
                overrides,
            },
            candidates,
            fd: RawFds {
                mainline: fd(&net.mainline_fd),
                ramp: fd(&net.ramp_fd),
            },
            demand: RawDemand { segment },
            sim: RawSim {
                step: Some(format_quantity(sc.sim.ts, Time)),
                horizon: format_quantity(sc.sim.horizon(), Time),
                cell_length: format_quantity(sc.sim.cell_length, Length),
                speed_floor: Some(format_quantity(sc.sim.speed_floor, Speed)),
                max_route_nodes: Some(sc.sim.max_nodes),
                logit_mu: Some(format_quantity(sc.logit.mu, Rate)),
                boundary_mode: Some(boundary_mode_name(sc.sim.boundary_mode).to_string()),
            },
            optimizer: RawOptimizer {
                swarm_size: Some(o.swarm_size),
                iterations: Some(o.iterations),
                inertia_start: Some(o.inertia_start),
                inertia_end: Some(o.inertia_end),
                cognitive: Some(o.cognitive),
                social: Some(o.social),
                velocity_clamp: Some(o.velocity_clamp),
                seed: Some(o.seed),
                infeasible: Some(
                    match o.infeasible {
                        InfeasibleMode::Repair => "repair",
                        InfeasibleMode::Penalty => "penalty",
                    }
                    .to_string(),
                ),
                exhaustive_cap: Some(o.exhaustive_cap),
            },
            costs: RawCosts {
                unit_cost: Some(format_quantity(net.unit_cost_per_m, MoneyPerLength)),
                budgets: sc.budgets.iter().map(|b| format_quantity(*b, Money)).collect(),
            },
        }
    }
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let sc = raw.into_scenario()?;
    sc.validate()?;
    Ok(sc)
}

/// Reads, unit-converts and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes a scenario in SI units. Parsing the output yields an equal
/// scenario.
pub fn to_scenario_text(sc: &Scenario) -> String {
    let raw = RawScenario::from_scenario(sc);
    toml::to_string(&raw).expect("scenario is always representable as TOML")
}

/// The bundled five-subregion case study.
pub fn case_study() -> Scenario {
    parse_scenario(CASE_STUDY_TEXT).expect("bundled scenario is valid")
}

/// The case study under the alternative OD matrix.
pub fn case_study_alt_demand() -> Scenario {
    parse_scenario(CASE_STUDY_ALT_TEXT).expect("bundled scenario is valid")
}

pub const CASE_STUDY_TEXT: &str = include_str!("../scenarios/yokohama5.scn");
pub const CASE_STUDY_ALT_TEXT: &str = include_str!("../scenarios/yokohama5_alt_demand.scn");
