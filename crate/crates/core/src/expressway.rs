//! Multi-class cell transmission kernels for expressway mainlines and ramps.
//!
//! Densities are veh/m, flows veh/s. Every transfer between two cells (or
//! from a cell into a subregion) is a [`gated_flow`]: the class demand, the
//! capacity of the sending element, and the class's proportional share of
//! the receiver's supply.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::gate::{advance, gated_flow};
use crate::network::{ExpresswayId, FundamentalDiagram};

/// Sending demand `min(V_f · K, C)`.
pub fn cell_demand(fd: &FundamentalDiagram, density: f64) -> f64 {
    (fd.free_flow_speed * density.max(0.0)).min(fd.capacity)
}

/// Receiving supply `min(ω · (K_j − K), C)`, floored at zero.
pub fn cell_supply(fd: &FundamentalDiagram, density: f64) -> f64 {
    (fd.wave_speed() * (fd.jam_density - density)).min(fd.capacity).max(0.0)
}

/// Speed on the triangular diagram: `V_f` up to critical density, flow over
/// density beyond it.
pub fn cell_speed(fd: &FundamentalDiagram, density: f64) -> f64 {
    if density <= fd.critical_density() {
        fd.free_flow_speed
    } else {
        (fd.wave_speed() * (fd.jam_density - density)).max(0.0) / density
    }
}

/// Merge from an on-ramp (or connecting ramp) into the first mainline cell.
/// `competing` sums on-ramp and connecting-ramp demands into that cell.
pub fn onramp_outflow(demand: f64, ramp_capacity: f64, competing: f64, first_cell_supply: f64) -> f64 {
    gated_flow(demand, ramp_capacity, competing, first_cell_supply)
}

/// Mainline cell `l` to `l + 1`.
pub fn mainline_flow(demand: f64, mainline_capacity: f64, competing: f64, next_supply: f64) -> f64 {
    gated_flow(demand, mainline_capacity, competing, next_supply)
}

/// Last mainline cell into the off-ramp.
pub fn offramp_entry(demand: f64, ramp_capacity: f64, competing: f64, offramp_supply: f64) -> f64 {
    gated_flow(demand, ramp_capacity, competing, offramp_supply)
}

/// Off-ramp into its subregion. `competing` includes the arterial transfer
/// demands into the same subregion.
pub fn offramp_exit(demand: f64, ramp_capacity: f64, competing: f64, receiving: f64) -> f64 {
    gated_flow(demand, ramp_capacity, competing, receiving)
}

/// Last mainline cell into a connecting ramp.
pub fn connramp_entry(demand: f64, ramp_capacity: f64, competing: f64, ramp_supply: f64) -> f64 {
    gated_flow(demand, ramp_capacity, competing, ramp_supply)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellKind {
    /// Mainline cell `position` (1-based) of an expressway.
    Mainline { expressway: ExpresswayId, position: usize },
    OnRamp(ExpresswayId),
    OffRamp(ExpresswayId),
    Connecting { from: ExpresswayId, to: ExpresswayId },
}

impl CellKind {
    pub fn is_ramp(&self) -> bool {
        !matches!(self, CellKind::Mainline { .. })
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellKind::Mainline { expressway, position } => write!(f, "{expressway}[{position}]"),
            CellKind::OnRamp(e) => write!(f, "on-ramp {e}"),
            CellKind::OffRamp(e) => write!(f, "off-ramp {e}"),
            CellKind::Connecting { from, to } => write!(f, "ramp {from}->{to}"),
        }
    }
}

/// Per-class densities of one cell, keyed by `(route index, position)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub kind: CellKind,
    pub classes: BTreeMap<(usize, usize), f64>,
}

impl CellState {
    pub fn total(&self) -> f64 {
        self.classes.values().sum()
    }
}

/// One explicit Euler step of the cell density equation.
pub fn update_cell_density(
    cell: &CellState,
    inflows: &BTreeMap<(usize, usize), f64>,
    outflows: &BTreeMap<(usize, usize), f64>,
    ts: f64,
    cell_length: f64,
) -> Result<CellState> {
    let mut classes = cell.classes.clone();
    for k in inflows.keys().chain(outflows.keys()) {
        classes.entry(*k).or_insert(0.0);
    }
    for (k, density) in classes.iter_mut() {
        let q = inflows.get(k).copied().unwrap_or(0.0);
        let f = outflows.get(k).copied().unwrap_or(0.0);
        *density = advance(*density, q, f, ts, cell_length)?;
    }
    Ok(CellState {
        kind: cell.kind,
        classes,
    })
}
