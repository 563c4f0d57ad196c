//! MFD reservoir kernels: production, speed, trip completion, receiving
//! capacity, constrained transfers and the accumulation update.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::gate::{advance, gated_flow};
use crate::network::SubregionParams;

const RANGE_TOL: f64 = 1e-9;

fn check_range(params: &SubregionParams, n: f64) -> Result<()> {
    if n < -RANGE_TOL || n > params.n_max * (1.0 + RANGE_TOL) || n.is_nan() {
        return Err(Error::OutOfRange {
            quantity: "accumulation",
            value: n,
            max: params.n_max,
        });
    }
    Ok(())
}

/// Travel production `P(n)` in veh·m/s, floored at zero.
pub fn production(params: &SubregionParams, n: f64) -> Result<f64> {
    check_range(params, n)?;
    Ok(params.mfd.eval(n.max(0.0)).max(0.0))
}

/// Space-mean speed `P(n)/n`; the free-flow limit `a1` at `n = 0`.
pub fn speed(params: &SubregionParams, n: f64) -> Result<f64> {
    check_range(params, n)?;
    if n <= 0.0 {
        return Ok(params.mfd.a1);
    }
    Ok(production(params, n)? / n)
}

/// Completion rate of one class holding `n_class` of the `n_total` vehicles.
pub fn trip_completion_rate(params: &SubregionParams, n_class: f64, n_total: f64) -> Result<f64> {
    if n_total <= 0.0 {
        return Ok(0.0);
    }
    Ok(n_class / n_total * production(params, n_total)? / params.avg_trip_length)
}

/// `c_max · (1 − n / n_max)`, floored at zero.
pub fn receiving_capacity(params: &SubregionParams, n: f64) -> Result<f64> {
    check_range(params, n)?;
    Ok((params.c_max * (1.0 - n / params.n_max)).max(0.0))
}

/// Arterial transfer into an adjacent subregion. `competing` is the total
/// demand into the receiver, off-ramp demands included.
pub fn transfer_to_subregion(m: f64, boundary_capacity: f64, competing: f64, receiving: f64) -> f64 {
    gated_flow(m, boundary_capacity, competing, receiving)
}

/// Transfer from a subregion into the on-ramp of one of its expressways.
pub fn transfer_to_onramp(m: f64, ramp_capacity: f64, competing: f64, ramp_supply: f64) -> f64 {
    gated_flow(m, ramp_capacity, competing, ramp_supply)
}

/// Class key inside a reservoir: `(route index, node position in route)`.
pub type ClassKey = (usize, usize);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubregionState {
    pub classes: BTreeMap<ClassKey, f64>,
}

impl SubregionState {
    pub fn total(&self) -> f64 {
        self.classes.values().sum()
    }
}

/// One explicit Euler step of the accumulation equation. Flows are per
/// class in veh/s; missing entries are zero.
pub fn update_accumulation(
    state: &SubregionState,
    inflows: &BTreeMap<ClassKey, f64>,
    outflows: &BTreeMap<ClassKey, f64>,
    ts: f64,
) -> Result<SubregionState> {
    let mut classes = state.classes.clone();
    for k in inflows.keys().chain(outflows.keys()) {
        classes.entry(*k).or_insert(0.0);
    }
    for (k, n) in classes.iter_mut() {
        let q = inflows.get(k).copied().unwrap_or(0.0);
        let m = outflows.get(k).copied().unwrap_or(0.0);
        *n = advance(*n, q, m, ts, 1.0)?;
    }
    Ok(SubregionState { classes })
}
