//! The min-of-three transfer rule shared by every MFD and CTM boundary, and
//! the explicit Euler step used for both accumulations and densities.

use crate::error::{Error, Result};

/// Proportional share of `supply` owed to `demand` among `competing` total
/// demand. With no competition the share is the demand itself.
#[inline]
pub fn proportional_share(demand: f64, competing: f64, supply: f64) -> f64 {
    if competing > 0.0 {
        demand / competing * supply
    } else {
        demand
    }
}

/// `min{demand, cap, demand / competing · supply}`, floored at zero.
#[inline]
pub fn gated_flow(demand: f64, cap: f64, competing: f64, supply: f64) -> f64 {
    demand
        .min(cap)
        .min(proportional_share(demand, competing, supply))
        .max(0.0)
}

/// Supply per unit of competing demand, so that `demand · ratio` is the
/// proportional share. 1 with no competition.
#[inline]
pub fn share_ratio(competing: f64, supply: f64) -> f64 {
    if competing > 0.0 {
        supply / competing
    } else {
        1.0
    }
}

/// [`gated_flow`] with the share ratio of the receiver precomputed.
#[inline]
pub fn gated_flow_ratio(demand: f64, cap: f64, ratio: f64) -> f64 {
    // plain comparisons; inputs are finite
    let mut f = if cap < demand { cap } else { demand };
    let share = demand * ratio;
    if share < f {
        f = share;
    }
    if f > 0.0 {
        f
    } else {
        0.0
    }
}

/// Largest outflow (per second) that cannot drive `stock` negative in one
/// step. `extent` is 1 for vehicle counts and the cell length for densities.
#[inline]
pub fn outflow_limit(stock: f64, extent: f64, ts: f64) -> f64 {
    stock * extent / ts
}

/// `stock + ts/extent · (inflow − min(outflow, limit))`.
pub fn advance(stock: f64, inflow: f64, outflow: f64, ts: f64, extent: f64) -> Result<f64> {
    let out = outflow.min(outflow_limit(stock, extent, ts));
    let next = stock + ts / extent * (inflow - out);
    if next < 0.0 {
        if next > -1e-9 * stock.max(1.0) {
            return Ok(0.0);
        }
        return Err(Error::InvariantViolation {
            step: 0,
            element: "class".into(),
            detail: format!("negative stock {next} after clamped update"),
        });
    }
    Ok(next)
}
