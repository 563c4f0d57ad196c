//! Route travel times and logit route choice for newly generated demand.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expressway::{cell_speed, CellKind};
use crate::network::{DesignVector, MixedNetwork, SubregionId};
use crate::routes::{Route, RouteNode};
use crate::subregion::speed;

pub const DEFAULT_MU: f64 = 0.005;
pub const DEFAULT_SPEED_FLOOR: f64 = 0.1;

/// One piece of a piecewise-constant OD demand profile. `rates[o][d]` is in
/// veh/s, indexed by the position of the subregion in the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSegment {
    /// s
    pub start: f64,
    /// s
    pub end: f64,
    pub rates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    pub segments: Vec<DemandSegment>,
}

impl DemandProfile {
    /// A single constant segment over `[0, horizon)`.
    pub fn constant(rates: Vec<Vec<f64>>, horizon: f64) -> Self {
        Self {
            segments: vec![DemandSegment {
                start: 0.0,
                end: horizon,
                rates,
            }],
        }
    }

    pub fn zero(zones: usize, horizon: f64) -> Self {
        Self::constant(vec![vec![0.0; zones]; zones], horizon)
    }

    /// The segment active at time `t` (segments are half-open).
    pub fn segment_at(&self, t: f64) -> Option<&DemandSegment> {
        self.segments.iter().find(|s| s.start <= t && t < s.end)
    }

    pub fn rate(&self, o: usize, d: usize, t: f64) -> f64 {
        self.segment_at(t).map_or(0.0, |s| s.rates[o][d])
    }

    /// Checks that segments tile `[0, horizon)` and every rate is a finite,
    /// non-negative number on a `zones × zones` matrix.
    pub fn validate(&self, zones: usize, horizon: f64) -> Vec<String> {
        let mut v = Vec::new();
        let mut segs: Vec<&DemandSegment> = self.segments.iter().collect();
        segs.sort_by(|a, b| a.start.total_cmp(&b.start));
        let mut cursor = 0.0;
        for s in &segs {
            if !(s.end > s.start) {
                v.push(format!("demand segment [{}, {}) s is empty or reversed", s.start, s.end));
            }
            if s.start > cursor {
                v.push(format!("demand coverage gap: [{cursor}, {}) s has no segment", s.start));
            } else if s.start < cursor {
                v.push(format!("demand segments overlap at {} s", s.start));
            }
            cursor = cursor.max(s.end);
            if s.rates.len() != zones || s.rates.iter().any(|r| r.len() != zones) {
                v.push(format!("demand segment at {} s is not a {zones}x{zones} matrix", s.start));
            }
            if s.rates.iter().flatten().any(|&q| !(q >= 0.0 && q.is_finite())) {
                v.push(format!("demand segment at {} s has a negative or non-finite rate", s.start));
            }
        }
        if cursor < horizon {
            v.push(format!("demand coverage gap: [{cursor}, {horizon}) s has no segment"));
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitParams {
    /// Route-time sensitivity, 1/s.
    pub mu: f64,
}

impl Default for LogitParams {
    fn default() -> Self {
        Self { mu: DEFAULT_MU }
    }
}

/// Network conditions needed to price a route: subregion accumulations and
/// total cell densities. Absent cells are empty.
#[derive(Debug, Clone, Default)]
pub struct Conditions {
    pub accumulation: BTreeMap<SubregionId, f64>,
    pub density: BTreeMap<CellKind, f64>,
}

/// Travel time of `route` in seconds. Each subregion contributes
/// `L̄ / v(n)`, plus its off-ramp when entered from an expressway; each
/// expressway contributes its entry ramp (on-ramp or connecting ramp) and
/// all of its mainline cells. Speeds are floored at `speed_floor`.
pub fn route_travel_time(
    net: &MixedNetwork,
    design: &DesignVector,
    route: &Route,
    cond: &Conditions,
    speed_floor: f64,
) -> Result<f64> {
    route.check(net, design)?;
    let ls = net
        .candidates
        .first()
        .map(|c| c.cell_length)
        .unwrap_or(0.0);
    let cell_time = |kind: CellKind| {
        let fd = if kind.is_ramp() { &net.ramp_fd } else { &net.mainline_fd };
        let k = cond.density.get(&kind).copied().unwrap_or(0.0);
        ls / cell_speed(fd, k).max(speed_floor)
    };
    let mut total = 0.0;
    for (k, node) in route.nodes.iter().enumerate() {
        let prev = if k == 0 { None } else { Some(route.nodes[k - 1]) };
        match *node {
            RouteNode::Subregion(i) => {
                let p = net.subregion(i)?;
                let n = cond.accumulation.get(&i).copied().unwrap_or(0.0);
                total += p.avg_trip_length / speed(p, n)?.max(speed_floor);
                if let Some(RouteNode::Expressway(up)) = prev {
                    total += cell_time(CellKind::OffRamp(up));
                }
            }
            RouteNode::Expressway(e) => {
                let entry = match prev {
                    Some(RouteNode::Expressway(up)) => CellKind::Connecting { from: up, to: e },
                    _ => CellKind::OnRamp(e),
                };
                total += cell_time(entry);
                let cells = net
                    .candidate(e)
                    .ok_or_else(|| Error::IllegalRoute(format!("{e} is not a candidate")))?
                    .cell_count();
                for position in 1..=cells {
                    total += cell_time(CellKind::Mainline { expressway: e, position });
                }
            }
        }
    }
    Ok(total)
}

/// Logit choice probabilities `exp(−μτ) / Σ exp(−μτ)`, shifted by the
/// minimum time for stability.
pub fn logit_probabilities(times: &[f64], mu: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; times.len()];
    logit_into(times, mu, &mut out)?;
    Ok(out)
}

/// Allocation-free variant of [`logit_probabilities`].
pub fn logit_into(times: &[f64], mu: f64, out: &mut [f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::EmptyRouteSet);
    }
    let best = times.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (w, &t) in out.iter_mut().zip(times) {
        *w = (-mu * (t - best)).exp();
        sum += *w;
    }
    for w in out.iter_mut() {
        *w /= sum;
    }
    Ok(())
}

/// Route flows `θ_ρ · q`.
pub fn split_demand(q: f64, probabilities: &[f64]) -> Vec<f64> {
    probabilities.iter().map(|p| p * q).collect()
}
