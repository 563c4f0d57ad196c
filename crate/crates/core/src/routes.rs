//! Legal routes through the mixed network.
//!
//! A route is a node sequence starting and ending at subregions, where
//! every node is a subregion or a built directional expressway and no node
//! is visited twice.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{DesignVector, ExpresswayId, MixedNetwork, SubregionId};

pub const DEFAULT_MAX_NODES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RouteNode {
    Subregion(SubregionId),
    Expressway(ExpresswayId),
}

impl fmt::Display for RouteNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RouteNode::Subregion(i) => write!(f, "{i}"),
            RouteNode::Expressway(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Route {
    pub od: (SubregionId, SubregionId),
    pub nodes: Vec<RouteNode>,
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.nodes.iter().map(|n| n.to_string()).collect();
        write!(f, "{}", parts.join(" -> "))
    }
}

impl Route {
    pub fn position(&self, node: RouteNode) -> Result<usize> {
        self.nodes
            .iter()
            .position(|&n| n == node)
            .ok_or_else(|| Error::NodeNotInRoute(node.to_string()))
    }

    /// `ρ(+node)`; `None` at the destination.
    pub fn next_node(&self, node: RouteNode) -> Result<Option<RouteNode>> {
        let k = self.position(node)?;
        Ok(self.nodes.get(k + 1).copied())
    }

    /// `ρ(-node)`; `None` at the origin.
    pub fn prev_node(&self, node: RouteNode) -> Result<Option<RouteNode>> {
        let k = self.position(node)?;
        Ok(if k == 0 { None } else { Some(self.nodes[k - 1]) })
    }

    /// Verifies the route invariants under `design`.
    pub fn check(&self, net: &MixedNetwork, design: &DesignVector) -> Result<()> {
        let bad = |msg: String| Err(Error::IllegalRoute(format!("{self}: {msg}")));
        let (o, d) = self.od;
        if self.nodes.first() != Some(&RouteNode::Subregion(o)) {
            return bad("does not start at its origin subregion".into());
        }
        if self.nodes.last() != Some(&RouteNode::Subregion(d)) {
            return bad("does not end at its destination subregion".into());
        }
        for (k, n) in self.nodes.iter().enumerate() {
            if self.nodes[..k].contains(n) {
                return bad(format!("node {n} is visited twice"));
            }
            match *n {
                RouteNode::Subregion(i) => {
                    net.subregion(i)?;
                }
                RouteNode::Expressway(e) => {
                    if !net.is_built(design, e) {
                        return bad(format!("{e} is not built"));
                    }
                }
            }
        }
        for w in self.nodes.windows(2) {
            if !is_link(net, design, w[0], w[1]) {
                return bad(format!("no link from {} to {}", w[0], w[1]));
            }
        }
        Ok(())
    }
}

fn is_link(net: &MixedNetwork, design: &DesignVector, a: RouteNode, b: RouteNode) -> bool {
    use RouteNode::*;
    match (a, b) {
        (Subregion(i), Subregion(j)) => net.boundary(i, j).is_some(),
        (Subregion(i), Expressway(e)) => e.from == i && net.is_built(design, e),
        (Expressway(e), Subregion(j)) => e.to == j,
        (Expressway(up), Expressway(down)) => {
            up.to == down.from && up.from != down.to && net.is_built(design, down)
        }
    }
}

fn successors(net: &MixedNetwork, built: &[ExpresswayId], node: RouteNode) -> Vec<RouteNode> {
    let mut out = Vec::new();
    match node {
        RouteNode::Subregion(i) => {
            out.extend(net.neighbors(i).into_iter().map(RouteNode::Subregion));
            out.extend(built.iter().filter(|e| e.from == i).map(|&e| RouteNode::Expressway(e)));
        }
        RouteNode::Expressway(up) => {
            out.push(RouteNode::Subregion(up.to));
            out.extend(
                built
                    .iter()
                    .filter(|e| e.from == up.to && e.to != up.from)
                    .map(|&e| RouteNode::Expressway(e)),
            );
        }
    }
    out
}

/// All legal routes for `od` with at most `max_nodes` nodes, sorted.
pub fn enumerate_routes(
    net: &MixedNetwork,
    design: &DesignVector,
    od: (SubregionId, SubregionId),
    max_nodes: usize,
) -> Result<Vec<Route>> {
    let (o, d) = od;
    net.subregion(o)?;
    net.subregion(d)?;
    net.check_design(design)?;
    if max_nodes == 0 {
        return Err(Error::Config("max_nodes must be >= 1".into()));
    }
    if o == d {
        return Ok(vec![Route {
            od,
            nodes: vec![RouteNode::Subregion(o)],
        }]);
    }
    let built = net.built_expressways(design);
    let mut out = Vec::new();
    let mut path = vec![RouteNode::Subregion(o)];
    dfs(net, &built, RouteNode::Subregion(d), max_nodes, &mut path, &mut |p| {
        out.push(Route { od, nodes: p.to_vec() })
    });
    out.sort();
    Ok(out)
}

fn dfs(
    net: &MixedNetwork,
    built: &[ExpresswayId],
    target: RouteNode,
    max_nodes: usize,
    path: &mut Vec<RouteNode>,
    emit: &mut dyn FnMut(&[RouteNode]),
) {
    let last = *path.last().expect("path is never empty");
    if last == target {
        emit(path);
        return;
    }
    if path.len() == max_nodes {
        return;
    }
    for next in successors(net, built, last) {
        if path.contains(&next) {
            continue;
        }
        path.push(next);
        dfs(net, built, target, max_nodes, path, emit);
        path.pop();
    }
}

/// Routes for every OD pair of a network under one design, computed once
/// per design. OD pairs are ordered by `(o, d)`.
#[derive(Debug, Clone)]
pub struct RouteSet {
    pub by_od: BTreeMap<(SubregionId, SubregionId), Vec<Route>>,
}

impl RouteSet {
    pub fn build(net: &MixedNetwork, design: &DesignVector, max_nodes: usize) -> Result<Self> {
        let ids = net.subregion_ids();
        let mut by_od = BTreeMap::new();
        for &o in &ids {
            for &d in &ids {
                by_od.insert((o, d), enumerate_routes(net, design, (o, d), max_nodes)?);
            }
        }
        Ok(Self { by_od })
    }

    pub fn route_count(&self) -> usize {
        self.by_od.values().map(Vec::len).sum()
    }
}
