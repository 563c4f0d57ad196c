//! Static topology of the mixed arterial/expressway network.
//!
//! Subregions are MFD reservoirs linked by one-way boundary passageways.
//! Candidate expressways are directional (`E_ij` runs from subregion `i` to
//! `j`) and come in twin pairs that are built or skipped together, so a
//! [`DesignVector`] holds one bit per *unordered* pair.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type SubregionId = u32;

/// Cubic production function `P(n) = a3·n³ + a2·n² + a1·n` in veh·m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mfd {
    pub a3: f64,
    pub a2: f64,
    pub a1: f64,
}

impl Mfd {
    pub fn eval(&self, n: f64) -> f64 {
        ((self.a3 * n + self.a2) * n + self.a1) * n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubregionParams {
    pub id: SubregionId,
    pub mfd: Mfd,
    /// Average trip length, m.
    pub avg_trip_length: f64,
    /// Jam accumulation, veh.
    pub n_max: f64,
    /// Maximum receiving capacity, veh/s.
    pub c_max: f64,
}

impl SubregionParams {
    const PRODUCTION_SAMPLES: usize = 1000;

    pub fn new(id: SubregionId, mfd: Mfd, avg_trip_length: f64, n_max: f64, c_max: f64) -> Result<Self> {
        let p = Self {
            id,
            mfd,
            avg_trip_length,
            n_max,
            c_max,
        };
        let errs = p.violations();
        if errs.is_empty() {
            Ok(p)
        } else {
            Err(Error::Validation(errs))
        }
    }

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let id = self.id;
        if !(self.avg_trip_length > 0.0) {
            out.push(format!("subregion {id}: average trip length must be > 0"));
        }
        if !(self.n_max > 0.0) {
            out.push(format!("subregion {id}: n_max must be > 0"));
        }
        if !(self.c_max > 0.0) {
            out.push(format!("subregion {id}: c_max must be > 0"));
        }
        if self.n_max > 0.0 {
            let negative = (0..=Self::PRODUCTION_SAMPLES)
                .map(|k| self.n_max * k as f64 / Self::PRODUCTION_SAMPLES as f64)
                .any(|n| self.mfd.eval(n) < 0.0);
            if negative {
                out.push(format!("subregion {id}: production is negative somewhere on [0, n_max]"));
            }
        }
        out
    }
}

/// One-way passageway across the border of two adjacent subregions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLink {
    pub from: SubregionId,
    pub to: SubregionId,
    /// veh/s
    pub capacity: f64,
}

/// Triangular flow-density relation of a CTM cell (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundamentalDiagram {
    /// m/s
    pub free_flow_speed: f64,
    /// veh/s
    pub capacity: f64,
    /// veh/m
    pub jam_density: f64,
}

impl FundamentalDiagram {
    pub fn new(free_flow_speed: f64, capacity: f64, jam_density: f64) -> Result<Self> {
        let fd = Self {
            free_flow_speed,
            capacity,
            jam_density,
        };
        if !(free_flow_speed > 0.0 && capacity > 0.0 && jam_density > 0.0) {
            return Err(Error::Config("fundamental diagram parameters must be positive".into()));
        }
        if !(fd.critical_density() < jam_density) {
            return Err(Error::Config(format!(
                "critical density {} must be below jam density {}",
                fd.critical_density(),
                jam_density
            )));
        }
        Ok(fd)
    }

    pub fn critical_density(&self) -> f64 {
        self.capacity / self.free_flow_speed
    }

    /// Congestion wave speed ω, m/s.
    pub fn wave_speed(&self) -> f64 {
        self.capacity / (self.jam_density - self.critical_density())
    }
}

/// Directional expressway id `E_ij`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExpresswayId {
    pub from: SubregionId,
    pub to: SubregionId,
}

impl ExpresswayId {
    pub fn new(from: SubregionId, to: SubregionId) -> Self {
        Self { from, to }
    }

    pub fn reverse(self) -> Self {
        Self::new(self.to, self.from)
    }

    /// Unordered pair key `(min, max)`.
    pub fn pair(self) -> (SubregionId, SubregionId) {
        (self.from.min(self.to), self.from.max(self.to))
    }
}

impl fmt::Display for ExpresswayId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}{}", self.from, self.to)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateExpressway {
    pub origin: SubregionId,
    pub destination: SubregionId,
    /// m
    pub mainline_length: f64,
    /// m
    pub cell_length: f64,
}

impl CandidateExpressway {
    pub fn id(&self) -> ExpresswayId {
        ExpresswayId::new(self.origin, self.destination)
    }

    pub fn is_cell_multiple(&self) -> bool {
        if !(self.cell_length > 0.0) {
            return false;
        }
        let ratio = self.mainline_length / self.cell_length;
        ratio >= 1.0 - 1e-9 && (ratio - ratio.round()).abs() < 1e-9
    }

    pub fn cell_count(&self) -> usize {
        (self.mainline_length / self.cell_length).round().max(1.0) as usize
    }
}

/// The static network `G = (R, N, C)` plus calibration and unit cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedNetwork {
    pub subregions: Vec<SubregionParams>,
    pub boundaries: Vec<BoundaryLink>,
    pub candidates: Vec<CandidateExpressway>,
    pub mainline_fd: FundamentalDiagram,
    pub ramp_fd: FundamentalDiagram,
    /// Construction cost per meter of mainline, covering both directions.
    pub unit_cost_per_m: f64,
}

/// Outcome of [`validate_network`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.contains(needle))
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_pass() {
            Ok(())
        } else {
            Err(Error::Validation(self.violations))
        }
    }
}

impl MixedNetwork {
    pub fn subregion(&self, id: SubregionId) -> Result<&SubregionParams> {
        self.subregions
            .iter()
            .find(|s| s.id == id)
            .ok_or(Error::UnknownSubregion(id))
    }

    pub fn subregion_index(&self, id: SubregionId) -> Option<usize> {
        self.subregions.iter().position(|s| s.id == id)
    }

    pub fn subregion_ids(&self) -> Vec<SubregionId> {
        self.subregions.iter().map(|s| s.id).collect()
    }

    pub fn boundary(&self, from: SubregionId, to: SubregionId) -> Option<&BoundaryLink> {
        self.boundaries.iter().find(|b| b.from == from && b.to == to)
    }

    /// Neighbor set α_i, sorted.
    pub fn neighbors(&self, id: SubregionId) -> Vec<SubregionId> {
        let set: BTreeSet<_> = self
            .boundaries
            .iter()
            .filter(|b| b.from == id)
            .map(|b| b.to)
            .collect();
        set.into_iter().collect()
    }

    pub fn candidate(&self, e: ExpresswayId) -> Option<&CandidateExpressway> {
        self.candidates.iter().find(|c| c.id() == e)
    }

    /// Unordered candidate pairs, ordered lexicographically by `(min, max)`.
    /// This is the bit order of every [`DesignVector`].
    pub fn candidate_pairs(&self) -> Vec<(SubregionId, SubregionId)> {
        let set: BTreeSet<_> = self.candidates.iter().map(|c| c.id().pair()).collect();
        set.into_iter().collect()
    }

    pub fn pair_index(&self, a: SubregionId, b: SubregionId) -> Option<usize> {
        let key = (a.min(b), a.max(b));
        self.candidate_pairs().iter().position(|&p| p == key)
    }

    /// λ for an unordered pair: unit cost times the mainline length.
    pub fn pair_cost(&self, pair: (SubregionId, SubregionId)) -> f64 {
        let c = self
            .candidate(ExpresswayId::new(pair.0, pair.1))
            .or_else(|| self.candidate(ExpresswayId::new(pair.1, pair.0)))
            .expect("pair comes from the candidate list");
        self.unit_cost_per_m * c.mainline_length
    }

    pub fn pair_costs(&self) -> Vec<f64> {
        self.candidate_pairs().into_iter().map(|p| self.pair_cost(p)).collect()
    }

    pub fn empty_design(&self) -> DesignVector {
        DesignVector::empty(self.candidate_pairs().len())
    }

    pub fn full_design(&self) -> DesignVector {
        DesignVector::from_bits(vec![true; self.candidate_pairs().len()])
    }

    /// Builds a design from a list of unordered pairs (either orientation).
    pub fn design_from_pairs(&self, pairs: &[(SubregionId, SubregionId)]) -> Result<DesignVector> {
        let mut d = self.empty_design();
        for &(a, b) in pairs {
            let k = self
                .pair_index(a, b)
                .ok_or_else(|| Error::DesignMismatch(format!("{{{a},{b}}} is not a candidate pair")))?;
            d.bits[k] = true;
        }
        Ok(d)
    }

    pub fn check_design(&self, d: &DesignVector) -> Result<()> {
        let n = self.candidate_pairs().len();
        if d.len() != n {
            return Err(Error::DesignMismatch(format!(
                "design has {} bits, network has {} candidate pairs",
                d.len(),
                n
            )));
        }
        Ok(())
    }

    /// Built directional expressways, sorted.
    pub fn built_expressways(&self, d: &DesignVector) -> Vec<ExpresswayId> {
        let pairs = self.candidate_pairs();
        let mut out: Vec<ExpresswayId> = self
            .candidates
            .iter()
            .map(|c| c.id())
            .filter(|e| {
                pairs
                    .iter()
                    .position(|&p| p == e.pair())
                    .is_some_and(|k| d.bits.get(k).copied().unwrap_or(false))
            })
            .collect();
        out.sort();
        out
    }

    pub fn is_built(&self, d: &DesignVector, e: ExpresswayId) -> bool {
        self.candidate(e).is_some()
            && self
                .pair_index(e.from, e.to)
                .is_some_and(|k| d.bits.get(k).copied().unwrap_or(false))
    }
}

/// Checks every structural invariant of the network and collects violations.
pub fn validate_network(net: &MixedNetwork) -> ValidationReport {
    let mut v = Vec::new();
    let ids: Vec<SubregionId> = net.subregion_ids();
    let id_set: BTreeSet<_> = ids.iter().copied().collect();
    if id_set.len() != ids.len() {
        v.push("duplicate subregion id".to_string());
    }
    if ids.is_empty() {
        v.push("network has no subregions".to_string());
    }
    for s in &net.subregions {
        v.extend(s.violations());
    }

    let mut seen_links = BTreeSet::new();
    for b in &net.boundaries {
        for id in [b.from, b.to] {
            if !id_set.contains(&id) {
                v.push(format!("dangling id: boundary {}->{} references subregion {id}", b.from, b.to));
            }
        }
        if b.from == b.to {
            v.push(format!("boundary {}->{} is a self-loop", b.from, b.to));
        }
        if !(b.capacity > 0.0) {
            v.push(format!("boundary {}->{} capacity must be > 0", b.from, b.to));
        }
        if !seen_links.insert((b.from, b.to)) {
            v.push(format!("duplicate boundary {}->{}", b.from, b.to));
        }
    }
    for &(a, b) in &seen_links {
        if !seen_links.contains(&(b, a)) {
            v.push(format!("adjacency asymmetry: {a}->{b} has no reverse link"));
        }
    }
    for &id in id_set.iter().filter(|_| id_set.len() > 1) {
        if !net.boundaries.iter().any(|b| b.from == id) {
            v.push(format!("subregion {id} has an empty neighbor set"));
        }
    }

    let mut seen_cands: BTreeMap<ExpresswayId, &CandidateExpressway> = BTreeMap::new();
    for c in &net.candidates {
        let e = c.id();
        for id in [c.origin, c.destination] {
            if !id_set.contains(&id) {
                v.push(format!("dangling id: candidate {e} references subregion {id}"));
            }
        }
        if c.origin == c.destination {
            v.push(format!("candidate {e} starts and ends in the same subregion"));
        }
        if !c.is_cell_multiple() {
            v.push(format!(
                "candidate {e}: mainline length {} m is not a cell multiple of {} m",
                c.mainline_length, c.cell_length
            ));
        }
        if seen_cands.insert(e, c).is_some() {
            v.push(format!("duplicate candidate {e}"));
        }
    }
    for (e, c) in &seen_cands {
        match seen_cands.get(&e.reverse()) {
            None => v.push(format!("candidate asymmetry: {e} has no twin {}", e.reverse())),
            Some(twin) if e < &e.reverse() && twin.mainline_length != c.mainline_length => v.push(format!(
                "candidate asymmetry: {e} and {} differ in length so their costs differ",
                e.reverse()
            )),
            _ => {}
        }
    }
    if let Some(c) = net.candidates.first() {
        if net.candidates.iter().any(|x| x.cell_length != c.cell_length) {
            v.push("candidates use different cell lengths".to_string());
        }
    }
    if !(net.unit_cost_per_m >= 0.0) {
        v.push("unit construction cost must be >= 0".to_string());
    }
    ValidationReport { violations: v }
}

/// Symmetric build decisions, one bit per unordered candidate pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DesignVector {
    bits: Vec<bool>,
}

impl DesignVector {
    pub fn empty(n: usize) -> Self {
        Self { bits: vec![false; n] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Design with bit `k` set iff bit `k` of `mask` is set.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        Self {
            bits: (0..n).map(|k| mask >> k & 1 == 1).collect(),
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, k: usize) -> bool {
        self.bits[k]
    }

    pub fn set(&mut self, k: usize, value: bool) {
        self.bits[k] = value;
    }

    pub fn count_built(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &DesignVector) -> bool {
        self.bits.len() == other.bits.len() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Parses a `0`/`1` string in candidate-pair order.
    pub fn parse_bits(s: &str) -> Result<Self> {
        s.trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!("design bit-string contains `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::from_bits)
    }
}

impl fmt::Display for DesignVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Total construction cost of the built pairs.
pub fn design_cost(net: &MixedNetwork, d: &DesignVector) -> Result<f64> {
    net.check_design(d)?;
    Ok(net
        .pair_costs()
        .iter()
        .zip(d.bits())
        .filter(|(_, &b)| b)
        .fold(0.0, |acc, (c, _)| acc + c))
}

pub fn is_budget_feasible(net: &MixedNetwork, d: &DesignVector, budget: f64) -> bool {
    design_cost(net, d).is_ok_and(|c| c <= budget + budget.abs() * 1e-12)
}

/// All `(E_hi, E_ij)` with both built and `h ≠ j`: the connecting ramps
/// installed at interchange subregion `i`.
pub fn connecting_ramps(net: &MixedNetwork, d: &DesignVector) -> Vec<(ExpresswayId, ExpresswayId)> {
    let built = net.built_expressways(d);
    let mut out = Vec::new();
    for &up in &built {
        for &down in &built {
            if up.to == down.from && up.from != down.to {
                out.push((up, down));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::case_study_network;

    const M: f64 = 1e6;

    #[test]
    fn case_study_network_validates() {
        let net = case_study_network();
        let report = validate_network(&net);
        assert!(report.is_pass(), "{:?}", report.violations);
        assert_eq!(net.candidates.len(), 16);
        assert_eq!(net.candidate_pairs().len(), 8);
    }

    #[test]
    fn missing_twin_is_reported() {
        let mut net = case_study_network();
        net.candidates.retain(|c| !(c.origin == 2 && c.destination == 1));
        assert!(validate_network(&net).mentions("candidate asymmetry"));
    }

    #[test]
    fn non_multiple_length_is_reported() {
        let mut net = case_study_network();
        net.candidates[0].mainline_length = 6400.0;
        assert!(validate_network(&net).mentions("not a cell multiple"));
    }

    #[test]
    fn dangling_and_isolated_ids_are_reported() {
        let mut net = case_study_network();
        net.boundaries.push(BoundaryLink {
            from: 1,
            to: 9,
            capacity: 1.0,
        });
        let r = validate_network(&net);
        assert!(r.mentions("dangling id"));
        assert!(r.mentions("adjacency asymmetry"));
    }

    #[test]
    fn costs_match_reported_schemes() {
        let net = case_study_network();
        let only_34 = net.design_from_pairs(&[(3, 4)]).unwrap();
        assert_eq!(design_cost(&net, &only_34).unwrap(), 32.5 * M);
        let zero = design_cost(&net, &net.empty_design()).unwrap();
        assert_eq!(zero, 0.0);
        assert!(zero.is_sign_positive());
        assert_eq!(design_cost(&net, &net.full_design()).unwrap(), 242.5 * M);
    }

    #[test]
    fn mismatched_design_is_an_error() {
        let net = case_study_network();
        assert!(matches!(
            design_cost(&net, &DesignVector::empty(3)),
            Err(Error::DesignMismatch(_))
        ));
    }

    #[test]
    fn budget_feasibility() {
        let net = case_study_network();
        assert!(is_budget_feasible(&net, &net.full_design(), 250.0 * M));
        assert!(!is_budget_feasible(&net, &net.full_design(), 200.0 * M));
        assert!(is_budget_feasible(&net, &net.empty_design(), 0.0));
    }

    #[test]
    fn connecting_ramps_cases() {
        let net = case_study_network();
        let d = net.design_from_pairs(&[(4, 5), (2, 5)]).unwrap();
        let ramps = connecting_ramps(&net, &d);
        assert!(ramps.contains(&(ExpresswayId::new(4, 5), ExpresswayId::new(5, 2))));
        assert!(ramps.contains(&(ExpresswayId::new(2, 5), ExpresswayId::new(5, 4))));
        assert_eq!(ramps.len(), 2);

        let single = net.design_from_pairs(&[(3, 4)]).unwrap();
        assert!(connecting_ramps(&net, &single).is_empty());
    }

    #[test]
    fn full_design_ramps_match_brute_force() {
        let net = case_study_network();
        let full = net.full_design();
        let ramps = connecting_ramps(&net, &full);
        // Brute force over all ordered pairs of the 16 directional expressways.
        let all: Vec<ExpresswayId> = net.candidates.iter().map(|c| c.id()).collect();
        let mut expected = 0;
        for a in &all {
            for b in &all {
                if a.to == b.from && a.from != b.to && a != b {
                    expected += 1;
                }
            }
        }
        assert_eq!(ramps.len(), expected);
        assert!(ramps.contains(&(ExpresswayId::new(1, 5), ExpresswayId::new(5, 2))));
        assert!(ramps.contains(&(ExpresswayId::new(2, 5), ExpresswayId::new(5, 1))));
        assert!(ramps.iter().all(|(a, b)| *b != a.reverse()));
    }

    #[test]
    fn design_bits_round_trip() {
        let d = DesignVector::parse_bits("00100101").unwrap();
        assert_eq!(d.to_string(), "00100101");
        assert!(DesignVector::parse_bits("0012").is_err());
        assert_eq!(DesignVector::from_mask(0b101, 3).to_string(), "101");
    }

    #[test]
    fn fundamental_diagram_derived_values() {
        let fd = FundamentalDiagram::new(80.0 / 3.6, 6000.0 / 3600.0, 0.375).unwrap();
        assert!((fd.critical_density() - 0.075).abs() < 1e-12);
        assert!((fd.wave_speed() - 20.0 / 3.6).abs() < 1e-12);
        assert!(FundamentalDiagram::new(10.0, 10.0, 0.5).is_err());
    }

    #[test]
    fn subregion_params_reject_negative_production() {
        let bad = Mfd {
            a3: 0.0,
            a2: -1.0,
            a1: 1.0,
        };
        assert!(SubregionParams::new(1, bad, 1000.0, 10.0, 1.0).is_err());
    }
}
