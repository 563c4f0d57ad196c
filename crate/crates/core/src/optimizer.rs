//! Budget-constrained expressway selection.
//!
//! Designs are scored by total time spent (TTS) from a full simulation.
//! [`exhaustive_search`] enumerates every budget-feasible design for small
//! candidate sets; [`pso_optimize`] runs a binary particle swarm. Both share
//! an [`Evaluator`] that memoizes TTS per design and simulates batches of
//! new designs in parallel.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::run;
use crate::error::{Error, Result};
use crate::network::{design_cost, is_budget_feasible, DesignVector, MixedNetwork, SubregionId};
use crate::par::{self, ExecMode};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfeasibleMode {
    /// Drop the most expensive built pairs until the design fits.
    Repair,
    /// Keep the design but score it worse than doing nothing.
    Penalty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia_start: f64,
    pub inertia_end: f64,
    pub cognitive: f64,
    pub social: f64,
    pub velocity_clamp: f64,
    pub seed: u64,
    pub infeasible: InfeasibleMode,
    /// Largest candidate-pair count [`exhaustive_search`] accepts.
    pub exhaustive_cap: usize,
    pub exec: ExecMode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            swarm_size: 30,
            iterations: 100,
            inertia_start: 0.9,
            inertia_end: 0.4,
            cognitive: 2.0,
            social: 2.0,
            velocity_clamp: 6.0,
            seed: 1,
            infeasible: InfeasibleMode::Repair,
            exhaustive_cap: 16,
            exec: ExecMode::Parallel,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.swarm_size == 0 {
            v.push("optimizer swarm size must be >= 1".to_string());
        }
        if !(self.velocity_clamp > 0.0) {
            v.push("optimizer velocity clamp must be > 0".to_string());
        }
        for (name, x) in [
            ("inertia_start", self.inertia_start),
            ("inertia_end", self.inertia_end),
            ("cognitive", self.cognitive),
            ("social", self.social),
        ] {
            if !(x >= 0.0 && x.is_finite()) {
                v.push(format!("optimizer {name} must be a finite number >= 0"));
            }
        }
        if self.exhaustive_cap > 40 {
            v.push("optimizer exhaustive_cap above 40 is not supported".to_string());
        }
        v
    }
}

/// Outcome of simulating one design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub tts_veh_h: f64,
    /// $
    pub cost: f64,
    pub avg_accumulation_veh: f64,
    pub avg_completion_flow_veh_h: f64,
}

/// Memoizing design scorer shared by the search routines.
pub struct Evaluator<'a> {
    scenario: &'a Scenario,
    exec: ExecMode,
    cache: Mutex<HashMap<DesignVector, Evaluation>>,
    simulations: AtomicUsize,
}

impl<'a> Evaluator<'a> {
    pub fn new(scenario: &'a Scenario, exec: ExecMode) -> Self {
        Self {
            scenario,
            exec,
            cache: Mutex::new(HashMap::new()),
            simulations: AtomicUsize::new(0),
        }
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn network(&self) -> &MixedNetwork {
        &self.scenario.network
    }

    /// Number of simulations actually run (cache misses).
    pub fn simulations(&self) -> usize {
        self.simulations.load(AtomicOrdering::Relaxed)
    }

    fn cached(&self, d: &DesignVector) -> Option<Evaluation> {
        self.cache.lock().expect("cache lock").get(d).copied()
    }

    fn simulate(&self, d: &DesignVector) -> Result<Evaluation> {
        let r = run(self.scenario, d)?;
        self.simulations.fetch_add(1, AtomicOrdering::Relaxed);
        Ok(Evaluation {
            tts_veh_h: r.tts_veh_h,
            cost: r.construction_cost,
            avg_accumulation_veh: r.avg_accumulation_veh,
            avg_completion_flow_veh_h: r.avg_completion_flow_veh_h,
        })
    }

    pub fn evaluate(&self, d: &DesignVector) -> Result<Evaluation> {
        if let Some(e) = self.cached(d) {
            return Ok(e);
        }
        let e = self.simulate(d)?;
        self.cache.lock().expect("cache lock").insert(d.clone(), e);
        Ok(e)
    }

    /// Like [`Evaluator::evaluate`] but refuses designs over `budget`.
    pub fn evaluate_within(&self, d: &DesignVector, budget: f64) -> Result<Evaluation> {
        let cost = design_cost(self.network(), d)?;
        if !is_budget_feasible(self.network(), d, budget) {
            return Err(Error::Infeasible { cost, budget });
        }
        self.evaluate(d)
    }

    /// Scores a batch, simulating each distinct uncached design once.
    pub fn evaluate_many(&self, designs: &[DesignVector]) -> Result<Vec<Evaluation>> {
        let mut todo: Vec<DesignVector> = designs.iter().filter(|d| self.cached(d).is_none()).cloned().collect();
        todo.sort();
        todo.dedup();
        let fresh = par::map(self.exec, &todo, |d| self.simulate(d));
        {
            let mut cache = self.cache.lock().expect("cache lock");
            for (d, e) in todo.into_iter().zip(fresh) {
                cache.insert(d, e?);
            }
        }
        designs.iter().map(|d| self.evaluate(d)).collect()
    }
}

/// Orders designs by TTS, then cost, then bit pattern.
pub fn rank(a: (&DesignVector, &Evaluation), b: (&DesignVector, &Evaluation)) -> Ordering {
    a.1.tts_veh_h
        .total_cmp(&b.1.tts_veh_h)
        .then(a.1.cost.total_cmp(&b.1.cost))
        .then_with(|| a.0.cmp(b.0))
}

/// Drops the most expensive built pairs (the later one on a tie) until the
/// design fits the budget.
pub fn repair(net: &MixedNetwork, d: &DesignVector, budget: f64) -> DesignVector {
    let costs = net.pair_costs();
    let mut d = d.clone();
    while !is_budget_feasible(net, &d, budget) {
        let k = (0..d.len())
            .filter(|&k| d.get(k))
            .max_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)))
            .expect("an infeasible design has a built pair");
        d.set(k, false);
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignScore {
    pub design: DesignVector,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveResult {
    pub budget: f64,
    pub best: DesignScore,
    /// Every budget-feasible design in bit-mask order.
    pub table: Vec<DesignScore>,
}

pub fn exhaustive_search(ev: &Evaluator, budget: f64, cap: usize) -> Result<ExhaustiveResult> {
    let net = ev.network();
    let p = net.candidate_pairs().len();
    if p > cap {
        return Err(Error::CapExceeded { pairs: p, cap });
    }
    let designs: Vec<DesignVector> = (0..1u64 << p)
        .map(|mask| DesignVector::from_mask(mask, p))
        .filter(|d| is_budget_feasible(net, d, budget))
        .collect();
    let evals = ev.evaluate_many(&designs)?;
    let table: Vec<DesignScore> = designs
        .into_iter()
        .zip(evals)
        .map(|(design, evaluation)| DesignScore { design, evaluation })
        .collect();
    let best = table
        .iter()
        .min_by(|a, b| rank((&a.design, &a.evaluation), (&b.design, &b.evaluation)))
        .cloned()
        .expect("the empty design is always feasible");
    Ok(ExhaustiveResult { budget, best, table })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoResult {
    pub budget: f64,
    pub best: DesignScore,
    /// Best TTS after initialization and after each iteration.
    pub trace: Vec<f64>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Scores a swarm. Feasible designs get their TTS; infeasible ones (penalty
/// mode only) get `penalty_base · (1 + excess / full_cost)` and are never
/// simulated.
fn swarm_fitness(ev: &Evaluator, xs: &[DesignVector], budget: f64, penalty_base: f64) -> Result<Vec<(f64, Option<Evaluation>)>> {
    let net = ev.network();
    let feasible: Vec<DesignVector> = xs.iter().filter(|d| is_budget_feasible(net, d, budget)).cloned().collect();
    ev.evaluate_many(&feasible)?;
    let full_cost: f64 = net.pair_costs().iter().sum();
    xs.iter()
        .map(|d| {
            if is_budget_feasible(net, d, budget) {
                let e = ev.evaluate(d)?;
                Ok((e.tts_veh_h, Some(e)))
            } else {
                let excess = design_cost(net, d)? - budget;
                Ok((penalty_base * (1.0 + excess / full_cost.max(1.0)), None))
            }
        })
        .collect()
}

/// Binary particle swarm over design bits. `warm_start`, if given and
/// feasible, replaces the first particle's initial position.
pub fn pso_optimize(
    ev: &Evaluator,
    budget: f64,
    cfg: &OptimizerConfig,
    warm_start: Option<&DesignVector>,
) -> Result<PsoResult> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    if !(budget >= 0.0) {
        return Err(Error::Config(format!("budget {budget} must be >= 0")));
    }
    let net = ev.network();
    let p = net.candidate_pairs().len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fix = |d: DesignVector| match cfg.infeasible {
        InfeasibleMode::Repair => repair(net, &d, budget),
        InfeasibleMode::Penalty => d,
    };
    let penalty_base = match cfg.infeasible {
        InfeasibleMode::Penalty => ev.evaluate(&net.empty_design())?.tts_veh_h,
        InfeasibleMode::Repair => 0.0,
    };

    let n = cfg.swarm_size;
    let mut xs: Vec<DesignVector> = Vec::with_capacity(n);
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        vs.push((0..p).map(|_| rng.gen_range(-1.0..=1.0)).collect());
        xs.push(fix(DesignVector::from_bits((0..p).map(|_| rng.gen_bool(0.5)).collect())));
    }
    if let Some(w) = warm_start {
        net.check_design(w)?;
        if is_budget_feasible(net, w, budget) {
            xs[0] = w.clone();
        }
    }

    let fit = swarm_fitness(ev, &xs, budget, penalty_base)?;
    let mut pbest: Vec<(DesignVector, f64, Option<Evaluation>)> =
        xs.iter().cloned().zip(fit).map(|(d, (f, e))| (d, f, e)).collect();
    // The empty design is always feasible and seeds the global best.
    let empty = net.empty_design();
    let mut gbest = DesignScore {
        evaluation: ev.evaluate(&empty)?,
        design: empty,
    };
    let improve = |g: &mut DesignScore, d: &DesignVector, e: &Evaluation| {
        if rank((d, e), (&g.design, &g.evaluation)) == Ordering::Less {
            *g = DesignScore {
                design: d.clone(),
                evaluation: *e,
            };
        }
    };
    for (d, _, e) in &pbest {
        if let Some(e) = e {
            improve(&mut gbest, d, e);
        }
    }
    let mut trace = vec![gbest.evaluation.tts_veh_h];

    for it in 0..cfg.iterations {
        let w = if cfg.iterations > 1 {
            cfg.inertia_start + (cfg.inertia_end - cfg.inertia_start) * it as f64 / (cfg.iterations - 1) as f64
        } else {
            cfg.inertia_start
        };
        for k in 0..n {
            let mut bits = Vec::with_capacity(p);
            for (j, v) in vs[k].iter_mut().enumerate() {
                let x = xs[k].get(j) as u8 as f64;
                let pb = pbest[k].0.get(j) as u8 as f64;
                let gb = gbest.design.get(j) as u8 as f64;
                let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
                *v = (w * *v + cfg.cognitive * r1 * (pb - x) + cfg.social * r2 * (gb - x))
                    .clamp(-cfg.velocity_clamp, cfg.velocity_clamp);
                bits.push(rng.gen::<f64>() < sigmoid(*v));
            }
            xs[k] = fix(DesignVector::from_bits(bits));
        }
        let fit = swarm_fitness(ev, &xs, budget, penalty_base)?;
        for (k, (f, e)) in fit.into_iter().enumerate() {
            let better = match (&e, &pbest[k].2) {
                (Some(e), Some(pe)) => rank((&xs[k], e), (&pbest[k].0, pe)) == Ordering::Less,
                _ => f < pbest[k].1,
            };
            if better {
                pbest[k] = (xs[k].clone(), f, e);
            }
            if let Some(e) = &e {
                improve(&mut gbest, &xs[k], e);
            }
        }
        trace.push(gbest.evaluation.tts_veh_h);
    }
    Ok(PsoResult {
        budget,
        best: gbest,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// $
    pub budget: f64,
    pub design: DesignVector,
    pub built_pairs: Vec<(SubregionId, SubregionId)>,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub scenario: String,
    pub method: String,
    pub seed: u64,
    pub candidate_pairs: Vec<(SubregionId, SubregionId)>,
    pub rows: Vec<SweepRow>,
    pub simulations: usize,
}

/// Optimizes every budget in ascending order. Each PSO run is warm-started
/// from the previous budget's optimum.
pub fn budget_sweep(ev: &Evaluator, budgets: &[f64], cfg: &OptimizerConfig, exhaustive: bool) -> Result<SweepReport> {
    let net = ev.network();
    let pairs = net.candidate_pairs();
    let mut sorted = budgets.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut rows: Vec<SweepRow> = Vec::new();
    for &b in &sorted {
        let best = if exhaustive {
            exhaustive_search(ev, b, cfg.exhaustive_cap)?.best
        } else {
            pso_optimize(ev, b, cfg, rows.last().map(|r| &r.design))?.best
        };
        rows.push(SweepRow {
            budget: b,
            built_pairs: pairs
                .iter()
                .zip(best.design.bits())
                .filter(|(_, &x)| x)
                .map(|(&p, _)| p)
                .collect(),
            design: best.design,
            evaluation: best.evaluation,
        });
    }
    Ok(SweepReport {
        scenario: ev.scenario().name.clone(),
        method: if exhaustive { "exhaustive" } else { "pso" }.to_string(),
        seed: cfg.seed,
        candidate_pairs: pairs,
        rows,
        simulations: ev.simulations(),
    })
}
