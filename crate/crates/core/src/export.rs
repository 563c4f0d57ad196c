//! Result artifacts: trajectory CSV, JSON summaries, SVG charts, the
//! budget-sweep table and design matrices.
//!
//! JSON keys carry their unit as a suffix (`tts_veh_h`, `cost_usd`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{BoundaryMode, SimResult, Trajectory};
use crate::error::Result;
use crate::network::{DesignVector, MixedNetwork};
use crate::optimizer::SweepReport;
use crate::scenario::Scenario;

const VEH_H: f64 = 3600.0;

/// Calibration values a result depends on, in the units named by the keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterHeader {
    pub scenario: String,
    pub logit_mu_per_s: f64,
    pub step_s: f64,
    pub steps: usize,
    pub cell_length_m: f64,
    pub speed_floor_m_s: f64,
    pub max_route_nodes: usize,
    pub boundary_mode: String,
    /// Keyed by directional boundary, `from->to`.
    pub boundary_capacity_veh_h: BTreeMap<String, f64>,
    /// Keyed by subregion id.
    pub c_max_veh_h: BTreeMap<String, f64>,
    pub mainline_jam_density_veh_km: f64,
    pub ramp_jam_density_veh_km: f64,
    pub unit_cost_usd_per_km: f64,
}

impl ParameterHeader {
    pub fn of(sc: &Scenario) -> Self {
        let net = &sc.network;
        Self {
            scenario: sc.name.clone(),
            logit_mu_per_s: sc.logit.mu,
            step_s: sc.sim.ts,
            steps: sc.sim.steps,
            cell_length_m: sc.sim.cell_length,
            speed_floor_m_s: sc.sim.speed_floor,
            max_route_nodes: sc.sim.max_nodes,
            boundary_mode: match sc.sim.boundary_mode {
                BoundaryMode::Shared => "shared",
                BoundaryMode::PerClass => "per-class",
            }
            .to_string(),
            boundary_capacity_veh_h: net
                .boundaries
                .iter()
                .map(|b| (format!("{}->{}", b.from, b.to), b.capacity * VEH_H))
                .collect(),
            c_max_veh_h: net.subregions.iter().map(|s| (s.id.to_string(), s.c_max * VEH_H)).collect(),
            mainline_jam_density_veh_km: net.mainline_fd.jam_density * 1000.0,
            ramp_jam_density_veh_km: net.ramp_fd.jam_density * 1000.0,
            unit_cost_usd_per_km: net.unit_cost_per_m * 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub parameters: ParameterHeader,
    pub design: String,
    pub built_pairs: Vec<(u32, u32)>,
    pub cost_usd: f64,
    pub route_count: usize,
    pub tts_veh_h: f64,
    pub avg_accumulation_veh: f64,
    pub avg_completion_flow_veh_h: f64,
    pub injected_veh: f64,
    pub completed_veh: f64,
    pub residual_veh: f64,
}

impl RunSummary {
    pub fn new(sc: &Scenario, result: &SimResult) -> Self {
        let pairs = sc.network.candidate_pairs();
        let bits = DesignVector::parse_bits(&result.design).expect("result designs are bit strings");
        Self {
            parameters: ParameterHeader::of(sc),
            design: result.design.clone(),
            built_pairs: pairs.iter().zip(bits.bits()).filter(|(_, &b)| b).map(|(&p, _)| p).collect(),
            cost_usd: result.construction_cost,
            route_count: result.route_count,
            tts_veh_h: result.tts_veh_h,
            avg_accumulation_veh: result.avg_accumulation_veh,
            avg_completion_flow_veh_h: result.avg_completion_flow_veh_h,
            injected_veh: result.audit.injected_veh,
            completed_veh: result.audit.completed_veh,
            residual_veh: result.audit.residual_veh,
        }
    }
}

/// One row per recorded step: time, subregion accumulations and vehicles on
/// every directional expressway (zero when not built).
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("time_s");
    for id in &traj.subregion_ids {
        write!(out, ",n{id}_veh").unwrap();
    }
    for e in &traj.expressways {
        write!(out, ",{e}_veh").unwrap();
    }
    out.push('\n');
    for t in 0..traj.steps() {
        write!(out, "{}", t as f64 * traj.ts).unwrap();
        for n in &traj.accumulation[t] {
            write!(out, ",{n}").unwrap();
        }
        for e in 0..traj.expressways.len() {
            write!(out, ",{}", traj.expressway_vehicles(t, e)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Per-cell total densities, one row per step.
pub fn cells_csv(traj: &Trajectory) -> String {
    let mut out = String::from("time_s");
    for label in &traj.cell_labels {
        write!(out, ",{}_veh_per_m", label.replace(',', ";")).unwrap();
    }
    out.push('\n');
    for (t, row) in traj.cell_density.iter().enumerate() {
        write!(out, "{}", t as f64 * traj.ts).unwrap();
        for k in row {
            write!(out, ",{k}").unwrap();
        }
        out.push('\n');
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Line chart of named series over time (minutes).
pub fn line_chart_svg(title: &str, y_label: &str, ts: f64, series: &[(String, Vec<f64>)]) -> String {
    let (w, h, left, right, top, bottom) = (720.0, 400.0, 70.0, 120.0, 40.0, 50.0);
    let steps = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let t_max = (steps.max(2) - 1) as f64 * ts / 60.0;
    let y_max = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1.0)
        * 1.05;
    let px = |t: f64| left + (w - left - right) * t / t_max;
    let py = |y: f64| top + (h - top - bottom) * (1.0 - y / y_max);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title)).unwrap();
    writeln!(
        s,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#,
        h - bottom,
        w - right,
        h - bottom,
        h - bottom
    )
    .unwrap();
    for k in 0..=5 {
        let y = y_max * k as f64 / 5.0;
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.0}</text>"#, left - 6.0, py(y) + 4.0, y).unwrap();
        let t = t_max * k as f64 / 5.0;
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{:.0}</text>"#, px(t), h - bottom + 18.0, t).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">time (min)</text>"#, px(t_max / 2.0), h - 10.0).unwrap();
    writeln!(s, r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>"#, h / 2.0, h / 2.0, escape(y_label)).unwrap();
    for (k, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(t, &y)| format!("{:.2},{:.2}", px(t as f64 * ts / 60.0), py(y)))
            .collect();
        writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points.join(" ")).unwrap();
        let ly = top + 16.0 * k as f64;
        writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            w - right + 10.0,
            w - right + 30.0,
            w - right + 35.0,
            ly + 4.0,
            escape(name)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Subregion accumulations over time.
pub fn accumulation_svg(traj: &Trajectory) -> String {
    let series: Vec<(String, Vec<f64>)> = traj
        .subregion_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (format!("subregion {id}"), traj.accumulation.iter().map(|row| row[i]).collect()))
        .collect();
    line_chart_svg("Subregion accumulation", "vehicles", traj.ts, &series)
}

/// Vehicles on each built expressway over time.
pub fn expressway_svg(traj: &Trajectory) -> String {
    let series: Vec<(String, Vec<f64>)> = (0..traj.expressways.len())
        .filter(|&e| traj.built[e])
        .map(|e| {
            (
                traj.expressways[e].to_string(),
                (0..traj.steps()).map(|t| traj.expressway_vehicles(t, e)).collect(),
            )
        })
        .collect();
    line_chart_svg("Expressway vehicles", "vehicles", traj.ts, &series)
}

/// Build matrix of a design: `1` built, `0` candidate not built, `x` no
/// candidate (including the diagonal).
pub fn design_matrix(net: &MixedNetwork, design: &DesignVector) -> String {
    let ids = net.subregion_ids();
    let mut out = String::from("  ");
    for j in &ids {
        write!(out, " {j}").unwrap();
    }
    out.push('\n');
    for &i in &ids {
        write!(out, "{i} ").unwrap();
        for &j in &ids {
            let c = match net.pair_index(i, j) {
                Some(k) if i != j => {
                    if design.get(k) {
                        '1'
                    } else {
                        '0'
                    }
                }
                _ => 'x',
            };
            write!(out, " {c}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn change(prev: Option<f64>, now: f64) -> String {
    match prev {
        Some(p) if p != 0.0 => {
            let pct = (now - p) / p * 100.0;
            let arrow = if pct < 0.0 {
                "↓"
            } else if pct > 0.0 {
                "↑"
            } else {
                "="
            };
            format!("({arrow}{:.2}%)", pct.abs())
        }
        Some(_) => "(=)".to_string(),
        None => "(-)".to_string(),
    }
}

fn money(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{}M", x / 1e6)
    }
}

/// Tab-separated comparison table, one row per budget, with the change
/// against the previous row.
pub fn sweep_table(report: &SweepReport) -> String {
    let mut out = String::from(
        "Scheme\tBudget (dollar)\tAverage accumulations (veh)\tAverage travel completion flow (veh/h)\tTTT (veh·h)\tConstruction cost (dollar)\n",
    );
    let mut prev: Option<&crate::optimizer::SweepRow> = None;
    for (k, row) in report.rows.iter().enumerate() {
        let e = &row.evaluation;
        let p = prev.map(|r| &r.evaluation);
        writeln!(
            out,
            "{}\t{}\t{:.0} {}\t{:.0} {}\t{:.0} {}\t{}",
            k + 1,
            money(row.budget),
            e.avg_accumulation_veh,
            change(p.map(|x| x.avg_accumulation_veh), e.avg_accumulation_veh),
            e.avg_completion_flow_veh_h,
            change(p.map(|x| x.avg_completion_flow_veh_h), e.avg_completion_flow_veh_h),
            e.tts_veh_h,
            change(p.map(|x| x.tts_veh_h), e.tts_veh_h),
            money(e.cost),
        )
        .unwrap();
        prev = Some(row);
    }
    out
}

/// Design matrices for every sweep row.
pub fn sweep_matrices(net: &MixedNetwork, report: &SweepReport) -> String {
    let mut out = String::new();
    for row in &report.rows {
        writeln!(out, "budget {} -> design {} cost {}", money(row.budget), row.design, money(row.evaluation.cost)).unwrap();
        out.push_str(&design_matrix(net, &row.design));
        out.push('\n');
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Writes every artifact of a single run into `dir`.
pub fn write_run(dir: &Path, sc: &Scenario, result: &SimResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("summary.json"), to_json(&RunSummary::new(sc, result)))?;
    std::fs::write(dir.join("trajectory.csv"), trajectory_csv(&result.trajectory))?;
    std::fs::write(dir.join("cells.csv"), cells_csv(&result.trajectory))?;
    std::fs::write(dir.join("accumulation.svg"), accumulation_svg(&result.trajectory))?;
    std::fs::write(dir.join("expressways.svg"), expressway_svg(&result.trajectory))?;
    Ok(())
}

/// Writes the sweep JSON, table and matrices into `dir`.
pub fn write_sweep(dir: &Path, sc: &Scenario, report: &SweepReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    #[derive(Serialize)]
    struct Doc<'a> {
        parameters: ParameterHeader,
        report: &'a SweepReport,
    }
    std::fs::write(
        dir.join("sweep.json"),
        to_json(&Doc {
            parameters: ParameterHeader::of(sc),
            report,
        }),
    )?;
    std::fs::write(dir.join("sweep.tsv"), sweep_table(report))?;
    std::fs::write(dir.join("designs.txt"), sweep_matrices(&sc.network, report))?;
    Ok(())
}
