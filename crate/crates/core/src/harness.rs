//! Multi-run harness: paired policy comparisons, seed and penetration
//! sweeps, Student-t summaries, and the reference bottleneck scenario.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::{Incident, ScenarioConfig};
use crate::demand::{corridor_demand, CorridorDemand, DemandEntry};
use crate::error::{Error, Result};
use crate::knowledge::DisseminationMode;
use crate::metrics::{fmt_sig, MetricsReport};
use crate::rerouting::ReroutingPolicy;
use crate::road_network::{GridSpec, RoadGraph};
use crate::sim::Simulation;

/// A policy/dissemination pairing to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Variant {
    pub policy: ReroutingPolicy,
    pub dissemination: DisseminationMode,
}

impl Variant {
    pub fn new(policy: ReroutingPolicy, dissemination: DisseminationMode) -> Self {
        Self { policy, dissemination }
    }
}

fn run_all(jobs: Vec<ScenarioConfig>, graph: &RoadGraph, demand: &[DemandEntry]) -> Result<Vec<MetricsReport>> {
    jobs.into_par_iter()
        .map(|cfg| Simulation::new(cfg, graph.clone(), demand)?.run())
        .collect()
}

/// One run per (variant, seed), ordered variant-major. Spawn draws depend
/// only on the seed, so runs sharing a seed see the same vehicles.
pub fn compare(
    base: &ScenarioConfig,
    graph: &RoadGraph,
    demand: &[DemandEntry],
    variants: &[Variant],
    seeds: &[u64],
) -> Result<Vec<MetricsReport>> {
    if variants.is_empty() {
        return Err(Error::Empty("compare policies"));
    }
    if seeds.is_empty() {
        return Err(Error::Empty("compare seeds"));
    }
    let mut jobs = Vec::new();
    for v in variants {
        for s in seeds {
            jobs.push(ScenarioConfig {
                rerouting_policy: v.policy,
                dissemination: v.dissemination,
                seed: *s,
                ..base.clone()
            });
        }
    }
    run_all(jobs, graph, demand)
}

/// One run per (penetration rate, seed), ordered rate-major.
pub fn sweep(
    base: &ScenarioConfig,
    graph: &RoadGraph,
    demand: &[DemandEntry],
    penetration_rates: &[f64],
    seeds: &[u64],
) -> Result<Vec<MetricsReport>> {
    if penetration_rates.is_empty() || seeds.is_empty() {
        return Err(Error::Empty("sweep"));
    }
    let mut jobs = Vec::new();
    for p in penetration_rates {
        for s in seeds {
            let cfg = ScenarioConfig {
                penetration_rate: *p,
                seed: *s,
                ..base.clone()
            };
            cfg.validate()?;
            jobs.push(cfg);
        }
    }
    run_all(jobs, graph, demand)
}

/// Half-width of the two-sided 95% Student-t confidence interval of the
/// mean; 0 for fewer than two samples.
pub fn ci95_half_width(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid degrees of freedom")
        .inverse_cdf(0.975);
    t * (var / n as f64).sqrt()
}

/// Mean and confidence half-width of one metric within one group.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub group: Vec<String>,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub ci95: f64,
}

const GROUP_COLUMNS: &[&str] = &["policy", "dissemination", "penetration_rate"];
const SKIP_COLUMNS: &[&str] = &["seed"];

/// Groups rows of a metrics CSV by policy, dissemination and penetration
/// rate and summarizes every numeric column.
pub fn summarize_csv(text: &str, source_name: &str) -> Result<Vec<SummaryRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Empty("summary input"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let group_idx: Vec<usize> = GROUP_COLUMNS
        .iter()
        .map(|g| {
            cols.iter()
                .position(|c| c == g)
                .ok_or_else(|| Error::parse(source_name, 1, format!("missing column `{g}`")))
        })
        .collect::<Result<_>>()?;
    let metric_idx: Vec<usize> = (0..cols.len())
        .filter(|i| !group_idx.contains(i) && !SKIP_COLUMNS.contains(&cols[*i]))
        .collect();
    let mut groups: BTreeMap<Vec<String>, Vec<Vec<f64>>> = BTreeMap::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != cols.len() {
            return Err(Error::parse(source_name, i + 1, "wrong number of fields"));
        }
        let key: Vec<String> = group_idx.iter().map(|g| f[*g].to_string()).collect();
        let vals = metric_idx
            .iter()
            .map(|m| {
                f[*m]
                    .parse::<f64>()
                    .map_err(|_| Error::parse(source_name, i + 1, format!("non-numeric `{}`", cols[*m])))
            })
            .collect::<Result<Vec<f64>>>()?;
        groups.entry(key).or_default().push(vals);
    }
    if groups.is_empty() {
        return Err(Error::Empty("summary input"));
    }
    let mut out = Vec::new();
    for (key, rows) in groups {
        for (j, m) in metric_idx.iter().enumerate() {
            let xs: Vec<f64> = rows.iter().map(|r| r[j]).filter(|x| x.is_finite()).collect();
            let n = xs.len();
            let mean = if n == 0 { f64::NAN } else { xs.iter().sum::<f64>() / n as f64 };
            out.push(SummaryRow {
                group: key.clone(),
                metric: cols[*m].to_string(),
                n,
                mean,
                ci95: ci95_half_width(&xs),
            });
        }
    }
    Ok(out)
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut s = format!("{},metric,n,mean,ci95_half_width\n", GROUP_COLUMNS.join(","));
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.group.join(","), r.metric, r.n, fmt_sig(r.mean), fmt_sig(r.ci95));
    }
    s
}

/// Reports as CSV text with a header.
pub fn reports_to_csv(reports: &[MetricsReport]) -> String {
    let mut s = MetricsReport::csv_header();
    s.push('\n');
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// A grid with a two-lane corridor row, through traffic along it, and a
/// slowed edge in its middle.
#[derive(Debug, Clone, PartialEq)]
pub struct BottleneckScenario {
    pub grid: GridSpec,
    pub demand: CorridorDemand,
    /// Column where the slowed edge starts; it ends one column further.
    pub incident_column: u32,
    pub incident_speed_mps: f64,
}

impl Default for BottleneckScenario {
    fn default() -> Self {
        let mut grid = GridSpec::new(10, 10, 200.0);
        grid.corridor_row = Some(5);
        grid.corridor_lanes = 2;
        Self {
            grid,
            demand: CorridorDemand::default(),
            incident_column: 4,
            incident_speed_mps: 2.0,
        }
    }
}

impl BottleneckScenario {
    /// Config the scenario is meant to run with: knowledge lives long enough
    /// to be re-announced a few times per bottleneck episode, and the run is
    /// capped well past the last departure.
    pub fn base_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            knowledge_ttl_s: 30.0,
            sim_duration: 3000.0,
            ..ScenarioConfig::default()
        }
    }

    /// Demand drawn from `seed`.
    pub fn demand(&self, seed: u64) -> Result<Vec<DemandEntry>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_de3a);
        corridor_demand(&self.grid, &self.demand, &mut rng)
    }

    /// Network, demand seeded by `seed`, and a config with the incident set.
    pub fn build(&self, seed: u64, base: &ScenarioConfig) -> Result<(ScenarioConfig, RoadGraph, Vec<DemandEntry>)> {
        let graph = RoadGraph::manhattan_grid(&self.grid)?;
        let demand = self.demand(seed)?;
        let row = self.demand.corridor_row;
        let from = self.grid.node_at(row, self.incident_column);
        let to = self.grid.node_at(row, self.incident_column + 1);
        let edge = graph
            .out_edges(from)
            .find(|e| e.to == to)
            .ok_or_else(|| Error::Config("incident edge not in grid".into()))?
            .id;
        let cfg = ScenarioConfig {
            seed,
            incident: Some(Incident {
                edge,
                speed_mps: self.incident_speed_mps,
                start_s: 0.0,
                end_s: f64::INFINITY,
            }),
            ..base.clone()
        };
        Ok((cfg, graph, demand))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_interval_matches_table_value() {
        // t(0.975, 9) = 2.262
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let sd = (xs.iter().map(|x| (x - 4.5f64).powi(2)).sum::<f64>() / 9.0).sqrt();
        let expected = 2.262157 * sd / 10f64.sqrt();
        assert!((ci95_half_width(&xs) - expected).abs() < 1e-5);
        assert_eq!(ci95_half_width(&[3.0]), 0.0);
    }

    #[test]
    fn summary_groups_rows() {
        let text = "seed,policy,dissemination,penetration_rate,coverage\n\
                    1,deasy,zop,1,0.8\n2,deasy,zop,1,1.0\n1,none,zop,1,0.5\n";
        let rows = summarize_csv(text, "in").unwrap();
        assert_eq!(rows.len(), 2);
        let deasy = rows.iter().find(|r| r.group[0] == "deasy").unwrap();
        assert_eq!(deasy.n, 2);
        assert!((deasy.mean - 0.9).abs() < 1e-12);
        assert!(deasy.ci95 > 0.0);
        let csv = summary_to_csv(&rows);
        assert!(csv.starts_with("policy,dissemination,penetration_rate,metric,n,mean,ci95_half_width\n"));
        assert!(summarize_csv("seed,coverage\n1,2\n", "in").is_err());
        assert!(summarize_csv("seed,policy,dissemination,penetration_rate,x\n1,a,b,1,zz\n", "in").is_err());
    }

    #[test]
    fn bottleneck_scenario_builds() {
        let (cfg, g, d) = BottleneckScenario::default().build(1, &ScenarioConfig::default()).unwrap();
        assert_eq!(g.node_count(), 100);
        assert_eq!(g.edge_count(), 360);
        assert_eq!(d.len(), 600);
        let inc = cfg.incident.unwrap();
        let e = g.edge(inc.edge);
        assert_eq!(e.lanes, 2);
        assert_eq!(e.from.0, 54);
        assert_eq!(e.to.0, 55);
    }
}
