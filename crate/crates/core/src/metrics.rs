//! Per-run evaluation metrics and their CSV form.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ids::VehicleId;
use crate::knowledge::{DisseminationMode, KnowledgeId};
use crate::rerouting::ReroutingPolicy;

/// Everything reported for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub seed: u64,
    pub policy: ReroutingPolicy,
    pub dissemination: DisseminationMode,
    pub penetration_rate: f64,
    pub vehicles: u64,
    pub arrived: u64,
    pub sim_end_s: f64,
    pub channel_busy_ratio: f64,
    pub total_beacons: u64,
    pub beacons_per_vehicle: f64,
    pub coverage: f64,
    pub overhead: u64,
    pub delay_s: f64,
    pub collisions: u64,
    pub mac_drops: u64,
    pub knowledge_episodes: u64,
    pub travel_distance_m: f64,
    pub travel_time_s: f64,
    pub congestion_time_loss_s: f64,
    pub co2_g: f64,
    pub planning_time_index: f64,
}

/// Column order of the CSV form.
pub const CSV_COLUMNS: &[&str] = &[
    "seed",
    "policy",
    "dissemination",
    "penetration_rate",
    "vehicles",
    "arrived",
    "sim_end_s",
    "channel_busy_ratio",
    "total_beacons",
    "beacons_per_vehicle",
    "coverage",
    "overhead",
    "delay_s",
    "collisions",
    "mac_drops",
    "knowledge_episodes",
    "travel_distance_m",
    "travel_time_s",
    "congestion_time_loss_s",
    "co2_g",
    "planning_time_index",
];

/// Formats `x` with six significant digits, trimming trailing zeros.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

impl MetricsReport {
    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        let fields: Vec<String> = vec![
            self.seed.to_string(),
            self.policy.to_string(),
            self.dissemination.to_string(),
            fmt_sig(self.penetration_rate),
            self.vehicles.to_string(),
            self.arrived.to_string(),
            fmt_sig(self.sim_end_s),
            fmt_sig(self.channel_busy_ratio),
            self.total_beacons.to_string(),
            fmt_sig(self.beacons_per_vehicle),
            fmt_sig(self.coverage),
            self.overhead.to_string(),
            fmt_sig(self.delay_s),
            self.collisions.to_string(),
            self.mac_drops.to_string(),
            self.knowledge_episodes.to_string(),
            fmt_sig(self.travel_distance_m),
            fmt_sig(self.travel_time_s),
            fmt_sig(self.congestion_time_loss_s),
            fmt_sig(self.co2_g),
            fmt_sig(self.planning_time_index),
        ];
        fields.join(",")
    }

    /// Writes header and row, or appends the row when `path` already holds a
    /// matching header. Missing directories are created.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, std::slice::from_ref(self))
    }
}

/// [`MetricsReport::write_csv`] for several rows at once.
pub fn write_rows(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let header = MetricsReport::csv_header();
    let exists = path.exists() && fs::metadata(path)?.len() > 0;
    if exists {
        let text = fs::read_to_string(path)?;
        if text.lines().next().map(str::trim) != Some(header.as_str()) {
            return Err(Error::HeaderMismatch(path.to_path_buf()));
        }
    } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if !exists {
        writeln!(f, "{header}")?;
    }
    for r in reports {
        writeln!(f, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Σ (1 − v/vmax)·dt over `(speed, vmax, dt)` samples.
pub fn congestion_time_loss(samples: impl IntoIterator<Item = (f64, f64, f64)>) -> f64 {
    samples
        .into_iter()
        .map(|(v, vmax, dt)| (1.0 - (v / vmax).min(1.0)).max(0.0) * dt)
        .sum()
}

/// Nearest-rank 95th percentile of `travel/free_flow` ratios.
pub fn planning_time_index(travel_times: &[f64], free_flow_times: &[f64]) -> Result<f64> {
    if travel_times.is_empty() {
        return Err(Error::Empty("planning time index"));
    }
    if travel_times.len() != free_flow_times.len() {
        return Err(Error::Config("travel and free-flow times differ in length".into()));
    }
    let mut ratios: Vec<f64> = travel_times
        .iter()
        .zip(free_flow_times)
        .map(|(t, f)| t / f)
        .collect();
    ratios.sort_by(f64::total_cmp);
    let idx = ((0.95 * ratios.len() as f64).ceil() as usize).max(1) - 1;
    Ok(ratios[idx])
}

/// Delivery record of one knowledge episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub id: KnowledgeId,
    pub origin: VehicleId,
    pub created_at: f64,
    /// Vehicles active at creation, origin excluded.
    pub population: BTreeSet<VehicleId>,
    /// First-copy delivery time per receiver.
    pub deliveries: BTreeMap<VehicleId, f64>,
}

impl EpisodeLog {
    pub fn new(id: KnowledgeId, origin: VehicleId, created_at: f64, population: BTreeSet<VehicleId>) -> Self {
        Self {
            id,
            origin,
            created_at,
            population,
            deliveries: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, v: VehicleId, at: f64) {
        if v != self.origin {
            self.deliveries.entry(v).or_insert(at);
        }
    }

    /// Fraction of the population that received the episode; `None` when the
    /// population is empty.
    pub fn coverage(&self) -> Option<f64> {
        if self.population.is_empty() {
            return None;
        }
        let got = self.deliveries.keys().filter(|v| self.population.contains(v)).count();
        Some(got as f64 / self.population.len() as f64)
    }
}

/// Mean coverage over episodes with a non-empty population; 0 without any.
pub fn coverage(episodes: &[EpisodeLog]) -> f64 {
    let vals: Vec<f64> = episodes.iter().filter_map(EpisodeLog::coverage).collect();
    mean(&vals)
}

/// Mean first-copy delay over every delivery of every episode.
pub fn mean_delay(episodes: &[EpisodeLog]) -> f64 {
    let vals: Vec<f64> = episodes
        .iter()
        .flat_map(|e| e.deliveries.values().map(move |t| t - e.created_at))
        .collect();
    mean(&vals)
}

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Knowledge delivery log as CSV: one row per (episode, receiver).
pub fn knowledge_log_csv(episodes: &[EpisodeLog]) -> String {
    let mut s = String::from("episode,origin,created_at,vehicle,delivered_at\n");
    for e in episodes {
        for (v, t) in &e.deliveries {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                e.id,
                e.origin,
                fmt_sig(e.created_at),
                v,
                fmt_sig(*t)
            ));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> MetricsReport {
        MetricsReport {
            seed: 42,
            policy: ReroutingPolicy::Deasy,
            dissemination: DisseminationMode::Zop,
            penetration_rate: 1.0,
            vehicles: 10,
            arrived: 10,
            sim_end_s: 123.4,
            channel_busy_ratio: 0.0123456789,
            total_beacons: 1000,
            beacons_per_vehicle: 100.0,
            coverage: 0.9,
            overhead: 12,
            delay_s: 0.05,
            collisions: 3,
            mac_drops: 0,
            knowledge_episodes: 2,
            travel_distance_m: 1234.5678,
            travel_time_s: 99.0,
            congestion_time_loss_s: 1.0 / 3.0,
            co2_g: 200.0,
            planning_time_index: 1.0,
        }
    }

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.0123456789), "0.0123457");
        assert_eq!(fmt_sig(1234.5678), "1234.57");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(12345678.0), "12345678");
    }

    #[test]
    fn time_loss_examples() {
        let dt = 0.1;
        assert_eq!(congestion_time_loss((0..100).map(|_| (10.0, 10.0, dt))), 0.0);
        let stopped_then_free = (0..300).map(|_| (0.0, 10.0, dt)).chain((0..100).map(|_| (10.0, 10.0, dt)));
        assert!((congestion_time_loss(stopped_then_free) - 30.0).abs() < 1e-9);
        assert!((congestion_time_loss((0..600).map(|_| (5.0, 10.0, dt))) - 30.0).abs() < 1e-9);
    }

    #[test]
    fn pti_examples() {
        assert_eq!(planning_time_index(&[10.0; 5], &[10.0; 5]).unwrap(), 1.0);
        // Nearest rank of 20 samples is the 19th smallest.
        let mut tt = vec![1.0; 19];
        tt.push(3.0);
        assert_eq!(planning_time_index(&tt, &[1.0; 20]).unwrap(), 1.0);
        tt[18] = 3.0;
        assert_eq!(planning_time_index(&tt, &[1.0; 20]).unwrap(), 3.0);
        assert_eq!(planning_time_index(&[4.0, 6.0], &[2.0, 3.0]).unwrap(), 2.0);
        assert!(matches!(planning_time_index(&[], &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn coverage_and_delay() {
        let pop: BTreeSet<_> = (1..=10).map(VehicleId).collect();
        let mut e = EpisodeLog::new(KnowledgeId(0), VehicleId(0), 5.0, pop);
        for v in 1..=9 {
            e.record(VehicleId(v), 5.5);
        }
        e.record(VehicleId(0), 5.0);
        e.record(VehicleId(3), 9.0);
        assert!((e.coverage().unwrap() - 0.9).abs() < 1e-12);
        assert!((mean_delay(&[e.clone()]) - 0.5).abs() < 1e-12);
        assert!((coverage(&[e]) - 0.9).abs() < 1e-12);
        assert_eq!(coverage(&[]), 0.0);
    }

    #[test]
    fn csv_appends_under_matching_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.csv");
        report().write_csv(&path).unwrap();
        report().write_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], lines[2]);
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());

        let other = dir.path().join("other.csv");
        fs::write(&other, "a,b\n1,2\n").unwrap();
        assert!(matches!(report().write_csv(&other), Err(Error::HeaderMismatch(_))));
    }
}
