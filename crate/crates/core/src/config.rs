//! Scenario configuration: a flat `key = value` text file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ids::EdgeId;
pub use crate::knowledge::DisseminationMode;
use crate::radio::{PayloadSizes, RadioConstants, ZopParams};
pub use crate::rerouting::ReroutingPolicy;

impl DisseminationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DisseminationMode::Zop => "zop",
            DisseminationMode::Flooding => "flooding",
        }
    }
}

impl std::str::FromStr for DisseminationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zop" => Ok(DisseminationMode::Zop),
            "flooding" => Ok(DisseminationMode::Flooding),
            other => Err(Error::Config(format!("unknown dissemination mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for DisseminationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A temporary speed restriction on one edge, used to induce a bottleneck.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Incident {
    pub edge: EdgeId,
    pub speed_mps: f64,
    pub start_s: f64,
    pub end_s: f64,
}

impl Incident {
    pub fn active_at(&self, t: f64) -> bool {
        t >= self.start_s && t < self.end_s
    }
}

/// Everything that parameterizes one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub network_path: PathBuf,
    pub demand_path: PathBuf,
    pub penetration_rate: f64,
    pub sim_duration: f64,
    /// Stop as soon as every spawned vehicle has arrived.
    pub run_to_completion: bool,
    pub mobility_dt: f64,
    /// Car-following driver imperfection in `[0, 1]`.
    pub driver_imperfection: f64,
    pub beacon_interval: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub tx_range_m: f64,
    pub bitrate_bps: f64,
    pub tx_power_dbm: f64,
    pub rx_sensitivity_dbm: f64,
    pub rerouting_policy: ReroutingPolicy,
    pub dissemination: DisseminationMode,
    pub seed: u64,
    pub k_candidates: usize,
    pub zop_rho: f64,
    pub zop_wait_min_s: f64,
    pub zop_wait_max_s: f64,
    pub zop_wait_long_s: f64,
    pub wait_time_max_s: f64,
    pub dist_ref_m: f64,
    /// Cost multiplier applied to congested edges when generating candidates.
    pub congestion_penalty: f64,
    pub report_ttl_s: f64,
    pub knowledge_ttl_s: f64,
    pub neighbor_timeout_beacons: f64,
    pub max_forward_reports: usize,
    pub incident: Option<Incident>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let zop = ZopParams::default();
        Self {
            network_path: PathBuf::new(),
            demand_path: PathBuf::new(),
            penetration_rate: 1.0,
            sim_duration: 3600.0,
            run_to_completion: true,
            mobility_dt: 0.1,
            driver_imperfection: 0.5,
            beacon_interval: 1.0,
            alpha: 0.5,
            sigma: 0.7,
            tx_range_m: 287.0,
            bitrate_bps: 6e6,
            tx_power_dbm: 13.01,
            rx_sensitivity_dbm: -82.0,
            rerouting_policy: ReroutingPolicy::Deasy,
            dissemination: DisseminationMode::Zop,
            seed: 0,
            k_candidates: 3,
            zop_rho: zop.rho,
            zop_wait_min_s: zop.wait_min_s,
            zop_wait_max_s: zop.wait_max_s,
            zop_wait_long_s: zop.wait_long_s,
            wait_time_max_s: 2.0,
            dist_ref_m: 2000.0,
            congestion_penalty: 10.0,
            report_ttl_s: 10.0,
            knowledge_ttl_s: 120.0,
            neighbor_timeout_beacons: 3.0,
            max_forward_reports: 64,
            incident: None,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

fn boolean(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("invalid value `{value}` for `{key}`")),
    }
}

impl ScenarioConfig {
    /// Parses `key = value` lines; `#` starts a comment. Relative paths are
    /// resolved against `base_dir` when given.
    pub fn parse(text: &str, source_name: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg = ScenarioConfig::default();
        let mut incident_edge: Option<EdgeId> = None;
        let mut incident_speed = 2.0;
        let mut incident_start = 0.0;
        let mut incident_end = f64::INFINITY;
        let resolve = |p: &str| -> PathBuf {
            let p = PathBuf::from(p);
            match base_dir {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            }
        };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(source_name, line_no, "expected `key = value`"));
            };
            let (key, value) = (key.trim(), value.trim());
            let res: std::result::Result<(), String> = (|| {
                match key {
                    "network_path" => cfg.network_path = resolve(value),
                    "demand_path" => cfg.demand_path = resolve(value),
                    "penetration_rate" => cfg.penetration_rate = num(key, value)?,
                    "sim_duration" => cfg.sim_duration = num(key, value)?,
                    "run_to_completion" => cfg.run_to_completion = boolean(key, value)?,
                    "mobility_dt" => cfg.mobility_dt = num(key, value)?,
                    "driver_imperfection" => cfg.driver_imperfection = num(key, value)?,
                    "beacon_interval" => cfg.beacon_interval = num(key, value)?,
                    "alpha" => cfg.alpha = num(key, value)?,
                    "sigma" => cfg.sigma = num(key, value)?,
                    "tx_range_m" => cfg.tx_range_m = num(key, value)?,
                    "bitrate_bps" => cfg.bitrate_bps = num(key, value)?,
                    "tx_power_dbm" => cfg.tx_power_dbm = num(key, value)?,
                    "rx_sensitivity_dbm" => cfg.rx_sensitivity_dbm = num(key, value)?,
                    "rerouting_policy" => cfg.rerouting_policy = value.parse().map_err(|e: Error| e.to_string())?,
                    "dissemination" => cfg.dissemination = value.parse().map_err(|e: Error| e.to_string())?,
                    "seed" => cfg.seed = num(key, value)?,
                    "k_candidates" => cfg.k_candidates = num(key, value)?,
                    "zop_rho" => cfg.zop_rho = num(key, value)?,
                    "zop_wait_min_s" => cfg.zop_wait_min_s = num(key, value)?,
                    "zop_wait_max_s" => cfg.zop_wait_max_s = num(key, value)?,
                    "zop_wait_long_s" => cfg.zop_wait_long_s = num(key, value)?,
                    "wait_time_max_s" => cfg.wait_time_max_s = num(key, value)?,
                    "dist_ref_m" => cfg.dist_ref_m = num(key, value)?,
                    "congestion_penalty" => cfg.congestion_penalty = num(key, value)?,
                    "report_ttl_s" => cfg.report_ttl_s = num(key, value)?,
                    "knowledge_ttl_s" => cfg.knowledge_ttl_s = num(key, value)?,
                    "neighbor_timeout_beacons" => cfg.neighbor_timeout_beacons = num(key, value)?,
                    "max_forward_reports" => cfg.max_forward_reports = num(key, value)?,
                    "incident_edge" => incident_edge = Some(EdgeId(num(key, value)?)),
                    "incident_speed_mps" => incident_speed = num(key, value)?,
                    "incident_start_s" => incident_start = num(key, value)?,
                    "incident_end_s" => incident_end = num(key, value)?,
                    _ => return Err(format!("unknown key `{key}`")),
                }
                Ok(())
            })();
            res.map_err(|msg| Error::parse(source_name, line_no, msg))?;
        }
        cfg.incident = incident_edge.map(|edge| Incident {
            edge,
            speed_mps: incident_speed,
            start_s: incident_start,
            end_s: incident_end,
        });
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string(), path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::Config(msg.to_string())) };
        check(
            self.penetration_rate > 0.0 && self.penetration_rate <= 1.0,
            "penetration_rate must be in (0, 1]",
        )?;
        check(self.alpha > 0.0 && self.alpha < 1.0, "alpha must be in (0, 1)")?;
        check((0.0..=1.0).contains(&self.sigma), "sigma must be in [0, 1]")?;
        check(self.tx_range_m > 0.0, "tx_range_m must be positive")?;
        check(self.sim_duration > 0.0, "sim_duration must be positive")?;
        check(self.mobility_dt > 0.0, "mobility_dt must be positive")?;
        check(
            (0.0..=1.0).contains(&self.driver_imperfection),
            "driver_imperfection must be in [0, 1]",
        )?;
        check(self.beacon_interval > 0.0, "beacon_interval must be positive")?;
        check(self.bitrate_bps > 0.0, "bitrate_bps must be positive")?;
        check(self.k_candidates >= 1, "k_candidates must be at least 1")?;
        check((0.0..=1.0).contains(&self.zop_rho), "zop_rho must be in [0, 1]")?;
        check(
            0.0 <= self.zop_wait_min_s
                && self.zop_wait_min_s <= self.zop_wait_max_s
                && self.zop_wait_max_s <= self.zop_wait_long_s,
            "zop waits must satisfy 0 <= min <= max <= long",
        )?;
        check(self.wait_time_max_s >= 0.0, "wait_time_max_s must be non-negative")?;
        check(self.dist_ref_m > 0.0, "dist_ref_m must be positive")?;
        check(self.congestion_penalty >= 1.0, "congestion_penalty must be at least 1")?;
        check(self.report_ttl_s > 0.0 && self.knowledge_ttl_s > 0.0, "ttls must be positive")?;
        check(self.neighbor_timeout_beacons > 0.0, "neighbor_timeout_beacons must be positive")?;
        if let Some(inc) = &self.incident {
            check(inc.speed_mps > 0.0, "incident_speed_mps must be positive")?;
            check(inc.start_s <= inc.end_s, "incident window is reversed")?;
        }
        Ok(())
    }

    pub fn radio_constants(&self) -> RadioConstants {
        RadioConstants {
            tx_power_dbm: self.tx_power_dbm,
            rx_sensitivity_dbm: self.rx_sensitivity_dbm,
            tx_range_m: self.tx_range_m,
            ..RadioConstants::default()
        }
    }

    pub fn zop_params(&self) -> ZopParams {
        ZopParams {
            rho: self.zop_rho,
            wait_min_s: self.zop_wait_min_s,
            wait_max_s: self.zop_wait_max_s,
            wait_long_s: self.zop_wait_long_s,
            ..ZopParams::default()
        }
    }

    pub fn payload_sizes(&self) -> PayloadSizes {
        PayloadSizes::default()
    }

    /// Text form accepted by [`ScenarioConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("network_path", self.network_path.display().to_string());
        kv("demand_path", self.demand_path.display().to_string());
        kv("penetration_rate", self.penetration_rate.to_string());
        kv("sim_duration", self.sim_duration.to_string());
        kv("run_to_completion", self.run_to_completion.to_string());
        kv("mobility_dt", self.mobility_dt.to_string());
        kv("driver_imperfection", self.driver_imperfection.to_string());
        kv("beacon_interval", self.beacon_interval.to_string());
        kv("alpha", self.alpha.to_string());
        kv("sigma", self.sigma.to_string());
        kv("tx_range_m", self.tx_range_m.to_string());
        kv("bitrate_bps", self.bitrate_bps.to_string());
        kv("tx_power_dbm", self.tx_power_dbm.to_string());
        kv("rx_sensitivity_dbm", self.rx_sensitivity_dbm.to_string());
        kv("rerouting_policy", self.rerouting_policy.to_string());
        kv("dissemination", self.dissemination.to_string());
        kv("seed", self.seed.to_string());
        kv("k_candidates", self.k_candidates.to_string());
        kv("zop_rho", self.zop_rho.to_string());
        kv("zop_wait_min_s", self.zop_wait_min_s.to_string());
        kv("zop_wait_max_s", self.zop_wait_max_s.to_string());
        kv("zop_wait_long_s", self.zop_wait_long_s.to_string());
        kv("wait_time_max_s", self.wait_time_max_s.to_string());
        kv("dist_ref_m", self.dist_ref_m.to_string());
        kv("congestion_penalty", self.congestion_penalty.to_string());
        kv("report_ttl_s", self.report_ttl_s.to_string());
        kv("knowledge_ttl_s", self.knowledge_ttl_s.to_string());
        kv("neighbor_timeout_beacons", self.neighbor_timeout_beacons.to_string());
        kv("max_forward_reports", self.max_forward_reports.to_string());
        if let Some(inc) = &self.incident {
            kv("incident_edge", inc.edge.0.to_string());
            kv("incident_speed_mps", inc.speed_mps.to_string());
            kv("incident_start_s", inc.start_s.to_string());
            kv("incident_end_s", inc.end_s.to_string());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_parameter_table() {
        let c = ScenarioConfig::default();
        assert_eq!(c.tx_range_m, 287.0);
        assert_eq!(c.bitrate_bps, 6e6);
        assert_eq!(c.tx_power_dbm, 13.01);
        assert_eq!(c.rx_sensitivity_dbm, -82.0);
        assert_eq!(c.beacon_interval, 1.0);
        assert_eq!(c.alpha, 0.5);
        assert_eq!(c.sigma, 0.7);
        // 20 mW
        assert!((10.0 * 20f64.log10() - c.tx_power_dbm).abs() < 0.01);
    }

    #[test]
    fn parses_and_round_trips() {
        let text = "# scenario\nnetwork_path = net.txt\ndemand_path = /abs/demand.txt\n\
                    penetration_rate = 0.5\nrerouting_policy = selfish\ndissemination = flooding\n\
                    seed = 42   # trailing comment\nincident_edge = 7\nincident_speed_mps = 1.5\n";
        let c = ScenarioConfig::parse(text, "cfg", Some(Path::new("/base"))).unwrap();
        assert_eq!(c.network_path, PathBuf::from("/base/net.txt"));
        assert_eq!(c.demand_path, PathBuf::from("/abs/demand.txt"));
        assert_eq!(c.penetration_rate, 0.5);
        assert_eq!(c.rerouting_policy, ReroutingPolicy::Selfish);
        assert_eq!(c.dissemination, DisseminationMode::Flooding);
        assert_eq!(c.seed, 42);
        let inc = c.incident.unwrap();
        assert_eq!(inc.edge, EdgeId(7));
        assert!(inc.active_at(1e6));
        let again = ScenarioConfig::parse(&c.to_text(), "cfg", None).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn errors_name_the_line() {
        let err = ScenarioConfig::parse("seed = 1\nbogus = 3\n", "cfg", None).unwrap_err();
        assert!(err.to_string().starts_with("cfg:2:"), "{err}");
        let err = ScenarioConfig::parse("seed = x\n", "cfg", None).unwrap_err();
        assert!(err.to_string().starts_with("cfg:1:"), "{err}");
        let err = ScenarioConfig::parse("just words\n", "cfg", None).unwrap_err();
        assert!(err.to_string().starts_with("cfg:1:"), "{err}");
    }

    #[test]
    fn rejects_out_of_range_values() {
        for bad in ["penetration_rate = 0", "penetration_rate = 1.5", "alpha = 1", "sigma = -0.1", "tx_range_m = 0"] {
            assert!(ScenarioConfig::parse(bad, "cfg", None).is_err(), "{bad}");
        }
        assert!(ScenarioConfig::parse("penetration_rate = 1", "cfg", None).is_ok());
    }
}
