mod common;

use std::collections::BTreeMap;

use deasy_core::demand::{demand_to_text, DemandEntry};
use deasy_core::knowledge::{CongestedSegment, KnowledgeId, LevelOfService};
use deasy_core::radio::Channel;
use deasy_core::road_network::{free_flow_time, GridSpec};
use deasy_core::sim::{parse_trace, replay_trace, trace_to_text, TxKind};
use deasy_core::{
    run_scenario, DisseminationMode, EdgeId, Error, NodeId, ReroutingPolicy, RoadGraph, ScenarioConfig, Simulation,
    VehicleId,
};

use common::{line_network, small_bottleneck};

fn small(seed: u64, policy: ReroutingPolicy, mode: DisseminationMode) -> Simulation {
    let s = small_bottleneck();
    let base = ScenarioConfig {
        rerouting_policy: policy,
        dissemination: mode,
        ..s.base_config()
    };
    let (cfg, g, d) = s.build(seed, &base).unwrap();
    Simulation::new(cfg, g, &d).unwrap()
}

fn jam() -> Vec<CongestedSegment> {
    vec![CongestedSegment {
        edge: EdgeId(0),
        level: LevelOfService::F,
        w_road: 0.1,
    }]
}

/// `n` vehicles entering a straight road `gap_s` apart.
fn platoon(n: u32, gap_s: f64, road_nodes: u32, spacing: f64, mode: DisseminationMode) -> Simulation {
    let g = line_network(road_nodes, spacing, 10.0);
    let demand: Vec<DemandEntry> = (0..n)
        .map(|i| DemandEntry {
            depart_time: i as f64 * gap_s,
            origin: NodeId(0),
            destination: NodeId(road_nodes - 1),
        })
        .collect();
    let cfg = ScenarioConfig {
        dissemination: mode,
        rerouting_policy: ReroutingPolicy::None,
        driver_imperfection: 0.0,
        seed: 3,
        ..Default::default()
    };
    let mut sim = Simulation::new(cfg, g, &demand).unwrap();
    sim.record_transmissions();
    sim
}

#[test]
fn lone_vehicle_drives_at_free_flow() {
    let g = RoadGraph::manhattan_grid(&GridSpec::new(2, 2, 200.0)).unwrap();
    let demand = [DemandEntry {
        depart_time: 1.0,
        origin: NodeId(0),
        destination: NodeId(3),
    }];
    let mut sim = Simulation::new(ScenarioConfig::default(), g.clone(), &demand).unwrap();
    let route = sim.spawn_route(VehicleId(0)).unwrap().clone();
    let ff = free_flow_time(&g, &route);
    sim.run_until(f64::INFINITY).unwrap();
    let r = sim.report();
    assert_eq!(r.arrived, 1);
    assert!((r.travel_time_s - ff).abs() / ff < 0.05, "{} vs {ff}", r.travel_time_s);
    assert!((r.travel_distance_m - 400.0).abs() < 1e-6);
    assert!(r.co2_g > 0.0);
    assert!(sim.is_finished());
}

#[test]
fn same_seed_same_row() {
    let a = small(4, ReroutingPolicy::Deasy, DisseminationMode::Zop).run().unwrap();
    let b = small(4, ReroutingPolicy::Deasy, DisseminationMode::Zop).run().unwrap();
    assert_eq!(a.csv_row(), b.csv_row());
}

#[test]
fn replaying_a_trace_reproduces_the_report() {
    let s = small_bottleneck();
    let (cfg, g, d) = s.build(5, &s.base_config()).unwrap();
    let mut sim = Simulation::new(cfg.clone(), g.clone(), &d).unwrap();
    sim.record_trace();
    sim.run_until(f64::INFINITY).unwrap();
    let original = sim.report();
    let text = trace_to_text(sim.trace().unwrap());
    let trace = parse_trace(&text, "trace").unwrap();
    let replayed = replay_trace(cfg.clone(), g.clone(), &d, trace.clone()).unwrap();
    assert_eq!(replayed.csv_row(), original.csv_row());

    let mut tampered = trace;
    let last = tampered.len() / 2;
    tampered[last].time.0 += 1;
    let err = replay_trace(cfg, g, &d, tampered).unwrap_err();
    assert!(matches!(err, Error::TraceMismatch { .. }), "{err}");
}

#[test]
fn penetration_rate_selects_a_floor_share() {
    let s = small_bottleneck();
    for (rate, expected) in [(1.0, 120), (0.5, 60), (0.25, 30)] {
        let base = ScenarioConfig {
            penetration_rate: rate,
            ..s.base_config()
        };
        let (cfg, g, d) = s.build(1, &base).unwrap();
        let sim = Simulation::new(cfg, g, &d).unwrap();
        assert_eq!(sim.vehicle_ids().count(), expected);
    }
}

/// Knowledge transmissions of one episode, excluding the origin's own.
fn relays_of(sim: &Simulation, k: KnowledgeId) -> usize {
    sim.transmissions()
        .unwrap()
        .iter()
        .filter(|t| matches!(t.kind, TxKind::Knowledge { id, origin } if id == k && origin != t.sender))
        .count()
}

#[test]
fn zop_suppresses_relays_in_a_dense_cluster() {
    let mut relays = Vec::new();
    for mode in [DisseminationMode::Zop, DisseminationMode::Flooding] {
        let mut sim = platoon(20, 1.0, 50, 100.0, mode);
        // Insertion is gap-limited, so wait for the last vehicle to enter.
        let mut t = 20.0;
        while !sim.is_active(VehicleId(19)) {
            t += 1.0;
            assert!(t < 120.0, "platoon never formed");
            sim.run_until(t).unwrap();
        }
        let front = VehicleId(0);
        let k = sim.originate_knowledge(front, jam()).unwrap();
        sim.run_until(t + 5.0).unwrap();
        let ep = sim.episodes().iter().find(|e| e.id == k).unwrap();
        assert_eq!(ep.coverage(), Some(1.0));
        relays.push(relays_of(&sim, k));
    }
    assert!(relays[0] <= 2, "{relays:?}");
    assert_eq!(relays[1], 19);
}

#[test]
fn zop_carries_knowledge_along_a_sparse_chain() {
    // 200 m apart: each vehicle reaches only its immediate neighbours.
    let mut sim = platoon(8, 20.0, 60, 100.0, DisseminationMode::Zop);
    sim.run_until(150.0).unwrap();
    assert!((0..8).all(|i| sim.is_active(VehicleId(i))));
    let k = sim.originate_knowledge(VehicleId(0), jam()).unwrap();
    sim.run_until(160.0).unwrap();
    let ep = sim.episodes().iter().find(|e| e.id == k).unwrap();
    assert_eq!(ep.coverage(), Some(1.0));
    // Delivery time grows hop by hop.
    let times: Vec<f64> = (1..8).map(|i| ep.deliveries[&VehicleId(i)]).collect();
    assert!(times.windows(2).all(|w| w[0] < w[1]), "{times:?}");
    let relays = relays_of(&sim, k);
    assert!((6..=7).contains(&relays), "relays {relays}");
}

#[test]
fn saturated_channel_collides_but_stays_bounded() {
    let g = line_network(3, 300.0, 1.0);
    let demand: Vec<DemandEntry> = (0..50)
        .map(|i| DemandEntry {
            depart_time: i as f64 * 0.5,
            origin: NodeId(0),
            destination: NodeId(2),
        })
        .collect();
    let cfg = ScenarioConfig {
        beacon_interval: 0.002,
        sim_duration: 30.0,
        run_to_completion: false,
        seed: 8,
        ..Default::default()
    };
    let mut sim = Simulation::new(cfg, g, &demand).unwrap();
    sim.run_until(30.0).unwrap();
    let r = sim.report();
    assert!(r.collisions > 0);
    assert!(r.channel_busy_ratio > 0.5 && r.channel_busy_ratio <= 1.0, "{}", r.channel_busy_ratio);
    assert_eq!(r.sim_end_s, 30.0);
}

#[test]
fn beacons_are_never_relayed_and_are_counted_exactly() {
    let mut sim = small(2, ReroutingPolicy::Deasy, DisseminationMode::Zop);
    sim.record_transmissions();
    sim.run_until(f64::INFINITY).unwrap();
    let log = sim.transmissions().unwrap();
    let beacons = log
        .iter()
        .filter(|t| t.channel == Channel::Control && matches!(t.kind, TxKind::Beacon { .. }))
        .count() as u64;
    assert_eq!(beacons, sim.report().total_beacons);
    for t in log {
        if let TxKind::Beacon { origin, .. } = t.kind {
            assert_eq!(origin, t.sender);
        }
    }
}

#[test]
fn knowledge_and_route_info_are_sent_once_per_vehicle_and_episode() {
    let mut sim = small(3, ReroutingPolicy::Deasy, DisseminationMode::Zop);
    sim.record_transmissions();
    sim.run_until(f64::INFINITY).unwrap();
    let mut knowledge: BTreeMap<_, u32> = BTreeMap::new();
    let mut route_info: BTreeMap<_, u32> = BTreeMap::new();
    for t in sim.transmissions().unwrap() {
        match t.kind {
            TxKind::Knowledge { id, .. } => *knowledge.entry((t.sender, id)).or_default() += 1,
            TxKind::RouteInfo { episode } => *route_info.entry((t.sender, episode)).or_default() += 1,
            TxKind::Beacon { .. } => {}
        }
    }
    assert!(!knowledge.is_empty());
    assert!(knowledge.values().all(|c| *c == 1));
    assert!(!route_info.is_empty());
    assert!(route_info.values().all(|c| *c == 1));
    // Per episode, service transmissions never exceed the vehicles that got it
    // plus the origin.
    for ep in sim.episodes() {
        let sent = knowledge.keys().filter(|(_, id)| *id == ep.id).count();
        assert!(sent <= ep.deliveries.len() + 1);
    }
}

#[test]
fn zop_overhead_not_above_flooding() {
    for seed in [1, 2] {
        let z = small(seed, ReroutingPolicy::Deasy, DisseminationMode::Zop).run().unwrap();
        let f = small(seed, ReroutingPolicy::Deasy, DisseminationMode::Flooding).run().unwrap();
        assert!(z.overhead <= f.overhead, "seed {seed}: {} > {}", z.overhead, f.overhead);
    }
}

#[test]
fn no_rerouting_keeps_spawn_routes() {
    let mut sim = small(1, ReroutingPolicy::None, DisseminationMode::Zop);
    sim.run_until(f64::INFINITY).unwrap();
    assert!(sim.rerouted_vehicles().is_empty());
    assert!(sim.report().knowledge_episodes > 0);
    let ids: Vec<_> = sim.vehicle_ids().collect();
    for id in ids {
        assert_eq!(&sim.vehicle(id).unwrap().route, sim.spawn_route(id).unwrap());
    }
}

#[test]
fn rerouting_policies_change_routes_around_the_bottleneck() {
    for policy in [ReroutingPolicy::Deasy, ReroutingPolicy::Selfish] {
        let mut sim = small(1, policy, DisseminationMode::Zop);
        sim.run_until(f64::INFINITY).unwrap();
        let moved = sim.rerouted_vehicles();
        assert!(!moved.is_empty(), "{policy}");
        for id in moved {
            let v = sim.vehicle(id).unwrap();
            assert!(v.route.is_connected(sim.graph()), "{policy} {id}");
            assert_eq!(v.route.destination, sim.spawn_route(id).unwrap().destination);
        }
    }
}

#[test]
fn queues_keep_order_and_arrivals_cover_their_route() {
    let mut sim = small(7, ReroutingPolicy::Deasy, DisseminationMode::Zop);
    let edges: Vec<EdgeId> = sim.graph().edges().iter().map(|e| e.id).collect();
    let mut t = 0.0;
    while !sim.is_finished() {
        t += 1.0;
        sim.run_until(t).unwrap();
        for e in &edges {
            let q = sim.edge_queue(*e);
            let offsets: Vec<f64> = q.iter().map(|v| sim.vehicle(*v).unwrap().offset_m).collect();
            assert!(offsets.windows(2).all(|w| w[0] >= w[1]), "edge {e} at {t}: {offsets:?}");
        }
    }
    let arrived: Vec<_> = sim.vehicle_ids().filter(|id| sim.has_arrived(*id)).collect();
    assert!(!arrived.is_empty());
    for id in arrived {
        let v = sim.vehicle(id).unwrap();
        let len: f64 = v.route.edges.iter().map(|e| sim.graph().edge(*e).length_m).sum();
        assert!((v.distance_travelled() - len).abs() < 1e-6, "{id}");
    }
}

#[test]
fn duration_cap_ends_the_run() {
    let s = small_bottleneck();
    let base = ScenarioConfig {
        sim_duration: 60.0,
        ..s.base_config()
    };
    let (cfg, g, d) = s.build(1, &base).unwrap();
    let r = Simulation::new(cfg, g, &d).unwrap().run().unwrap();
    assert_eq!(r.sim_end_s, 60.0);
    assert!(r.arrived < r.vehicles);
}

#[test]
fn runs_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let s = small_bottleneck();
    let (cfg, g, d) = s.build(9, &s.base_config()).unwrap();
    std::fs::write(dir.path().join("net.txt"), g.to_text()).unwrap();
    std::fs::write(dir.path().join("demand.txt"), demand_to_text(&d)).unwrap();
    let relative = ScenarioConfig {
        network_path: "net.txt".into(),
        demand_path: "demand.txt".into(),
        ..cfg.clone()
    };
    let path = dir.path().join("scenario.cfg");
    std::fs::write(&path, relative.to_text()).unwrap();
    let loaded = ScenarioConfig::from_file(&path).unwrap();
    assert_eq!(loaded.incident, cfg.incident);
    let from_files = run_scenario(&loaded).unwrap();
    let in_memory = Simulation::new(cfg, g, &d).unwrap().run().unwrap();
    assert_eq!(from_files.csv_row(), in_memory.csv_row());
}

#[test]
fn unknown_nodes_in_demand_are_reported() {
    let g = line_network(3, 100.0, 10.0);
    let demand = [DemandEntry {
        depart_time: 0.0,
        origin: NodeId(0),
        destination: NodeId(42),
    }];
    let err = Simulation::new(ScenarioConfig::default(), g, &demand).err().unwrap();
    assert!(matches!(err, Error::Scenario { vehicle: VehicleId(0), .. }), "{err}");
}
