//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured numbers (visible under `--nocapture`).
//!
//! Run with `cargo test --test acceptance`.

mod common;

use rand::Rng;
use std::time::Instant;
use traffic_twin::conflict::{detect, SeparationParams};
use traffic_twin::engine::{self, MapSource, SimConfig};
use traffic_twin::frenet::{to_euclidean, to_frenet_near, DEFAULT_CORRIDOR};
use traffic_twin::manager::ManagerMode;
use traffic_twin::map::{a_star, build_default_map, EdgeGeometry, NodeId};
use traffic_twin::planner::quintic_solve;
use traffic_twin::rng::{channel_rng, noise_rng};
use traffic_twin::v2x::{AgentId, ChannelModel, LightId, MessageBus, Payload};

#[test]
fn criterion_01_routing_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = noise_rng(101);
    let mut comparisons = 0u32;
    for _ in 0..100 {
        let graph = common::random_connected_graph(&mut rng, 30);
        let ids: Vec<NodeId> = graph.nodes().iter().map(|n| n.id.clone()).collect();
        for _ in 0..5 {
            let from = &ids[rng.gen_range(0..ids.len())];
            let to = &ids[rng.gen_range(0..ids.len())];
            let oracle = common::dijkstra_cost(&graph, from, to).expect("strongly connected");
            let path = a_star(&graph, from, to).expect("route exists");
            assert_eq!(
                path.total_length, oracle,
                "a_star cost differs from Dijkstra for {from} -> {to}"
            );
            comparisons += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("PASS criterion 1: routing oracle equivalence ({comparisons} exact matches, {elapsed:?})");
}

#[test]
fn criterion_02_frenet_round_trip() {
    let started = Instant::now();
    let graph = build_default_map(0.5).unwrap();
    // A route mixing long straights, corner arcs, and turn arcs.
    let path = a_star(&graph, &NodeId::new("p_bs"), &NodeId::new("p_te")).unwrap();
    let mut rng = noise_rng(202);
    let mut worst_straight = 0.0f64;
    let mut worst_arc = 0.0f64;
    for _ in 0..1000 {
        let s = rng.gen_range(0.0..path.total_length);
        let d = rng.gen_range(-0.5..0.5);
        let pose = to_euclidean(&path, s, d).unwrap();
        let fs = to_frenet_near(&path, pose, 1.0, Some(s), DEFAULT_CORRIDOR).unwrap();
        let err = (fs.s - s).abs().max((fs.d - d).abs());
        let on_arc = matches!(
            path.segments[path.segment_index_at(s)].geometry,
            EdgeGeometry::CircularArc { .. }
        );
        if on_arc {
            worst_arc = worst_arc.max(err);
            assert!(err < 1e-3, "arc round trip error {err} at s={s}, d={d}");
        } else {
            worst_straight = worst_straight.max(err);
            assert!(err < 1e-6, "straight round trip error {err} at s={s}, d={d}");
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "PASS criterion 2: frenet round trip (worst straight {worst_straight:.2e} m, worst arc {worst_arc:.2e} m)"
    );
}

#[test]
fn criterion_03_quintic_boundary_residuals() {
    let started = Instant::now();
    let mut rng = noise_rng(303);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (s0, v0, a0) = (
            rng.gen_range(-50.0..50.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-4.0..4.0),
        );
        let (s1, v1, a1) = (
            rng.gen_range(-50.0..50.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-4.0..4.0),
        );
        let t = rng.gen_range(1.0..5.0);
        let p = quintic_solve(s0, v0, a0, s1, v1, a1, t).unwrap();
        for (residual, name) in [
            ((p.position(0.0) - s0).abs(), "p(0)"),
            ((p.velocity(0.0) - v0).abs(), "p'(0)"),
            ((p.acceleration(0.0) - a0).abs(), "p''(0)"),
            ((p.position(t) - s1).abs(), "p(T)"),
            ((p.velocity(t) - v1).abs(), "p'(T)"),
            ((p.acceleration(t) - a1).abs(), "p''(T)"),
        ] {
            worst = worst.max(residual);
            assert!(residual < 1e-9, "{name} residual {residual}");
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("PASS criterion 3: quintic boundary residuals (worst {worst:.2e})");
}

#[test]
fn criterion_04_collision_detection_oracle_equivalence() {
    let started = Instant::now();
    let params = SeparationParams::default();
    let mut rng = noise_rng(404);
    let mut total = 0usize;
    for _ in 0..100 {
        let set = common::random_trajectory_set(&mut rng, 10, 100);
        let expected = common::brute_force_first_violations(&set, params.d_safe);
        let mut got = Vec::new();
        for (i, traj) in set.iter().enumerate() {
            for c in detect(traj, &set[i + 1..], &params, None).unwrap() {
                got.push((c.car_a, c.car_b, c.frame_index, c.distance));
            }
        }
        got.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        assert_eq!(got, expected);
        total += expected.len();
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("PASS criterion 4: detect matches exhaustive scan ({total} conflicts, {elapsed:?})");
}

#[test]
fn criterion_05_conflict_free_operation() {
    let started = Instant::now();
    let cfg = SimConfig {
        duration: 600.0,
        n_cars: 10,
        mode: ManagerMode::Optimized,
        ideal: false,
        ..SimConfig::default()
    };
    let out = engine::run(&cfg, None).unwrap();
    let elapsed = started.elapsed();

    assert_eq!(out.metrics.separation_violations, 0, "separation violations");
    assert_eq!(out.metrics.deadlock_events, 0, "deadlock events");
    let min_sep = out.metrics.min_separation.unwrap();
    assert!(min_sep >= cfg.separation.d_safe, "min separation {min_sep}");
    for car in 0..10 {
        let completions = out
            .extras
            .completions_per_car
            .get(&traffic_twin::CarId(car))
            .copied()
            .unwrap_or(0);
        assert!(completions >= 1, "car{car} completed no route");
    }
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "PASS criterion 5: 10 cars, 600 s, noisy channel: 0 violations, 0 deadlocks, min sep {min_sep:.3} m, {} routes, wall {elapsed:?}",
        out.metrics.completed_routes
    );
}

#[test]
fn criterion_06_fifo_comparison() {
    // Constructed symmetric merge cycle: every car starts on a merge
    // checkpoint of a tight ring, so the baseline's claims mutually block.
    let ring = SimConfig {
        map: MapSource::MergeRing,
        n_cars: 4,
        starts: Some(vec![
            NodeId::new("m0"),
            NodeId::new("m1"),
            NodeId::new("m2"),
            NodeId::new("m3"),
        ]),
        duration: 60.0,
        ..SimConfig::default()
    };
    let fifo_ring = engine::run(
        &SimConfig {
            mode: ManagerMode::FifoBaseline,
            ..ring.clone()
        },
        None,
    )
    .unwrap();
    let optimized_ring = engine::run(
        &SimConfig {
            mode: ManagerMode::Optimized,
            ..ring
        },
        None,
    )
    .unwrap();
    assert!(
        fifo_ring.metrics.deadlock_events >= 1,
        "fifo merge cycle should deadlock, got {}",
        fifo_ring.metrics.deadlock_events
    );
    assert_eq!(optimized_ring.metrics.deadlock_events, 0);

    // Default 10-car scenario: optimized throughput must not trail the
    // baseline.
    let base = SimConfig {
        duration: 300.0,
        ..SimConfig::default()
    };
    let optimized = engine::run(
        &SimConfig {
            mode: ManagerMode::Optimized,
            ..base.clone()
        },
        None,
    )
    .unwrap();
    let fifo = engine::run(
        &SimConfig {
            mode: ManagerMode::FifoBaseline,
            ..base
        },
        None,
    )
    .unwrap();
    assert!(
        optimized.metrics.throughput >= fifo.metrics.throughput,
        "optimized {} < fifo {}",
        optimized.metrics.throughput,
        fifo.metrics.throughput
    );
    println!(
        "PASS criterion 6: merge-cycle deadlocks fifo {} / optimized {}; default-map throughput {:.2} vs {:.2} routes/min",
        fifo_ring.metrics.deadlock_events,
        optimized_ring.metrics.deadlock_events,
        optimized.metrics.throughput,
        fifo.metrics.throughput
    );
}

#[test]
fn criterion_07_lag_finding() {
    let cfg = SimConfig {
        duration: 60.0,
        channel: ChannelModel {
            base_latency: 0.0,
            jitter_sigma: 0.0,
            drop_prob: 0.0,
        },
        ..SimConfig::default()
    };
    let rows = engine::lag_experiment(&cfg, &[0.0, 0.05, 0.2]).unwrap();
    assert!(rows[0].mean_response_delay <= cfg.vehicle_dt + 1e-12);
    assert!(
        rows[0].mean_response_delay < rows[1].mean_response_delay
            && rows[1].mean_response_delay < rows[2].mean_response_delay,
        "delays not strictly increasing: {:?}",
        rows.iter().map(|r| r.mean_response_delay).collect::<Vec<_>>()
    );
    let upper = 0.2 + cfg.planning_period + cfg.vehicle_dt;
    assert!(
        (0.2..=upper).contains(&rows[2].mean_response_delay),
        "delay at 200 ms: {}",
        rows[2].mean_response_delay
    );
    println!(
        "PASS criterion 7: mean response delay {:.4} / {:.4} / {:.4} s across 0/50/200 ms latency",
        rows[0].mean_response_delay, rows[1].mean_response_delay, rows[2].mean_response_delay
    );
}

#[test]
fn criterion_08_curve_error_exceeds_straight() {
    let cfg = SimConfig {
        duration: 120.0,
        n_cars: 3,
        noise: traffic_twin::vehicle::NoiseModel {
            enabled: false,
            ..Default::default()
        },
        channel: ChannelModel::IDEAL,
        ..SimConfig::default()
    };
    let out = engine::run(&cfg, None).unwrap();
    let e = &out.metrics.cross_track_error;
    assert!(
        e.curve_mean > e.straight_mean,
        "curve {} <= straight {}",
        e.curve_mean,
        e.straight_mean
    );
    println!(
        "PASS criterion 8: zero-noise tracking error on curves {:.4} m > straights {:.4} m",
        e.curve_mean, e.straight_mean
    );
}

#[test]
fn criterion_09_channel_statistics() {
    let channel = ChannelModel {
        base_latency: 0.05,
        jitter_sigma: 0.01,
        drop_prob: 0.01,
    };
    let mut bus = MessageBus::new();
    let mut rng = channel_rng(909);
    let n = 10_000u64;
    for _ in 0..n {
        bus.broadcast(
            AgentId::Light(LightId(0)),
            Payload::Preemption {
                light_id: LightId(0),
                phase_index: 0,
            },
            0.0,
            &channel,
            &mut rng,
        );
    }
    bus.deliver_due(f64::INFINITY);
    let stats = bus.stats();
    assert_eq!(stats.sent, n);
    let mean = stats.mean_delay;
    assert!(
        (mean - 0.05).abs() <= 0.05 * 0.05,
        "mean delay {mean} beyond 5% of 50 ms"
    );
    let expected_drops = n as f64 * channel.drop_prob;
    let sigma = (n as f64 * channel.drop_prob * (1.0 - channel.drop_prob)).sqrt();
    let deviation = (stats.dropped as f64 - expected_drops).abs();
    assert!(
        deviation <= 3.0 * sigma,
        "drop count {} vs expected {expected_drops} (3 sigma {:.1})",
        stats.dropped,
        3.0 * sigma
    );
    println!(
        "PASS criterion 9: mean delay {:.4} s (target 0.050), drops {} vs {:.0} expected",
        mean, stats.dropped, expected_drops
    );
}

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));

    let cfg = SimConfig {
        duration: 60.0,
        n_cars: 6,
        ..SimConfig::default()
    };
    let run = |out: &std::path::Path, workers: usize| {
        let mut one = cfg.clone();
        one.workers = workers;
        let result = engine::run(&one, Some(out)).unwrap();
        engine::write_metrics(&result.metrics, out).unwrap();
    };
    run(&a, 1);
    run(&b, 1);
    run(&c, 3);

    let read = |dir: &std::path::Path, file: &str| std::fs::read(dir.join(file)).unwrap();
    assert_eq!(read(&a, "metrics.json"), read(&b, "metrics.json"), "repeat run differs");
    assert_eq!(read(&a, "trace.csv"), read(&b, "trace.csv"), "repeat trace differs");
    assert_eq!(read(&a, "metrics.json"), read(&c, "metrics.json"), "worker count changes metrics");
    assert_eq!(read(&a, "trace.csv"), read(&c, "trace.csv"), "worker count changes trace");
    assert_eq!(read(&a, "events.jsonl"), read(&c, "events.jsonl"));
    println!("PASS criterion 10: byte-identical metrics.json and trace.csv across repeats and worker counts");
}
