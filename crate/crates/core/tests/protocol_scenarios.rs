mod common;

use common::*;
use vanet_sim::engine::log::LogEvent;
use vanet_sim::engine::packet::DropReason;
use vanet_sim::engine::time::SimTime;
use vanet_sim::kinematics::Position;
use vanet_sim::protocols::{MessageKind, Profile};

fn drops(log: &vanet_sim::engine::log::EventLog, reason: DropReason) -> usize {
    log.iter_event(LogEvent::Drop).filter(|r| r.reason == Some(reason)).count()
}

fn delivered(log: &vanet_sim::engine::log::EventLog) -> usize {
    log.iter_event(LogEvent::Deliver).count()
}

#[test]
fn dsdv_dumps_every_fifteen_seconds() {
    let log = run(setup(static_traces(&line(2, 100.0), 600.0), vec![], 600.0), "dsdv", Profile::Default);
    for node in 0..2 {
        assert_eq!(log.originated_by(node, MessageKind::DsdvFullDump), 40);
    }
}

#[test]
fn dsdv_line_converges_to_shortest_paths() {
    let pos = line(4, 200.0);
    let mut sim = simulate(setup(static_traces(&pos, 100.0), vec![], 100.0), "dsdv", Profile::Default);
    sim.run_until(SimTime::from_secs_f64(75.0));
    tables_match_bfs(&sim, &pos).unwrap();
}

#[test]
fn proactive_without_route_drops_at_source() {
    for name in ["dsdv", "olsr"] {
        let pos = [Position::new(0.0, 0.0), Position::new(1000.0, 0.0)];
        let log = run(setup(static_traces(&pos, 30.0), vec![cbr(0, 0, 1, 10.0, 11.0)], 30.0), name, Profile::Default);
        assert_eq!(delivered(&log), 0);
        assert_eq!(drops(&log, DropReason::NoRoute), 4, "{name}");
        for d in log.iter_event(LogEvent::Drop) {
            assert_eq!(d.time, d.created_at, "{name} dropped later than origination");
            assert_eq!(d.node, 0);
        }
    }
}

#[test]
fn one_hop_delivery_takes_one_hop_latency() {
    for name in ["dsdv", "olsr"] {
        let log = run(setup(static_traces(&line(2, 100.0), 60.0), vec![cbr(0, 0, 1, 30.0, 40.0)], 60.0), name, Profile::Default);
        assert_eq!(delivered(&log), 40, "{name}");
        for d in log.iter_event(LogEvent::Deliver) {
            let ms = (d.time - d.created_at).as_millis_f64();
            assert!((2.0..3.0).contains(&ms), "{name}: {ms} ms");
        }
    }
}

#[test]
fn ttl_one_expires_at_first_relay() {
    let mut s = setup(static_traces(&line(3, 200.0), 120.0), vec![cbr(0, 0, 2, 90.0, 91.0)], 120.0);
    s.data_ttl = 1;
    let log = run(s, "dsdv", Profile::Default);
    assert_eq!(delivered(&log), 0);
    let expired: Vec<_> = log
        .iter_event(LogEvent::Drop)
        .filter(|r| r.reason == Some(DropReason::TtlExpired))
        .collect();
    assert_eq!(expired.len(), 4);
    assert!(expired.iter().all(|r| r.node == 1));
}

#[test]
fn dymo_neighbor_found_with_first_ring() {
    let log = run(setup(static_traces(&line(2, 100.0), 60.0), vec![cbr(0, 0, 1, 10.0, 20.0)], 60.0), "dymo", Profile::Default);
    let rreqs: Vec<_> = sends(&log, 0, MessageKind::Rreq).collect();
    assert_eq!(rreqs.len(), 1);
    assert_eq!(rreqs[0].ttl, 1);
    assert_eq!(count_kind(&log, MessageKind::Rreq), 1);
    assert_eq!(count_kind(&log, MessageKind::Rrep), 1);
    assert_eq!(delivered(&log), 40);
}

#[test]
fn dymo_three_hops_needs_second_ring() {
    let log = run(setup(static_traces(&line(4, 200.0), 60.0), vec![cbr(0, 0, 3, 10.0, 20.0)], 60.0), "dymo", Profile::Default);
    let ttls: Vec<u8> = sends(&log, 0, MessageKind::Rreq).map(|r| r.ttl).collect();
    assert_eq!(ttls, vec![1, 3]);
    assert_eq!(delivered(&log), 40);
    // the first packet waited for the second ring
    let oldest = log.iter_event(LogEvent::Deliver).min_by_key(|r| r.created_at).unwrap();
    let waited = (oldest.time - oldest.created_at).as_millis_f64();
    assert!(waited >= 1000.0, "{waited}");
}

#[test]
fn dymo_unreachable_gives_up_after_diameter() {
    for (profile, rings, wait) in [(Profile::Default, vec![1u8, 3, 10], 1.0), (Profile::Mod, vec![1, 3, 30], 0.6)] {
        let pos = [Position::new(0.0, 0.0), Position::new(1000.0, 0.0)];
        let log = run(setup(static_traces(&pos, 30.0), vec![cbr(0, 0, 1, 10.0, 10.1)], 30.0), "dymo", profile);
        let ttls: Vec<u8> = sends(&log, 0, MessageKind::Rreq).map(|r| r.ttl).collect();
        assert_eq!(ttls, rings);
        let failed: Vec<_> = log
            .iter_event(LogEvent::Drop)
            .filter(|r| r.reason == Some(DropReason::DiscoveryFailed))
            .collect();
        assert_eq!(failed.len(), 1);
        // one full wait per ring
        let waited = (failed[0].time - failed[0].created_at).as_secs_f64();
        assert!((waited - 3.0 * wait).abs() < 1e-6, "{waited}");
    }
}

#[test]
fn dymo_single_rerr_covers_all_broken_flows() {
    // sources S1..S3 reach destinations D1..D3 only through hub H and relay M
    let hub = Position::new(0.0, 0.0);
    let relay = Position::new(250.0, 0.0);
    let pos = [
        hub,
        relay,
        Position::new(-200.0, 0.0),
        Position::new(-150.0, 150.0),
        Position::new(-150.0, -150.0),
        Position::new(450.0, 0.0),
        Position::new(400.0, 150.0),
        Position::new(400.0, -150.0),
    ];
    let mut traces = static_traces(&pos, 80.0);
    traces[1] = jump_trace(1, relay, Position::new(5000.0, 5000.0), 40.0, 80.0);
    let sessions = vec![cbr(0, 2, 5, 10.0, 70.0), cbr(1, 3, 6, 11.0, 70.0), cbr(2, 4, 7, 12.0, 70.0)];
    let log = run(setup(traces, sessions, 80.0), "dymo", Profile::Default);

    let before: Vec<_> = sends(&log, 0, MessageKind::Rerr).filter(|r| r.time.as_secs_f64() < 40.0).collect();
    assert!(before.is_empty());
    let rerrs: Vec<_> = sends(&log, 0, MessageKind::Rerr).collect();
    assert!(!rerrs.is_empty());
    // 28 header + 4 + 8 per unreachable destination
    assert_eq!(rerrs[0].size, 56);
    assert_eq!(rerrs[0].ttl, 1);
    // later errors name one destination each
    assert!(rerrs[1..].iter().all(|r| r.size == 40));
}

#[test]
fn olsr_hello_and_tc_cadence() {
    for (profile, hellos, tcs) in [(Profile::Default, 300i64, 120i64), (Profile::Mod, 600, 200)] {
        let log = run(setup(static_traces(&line(2, 100.0), 600.0), vec![], 600.0), "olsr", profile);
        for node in 0..2 {
            let h = log.originated_by(node, MessageKind::Hello) as i64;
            let t = log.originated_by(node, MessageKind::Tc) as i64;
            assert!((h - hellos).abs() <= 1, "{profile}: {h} hellos");
            assert!((t - tcs).abs() <= 1, "{profile}: {t} tcs");
        }
    }
}

#[test]
fn olsr_isolated_nodes_never_relay() {
    let pos = [Position::new(0.0, 0.0), Position::new(1000.0, 0.0)];
    let log = run(setup(static_traces(&pos, 120.0), vec![], 120.0), "olsr", Profile::Default);
    for node in 0..2 {
        assert_eq!(log.sent_by(node, MessageKind::Tc), log.originated_by(node, MessageKind::Tc));
        assert!(log.originated_by(node, MessageKind::Hello) > 0);
    }
}

#[test]
fn olsr_line_routes_after_three_tc_intervals() {
    let pos = line(5, 200.0);
    let mut sim = simulate(setup(static_traces(&pos, 30.0), vec![], 30.0), "olsr", Profile::Default);
    sim.run_until(SimTime::from_secs_f64(15.0));
    tables_match_bfs(&sim, &pos).unwrap();
}

#[test]
fn identical_setups_give_identical_logs() {
    for name in ["dsdv", "dymo", "olsr"] {
        let make = || setup(static_traces(&lattice(3, 3, 250.0), 60.0), vec![cbr(0, 0, 8, 10.0, 50.0), cbr(1, 6, 2, 12.0, 50.0)], 60.0);
        assert_eq!(run(make(), name, Profile::Default).to_csv_string(), run(make(), name, Profile::Default).to_csv_string());
    }
}

