use super::*;
use crate::config::SystemConfig;
use crate::trace::Segment;

fn params(mandatory: f64, optional: f64, max_servers: u32) -> SimParams {
    SimParams {
        service: ServiceParams {
            mandatory_mean: mandatory,
            optional_mean: optional,
        },
        boot_delay: 120.0,
        max_servers,
    }
}

fn sim_with(rate: f64, servers: u32, dimmer: f64, seed: u64) -> Simulator {
    Simulator::new(
        params(0.02, 0.03, 3),
        ArrivalTrace::constant(rate),
        SimState::new(servers, dimmer, seed),
    )
}

/// M/M/c mean response time from the textbook factorial sums.
fn erlang_oracle(lambda: f64, c: u32, mu: f64) -> f64 {
    let a = lambda / mu;
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let head: f64 = (0..c).map(|k| a.powi(k as i32) / fact(k)).sum();
    let tail = a.powi(c as i32) / fact(c) * (c as f64 / (c as f64 - a));
    let wait_prob = tail / (head + tail);
    wait_prob / (c as f64 * mu - lambda) + 1.0 / mu
}

#[test]
fn oracle_matches_hand_values() {
    assert!((erlang_oracle(15.0, 1, 20.0) - 0.2).abs() < 1e-12);
    assert!((erlang_oracle(30.0, 2, 20.0) - 0.114_285_714_285_714).abs() < 1e-12);
    assert!((erlang_oracle(50.0, 3, 20.0) - 0.120_224_719_101_123_6).abs() < 1e-12);
}

#[test]
fn empty_trace_only_moves_the_clock() {
    let mut sim = Simulator::new(
        params(0.02, 0.03, 3),
        ArrivalTrace::empty(),
        SimState::new(1, 0.5, 1),
    );
    sim.step_until(100.0);
    assert_eq!(sim.state().clock, 100.0);
    assert_eq!(sim.state().totals.arrivals, 0);
    assert_eq!(sim.read_probe(Metric::BasicRt), 0.0);
    assert_eq!(sim.read_probe(Metric::Utilization), 0.0);
}

#[test]
fn mm1_mean_response_time() {
    let job = Replication {
        arrival_rate: 15.0,
        servers: 1,
        service: ServiceParams {
            mandatory_mean: 0.05,
            optional_mean: 0.0,
        },
        dimmer: 0.0,
        seed: 7,
        completions: 100_000,
    };
    let r = job.run();
    assert!(r.completions >= 100_000);
    let w = erlang_oracle(15.0, 1, 20.0);
    assert!((r.mean_response_time - w).abs() / w < 0.05, "{r:?}");
}

#[test]
fn mmc_grid_matches_erlang_c() {
    // rho <= 0.7 across the grid
    let mut jobs = Vec::new();
    for (lambda, c) in [(10.0, 1), (20.0, 2), (28.0, 2), (30.0, 3), (40.0, 3)] {
        jobs.push(Replication {
            arrival_rate: lambda,
            servers: c,
            service: ServiceParams {
                mandatory_mean: 0.05,
                optional_mean: 0.0,
            },
            dimmer: 0.0,
            seed: 11 + c as u64,
            completions: 50_000,
        });
    }
    for (job, r) in jobs.iter().zip(replicate(&jobs)) {
        let w = erlang_oracle(job.arrival_rate, job.servers, 20.0);
        let err = (r.mean_response_time - w).abs() / w;
        assert!(
            err < 0.05,
            "lambda={} c={} sim={} oracle={}",
            job.arrival_rate,
            job.servers,
            r.mean_response_time,
            w
        );
        assert!(r.littles_law_gap() < 0.03, "{r:?}");
    }
}

#[test]
fn parallel_and_sequential_replication_agree() {
    let jobs: Vec<Replication> = (0..4)
        .map(|seed| Replication {
            arrival_rate: 12.0,
            servers: 1,
            service: ServiceParams::default(),
            dimmer: 0.5,
            seed,
            completions: 2_000,
        })
        .collect();
    assert_eq!(replicate(&jobs), replicate_seq(&jobs));
}

#[test]
fn dimmer_zero_serves_mandatory_only() {
    let r = Replication {
        arrival_rate: 10.0,
        servers: 2,
        service: ServiceParams::default(),
        dimmer: 0.0,
        seed: 3,
        completions: 10_000,
    }
    .run();
    assert_eq!(r.optional_fraction, 0.0);
    assert!((r.mean_service_time - 0.02).abs() / 0.02 < 0.03, "{r:?}");
}

#[test]
fn dimmer_one_mean_service_time() {
    let r = Replication {
        arrival_rate: 10.0,
        servers: 2,
        service: ServiceParams::default(),
        dimmer: 1.0,
        seed: 5,
        completions: 10_000,
    }
    .run();
    assert_eq!(r.optional_fraction, 1.0);
    assert!((r.mean_service_time - 0.05).abs() / 0.05 < 0.03, "{r:?}");
}

#[test]
fn dimmer_sets_optional_fraction() {
    let r = Replication {
        arrival_rate: 10.0,
        servers: 2,
        service: ServiceParams::default(),
        dimmer: 0.8,
        seed: 9,
        completions: 10_000,
    }
    .run();
    assert!((r.optional_fraction - 0.8).abs() <= 0.02, "{r:?}");
}

#[test]
fn arrival_rate_probe_over_window() {
    let mut sim = sim_with(10.0, 2, 0.5, 21);
    sim.step_until(200.0);
    let rate = sim.read_probe(Metric::ArrivalRate);
    assert!((rate - 10.0).abs() <= 0.5, "rate {rate}");
}

#[test]
fn window_probes_from_accumulators() {
    let mut state = SimState::new(2, 0.8, 0);
    state.clock = 3000.0;
    state.window = WindowStats {
        start: 2800.0,
        completed: 1,
        sum_response_time: 0.359_518_250_500_969_35,
        arrivals: 8593,
    };
    for s in &mut state.servers {
        s.window_busy = 178.522;
    }
    assert_eq!(
        state.read_probe(Metric::BasicRt, 3),
        0.359_518_250_500_969_35
    );
    assert!((state.read_probe(Metric::Utilization, 3) - 0.89261).abs() < 1e-12);
    assert_eq!(state.read_probe(Metric::Dimmer, 3), 0.8);
    assert_eq!(state.read_probe(Metric::ActiveServers, 3), 2.0);
    assert_eq!(state.read_probe(Metric::MaxServers, 3), 3.0);
    assert_eq!(state.read_probe(Metric::Time, 3), 3000.0);
    assert!((state.read_probe(Metric::ArrivalRate, 3) - 42.965).abs() < 1e-9);
}

#[test]
fn unknown_metric_is_rejected() {
    assert_eq!("cpu".parse::<Metric>(), Err(UnknownMetric("cpu".into())));
}

#[test]
fn identical_seeds_give_identical_logs() {
    let run = |seed| {
        let mut sim = sim_with(30.0, 2, 0.7, seed).with_log_level(LogLevel::Requests);
        sim.step_until(100.0);
        sim.add_server().unwrap();
        sim.set_dimmer(0.3).unwrap();
        sim.step_until(300.0);
        serde_json::to_string(sim.event_log()).unwrap()
    };
    assert_eq!(run(42), run(42));
    assert_ne!(run(42), run(43));
}

#[test]
fn effector_errors() {
    let mut sim = sim_with(0.0, 3, 0.5, 0);
    assert_eq!(sim.add_server(), Err(EffectorError::PoolFull));
    assert_eq!(sim.set_dimmer(1.2), Err(EffectorError::BadDimmer));
    assert_eq!(sim.set_dimmer(-0.1), Err(EffectorError::BadDimmer));

    let mut one = sim_with(0.0, 1, 0.5, 0);
    assert_eq!(one.remove_server(), Err(EffectorError::LastServer));
    assert_eq!(one.state().active_count(), 1);
}

#[test]
fn set_dimmer_changes_only_dimmer() {
    let mut sim = sim_with(20.0, 2, 0.5, 4);
    sim.step_until(50.0);
    let before = sim.state().clone();
    sim.set_dimmer(0.9).unwrap();
    let after = sim.state();
    assert_eq!(after.dimmer, 0.9);
    assert_eq!(after.servers, before.servers);
    assert_eq!(after.queue, before.queue);
    assert_eq!(after.window, before.window);
    assert_eq!(after.clock, before.clock);
}

#[test]
fn booting_server_becomes_active_after_delay() {
    let mut sim = sim_with(5.0, 1, 0.5, 8);
    sim.step_until(10.0);
    sim.add_server().unwrap();
    assert_eq!(sim.read_probe(Metric::ActiveServers), 2.0);
    assert_eq!(sim.state().active_count(), 1);
    sim.step_until(129.9);
    assert_eq!(sim.state().active_count(), 1);
    sim.step_until(130.0);
    assert_eq!(sim.state().active_count(), 2);
    // pool is full only counting active + booting
    let mut full = sim_with(0.0, 2, 0.5, 0);
    full.add_server().unwrap();
    assert_eq!(full.add_server(), Err(EffectorError::PoolFull));
}

#[test]
fn remove_cancels_boot_before_draining() {
    let mut sim = sim_with(0.0, 1, 0.5, 0);
    sim.add_server().unwrap();
    sim.remove_server().unwrap();
    assert_eq!(sim.state().servers.len(), 1);
    assert_eq!(sim.state().active_count(), 1);
    sim.step_until(500.0);
    assert_eq!(sim.state().servers.len(), 1);
}

#[test]
fn draining_server_gets_no_new_work() {
    // heavy load so every server is busy when we remove one
    let mut sim = sim_with(200.0, 3, 1.0, 13).with_log_level(LogLevel::Requests);
    sim.step_until(5.0);
    assert!(sim.state().servers.iter().all(|s| !s.is_idle()));
    sim.remove_server().unwrap();
    let draining = sim
        .state()
        .servers
        .iter()
        .find(|s| s.state == ServerState::Draining)
        .map(|s| (s.id, s.in_service.unwrap().0.id))
        .expect("one draining server");
    assert_eq!(sim.read_probe(Metric::ActiveServers), 2.0);
    sim.step_until(20.0);
    // the draining server completed exactly its in-flight request and left
    let served: Vec<u64> = sim
        .event_log()
        .iter()
        .filter_map(|e| match e {
            SimEvent::Completion {
                server, request, t, ..
            } if *server == draining.0 && *t > 5.0 => Some(*request),
            _ => None,
        })
        .collect();
    assert_eq!(served, vec![draining.1]);
    assert!(sim.state().servers.iter().all(|s| s.id != draining.0));
    assert!(sim
        .event_log()
        .iter()
        .any(|e| matches!(e, SimEvent::ServerRetired { server, .. } if *server == draining.0)));
}

#[test]
fn invariants_hold_through_a_trace_with_adaptations() {
    let trace = ArrivalTrace::new(
        "steps",
        vec![
            Segment {
                start: 0.0,
                rate: 20.0,
            },
            Segment {
                start: 100.0,
                rate: 90.0,
            },
            Segment {
                start: 200.0,
                rate: 5.0,
            },
            Segment {
                start: 300.0,
                rate: 0.0,
            },
        ],
    )
    .unwrap();
    let cfg = SystemConfig::default();
    let mut sim = Simulator::from_config(&cfg, trace, 99);
    let actions = [
        Action::RemoveServer,
        Action::AddServer,
        Action::SetDimmer(0.2),
        Action::RemoveServer,
        Action::RemoveServer,
        Action::AddServer,
    ];
    let mut t = 0.0;
    let mut last_clock = 0.0;
    for (i, a) in actions.iter().cycle().take(60).enumerate() {
        t += 7.5;
        sim.step_until(t);
        assert!(sim.state().clock >= last_clock);
        last_clock = sim.state().clock;
        let _ = sim.apply_effector(a);
        sim.check_invariants()
            .unwrap_or_else(|e| panic!("step {i}: {e}"));
    }
    sim.step_until(2000.0);
    sim.check_invariants().unwrap();
    assert_eq!(sim.state().in_system(), 0);
    assert_eq!(sim.state().totals.arrivals, sim.state().totals.completions);
}

#[test]
fn response_time_at_least_service_time() {
    let mut sim = sim_with(25.0, 2, 0.6, 17).with_log_level(LogLevel::Requests);
    sim.step_until(300.0);
    let completions: Vec<f64> = sim
        .event_log()
        .iter()
        .filter_map(|e| match e {
            SimEvent::Completion { response_time, .. } => Some(*response_time),
            _ => None,
        })
        .collect();
    assert!(completions.len() > 5000);
    assert!(completions.iter().all(|&rt| rt > 0.0));
}

#[test]
fn utilization_is_clamped_fraction() {
    let mut sim = sim_with(400.0, 2, 1.0, 2);
    sim.step_until(30.0);
    let u = sim.read_probe(Metric::Utilization);
    assert!((0.99..=1.0).contains(&u), "saturated utilization {u}");
    sim.reset_window();
    assert_eq!(sim.read_probe(Metric::Utilization), 0.0);
    assert_eq!(sim.read_probe(Metric::BasicRt), 0.0);
}
