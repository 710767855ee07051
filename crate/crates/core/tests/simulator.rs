use critmac::protocol::{Action, EnhancementConfig, Observation, ProtocolParams, TrafficType};
use critmac::sim::{
    estimate_metrics_oracle, round_stats, run_experiment, run_round, simulate_two_critical,
    simulate_two_critical_run, CriticalTrafficModel, Phase, Scenario, SimConfig, SlotTrace,
};
use critmac::Error;

fn params(n: usize, theta: f64, q: f64, r: f64) -> ProtocolParams {
    ProtocolParams::new(n, theta, q, r).unwrap()
}

fn table_config() -> SimConfig {
    SimConfig::new(params(10, 0.1, 0.1051, 0.4786)).with_seed(11)
}

fn traces(cfg: &SimConfig, rounds: u64) -> Vec<SlotTrace> {
    (0..rounds).map(|r| run_round(cfg, r).unwrap().0).collect()
}

fn critical_user(trace: &SlotTrace) -> usize {
    let first = trace
        .slots
        .iter()
        .find(|s| s.phase == Phase::Critical)
        .unwrap();
    first
        .users
        .iter()
        .position(|u| u.traffic == TrafficType::Critical)
        .unwrap()
}

#[test]
fn single_user_never_collides() {
    let cfg = SimConfig::new(params(1, 0.3, 0.4, 0.6))
        .with_seed(5)
        .with_rounds(50);
    for trace in traces(&cfg, 50) {
        for (k, slot) in trace.slots.iter().enumerate() {
            let o = slot.users[0].observation;
            assert!(
                o == Observation::Idle || o == Observation::Success,
                "slot {k}: {o:?}"
            );
        }
    }
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.max_d_crit, 0);
    // alone, the user holds the channel for 1/θ slots and waits 1/q
    assert!((report.t_s.mean - 1.0 / 0.3).abs() < 4.0 * report.t_s.se);
    assert!((report.t_c.mean - 1.0 / 0.4).abs() < 4.0 * report.t_c.se);
}

#[test]
fn fixed_seed_is_reproducible() {
    let cfg = table_config().with_enhancement(EnhancementConfig::enhanced(5));
    for round in [0, 1, 17] {
        assert_eq!(
            run_round(&cfg, round).unwrap(),
            run_round(&cfg, round).unwrap()
        );
    }
    let a = run_experiment(&cfg).unwrap();
    let one_thread = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let b = one_thread.install(|| run_experiment(&cfg).unwrap());
    let four_threads = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    let c = four_threads.install(|| run_experiment(&cfg).unwrap());
    assert_eq!(a, b);
    assert_eq!(a, c);
    // rounds replayed one at a time match the batch
    let stats = round_stats(&cfg).unwrap();
    assert_eq!(run_round(&cfg, 42).unwrap().1, stats[42]);
    assert_ne!(
        run_round(&cfg.with_seed(12), 0).unwrap(),
        run_round(&cfg, 0).unwrap()
    );
}

#[test]
fn traces_obey_feedback_rules() {
    let base = table_config();
    let configs = [
        base,
        base.with_enhancement(EnhancementConfig::enhanced(3)),
        base.with_enhancement(EnhancementConfig::enhanced(5))
            .with_scenario(Scenario::TwoCriticalSimultaneous),
        base.with_enhancement(EnhancementConfig::enhanced(5))
            .with_scenario(Scenario::TwoCriticalDuringSuccess),
        base.with_enhancement(EnhancementConfig::enhanced(5))
            .with_scenario(Scenario::TwoCriticalDuringCollision),
    ];
    for cfg in &configs {
        for trace in traces(cfg, 40) {
            assert_eq!(
                trace.first_inconsistency(),
                None,
                "{:?} round {}",
                cfg.scenario,
                trace.round
            );
        }
    }
}

#[test]
fn enhanced_delay_never_exceeds_backoff_bound() {
    for b in [2, 3, 5] {
        let cfg = SimConfig::new(params(10, 0.2, 0.3, 0.8))
            .with_enhancement(EnhancementConfig::enhanced(b))
            .with_rounds(3000)
            .with_seed(3);
        let stats = round_stats(&cfg).unwrap();
        assert!(stats.iter().all(|s| s.critical_collisions <= b), "B = {b}");
    }
}

#[test]
fn normal_users_never_exceed_backoff_bound() {
    let cfg = SimConfig::new(params(10, 0.2, 0.4, 0.9))
        .with_enhancement(EnhancementConfig::enhanced(3))
        .with_seed(9);
    for trace in traces(&cfg, 100) {
        for user in 0..10 {
            let mut run = 0;
            for slot in &trace.slots {
                let u = slot.users[user];
                run = if u.observation == Observation::Failure && u.traffic == TrafficType::Normal {
                    run + 1
                } else {
                    0
                };
                assert!(run <= 3, "round {} user {user}", trace.round);
            }
        }
    }
}

#[test]
fn baseline_critical_user_is_not_interrupted() {
    let cfg = table_config();
    for trace in traces(&cfg, 300) {
        let crit = critical_user(&trace);
        let critical = trace.slots.iter().filter(|s| s.phase == Phase::Critical);
        let mut succeeded = false;
        for slot in critical {
            match slot.users[crit].observation {
                Observation::Success => succeeded = true,
                Observation::Failure => assert!(!succeeded, "round {}", trace.round),
                other => panic!("critical user observed {other:?}"),
            }
        }
    }
}

#[test]
fn normal_phase_resumes_with_finishing_user() {
    let theta = 0.3;
    let cfg = SimConfig::new(params(6, theta, 0.2, 0.5)).with_seed(21);
    let rounds = 4000;
    let all = traces(&cfg, rounds);
    let mut transmitted = 0;
    for r in 1..rounds as usize {
        let finished = critical_user(&all[r - 1]);
        let first = &all[r].slots[0];
        for (u, slot) in first.users.iter().enumerate() {
            if u == finished {
                transmitted += usize::from(slot.action == Action::Transmit);
            } else {
                assert_eq!(slot.action, Action::Wait);
            }
        }
    }
    let n = (rounds - 1) as f64;
    let freq = transmitted as f64 / n;
    let sd = (theta * (1.0 - theta) / n).sqrt();
    assert!((freq - (1.0 - theta)).abs() < 4.0 * sd, "{freq}");
}

#[test]
fn contention_periods_start_idle_between_success_runs() {
    let cfg = table_config();
    for trace in traces(&cfg, 200) {
        let normal: Vec<_> = trace
            .slots
            .iter()
            .filter(|s| s.phase == Phase::Normal)
            .collect();
        for w in normal.windows(2) {
            match (w[0].winner(), w[1].winner()) {
                // a success run is only ever continued by the same user
                (Some(a), Some(b)) => assert_eq!(a, b, "round {}", trace.round),
                (Some(_), None) => assert!(w[1].is_idle(), "round {}", trace.round),
                _ => {}
            }
        }
    }
}

#[test]
fn geometric_traffic_has_requested_mean() {
    let cfg = table_config()
        .with_traffic_model(CriticalTrafficModel::Geometric(8.0))
        .with_rounds(4000);
    let stats = round_stats(&cfg).unwrap();
    assert!(stats.iter().all(|s| s.critical_packets >= 1));
    let mean = stats
        .iter()
        .map(|s| f64::from(s.critical_packets))
        .sum::<f64>()
        / stats.len() as f64;
    // sd of the geometric is sqrt(8 * 7) ≈ 7.5, so the standard error is ≈ 0.12
    assert!((mean - 8.0).abs() < 0.5, "{mean}");
}

#[test]
fn stalled_critical_phase_is_reported() {
    let mut cfg = SimConfig::new(params(3, 0.5, 1.0, 1.0)).with_rounds(1);
    cfg.max_critical_slots = 1000;
    match run_round(&cfg, 0) {
        Err(Error::Stalled {
            round: 0,
            slots: 1000,
        }) => {}
        other => panic!("expected a stall, got {other:?}"),
    }
}

#[test]
fn invalid_configurations_are_rejected() {
    let cfg = table_config();
    assert!(run_experiment(&cfg.with_rounds(0)).is_err());
    assert!(run_experiment(&cfg.with_normal_phase_slots(0)).is_err());
    assert!(run_experiment(&cfg.with_traffic_model(CriticalTrafficModel::Fixed(0))).is_err());
    assert!(run_experiment(&cfg.with_traffic_model(CriticalTrafficModel::Geometric(0.5))).is_err());
    assert!(run_experiment(&cfg.with_enhancement(EnhancementConfig::enhanced(1))).is_err());
    let disabled = cfg.with_scenario(Scenario::TwoCriticalSimultaneous);
    assert!(matches!(
        simulate_two_critical(&disabled),
        Err(Error::ScenarioUnsatisfiable(_))
    ));
    let single = cfg.with_enhancement(EnhancementConfig::enhanced(5));
    assert!(matches!(
        simulate_two_critical(&single),
        Err(Error::ScenarioUnsatisfiable(_))
    ));
    let one_packet = single
        .with_scenario(Scenario::TwoCriticalDuringSuccess)
        .with_traffic_model(CriticalTrafficModel::Fixed(1));
    assert!(matches!(
        simulate_two_critical_run(&one_packet, 0),
        Err(Error::ScenarioUnsatisfiable(_))
    ));
}

#[test]
fn two_critical_scenarios_hold_their_properties() {
    let b = 5;
    for scenario in [
        Scenario::TwoCriticalSimultaneous,
        Scenario::TwoCriticalDuringSuccess,
        Scenario::TwoCriticalDuringCollision,
    ] {
        let cfg = table_config()
            .with_enhancement(EnhancementConfig::enhanced(b))
            .with_scenario(scenario)
            .with_rounds(300);
        let report = simulate_two_critical(&cfg).unwrap();
        assert_eq!(report.violations.total(), 0, "{scenario:?}: {report:?}");
        assert!(report.max_inference_latency <= u64::from(b) + 2);
        if scenario == Scenario::TwoCriticalSimultaneous {
            assert_eq!(report.mean_inference_latency, f64::from(b + 1));
        }
    }
}

#[test]
fn simultaneous_run_shares_channel_after_inference() {
    let cfg = table_config()
        .with_enhancement(EnhancementConfig::enhanced(5))
        .with_scenario(Scenario::TwoCriticalSimultaneous)
        .with_traffic_model(CriticalTrafficModel::Fixed(6));
    let run = simulate_two_critical_run(&cfg, 3).unwrap();
    let [i, j] = run.users;
    let start = run.both_critical_at;
    // six collisions, then rule g from a fresh start: one more collision
    for slot in &run.trace.slots[start..start + 7] {
        assert_eq!(slot.users[i].observation, Observation::Failure);
        assert_eq!(slot.users[j].observation, Observation::Failure);
    }
    assert!(run.trace.slots[start + 6].users[i].rule_g);
    assert!(run.checks.all_hold());
}

/// Stationary law of the normal-phase chain when `r = 0`: from idle, `k` of
/// `n` users transmit; a success persists with `1 - θ`; a collision is
/// followed by silence.
fn stationary_without_retransmissions(n: usize, theta: f64, q: f64) -> Vec<f64> {
    let binomial = |k: usize| {
        let choose = (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
        choose * q.powi(k as i32) * (1.0 - q).powi((n - k) as i32)
    };
    let mut w = vec![1.0 / (n + 1) as f64; n + 1];
    for _ in 0..5000 {
        let mut next = vec![0.0; n + 1];
        for (k, slot) in next.iter_mut().enumerate() {
            *slot += w[0] * binomial(k);
        }
        next[0] += w[1] * theta;
        next[1] += w[1] * (1.0 - theta);
        next[0] += w[2..].iter().sum::<f64>();
        w = next;
    }
    w
}

#[test]
fn oracle_matches_closed_form_without_retransmissions() {
    // with r = 0 every colliding normal user backs off for good, so the
    // critical user collides at most once: only when the last normal slot was
    // a success it did not own (then the winner retries with 1 - θ) or idle
    // (then each other user transmits with q)
    let (n, theta, q) = (4, 0.3, 0.25);
    let p = params(n, theta, q, 0.0);
    let w = stationary_without_retransmissions(n, theta, q);
    let nf = n as f64;
    let after_success = (nf - 1.0) / nf * w[1] * (1.0 - theta);
    let after_idle = w[0] * (1.0 - (1.0 - q).powi(n as i32 - 1));
    let closed_form = after_success + after_idle;

    let est = estimate_metrics_oracle(&p, 200_000, 4).unwrap();
    assert!(
        est.d_crit.z_score(closed_form) < 3.0,
        "{:?} vs {closed_form}",
        est.d_crit
    );
    assert!(
        est.c_norm.z_score(w[1]) < 3.0,
        "{:?} vs {}",
        est.c_norm,
        w[1]
    );
    assert!(estimate_metrics_oracle(&p, 10, 4).is_err());
}

#[test]
fn trace_export_format() {
    let cfg = SimConfig::new(params(2, 0.5, 0.5, 0.5)).with_seed(1);
    let (trace, _) = run_round(&cfg, 0).unwrap();
    let mut out = Vec::new();
    trace.write_records(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(SlotTrace::header(2), "round,slot,phase,u0,u1");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), trace.slots.len());
    assert!(lines[0].starts_with("0,0,N,"));
    for (k, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 5);
        assert_eq!(fields[1], k.to_string());
        for code in &fields[3..] {
            let c: Vec<char> = code.chars().collect();
            assert!(
                matches!(c[..], ['T' | 'W', 'I' | 'B' | 'S' | 'F', 'N' | 'C']),
                "{line}"
            );
        }
    }
    assert!(lines.last().unwrap().contains(",C,"));
}
