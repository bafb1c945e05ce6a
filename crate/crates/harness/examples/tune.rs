//! Scratch calibration runs. Not part of the test suite.

use harness::{check_safety, sweep_scenarios, Metrics};
use netsim::{NetModelCfg, SimConfig, SlowLink};
use rayon::prelude::*;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "sweep".into());
    match which.as_str() {
        "sweep" => sweep_stats(),
        "direct" => direct_fraction(),
        "thruput" => throughput_compare(),
        "anatomy" => anatomy(),
        "matrix" => bite_matrix(),
        _ => eprintln!("unknown: {which}"),
    }
}

// Parameter study: where do broken-rule "bites" (audit failures plus
// cross-replica divergences) concentrate?
fn bite_matrix() {
    println!("n k net      mean timeo rs   | slots  q_bites a_bites (10 seeds each)");
    let mut grid = Vec::new();
    for n in [3usize, 5, 7] {
        for k in [1u16, 2, n as u16] {
            for (net_name, mean) in [("random", 40.0), ("psync", 40.0)] {
                grid.push((n, k, net_name, mean));
            }
        }
    }
    for (n, k, net_name, mean) in grid {
        let mut slots = 0u64;
        let mut q_bites = 0u64;
        let mut a_bites = 0u64;
        let mut q_runs = 0u64;
        let mut a_runs = 0u64;
        let seeds: Vec<u64> = (0..10).collect();
        let results: Vec<(u64, u64, u64, bool, bool)> = seeds
            .par_iter()
            .map(|seed| {
                let horizon_ms = 4000;
                let net = if net_name == "random" {
                    NetModelCfg::Random { mean_delay_ms: mean, slow: vec![] }
                } else {
                    NetModelCfg::Psync {
                        gst_ms: 2500.0,
                        delta_ms: mean * 1.5,
                        pre_gst_mean_ms: mean * 6.0,
                    }
                };
                let cfg = SimConfig {
                    n,
                    leaders_per_round: k,
                    seed: 777 + seed,
                    horizon_ms,
                    timeout_ms: 300,
                    batch_cap: 256,
                    queue_cap: 1_000_000,
                    tx_rate: 50.0,
                    tx_size: 18,
                    workload_stop_ms: None,
                    random_quorum: false,
                    require_skeletons: false,
                    net,
                    faults: Default::default(),
                    break_support_quorum: false,
                    break_anchor_bound: false,
                };
                let bites = |c: &SimConfig| -> u64 {
                    let t = netsim::run(c);
                    let audit: u64 =
                        t.replicas.iter().map(|r| r.decision_audit_failures.len() as u64).sum();
                    let cross = check_safety(&t)
                        .violations
                        .iter()
                        .filter(|v| v.property != "decision-monotonicity")
                        .count() as u64;
                    audit + cross
                };
                let mut bq = cfg.clone();
                bq.break_support_quorum = true;
                let qb = bites(&bq);
                let mut ba = cfg.clone();
                ba.break_anchor_bound = true;
                let ab = bites(&ba);
                let t = netsim::run(&cfg);
                let s: u64 = t.replicas.iter().map(|r| r.decided.len() as u64).sum();
                (s, qb, ab, qb > 0, ab > 0)
            })
            .collect();
        for (s, qb, ab, qr, ar) in results {
            slots += s;
            q_bites += qb;
            a_bites += ab;
            q_runs += qr as u64;
            a_runs += ar as u64;
        }
        println!(
            "{n} {k} {net_name:7} {mean:4.0} 300  f    | {slots:6} {q_bites:5}({q_runs:2}/10) {a_bites:5}({a_runs:2}/10)"
        );
    }
}

// Dissect runs under the broken-quorum rule: how often do the ingredients of
// a divergence (skips, near-miss vote counts) actually appear?
fn anatomy() {
    let scenarios = sweep_scenarios(0xACCE55, 40);
    for (i, cfg) in scenarios.iter().enumerate() {
        let mut broken = cfg.clone();
        broken.break_support_quorum = true;
        let trace = netsim::run(&broken);
        let caught = !check_safety(&trace).passed();
        let decided: usize = trace.replicas.iter().map(|r| r.decided.len()).sum();
        let skips: usize = trace
            .replicas
            .iter()
            .map(|r| r.decided.iter().filter(|d| !d.is_commit()).count())
            .sum();
        let indirect: usize = trace
            .replicas
            .iter()
            .map(|r| r.decided.iter().filter(|d| d.path == "indirect").count())
            .sum();
        println!(
            "idx={i} caught={caught} n={} k={} net={} rq={} rs={} decided={decided} skips={skips} indirect={indirect}",
            cfg.n,
            cfg.leaders_per_round,
            match &cfg.net {
                NetModelCfg::Sync { .. } => "sync",
                NetModelCfg::Psync { .. } => "psync",
                NetModelCfg::Random { .. } => "random",
            },
            cfg.random_quorum,
            cfg.require_skeletons,
        );
    }
}

fn sweep_stats() {
    let count = 1008;
    let scenarios = sweep_scenarios(0xACCE55, count);
    let t0 = std::time::Instant::now();
    let results: Vec<(bool, bool, bool)> = scenarios
        .par_iter()
        .map(|cfg| {
            let pos = check_safety(&netsim::run(cfg)).passed();
            let mut broken_q = cfg.clone();
            broken_q.break_support_quorum = true;
            let neg_q = !check_safety(&netsim::run(&broken_q)).passed();
            let mut broken_a = cfg.clone();
            broken_a.break_anchor_bound = true;
            let neg_a = !check_safety(&netsim::run(&broken_a)).passed();
            (pos, neg_q, neg_a)
        })
        .collect();
    let pos = results.iter().filter(|r| r.0).count();
    let negq = results.iter().filter(|r| r.1).count();
    let nega = results.iter().filter(|r| r.2).count();
    println!(
        "scenarios={count} positives_pass={pos} broken_quorum_caught={negq} broken_anchor_caught={nega} elapsed={:?}",
        t0.elapsed()
    );
    // show which scenarios escaped
    for (i, r) in results.iter().enumerate() {
        if !r.1 || !r.2 {
            let c = &scenarios[i];
            println!(
                "  escaped idx={i} q={} a={} n={} k={} net={:?} rq={} rs={} crashes={}",
                r.1, r.2, c.n, c.leaders_per_round,
                match &c.net { NetModelCfg::Sync{..} => "sync", NetModelCfg::Psync{..} => "psync", NetModelCfg::Random{..} => "random" },
                c.random_quorum, c.require_skeletons, c.faults.crashes.len()
            );
        }
    }
}

fn direct_fraction() {
    for n in [3usize, 5] {
        let mut total_direct = 0u64;
        let mut total_decided = 0u64;
        for seed in 0..4u64 {
            let cfg = SimConfig {
                n,
                leaders_per_round: n as u16,
                seed: 1000 + seed,
                horizon_ms: 8000,
                timeout_ms: 1000,
                batch_cap: 256,
                queue_cap: 1_000_000,
                tx_rate: 100.0,
                tx_size: 18,
                workload_stop_ms: None,
                random_quorum: true,
                require_skeletons: false,
                net: NetModelCfg::Random { mean_delay_ms: 50.0, slow: vec![] },
                faults: Default::default(),
                break_support_quorum: false,
                break_anchor_bound: false,
            };
            let trace = netsim::run(&cfg);
            let m = Metrics::from_trace(&trace);
            total_direct += m.direct_decisions;
            total_decided += m.direct_decisions + m.indirect_decisions;
        }
        println!(
            "n={n}: direct {total_direct}/{total_decided} = {:.3}",
            total_direct as f64 / total_decided as f64
        );
    }
}

fn throughput_compare() {
    let mk = |net: NetModelCfg, leaders: u16| SimConfig {
        n: 5,
        leaders_per_round: leaders,
        seed: 42,
        horizon_ms: 10_000,
        timeout_ms: 400,
        batch_cap: 256,
        queue_cap: 1_000_000,
        tx_rate: 500.0,
        tx_size: 18,
        workload_stop_ms: None,
        random_quorum: false,
        require_skeletons: true,
        net,
        faults: Default::default(),
        break_support_quorum: false,
        break_anchor_bound: false,
    };
    let sync = netsim::run(&mk(NetModelCfg::Sync { delay_ms: 50.0, slow: vec![] }, 2));
    let rand = netsim::run(&mk(NetModelCfg::Random { mean_delay_ms: 50.0, slow: vec![] }, 2));
    let degraded = netsim::run(&mk(
        NetModelCfg::Sync {
            delay_ms: 50.0,
            slow: vec![SlowLink { replica: 0, factor: 40.0 }],
        },
        1,
    ));
    let t = |tr: &netsim::SimTrace| tr.mean_alive_throughput();
    println!(
        "sync={:.1} random={:.1} ratio={:.3} | degraded={:.1} degradation={:.3}",
        t(&sync),
        t(&rand),
        t(&rand) / t(&sync),
        t(&degraded),
        1.0 - t(&degraded) / t(&sync),
    );
    let ms = Metrics::from_trace(&sync);
    let mr = Metrics::from_trace(&rand);
    let md = Metrics::from_trace(&degraded);
    println!("sync lat={:?}", ms.latency);
    println!("rand lat={:?}", mr.latency);
    println!("degr lat={:?} timeouts={}", md.latency, md.timeout_fires_total);
}
