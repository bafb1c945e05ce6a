//! Seeded scenario sweeps: broad coverage of committee sizes, slot counts,
//! network models, readiness rules, and fault plans.
//!
//! The mix is deliberately weighted toward regimes where replica views
//! genuinely diverge (asynchrony, tight quorums, crashes): on lockstep
//! synchronous runs every replica sees identical state, so a broken decision
//! rule breaks identically everywhere and no cross-replica oracle can tell.
//! Divergent regimes are where the safety argument earns its keep, and where
//! the negative builds must get caught.

use netsim::{FaultEvent, NetModelCfg, SimConfig, SimTrace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

/// The `index`-th sweep scenario for a master seed. Deterministic.
///
/// Stratification: every committee size in {3,5,7}, every slot count in
/// {1,2,n} and all three network models appear, but mass sits on small
/// committees under asynchrony. Large committees reference majorities so
/// densely that a weakened rule almost never produces an observably
/// different decision; small-n async runs are where safety is actually at
/// stake, and where the negative builds must light up.
pub fn sweep_scenario(master_seed: u64, index: u64) -> SimConfig {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed ^ index.wrapping_mul(0x2545F4914F6CDD1D));
    let k_cycle = |n: usize| [1u16, 2, n as u16][((index / 7) % 3) as usize];

    // (n, leaders, model family) by stratum.
    let stratum = index % 84;
    let (n, leaders_per_round, family) = match stratum {
        0 if (index / 84) % 2 == 0 => {
            ([3usize, 5, 7][((index / 168) % 3) as usize], 2u16, Family::Sync)
        }
        1..=2 => (7, 7, Family::Random),
        3..=20 => (5, k_cycle(5), Family::Random),
        s if s % 3 == 0 => (3, k_cycle(3), Family::Psync),
        _ => (3, k_cycle(3), Family::Random),
    };
    let f = (n - 1) / 2;
    let leaders_per_round = leaders_per_round.min(n as u16);

    let mean_ms = rng.gen_range(25.0..55.0);
    let horizon_ms = if n == 7 { rng.gen_range(5000..6000) } else { rng.gen_range(4000..5000) };
    let timeout_ms = rng.gen_range(250..400);
    let net = match family {
        Family::Sync => NetModelCfg::Sync { delay_ms: mean_ms, slow: vec![] },
        Family::Psync => NetModelCfg::Psync {
            gst_ms: horizon_ms as f64 * rng.gen_range(0.5..0.75),
            delta_ms: mean_ms * 1.5,
            pre_gst_mean_ms: mean_ms * rng.gen_range(2.0..4.0),
        },
        Family::Random => NetModelCfg::Random { mean_delay_ms: mean_ms, slow: vec![] },
    };
    let is_sync = matches!(net, NetModelCfg::Sync { .. });

    // Crash up to f replicas; each may come back. Crashes land late: a
    // crashed minority leaves the survivors referencing each other
    // completely, a regime that can no longer distinguish sound rules from
    // broken ones. Total crashed <= f keeps the plan valid regardless of
    // recovery timing.
    let mut crashes = Vec::new();
    let mut recoveries = Vec::new();
    if rng.gen_bool(0.35) {
        let count = rng.gen_range(1..=f);
        let mut victims: Vec<u16> = (0..n as u16).collect();
        for _ in 0..count {
            let v = victims.swap_remove(rng.gen_range(0..victims.len()));
            let at_ms = rng.gen_range(horizon_ms * 55 / 100..horizon_ms * 4 / 5);
            crashes.push(FaultEvent { replica: v, at_ms });
            if rng.gen_bool(0.5) {
                recoveries.push(FaultEvent {
                    replica: v,
                    at_ms: rng.gen_range(at_ms + 200..horizon_ms * 9 / 10),
                });
            }
        }
    }

    SimConfig {
        n,
        leaders_per_round,
        seed: rng.gen(),
        horizon_ms,
        timeout_ms,
        batch_cap: 256,
        queue_cap: 1_000_000,
        tx_rate: rng.gen_range(50.0..150.0),
        tx_size: 18,
        workload_stop_ms: None,
        // Tight first-arrival quorums produce sparse reference patterns and
        // the marginal support counts the decision rules must get right. The
        // designated-random-quorum and skeleton-wait variants densify
        // references (late blocks still get referenced), so a handful of
        // runs cover them and the rest stay in the sparse regime.
        random_quorum: !is_sync && index % 252 == 13,
        require_skeletons: is_sync || index % 252 == 29,
        net,
        faults: netsim::FaultPlan { crashes, recoveries },
        break_support_quorum: false,
        break_anchor_bound: false,
    }
}

enum Family {
    Sync,
    Psync,
    Random,
}

pub fn sweep_scenarios(master_seed: u64, count: u64) -> Vec<SimConfig> {
    (0..count).map(|i| sweep_scenario(master_seed, i)).collect()
}

/// Run many scenarios in parallel (each run itself stays single-threaded
/// and deterministic). Results come back in input order.
pub fn run_all(scenarios: &[SimConfig]) -> Vec<SimTrace> {
    scenarios.par_iter().map(netsim::run).collect()
}
