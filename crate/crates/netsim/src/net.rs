//! Link delay sampling for the three network models.

use dagcore::{Micros, ReplicaId};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::config::{NetModelCfg, SlowLink};

pub struct NetModel {
    cfg: NetModelCfg,
}

fn ms_to_us(ms: f64) -> Micros {
    (ms * 1000.0).round().max(1.0) as Micros
}

fn slow_factor(slow: &[SlowLink], src: ReplicaId, dst: ReplicaId) -> f64 {
    slow.iter()
        .filter(|s| s.replica == src.0 || s.replica == dst.0)
        .map(|s| s.factor)
        .fold(1.0, f64::max)
}

/// Inverse-transform sample of an exponential with the given mean.
fn sample_exp(mean_us: f64, rng: &mut ChaCha12Rng) -> Micros {
    let u: f64 = rng.gen_range(0.0f64..1.0);
    (-mean_us * (1.0 - u).ln()).round().max(1.0) as Micros
}

impl NetModel {
    pub fn new(cfg: NetModelCfg) -> Self {
        Self { cfg }
    }

    /// Delay of one message from `src` to `dst` sent at `send_time`. All
    /// sampled delays are finite: messages eventually arrive.
    pub fn sample_delay(
        &self,
        src: ReplicaId,
        dst: ReplicaId,
        send_time: Micros,
        rng: &mut ChaCha12Rng,
    ) -> Micros {
        if src == dst {
            return 0;
        }
        match &self.cfg {
            NetModelCfg::Sync { delay_ms, slow } => {
                ms_to_us(delay_ms * slow_factor(slow, src, dst))
            }
            NetModelCfg::Psync { gst_ms, delta_ms, pre_gst_mean_ms } => {
                if (send_time as f64) < gst_ms * 1000.0 {
                    sample_exp(pre_gst_mean_ms * 1000.0, rng)
                } else {
                    // Post-GST every message arrives within delta.
                    let u: f64 = rng.gen_range(0.0f64..1.0);
                    ms_to_us(delta_ms * u)
                }
            }
            NetModelCfg::Random { mean_delay_ms, slow } => {
                sample_exp(mean_delay_ms * slow_factor(slow, src, dst) * 1000.0, rng)
            }
        }
    }

    /// The mean delay of a link, for reporting.
    pub fn mean_delay_us(&self, src: ReplicaId, dst: ReplicaId) -> Micros {
        match &self.cfg {
            NetModelCfg::Sync { delay_ms, slow } => ms_to_us(delay_ms * slow_factor(slow, src, dst)),
            NetModelCfg::Psync { delta_ms, .. } => ms_to_us(delta_ms / 2.0),
            NetModelCfg::Random { mean_delay_ms, slow } => {
                ms_to_us(mean_delay_ms * slow_factor(slow, src, dst))
            }
        }
    }
}
