//! Learning-rate schedule: linear warmup, cosine decay, constant floor.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Steps of linear warmup from 0 to `peak`.
    pub warmup_steps: u64,
    /// Learning rate reached at the end of warmup.
    pub peak: f64,
    /// Length of the cosine decay that follows warmup.
    pub decay_steps: u64,
    /// Rate held after decay completes.
    pub floor: f64,
}

impl Default for ScheduleConfig {
    fn default() -> ScheduleConfig {
        ScheduleConfig { warmup_steps: 200, peak: 1e-4, decay_steps: 150_000, floor: 5e-6 }
    }
}

/// Learning rate at `step` (1-based: the first optimizer step is step 1).
pub fn lr_schedule(step: u64, cfg: &ScheduleConfig) -> f64 {
    assert!(cfg.warmup_steps > 0, "lr_schedule: warmup_steps must be positive");
    assert!(cfg.decay_steps > 0, "lr_schedule: decay_steps must be positive");
    if step <= cfg.warmup_steps {
        return cfg.peak * step as f64 / cfg.warmup_steps as f64;
    }
    let after = step - cfg.warmup_steps;
    if after >= cfg.decay_steps {
        return cfg.floor;
    }
    let progress = after as f64 / cfg.decay_steps as f64;
    cfg.floor + (cfg.peak - cfg.floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}
