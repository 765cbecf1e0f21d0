use serde::{Deserialize, Serialize};

/// Linear warm-up to `base_lr`, then cosine decay to `floor_lr`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub floor_lr: f64,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            base_lr: lr,
            warmup_steps: 0,
            total_steps: 0,
            floor_lr: lr,
        }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            // step 0 already takes a non-zero step
            return self.base_lr * step.max(1) as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps);
        if span == 0 {
            return self.base_lr;
        }
        let t = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        let lr = self.floor_lr
            + (self.base_lr - self.floor_lr) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
        lr.max(0.0)
    }
}
